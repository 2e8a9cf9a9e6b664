#pragma once

#include <cstdint>
#include <string>

#include "stylefuse/generator.hpp"
#include "stylefuse/geometry.hpp"

namespace sf {

/// Placement of a synthetic face.
struct FaceLayout {
    Point center;               // midpoint of eye midpoint and mouth centre
    double eye_distance = 16.0;
    double eye_to_mouth = 14.0;
    double angle = 0.0;         // radians, rotation about `center`
};

/// 68 points in the standard annotation order. The eye and mouth contours
/// are symmetric, so their centroids sit at the layout's anchor positions.
LandmarkSet synthetic_landmarks(const FaceLayout& layout, std::size_t width, std::size_t height);

/// Smooth procedural drawing of a face at the given landmarks on a constant
/// background; the rendering rotates with the landmarks.
Tensor render_face(const LandmarkSet& lm, std::size_t width, std::size_t height);

/// Identity/expression pair rendered from known styles. Each generator image
/// is pasted into a larger canvas whose landmarks rectify onto exactly the
/// pasted square.
struct FixturePair {
    StyleVector identity_style;
    StyleVector expression_style;
    Tensor identity_image;
    Tensor expression_image;
    LandmarkSet identity_landmarks;
    LandmarkSet expression_landmarks;
};

/// Landmarks whose default-crop rectification maps onto the generator-sized
/// square at offset R/4 of an R + R/2 canvas.
LandmarkSet fixture_landmarks(std::size_t resolution);

FixturePair make_fixture(const Generator& gen, std::uint64_t identity_seed = 1, std::uint64_t expression_seed = 2);

/// Writes identity.png, identity.json, identity_style.ntws and the matching
/// expression.* files into `dir`, creating it when needed.
void write_fixture(const std::string& dir, const FixturePair& pair);

}  // namespace sf
