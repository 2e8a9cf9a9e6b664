#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stylefuse/tensor.hpp"

namespace sf {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
    friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
    friend Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }
    friend bool operator==(Point, Point) = default;
};

double norm(Point p);
/// z-component of (b - a) x (c - a).
double cross(Point a, Point b, Point c);

/// 68 facial keypoints in the standard annotation order, in pixel units with
/// the origin at the top-left pixel centre.
struct LandmarkSet {
    static constexpr std::size_t kCount = 68;

    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<Point> points;

    /// Throws ContractError unless there are exactly 68 points.
    void validate() const;

    Point left_eye_center() const;   // mean of points 36-41
    Point right_eye_center() const;  // mean of points 42-47
    Point mouth_center() const;      // mean of points 48-67
};

/// {"width": W, "height": H, "points": [[x, y], ...]}
std::string landmarks_to_json(const LandmarkSet& lm);
LandmarkSet landmarks_from_json(const std::string& text, const std::string& origin = "<memory>");
void save_landmarks(const std::string& path, const LandmarkSet& lm);
LandmarkSet load_landmarks(const std::string& path);

/// [a b tx; c d ty]: p' = (a x + b y + tx, c x + d y + ty).
struct AffineTransform {
    double a = 1.0, b = 0.0, tx = 0.0;
    double c = 0.0, d = 1.0, ty = 0.0;

    static AffineTransform identity() { return {}; }
    static AffineTransform translation(double dx, double dy) { return {1, 0, dx, 0, 1, dy}; }
    /// Counter-clockwise rotation by `radians` (in x-right, y-down pixel axes
    /// this turns +x towards +y) about `center`.
    static AffineTransform rotation(double radians, Point center);

    Point apply(Point p) const { return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty}; }
    double determinant() const { return a * d - b * c; }
    /// Throws GeometryError for singular transforms.
    AffineTransform inverse() const;
    /// First *this, then `next`.
    AffineTransform then(const AffineTransform& next) const;

    friend bool operator==(const AffineTransform&, const AffineTransform&) = default;
};

std::vector<Point> transform_points(const AffineTransform& t, std::span<const Point> pts);
LandmarkSet transform_landmarks(const AffineTransform& t, const LandmarkSet& lm, std::size_t width, std::size_t height);

/// Exact affine map sending src[i] to dst[i]; throws GeometryError when the
/// source points are collinear.
AffineTransform estimate_affine(const std::array<Point, 3>& src, const std::array<Point, 3>& dst);

/// Left-eye, right-eye and mouth centroids.
std::array<Point, 3> anchor_points(const LandmarkSet& lm);

/// Resamples `image` [C,H,W] into an out_height x out_width canvas where
/// output pixel p takes the bilinear sample of the source at t^-1(p).
/// Samples outside the source are edge-clamped.
Tensor warp_affine(const Tensor& image, const AffineTransform& t, std::size_t out_width, std::size_t out_height);

struct CropConfig {
    double eye_to_eye_scale = 4.0;
    double eye_to_mouth_scale = 3.6;
    std::size_t output_resolution = 64;

    void validate() const;
};

struct Rectified {
    Tensor image;
    /// Original pixel coordinates -> normalised crop coordinates.
    AffineTransform transform;
    /// Crop side length in original pixels.
    double side = 0.0;
};

/// Rotates the eye axis to horizontal and crops a square of side
/// max(e2e_scale * |eyeR - eyeL|, e2m_scale * |mouth - eyeMid|) centred at the
/// midpoint of eyeMid and the mouth centre, resampled to output_resolution.
Rectified rectify(const Tensor& image, const LandmarkSet& lm, const CropConfig& cfg);
/// The transform rectify() would use, without resampling.
AffineTransform rectify_transform(const LandmarkSet& lm, const CropConfig& cfg, double* side = nullptr);

/// H x W weights in [0,1].
class Mask {
public:
    Mask() = default;
    Mask(std::size_t height, std::size_t width, double fill = 0.0) : values_({height, width}, fill) {}
    explicit Mask(Tensor values);

    std::size_t height() const { return values_.dim(0); }
    std::size_t width() const { return values_.dim(1); }
    double operator()(std::size_t y, std::size_t x) const { return values_[y * width() + x]; }
    double& operator()(std::size_t y, std::size_t x) { return values_[y * width() + x]; }
    const Tensor& tensor() const noexcept { return values_; }

    friend bool operator==(const Mask&, const Mask&) = default;

private:
    Tensor values_;
};

/// Andrew's monotone chain; collinear boundary points are dropped. Returns
/// vertices with positive orientation under cross().
std::vector<Point> convex_hull(std::span<const Point> pts);

/// 1 at pixel centres inside or on the convex hull of `pts`, 0 elsewhere.
/// Throws GeometryError when all points are collinear.
Mask hull_mask(std::span<const Point> pts, std::size_t width, std::size_t height);

/// Separable Gaussian blur, radius ceil(3 sigma), edge-clamped, result
/// clamped to [0,1]. sigma = 0 returns the mask unchanged.
Mask feather(const Mask& mask, double sigma);

/// Elementwise minimum.
Mask intersect(const Mask& a, const Mask& b);

/// mask * warped + (1 - mask) * target per pixel and channel.
Tensor blend(const Tensor& target, const Tensor& warped, const Mask& mask);

}  // namespace sf
