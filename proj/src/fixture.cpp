#include "stylefuse/fixture.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>

#include "stylefuse/image_io.hpp"
#include "stylefuse/pipeline.hpp"

namespace sf {

LandmarkSet synthetic_landmarks(const FaceLayout& f, std::size_t width, std::size_t height) {
    const double s = f.eye_distance, m = f.eye_to_mouth;
    const double cx = f.center.x;
    const double eye_y = f.center.y - m / 2.0, mouth_y = f.center.y + m / 2.0;
    const double pi = std::numbers::pi;
    std::vector<Point> p;
    p.reserve(LandmarkSet::kCount);
    // jaw 0-16
    const double jaw_y = f.center.y - 0.2 * s;
    for (int i = 0; i <= 16; ++i) {
        const double a = pi * i / 16.0;
        p.push_back({cx - 1.15 * s * std::cos(a), jaw_y + 1.35 * s * std::sin(a)});
    }
    // brows 17-26
    for (int side = -1; side <= 1; side += 2) {
        for (int i = 0; i < 5; ++i) {
            const double t = side < 0 ? i : 4 - i;
            const double x = cx + side * (0.15 * s + 0.16 * s * t);
            p.push_back({x, eye_y - 0.45 * s - 0.04 * s * std::sin(pi * t / 4.0)});
        }
    }
    // nose 27-35
    for (int i = 0; i < 4; ++i) p.push_back({cx, eye_y + 0.15 * m + 0.15 * m * i});
    for (int i = -2; i <= 2; ++i) p.push_back({cx + 0.12 * s * i, eye_y + 0.7 * m - 0.03 * m * (2 - std::abs(i))});
    // eyes 36-47, hexagons about each eye centre
    for (double ex : {cx - s / 2.0, cx + s / 2.0}) {
        for (int k = 0; k < 6; ++k) {
            const double a = pi + pi * k / 3.0;
            p.push_back({ex + 0.22 * s * std::cos(a), eye_y + 0.1 * s * std::sin(a)});
        }
    }
    // mouth outer 48-59, inner 60-67
    for (int k = 0; k < 12; ++k) {
        const double a = pi + 2.0 * pi * k / 12.0;
        p.push_back({cx + 0.45 * s * std::cos(a), mouth_y + 0.18 * s * std::sin(a)});
    }
    for (int k = 0; k < 8; ++k) {
        const double a = pi + 2.0 * pi * k / 8.0;
        p.push_back({cx + 0.3 * s * std::cos(a), mouth_y + 0.08 * s * std::sin(a)});
    }
    LandmarkSet lm{width, height, std::move(p)};
    if (f.angle != 0.0) lm.points = transform_points(AffineTransform::rotation(f.angle, f.center), lm.points);
    return lm;
}

Tensor render_face(const LandmarkSet& lm, std::size_t width, std::size_t height) {
    lm.validate();
    const double s = norm(lm.right_eye_center() - lm.left_eye_center());
    struct Blob {
        Point at;
        double sigma;
        std::array<double, 3> color;
    };
    std::vector<Blob> blobs;
    for (std::size_t i = 0; i < 17; ++i) blobs.push_back({lm.points[i], 0.45 * s, {0.35, 0.22, 0.12}});
    for (std::size_t i = 17; i < 27; ++i) blobs.push_back({lm.points[i], 0.08 * s, {-0.25, -0.25, -0.2}});
    for (std::size_t i = 27; i < 36; ++i) blobs.push_back({lm.points[i], 0.1 * s, {0.08, 0.02, 0.0}});
    for (std::size_t i = 36; i < 48; ++i) blobs.push_back({lm.points[i], 0.07 * s, {-0.15, -0.1, 0.05}});
    for (std::size_t i = 48; i < 68; ++i) blobs.push_back({lm.points[i], 0.07 * s, {0.15, -0.12, -0.08}});
    blobs.push_back({0.5 * (lm.left_eye_center() + lm.mouth_center()), 0.9 * s, {0.3, 0.2, 0.15}});
    blobs.push_back({0.5 * (lm.right_eye_center() + lm.mouth_center()), 0.9 * s, {0.3, 0.2, 0.15}});

    Tensor img({3, height, width});
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            std::array<double, 3> acc{0.0, 0.0, 0.0};
            for (const auto& b : blobs) {
                const double dx = static_cast<double>(x) - b.at.x, dy = static_cast<double>(y) - b.at.y;
                const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
                for (int c = 0; c < 3; ++c) acc[c] += w * b.color[c];
            }
            const std::array<double, 3> bg{0.25, 0.3, 0.4};
            for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = 1.0 / (1.0 + std::exp(-4.0 * (bg[c] + acc[c] - 0.5)));
        }
    }
    return img;
}

LandmarkSet fixture_landmarks(std::size_t resolution) {
    const double r = static_cast<double>(resolution);
    const std::size_t canvas = resolution + resolution / 2;
    const double offset = static_cast<double>(resolution / 4);
    FaceLayout layout;
    layout.center = {offset + (r - 1.0) / 2.0, offset + (r - 1.0) / 2.0};
    layout.eye_distance = r / 4.0;
    layout.eye_to_mouth = r * 7.0 / 32.0;
    return synthetic_landmarks(layout, canvas, canvas);
}

namespace {

Tensor paste_on_canvas(const Tensor& face, std::size_t canvas, std::size_t offset, double hue) {
    Tensor img({3, canvas, canvas});
    const double span = static_cast<double>(canvas - 1);
    for (std::size_t y = 0; y < canvas; ++y)
        for (std::size_t x = 0; x < canvas; ++x)
            for (std::size_t c = 0; c < 3; ++c)
                img.at(c, y, x) = 0.2 + 0.3 * (static_cast<double>(y) / span) + hue * static_cast<double>(c) +
                                  0.1 * (static_cast<double>(x) / span);
    const std::size_t r = face.dim(1);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < r; ++y)
            for (std::size_t x = 0; x < r; ++x) img.at(c, y + offset, x + offset) = face.at(c, y, x);
    return quantize(img);
}

}  // namespace

FixturePair make_fixture(const Generator& gen, std::uint64_t identity_seed, std::uint64_t expression_seed) {
    const std::size_t r = gen.resolution();
    const std::size_t canvas = r + r / 2, offset = r / 4;
    FixturePair f;
    f.identity_style = gen.sample_style(identity_seed);
    f.expression_style = gen.sample_style(expression_seed);
    f.identity_image = paste_on_canvas(gen.synthesize(f.identity_style), canvas, offset, 0.05);
    f.expression_image = paste_on_canvas(gen.synthesize(f.expression_style), canvas, offset, 0.1);
    f.identity_landmarks = fixture_landmarks(r);
    f.expression_landmarks = fixture_landmarks(r);
    return f;
}

void write_fixture(const std::string& dir, const FixturePair& pair) {
    std::filesystem::create_directories(dir);
    const std::filesystem::path d(dir);
    save_png((d / "identity.png").string(), pair.identity_image);
    save_png((d / "expression.png").string(), pair.expression_image);
    save_landmarks((d / "identity.json").string(), pair.identity_landmarks);
    save_landmarks((d / "expression.json").string(), pair.expression_landmarks);
    save_style((d / "identity_style.ntws").string(), pair.identity_style);
    save_style((d / "expression_style.ntws").string(), pair.expression_style);
}

}  // namespace sf
