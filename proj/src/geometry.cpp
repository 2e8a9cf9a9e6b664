#include "stylefuse/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stylefuse/errors.hpp"

namespace sf {

double norm(Point p) { return std::hypot(p.x, p.y); }

double cross(Point a, Point b, Point c) { return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x); }

void LandmarkSet::validate() const {
    if (points.size() != kCount) {
        throw ContractError("landmark set has " + std::to_string(points.size()) + " points, expected 68");
    }
    for (const auto& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw ContractError("landmark set has non-finite coordinates");
    }
}

namespace {

Point centroid(const std::vector<Point>& pts, std::size_t begin, std::size_t end) {
    Point sum;
    for (std::size_t i = begin; i < end; ++i) sum = sum + pts[i];
    return (1.0 / static_cast<double>(end - begin)) * sum;
}

}  // namespace

Point LandmarkSet::left_eye_center() const {
    validate();
    return centroid(points, 36, 42);
}

Point LandmarkSet::right_eye_center() const {
    validate();
    return centroid(points, 42, 48);
}

Point LandmarkSet::mouth_center() const {
    validate();
    return centroid(points, 48, 68);
}

std::string landmarks_to_json(const LandmarkSet& lm) {
    nlohmann::json j;
    j["width"] = lm.width;
    j["height"] = lm.height;
    auto pts = nlohmann::json::array();
    for (const auto& p : lm.points) pts.push_back({p.x, p.y});
    j["points"] = pts;
    return j.dump(2) + "\n";
}

LandmarkSet landmarks_from_json(const std::string& text, const std::string& origin) {
    LandmarkSet lm;
    try {
        const auto j = nlohmann::json::parse(text);
        lm.width = j.at("width").get<std::size_t>();
        lm.height = j.at("height").get<std::size_t>();
        for (const auto& p : j.at("points")) {
            if (!p.is_array() || p.size() != 2) throw IoError(origin, "each landmark must be an [x, y] pair");
            lm.points.push_back({p[0].get<double>(), p[1].get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(origin, std::string("malformed landmark JSON: ") + e.what());
    }
    try {
        lm.validate();
    } catch (const ContractError& e) {
        throw IoError(origin, e.what());
    }
    return lm;
}

void save_landmarks(const std::string& path, const LandmarkSet& lm) {
    std::ofstream out(path);
    if (!out) throw IoError(path, "cannot open for writing");
    out << landmarks_to_json(lm);
    if (!out) throw IoError(path, "write failed");
}

LandmarkSet load_landmarks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open for reading");
    std::stringstream ss;
    ss << in.rdbuf();
    return landmarks_from_json(ss.str(), path);
}

AffineTransform AffineTransform::rotation(double radians, Point center) {
    const double cs = std::cos(radians), sn = std::sin(radians);
    AffineTransform t{cs, -sn, 0.0, sn, cs, 0.0};
    const Point moved = t.apply(center);
    t.tx = center.x - moved.x;
    t.ty = center.y - moved.y;
    return t;
}

AffineTransform AffineTransform::inverse() const {
    const double det = determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-300) throw GeometryError("affine transform is singular");
    AffineTransform r;
    r.a = d / det;
    r.b = -b / det;
    r.c = -c / det;
    r.d = a / det;
    r.tx = -(r.a * tx + r.b * ty);
    r.ty = -(r.c * tx + r.d * ty);
    return r;
}

AffineTransform AffineTransform::then(const AffineTransform& n) const {
    return {n.a * a + n.b * c, n.a * b + n.b * d, n.a * tx + n.b * ty + n.tx,
            n.c * a + n.d * c, n.c * b + n.d * d, n.c * tx + n.d * ty + n.ty};
}

std::vector<Point> transform_points(const AffineTransform& t, std::span<const Point> pts) {
    std::vector<Point> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(t.apply(p));
    return out;
}

LandmarkSet transform_landmarks(const AffineTransform& t, const LandmarkSet& lm, std::size_t width,
                                std::size_t height) {
    return {width, height, transform_points(t, lm.points)};
}

AffineTransform estimate_affine(const std::array<Point, 3>& src, const std::array<Point, 3>& dst) {
    const double det = cross(src[0], src[1], src[2]);
    const double scale = std::max({norm(src[1] - src[0]), norm(src[2] - src[0]), norm(src[2] - src[1])});
    if (!(std::abs(det) > 1e-12 * scale * scale)) throw GeometryError("estimate_affine: source points are collinear");
    // Solve [x y 1] * coeffs = target per output coordinate with Cramer's rule.
    auto solve = [&](double t0, double t1, double t2, double& p, double& q, double& r) {
        const Point u = src[1] - src[0], v = src[2] - src[0];
        const double du = t1 - t0, dv = t2 - t0;
        p = (du * v.y - dv * u.y) / det;
        q = (dv * u.x - du * v.x) / det;
        r = t0 - p * src[0].x - q * src[0].y;
    };
    AffineTransform t;
    solve(dst[0].x, dst[1].x, dst[2].x, t.a, t.b, t.tx);
    solve(dst[0].y, dst[1].y, dst[2].y, t.c, t.d, t.ty);
    return t;
}

std::array<Point, 3> anchor_points(const LandmarkSet& lm) {
    return {lm.left_eye_center(), lm.right_eye_center(), lm.mouth_center()};
}

Tensor warp_affine(const Tensor& image, const AffineTransform& t, std::size_t out_width, std::size_t out_height) {
    require_rank(image, 3, "warp_affine");
    const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2);
    const AffineTransform inv = t.inverse();
    Tensor out({ch, out_height, out_width});
    for (std::size_t y = 0; y < out_height; ++y) {
        for (std::size_t x = 0; x < out_width; ++x) {
            const Point s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            const double fx0 = std::floor(s.x), fy0 = std::floor(s.y);
            const double fx = s.x - fx0, fy = s.y - fy0;
            auto clampi = [](double v, std::size_t n) {
                if (v <= 0.0) return std::size_t{0};
                if (v >= static_cast<double>(n - 1)) return n - 1;
                return static_cast<std::size_t>(v);
            };
            const std::size_t x0 = clampi(fx0, w), x1 = clampi(fx0 + 1.0, w);
            const std::size_t y0 = clampi(fy0, h), y1 = clampi(fy0 + 1.0, h);
            for (std::size_t c = 0; c < ch; ++c) {
                const double top = (1.0 - fx) * image.at(c, y0, x0) + fx * image.at(c, y0, x1);
                const double bot = (1.0 - fx) * image.at(c, y1, x0) + fx * image.at(c, y1, x1);
                out[(c * out_height + y) * out_width + x] = (1.0 - fy) * top + fy * bot;
            }
        }
    }
    return out;
}

void CropConfig::validate() const {
    if (!(eye_to_eye_scale > 1.0) || !(eye_to_mouth_scale > 1.0)) throw ContractError("crop scales must exceed 1");
    if (output_resolution == 0) throw ContractError("crop output resolution must be positive");
}

AffineTransform rectify_transform(const LandmarkSet& lm, const CropConfig& cfg, double* side_out) {
    cfg.validate();
    const Point el = lm.left_eye_center(), er = lm.right_eye_center(), mouth = lm.mouth_center();
    const Point axis = er - el;
    const double eye_dist = norm(axis);
    if (!(eye_dist > 1e-9)) throw GeometryError("rectify: eye centres coincide");
    const Point eye_mid = 0.5 * (el + er);
    const double mouth_dist = norm(mouth - eye_mid);
    const double side = std::max(cfg.eye_to_eye_scale * eye_dist, cfg.eye_to_mouth_scale * mouth_dist);
    const Point center = 0.5 * (eye_mid + mouth);
    const double k = static_cast<double>(cfg.output_resolution) / side;
    const double cs = axis.x / eye_dist, sn = axis.y / eye_dist;
    const double half = (static_cast<double>(cfg.output_resolution) - 1.0) / 2.0;
    // p -> k * R(-theta) * (p - center) + half
    AffineTransform t{k * cs, k * sn, 0.0, -k * sn, k * cs, 0.0};
    t.tx = half - (t.a * center.x + t.b * center.y);
    t.ty = half - (t.c * center.x + t.d * center.y);
    if (side_out) *side_out = side;
    return t;
}

Rectified rectify(const Tensor& image, const LandmarkSet& lm, const CropConfig& cfg) {
    Rectified r;
    r.transform = rectify_transform(lm, cfg, &r.side);
    r.image = warp_affine(image, r.transform, cfg.output_resolution, cfg.output_resolution);
    return r;
}

Mask::Mask(Tensor values) : values_(std::move(values)) { require_rank(values_, 2, "Mask"); }

std::vector<Point> convex_hull(std::span<const Point> input) {
    std::vector<Point> pts(input.begin(), input.end());
    std::sort(pts.begin(), pts.end(), [](Point p, Point q) { return p.x < q.x || (p.x == q.x && p.y < q.y); });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    std::vector<Point> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
        hull[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

Mask hull_mask(std::span<const Point> pts, std::size_t width, std::size_t height) {
    const auto hull = convex_hull(pts);
    if (hull.size() < 3) throw GeometryError("hull_mask: points are collinear or too few");
    Mask m(height, width);
    double x_lo = hull[0].x, x_hi = hull[0].x, y_lo = hull[0].y, y_hi = hull[0].y;
    for (const auto& p : hull) {
        x_lo = std::min(x_lo, p.x);
        x_hi = std::max(x_hi, p.x);
        y_lo = std::min(y_lo, p.y);
        y_hi = std::max(y_hi, p.y);
    }
    auto lo = [](double v) { return static_cast<std::size_t>(std::max(0.0, std::ceil(v))); };
    auto hi = [](double v, std::size_t n) {
        return static_cast<std::size_t>(std::clamp(std::floor(v) + 1.0, 0.0, static_cast<double>(n)));
    };
    for (std::size_t y = lo(y_lo); y < hi(y_hi, height); ++y) {
        for (std::size_t x = lo(x_lo); x < hi(x_hi, width); ++x) {
            const Point p{static_cast<double>(x), static_cast<double>(y)};
            bool inside = true;
            for (std::size_t i = 0; i < hull.size() && inside; ++i) {
                inside = cross(hull[i], hull[(i + 1) % hull.size()], p) >= 0.0;
            }
            if (inside) m(y, x) = 1.0;
        }
    }
    return m;
}

Mask feather(const Mask& mask, double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ContractError("feather sigma must be non-negative");
    if (sigma == 0.0) return mask;
    const auto radius = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> kernel;
    double total = 0.0;
    for (long k = -radius; k <= radius; ++k) {
        kernel.push_back(std::exp(-static_cast<double>(k * k) / (2.0 * sigma * sigma)));
        total += kernel.back();
    }
    for (auto& v : kernel) v /= total;

    const long h = static_cast<long>(mask.height()), w = static_cast<long>(mask.width());
    Mask tmp(mask.height(), mask.width()), out(mask.height(), mask.width());
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long k = -radius; k <= radius; ++k) {
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       mask(static_cast<std::size_t>(y), static_cast<std::size_t>(std::clamp(x + k, 0L, w - 1)));
            }
            tmp(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = acc;
        }
    }
    for (long y = 0; y < h; ++y) {
        for (long x = 0; x < w; ++x) {
            double acc = 0.0;
            for (long k = -radius; k <= radius; ++k) {
                acc += kernel[static_cast<std::size_t>(k + radius)] *
                       tmp(static_cast<std::size_t>(std::clamp(y + k, 0L, h - 1)), static_cast<std::size_t>(x));
            }
            out(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = std::clamp(acc, 0.0, 1.0);
        }
    }
    return out;
}

Mask intersect(const Mask& a, const Mask& b) {
    if (a.height() != b.height() || a.width() != b.width()) throw DimensionError("intersect: mask sizes differ");
    Mask out(a.height(), a.width());
    for (std::size_t y = 0; y < a.height(); ++y)
        for (std::size_t x = 0; x < a.width(); ++x) out(y, x) = std::min(a(y, x), b(y, x));
    return out;
}

Tensor blend(const Tensor& target, const Tensor& warped, const Mask& mask) {
    if (target.rank() != 3 || target.shape() != warped.shape()) {
        throw ContractError("blend: images " + shape_str(target.shape()) + " and " + shape_str(warped.shape()) +
                            " must be equal [C,H,W]");
    }
    const std::size_t ch = target.dim(0), h = target.dim(1), w = target.dim(2);
    if (mask.height() != h || mask.width() != w) {
        throw ContractError("blend: mask is " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
                             ", images are " + std::to_string(h) + "x" + std::to_string(w));
    }
    Tensor out = target;
    for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double m = mask(y, x);
                if (m == 0.0) continue;
                const std::size_t i = (c * h + y) * w + x;
                out[i] = m * warped[i] + (1.0 - m) * target[i];
            }
        }
    }
    return out;
}

}  // namespace sf
