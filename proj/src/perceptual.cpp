#include "stylefuse/perceptual.hpp"

#include <cmath>

#include "stylefuse/errors.hpp"
#include "stylefuse/rng.hpp"

namespace sf {

namespace {

std::string stage_key(std::size_t k, const char* leaf) {
    return "extractor.stage" + std::to_string(k) + "." + leaf;
}

constexpr double kSlope = 0.2;

}  // namespace

FeatureExtractor::FeatureExtractor(WeightStore weights, std::size_t tap_depth) : weights_(std::move(weights)) {
    while (weights_.contains(stage_key(stages_ + 1, "weight"))) ++stages_;
    if (stages_ == 0) throw LoadError("weight store has no entry '" + stage_key(1, "weight") + "'");
    std::size_t cin = 3;
    for (std::size_t k = 1; k <= stages_; ++k) {
        const Tensor& w = weights_.get(stage_key(k, "weight"));
        if (w.rank() != 4 || w.dim(1) != cin || w.dim(2) != 3 || w.dim(3) != 3) {
            throw LoadError("weight entry '" + stage_key(k, "weight") + "' has shape " + shape_str(w.shape()) +
                            ", expected [C," + std::to_string(cin) + ",3,3]");
        }
        weights_.get(stage_key(k, "bias"), {w.dim(0)});
        cin = w.dim(0);
    }
    tap_depth_ = tap_depth == 0 ? (stages_ + 1) / 2 : tap_depth;
    if (tap_depth_ > stages_) {
        throw ContractError("tap depth " + std::to_string(tap_depth_) + " exceeds " + std::to_string(stages_) +
                            " extractor stages");
    }
}

FeatureExtractor FeatureExtractor::with_tap(std::size_t depth) const {
    if (depth < 1 || depth > stages_) {
        throw ContractError("tap depth must lie in [1," + std::to_string(stages_) + "], got " + std::to_string(depth));
    }
    FeatureExtractor copy = *this;
    copy.tap_depth_ = depth;
    return copy;
}

Var FeatureExtractor::features(Var image) const {
    const Tensor& img = image.value();
    if (img.rank() != 3 || img.dim(0) != 3) {
        throw DimensionError("feature extractor expects a [3,H,W] image, got " + shape_str(img.shape()));
    }
    Tape& tape = *image.tape;
    Var x = image;
    for (std::size_t k = 1; k <= tap_depth_; ++k) {
        x = conv2d(x, tape.constant(weights_.get(stage_key(k, "weight"))), tape.constant(weights_.get(stage_key(k, "bias"))),
                   1);
        x = leaky_relu(x, kSlope);
        x = downsample2x(x);
    }
    return x;
}

Tensor FeatureExtractor::features(const Tensor& image) const {
    Tape tape;
    return features(tape.constant(image)).value();
}

FeatureExtractor build_extractor(std::uint64_t seed, std::size_t stages) {
    if (stages < 1) throw ContractError("feature extractor needs at least one stage");
    Rng rng(seed);
    WeightStore w;
    const double gain = std::sqrt(2.0 / (1.0 + kSlope * kSlope));
    std::size_t cin = 3, cout = 16;
    for (std::size_t k = 1; k <= stages; ++k) {
        Tensor kernel({cout, cin, 3, 3});
        const double sd = gain / std::sqrt(static_cast<double>(cin * 9));
        for (auto& v : kernel.data()) v = sd * rng.normal();
        w.insert(stage_key(k, "weight"), std::move(kernel));
        w.insert(stage_key(k, "bias"), Tensor::zeros({cout}));
        cin = cout;
        cout *= 2;
    }
    return FeatureExtractor(std::move(w));
}

std::string to_string(DistanceKind kind) {
    switch (kind) {
        case DistanceKind::l1: return "l1";
        case DistanceKind::l2: return "l2";
        case DistanceKind::feature: return "feature";
    }
    return "?";
}

DistanceKind parse_distance_kind(const std::string& name) {
    if (name == "l1") return DistanceKind::l1;
    if (name == "l2") return DistanceKind::l2;
    if (name == "feature") return DistanceKind::feature;
    throw ContractError("unknown distance kind '" + name + "' (expected l1, l2 or feature)");
}

namespace {

void require_match(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ContractError("distance: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
    }
}

const FeatureExtractor& tapped(const DistanceSpec& spec, const FeatureExtractor* extractor,
                               std::optional<FeatureExtractor>& scratch) {
    if (!extractor) throw ContractError("feature distance requires a feature extractor");
    if (spec.tap_depth == 0 || spec.tap_depth == extractor->tap_depth()) return *extractor;
    scratch = extractor->with_tap(spec.tap_depth);
    return *scratch;
}

}  // namespace

Var distance(Var a, Var b, const DistanceSpec& spec, const FeatureExtractor* extractor) {
    require_match(a.value(), b.value());
    switch (spec.kind) {
        case DistanceKind::l1: return mean_abs_diff(a, b);
        case DistanceKind::l2: return mean_sq_diff(a, b);
        case DistanceKind::feature: {
            std::optional<FeatureExtractor> scratch;
            const FeatureExtractor& fx = tapped(spec, extractor, scratch);
            return mean_sq_diff(fx.features(a), fx.features(b));
        }
    }
    throw ContractError("invalid distance kind");
}

double distance(const Tensor& a, const Tensor& b, const DistanceSpec& spec, const FeatureExtractor* extractor) {
    Tape tape;
    return distance(tape.constant(a), tape.constant(b), spec, extractor).value()[0];
}

DistanceTarget::DistanceTarget(Tensor target, DistanceSpec spec, const FeatureExtractor* extractor)
    : target_(std::move(target)), spec_(spec) {
    if (spec_.kind == DistanceKind::feature) {
        std::optional<FeatureExtractor> scratch;
        extractor_ = tapped(spec_, extractor, scratch);
        target_features_ = extractor_->features(target_);
    }
}

Var DistanceTarget::operator()(Var image) const {
    Tape& tape = *image.tape;
    require_match(image.value(), target_);
    switch (spec_.kind) {
        case DistanceKind::l1: return mean_abs_diff(image, tape.constant(target_));
        case DistanceKind::l2: return mean_sq_diff(image, tape.constant(target_));
        case DistanceKind::feature:
            return mean_sq_diff(extractor_->features(image), tape.constant(target_features_));
    }
    throw ContractError("invalid distance kind");
}

double DistanceTarget::operator()(const Tensor& image) const {
    Tape tape;
    return (*this)(tape.constant(image)).value()[0];
}

}  // namespace sf
