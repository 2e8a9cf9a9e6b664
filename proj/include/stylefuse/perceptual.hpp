#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stylefuse/autodiff.hpp"
#include "stylefuse/weights.hpp"

namespace sf {

/// Frozen convolutional feature stack used as a perceptual distance.
///
/// Stage k (1-based): 3x3 conv, leaky-ReLU, 2x2 average pool. Channels run
/// 3 -> 16 -> 32 -> ... doubling per stage. Weights are stored under
/// "extractor.stage<k>.weight" / ".bias" so converted weights can be loaded
/// through the NTWS container.
class FeatureExtractor {
public:
    /// Takes ownership of stage weights; checks every stage is present and
    /// that channel counts chain.
    FeatureExtractor(WeightStore weights, std::size_t tap_depth = 0);

    std::size_t stages() const noexcept { return stages_; }
    std::size_t tap_depth() const noexcept { return tap_depth_; }
    const WeightStore& weights() const noexcept { return weights_; }

    /// Same weights, different tap (1 <= depth <= stages()).
    FeatureExtractor with_tap(std::size_t depth) const;

    /// Activations after stage `tap_depth` for an image node [3,H,W].
    Var features(Var image) const;
    Tensor features(const Tensor& image) const;

private:
    WeightStore weights_;
    std::size_t stages_ = 0;
    std::size_t tap_depth_ = 1;
};

/// Seeded random weights; the tap defaults to the middle stage, ceil(stages/2).
FeatureExtractor build_extractor(std::uint64_t seed, std::size_t stages);

enum class DistanceKind { l1, l2, feature };

struct DistanceSpec {
    DistanceKind kind = DistanceKind::feature;
    /// Feature kind only; 0 means use the extractor's own tap.
    std::size_t tap_depth = 0;

    static DistanceSpec l1() { return {DistanceKind::l1, 0}; }
    static DistanceSpec l2() { return {DistanceKind::l2, 0}; }
    static DistanceSpec feature(std::size_t tap = 0) { return {DistanceKind::feature, tap}; }

    friend bool operator==(const DistanceSpec&, const DistanceSpec&) = default;
};

std::string to_string(DistanceKind kind);
/// Accepts "l1", "l2" and "feature"; throws ContractError otherwise.
DistanceKind parse_distance_kind(const std::string& name);

/// Differentiable distance between two image nodes (gradient flows into
/// both). l1: mean |a-b|; l2: mean (a-b)^2; feature: mean squared difference
/// of extractor activations.
Var distance(Var a, Var b, const DistanceSpec& spec, const FeatureExtractor* extractor);

double distance(const Tensor& a, const Tensor& b, const DistanceSpec& spec, const FeatureExtractor* extractor);

/// Precomputed target side of a distance: for the feature kind the target's
/// activations are extracted once and reused across calls.
class DistanceTarget {
public:
    DistanceTarget(Tensor target, DistanceSpec spec, const FeatureExtractor* extractor);

    const Tensor& image() const noexcept { return target_; }
    const DistanceSpec& spec() const noexcept { return spec_; }

    Var operator()(Var image) const;
    double operator()(const Tensor& image) const;

private:
    Tensor target_;
    DistanceSpec spec_;
    std::optional<FeatureExtractor> extractor_;
    Tensor target_features_;
};

}  // namespace sf
