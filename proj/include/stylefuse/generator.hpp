#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "stylefuse/autodiff.hpp"
#include "stylefuse/tensor.hpp"
#include "stylefuse/weights.hpp"

namespace sf {

/// Layered latent: one D-dimensional row per AdaIN injection.
class StyleVector {
public:
    StyleVector() = default;
    StyleVector(std::size_t layers, std::size_t width) : values_({layers, width}) {}
    /// Wraps an [L,D] tensor; L >= 2, all values finite.
    explicit StyleVector(Tensor values);

    std::size_t layers() const { return values_.dim(0); }
    std::size_t width() const { return values_.dim(1); }

    double& operator()(std::size_t layer, std::size_t j) { return values_[layer * width() + j]; }
    double operator()(std::size_t layer, std::size_t j) const { return values_[layer * width() + j]; }

    const Tensor& tensor() const noexcept { return values_; }

    friend bool operator==(const StyleVector&, const StyleVector&) = default;

private:
    Tensor values_;
};

/// Euclidean distance between row `layer` of two styles.
double row_distance(const StyleVector& a, const StyleVector& b, std::size_t layer);
double row_norm(const StyleVector& s, std::size_t layer);

struct GeneratorConfig {
    std::size_t layers = 8;
    std::size_t width = 64;
    std::size_t base_resolution = 8;
    std::size_t output_resolution = 64;
    /// Feature channels per resolution stage (two style layers per stage).
    std::vector<std::size_t> channels{128, 64, 32, 16};
    std::uint64_t noise_seed = 0;
    std::size_t mapping_depth = 3;
    double leaky_slope = 0.2;
    double adain_eps = 1e-8;

    std::size_t stages() const { return layers / 2; }
    /// Throws ContractError describing the first inconsistency.
    void validate() const;

    static GeneratorConfig desk();
    /// 18 x 512 styles, 4x4 -> 1024x1024.
    static GeneratorConfig full_scale();

    friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

/// Resolution of style layer `layer`.
std::size_t layer_resolution(const GeneratorConfig& cfg, std::size_t layer);

/// Fixed per-layer noise images, a pure function of the config and noise_seed.
struct NoiseBank {
    std::vector<Tensor> images;  // [1,R,R] per style layer

    static NoiseBank generate(const GeneratorConfig& cfg);
};

/// Scaled-Gaussian fan-in initialisation; identical seeds give identical stores.
WeightStore init_random_weights(const GeneratorConfig& cfg, std::uint64_t seed);

/// Recovers layer count, width, resolutions and channels from entry shapes.
/// `noise_seed`, slope and eps are not stored and come from `defaults`.
GeneratorConfig infer_config(const WeightStore& weights, const GeneratorConfig& defaults = {});

/// Checks every entry the config needs; throws LoadError naming the first
/// absent or misshapen one.
void check_weights(const GeneratorConfig& cfg, const WeightStore& weights);

/// Frozen mapping + synthesis networks with their fixed noise.
///
/// Immutable after construction; concurrent calls are safe.
class Generator {
public:
    Generator(GeneratorConfig cfg, std::shared_ptr<const WeightStore> weights);
    Generator(GeneratorConfig cfg, WeightStore weights)
        : Generator(std::move(cfg), std::make_shared<const WeightStore>(std::move(weights))) {}

    const GeneratorConfig& config() const noexcept { return cfg_; }
    const WeightStore& weights() const noexcept { return *weights_; }
    const NoiseBank& noise() const noexcept { return noise_; }
    std::size_t resolution() const noexcept { return cfg_.output_resolution; }

    /// Mapping network on z [D]; the result is broadcast to every layer.
    StyleVector map_latent(const Tensor& z) const;

    /// One independent N(0,1) latent per layer, each passed through the
    /// mapping network.
    StyleVector sample_style(std::uint64_t seed) const;

    /// Image [3,R,R] in (0,1).
    Tensor synthesize(const StyleVector& s) const;

    /// Differentiable path: `style` is an [L,D] node, result an image node.
    Var synthesize(Var style) const;

private:
    GeneratorConfig cfg_;
    std::shared_ptr<const WeightStore> weights_;
    NoiseBank noise_;
};

}  // namespace sf
