#include "stylefuse/generator.hpp"

#include <cmath>

#include "stylefuse/errors.hpp"
#include "stylefuse/rng.hpp"

namespace sf {

StyleVector::StyleVector(Tensor values) : values_(std::move(values)) {
    if (values_.rank() != 2) throw DimensionError("style vector must be [L,D], got " + shape_str(values_.shape()));
    if (values_.dim(0) < 2) throw ContractError("style vector needs at least 2 layers");
    if (!values_.all_finite()) throw ContractError("style vector contains non-finite values");
}

double row_distance(const StyleVector& a, const StyleVector& b, std::size_t layer) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.width(); ++j) s += (a(layer, j) - b(layer, j)) * (a(layer, j) - b(layer, j));
    return std::sqrt(s);
}

double row_norm(const StyleVector& s, std::size_t layer) {
    double acc = 0.0;
    for (std::size_t j = 0; j < s.width(); ++j) acc += s(layer, j) * s(layer, j);
    return std::sqrt(acc);
}

namespace {

// Spread of the style affine maps; keeps AdaIN scales (1 + affine) positive
// for typical mapped styles.
constexpr double kStyleGain = 0.5;

std::string layer_key(std::size_t l, const char* leaf) {
    return "synthesis.layer" + std::to_string(l) + "." + leaf;
}

std::string mapping_key(std::size_t k, const char* leaf) {
    return "mapping." + std::to_string(k) + "." + leaf;
}

std::size_t layer_channels(const GeneratorConfig& cfg, std::size_t l) { return cfg.channels[l / 2]; }

std::size_t layer_in_channels(const GeneratorConfig& cfg, std::size_t l) {
    if (l == 0) return cfg.channels[0];
    return cfg.channels[(l - 1) / 2];
}

}  // namespace

void GeneratorConfig::validate() const {
    if (layers < 2 || layers % 2 != 0) {
        throw ContractError("generator needs an even layer count >= 2, got " + std::to_string(layers));
    }
    if (width < 1) throw ContractError("style width must be >= 1");
    if (base_resolution < 1) throw ContractError("base resolution must be >= 1");
    if (channels.size() != stages()) {
        throw ContractError("expected " + std::to_string(stages()) + " channel counts (one per stage), got " +
                            std::to_string(channels.size()));
    }
    for (auto c : channels)
        if (c == 0) throw ContractError("channel counts must be positive");
    if (output_resolution != base_resolution << (stages() - 1)) {
        throw ContractError("output resolution " + std::to_string(output_resolution) + " != base " +
                            std::to_string(base_resolution) + " * 2^" + std::to_string(stages() - 1));
    }
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ContractError("leaky slope must lie in (0,1)");
    if (!(adain_eps > 0.0)) throw ContractError("adain eps must be positive");
}

GeneratorConfig GeneratorConfig::desk() { return GeneratorConfig{}; }

GeneratorConfig GeneratorConfig::full_scale() {
    GeneratorConfig cfg;
    cfg.layers = 18;
    cfg.width = 512;
    cfg.base_resolution = 4;
    cfg.output_resolution = 1024;
    cfg.channels = {512, 512, 512, 512, 256, 128, 64, 32, 16};
    return cfg;
}

std::size_t layer_resolution(const GeneratorConfig& cfg, std::size_t layer) {
    return cfg.base_resolution << (layer / 2);
}

NoiseBank NoiseBank::generate(const GeneratorConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.noise_seed);
    NoiseBank bank;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::size_t r = layer_resolution(cfg, l);
        Tensor n({1, r, r});
        for (auto& v : n.data()) v = rng.normal();
        bank.images.push_back(std::move(n));
    }
    return bank;
}

WeightStore init_random_weights(const GeneratorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    WeightStore store;
    auto gaussian = [&](Shape shape, double stddev) {
        Tensor t(std::move(shape));
        for (auto& v : t.data()) v = stddev * rng.normal();
        return t;
    };
    const double relu_gain = std::sqrt(2.0 / (1.0 + cfg.leaky_slope * cfg.leaky_slope));
    const auto d = cfg.width;

    for (std::size_t k = 0; k < cfg.mapping_depth; ++k) {
        store.insert(mapping_key(k, "weight"), gaussian({d, d}, relu_gain / std::sqrt(static_cast<double>(d))));
        store.insert(mapping_key(k, "bias"), Tensor::zeros({d}));
    }

    const std::size_t c0 = cfg.channels[0];
    store.insert("synthesis.const", gaussian({c0, cfg.base_resolution, cfg.base_resolution}, 1.0));

    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::size_t cin = layer_in_channels(cfg, l), c = layer_channels(cfg, l);
        store.insert(layer_key(l, "conv.weight"),
                     gaussian({c, cin, 3, 3}, relu_gain / std::sqrt(static_cast<double>(cin * 9))));
        store.insert(layer_key(l, "conv.bias"), Tensor::zeros({c}));
        Tensor strength({c});
        for (auto& v : strength.data()) v = rng.uniform(0.05, 0.15);
        store.insert(layer_key(l, "noise_strength"), std::move(strength));
        store.insert(layer_key(l, "style.weight"), gaussian({2 * c, d}, kStyleGain / std::sqrt(static_cast<double>(d))));
        Tensor style_bias({2 * c});
        for (std::size_t i = 0; i < c; ++i) style_bias[i] = 1.0;  // scale half starts at identity
        store.insert(layer_key(l, "style.bias"), std::move(style_bias));
    }

    const std::size_t clast = cfg.channels.back();
    store.insert("synthesis.to_rgb.weight", gaussian({3, clast, 1, 1}, 1.0 / std::sqrt(static_cast<double>(clast))));
    store.insert("synthesis.to_rgb.bias", Tensor::zeros({3}));
    return store;
}

void check_weights(const GeneratorConfig& cfg, const WeightStore& w) {
    cfg.validate();
    const auto d = cfg.width;
    for (std::size_t k = 0; k < cfg.mapping_depth; ++k) {
        w.get(mapping_key(k, "weight"), {d, d});
        w.get(mapping_key(k, "bias"), {d});
    }
    w.get("synthesis.const", {cfg.channels[0], cfg.base_resolution, cfg.base_resolution});
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::size_t cin = layer_in_channels(cfg, l), c = layer_channels(cfg, l);
        w.get(layer_key(l, "conv.weight"), {c, cin, 3, 3});
        w.get(layer_key(l, "conv.bias"), {c});
        w.get(layer_key(l, "noise_strength"), {c});
        w.get(layer_key(l, "style.weight"), {2 * c, d});
        w.get(layer_key(l, "style.bias"), {2 * c});
    }
    w.get("synthesis.to_rgb.weight", {3, cfg.channels.back(), 1, 1});
    w.get("synthesis.to_rgb.bias", {3});
}

GeneratorConfig infer_config(const WeightStore& w, const GeneratorConfig& defaults) {
    GeneratorConfig cfg = defaults;
    const Tensor& cst = w.get("synthesis.const");
    if (cst.rank() != 3 || cst.dim(1) != cst.dim(2)) throw LoadError("synthesis.const must be [C,R,R]");
    cfg.base_resolution = cst.dim(1);
    std::size_t layers = 0;
    while (w.contains(layer_key(layers, "conv.weight"))) ++layers;
    if (layers < 2 || layers % 2 != 0) throw LoadError("weight store holds " + std::to_string(layers) +
                                                       " synthesis layers; need an even count >= 2");
    cfg.layers = layers;
    cfg.channels.clear();
    for (std::size_t l = 0; l < layers; l += 2) cfg.channels.push_back(w.get(layer_key(l, "conv.weight")).dim(0));
    const Tensor& sw = w.get(layer_key(0, "style.weight"));
    if (sw.rank() != 2) throw LoadError(layer_key(0, "style.weight") + " must be rank 2");
    cfg.width = sw.dim(1);
    std::size_t depth = 0;
    while (w.contains(mapping_key(depth, "weight"))) ++depth;
    cfg.mapping_depth = depth;
    cfg.output_resolution = cfg.base_resolution << (cfg.stages() - 1);
    check_weights(cfg, w);
    return cfg;
}

Generator::Generator(GeneratorConfig cfg, std::shared_ptr<const WeightStore> weights)
    : cfg_(std::move(cfg)), weights_(std::move(weights)) {
    if (!weights_) throw ContractError("generator requires a weight store");
    check_weights(cfg_, *weights_);
    noise_ = NoiseBank::generate(cfg_);
}

StyleVector Generator::map_latent(const Tensor& z) const {
    if (z.shape() != Shape{cfg_.width}) {
        throw DimensionError("map_latent: latent must be [" + std::to_string(cfg_.width) + "], got " +
                             shape_str(z.shape()));
    }
    if (!z.all_finite()) throw ContractError("map_latent: latent contains non-finite values");
    Tape tape;
    Var h = tape.constant(z);
    for (std::size_t k = 0; k < cfg_.mapping_depth; ++k) {
        h = linear(tape.constant(weights_->get(mapping_key(k, "weight"))), h,
                   tape.constant(weights_->get(mapping_key(k, "bias"))));
        h = leaky_relu(h, cfg_.leaky_slope);
    }
    StyleVector s(cfg_.layers, cfg_.width);
    for (std::size_t l = 0; l < cfg_.layers; ++l)
        for (std::size_t j = 0; j < cfg_.width; ++j) s(l, j) = h.value()[j];
    return s;
}

StyleVector Generator::sample_style(std::uint64_t seed) const {
    Rng rng(seed);
    StyleVector s(cfg_.layers, cfg_.width);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        Tensor z({cfg_.width});
        for (auto& v : z.data()) v = rng.normal();
        StyleVector m = map_latent(z);
        for (std::size_t j = 0; j < cfg_.width; ++j) s(l, j) = m(l, j);
    }
    return s;
}

Tensor Generator::synthesize(const StyleVector& s) const {
    Tape tape;
    return synthesize(tape.constant(s.tensor())).value();
}

Var Generator::synthesize(Var style) const {
    if (style.value().shape() != Shape{cfg_.layers, cfg_.width}) {
        throw ContractError("synthesize: style " + shape_str(style.value().shape()) + " does not match generator [" +
                            std::to_string(cfg_.layers) + "," + std::to_string(cfg_.width) + "]");
    }
    Tape& tape = *style.tape;
    const WeightStore& w = *weights_;
    Var x = tape.constant(w.get("synthesis.const"));
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        const std::size_t c = layer_channels(cfg_, l);
        if (l % 2 == 0 && l > 0) x = upsample2x(x);
        x = conv2d(x, tape.constant(w.get(layer_key(l, "conv.weight"))), tape.constant(w.get(layer_key(l, "conv.bias"))),
                   1);
        x = add_noise(x, noise_.images[l], tape.constant(w.get(layer_key(l, "noise_strength"))));
        x = leaky_relu(x, cfg_.leaky_slope);
        Var affine = linear(tape.constant(w.get(layer_key(l, "style.weight"))), row(style, l),
                            tape.constant(w.get(layer_key(l, "style.bias"))));
        x = adain(x, slice(affine, 0, c), slice(affine, c, c), cfg_.adain_eps);
    }
    Var rgb = conv2d(x, tape.constant(w.get("synthesis.to_rgb.weight")), tape.constant(w.get("synthesis.to_rgb.bias")), 0);
    return sigmoid(rgb);
}

}  // namespace sf
