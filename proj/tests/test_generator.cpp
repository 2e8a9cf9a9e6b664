#include <doctest.h>

#include <cmath>

#include "stylefuse/errors.hpp"
#include "stylefuse/generator.hpp"
#include "test_util.hpp"

using namespace sf;
using sf::testing::random_tensor;

namespace {

const Generator& desk_generator() {
    static const Generator gen(GeneratorConfig::desk(), init_random_weights(GeneratorConfig::desk(), 0));
    return gen;
}

GeneratorConfig tiny_config() {
    GeneratorConfig cfg;
    cfg.layers = 4;
    cfg.width = 6;
    cfg.base_resolution = 4;
    cfg.output_resolution = 8;
    cfg.channels = {5, 4};
    return cfg;
}

}  // namespace

TEST_CASE("desk configuration") {
    const auto cfg = GeneratorConfig::desk();
    CHECK(cfg.layers == 8);
    CHECK(cfg.width == 64);
    CHECK(cfg.output_resolution == 64);
    CHECK((cfg.base_resolution << (cfg.stages() - 1)) == cfg.output_resolution);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("full-scale configuration") {
    const auto cfg = GeneratorConfig::full_scale();
    CHECK(cfg.layers == 18);
    CHECK(cfg.width == 512);
    CHECK(cfg.output_resolution == 1024);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("configuration validation") {
    auto cfg = tiny_config();
    cfg.output_resolution = 16;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = tiny_config();
    cfg.layers = 5;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = tiny_config();
    cfg.channels = {5};
    CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("style vector invariants") {
    CHECK_THROWS(StyleVector(Tensor({1, 4})));
    Tensor bad({2, 3});
    bad[4] = NAN;
    CHECK_THROWS(StyleVector(bad));
    CHECK_NOTHROW(StyleVector(Tensor({2, 1})));
}

TEST_CASE("init_random_weights is seeded") {
    const auto cfg = tiny_config();
    CHECK(init_random_weights(cfg, 7) == init_random_weights(cfg, 7));
    CHECK_FALSE(init_random_weights(cfg, 7) == init_random_weights(cfg, 8));
}

TEST_CASE("noise bank is a pure function of the config") {
    const auto cfg = tiny_config();
    const auto a = NoiseBank::generate(cfg), b = NoiseBank::generate(cfg);
    REQUIRE(a.images.size() == cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) CHECK(a.images[l] == b.images[l]);
    auto other = cfg;
    other.noise_seed = 1;
    CHECK_FALSE(NoiseBank::generate(other).images[0] == a.images[0]);
}

TEST_CASE("map_latent: zero weights give a zero style") {
    const auto cfg = tiny_config();
    WeightStore w = init_random_weights(cfg, 1);
    for (std::size_t k = 0; k < cfg.mapping_depth; ++k) {
        w.insert("mapping." + std::to_string(k) + ".weight", Tensor({cfg.width, cfg.width}));
        w.insert("mapping." + std::to_string(k) + ".bias", Tensor({cfg.width}));
    }
    const Generator gen(cfg, w);
    const StyleVector s = gen.map_latent(Tensor({cfg.width}));
    for (double v : s.tensor().data()) CHECK(v == 0.0);
}

TEST_CASE("map_latent: deterministic and broadcast") {
    const auto& gen = desk_generator();
    const Tensor z = random_tensor({64}, 4);
    const StyleVector a = gen.map_latent(z), b = gen.map_latent(z);
    CHECK(a == b);
    for (std::size_t l = 1; l < a.layers(); ++l)
        for (std::size_t j = 0; j < a.width(); ++j) CHECK(a(l, j) == a(0, j));
    CHECK_THROWS_AS(gen.map_latent(Tensor({63})), DimensionError);
}

TEST_CASE("map_latent matches the numpy golden values") {
    // tests/oracles/mapping_reference.py on init_random_weights(desk, 0)
    const auto& gen = desk_generator();
    Tensor z({64});
    for (std::size_t j = 0; j < 64; ++j) z[j] = std::sin(0.7 * static_cast<double>(j) + 0.3);
    const StyleVector s = gen.map_latent(z);
    CHECK(std::abs(s(0, 0) - 1.2811931797829224) < 1e-12);
    CHECK(std::abs(s(0, 1) - -0.17244825283926596) < 1e-12);
    CHECK(std::abs(s(0, 17) - 0.73252767381955697) < 1e-12);
    CHECK(std::abs(s(0, 63) - -0.37313354031375545) < 1e-12);
    double sum = 0;
    for (std::size_t j = 0; j < 64; ++j) sum += s(0, j);
    CHECK(std::abs(sum - 24.320089531609199) < 1e-11);
}

TEST_CASE("missing weights name the absent entry") {
    const auto cfg = tiny_config();
    WeightStore full = init_random_weights(cfg, 1);
    WeightStore partial;
    for (const auto& [name, t] : full.entries())
        if (name != "synthesis.layer2.style.weight") partial.insert(name, t);
    try {
        Generator gen(cfg, partial);
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("synthesis.layer2.style.weight") != std::string::npos);
    }
}

TEST_CASE("infer_config recovers the architecture") {
    const auto cfg = tiny_config();
    const auto inferred = infer_config(init_random_weights(cfg, 2));
    CHECK(inferred.layers == cfg.layers);
    CHECK(inferred.width == cfg.width);
    CHECK(inferred.base_resolution == cfg.base_resolution);
    CHECK(inferred.output_resolution == cfg.output_resolution);
    CHECK(inferred.channels == cfg.channels);
}

TEST_CASE("synthesize: deterministic, bounded, non-degenerate") {
    const auto& gen = desk_generator();
    const StyleVector s = gen.sample_style(3);
    const Tensor a = gen.synthesize(s), b = gen.synthesize(s);
    CHECK(a == b);
    CHECK(a.shape() == Shape{3, 64, 64});
    CHECK(a.all_finite());
    double mean = 0, var = 0;
    for (double v : a.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        mean += v;
    }
    mean /= static_cast<double>(a.size());
    for (double v : a.data()) var += (v - mean) * (v - mean);
    CHECK(var / static_cast<double>(a.size()) > 1e-4);
}

TEST_CASE("synthesize: every style row matters") {
    const auto& gen = desk_generator();
    const StyleVector s = gen.sample_style(3), other = gen.sample_style(4);
    const Tensor base = gen.synthesize(s);
    for (std::size_t l = 0; l < s.layers(); ++l) {
        StyleVector t = s;
        for (std::size_t j = 0; j < s.width(); ++j) t(l, j) = other(l, j);
        CHECK(max_abs_diff(gen.synthesize(t), base) > 1e-6);
    }
    StyleVector pair = s;
    for (std::size_t l : {4, 5})
        for (std::size_t j = 0; j < s.width(); ++j) pair(l, j) = other(l, j);
    CHECK(mean_abs_diff(gen.synthesize(pair), base) > 0.0);
    CHECK(gen.synthesize(StyleVector(s.tensor())) == base);
}

TEST_CASE("synthesize: style shape mismatch") {
    const auto& gen = desk_generator();
    CHECK_THROWS_AS(gen.synthesize(StyleVector(7, 64)), ContractError);
    CHECK_THROWS_AS(gen.synthesize(StyleVector(8, 63)), ContractError);
}

TEST_CASE("synthesize: gradient of the mean pixel") {
    const auto& gen = desk_generator();
    for (std::uint64_t seed : {1, 2}) {
        const auto r = grad_check([&](Var s) { return scale(sum(gen.synthesize(s)), 1.0 / (3.0 * 64 * 64)); },
                                  gen.sample_style(seed).tensor(), 1e-5, 24, seed);
        CHECK(r.max_rel_error < 1e-4);
    }
}

TEST_CASE("synthesize: the same code runs a small full-shaped config") {
    GeneratorConfig cfg;
    cfg.layers = 6;
    cfg.width = 16;
    cfg.base_resolution = 4;
    cfg.output_resolution = 16;
    cfg.channels = {8, 8, 4};
    const Generator gen(cfg, init_random_weights(cfg, 3));
    CHECK(gen.synthesize(gen.sample_style(1)).shape() == Shape{3, 16, 16});
}
