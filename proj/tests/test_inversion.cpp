#include <doctest.h>

#include <cmath>
#include <fstream>

#include "stylefuse/errors.hpp"
#include "stylefuse/inversion.hpp"
#include "test_util.hpp"

using namespace sf;
using sf::testing::random_tensor;
using sf::testing::TempDir;

namespace {

GeneratorConfig small_config() {
    GeneratorConfig cfg;
    cfg.layers = 4;
    cfg.width = 8;
    cfg.base_resolution = 4;
    cfg.output_resolution = 8;
    cfg.channels = {8, 6};
    return cfg;
}

const Generator& small_generator() {
    static const Generator gen(small_config(), init_random_weights(small_config(), 5));
    return gen;
}

}  // namespace

TEST_CASE("best_so_far") {
    CHECK(best_so_far({{0, 5}, {1, 3}, {2, 4}}) == TracePoint{1, 3});
    CHECK(best_so_far({{0, 5}, {1, 4}, {2, 3}}) == TracePoint{2, 3});
    CHECK(best_so_far({{0, 2}, {5, 2}}) == TracePoint{0, 2});
    CHECK_THROWS_AS(best_so_far({}), ContractError);
    const auto env = best_so_far_envelope({{0, 5}, {1, 3}, {2, 4}, {3, 1}});
    CHECK(env == std::vector<double>{5, 3, 3, 1});
}

TEST_CASE("config validation") {
    InversionConfig cfg;
    cfg.learning_rate = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg = {};
    cfg.iterations = 3;
    cfg.snapshot_iters = {4};
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    CHECK(parse_optimizer("gd") == Optimizer::gd);
    CHECK_THROWS_AS(parse_optimizer("sgd"), ContractError);
}

TEST_CASE("zero iterations returns the zero style") {
    const auto& gen = small_generator();
    InversionConfig cfg;
    cfg.iterations = 0;
    const auto r = invert(gen.synthesize(gen.sample_style(1)), gen, DistanceSpec::l2(), nullptr, cfg);
    REQUIRE(r.trace.size() == 1);
    CHECK(r.trace[0].iteration == 0);
    for (double v : r.style.tensor().data()) CHECK(v == 0.0);
}

TEST_CASE("plain gradient-descent configuration is accepted and recorded") {
    const auto& gen = small_generator();
    const auto gd = InversionConfig::plain_gd();
    CHECK(gd.learning_rate == 1.0);
    CHECK(gd.iterations == 1000);
    CHECK(gd.optimizer == Optimizer::gd);
    const auto r = invert(gen.synthesize(gen.sample_style(2)), gen, DistanceSpec::l2(), nullptr, gd);
    CHECK(r.config.learning_rate == 1.0);
    CHECK(r.config.iterations == 1000);
    CHECK(r.trace.size() == 1001);
}

TEST_CASE("trace contract, envelope and determinism") {
    const auto& gen = small_generator();
    InversionConfig cfg;
    cfg.iterations = 30;
    cfg.snapshot_iters = {0, 10, 30};
    const Tensor target = gen.synthesize(gen.sample_style(3));
    for (auto opt : {Optimizer::gd, Optimizer::adam}) {
        cfg.optimizer = opt;
        cfg.learning_rate = opt == Optimizer::gd ? 0.5 : 0.05;
        const auto a = invert(target, gen, DistanceSpec::l2(), nullptr, cfg);
        const auto b = invert(target, gen, DistanceSpec::l2(), nullptr, cfg);
        REQUIRE(a.trace.size() == 31);
        for (std::size_t i = 0; i < a.trace.size(); ++i) CHECK(a.trace[i].iteration == i);
        CHECK(a.trace == b.trace);
        CHECK(a.style == b.style);
        const auto best = best_so_far(a.trace);
        CHECK(best.loss <= a.trace[0].loss);
        CHECK(best.iteration == a.best_iteration);
        CHECK(DistanceTarget(target, DistanceSpec::l2(), nullptr)(gen.synthesize(a.style)) == best.loss);
        const auto env = best_so_far_envelope(a.trace);
        for (std::size_t i = 1; i < env.size(); ++i) CHECK(env[i] <= env[i - 1]);
        REQUIRE(a.snapshots.size() == 3);
        CHECK(a.snapshots[1].iteration == 10);
    }
}

TEST_CASE("one gradient-descent step") {
    const auto& gen = small_generator();
    const Tensor target = gen.synthesize(gen.sample_style(4));
    InversionConfig cfg;
    cfg.optimizer = Optimizer::gd;
    cfg.learning_rate = 0.7;
    cfg.iterations = 1;
    const auto r = invert(target, gen, DistanceSpec::l2(), nullptr, cfg);

    Tape tape;
    const Var s = tape.parameter(Tensor({4, 8}));
    tape.backward(mean_sq_diff(gen.synthesize(s), tape.constant(target)));
    const Tensor g = tape.grad(s);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(r.final_style.tensor()[i] - (-0.7 * g[i])) < 1e-12);
}

TEST_CASE("target resolution mismatch") {
    const auto& gen = small_generator();
    CHECK_THROWS_AS(invert(Tensor({3, 16, 16}), gen, DistanceSpec::l2(), nullptr, {}), ContractError);
}

TEST_CASE("non-finite loss raises a divergence error") {
    const auto& gen = small_generator();
    Tensor target = gen.synthesize(gen.sample_style(1));
    target[5] = NAN;
    try {
        invert(target, gen, DistanceSpec::l2(), nullptr, {});
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.iteration() == 0);
        CHECK(e.trace().empty());
    }
}

TEST_CASE("trace csv round trip") {
    TempDir dir("trace");
    const std::vector<TracePoint> trace{{0, 0.125}, {1, 1.0 / 3.0}, {2, 1e-300}};
    write_trace_csv(dir.file("t.csv"), trace);
    std::ifstream in(dir.file("t.csv"));
    std::string header;
    std::getline(in, header);
    CHECK(header == "iteration,loss");
    CHECK(read_trace_csv(dir.file("t.csv")) == trace);
}

TEST_CASE("calibration reports each rate") {
    const auto& gen = small_generator();
    InversionConfig cfg;
    cfg.iterations = 5;
    const auto rows = calibrate_learning_rate(gen, DistanceSpec::l2(), nullptr, cfg, {0.01, 0.1}, 2, 0);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        CHECK(r.mean_ratio <= 1.0);
        CHECK(r.worst_ratio <= 1.0);
    }
}
