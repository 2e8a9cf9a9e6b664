#include "stylefuse/inversion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "stylefuse/errors.hpp"

namespace sf {

std::string to_string(Optimizer opt) { return opt == Optimizer::gd ? "gd" : "adam"; }

Optimizer parse_optimizer(const std::string& name) {
    if (name == "gd") return Optimizer::gd;
    if (name == "adam") return Optimizer::adam;
    throw ContractError("unknown optimizer '" + name + "' (expected gd or adam)");
}

void InversionConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ContractError("learning rate must be positive and finite");
    }
    for (auto it : snapshot_iters) {
        if (it > iterations) {
            throw ContractError("snapshot iteration " + std::to_string(it) + " exceeds " + std::to_string(iterations) +
                                " iterations");
        }
    }
    if (optimizer == Optimizer::adam && !(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0)) {
        throw ContractError("adam betas must lie in [0,1) and eps must be positive");
    }
}

InversionConfig InversionConfig::plain_gd() {
    InversionConfig cfg;
    cfg.learning_rate = 1.0;
    cfg.iterations = 1000;
    cfg.optimizer = Optimizer::gd;
    return cfg;
}

TracePoint best_so_far(const std::vector<TracePoint>& trace) {
    if (trace.empty()) throw ContractError("best_so_far: empty trace");
    TracePoint best = trace.front();
    for (const auto& p : trace)
        if (p.loss < best.loss) best = p;
    return best;
}

std::vector<double> best_so_far_envelope(const std::vector<TracePoint>& trace) {
    std::vector<double> env;
    env.reserve(trace.size());
    for (const auto& p : trace) env.push_back(env.empty() ? p.loss : std::min(env.back(), p.loss));
    return env;
}

LossGradient loss_and_gradient(const Generator& gen, const DistanceTarget& target, const Tensor& style) {
    Tape tape;
    Var s = tape.parameter(style);
    Var loss = target(gen.synthesize(s));
    tape.backward(loss);
    return {loss.value()[0], tape.grad(s)};
}

namespace {

void require_target(const Tensor& target, const Generator& gen) {
    const std::size_t r = gen.resolution();
    if (target.shape() != Shape{3, r, r}) {
        throw ContractError("inversion target " + shape_str(target.shape()) + " does not match generator output [3," +
                            std::to_string(r) + "," + std::to_string(r) + "]");
    }
}

}  // namespace

InversionResult invert(const Tensor& target, const Generator& gen, const DistanceSpec& spec,
                       const FeatureExtractor* extractor, const InversionConfig& cfg) {
    cfg.validate();
    require_target(target, gen);
    const DistanceTarget dist(target, spec, extractor);
    const auto& gc = gen.config();

    InversionResult result;
    result.config = cfg;
    Tensor s = Tensor::zeros({gc.layers, gc.width});
    Tensor best = s;
    double best_loss = 0.0;
    Tensor m, v;
    if (cfg.optimizer == Optimizer::adam) {
        m = Tensor::zeros(s.shape());
        v = Tensor::zeros(s.shape());
    }
    std::vector<bool> want_snapshot(cfg.iterations + 1, false);
    for (auto it : cfg.snapshot_iters) want_snapshot[it] = true;

    for (std::size_t it = 0; it <= cfg.iterations; ++it) {
        Tape tape;
        Var sv = tape.parameter(s);
        Var image = gen.synthesize(sv);
        Var loss_node = dist(image);
        const double loss = loss_node.value()[0];
        if (!std::isfinite(loss)) {
            std::vector<std::pair<std::size_t, double>> so_far;
            for (const auto& p : result.trace) so_far.emplace_back(p.iteration, p.loss);
            throw DivergenceError(it, std::move(so_far));
        }
        result.trace.push_back({it, loss});
        if (it == 0 || loss < best_loss) {
            best_loss = loss;
            best = s;
            result.best_iteration = it;
        }
        if (want_snapshot[it]) result.snapshots.push_back({it, image.value()});
        if (it == cfg.iterations) break;

        tape.backward(loss_node);
        const Tensor grad = tape.grad(sv);
        if (cfg.optimizer == Optimizer::gd) {
            for (std::size_t i = 0; i < s.size(); ++i) s[i] -= cfg.learning_rate * grad[i];
        } else {
            const double t = static_cast<double>(it + 1);
            const double c1 = 1.0 - std::pow(cfg.beta1, t);
            const double c2 = 1.0 - std::pow(cfg.beta2, t);
            for (std::size_t i = 0; i < s.size(); ++i) {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
                s[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
            }
        }
    }
    result.style = StyleVector(best);
    result.final_style = StyleVector(s);
    return result;
}

void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace) {
    out << "iteration,loss\n";
    char buf[64];
    for (const auto& p : trace) {
        auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), p.loss);
        out << p.iteration << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf)) << '\n';
    }
}

void write_trace_csv(const std::string& path, const std::vector<TracePoint>& trace) {
    std::ofstream out(path);
    if (!out) throw IoError(path, "cannot open for writing");
    write_trace_csv(out, trace);
    if (!out) throw IoError(path, "write failed");
}

std::vector<TracePoint> read_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open for reading");
    std::string line;
    if (!std::getline(in, line) || line != "iteration,loss") throw IoError(path, "missing 'iteration,loss' header");
    std::vector<TracePoint> trace;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw IoError(path, "malformed row '" + line + "'");
        TracePoint p;
        const char* b = line.data();
        auto r1 = std::from_chars(b, b + comma, p.iteration);
        auto r2 = std::from_chars(b + comma + 1, b + line.size(), p.loss);
        if (r1.ec != std::errc{} || r2.ec != std::errc{}) throw IoError(path, "malformed row '" + line + "'");
        trace.push_back(p);
    }
    return trace;
}

std::vector<CalibrationRow> calibrate_learning_rate(const Generator& gen, const DistanceSpec& spec,
                                                    const FeatureExtractor* extractor, InversionConfig base,
                                                    const std::vector<double>& learning_rates, std::size_t trials,
                                                    std::uint64_t seed) {
    std::vector<Tensor> targets;
    for (std::size_t t = 0; t < trials; ++t) targets.push_back(gen.synthesize(gen.sample_style(seed + t)));
    base.snapshot_iters.clear();
    std::vector<CalibrationRow> rows;
    for (double lr : learning_rates) {
        CalibrationRow row;
        row.learning_rate = lr;
        base.learning_rate = lr;
        std::size_t finished = 0;
        for (const auto& target : targets) {
            try {
                const auto res = invert(target, gen, spec, extractor, base);
                const double ratio = best_so_far(res.trace).loss / res.trace.front().loss;
                row.mean_ratio += ratio;
                row.worst_ratio = std::max(row.worst_ratio, ratio);
                ++finished;
            } catch (const DivergenceError&) {
                ++row.diverged;
            }
        }
        row.mean_ratio = finished ? row.mean_ratio / static_cast<double>(finished) : INFINITY;
        if (row.diverged) row.worst_ratio = INFINITY;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace sf
