#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "stylefuse/generator.hpp"
#include "stylefuse/perceptual.hpp"

namespace sf {

enum class Optimizer { gd, adam };

std::string to_string(Optimizer opt);
Optimizer parse_optimizer(const std::string& name);

struct InversionConfig {
    double learning_rate = 0.05;
    std::size_t iterations = 250;
    std::vector<std::size_t> snapshot_iters;
    Optimizer optimizer = Optimizer::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;

    /// Plain gradient descent, lr = 1, 1000 iterations.
    static InversionConfig plain_gd();
};

struct TracePoint {
    std::size_t iteration = 0;
    double loss = 0.0;
    friend bool operator==(const TracePoint&, const TracePoint&) = default;
};

struct Snapshot {
    std::size_t iteration = 0;
    Tensor image;
};

struct InversionResult {
    /// Iterate with the lowest recorded loss.
    StyleVector style;
    /// Iterate after the last update.
    StyleVector final_style;
    /// Loss of every iterate 0..iterations, including the initial zero style.
    std::vector<TracePoint> trace;
    std::vector<Snapshot> snapshots;
    std::size_t best_iteration = 0;
    /// Settings the run used.
    InversionConfig config;
};

/// Minimum-loss entry; ties go to the earliest iteration.
TracePoint best_so_far(const std::vector<TracePoint>& trace);

/// Running minimum of the trace losses.
std::vector<double> best_so_far_envelope(const std::vector<TracePoint>& trace);

struct LossGradient {
    double loss = 0.0;
    Tensor gradient;  // [L,D]
};

/// D(g(s), target) and its gradient with respect to s.
LossGradient loss_and_gradient(const Generator& gen, const DistanceTarget& target, const Tensor& style);

/// Solves argmin_s D(g(s), target) from the zero style.
///
/// Throws ContractError on a resolution mismatch and DivergenceError (with
/// the trace so far) when a loss turns non-finite.
InversionResult invert(const Tensor& target, const Generator& gen, const DistanceSpec& spec,
                       const FeatureExtractor* extractor, const InversionConfig& cfg);

/// "iteration,loss" header plus one row per trace entry.
void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace);
void write_trace_csv(const std::string& path, const std::vector<TracePoint>& trace);
std::vector<TracePoint> read_trace_csv(const std::string& path);

struct CalibrationRow {
    double learning_rate = 0.0;
    double mean_ratio = 0.0;   // mean over trials of best loss / initial loss
    double worst_ratio = 0.0;
    std::size_t diverged = 0;
};

/// Runs self-render trials (targets g(s*) for sampled s*) at each candidate
/// learning rate and reports best-to-initial loss ratios. Rows follow the
/// order of `learning_rates`.
std::vector<CalibrationRow> calibrate_learning_rate(const Generator& gen, const DistanceSpec& spec,
                                                    const FeatureExtractor* extractor, InversionConfig base,
                                                    const std::vector<double>& learning_rates, std::size_t trials,
                                                    std::uint64_t seed);

}  // namespace sf
