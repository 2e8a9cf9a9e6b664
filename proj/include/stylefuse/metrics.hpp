#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stylefuse/tensor.hpp"

namespace sf {

/// Sum convention: both images are quantized to 8-bit and differenced in
/// 0-255 units. l1 = sum |a - b|.
double l1_error(const Tensor& a, const Tensor& b);
/// Sum convention, root of the summed squares.
double l2_error(const Tensor& a, const Tensor& b);

/// Normalized convention on [0,1] values: mean |a - b|.
double l1_normalized(const Tensor& a, const Tensor& b);
/// Normalized convention on [0,1] values: mean (a - b)^2.
double l2_normalized(const Tensor& a, const Tensor& b);

struct SsimConfig {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double data_range = 1.0;
};

/// Gaussian-window SSIM over [C,H,W] images, averaged over every window
/// position that fits entirely inside the image and over channels.
double ssim(const Tensor& a, const Tensor& b, const SsimConfig& cfg = {});

struct MetricReport {
    std::size_t count = 0;
    double l1 = 0.0;             // sum convention, 0-255 units
    double l2 = 0.0;             // sum convention, root-sum-of-squares
    double l1_normalized = 0.0;  // mean abs difference on [0,1]
    double l2_normalized = 0.0;  // mean squared difference on [0,1]
    double ssim = 0.0;

    friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// Averages every metric over the pairs (a[i], b[i]).
MetricReport evaluate(const std::vector<Tensor>& a, const std::vector<Tensor>& b);
MetricReport evaluate(const Tensor& a, const Tensor& b);

std::string report_to_json(const MetricReport& r);
MetricReport report_from_json(const std::string& text);
/// Aligned table; l1/l2 are rounded to integers, SSIM to three decimals.
std::string report_to_table(const MetricReport& r);

}  // namespace sf
