#include "stylefuse/metrics.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "stylefuse/errors.hpp"
#include "stylefuse/image_io.hpp"

namespace sf {

namespace {

void require_pair(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ContractError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                            " differ");
    }
}

}  // namespace

double l1_error(const Tensor& a, const Tensor& b) {
    require_pair(a, b, "l1_error");
    long long total = 0;
    for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(int(quantize_u8(a[i])) - int(quantize_u8(b[i])));
    return static_cast<double>(total);
}

double l2_error(const Tensor& a, const Tensor& b) {
    require_pair(a, b, "l2_error");
    long long total = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const long long d = int(quantize_u8(a[i])) - int(quantize_u8(b[i]));
        total += d * d;
    }
    return std::sqrt(static_cast<double>(total));
}

double l1_normalized(const Tensor& a, const Tensor& b) {
    require_pair(a, b, "l1_normalized");
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += std::abs(a[i] - b[i]);
    return total / static_cast<double>(a.size());
}

double l2_normalized(const Tensor& a, const Tensor& b) {
    require_pair(a, b, "l2_normalized");
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
    return total / static_cast<double>(a.size());
}

double ssim(const Tensor& a, const Tensor& b, const SsimConfig& cfg) {
    require_pair(a, b, "ssim");
    require_rank(a, 3, "ssim");
    const std::size_t ch = a.dim(0), h = a.dim(1), w = a.dim(2), win = cfg.window;
    if (win % 2 == 0 || win == 0) throw ContractError("ssim: window size must be odd");
    if (h < win || w < win) {
        throw ContractError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " smaller than " +
                            std::to_string(win) + "x" + std::to_string(win) + " window");
    }
    std::vector<double> g(win);
    double gs = 0.0;
    const double r = static_cast<double>(win / 2);
    for (std::size_t i = 0; i < win; ++i) {
        const double d = static_cast<double>(i) - r;
        g[i] = std::exp(-d * d / (2.0 * cfg.sigma * cfg.sigma));
        gs += g[i];
    }
    for (auto& v : g) v /= gs;

    const double c1 = (cfg.k1 * cfg.data_range) * (cfg.k1 * cfg.data_range);
    const double c2 = (cfg.k2 * cfg.data_range) * (cfg.k2 * cfg.data_range);
    const std::size_t oh = h - win + 1, ow = w - win + 1;
    // Horizontal pass into five moment planes, then vertical pass per output.
    std::vector<double> ha(h * ow), hb(h * ow), haa(h * ow), hbb(h * ow), hab(h * ow);
    double total = 0.0;
    for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (std::size_t k = 0; k < win; ++k) {
                    const double va = a.at(c, y, x + k), vb = b.at(c, y, x + k);
                    sa += g[k] * va;
                    sb += g[k] * vb;
                    saa += g[k] * va * va;
                    sbb += g[k] * vb * vb;
                    sab += g[k] * va * vb;
                }
                const std::size_t i = y * ow + x;
                ha[i] = sa;
                hb[i] = sb;
                haa[i] = saa;
                hbb[i] = sbb;
                hab[i] = sab;
            }
        }
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
                for (std::size_t k = 0; k < win; ++k) {
                    const std::size_t i = (y + k) * ow + x;
                    ma += g[k] * ha[i];
                    mb += g[k] * hb[i];
                    maa += g[k] * haa[i];
                    mbb += g[k] * hbb[i];
                    mab += g[k] * hab[i];
                }
                const double va = maa - ma * ma, vb = mbb - mb * mb, cov = mab - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
        }
    }
    return total / static_cast<double>(ch * oh * ow);
}

MetricReport evaluate(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    if (a.size() != b.size() || a.empty()) throw ContractError("evaluate: need equally many images, at least one");
    MetricReport r;
    r.count = a.size();
    for (std::size_t i = 0; i < a.size(); ++i) {
        r.l1 += l1_error(a[i], b[i]);
        r.l2 += l2_error(a[i], b[i]);
        r.l1_normalized += l1_normalized(a[i], b[i]);
        r.l2_normalized += l2_normalized(a[i], b[i]);
        r.ssim += ssim(a[i], b[i]);
    }
    const double n = static_cast<double>(r.count);
    r.l1 /= n;
    r.l2 /= n;
    r.l1_normalized /= n;
    r.l2_normalized /= n;
    r.ssim /= n;
    return r;
}

MetricReport evaluate(const Tensor& a, const Tensor& b) { return evaluate(std::vector{a}, std::vector{b}); }

std::string report_to_json(const MetricReport& r) {
    nlohmann::json j;
    j["count"] = r.count;
    j["sum"] = {{"l1", r.l1}, {"l2", r.l2}, {"units", "0-255, l1 = sum |d|, l2 = sqrt(sum d^2)"}};
    j["normalized"] = {{"l1", r.l1_normalized}, {"l2", r.l2_normalized}, {"units", "[0,1], l1 = mean |d|, l2 = mean d^2"}};
    j["ssim"] = r.ssim;
    return j.dump(2) + "\n";
}

MetricReport report_from_json(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        MetricReport r;
        r.count = j.at("count").get<std::size_t>();
        r.l1 = j.at("sum").at("l1").get<double>();
        r.l2 = j.at("sum").at("l2").get<double>();
        r.l1_normalized = j.at("normalized").at("l1").get<double>();
        r.l2_normalized = j.at("normalized").at("l2").get<double>();
        r.ssim = j.at("ssim").get<double>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ContractError(std::string("malformed metric report: ") + e.what());
    }
}

std::string report_to_table(const MetricReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%-12s %12s %12s %8s\n"
                  "%-12s %12.0f %12.0f %8.3f\n"
                  "%-12s %12.6f %12.6f %8s\n",
                  "convention", "l1 error", "l2 error", "SSIM", "sum", r.l1, r.l2, r.ssim, "normalized",
                  r.l1_normalized, r.l2_normalized, "");
    return std::string(buf) + "images: " + std::to_string(r.count) + "\n";
}

}  // namespace sf
