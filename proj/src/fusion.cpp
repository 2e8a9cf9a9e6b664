#include "stylefuse/fusion.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>

#include "stylefuse/errors.hpp"

namespace sf {

FusionMask::FusionMask(std::size_t total_layers, std::set<std::size_t> from_expression)
    : total_(total_layers), layers_(std::move(from_expression)) {
    for (auto l : layers_) {
        if (l >= total_) {
            throw ContractError("mask layer " + std::to_string(l) + " outside [0," + std::to_string(total_) + ")");
        }
    }
}

FusionMask FusionMask::contiguous(std::size_t total_layers, std::size_t start, std::size_t length) {
    if (length == 0 || start + length > total_layers) {
        throw ContractError("contiguous block start " + std::to_string(start) + " length " + std::to_string(length) +
                            " outside " + std::to_string(total_layers) + " layers");
    }
    std::set<std::size_t> s;
    for (std::size_t i = start; i < start + length; ++i) s.insert(i);
    return FusionMask(total_layers, std::move(s));
}

FusionMask FusionMask::parse(std::size_t total_layers, const std::string& list) {
    std::set<std::size_t> s;
    std::size_t pos = 0;
    while (pos < list.size()) {
        auto comma = list.find(',', pos);
        if (comma == std::string::npos) comma = list.size();
        std::size_t v = 0;
        const char* b = list.data() + pos;
        const char* e = list.data() + comma;
        while (b < e && *b == ' ') ++b;
        while (e > b && e[-1] == ' ') --e;
        auto [p, ec] = std::from_chars(b, e, v);
        if (ec != std::errc{} || p != e) throw ContractError("invalid mask entry in '" + list + "'");
        s.insert(v);
        pos = comma + 1;
    }
    return FusionMask(total_layers, std::move(s));
}

FusionMask FusionMask::complement() const {
    std::set<std::size_t> s;
    for (std::size_t i = 0; i < total_; ++i)
        if (!layers_.contains(i)) s.insert(i);
    return FusionMask(total_, std::move(s));
}

std::string FusionMask::str() const {
    std::string out;
    for (auto l : layers_) {
        if (!out.empty()) out += ",";
        out += std::to_string(l);
    }
    return out;
}

StyleVector fuse(const StyleVector& identity, const StyleVector& expression, const FusionMask& mask) {
    if (identity.tensor().shape() != expression.tensor().shape()) {
        throw ContractError("fuse: style shapes " + shape_str(identity.tensor().shape()) + " and " +
                            shape_str(expression.tensor().shape()) + " differ");
    }
    if (mask.total_layers() != identity.layers()) {
        throw ContractError("fuse: mask covers " + std::to_string(mask.total_layers()) + " layers, styles have " +
                            std::to_string(identity.layers()));
    }
    StyleVector out = identity;
    for (auto l : mask.from_expression())
        for (std::size_t j = 0; j < identity.width(); ++j) out(l, j) = expression(l, j);
    return out;
}

FusionMask fixed_expression_mask(std::size_t layers) {
    if (layers < 5) throw ContractError("fixed expression mask needs at least 5 layers, got " + std::to_string(layers));
    const std::size_t first = 3 * layers / 18;
    return FusionMask(layers, {first, first + 1});
}

std::vector<std::size_t> FusionSearchConfig::all_lengths(std::size_t layers) {
    std::vector<std::size_t> out;
    for (std::size_t i = 1; i <= layers; ++i) out.push_back(i);
    return out;
}

FusionSearchResult search(const StyleVector& identity, const StyleVector& expression, const Tensor& identity_image,
                          const Tensor& expression_image, const Generator& gen, const FusionSearchConfig& cfg,
                          const FeatureExtractor* extractor) {
    return search(identity, expression, identity_image, expression_image,
                  Renderer([&gen](const StyleVector& s) { return gen.synthesize(s); }), cfg, extractor);
}

FusionSearchResult search(const StyleVector& identity, const StyleVector& expression, const Tensor& identity_image,
                          const Tensor& expression_image, const Renderer& render, const FusionSearchConfig& cfg,
                          const FeatureExtractor* extractor) {
    const std::size_t layers = identity.layers();
    if (expression.tensor().shape() != identity.tensor().shape()) throw ContractError("search: style shapes differ");
    if (!(cfg.lambda >= 0.0)) throw ContractError("search: lambda must be non-negative");

    std::vector<std::size_t> lengths = cfg.block_lengths;
    if (lengths.empty()) throw ContractError("search: no block lengths to try");
    std::sort(lengths.begin(), lengths.end());
    lengths.erase(std::unique(lengths.begin(), lengths.end()), lengths.end());
    for (auto len : lengths) {
        if (len < 1 || len > layers) {
            throw ContractError("search: block length " + std::to_string(len) + " outside [1," + std::to_string(layers) +
                                "]");
        }
    }

    const DistanceTarget d1(identity_image, cfg.d1_spec, extractor);
    const DistanceTarget d2(expression_image, cfg.d2_spec, extractor);

    FusionSearchResult result;
    for (auto len : lengths) {
        for (std::size_t start = 0; start + len <= layers; ++start) {
            const Tensor image = render(fuse(identity, expression, FusionMask::contiguous(layers, start, len)));
            result.table.push_back({len, start, d1(image), d2(image), 0.0});
        }
    }

    double d2_scale = 1.0;
    if (cfg.normalize_d2) {
        double mean = 0.0;
        for (const auto& r : result.table) mean += r.d2;
        mean /= static_cast<double>(result.table.size());
        if (mean > 0.0) d2_scale = 1.0 / mean;
    }
    std::size_t best = 0;
    for (std::size_t i = 0; i < result.table.size(); ++i) {
        auto& r = result.table[i];
        r.objective = r.d1 + cfg.lambda * (r.d2 * d2_scale);
        if (r.objective < result.table[best].objective) best = i;
    }
    const auto& win = result.table[best];
    result.mask = FusionMask::contiguous(layers, win.start, win.block_length);
    result.objective = win.objective;
    return result;
}

void write_score_csv(std::ostream& out, const std::vector<ScoreRow>& table) {
    out << "block_length,start,d1,d2,objective\n";
    auto num = [](double v) {
        char buf[64];
        auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, end);
    };
    for (const auto& r : table) {
        out << r.block_length << ',' << r.start << ',' << num(r.d1) << ',' << num(r.d2) << ',' << num(r.objective)
            << '\n';
    }
}

void write_score_csv(const std::string& path, const std::vector<ScoreRow>& table) {
    std::ofstream out(path);
    if (!out) throw IoError(path, "cannot open for writing");
    write_score_csv(out, table);
    if (!out) throw IoError(path, "write failed");
}

FusionMask sweep_cell_mask(std::size_t layers, std::size_t length, long start) {
    const std::string cell = "sweep cell (i=" + std::to_string(length) + ", j=" + std::to_string(start) + ")";
    if (length < 1 || length > layers) throw ContractError(cell + ": length outside [1," + std::to_string(layers) + "]");
    if (start < -1) throw ContractError(cell + ": start must be >= -1");
    const std::size_t first = start == -1 ? layers - length : static_cast<std::size_t>(start);
    if (first + length > layers) {
        throw ContractError(cell + ": block runs past layer " + std::to_string(layers - 1));
    }
    return FusionMask::contiguous(layers, first, length);
}

std::vector<std::vector<Tensor>> sweep(const StyleVector& identity, const StyleVector& expression, const Generator& gen,
                                       const std::vector<std::size_t>& lengths, const std::vector<long>& starts) {
    const std::size_t layers = identity.layers();
    std::vector<std::vector<FusionMask>> masks;
    for (auto len : lengths) {
        masks.emplace_back();
        for (auto start : starts) masks.back().push_back(sweep_cell_mask(layers, len, start));
    }
    std::vector<std::vector<Tensor>> grid;
    for (const auto& row : masks) {
        grid.emplace_back();
        for (const auto& m : row) grid.back().push_back(gen.synthesize(fuse(identity, expression, m)));
    }
    return grid;
}

}  // namespace sf
