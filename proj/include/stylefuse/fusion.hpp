#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "stylefuse/generator.hpp"
#include "stylefuse/perceptual.hpp"

namespace sf {

/// Layers whose style rows come from the expression style; all others come
/// from the identity style. Indices are 0-based, so the conventional
/// "layers 4 and 5" of an 18-layer style are {3, 4} here.
class FusionMask {
public:
    FusionMask() = default;
    FusionMask(std::size_t total_layers, std::set<std::size_t> from_expression);

    /// Layers [start, start + length).
    static FusionMask contiguous(std::size_t total_layers, std::size_t start, std::size_t length);
    /// Parses "3,4" style lists.
    static FusionMask parse(std::size_t total_layers, const std::string& list);

    std::size_t total_layers() const noexcept { return total_; }
    const std::set<std::size_t>& from_expression() const noexcept { return layers_; }
    bool takes_expression(std::size_t layer) const { return layers_.contains(layer); }

    FusionMask complement() const;
    std::string str() const;

    friend bool operator==(const FusionMask&, const FusionMask&) = default;

private:
    std::size_t total_ = 0;
    std::set<std::size_t> layers_;
};

/// Row i from `expression` when the mask selects i, else from `identity`.
StyleVector fuse(const StyleVector& identity, const StyleVector& expression, const FusionMask& mask);

/// Two adjacent layers starting at floor(3L/18): {3,4} for L = 18, {1,2} for L = 8.
FusionMask fixed_expression_mask(std::size_t layers);

struct FusionSearchConfig {
    double lambda = 1.0;
    DistanceSpec d1_spec = DistanceSpec::feature();
    DistanceSpec d2_spec = DistanceSpec::feature();
    bool normalize_d2 = true;
    std::vector<std::size_t> block_lengths;  // must be non-empty, each in [1, L]

    /// Every block length 1..L.
    static std::vector<std::size_t> all_lengths(std::size_t layers);
};

struct ScoreRow {
    std::size_t block_length = 0;
    std::size_t start = 0;
    double d1 = 0.0;
    double d2 = 0.0;
    double objective = 0.0;
};

struct FusionSearchResult {
    FusionMask mask;
    double objective = 0.0;
    /// One row per candidate, ordered by (block_length, start).
    std::vector<ScoreRow> table;
};

/// Exhaustive search over contiguous expression blocks. Each candidate is
/// regenerated and scored D1(g(s0), I1) + lambda * D2(g(s0), I2), where D2 is
/// divided by its mean over all candidates when normalize_d2 is set. The
/// minimum wins; ties go to the shorter block, then the earlier start.
FusionSearchResult search(const StyleVector& identity, const StyleVector& expression, const Tensor& identity_image,
                          const Tensor& expression_image, const Generator& gen, const FusionSearchConfig& cfg,
                          const FeatureExtractor* extractor);

using Renderer = std::function<Tensor(const StyleVector&)>;

/// As above with any style-to-image map in place of the generator.
FusionSearchResult search(const StyleVector& identity, const StyleVector& expression, const Tensor& identity_image,
                          const Tensor& expression_image, const Renderer& render, const FusionSearchConfig& cfg,
                          const FeatureExtractor* extractor);

void write_score_csv(std::ostream& out, const std::vector<ScoreRow>& table);
void write_score_csv(const std::string& path, const std::vector<ScoreRow>& table);

/// Replace-i-layers-starting-at-j grid. A start of -1 means the last i
/// layers. grid[a][b] corresponds to lengths[a], starts[b].
std::vector<std::vector<Tensor>> sweep(const StyleVector& identity, const StyleVector& expression, const Generator& gen,
                                       const std::vector<std::size_t>& lengths, const std::vector<long>& starts);

/// Mask for one sweep cell; throws ContractError naming the cell when it
/// falls outside the style.
FusionMask sweep_cell_mask(std::size_t layers, std::size_t length, long start);

}  // namespace sf
