#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stylefuse/fusion.hpp"
#include "stylefuse/generator.hpp"
#include "stylefuse/geometry.hpp"
#include "stylefuse/inversion.hpp"
#include "stylefuse/perceptual.hpp"

namespace sf {

/// Style files are NTWS containers holding one [L,D] entry named "style".
void save_style(const std::string& path, const StyleVector& s);
StyleVector load_style(const std::string& path);

enum class FusionMode { fixed, search };

struct PipelineConfig {
    GeneratorConfig generator = GeneratorConfig::desk();
    /// NTWS generator weights; empty means seeded random weights.
    std::string weights_path;
    std::uint64_t weights_seed = 0;

    DistanceSpec distance = DistanceSpec::l2();
    std::uint64_t extractor_seed = 0;
    std::size_t extractor_stages = 3;

    InversionConfig inversion;

    FusionMode fusion = FusionMode::fixed;
    /// Explicit expression layers ("1,2"); empty means the fixed default.
    std::string mask;
    /// block_lengths empty means every length.
    FusionSearchConfig search;

    CropConfig crop;
    /// Feather sigma as a fraction of the identity crop side.
    double feather_fraction = 0.03;

    bool keep_stages = false;
    /// Defaults to "<output stem>_stages" next to the output.
    std::string stage_dir;

    /// Applies one key=value setting; throws ContractError for unknown keys
    /// or unparsable values.
    void set(const std::string& key, const std::string& value);
};

/// Flat key=value lines; '#' starts a comment. Settings are applied on top
/// of `base`.
PipelineConfig parse_config(const std::string& text, PipelineConfig base = {});
PipelineConfig load_config(const std::string& path, PipelineConfig base = {});

struct Models {
    std::shared_ptr<const Generator> generator;
    std::optional<FeatureExtractor> extractor;

    const FeatureExtractor* extractor_ptr() const { return extractor ? &*extractor : nullptr; }
};

Models build_models(const PipelineConfig& cfg);

/// Rectifies `image` with `landmarks` (when given) to the generator
/// resolution and inverts it.
struct ImageInversion {
    Tensor target;
    InversionResult result;
};
ImageInversion invert_image(const Tensor& image, const LandmarkSet* landmarks, const Models& models,
                            const PipelineConfig& cfg);

struct FusionOutcome {
    FusionMask mask;
    StyleVector style;
    std::optional<FusionSearchResult> search;
};
/// Fixed or searched mask. The search scores candidates against g(identity)
/// and g(expression).
FusionOutcome fuse_styles(const StyleVector& identity, const StyleVector& expression, const Models& models,
                          const PipelineConfig& cfg);

struct CompositeResult {
    Tensor image;
    Tensor warped;
    Mask hull;
    Mask mask;
    AffineTransform warp;
};
/// Warps the generated face back onto the identity image and blends it in
/// under the feathered landmark hull. The generated image's landmarks are
/// the identity landmarks carried through the identity rectification.
CompositeResult composite(const Tensor& identity_image, const LandmarkSet& identity_landmarks,
                          const Tensor& generated, const PipelineConfig& cfg);

struct TransferJob {
    std::string id = "job";
    std::string identity_image;
    std::string expression_image;
    std::string identity_landmarks;
    std::string expression_landmarks;
    /// Empty: nothing is written.
    std::string output;
};

struct TransferResult {
    Tensor identity_rectified;
    Tensor expression_rectified;
    InversionResult identity_inversion;
    InversionResult expression_inversion;
    FusionOutcome fusion;
    /// g(fused style) after 8-bit quantization.
    Tensor generated;
    CompositeResult composite;
    std::vector<std::string> written;
};

/// Runs normalize, invert, fuse, synthesize, warp and blend. Failures are
/// rethrown as StageError; files written before the failure are removed
/// unless keep_stages is set.
TransferResult run_transfer(const TransferJob& job, const PipelineConfig& cfg, const Models& models);

}  // namespace sf
