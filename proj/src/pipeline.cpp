#include "stylefuse/pipeline.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stylefuse/errors.hpp"
#include "stylefuse/image_io.hpp"
#include "stylefuse/weights.hpp"

namespace sf {

namespace fs = std::filesystem;

void save_style(const std::string& path, const StyleVector& s) {
    WeightStore store;
    store.insert("style", s.tensor());
    save_ntws(path, store);
}

StyleVector load_style(const std::string& path) {
    const WeightStore store = load_ntws(path);
    if (!store.contains("style")) throw IoError(path, "no 'style' entry");
    const Tensor& t = store.get("style");
    if (t.rank() != 2) throw IoError(path, "'style' entry has shape " + shape_str(t.shape()) + ", expected [L,D]");
    try {
        return StyleVector(t);
    } catch (const Error& e) {
        throw IoError(path, e.what());
    }
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* end = value.data() + value.size();
    auto [p, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || p != end) throw ContractError("config key '" + key + "': cannot parse '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ContractError("config key '" + key + "': expected true or false, got '" + value + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, trim(item)));
    return out;
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::string& raw) {
    const std::string value = trim(raw);
    if (key == "weights") {
        weights_path = value;
    } else if (key == "seed") {
        weights_seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "noise_seed") {
        generator.noise_seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "distance") {
        distance.kind = parse_distance_kind(value);
    } else if (key == "tap_depth") {
        distance.tap_depth = parse_number<std::size_t>(key, value);
    } else if (key == "extractor_seed") {
        extractor_seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "extractor_stages") {
        extractor_stages = parse_number<std::size_t>(key, value);
    } else if (key == "optimizer") {
        inversion.optimizer = parse_optimizer(value);
    } else if (key == "learning_rate") {
        inversion.learning_rate = parse_number<double>(key, value);
    } else if (key == "iterations") {
        inversion.iterations = parse_number<std::size_t>(key, value);
    } else if (key == "fusion") {
        if (value == "fixed") fusion = FusionMode::fixed;
        else if (value == "search") fusion = FusionMode::search;
        else throw ContractError("config key 'fusion': expected fixed or search, got '" + value + "'");
    } else if (key == "mask") {
        mask = value;
    } else if (key == "lambda") {
        search.lambda = parse_number<double>(key, value);
    } else if (key == "block_lengths") {
        search.block_lengths = value == "all" ? std::vector<std::size_t>{} : parse_size_list(key, value);
    } else if (key == "normalize_d2") {
        search.normalize_d2 = parse_bool(key, value);
    } else if (key == "search_distance") {
        search.d1_spec.kind = search.d2_spec.kind = parse_distance_kind(value);
    } else if (key == "eye_to_eye_scale") {
        crop.eye_to_eye_scale = parse_number<double>(key, value);
    } else if (key == "eye_to_mouth_scale") {
        crop.eye_to_mouth_scale = parse_number<double>(key, value);
    } else if (key == "feather_fraction") {
        feather_fraction = parse_number<double>(key, value);
    } else if (key == "keep_stages") {
        keep_stages = parse_bool(key, value);
    } else if (key == "stage_dir") {
        stage_dir = value;
    } else {
        throw ContractError("unknown config key '" + key + "'");
    }
}

PipelineConfig parse_config(const std::string& text, PipelineConfig cfg) {
    std::stringstream ss(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(ss, line)) {
        ++number;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ContractError("config line " + std::to_string(number) + ": expected key=value, got '" + line + "'");
        }
        cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return cfg;
}

PipelineConfig load_config(const std::string& path, PipelineConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open for reading");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str(), std::move(base));
    } catch (const ContractError& e) {
        throw IoError(path, e.what());
    }
}

Models build_models(const PipelineConfig& cfg) {
    Models m;
    if (cfg.weights_path.empty()) {
        cfg.generator.validate();
        m.generator = std::make_shared<const Generator>(cfg.generator, init_random_weights(cfg.generator, cfg.weights_seed));
    } else {
        WeightStore w = load_ntws(cfg.weights_path);
        const GeneratorConfig gc = infer_config(w, cfg.generator);
        m.generator = std::make_shared<const Generator>(gc, std::move(w));
    }
    const bool needs_extractor = cfg.distance.kind == DistanceKind::feature ||
                                 (cfg.fusion == FusionMode::search && (cfg.search.d1_spec.kind == DistanceKind::feature ||
                                                                       cfg.search.d2_spec.kind == DistanceKind::feature));
    if (needs_extractor) m.extractor = build_extractor(cfg.extractor_seed, cfg.extractor_stages);
    return m;
}

namespace {

CropConfig crop_for(const PipelineConfig& cfg, const Generator& gen) {
    CropConfig c = cfg.crop;
    c.output_resolution = gen.resolution();
    return c;
}

}  // namespace

ImageInversion invert_image(const Tensor& image, const LandmarkSet* landmarks, const Models& models,
                            const PipelineConfig& cfg) {
    const Generator& gen = *models.generator;
    ImageInversion out;
    out.target = landmarks ? rectify(image, *landmarks, crop_for(cfg, gen)).image : image;
    out.result = invert(out.target, gen, cfg.distance, models.extractor_ptr(), cfg.inversion);
    return out;
}

FusionOutcome fuse_styles(const StyleVector& identity, const StyleVector& expression, const Models& models,
                          const PipelineConfig& cfg) {
    const Generator& gen = *models.generator;
    const std::size_t layers = identity.layers();
    FusionOutcome out;
    if (cfg.fusion == FusionMode::search) {
        FusionSearchConfig sc = cfg.search;
        if (sc.block_lengths.empty()) sc.block_lengths = FusionSearchConfig::all_lengths(layers);
        auto result = search(identity, expression, gen.synthesize(identity), gen.synthesize(expression), gen, sc,
                             models.extractor_ptr());
        out.mask = result.mask;
        out.search = std::move(result);
    } else {
        out.mask = cfg.mask.empty() ? fixed_expression_mask(layers) : FusionMask::parse(layers, cfg.mask);
    }
    out.style = fuse(identity, expression, out.mask);
    return out;
}

CompositeResult composite(const Tensor& identity_image, const LandmarkSet& identity_landmarks,
                          const Tensor& generated, const PipelineConfig& cfg) {
    require_rank(identity_image, 3, "composite");
    require_rank(generated, 3, "composite");
    const std::size_t h = identity_image.dim(1), w = identity_image.dim(2);
    CropConfig crop = cfg.crop;
    crop.output_resolution = generated.dim(2);
    double side = 0.0;
    const AffineTransform to_crop = rectify_transform(identity_landmarks, crop, &side);
    const LandmarkSet generated_landmarks =
        transform_landmarks(to_crop, identity_landmarks, generated.dim(2), generated.dim(1));

    CompositeResult out;
    out.warp = estimate_affine(anchor_points(generated_landmarks), anchor_points(identity_landmarks));
    out.warped = warp_affine(generated, out.warp, w, h);
    out.hull = hull_mask(identity_landmarks.points, w, h);
    const Mask soft = feather(out.hull, cfg.feather_fraction * side);
    out.mask = Mask(h, w);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.mask(y, x) = soft(y, x) * out.hull(y, x);
    out.image = blend(identity_image, out.warped, out.mask);
    return out;
}

namespace {

Tensor mask_image(const Mask& m) {
    Tensor t({3, m.height(), m.width()});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < m.height(); ++y)
            for (std::size_t x = 0; x < m.width(); ++x) t.at(c, y, x) = m(y, x);
    return t;
}

class StageRunner {
public:
    StageRunner(std::string job, bool keep) : job_(std::move(job)), keep_(keep) {}

    template <class F>
    auto run(const std::string& stage, F&& f) {
        try {
            return f();
        } catch (const StageError&) {
            cleanup();
            throw;
        } catch (const std::exception& e) {
            cleanup();
            throw StageError(stage, job_, e.what());
        }
    }

    void wrote(const std::string& path) { written_.push_back(path); }
    const std::vector<std::string>& written() const { return written_; }

private:
    void cleanup() {
        if (keep_) return;
        std::error_code ec;
        for (const auto& p : written_) fs::remove(p, ec);
        written_.clear();
    }

    std::string job_;
    bool keep_;
    std::vector<std::string> written_;
};

}  // namespace

TransferResult run_transfer(const TransferJob& job, const PipelineConfig& cfg, const Models& models) {
    const Generator& gen = *models.generator;
    StageRunner stages(job.id, cfg.keep_stages);
    TransferResult out;

    struct Inputs {
        Tensor i1, i2;
        LandmarkSet l1, l2;
    };
    const Inputs in = stages.run("load", [&] {
        for (const auto* p : {&job.identity_image, &job.expression_image, &job.identity_landmarks,
                              &job.expression_landmarks}) {
            if (p->empty()) throw ContractError("transfer job is missing an input path");
            if (!fs::exists(*p)) throw IoError(*p, "no such file");
        }
        return Inputs{load_png(job.identity_image), load_png(job.expression_image),
                      load_landmarks(job.identity_landmarks), load_landmarks(job.expression_landmarks)};
    });

    fs::path stage_dir;
    if (cfg.keep_stages) {
        stage_dir = !cfg.stage_dir.empty() ? fs::path(cfg.stage_dir)
                    : !job.output.empty()  ? fs::path(job.output).parent_path() /
                                                (fs::path(job.output).stem().string() + "_stages")
                                           : fs::path(job.id + "_stages");
        stages.run("load", [&] {
            fs::create_directories(stage_dir);
            return 0;
        });
    }
    auto keep = [&](const std::string& name, auto&& write) {
        if (!cfg.keep_stages) return;
        const std::string path = (stage_dir / name).string();
        write(path);
        stages.wrote(path);
    };

    stages.run("normalize", [&] {
        const CropConfig crop = crop_for(cfg, gen);
        out.identity_rectified = rectify(in.i1, in.l1, crop).image;
        out.expression_rectified = rectify(in.i2, in.l2, crop).image;
        keep("a_identity_rectified.png", [&](const std::string& p) { save_png(p, out.identity_rectified); });
        keep("a_expression_rectified.png", [&](const std::string& p) { save_png(p, out.expression_rectified); });
        return 0;
    });
    stages.run("invert-identity", [&] {
        out.identity_inversion = invert(out.identity_rectified, gen, cfg.distance, models.extractor_ptr(), cfg.inversion);
        keep("b_identity_style.ntws", [&](const std::string& p) { save_style(p, out.identity_inversion.style); });
        keep("b_identity_trace.csv", [&](const std::string& p) { write_trace_csv(p, out.identity_inversion.trace); });
        return 0;
    });
    stages.run("invert-expression", [&] {
        out.expression_inversion =
            invert(out.expression_rectified, gen, cfg.distance, models.extractor_ptr(), cfg.inversion);
        keep("b_expression_style.ntws", [&](const std::string& p) { save_style(p, out.expression_inversion.style); });
        keep("b_expression_trace.csv", [&](const std::string& p) { write_trace_csv(p, out.expression_inversion.trace); });
        return 0;
    });
    stages.run("fuse", [&] {
        out.fusion = fuse_styles(out.identity_inversion.style, out.expression_inversion.style, models, cfg);
        keep("c_fused_style.ntws", [&](const std::string& p) { save_style(p, out.fusion.style); });
        if (out.fusion.search) {
            keep("c_scores.csv", [&](const std::string& p) { write_score_csv(p, out.fusion.search->table); });
        }
        return 0;
    });
    stages.run("synthesize", [&] {
        out.generated = quantize(gen.synthesize(out.fusion.style));
        keep("c_generated.png", [&](const std::string& p) { save_png(p, out.generated); });
        return 0;
    });
    stages.run("composite", [&] {
        out.composite = composite(in.i1, in.l1, out.generated, cfg);
        keep("d_warped.png", [&](const std::string& p) { save_png(p, out.composite.warped); });
        keep("d_mask.png", [&](const std::string& p) { save_png(p, mask_image(out.composite.mask)); });
        return 0;
    });
    if (!job.output.empty()) {
        stages.run("write", [&] {
            if (auto parent = fs::path(job.output).parent_path(); !parent.empty()) fs::create_directories(parent);
            stages.wrote(job.output);
            save_png(job.output, out.composite.image);
            return 0;
        });
    }
    out.written = stages.written();
    return out;
}

}  // namespace sf
