#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "stylefuse/errors.hpp"
#include "stylefuse/fixture.hpp"
#include "stylefuse/image_io.hpp"
#include "stylefuse/metrics.hpp"
#include "stylefuse/pipeline.hpp"
#include "stylefuse/weights.hpp"

namespace fs = std::filesystem;
using namespace sf;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> settings;
    std::optional<std::string> weights;
    std::optional<std::uint64_t> seed;

    PipelineConfig resolve() const {
        PipelineConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        for (const auto& kv : settings) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ContractError("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (weights) cfg.weights_path = *weights;
        if (seed) cfg.weights_seed = *seed;
        return cfg;
    }
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "key=value configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--set", c.settings, "override one configuration key (key=value)");
    cmd->add_option("--weights", c.weights, "generator weights (NTWS)");
    cmd->add_option("--weights-seed", c.seed, "seed for random generator weights");
}

std::vector<long> parse_long_list(const std::string& s) {
    std::vector<long> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stol(item));
    return out;
}

class StageFailure : public std::runtime_error {
public:
    StageFailure(const std::string& stage, const std::string& what)
        : std::runtime_error("stage '" + stage + "': " + what) {}
};

template <class F>
void stage(const std::string& name, F&& f) {
    try {
        f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageFailure(name, e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Expression transfer by layered style fusion"};
    app.require_subcommand(1);
    Common common;

    auto* init_cmd = app.add_subcommand("init-weights", "write seeded random generator weights");
    std::string init_out;
    add_common(init_cmd, common);
    init_cmd->add_option("--out", init_out, "output NTWS file")->required();

    auto* gen_cmd = app.add_subcommand("generate", "render an image from a sampled or stored style");
    add_common(gen_cmd, common);
    std::uint64_t gen_seed = 0;
    std::string gen_out, gen_style_in, gen_style_out;
    auto* gen_seed_opt = gen_cmd->add_option("--seed", gen_seed, "style sampling seed");
    auto* gen_style_opt = gen_cmd->add_option("--style", gen_style_in, "style file to render")->check(CLI::ExistingFile);
    gen_seed_opt->excludes(gen_style_opt);
    gen_cmd->add_option("--out", gen_out, "output PNG")->required();
    gen_cmd->add_option("--out-style", gen_style_out, "also write the style");

    auto* inv_cmd = app.add_subcommand("invert", "recover a style from an image");
    add_common(inv_cmd, common);
    std::string inv_image, inv_landmarks, inv_style, inv_trace, inv_rectified, inv_snap_dir;
    std::vector<std::size_t> inv_snaps;
    inv_cmd->add_option("--image", inv_image, "input PNG")->required()->check(CLI::ExistingFile);
    inv_cmd->add_option("--landmarks", inv_landmarks, "landmark JSON; omit for pre-rectified images");
    inv_cmd->add_option("--out-style", inv_style, "output style file")->required();
    inv_cmd->add_option("--trace", inv_trace, "loss trace CSV");
    inv_cmd->add_option("--out-rectified", inv_rectified, "write the rectified target PNG");
    inv_cmd->add_option("--snapshots", inv_snaps, "iterations to render");
    inv_cmd->add_option("--snapshot-dir", inv_snap_dir, "directory for snapshot PNGs");

    auto* fuse_cmd = app.add_subcommand("fuse", "combine two styles");
    add_common(fuse_cmd, common);
    std::string fuse_s1, fuse_s2, fuse_mask, fuse_out, fuse_image, fuse_scores;
    bool fuse_search = false;
    fuse_cmd->add_option("--style1", fuse_s1, "identity style")->required()->check(CLI::ExistingFile);
    fuse_cmd->add_option("--style2", fuse_s2, "expression style")->required()->check(CLI::ExistingFile);
    auto* mask_opt = fuse_cmd->add_option("--mask", fuse_mask, "expression layers, e.g. 1,2");
    auto* search_opt = fuse_cmd->add_flag("--search", fuse_search, "search contiguous blocks");
    mask_opt->excludes(search_opt);
    fuse_cmd->add_option("--out-style", fuse_out, "fused style file")->required();
    fuse_cmd->add_option("--out-image", fuse_image, "render the fused style");
    fuse_cmd->add_option("--scores", fuse_scores, "search score table CSV");

    auto* comp_cmd = app.add_subcommand("composite", "warp a generated face into the identity image");
    add_common(comp_cmd, common);
    std::string comp_identity, comp_landmarks, comp_generated, comp_out, comp_mask;
    comp_cmd->add_option("--identity", comp_identity, "identity PNG")->required()->check(CLI::ExistingFile);
    comp_cmd->add_option("--landmarks", comp_landmarks, "identity landmarks")->required()->check(CLI::ExistingFile);
    comp_cmd->add_option("--generated", comp_generated, "generated PNG")->required()->check(CLI::ExistingFile);
    comp_cmd->add_option("--out", comp_out, "output PNG")->required();
    comp_cmd->add_option("--out-mask", comp_mask, "write the blend mask");

    auto* tr_cmd = app.add_subcommand("transfer", "full pipeline on one identity/expression pair");
    add_common(tr_cmd, common);
    TransferJob job;
    bool tr_keep = false;
    std::string tr_stage_dir, tr_search_flag;
    tr_cmd->add_option("--identity", job.identity_image, "identity PNG")->required();
    tr_cmd->add_option("--expression", job.expression_image, "expression PNG")->required();
    tr_cmd->add_option("--identity-landmarks", job.identity_landmarks, "identity landmarks")->required();
    tr_cmd->add_option("--expression-landmarks", job.expression_landmarks, "expression landmarks")->required();
    tr_cmd->add_option("--out", job.output, "output PNG")->required();
    tr_cmd->add_option("--job-id", job.id, "name used in diagnostics");
    tr_cmd->add_flag("--keep-stages", tr_keep, "write every intermediate");
    tr_cmd->add_option("--stage-dir", tr_stage_dir, "directory for intermediates");

    auto* sweep_cmd = app.add_subcommand("sweep", "replace-i-layers-at-j grid");
    add_common(sweep_cmd, common);
    std::string sw_s1, sw_s2, sw_dir, sw_lengths = "1,2,4", sw_starts = "0,2,4,-1";
    sweep_cmd->add_option("--style1", sw_s1, "identity style")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--style2", sw_s2, "expression style")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--out-dir", sw_dir, "output directory")->required();
    sweep_cmd->add_option("--lengths", sw_lengths, "block lengths")->capture_default_str();
    sweep_cmd->add_option("--starts", sw_starts, "block starts, -1 for the last layers")->capture_default_str();

    auto* met_cmd = app.add_subcommand("metrics", "l1, l2 and SSIM between two images");
    std::string met_a, met_b, met_json;
    met_cmd->add_option("--a", met_a, "first PNG")->required()->check(CLI::ExistingFile);
    met_cmd->add_option("--b", met_b, "second PNG")->required()->check(CLI::ExistingFile);
    met_cmd->add_option("--json", met_json, "write the report as JSON");

    auto* fix_cmd = app.add_subcommand("fixture", "write the synthetic identity/expression pair");
    add_common(fix_cmd, common);
    std::string fix_dir;
    std::uint64_t fix_id = 1, fix_ex = 2;
    fix_cmd->add_option("--out-dir", fix_dir, "output directory")->required();
    fix_cmd->add_option("--identity-seed", fix_id, "identity style seed")->capture_default_str();
    fix_cmd->add_option("--expression-seed", fix_ex, "expression style seed")->capture_default_str();

    auto* cal_cmd = app.add_subcommand("calibrate", "compare learning rates on seeded targets");
    add_common(cal_cmd, common);
    std::vector<double> cal_lrs{0.01, 0.02, 0.05, 0.1};
    std::size_t cal_trials = 4;
    cal_cmd->add_option("--lrs", cal_lrs, "learning rates")->capture_default_str()->delimiter(',');
    cal_cmd->add_option("--trials", cal_trials, "targets per rate")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        PipelineConfig cfg;
        stage("config", [&] { cfg = common.resolve(); });

        if (*init_cmd) {
            stage("init-weights", [&] { save_ntws(init_out, init_random_weights(cfg.generator, cfg.weights_seed)); });
        } else if (*gen_cmd) {
            Models models;
            stage("load", [&] { models = build_models(cfg); });
            stage("generate", [&] {
                const StyleVector s = gen_style_in.empty() ? models.generator->sample_style(gen_seed) : load_style(gen_style_in);
                save_png(gen_out, models.generator->synthesize(s));
                if (!gen_style_out.empty()) save_style(gen_style_out, s);
            });
        } else if (*inv_cmd) {
            Models models;
            std::optional<LandmarkSet> lm;
            Tensor image;
            stage("load", [&] {
                if (!inv_snaps.empty()) cfg.inversion.snapshot_iters = inv_snaps;
                models = build_models(cfg);
                image = load_png(inv_image);
                if (!inv_landmarks.empty()) lm = load_landmarks(inv_landmarks);
            });
            stage("invert", [&] {
                const auto inv = invert_image(image, lm ? &*lm : nullptr, models, cfg);
                save_style(inv_style, inv.result.style);
                if (!inv_trace.empty()) write_trace_csv(inv_trace, inv.result.trace);
                if (!inv_rectified.empty()) save_png(inv_rectified, inv.target);
                if (!inv.result.snapshots.empty()) {
                    const fs::path dir = inv_snap_dir.empty() ? fs::path(".") : fs::path(inv_snap_dir);
                    fs::create_directories(dir);
                    for (const auto& snap : inv.result.snapshots) {
                        save_png((dir / ("iter_" + std::to_string(snap.iteration) + ".png")).string(), snap.image);
                    }
                }
                const auto best = best_so_far(inv.result.trace);
                std::cout << "best loss " << best.loss << " at iteration " << best.iteration << " (initial "
                          << inv.result.trace.front().loss << ")\n";
            });
        } else if (*fuse_cmd) {
            Models models;
            StyleVector s1, s2;
            stage("load", [&] {
                if (fuse_search) cfg.fusion = FusionMode::search;
                if (!fuse_mask.empty()) {
                    cfg.fusion = FusionMode::fixed;
                    cfg.mask = fuse_mask;
                }
                models = build_models(cfg);
                s1 = load_style(fuse_s1);
                s2 = load_style(fuse_s2);
            });
            stage("fuse", [&] {
                const auto fused = fuse_styles(s1, s2, models, cfg);
                save_style(fuse_out, fused.style);
                if (!fuse_image.empty()) save_png(fuse_image, models.generator->synthesize(fused.style));
                if (!fuse_scores.empty() && fused.search) write_score_csv(fuse_scores, fused.search->table);
                std::cout << "expression layers: " << fused.mask.str() << "\n";
            });
        } else if (*comp_cmd) {
            stage("composite", [&] {
                const auto result = composite(load_png(comp_identity), load_landmarks(comp_landmarks),
                                              load_png(comp_generated), cfg);
                save_png(comp_out, result.image);
                if (!comp_mask.empty()) {
                    Tensor m({3, result.mask.height(), result.mask.width()});
                    for (std::size_t c = 0; c < 3; ++c)
                        for (std::size_t y = 0; y < m.dim(1); ++y)
                            for (std::size_t x = 0; x < m.dim(2); ++x) m.at(c, y, x) = result.mask(y, x);
                    save_png(comp_mask, m);
                }
            });
        } else if (*tr_cmd) {
            if (tr_keep) cfg.keep_stages = true;
            if (!tr_stage_dir.empty()) cfg.stage_dir = tr_stage_dir;
            Models models;
            stage("load", [&] { models = build_models(cfg); });
            const auto result = run_transfer(job, cfg, models);
            std::cout << "expression layers: " << result.fusion.mask.str() << "\nwrote " << job.output << "\n";
        } else if (*sweep_cmd) {
            stage("sweep", [&] {
                const Models models = build_models(cfg);
                std::vector<std::size_t> lengths;
                for (long v : parse_long_list(sw_lengths)) {
                    if (v < 1) throw ContractError("sweep lengths must be positive");
                    lengths.push_back(static_cast<std::size_t>(v));
                }
                const auto starts = parse_long_list(sw_starts);
                const auto grid = sweep(load_style(sw_s1), load_style(sw_s2), *models.generator, lengths, starts);
                fs::create_directories(sw_dir);
                for (std::size_t a = 0; a < lengths.size(); ++a) {
                    for (std::size_t b = 0; b < starts.size(); ++b) {
                        const std::string name = "replace_" + std::to_string(lengths[a]) + "_at_" +
                                                 (starts[b] < 0 ? std::string("end") : std::to_string(starts[b])) + ".png";
                        save_png((fs::path(sw_dir) / name).string(), grid[a][b]);
                    }
                }
            });
        } else if (*met_cmd) {
            stage("metrics", [&] {
                const auto report = evaluate(load_png(met_a), load_png(met_b));
                std::cout << report_to_table(report);
                if (!met_json.empty()) {
                    std::ofstream out(met_json);
                    out << report_to_json(report);
                    if (!out) throw IoError(met_json, "write failed");
                }
            });
        } else if (*fix_cmd) {
            stage("fixture", [&] {
                const Models models = build_models(cfg);
                write_fixture(fix_dir, make_fixture(*models.generator, fix_id, fix_ex));
            });
        } else if (*cal_cmd) {
            stage("calibrate", [&] {
                const Models models = build_models(cfg);
                const auto rows = calibrate_learning_rate(*models.generator, cfg.distance, models.extractor_ptr(),
                                                          cfg.inversion, cal_lrs, cal_trials, 100);
                std::cout << "learning_rate,mean_ratio,worst_ratio,diverged\n";
                for (const auto& r : rows) {
                    std::cout << r.learning_rate << ',' << r.mean_ratio << ',' << r.worst_ratio << ',' << r.diverged << '\n';
                }
            });
        }
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const StageFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
