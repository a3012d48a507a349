#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "lfvit/image_io.hpp"
#include "lfvit/report.hpp"
#include "lfvit/selftest.hpp"

namespace {

using lfvit::Json;

struct CliOptions {
    std::string model_path;
    std::vector<std::string> image_paths;
    std::optional<double> eta, alpha, beta;
    std::optional<int> region_m;
    std::optional<std::string> focus_mode;
    std::uint64_t seed = 42;
    std::string out_path;  // empty = stdout (infer/flops/bench), "." default for heatmap
    bool emit_attention = false;
    int workers = 0;
    // gen-weights geometry
    lfvit::ModelConfig gen_cfg;
};

void apply_overrides(lfvit::ModelConfig& cfg, const CliOptions& opt) {
    if (opt.eta) cfg.eta = *opt.eta;
    if (opt.alpha) cfg.alpha = *opt.alpha;
    if (opt.beta) cfg.beta = *opt.beta;
    if (opt.region_m) cfg.region_m = *opt.region_m;
    if (opt.focus_mode) cfg.focus_mode = lfvit::focus_mode_from_name(*opt.focus_mode);
    cfg.validate();
}

void emit_report(const Json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw lfvit::IoError("cannot write report to '" + out_path + "'");
    out << j.dump(2) << "\n";
}

// Shared flag registration for commands that load a model.
void add_model_flags(CLI::App* cmd, CliOptions& opt, bool model_required) {
    auto* m = cmd->add_option("--model", opt.model_path, "LFW1 weights file");
    if (model_required) m->required();
    cmd->add_option("--eta", opt.eta, "early-exit confidence threshold override");
    cmd->add_option("--region-size", opt.region_m, "region window side m override (coarse cells)");
    cmd->add_option("--alpha", opt.alpha, "fresh-token fraction override");
    cmd->add_option("--beta", opt.beta, "class-attention momentum override");
    cmd->add_option("--focus-mode", opt.focus_mode,
                    "focus sequence layout: full_sequence or compact_sequence");
}

int cmd_infer(const CliOptions& opt) {
    lfvit::LoadedModel model = lfvit::load_lfw1(opt.model_path);
    lfvit::ModelConfig cfg = model.config;
    apply_overrides(cfg, opt);

    Json reports = Json::array();
    for (const std::string& path : opt.image_paths) {
        lfvit::Tensor img = lfvit::load_image(path, cfg.image_side);
        lfvit::InferDebug dbg;
        lfvit::InferenceResult res = lfvit::infer(img, model.weights, cfg, &dbg);
        Json j = lfvit::result_to_json(res, /*include_timing=*/false);
        j["image"] = path;
        if (opt.emit_attention) {
            if (dbg.has_attention) {
                Json att;
                att["gca"] = lfvit::gca_to_json(dbg.gca);
                att["ngca"] = lfvit::ngca_to_json(dbg.ngca);
                att["plan"] = lfvit::plan_to_json(dbg.plan);
                j["attention"] = std::move(att);
            } else {
                j["attention"] = nullptr;  // exited early: no attention maps exist
            }
        }
        reports.push_back(std::move(j));
    }
    emit_report(reports, opt.out_path);
    return 0;
}

int cmd_flops(const CliOptions& opt) {
    lfvit::ModelConfig cfg;
    if (!opt.model_path.empty()) {
        cfg = lfvit::load_lfw1(opt.model_path).config;
    }
    apply_overrides(cfg, opt);

    const lfvit::StageSpec two_stage = lfvit::stage_spec_for(cfg);
    const int n_fine = cfg.n_fine();
    lfvit::StageSpec full_res{n_fine + 1, n_fine, 0, 0};
    lfvit::StageSpec loc_only = two_stage;
    loc_only.focus_seq_len = 0;
    loc_only.focus_fresh_patches = 0;

    const lfvit::FlopsReport ref = lfvit::flops_model(cfg, full_res);
    const lfvit::FlopsReport loc = lfvit::flops_model(cfg, loc_only);
    const lfvit::FlopsReport both = lfvit::flops_model(cfg, two_stage);

    Json j;
    j["config"] = lfvit::config_to_json(cfg);
    j["stage_spec"] = Json{{"loc_seq_len", two_stage.loc_seq_len},
                           {"loc_patches", two_stage.loc_patches},
                           {"focus_seq_len", two_stage.focus_seq_len},
                           {"focus_fresh_patches", two_stage.focus_fresh_patches}};
    j["reference_full_res"] = lfvit::flops_to_json(ref);
    j["localization_only"] = lfvit::flops_to_json(loc);
    j["two_stage"] = lfvit::flops_to_json(both);
    j["localization_to_full_ratio"] = loc.localization / ref.localization;
    emit_report(j, opt.out_path);
    return 0;
}

int cmd_bench(const CliOptions& opt) {
    lfvit::LoadedModel model = lfvit::load_lfw1(opt.model_path);
    lfvit::ModelConfig cfg = model.config;
    apply_overrides(cfg, opt);

    std::vector<lfvit::Tensor> images;
    images.reserve(opt.image_paths.size());
    for (const std::string& path : opt.image_paths) {
        images.push_back(lfvit::load_image(path, cfg.image_side));
    }
    lfvit::BatchReport rep =
        lfvit::bench(images, model.weights, cfg, /*warmup=*/3, opt.workers);
    Json j = lfvit::batch_to_json(rep, cfg, /*include_timing=*/true);
    j["wall_ns"] = rep.wall_ns;
    emit_report(j, opt.out_path);
    return 0;
}

int cmd_heatmap(const CliOptions& opt) {
    lfvit::LoadedModel model = lfvit::load_lfw1(opt.model_path);
    lfvit::ModelConfig cfg = model.config;
    apply_overrides(cfg, opt);
    cfg.eta = 1.0;  // attention export needs the focus stage; never exit early

    const std::string dir = opt.out_path.empty() ? std::string(".") : opt.out_path;
    std::filesystem::create_directories(dir);

    lfvit::Tensor img = lfvit::load_image(opt.image_paths.at(0), cfg.image_side);
    lfvit::InferDebug dbg;
    lfvit::InferenceResult res = lfvit::infer(img, model.weights, cfg, &dbg);

    const std::string gca_path = dir + "/gca.pgm";
    const std::string ngca_path = dir + "/ngca.pgm";
    const std::string overlay_path = dir + "/overlay.ppm";
    const std::string json_path = dir + "/attention.json";
    lfvit::write_pgm(gca_path, dbg.gca.rows, dbg.gca.cols, dbg.gca.grid.data());
    lfvit::write_pgm(ngca_path, dbg.ngca.dim(0), dbg.ngca.dim(1), dbg.ngca.data.data());

    // Region rectangle on the full-resolution image: the selected coarse
    // window covers 2m x 2m fine patches of `patch` pixels each.
    lfvit::Tensor overlay = img;
    const int px0 = 2 * res.region.top_col * cfg.patch;
    const int py0 = 2 * res.region.top_row * cfg.patch;
    const int side = 2 * res.region.m * cfg.patch;
    const int s = cfg.image_side;
    auto paint = [&](int y, int x) {
        if (y < 0 || y >= s || x < 0 || x >= s) return;
        overlay.data[static_cast<size_t>(0) * s * s + static_cast<size_t>(y) * s + x] = 1.0f;
        overlay.data[static_cast<size_t>(1) * s * s + static_cast<size_t>(y) * s + x] = 0.0f;
        overlay.data[static_cast<size_t>(2) * s * s + static_cast<size_t>(y) * s + x] = 0.0f;
    };
    for (int t = 0; t < 2; ++t) {
        for (int x = px0; x < px0 + side; ++x) {
            paint(py0 + t, x);
            paint(py0 + side - 1 - t, x);
        }
        for (int y = py0; y < py0 + side; ++y) {
            paint(y, px0 + t);
            paint(y, px0 + side - 1 - t);
        }
    }
    lfvit::save_image(overlay_path, overlay);

    Json j;
    j["image"] = opt.image_paths.at(0);
    j["result"] = lfvit::result_to_json(res, /*include_timing=*/false);
    j["gca"] = lfvit::gca_to_json(dbg.gca);
    j["ngca"] = lfvit::ngca_to_json(dbg.ngca);
    j["plan"] = lfvit::plan_to_json(dbg.plan);
    j["files"] = Json{{"gca_pgm", gca_path},
                      {"ngca_pgm", ngca_path},
                      {"overlay_ppm", overlay_path}};
    std::ofstream out(json_path, std::ios::binary | std::ios::trunc);
    if (!out) throw lfvit::IoError("cannot write '" + json_path + "'");
    out << j.dump(2) << "\n";
    std::cout << j["files"].dump(2) << "\n";
    return 0;
}

int cmd_gen_weights(CliOptions& opt) {
    lfvit::ModelConfig cfg = opt.gen_cfg;
    if (opt.eta) cfg.eta = *opt.eta;
    if (opt.alpha) cfg.alpha = *opt.alpha;
    if (opt.beta) cfg.beta = *opt.beta;
    if (opt.region_m) cfg.region_m = *opt.region_m;
    if (opt.focus_mode) cfg.focus_mode = lfvit::focus_mode_from_name(*opt.focus_mode);
    cfg.validate();
    lfvit::WeightStore w = lfvit::gen_weights(cfg, opt.seed);
    lfvit::save_lfw1(opt.out_path, w, cfg);
    Json j;
    j["written"] = opt.out_path;
    j["seed"] = opt.seed;
    j["config"] = lfvit::config_to_json(cfg);
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_selftest(const CliOptions& opt) {
    lfvit::SelftestResult r = lfvit::run_selftest();
    emit_report(r.report, opt.out_path);
    return r.failed == 0 ? 0 : 1;
}

void print_error(const char* type, const std::string& message) {
    std::cerr << lfvit::error_to_json(type, message).dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lfvit: adaptive two-stage vision transformer inference"};
    app.require_subcommand(1);
    CliOptions opt;

    CLI::App* infer = app.add_subcommand("infer", "classify images, JSON report per image");
    add_model_flags(infer, opt, true);
    infer->add_option("images", opt.image_paths, "input PPM (P6) images")->required();
    infer->add_flag("--emit-attention", opt.emit_attention,
                    "include GCA/NGCA/plan arrays in the report");
    infer->add_option("--out", opt.out_path, "write the JSON report here instead of stdout");
    infer->add_option("--workers", opt.workers, "accepted for flag parity; inference is per-image");

    CLI::App* flops = app.add_subcommand("flops", "analytic FLOPs report, no images run");
    add_model_flags(flops, opt, false);
    flops->add_option("--out", opt.out_path, "write the JSON report here instead of stdout");

    CLI::App* bench = app.add_subcommand("bench", "timed batch inference with throughput");
    add_model_flags(bench, opt, true);
    bench->add_option("images", opt.image_paths, "input PPM (P6) images")->required();
    bench->add_option("--workers", opt.workers,
                      "worker threads (0 = LFVIT_WORKERS env, then hardware)");
    bench->add_option("--out", opt.out_path, "write the JSON report here instead of stdout");

    CLI::App* heatmap = app.add_subcommand("heatmap", "export GCA/NGCA maps and region overlay");
    add_model_flags(heatmap, opt, true);
    heatmap->add_option("image", opt.image_paths, "input PPM (P6) image")
        ->required()
        ->expected(1);
    heatmap->add_option("--out", opt.out_path, "output directory (default: current)");

    CLI::App* gen = app.add_subcommand("gen-weights", "write a deterministic LFW1 weights file");
    gen->add_option("--out", opt.out_path, "output LFW1 path")->required();
    gen->add_option("--seed", opt.seed, "RNG seed");
    gen->add_option("--depth", opt.gen_cfg.depth, "encoder blocks");
    gen->add_option("--dim", opt.gen_cfg.dim, "token width");
    gen->add_option("--heads", opt.gen_cfg.heads, "attention heads");
    gen->add_option("--patch", opt.gen_cfg.patch, "patch side in pixels");
    gen->add_option("--image-side", opt.gen_cfg.image_side, "full-resolution input side");
    gen->add_option("--classes", opt.gen_cfg.classes, "classifier classes");
    gen->add_option("--eta", opt.eta, "early-exit confidence threshold");
    gen->add_option("--region-size", opt.region_m, "region window side m (coarse cells)");
    gen->add_option("--alpha", opt.alpha, "fresh-token fraction");
    gen->add_option("--beta", opt.beta, "class-attention momentum");
    gen->add_option("--focus-mode", opt.focus_mode,
                    "full_sequence or compact_sequence");

    CLI::App* selftest = app.add_subcommand("selftest", "run the embedded invariant suite");
    selftest->add_option("--out", opt.out_path, "write the JSON report here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("UsageError", e.what());
        return 1;
    }

    try {
        if (infer->parsed()) return cmd_infer(opt);
        if (flops->parsed()) return cmd_flops(opt);
        if (bench->parsed()) return cmd_bench(opt);
        if (heatmap->parsed()) return cmd_heatmap(opt);
        if (gen->parsed()) return cmd_gen_weights(opt);
        if (selftest->parsed()) return cmd_selftest(opt);
    } catch (const lfvit::ConfigError& e) {
        print_error("ConfigError", e.what());
        return 1;
    } catch (const lfvit::DimError& e) {
        print_error("DimError", e.what());
        return 1;
    } catch (const lfvit::IoError& e) {
        print_error("IoError", e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error("RuntimeError", e.what());
        return 2;
    }
    return 0;
}
