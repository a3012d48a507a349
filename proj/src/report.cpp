#include "lfvit/report.hpp"

namespace lfvit {

Json config_to_json(const ModelConfig& cfg) {
    Json j;
    j["depth"] = cfg.depth;
    j["dim"] = cfg.dim;
    j["heads"] = cfg.heads;
    j["patch"] = cfg.patch;
    j["image_side"] = cfg.image_side;
    j["classes"] = cfg.classes;
    j["region_m"] = cfg.region_m;
    j["eta"] = cfg.eta;
    j["alpha"] = cfg.alpha;
    j["beta"] = cfg.beta;
    j["focus_mode"] = focus_mode_name(cfg.focus_mode);
    j["eps"] = cfg.eps;
    return j;
}

Json region_to_json(const Region& r) {
    Json j;
    j["top_row"] = r.top_row;
    j["top_col"] = r.top_col;
    j["m"] = r.m;
    j["score"] = r.score;
    return j;
}

Json flops_to_json(const FlopsReport& f) {
    Json j;
    j["convention"] = "multiply-accumulate";
    j["localization"] = f.localization;
    j["align"] = f.align;
    j["focus"] = f.focus;
    j["total"] = f.total;
    j["exited_early"] = f.exited_early;
    return j;
}

Json result_to_json(const InferenceResult& r, bool include_timing) {
    Json j;
    j["stage"] = stage_name(r.stage);
    j["pred"] = r.pred;
    j["conf"] = r.conf;
    j["probs"] = r.probs;
    j["region"] = r.has_region ? region_to_json(r.region) : Json(nullptr);
    j["flops"] = flops_to_json(r.flops);
    if (include_timing) {
        Json t;
        t["loc_ns"] = r.loc_ns;
        t["focus_ns"] = r.focus_ns;
        j["timing"] = t;
    }
    return j;
}

Json plan_to_json(const FocusPlan& p) {
    Json j;
    j["region"] = region_to_json(p.region);
    j["mode"] = focus_mode_name(p.mode);
    j["fresh"] = p.fresh;
    j["reused_region"] = p.reused_region;
    j["reused_background"] = p.reused_background;
    j["fine_grid"] = Json{{"rows", p.fine_rows}, {"cols", p.fine_cols}};
    j["coarse_grid"] = Json{{"rows", p.coarse_rows}, {"cols", p.coarse_cols}};
    return j;
}

Json gca_to_json(const GcaMap& g) {
    Json rows = Json::array();
    for (int r = 0; r < g.rows; ++r) {
        Json row = Json::array();
        for (int c = 0; c < g.cols; ++c) row.push_back(g.at(r, c));
        rows.push_back(std::move(row));
    }
    Json j;
    j["rows"] = g.rows;
    j["cols"] = g.cols;
    j["values"] = std::move(rows);
    return j;
}

Json ngca_to_json(const Tensor& ngca) {
    Json rows = Json::array();
    for (int r = 0; r < ngca.dim(0); ++r) {
        Json row = Json::array();
        for (int c = 0; c < ngca.dim(1); ++c) row.push_back(ngca.at(r, c));
        rows.push_back(std::move(row));
    }
    Json j;
    j["rows"] = ngca.dim(0);
    j["cols"] = ngca.dim(1);
    j["values"] = std::move(rows);
    return j;
}

Json batch_to_json(const BatchReport& rep, const ModelConfig& cfg, bool include_timing) {
    Json per = Json::array();
    for (size_t i = 0; i < rep.results.size(); ++i) {
        if (!rep.errors[i].empty()) {
            Json e;
            e["error"] = rep.errors[i];
            per.push_back(std::move(e));
        } else {
            per.push_back(result_to_json(rep.results[i], include_timing));
        }
    }
    Json j;
    j["config"] = config_to_json(cfg);
    j["per_image"] = std::move(per);
    j["n_ok"] = rep.n_ok;
    j["mean_flops"] = rep.mean_flops;
    j["exit_fraction"] = rep.exit_fraction;
    j["throughput_ips"] = rep.throughput_ips;
    if (rep.has_accuracy) j["accuracy"] = rep.accuracy;
    return j;
}

Json error_to_json(const std::string& type, const std::string& message) {
    Json j;
    j["error"] = Json{{"type", type}, {"message", message}};
    return j;
}

}  // namespace lfvit
