#include "lfvit/engine.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace lfvit {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t ns_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count();
}

void check_probs_label(const std::vector<double>& logits_loc, const std::vector<double>& logits_foc,
                       int label) {
    if (logits_loc.empty() || logits_loc.size() != logits_foc.size()) {
        throw DimError("loss: logit vectors must be nonempty and equally sized, got " +
                       std::to_string(logits_loc.size()) + " and " +
                       std::to_string(logits_foc.size()));
    }
    if (label < 0 || static_cast<size_t>(label) >= logits_loc.size()) {
        throw ConfigError("loss: label " + std::to_string(label) + " out of range for " +
                          std::to_string(logits_loc.size()) + " classes");
    }
}

}  // namespace

const char* stage_name(Stage s) {
    return s == Stage::localization ? "localization" : "focus";
}

StageSpec stage_spec_for(const ModelConfig& cfg) {
    const int gc = cfg.coarse_grid();
    const int gf = cfg.fine_grid();
    const int side = 2 * cfg.region_m;
    const int fresh = static_cast<int>(std::floor(cfg.alpha * static_cast<double>(side * side)));
    StageSpec spec;
    spec.loc_seq_len = gc * gc + 1;
    spec.loc_patches = gc * gc;
    spec.focus_fresh_patches = fresh;
    if (cfg.focus_mode == FocusMode::full_sequence) {
        spec.focus_seq_len = gf * gf + 1;
    } else {
        spec.focus_seq_len = 1 + side * side + (gc * gc - cfg.region_m * cfg.region_m);
    }
    return spec;
}

double encoder_flops(int seq_len, int dim, int depth) {
    const double n = seq_len, d = dim;
    // Per block: QKV + output projections 4N'D^2, attention scores and
    // weighted values 2N'^2 D, FFN with hidden 4D costs 8N'D^2.
    return static_cast<double>(depth) * (12.0 * n * d * d + 2.0 * n * n * d);
}

double patch_embed_flops(int n_patches, int patch, int dim) {
    return static_cast<double>(n_patches) * 3.0 * patch * patch * dim;
}

double align_flops(const ModelConfig& cfg) {
    return static_cast<double>(cfg.n_fine()) * cfg.dim * cfg.dim;
}

double head_flops(int dim, int classes) {
    return static_cast<double>(dim) * classes;
}

FlopsReport flops_model(const ModelConfig& cfg, const StageSpec& spec) {
    FlopsReport r;
    r.localization = patch_embed_flops(spec.loc_patches, cfg.patch, cfg.dim) +
                     encoder_flops(spec.loc_seq_len, cfg.dim, cfg.depth) +
                     head_flops(cfg.dim, cfg.classes);
    if (spec.focus_seq_len > 0) {
        r.align = align_flops(cfg);
        r.focus = patch_embed_flops(spec.focus_fresh_patches, cfg.patch, cfg.dim) +
                  encoder_flops(spec.focus_seq_len, cfg.dim, cfg.depth) +
                  head_flops(cfg.dim, cfg.classes);
        r.exited_early = false;
    } else {
        r.exited_early = true;
    }
    r.total = r.localization + r.align + r.focus;
    return r;
}

InferenceResult infer(const Tensor& image, const WeightStore& w, const ModelConfig& cfg,
                      InferDebug* dbg) {
    cfg.validate();
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != cfg.image_side ||
        image.dim(2) != cfg.image_side) {
        throw DimError("infer: image " + image.shape_str() + " does not match config side " +
                       std::to_string(cfg.image_side));
    }

    InferenceResult res;
    const auto t0 = Clock::now();

    Tensor half = downsample_half(image);
    TokenSequence loc_in = embed(half, w, cfg);
    EncodeResult loc = encode(loc_in, w, cfg, dbg ? &dbg->loc_attention : nullptr);
    Classification c_loc = classify(loc.seq, w);

    const auto t1 = Clock::now();
    res.loc_ns = ns_between(t0, t1);
    if (dbg) {
        dbg->loc_cls = c_loc;
        dbg->trace = loc.trace;
        dbg->has_attention = false;
    }

    StageSpec spec = stage_spec_for(cfg);
    if (static_cast<double>(c_loc.conf) > cfg.eta) {
        res.stage = Stage::localization;
        res.probs = c_loc.probs.data;
        res.pred = c_loc.pred;
        res.conf = c_loc.conf;
        res.has_region = false;
        spec.focus_seq_len = 0;
        spec.focus_fresh_patches = 0;
        res.flops = flops_model(cfg, spec);
        return res;
    }

    const int gc = cfg.coarse_grid();
    GcaMap gca = accumulate_gca(loc.trace, cfg.beta, gc, gc);
    Tensor ngca = ngca_scan(gca, cfg.region_m);
    Region region = select_region(ngca, cfg.region_m);
    AlignedFeatures aligned = align_features(loc.seq, w, cfg);
    FocusPlan plan = build_focus_plan(region, gca, cfg);
    FocusSequence focus_in = fuse_and_assemble(image, plan, aligned, loc.seq, w, cfg);
    EncodeResult foc = encode(focus_in.seq, w, cfg, dbg ? &dbg->focus_attention : nullptr);
    Classification c_foc = classify(foc.seq, w);

    const auto t2 = Clock::now();
    res.focus_ns = ns_between(t1, t2);
    res.stage = Stage::focus;
    res.probs = c_foc.probs.data;
    res.pred = c_foc.pred;
    res.conf = c_foc.conf;
    res.has_region = true;
    res.region = region;
    res.flops = flops_model(cfg, spec);
    if (dbg) {
        dbg->has_attention = true;
        dbg->gca = gca;
        dbg->ngca = ngca;
        dbg->plan = plan;
        dbg->focus_input = focus_in;
        dbg->focus_cls = c_foc;
    }
    return res;
}

double softmax_double(const std::vector<double>& logits, std::vector<double>& probs_out) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    probs_out.resize(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        probs_out[i] = std::exp(logits[i] - mx);
        sum += probs_out[i];
    }
    for (double& p : probs_out) p /= sum;
    return mx + std::log(sum);  // log-normalizer
}

double loss(const std::vector<double>& logits_loc, const std::vector<double>& logits_foc,
            int label) {
    check_probs_label(logits_loc, logits_foc, label);
    std::vector<double> p_l, p_f;
    const double lse_f = softmax_double(logits_foc, p_f);
    softmax_double(logits_loc, p_l);
    const double ce = lse_f - logits_foc[static_cast<size_t>(label)];
    double kl = 0.0;
    for (size_t i = 0; i < p_l.size(); ++i) {
        if (p_l[i] > 0.0) kl += p_l[i] * std::log(p_l[i] / p_f[i]);
    }
    return ce + kl;
}

double loss_variant(const std::vector<double>& logits_loc, const std::vector<double>& logits_foc,
                    int label) {
    check_probs_label(logits_loc, logits_foc, label);
    std::vector<double> scratch;
    const double lse_f = softmax_double(logits_foc, scratch);
    const double lse_l = softmax_double(logits_loc, scratch);
    return (lse_f - logits_foc[static_cast<size_t>(label)]) +
           (lse_l - logits_loc[static_cast<size_t>(label)]);
}

LossGrad loss_grad(const std::vector<double>& logits_loc, const std::vector<double>& logits_foc,
                   int label, bool stop_grad_localization) {
    check_probs_label(logits_loc, logits_foc, label);
    std::vector<double> p_l, p_f;
    softmax_double(logits_foc, p_f);
    softmax_double(logits_loc, p_l);
    const size_t n = p_f.size();
    double kl = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (p_l[i] > 0.0) kl += p_l[i] * std::log(p_l[i] / p_f[i]);
    }
    LossGrad g;
    g.grad_foc.resize(n);
    g.grad_loc.assign(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        const double y = (static_cast<int>(i) == label) ? 1.0 : 0.0;
        g.grad_foc[i] = (p_f[i] - y) + (p_f[i] - p_l[i]);
        if (!stop_grad_localization) {
            g.grad_loc[i] = p_l[i] * (std::log(p_l[i] / p_f[i]) - kl);
        }
    }
    return g;
}

int resolve_workers(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("LFVIT_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v > 0 && v <= 1024) return static_cast<int>(v);
        throw ConfigError("LFVIT_WORKERS must be a positive integer, got '" + std::string(env) +
                          "'");
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

BatchReport run_batch(const std::vector<Tensor>& images, const std::vector<int>* labels,
                      const WeightStore& w, const ModelConfig& cfg, int workers) {
    if (images.empty()) throw ConfigError("run_batch: batch must be nonempty");
    if (labels && labels->size() != images.size()) {
        throw DimError("run_batch: " + std::to_string(labels->size()) + " labels for " +
                       std::to_string(images.size()) + " images");
    }
    const size_t n = images.size();
    BatchReport rep;
    rep.results.resize(n);
    rep.errors.assign(n, std::string());

    int nw = resolve_workers(workers);
    nw = std::min<int>(nw, static_cast<int>(n));

    const auto t0 = Clock::now();
    auto work_one = [&](size_t i) {
        try {
            rep.results[i] = infer(images[i], w, cfg);
        } catch (const std::exception& e) {
            rep.errors[i] = e.what();
        }
    };
    if (nw <= 1) {
        for (size_t i = 0; i < n; ++i) work_one(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(nw));
        for (int t = 0; t < nw; ++t) {
            pool.emplace_back([&] {
                for (;;) {
                    const size_t i = next.fetch_add(1);
                    if (i >= n) return;
                    work_one(i);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    rep.wall_ns = ns_between(t0, Clock::now());

    double flops_sum = 0.0;
    int exited = 0, correct = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!rep.errors[i].empty()) continue;
        ++rep.n_ok;
        flops_sum += rep.results[i].flops.total;
        if (rep.results[i].flops.exited_early) ++exited;
        if (labels && rep.results[i].pred == (*labels)[i]) ++correct;
    }
    if (rep.n_ok > 0) {
        rep.mean_flops = flops_sum / rep.n_ok;
        rep.exit_fraction = static_cast<double>(exited) / rep.n_ok;
        if (labels) {
            rep.has_accuracy = true;
            rep.accuracy = static_cast<double>(correct) / rep.n_ok;
        }
    }
    const double secs = static_cast<double>(rep.wall_ns) * 1e-9;
    rep.throughput_ips = secs > 0.0 ? static_cast<double>(n) / secs : 0.0;
    return rep;
}

BatchReport bench(const std::vector<Tensor>& images, const WeightStore& w, const ModelConfig& cfg,
                  int warmup, int workers) {
    if (images.empty()) throw ConfigError("bench: batch must be nonempty");
    for (int i = 0; i < warmup; ++i) {
        (void)infer(images[static_cast<size_t>(i) % images.size()], w, cfg);
    }
    return run_batch(images, nullptr, w, cfg, workers);
}

}  // namespace lfvit
