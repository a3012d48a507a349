#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <random>
#include <vector>

#include "lfvit/engine.hpp"
#include "test_util.hpp"

using lfvit::BatchReport;
using lfvit::FlopsReport;
using lfvit::InferDebug;
using lfvit::InferenceResult;
using lfvit::LossGrad;
using lfvit::ModelConfig;
using lfvit::Stage;
using lfvit::StageSpec;
using lfvit::Tensor;
using lfvit::WeightStore;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.depth = 3;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.patch = 2;
    cfg.image_side = 28;
    cfg.classes = 4;
    cfg.region_m = 5;
    cfg.validate();
    return cfg;
}

std::vector<Tensor> random_images(const ModelConfig& cfg, int n, unsigned seed) {
    std::mt19937 rng(seed);
    std::vector<Tensor> images;
    images.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        images.push_back(
            testutil::random_tensor({3, cfg.image_side, cfg.image_side}, rng, 0.0f, 1.0f));
    }
    return images;
}

std::vector<double> random_logits(int n, std::mt19937& rng) {
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::vector<double> z(static_cast<size_t>(n));
    for (double& v : z) v = u(rng);
    return z;
}

// Independent reference: direct-normalization softmax, textbook CE and KL.
double ref_loss(const std::vector<double>& zl, const std::vector<double>& zf, int y) {
    auto soft = [](const std::vector<double>& z) {
        double mx = z[0];
        for (double v : z) mx = std::max(mx, v);
        std::vector<double> p(z.size());
        double s = 0.0;
        for (size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - mx));
        for (double& v : p) v /= s;
        return p;
    };
    const std::vector<double> pl = soft(zl), pf = soft(zf);
    double out = -std::log(pf[static_cast<size_t>(y)]);
    for (size_t i = 0; i < pl.size(); ++i) out += pl[i] * std::log(pl[i] / pf[i]);
    return out;
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("analytic FLOPs model reproduces the published anchors exactly") {
    ModelConfig cfg = ModelConfig::deit_small();
    const double full = lfvit::encoder_flops(197, cfg.dim, cfg.depth) +
                        lfvit::patch_embed_flops(196, cfg.patch, cfg.dim) +
                        lfvit::head_flops(cfg.dim, cfg.classes);
    CHECK(full == 4598882304.0);

    StageSpec spec = lfvit::stage_spec_for(cfg);
    StageSpec loc_only = spec;
    loc_only.focus_seq_len = 0;
    loc_only.focus_fresh_patches = 0;
    FlopsReport loc = lfvit::flops_model(cfg, loc_only);
    CHECK(loc.total == 1099557888.0);
    CHECK(loc.exited_early);
    CHECK(loc.align == 0.0);
    CHECK(loc.focus == 0.0);

    CHECK(std::fabs(loc.total / full - 0.239092417530153) < 1e-12);

    FlopsReport two = lfvit::flops_model(cfg, spec);
    CHECK_FALSE(two.exited_early);
    CHECK(two.localization == loc.total);
    CHECK(two.align == 196.0 * 384.0 * 384.0);
    CHECK(two.total == two.localization + two.align + two.focus);
    CHECK(two.total == 5695491072.0);
}

TEST_CASE("FLOPs component formulas") {
    // Per block 12ND^2 + 2N^2D, scaled by depth.
    CHECK(lfvit::encoder_flops(197, 384, 12) ==
          12.0 * (12.0 * 197 * 384 * 384 + 2.0 * 197 * 197 * 384));
    CHECK(lfvit::encoder_flops(1, 1, 1) == 14.0);  // 12*1*1 + 2*1*1
    CHECK(lfvit::patch_embed_flops(49, 16, 384) == 49.0 * 3 * 256 * 384);
    CHECK(lfvit::head_flops(384, 1000) == 384000.0);
    ModelConfig cfg = ModelConfig::deit_small();
    CHECK(lfvit::align_flops(cfg) == 196.0 * 384 * 384);
}

TEST_CASE("stage_spec_for under both focus modes") {
    ModelConfig cfg = ModelConfig::deit_small();
    StageSpec full = lfvit::stage_spec_for(cfg);
    CHECK(full.loc_seq_len == 50);
    CHECK(full.loc_patches == 49);
    CHECK(full.focus_seq_len == 197);
    CHECK(full.focus_fresh_patches == 88);  // floor(0.88 * 100)

    cfg.focus_mode = lfvit::FocusMode::compact_sequence;
    StageSpec compact = lfvit::stage_spec_for(cfg);
    CHECK(compact.focus_seq_len == 125);  // 1 + 100 region + 24 coarse background
    CHECK(compact.focus_fresh_patches == 88);
}

TEST_CASE("loss identities: zero KL on equal logits, peaked limit, variant") {
    std::mt19937 rng(90);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> z = random_logits(5, rng);
        const int y = trial % 5;
        std::vector<double> p;
        const double lse = lfvit::softmax_double(z, p);
        const double ce = lse - z[static_cast<size_t>(y)];
        CHECK(std::fabs(lfvit::loss(z, z, y) - ce) < 1e-12);              // KL(p||p) == 0
        CHECK(lfvit::loss_variant(z, z, y) == 2.0 * lfvit::loss(z, z, y));  // CE + CE
    }

    std::vector<double> peaked(10, 0.0);
    peaked[3] = 50.0;
    CHECK(lfvit::loss(peaked, peaked, 3) < 1e-12);

    // Random pairs against the independent reference.
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> zl = random_logits(5, rng);
        std::vector<double> zf = random_logits(5, rng);
        const int y = trial % 5;
        CHECK(std::fabs(lfvit::loss(zl, zf, y) - ref_loss(zl, zf, y)) < 1e-9);
        std::vector<double> pl, pf;
        const double lse_l = lfvit::softmax_double(zl, pl);
        const double lse_f = lfvit::softmax_double(zf, pf);
        const double want = (lse_f - zf[static_cast<size_t>(y)]) +
                            (lse_l - zl[static_cast<size_t>(y)]);
        CHECK(std::fabs(lfvit::loss_variant(zl, zf, y) - want) < 1e-12);
    }
}

TEST_CASE("loss is invariant to per-vector logit shifts") {
    std::mt19937 rng(91);
    std::vector<double> zl = random_logits(7, rng);
    std::vector<double> zf = random_logits(7, rng);
    const double base = lfvit::loss(zl, zf, 2);
    std::vector<double> zl2 = zl, zf2 = zf;
    for (double& v : zl2) v += 3.7;
    for (double& v : zf2) v -= 1.9;
    CHECK(std::fabs(lfvit::loss(zl2, zf2, 2) - base) < 1e-9);
}

TEST_CASE("loss input validation") {
    std::vector<double> a{0.0, 1.0}, b{0.0, 1.0, 2.0};
    CHECK_THROWS_AS(lfvit::loss(a, b, 0), lfvit::DimError);
    CHECK_THROWS_AS(lfvit::loss(a, a, 2), lfvit::ConfigError);
    CHECK_THROWS_AS(lfvit::loss(a, a, -1), lfvit::ConfigError);
}

TEST_CASE("loss_grad: closed forms on equal logits, zero-sum, stop gradient") {
    std::mt19937 rng(92);
    std::vector<double> z = random_logits(6, rng);
    const int y = 4;
    std::vector<double> p;
    lfvit::softmax_double(z, p);

    LossGrad g = lfvit::loss_grad(z, z, y);
    for (size_t i = 0; i < p.size(); ++i) {
        CHECK(g.grad_loc[i] == 0.0);  // p * (log(p/p) - 0) is exactly zero
        const double want = p[i] - (static_cast<int>(i) == y ? 1.0 : 0.0);
        CHECK(std::fabs(g.grad_foc[i] - want) < 1e-12);
    }

    std::vector<double> zl = random_logits(6, rng), zf = random_logits(6, rng);
    LossGrad g2 = lfvit::loss_grad(zl, zf, 1);
    double sum_l = 0.0, sum_f = 0.0;
    for (size_t i = 0; i < 6; ++i) {
        sum_l += g2.grad_loc[i];
        sum_f += g2.grad_foc[i];
    }
    CHECK(std::fabs(sum_l) < 1e-12);
    CHECK(std::fabs(sum_f) < 1e-12);

    LossGrad stopped = lfvit::loss_grad(zl, zf, 1, /*stop_grad_localization=*/true);
    for (size_t i = 0; i < 6; ++i) {
        CHECK(stopped.grad_loc[i] == 0.0);
        CHECK(stopped.grad_foc[i] == g2.grad_foc[i]);
    }
}

TEST_CASE("loss_grad matches central finite differences") {
    std::mt19937 rng(93);
    const double h = 1e-4;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> zl = random_logits(10, rng);
        std::vector<double> zf = random_logits(10, rng);
        const int y = trial % 10;
        LossGrad g = lfvit::loss_grad(zl, zf, y);
        for (int i = 0; i < 10; ++i) {
            std::vector<double> hi = zl, lo = zl;
            hi[static_cast<size_t>(i)] += h;
            lo[static_cast<size_t>(i)] -= h;
            const double fd_loc = (lfvit::loss(hi, zf, y) - lfvit::loss(lo, zf, y)) / (2 * h);
            CHECK(std::fabs(fd_loc - g.grad_loc[static_cast<size_t>(i)]) <
                  1e-6 + 1e-4 * std::fabs(g.grad_loc[static_cast<size_t>(i)]));

            hi = zf;
            lo = zf;
            hi[static_cast<size_t>(i)] += h;
            lo[static_cast<size_t>(i)] -= h;
            const double fd_foc = (lfvit::loss(zl, hi, y) - lfvit::loss(zl, lo, y)) / (2 * h);
            CHECK(std::fabs(fd_foc - g.grad_foc[static_cast<size_t>(i)]) <
                  1e-6 + 1e-4 * std::fabs(g.grad_foc[static_cast<size_t>(i)]));
        }
    }
}

TEST_CASE("softmax_double returns the log-normalizer") {
    std::mt19937 rng(94);
    std::vector<double> z = random_logits(8, rng);
    std::vector<double> p;
    const double lse = lfvit::softmax_double(z, p);
    double sum = 0.0;
    for (double v : p) sum += v;
    CHECK(std::fabs(sum - 1.0) < 1e-12);
    for (size_t i = 0; i < z.size(); ++i) {
        CHECK(std::fabs(p[i] - std::exp(z[i] - lse)) < 1e-12);
    }
}

TEST_CASE("infer: eta endpoints select the stage and the analytic FLOPs") {
    ModelConfig cfg = tiny_cfg();
    WeightStore w = lfvit::gen_weights(cfg, 21);
    std::vector<Tensor> images = random_images(cfg, 1, 95);

    cfg.eta = 0.0;  // conf > 0 always holds: guaranteed early exit
    InferDebug dbg_exit;
    InferenceResult exit_res = lfvit::infer(images[0], w, cfg, &dbg_exit);
    CHECK(exit_res.stage == Stage::localization);
    CHECK_FALSE(exit_res.has_region);
    CHECK(exit_res.flops.exited_early);
    CHECK(exit_res.flops.focus == 0.0);
    CHECK(exit_res.flops.align == 0.0);
    StageSpec loc_only = lfvit::stage_spec_for(cfg);
    loc_only.focus_seq_len = 0;
    loc_only.focus_fresh_patches = 0;
    CHECK(exit_res.flops.total == lfvit::flops_model(cfg, loc_only).total);
    CHECK_FALSE(dbg_exit.has_attention);
    CHECK(dbg_exit.loc_cls.pred == exit_res.pred);
    REQUIRE(dbg_exit.trace.per_layer.size() == 3);
    for (const auto& row : dbg_exit.trace.per_layer) {
        REQUIRE(row.size() == 50);
        double s = 0.0;
        for (float v : row) {
            CHECK(v >= 0.0f);
            s += v;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }

    cfg.eta = 1.0;  // conf <= 1 strictly: the focus stage always runs
    InferDebug dbg_focus;
    InferenceResult focus_res = lfvit::infer(images[0], w, cfg, &dbg_focus);
    CHECK(focus_res.stage == Stage::focus);
    CHECK(focus_res.has_region);
    CHECK(focus_res.region.m == cfg.region_m);
    CHECK_FALSE(focus_res.flops.exited_early);
    FlopsReport want = lfvit::flops_model(cfg, lfvit::stage_spec_for(cfg));
    CHECK(focus_res.flops.total == want.total);
    CHECK(focus_res.flops.localization == want.localization);
    CHECK(focus_res.flops.align == want.align);
    CHECK(focus_res.flops.focus == want.focus);
    // Both stages were measured.
    CHECK(focus_res.loc_ns >= 0);
    CHECK(focus_res.focus_ns > 0);

    CHECK(dbg_focus.has_attention);
    CHECK(dbg_focus.plan.fresh.size() == 88);
    CHECK(dbg_focus.focus_input.seq.seq_len() == 197);
    REQUIRE(dbg_focus.loc_attention.per_layer.size() == 3);
    CHECK(dbg_focus.loc_attention.per_layer[0].shape == std::vector<int>{2, 50, 50});
    REQUIRE(dbg_focus.focus_attention.per_layer.size() == 3);
    CHECK(dbg_focus.focus_attention.per_layer[0].shape == std::vector<int>{2, 197, 197});
    CHECK(dbg_focus.focus_cls.pred == focus_res.pred);

    REQUIRE(focus_res.probs.size() == 4);
    double psum = 0.0;
    for (float v : focus_res.probs) psum += v;
    CHECK(psum == doctest::Approx(1.0).epsilon(1e-5));

    // The localization flops are charged identically in both outcomes.
    CHECK(exit_res.flops.localization == focus_res.flops.localization);
}

TEST_CASE("infer rejects images that do not match the config") {
    ModelConfig cfg = tiny_cfg();
    WeightStore w = lfvit::gen_weights(cfg, 22);
    CHECK_THROWS_AS(lfvit::infer(Tensor::zeros({3, 27, 28}), w, cfg), lfvit::DimError);
    CHECK_THROWS_AS(lfvit::infer(Tensor::zeros({1, 28, 28}), w, cfg), lfvit::DimError);
}

TEST_CASE("infer is deterministic") {
    ModelConfig cfg = tiny_cfg();
    cfg.eta = 1.0;
    WeightStore w = lfvit::gen_weights(cfg, 23);
    std::vector<Tensor> images = random_images(cfg, 1, 96);
    InferenceResult a = lfvit::infer(images[0], w, cfg);
    InferenceResult b = lfvit::infer(images[0], w, cfg);
    REQUIRE(a.probs.size() == b.probs.size());
    CHECK(std::memcmp(a.probs.data(), b.probs.data(), a.probs.size() * sizeof(float)) == 0);
    CHECK(a.pred == b.pred);
    CHECK(a.conf == b.conf);
    CHECK(a.flops.total == b.flops.total);
    CHECK(a.region.top_row == b.region.top_row);
    CHECK(a.region.top_col == b.region.top_col);
}

TEST_CASE("run_batch: aggregates, per-image errors, accuracy oracle") {
    ModelConfig cfg = tiny_cfg();
    cfg.eta = 0.0;
    WeightStore w = lfvit::gen_weights(cfg, 24);
    std::vector<Tensor> images = random_images(cfg, 6, 97);

    BatchReport rep = lfvit::run_batch(images, nullptr, w, cfg, 1);
    CHECK(rep.n_ok == 6);
    CHECK(rep.exit_fraction == 1.0);
    CHECK_FALSE(rep.has_accuracy);
    // Early-exit cost is content-independent, so the mean is that exact value.
    StageSpec loc_only = lfvit::stage_spec_for(cfg);
    loc_only.focus_seq_len = 0;
    loc_only.focus_fresh_patches = 0;
    CHECK(rep.mean_flops == lfvit::flops_model(cfg, loc_only).total);
    CHECK(rep.wall_ns > 0);
    CHECK(rep.throughput_ips > 0.0);

    cfg.eta = 1.0;
    BatchReport focus_rep = lfvit::run_batch(images, nullptr, w, cfg, 1);
    CHECK(focus_rep.exit_fraction == 0.0);
    CHECK(focus_rep.mean_flops ==
          lfvit::flops_model(cfg, lfvit::stage_spec_for(cfg)).total);

    // Feeding back the predictions as labels must give accuracy 1.
    std::vector<int> labels;
    for (const auto& r : focus_rep.results) labels.push_back(r.pred);
    BatchReport scored = lfvit::run_batch(images, &labels, w, cfg, 1);
    CHECK(scored.has_accuracy);
    CHECK(scored.accuracy == 1.0);

    // A malformed image is reported in place; the rest of the batch completes.
    std::vector<Tensor> mixed = images;
    mixed[2] = Tensor::zeros({3, 27, 28});
    BatchReport part = lfvit::run_batch(mixed, nullptr, w, cfg, 1);
    CHECK(part.n_ok == 5);
    CHECK_FALSE(part.errors[2].empty());
    for (size_t i = 0; i < part.errors.size(); ++i) {
        if (i != 2) CHECK(part.errors[i].empty());
    }

    CHECK_THROWS_AS(lfvit::run_batch({}, nullptr, w, cfg, 1), lfvit::ConfigError);
    std::vector<int> short_labels{0};
    CHECK_THROWS_AS(lfvit::run_batch(images, &short_labels, w, cfg, 1), lfvit::DimError);
}

TEST_CASE("run_batch results do not depend on the worker count") {
    ModelConfig cfg = tiny_cfg();
    cfg.eta = 0.5;
    WeightStore w = lfvit::gen_weights(cfg, 25);
    std::vector<Tensor> images = random_images(cfg, 8, 98);
    BatchReport seq = lfvit::run_batch(images, nullptr, w, cfg, 1);
    BatchReport par = lfvit::run_batch(images, nullptr, w, cfg, 3);
    REQUIRE(par.results.size() == seq.results.size());
    for (size_t i = 0; i < seq.results.size(); ++i) {
        const auto& a = seq.results[i];
        const auto& b = par.results[i];
        CHECK(a.pred == b.pred);
        CHECK(a.stage == b.stage);
        REQUIRE(a.probs.size() == b.probs.size());
        CHECK(std::memcmp(a.probs.data(), b.probs.data(), a.probs.size() * sizeof(float)) == 0);
    }
    CHECK(par.exit_fraction == seq.exit_fraction);
    CHECK(par.mean_flops == seq.mean_flops);
}

TEST_CASE("eta sweep: early exits are nested and the exit fraction is monotone") {
    ModelConfig cfg = tiny_cfg();
    WeightStore w = lfvit::gen_weights(cfg, 26);
    std::vector<Tensor> images = random_images(cfg, 16, 99);

    const double etas[] = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<std::vector<bool>> exited;
    std::vector<double> fractions;
    for (double eta : etas) {
        cfg.eta = eta;
        BatchReport rep = lfvit::run_batch(images, nullptr, w, cfg, 1);
        REQUIRE(rep.n_ok == 16);
        std::vector<bool> ex;
        for (const auto& r : rep.results) ex.push_back(r.flops.exited_early);
        exited.push_back(ex);
        fractions.push_back(rep.exit_fraction);
    }
    for (size_t k = 1; k < fractions.size(); ++k) {
        CHECK(fractions[k] <= fractions[k - 1]);
        // Raising eta can only turn exits into focus runs, never the reverse.
        for (size_t i = 0; i < 16; ++i) {
            if (exited[k][i]) CHECK(exited[k - 1][i]);
        }
    }
    CHECK(fractions.front() == 1.0);
    CHECK(fractions.back() == 0.0);
}

TEST_CASE("resolve_workers precedence and validation") {
    CHECK(lfvit::resolve_workers(5) == 5);

    setenv("LFVIT_WORKERS", "3", 1);
    CHECK(lfvit::resolve_workers(0) == 3);
    CHECK(lfvit::resolve_workers(2) == 2);  // explicit count wins over the env

    setenv("LFVIT_WORKERS", "abc", 1);
    CHECK_THROWS_AS(lfvit::resolve_workers(0), lfvit::ConfigError);
    setenv("LFVIT_WORKERS", "0", 1);
    CHECK_THROWS_AS(lfvit::resolve_workers(0), lfvit::ConfigError);
    setenv("LFVIT_WORKERS", "2000", 1);
    CHECK_THROWS_AS(lfvit::resolve_workers(0), lfvit::ConfigError);
    unsetenv("LFVIT_WORKERS");

    CHECK(lfvit::resolve_workers(0) >= 1);
}

TEST_CASE("bench produces a timed report") {
    ModelConfig cfg = tiny_cfg();
    cfg.eta = 0.5;
    WeightStore w = lfvit::gen_weights(cfg, 27);
    std::vector<Tensor> images = random_images(cfg, 3, 100);
    BatchReport rep = lfvit::bench(images, w, cfg, 2, 1);
    CHECK(rep.results.size() == 3);
    CHECK(rep.n_ok == 3);
    CHECK(rep.throughput_ips > 0.0);
    CHECK(rep.wall_ns > 0);
}

}  // TEST_SUITE
