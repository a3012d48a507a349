#include "lfvit/selftest.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "lfvit/kernels.hpp"

namespace lfvit {

namespace {

struct Check {
    const char* name;
    std::function<std::string()> run;  // empty string = pass, else failure detail
};

std::string fail(const std::string& msg) { return msg; }

Tensor random_tensor(std::vector<int> shape, std::mt19937& rng, float lo = -1.0f,
                     float hi = 1.0f) {
    Tensor t = Tensor::zeros(std::move(shape));
    std::uniform_real_distribution<float> u(lo, hi);
    for (float& v : t.data) v = u(rng);
    return t;
}

std::string check_kernel_equivalence() {
    using kern::Backend;
    if (!kern::backend_available(Backend::avx2)) return {};  // nothing to compare on this host
    std::mt19937 rng(7);
    Tensor a = random_tensor({17, 9}, rng);
    Tensor b = random_tensor({9, 13}, rng);
    const Backend prev = kern::active_backend();
    kern::set_backend(Backend::scalar);
    Tensor cs = kern::matmul(a, b);
    Tensor ss = kern::softmax(cs);
    kern::set_backend(Backend::avx2);
    Tensor cv = kern::matmul(a, b);
    Tensor sv = kern::softmax(cv);
    kern::set_backend(prev);
    for (size_t i = 0; i < cs.data.size(); ++i) {
        if (std::fabs(cs.data[i] - cv.data[i]) > 1e-4f) {
            return fail("matmul scalar/avx2 divergence at flat index " + std::to_string(i));
        }
        if (std::fabs(ss.data[i] - sv.data[i]) > 1e-5f) {
            return fail("softmax scalar/avx2 divergence at flat index " + std::to_string(i));
        }
    }
    return {};
}

std::string check_softmax_rows() {
    std::mt19937 rng(11);
    Tensor t = kern::softmax(random_tensor({6, 40}, rng, -8.0f, 8.0f));
    for (int r = 0; r < t.dim(0); ++r) {
        double s = 0.0;
        for (int c = 0; c < t.dim(1); ++c) s += t.at(r, c);
        if (std::fabs(s - 1.0) > 1e-6) {
            return fail("softmax row " + std::to_string(r) + " sums to " + std::to_string(s));
        }
    }
    return {};
}

std::string check_gelu_value() {
    Tensor t = Tensor::zeros({1, 1});
    t.data[0] = 1.0f;
    t = kern::gelu(t);
    const double want = 0.8413447460685429;  // x*Phi(x) at x=1
    if (std::fabs(t.data[0] - want) > 1e-6) {
        return fail("gelu(1) = " + std::to_string(t.data[0]));
    }
    return {};
}

std::string check_flops_anchors() {
    ModelConfig cfg = ModelConfig::deit_small();
    FlopsReport full = flops_model(cfg, StageSpec{197, 196, 0, 0});
    FlopsReport half = flops_model(cfg, StageSpec{50, 49, 0, 0});
    if (full.localization != 4598882304.0) {
        return fail("full-resolution reference MACs = " + std::to_string(full.localization));
    }
    if (half.localization != 1099557888.0) {
        return fail("half-resolution MACs = " + std::to_string(half.localization));
    }
    const double ratio = half.localization / full.localization;
    if (std::fabs(ratio - 0.239) > 0.01) return fail("ratio = " + std::to_string(ratio));
    const double per_block = encoder_flops(1, cfg.dim, 1);
    const double want = 12.0 * cfg.dim * cfg.dim + 2.0 * cfg.dim;
    if (per_block != want) return fail("degenerate per-block cost " + std::to_string(per_block));
    return {};
}

std::string check_loss_identities() {
    std::vector<double> z = {0.3, -1.2, 2.0, 0.0, 0.7};
    const double l = loss(z, z, 2);
    std::vector<double> p;
    const double lse = softmax_double(z, p);
    const double ce = lse - z[2];
    if (std::fabs(l - ce) > 1e-7) return fail("KL(p||p) term nonzero: " + std::to_string(l - ce));
    LossGrad g = loss_grad(z, z, 2);
    double sl = 0.0, sf = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        if (std::fabs(g.grad_loc[i]) > 1e-12) return fail("grad_loc nonzero at equal logits");
        sl += g.grad_loc[i];
        sf += g.grad_foc[i];
    }
    if (std::fabs(sl) > 1e-6 || std::fabs(sf) > 1e-6) return fail("gradient gauge sum nonzero");
    const double lv = loss_variant(z, z, 2);
    if (std::fabs(lv - 2.0 * ce) > 1e-9) return fail("variant at equal logits != 2*CE");
    return {};
}

std::string check_partition_arithmetic() {
    ModelConfig cfg = ModelConfig::deit_small();  // m=5, alpha=0.88, 14x14 fine grid
    GcaMap gca;
    gca.rows = gca.cols = cfg.coarse_grid();
    gca.grid.assign(static_cast<size_t>(gca.rows) * gca.cols, 0.0f);
    std::mt19937 rng(3);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (float& v : gca.grid) v = u(rng);
    Region region = select_region(ngca_scan(gca, cfg.region_m), cfg.region_m);

    cfg.focus_mode = FocusMode::compact_sequence;
    FocusPlan compact = build_focus_plan(region, gca, cfg);
    if (compact.fresh.size() != 88 || compact.reused_region.size() != 12 ||
        compact.reused_background.size() != 24) {
        return fail("compact partition " + std::to_string(compact.fresh.size()) + "/" +
                    std::to_string(compact.reused_region.size()) + "/" +
                    std::to_string(compact.reused_background.size()));
    }
    const size_t compact_len =
        1 + compact.fresh.size() + compact.reused_region.size() + compact.reused_background.size();
    if (compact_len != 125) return fail("compact length " + std::to_string(compact_len));

    cfg.focus_mode = FocusMode::full_sequence;
    FocusPlan fullp = build_focus_plan(region, gca, cfg);
    const size_t covered =
        fullp.fresh.size() + fullp.reused_region.size() + fullp.reused_background.size();
    if (covered != 196) return fail("full-mode cover " + std::to_string(covered));
    return {};
}

std::string check_gca_endpoints() {
    std::mt19937 rng(5);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ClassAttentionTrace trace;
    trace.per_layer.resize(4);
    for (auto& row : trace.per_layer) {
        row.resize(5);
        for (float& v : row) v = u(rng);
    }
    GcaMap b0 = accumulate_gca(trace, 0.0, 2, 2);
    GcaMap b1 = accumulate_gca(trace, 1.0, 2, 2);
    for (int i = 0; i < 4; ++i) {
        if (std::fabs(b0.grid[static_cast<size_t>(i)] - trace.per_layer[3][static_cast<size_t>(i) + 1]) > 1e-7f) {
            return fail("beta=0 does not collapse to the last layer");
        }
        if (std::fabs(b1.grid[static_cast<size_t>(i)] - trace.per_layer[1][static_cast<size_t>(i) + 1]) > 1e-7f) {
            return fail("beta=1 does not freeze the layer-2 seed");
        }
    }
    return {};
}

std::string check_upsample_pool_identity() {
    std::mt19937 rng(9);
    Tensor coarse = random_tensor({12, 6}, rng);  // 4x3 grid, 6-dim features
    Tensor up = upsample_features_2x(coarse, 4, 3);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 3; ++c) {
            for (int j = 0; j < 6; ++j) {
                float s = 0.0f;
                for (int dr = 0; dr < 2; ++dr) {
                    for (int dc = 0; dc < 2; ++dc) {
                        s += up.at((2 * r + dr) * 6 + (2 * c + dc), j);
                    }
                }
                if (s / 4.0f != coarse.at(r * 3 + c, j)) {
                    return fail("upsample->pool is not the identity");
                }
            }
        }
    }
    return {};
}

std::string check_region_oracle() {
    std::mt19937 rng(13);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int trial = 0; trial < 50; ++trial) {
        GcaMap g;
        g.rows = g.cols = 7;
        g.grid.resize(49);
        for (float& v : g.grid) v = u(rng);
        const int m = 2 + trial % 4;
        Region got = select_region(ngca_scan(g, m), m);
        // Exhaustive enumeration.
        int br = 0, bc = 0;
        float best = -1.0f;
        for (int r = 0; r + m <= 7; ++r) {
            for (int c = 0; c + m <= 7; ++c) {
                float s = 0.0f;
                for (int dr = 0; dr < m; ++dr)
                    for (int dc = 0; dc < m; ++dc) s += g.at(r + dr, c + dc);
                if (s > best) {
                    best = s;
                    br = r;
                    bc = c;
                }
            }
        }
        if (got.top_row != br || got.top_col != bc) {
            return fail("trial " + std::to_string(trial) + ": got (" +
                        std::to_string(got.top_row) + "," + std::to_string(got.top_col) +
                        ") want (" + std::to_string(br) + "," + std::to_string(bc) + ")");
        }
    }
    return {};
}

std::string check_end_to_end() {
    ModelConfig cfg;
    cfg.depth = 3;
    cfg.dim = 32;
    cfg.heads = 2;
    cfg.patch = 4;
    cfg.image_side = 32;
    cfg.classes = 7;
    cfg.region_m = 2;
    cfg.validate();
    WeightStore w = gen_weights(cfg, 1);
    std::mt19937 rng(17);
    Tensor img = random_tensor({3, 32, 32}, rng, 0.0f, 1.0f);

    cfg.eta = 0.0;
    InferenceResult exit0 = infer(img, w, cfg);
    if (exit0.stage != Stage::localization || !exit0.flops.exited_early) {
        return fail("eta=0 did not exit at localization");
    }
    cfg.eta = 1.0;
    InferDebug dbg;
    InferenceResult full = infer(img, w, cfg, &dbg);
    if (full.stage != Stage::focus || !full.has_region) return fail("eta=1 exited early");
    double s = 0.0;
    for (float p : full.probs) s += p;
    if (std::fabs(s - 1.0) > 1e-6) return fail("probs sum " + std::to_string(s));
    const FlopsReport& f = full.flops;
    if (f.total != f.localization + f.align + f.focus) return fail("FLOPs additivity violated");
    for (const auto& row : dbg.trace.per_layer) {
        double rs = 0.0;
        for (float v : row) rs += v;
        if (std::fabs(rs - 1.0) > 1e-5) return fail("trace row sums to " + std::to_string(rs));
    }
    InferenceResult again = infer(img, w, cfg);
    if (again.pred != full.pred || again.conf != full.conf) return fail("nondeterministic infer");
    return {};
}

}  // namespace

SelftestResult run_selftest() {
    const Check checks[] = {
        {"kernel_backend_equivalence", check_kernel_equivalence},
        {"softmax_rows_sum_to_one", check_softmax_rows},
        {"gelu_reference_value", check_gelu_value},
        {"flops_model_anchors", check_flops_anchors},
        {"loss_identities", check_loss_identities},
        {"partition_arithmetic", check_partition_arithmetic},
        {"gca_recurrence_endpoints", check_gca_endpoints},
        {"upsample_pool_identity", check_upsample_pool_identity},
        {"region_argmax_oracle", check_region_oracle},
        {"end_to_end_tiny_model", check_end_to_end},
    };

    SelftestResult out;
    Json arr = Json::array();
    for (const Check& c : checks) {
        std::string detail;
        try {
            detail = c.run();
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        Json entry;
        entry["name"] = c.name;
        entry["ok"] = detail.empty();
        entry["detail"] = detail;
        arr.push_back(std::move(entry));
        if (detail.empty()) {
            ++out.passed;
        } else {
            ++out.failed;
        }
    }
    out.report = Json{{"passed", out.passed}, {"failed", out.failed}, {"checks", std::move(arr)}};
    return out;
}

}  // namespace lfvit
