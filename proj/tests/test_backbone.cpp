#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <vector>

#include "lfvit/backbone.hpp"
#include "lfvit/weights.hpp"
#include "test_util.hpp"

using lfvit::ClassAttentionTrace;
using lfvit::EncodeResult;
using lfvit::ModelConfig;
using lfvit::Tensor;
using lfvit::TokenSequence;
using lfvit::WeightStore;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.depth = 2;
    cfg.dim = 4;
    cfg.heads = 2;
    cfg.patch = 1;
    cfg.image_side = 4;
    cfg.classes = 3;
    cfg.region_m = 1;
    cfg.validate();
    return cfg;
}

// Independent double-precision re-evaluation of the pre-norm block chain.
struct RefEncoder {
    static std::vector<std::vector<double>> to_rows(const Tensor& t) {
        std::vector<std::vector<double>> rows(static_cast<size_t>(t.dim(0)));
        for (int r = 0; r < t.dim(0); ++r) {
            rows[static_cast<size_t>(r)].assign(t.row(r), t.row(r) + t.dim(1));
        }
        return rows;
    }

    static std::vector<std::vector<double>> matmul(const std::vector<std::vector<double>>& a,
                                                   const Tensor& b) {
        const int k = b.dim(0), n = b.dim(1);
        std::vector<std::vector<double>> c(a.size(), std::vector<double>(n, 0.0));
        for (size_t i = 0; i < a.size(); ++i) {
            for (int j = 0; j < n; ++j) {
                double s = 0.0;
                for (int p = 0; p < k; ++p) s += a[i][static_cast<size_t>(p)] * b.at(p, j);
                c[i][static_cast<size_t>(j)] = s;
            }
        }
        return c;
    }

    static std::vector<std::vector<double>> layer_norm(
        const std::vector<std::vector<double>>& x, const Tensor& gamma, const Tensor& beta,
        double eps) {
        auto y = x;
        for (auto& row : y) {
            double mean = 0.0;
            for (double v : row) mean += v;
            mean /= static_cast<double>(row.size());
            double var = 0.0;
            for (double v : row) var += (v - mean) * (v - mean);
            var /= static_cast<double>(row.size());
            const double inv = 1.0 / std::sqrt(var + eps);
            for (size_t j = 0; j < row.size(); ++j) {
                row[j] = (row[j] - mean) * inv * gamma.data[j] + beta.data[j];
            }
        }
        return y;
    }

    static EncodeResult run(const TokenSequence& seq, const WeightStore& w,
                            const ModelConfig& cfg) {
        const int t = seq.tokens.dim(0), d = cfg.dim, h = cfg.heads, dh = cfg.head_dim();
        auto z = to_rows(seq.tokens);
        ClassAttentionTrace trace;
        for (const auto& blk : w.blocks) {
            auto ln = layer_norm(z, blk.ln1_gamma, blk.ln1_beta, cfg.eps);
            auto q = matmul(ln, blk.wq), k = matmul(ln, blk.wk), v = matmul(ln, blk.wv);
            std::vector<std::vector<double>> concat(static_cast<size_t>(t),
                                                    std::vector<double>(d, 0.0));
            std::vector<float> cls_row(static_cast<size_t>(t), 0.0f);
            for (int head = 0; head < h; ++head) {
                const int off = head * dh;
                // scores, softmax, weighted values for this head
                for (int i = 0; i < t; ++i) {
                    std::vector<double> score(static_cast<size_t>(t), 0.0);
                    double mx = -1e300;
                    for (int j = 0; j < t; ++j) {
                        double s = 0.0;
                        for (int p = 0; p < dh; ++p) {
                            s += q[static_cast<size_t>(i)][static_cast<size_t>(off + p)] *
                                 k[static_cast<size_t>(j)][static_cast<size_t>(off + p)];
                        }
                        s /= std::sqrt(static_cast<double>(dh));
                        score[static_cast<size_t>(j)] = s;
                        mx = std::max(mx, s);
                    }
                    double sum = 0.0;
                    for (double& s : score) {
                        s = std::exp(s - mx);
                        sum += s;
                    }
                    for (double& s : score) s /= sum;
                    if (i == 0) {
                        for (int j = 0; j < t; ++j) {
                            cls_row[static_cast<size_t>(j)] +=
                                static_cast<float>(score[static_cast<size_t>(j)] / h);
                        }
                    }
                    for (int p = 0; p < dh; ++p) {
                        double acc = 0.0;
                        for (int j = 0; j < t; ++j) {
                            acc += score[static_cast<size_t>(j)] *
                                   v[static_cast<size_t>(j)][static_cast<size_t>(off + p)];
                        }
                        concat[static_cast<size_t>(i)][static_cast<size_t>(off + p)] = acc;
                    }
                }
            }
            trace.per_layer.push_back(cls_row);
            auto proj = matmul(concat, blk.wo);
            for (int i = 0; i < t; ++i) {
                for (int j = 0; j < d; ++j) {
                    z[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
                        proj[static_cast<size_t>(i)][static_cast<size_t>(j)];
                }
            }
            auto ln2 = layer_norm(z, blk.ln2_gamma, blk.ln2_beta, cfg.eps);
            auto hidden = matmul(ln2, blk.ffn_w1);
            for (auto& row : hidden) {
                for (size_t j = 0; j < row.size(); ++j) {
                    double x = row[j] + blk.ffn_b1.data[j];
                    row[j] = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
                }
            }
            auto outp = matmul(hidden, blk.ffn_w2);
            for (int i = 0; i < t; ++i) {
                for (int j = 0; j < d; ++j) {
                    z[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
                        outp[static_cast<size_t>(i)][static_cast<size_t>(j)] +
                        blk.ffn_b2.data[static_cast<size_t>(j)];
                }
            }
        }
        EncodeResult res;
        res.seq.tokens = Tensor::zeros({t, d});
        res.seq.grid_rows = seq.grid_rows;
        res.seq.grid_cols = seq.grid_cols;
        for (int i = 0; i < t; ++i) {
            for (int j = 0; j < d; ++j) {
                res.seq.tokens.at(i, j) =
                    static_cast<float>(z[static_cast<size_t>(i)][static_cast<size_t>(j)]);
            }
        }
        res.trace = trace;
        return res;
    }
};

}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("downsample_half pooling arithmetic") {
    Tensor constant = Tensor::zeros({3, 4, 4});
    for (float& v : constant.data) v = 0.75f;
    Tensor down = lfvit::downsample_half(constant);
    REQUIRE(down.shape == std::vector<int>{3, 2, 2});
    for (float v : down.data) CHECK(v == 0.75f);

    Tensor block = Tensor::zeros({3, 2, 2});
    block.data = {1, 2, 3, 5, 1, 2, 3, 5, 1, 2, 3, 5};
    Tensor one = lfvit::downsample_half(block);
    for (int c = 0; c < 3; ++c) CHECK(one.data[static_cast<size_t>(c)] == 2.75f);
}

TEST_CASE("downsample_half equals explicit mean oracle exactly") {
    std::mt19937 rng(50);
    Tensor img = random_tensor({3, 8, 8}, rng, 0.0f, 1.0f);
    Tensor down = lfvit::downsample_half(img);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 4; ++y) {
            for (int x = 0; x < 4; ++x) {
                float s = 0.0f;
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        s += img.data[static_cast<size_t>(c) * 64 +
                                      static_cast<size_t>(2 * y + dy) * 8 +
                                      static_cast<size_t>(2 * x + dx)];
                    }
                }
                CHECK(down.data[static_cast<size_t>(c) * 16 + static_cast<size_t>(y) * 4 + x] ==
                      s / 4.0f);
            }
        }
    }
}

TEST_CASE("downsample_half rejects odd dimensions") {
    CHECK_THROWS_AS(lfvit::downsample_half(Tensor::zeros({3, 5, 4})), lfvit::DimError);
}

TEST_CASE("embed zero image with zero positional table") {
    ModelConfig cfg;
    cfg.depth = 3;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.patch = 16;
    cfg.image_side = 224;
    cfg.classes = 3;
    cfg.region_m = 5;
    cfg.validate();
    WeightStore w = lfvit::gen_weights(cfg, 2);
    for (float& v : w.pos_embed.data) v = 0.0f;
    Tensor img = Tensor::zeros({3, 224, 224});
    TokenSequence seq = lfvit::embed(img, w, cfg);
    REQUIRE(seq.tokens.dim(0) == 197);
    CHECK(seq.grid_rows == 14);
    CHECK(seq.grid_cols == 14);
    for (int j = 0; j < 8; ++j) {
        CHECK(seq.tokens.at(0, j) == w.cls_token.data[static_cast<size_t>(j)]);
    }
    for (int r = 1; r < 197; ++r) {
        for (int j = 0; j < 8; ++j) CHECK(seq.tokens.at(r, j) == 0.0f);
    }

    TokenSequence half = lfvit::embed(lfvit::downsample_half(img), w, cfg);
    CHECK(half.tokens.dim(0) == 50);
    CHECK(half.grid_rows == 7);
    CHECK(half.grid_cols == 7);
}

TEST_CASE("one-hot patch pixel extracts one projection row") {
    ModelConfig cfg;
    cfg.depth = 3;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.patch = 16;
    cfg.image_side = 224;
    cfg.classes = 3;
    cfg.region_m = 5;
    WeightStore w = lfvit::gen_weights(cfg, 3);
    Tensor img = Tensor::zeros({3, 224, 224});
    const int c0 = 1, y0 = 3, x0 = 13;  // inside fine patch (0,0)
    img.data[static_cast<size_t>(c0) * 224 * 224 + static_cast<size_t>(y0) * 224 + x0] = 1.0f;
    TokenSequence seq = lfvit::embed(img, w, cfg);
    const int flat = c0 * 16 * 16 + y0 * 16 + x0;  // channel-major patch flattening
    for (int j = 0; j < 8; ++j) {
        CHECK(seq.tokens.at(1, j) ==
              doctest::Approx(w.patch_proj.at(flat, j) + w.pos_embed.at(1, j)).epsilon(1e-7));
    }
    // patch_token agrees with embed's row for the same position.
    std::vector<float> tok = lfvit::patch_token(img, 0, 0, w, cfg);
    for (int j = 0; j < 8; ++j) CHECK(tok[static_cast<size_t>(j)] == seq.tokens.at(1, j));
}

TEST_CASE("half-resolution positional rows: align-corners bilinear oracle") {
    ModelConfig cfg;
    cfg.depth = 3;
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.patch = 16;
    cfg.image_side = 224;
    cfg.classes = 3;
    cfg.region_m = 5;
    WeightStore w = lfvit::gen_weights(cfg, 4);
    Tensor half_img = Tensor::zeros({3, 112, 112});
    TokenSequence seq = lfvit::embed(half_img, w, cfg);  // zero image -> tokens are pos rows
    auto fine_pos = [&](int r, int c, int j) { return w.pos_embed.at(1 + r * 14 + c, j); };
    for (int j = 0; j < 8; ++j) {
        // Corners map exactly onto fine corners.
        CHECK(seq.tokens.at(1 + 0 * 7 + 0, j) == doctest::Approx(fine_pos(0, 0, j)).epsilon(1e-7));
        CHECK(seq.tokens.at(1 + 6 * 7 + 6, j) ==
              doctest::Approx(fine_pos(13, 13, j)).epsilon(1e-7));
        // Coarse (3,3) sits at fine coordinate (6.5, 6.5): mean of 4 neighbors.
        const float want = 0.25f * (fine_pos(6, 6, j) + fine_pos(6, 7, j) + fine_pos(7, 6, j) +
                                    fine_pos(7, 7, j));
        CHECK(seq.tokens.at(1 + 3 * 7 + 3, j) == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("encode matches an independent double-precision block oracle") {
    ModelConfig cfg = tiny_cfg();
    WeightStore w = lfvit::gen_weights(cfg, 5);
    std::mt19937 rng(51);
    TokenSequence seq;
    seq.tokens = random_tensor({3, 4}, rng);
    seq.grid_rows = 1;
    seq.grid_cols = 2;
    EncodeResult got = lfvit::encode(seq, w, cfg);
    EncodeResult want = RefEncoder::run(seq, w, cfg);
    CHECK(max_abs_diff(got.seq.tokens, want.seq.tokens) < 1e-5);
    REQUIRE(got.trace.per_layer.size() == want.trace.per_layer.size());
    for (size_t l = 0; l < got.trace.per_layer.size(); ++l) {
        for (size_t i = 0; i < got.trace.per_layer[l].size(); ++i) {
            CHECK(std::fabs(got.trace.per_layer[l][i] - want.trace.per_layer[l][i]) < 1e-5);
        }
    }
}

TEST_CASE("encode attention rows and trace vectors are distributions") {
    ModelConfig cfg = tiny_cfg();
    cfg.dim = 8;
    cfg.heads = 2;
    cfg.depth = 3;
    WeightStore w = lfvit::gen_weights(cfg, 6);
    std::mt19937 rng(52);
    TokenSequence seq;
    seq.tokens = random_tensor({7, 8}, rng);
    seq.grid_rows = 2;
    seq.grid_cols = 3;
    lfvit::AttentionCapture cap;
    EncodeResult res = lfvit::encode(seq, w, cfg, &cap);
    REQUIRE(cap.per_layer.size() == 3);
    for (const Tensor& layer : cap.per_layer) {
        REQUIRE(layer.shape == std::vector<int>{2, 7, 7});
        for (int h = 0; h < 2; ++h) {
            for (int i = 0; i < 7; ++i) {
                double s = 0.0;
                for (int j = 0; j < 7; ++j) {
                    const float v = layer.data[static_cast<size_t>(h) * 49 +
                                               static_cast<size_t>(i) * 7 + j];
                    CHECK(v >= 0.0f);
                    s += v;
                }
                CHECK(std::fabs(s - 1.0) < 1e-5);
            }
        }
    }
    for (const auto& row : res.trace.per_layer) {
        double s = 0.0;
        for (float v : row) {
            CHECK(v >= 0.0f);
            s += v;
        }
        CHECK(std::fabs(s - 1.0) < 1e-5);
    }
}

TEST_CASE("encode is deterministic and permutation-equivariant") {
    ModelConfig cfg = tiny_cfg();
    cfg.dim = 8;
    cfg.heads = 2;
    WeightStore w = lfvit::gen_weights(cfg, 7);
    std::mt19937 rng(53);
    TokenSequence seq;
    seq.tokens = random_tensor({6, 8}, rng);
    seq.grid_rows = 1;
    seq.grid_cols = 5;

    EncodeResult a = lfvit::encode(seq, w, cfg);
    EncodeResult b = lfvit::encode(seq, w, cfg);
    CHECK(std::memcmp(a.seq.tokens.data.data(), b.seq.tokens.data.data(),
                      a.seq.tokens.data.size() * sizeof(float)) == 0);

    // Swap patch tokens 2 and 4 (rows 2 and 4; the class row stays put).
    TokenSequence swapped = seq;
    for (int j = 0; j < 8; ++j) std::swap(swapped.tokens.at(2, j), swapped.tokens.at(4, j));
    EncodeResult c = lfvit::encode(swapped, w, cfg);
    for (int i = 0; i < 6; ++i) {
        const int src = (i == 2) ? 4 : (i == 4) ? 2 : i;
        for (int j = 0; j < 8; ++j) {
            CHECK(std::fabs(c.seq.tokens.at(i, j) - a.seq.tokens.at(src, j)) < 1e-6);
        }
    }
    for (size_t l = 0; l < a.trace.per_layer.size(); ++l) {
        for (int i = 0; i < 6; ++i) {
            const int src = (i == 2) ? 4 : (i == 4) ? 2 : i;
            CHECK(std::fabs(c.trace.per_layer[l][static_cast<size_t>(i)] -
                            a.trace.per_layer[l][static_cast<size_t>(src)]) < 1e-6);
        }
    }
}

TEST_CASE("classify: uniform tie, probability contract, direct formula") {
    ModelConfig cfg = tiny_cfg();
    WeightStore w = lfvit::gen_weights(cfg, 8);
    TokenSequence seq;
    std::mt19937 rng(54);
    seq.tokens = random_tensor({3, 4}, rng);
    seq.grid_rows = 1;
    seq.grid_cols = 2;

    for (float& v : w.head_w.data) v = 0.0f;
    for (float& v : w.head_b.data) v = 0.0f;
    lfvit::Classification uniform = lfvit::classify(seq, w);
    CHECK(uniform.pred == 0);
    CHECK(uniform.conf == doctest::Approx(1.0 / 3.0).epsilon(1e-6));

    w.head_b.data = {2.0f, 1.0f, 0.0f};
    lfvit::Classification hand = lfvit::classify(seq, w);
    const double denom = std::exp(2.0) + std::exp(1.0) + 1.0;
    CHECK(hand.pred == 0);
    CHECK(hand.conf == doctest::Approx(std::exp(2.0) / denom).epsilon(1e-6));
    double sum = 0.0;
    for (float v : hand.probs.data) sum += v;
    CHECK(std::fabs(sum - 1.0) < 1e-6);

    // Positive scaling of the logits never moves the argmax.
    for (float& v : w.head_b.data) v *= 7.5f;
    CHECK(lfvit::classify(seq, w).pred == hand.pred);
}

}  // TEST_SUITE
