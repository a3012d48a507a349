#include "lfvit/backbone.hpp"

#include <cmath>
#include <cstring>

#include "lfvit/kernels.hpp"

namespace lfvit {

namespace {

void check_image(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw DimError("expected a 3xHxW image, got shape " + image.shape_str());
    }
}

// Bilinear resample of the fine positional grid onto the coarse grid.
// Corner-aligned: coarse corners sample the fine corners exactly.
Tensor interpolate_pos_grid(const Tensor& pos_fine, int fine_side, int coarse_side, int dim) {
    Tensor out({coarse_side * coarse_side, dim});
    const auto src = [&](int r, int c) { return pos_fine.row(1 + r * fine_side + c); };
    for (int r = 0; r < coarse_side; ++r) {
        const double fr = coarse_side > 1
                              ? static_cast<double>(r) * (fine_side - 1) / (coarse_side - 1)
                              : (fine_side - 1) / 2.0;
        const int r0 = static_cast<int>(fr);
        const int r1 = r0 + 1 < fine_side ? r0 + 1 : fine_side - 1;
        const float wr = static_cast<float>(fr - r0);
        for (int c = 0; c < coarse_side; ++c) {
            const double fc = coarse_side > 1
                                  ? static_cast<double>(c) * (fine_side - 1) / (coarse_side - 1)
                                  : (fine_side - 1) / 2.0;
            const int c0 = static_cast<int>(fc);
            const int c1 = c0 + 1 < fine_side ? c0 + 1 : fine_side - 1;
            const float wc = static_cast<float>(fc - c0);
            float* dst = out.row(r * coarse_side + c);
            const float* p00 = src(r0, c0);
            const float* p01 = src(r0, c1);
            const float* p10 = src(r1, c0);
            const float* p11 = src(r1, c1);
            for (int j = 0; j < dim; ++j) {
                const float top = p00[j] + wc * (p01[j] - p00[j]);
                const float bot = p10[j] + wc * (p11[j] - p10[j]);
                dst[j] = top + wr * (bot - top);
            }
        }
    }
    return out;
}

void flatten_patch(const Tensor& image, int side, int patch, int grid_r, int grid_c, float* dst) {
    const int y0 = grid_r * patch;
    const int x0 = grid_c * patch;
    std::size_t k = 0;
    for (int ch = 0; ch < 3; ++ch) {
        const float* plane = image.data.data() + static_cast<std::size_t>(ch) * side * side;
        for (int y = 0; y < patch; ++y) {
            const float* rowp = plane + static_cast<std::size_t>(y0 + y) * side + x0;
            for (int x = 0; x < patch; ++x) dst[k++] = rowp[x];
        }
    }
}

void add_bias_rows(float* x, const float* bias, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        float* xr = x + static_cast<std::size_t>(r) * cols;
        kern::add_f32(xr, bias, xr, static_cast<std::size_t>(cols));
    }
}

}  // namespace

Tensor downsample_half(const Tensor& image) {
    check_image(image);
    const int h = image.dim(1);
    const int wdt = image.dim(2);
    if (h % 2 != 0 || wdt % 2 != 0) {
        throw DimError("downsample_half requires even sides, got " + image.shape_str());
    }
    Tensor out({3, h / 2, wdt / 2});
    for (int ch = 0; ch < 3; ++ch) {
        const float* src = image.data.data() + static_cast<std::size_t>(ch) * h * wdt;
        float* dst = out.data.data() + static_cast<std::size_t>(ch) * (h / 2) * (wdt / 2);
        for (int y = 0; y < h / 2; ++y) {
            const float* r0 = src + static_cast<std::size_t>(2 * y) * wdt;
            const float* r1 = r0 + wdt;
            for (int x = 0; x < wdt / 2; ++x) {
                dst[static_cast<std::size_t>(y) * (wdt / 2) + x] =
                    (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]) * 0.25f;
            }
        }
    }
    return out;
}

TokenSequence embed(const Tensor& image, const WeightStore& w, const ModelConfig& cfg) {
    check_image(image);
    const int side = image.dim(1);
    if (image.dim(2) != side) {
        throw DimError("embed expects a square image, got " + image.shape_str());
    }
    if (side != cfg.image_side && side != cfg.image_side / 2) {
        throw DimError("embed: side " + std::to_string(side) + " is neither image_side " +
                       std::to_string(cfg.image_side) + " nor its half");
    }
    if (side % cfg.patch != 0) {
        throw DimError("embed: side " + std::to_string(side) + " not divisible by patch " +
                       std::to_string(cfg.patch));
    }

    const int grid = side / cfg.patch;
    const int n = grid * grid;
    const int d = cfg.dim;
    const int patch_dim = 3 * cfg.patch * cfg.patch;

    Tensor patches({n, patch_dim});
    for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
            flatten_patch(image, side, cfg.patch, r, c, patches.row(r * grid + c));
        }
    }
    Tensor projected = kern::matmul(patches, w.patch_proj);

    const bool fine = side == cfg.image_side;
    Tensor pos_coarse;
    if (!fine) pos_coarse = interpolate_pos_grid(w.pos_embed, cfg.fine_grid(), grid, d);

    TokenSequence seq;
    seq.grid_rows = grid;
    seq.grid_cols = grid;
    seq.tokens = Tensor({n + 1, d});
    kern::add_f32(w.cls_token.data.data(), w.pos_embed.row(0), seq.tokens.row(0),
                  static_cast<std::size_t>(d));
    for (int p = 0; p < n; ++p) {
        const float* pos = fine ? w.pos_embed.row(1 + p) : pos_coarse.row(p);
        kern::add_f32(projected.row(p), pos, seq.tokens.row(1 + p), static_cast<std::size_t>(d));
    }
    return seq;
}

std::vector<float> patch_token(const Tensor& image, int grid_r, int grid_c, const WeightStore& w,
                               const ModelConfig& cfg) {
    check_image(image);
    if (image.dim(1) != cfg.image_side || image.dim(2) != cfg.image_side) {
        throw DimError("patch_token expects the full-resolution image, got " + image.shape_str());
    }
    const int patch_dim = 3 * cfg.patch * cfg.patch;
    std::vector<float> flat(static_cast<std::size_t>(patch_dim));
    flatten_patch(image, cfg.image_side, cfg.patch, grid_r, grid_c, flat.data());

    std::vector<float> token(static_cast<std::size_t>(cfg.dim));
    kern::matmul_f32(flat.data(), w.patch_proj.data.data(), token.data(), 1, patch_dim, cfg.dim);
    const float* pos = w.pos_embed.row(1 + grid_r * cfg.fine_grid() + grid_c);
    kern::add_f32(token.data(), pos, token.data(), token.size());
    return token;
}

EncodeResult encode(const TokenSequence& seq, const WeightStore& w, const ModelConfig& cfg,
                    AttentionCapture* capture) {
    const int t = seq.seq_len();
    const int d = cfg.dim;
    const int h = cfg.heads;
    const int dh = cfg.head_dim();
    const int hidden = cfg.ffn_hidden();
    if (seq.tokens.cols() != d) {
        throw DimError("encode: token dim " + std::to_string(seq.tokens.cols()) +
                       " does not match config dim " + std::to_string(d));
    }
    if (static_cast<int>(w.blocks.size()) != cfg.depth) {
        throw DimError("encode: weight store has " + std::to_string(w.blocks.size()) +
                       " blocks, config says " + std::to_string(cfg.depth));
    }

    EncodeResult out;
    out.seq = seq;
    out.trace.per_layer.resize(static_cast<std::size_t>(cfg.depth));
    if (capture) capture->per_layer.assign(static_cast<std::size_t>(cfg.depth), Tensor());

    Tensor norm({t, d});
    Tensor q({t, d}), k({t, d}), v({t, d});
    Tensor qh({t, dh}), kh({t, dh}), vh({t, dh});
    Tensor scores({t, t});
    Tensor concat({t, d});
    Tensor proj({t, d});
    Tensor ffn_hidden({t, hidden});
    Tensor ffn_out({t, d});

    const float att_scale = 1.0f / std::sqrt(static_cast<float>(dh));
    float* x = out.seq.tokens.data.data();

    for (int layer = 0; layer < cfg.depth; ++layer) {
        const BlockWeights& b = w.blocks[static_cast<std::size_t>(layer)];

        kern::layer_norm_rows_f32(x, b.ln1_gamma.data.data(), b.ln1_beta.data.data(),
                                  norm.data.data(), t, d, static_cast<float>(cfg.eps));
        kern::matmul_f32(norm.data.data(), b.wq.data.data(), q.data.data(), t, d, d);
        kern::matmul_f32(norm.data.data(), b.wk.data.data(), k.data.data(), t, d, d);
        kern::matmul_f32(norm.data.data(), b.wv.data.data(), v.data.data(), t, d, d);

        std::vector<float> cls_row(static_cast<std::size_t>(t), 0.0f);
        if (capture) capture->per_layer[static_cast<std::size_t>(layer)] = Tensor({h, t, t});

        for (int head = 0; head < h; ++head) {
            const int off = head * dh;
            for (int r = 0; r < t; ++r) {
                std::memcpy(qh.row(r), q.row(r) + off, sizeof(float) * static_cast<std::size_t>(dh));
                std::memcpy(kh.row(r), k.row(r) + off, sizeof(float) * static_cast<std::size_t>(dh));
                std::memcpy(vh.row(r), v.row(r) + off, sizeof(float) * static_cast<std::size_t>(dh));
            }
            kern::matmul_nt_f32(qh.data.data(), kh.data.data(), scores.data.data(), t, dh, t);
            kern::scale_f32(scores.data.data(), scores.numel(), att_scale);
            kern::softmax_rows_f32(scores.data.data(), t, t);

            if (capture) {
                std::memcpy(capture->per_layer[static_cast<std::size_t>(layer)].data.data() +
                                static_cast<std::size_t>(head) * t * t,
                            scores.data.data(), sizeof(float) * static_cast<std::size_t>(t) * t);
            }
            for (int j = 0; j < t; ++j) cls_row[static_cast<std::size_t>(j)] += scores.at(0, j);

            kern::matmul_f32(scores.data.data(), vh.data.data(), qh.data.data(), t, t, dh);
            for (int r = 0; r < t; ++r) {
                std::memcpy(concat.row(r) + off, qh.row(r), sizeof(float) * static_cast<std::size_t>(dh));
            }
        }
        const float inv_h = 1.0f / static_cast<float>(h);
        for (float& c : cls_row) c *= inv_h;
        out.trace.per_layer[static_cast<std::size_t>(layer)] = std::move(cls_row);

        kern::matmul_f32(concat.data.data(), b.wo.data.data(), proj.data.data(), t, d, d);
        kern::add_f32(x, proj.data.data(), x, static_cast<std::size_t>(t) * d);

        kern::layer_norm_rows_f32(x, b.ln2_gamma.data.data(), b.ln2_beta.data.data(),
                                  norm.data.data(), t, d, static_cast<float>(cfg.eps));
        kern::matmul_f32(norm.data.data(), b.ffn_w1.data.data(), ffn_hidden.data.data(), t, d,
                         hidden);
        add_bias_rows(ffn_hidden.data.data(), b.ffn_b1.data.data(), t, hidden);
        kern::gelu_f32(ffn_hidden.data.data(), ffn_hidden.data.data(), ffn_hidden.numel());
        kern::matmul_f32(ffn_hidden.data.data(), b.ffn_w2.data.data(), ffn_out.data.data(), t,
                         hidden, d);
        add_bias_rows(ffn_out.data.data(), b.ffn_b2.data.data(), t, d);
        kern::add_f32(x, ffn_out.data.data(), x, static_cast<std::size_t>(t) * d);
    }
    return out;
}

Classification classify(const TokenSequence& seq, const WeightStore& w) {
    const int d = seq.tokens.cols();
    const int n = w.head_w.cols();
    if (w.head_w.rows() != d) {
        throw DimError("classify: head shape " + w.head_w.shape_str() +
                       " does not match token dim " + std::to_string(d));
    }
    Tensor logits({n});
    kern::matmul_f32(seq.tokens.row(0), w.head_w.data.data(), logits.data.data(), 1, d, n);
    kern::add_f32(logits.data.data(), w.head_b.data.data(), logits.data.data(),
                  static_cast<std::size_t>(n));

    Classification cls;
    cls.probs = kern::softmax(logits);
    cls.pred = 0;
    for (int i = 1; i < n; ++i) {
        if (cls.probs.data[static_cast<std::size_t>(i)] >
            cls.probs.data[static_cast<std::size_t>(cls.pred)]) {
            cls.pred = i;
        }
    }
    cls.conf = cls.probs.data[static_cast<std::size_t>(cls.pred)];
    return cls;
}

}  // namespace lfvit
