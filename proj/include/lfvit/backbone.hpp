#pragma once

#include <vector>

#include "lfvit/config.hpp"
#include "lfvit/tensor.hpp"
#include "lfvit/weights.hpp"

namespace lfvit {

// Encoder input/output. Row 0 of tokens is always the class token; patch
// tokens follow row-major over the grid.
struct TokenSequence {
    Tensor tokens;  // [(N+1) x D]
    int grid_rows = 0;
    int grid_cols = 0;

    int seq_len() const { return tokens.rows(); }
    int n_patches() const { return tokens.rows() - 1; }
};

// Head-averaged post-softmax class-token attention row per layer, length N+1.
struct ClassAttentionTrace {
    std::vector<std::vector<float>> per_layer;
};

// Optional full attention capture for diagnostics: per layer one
// [H x (N+1) x (N+1)] tensor of post-softmax rows.
struct AttentionCapture {
    std::vector<Tensor> per_layer;
};

struct EncodeResult {
    TokenSequence seq;
    ClassAttentionTrace trace;
};

// 2x2 non-overlapping mean pooling per channel. Throws DimError on odd sides.
Tensor downsample_half(const Tensor& image);

// Patch + positional embedding with the class token prepended. Accepts the
// full-resolution side or its half; the half-resolution grid uses bilinear
// interpolation of the fine positional table (class row shared).
TokenSequence embed(const Tensor& image, const WeightStore& w, const ModelConfig& cfg);

// One token row for the fine-grid patch at (grid_r, grid_c) of a
// full-resolution image: projection of the flattened patch plus its fine
// positional row.
std::vector<float> patch_token(const Tensor& image, int grid_r, int grid_c,
                               const WeightStore& w, const ModelConfig& cfg);

// L pre-norm blocks: Z' = MSA(LN(Z)) + Z, Z = FFN(LN(Z')) + Z'. Per-head
// attention uses scale 1/sqrt(D/H); the trace records the head-averaged
// class-token row of every layer.
EncodeResult encode(const TokenSequence& seq, const WeightStore& w, const ModelConfig& cfg,
                    AttentionCapture* capture = nullptr);

struct Classification {
    Tensor probs;  // [classes]
    int pred = 0;  // argmax, lowest index on ties
    float conf = 0.0f;
};

Classification classify(const TokenSequence& seq, const WeightStore& w);

}  // namespace lfvit
