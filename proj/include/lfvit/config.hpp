#pragma once

#include <string>

#include "lfvit/tensor.hpp"

namespace lfvit {

// Focus-stage sequence composition. full_sequence keeps every fine-grid
// position in the sequence; compact_sequence keeps background tokens at
// coarse granularity.
enum class FocusMode { full_sequence, compact_sequence };

const char* focus_mode_name(FocusMode m);
FocusMode focus_mode_from_name(const std::string& name);  // throws ConfigError

// Architecture and policy hyperparameters shared by both inference stages.
struct ModelConfig {
    int depth = 12;        // encoder blocks
    int dim = 384;         // token width
    int heads = 6;
    int patch = 16;        // patch side in pixels
    int image_side = 224;  // full-resolution input side
    int classes = 1000;
    int region_m = 5;      // class-discriminative window side, coarse cells
    double eta = 0.47;     // early-exit confidence threshold
    double alpha = 0.88;   // fraction of region tokens recomputed at full res
    double beta = 0.99;    // class-attention moving-average momentum
    FocusMode focus_mode = FocusMode::full_sequence;
    double eps = 1e-6;

    int fine_grid() const { return image_side / patch; }
    int coarse_grid() const { return image_side / (2 * patch); }
    int n_fine() const { return fine_grid() * fine_grid(); }
    int n_coarse() const { return coarse_grid() * coarse_grid(); }
    int head_dim() const { return dim / heads; }
    int ffn_hidden() const { return 4 * dim; }

    void validate() const;  // throws ConfigError on any violated invariant

    static ModelConfig deit_small();  // L=12, D=384, H=6, P=16, 224 input
};

}  // namespace lfvit
