#pragma once

#include <vector>

#include "lfvit/attention_maps.hpp"
#include "lfvit/backbone.hpp"
#include "lfvit/config.hpp"

namespace lfvit {

// Localization features carried onto the fine grid: 2x nearest upsampling
// (each coarse cell feeds exactly its 4 children) followed by the shared
// positionwise D->D MLP.
struct AlignedFeatures {
    Tensor f_prime;  // [n_fine x D]
    int fine_rows = 0;
    int fine_cols = 0;
};

// Partition of focus-stage positions. fresh/reused_region are fine-grid
// indices and together cover the upsampled region exactly;
// reused_background holds fine indices in full_sequence mode and coarse
// indices in compact_sequence mode. All lists are sorted ascending.
struct FocusPlan {
    std::vector<int> fresh;
    std::vector<int> reused_region;
    std::vector<int> reused_background;
    Region region;
    FocusMode mode = FocusMode::full_sequence;
    int fine_rows = 0, fine_cols = 0;
    int coarse_rows = 0, coarse_cols = 0;
};

// Where each focus-sequence token (beyond the class token) came from.
struct TokenOrigin {
    enum class Kind { fresh, reused_region, background_fine, background_coarse };
    Kind kind;
    int index;  // fine-grid index, or coarse-grid index for background_coarse
};

struct FocusSequence {
    TokenSequence seq;
    std::vector<TokenOrigin> origins;  // one per token row after the class token
};

// Nearest 2x upsampling of a feature grid: input rows*cols feature vectors,
// output (2*rows)*(2*cols) vectors, children replicate their parent.
Tensor upsample_features_2x(const Tensor& features, int rows, int cols);
GcaMap upsample_gca_2x(const GcaMap& gca);

// apply_activation=false bypasses the GELU (test mode: with identity weights
// and zero bias the output then replicates the coarse features exactly).
AlignedFeatures align_features(const TokenSequence& loc_output, const WeightStore& w,
                               const ModelConfig& cfg, bool apply_activation = true);

// The (2m)^2 fine indices covered by a coarse region, row-major ascending.
std::vector<int> region_to_fine_indices(const Region& region, int fine_rows, int fine_cols);

// Ranks the upsampled region by fine-grid GCA (children inherit the parent
// score), descending with ascending-index tie-break; the top
// floor(alpha*(2m)^2) become fresh. Throws ConfigError when that count is 0.
FocusPlan build_focus_plan(const Region& region, const GcaMap& gca, const ModelConfig& cfg);

// Focus-stage input: fresh positions are re-embedded from the original image
// and fused (element-wise add) with their aligned features; reused positions
// carry aligned features as-is; compact-mode background carries localization
// output tokens. A fresh class token (parameter + class positional row) is
// prepended.
FocusSequence fuse_and_assemble(const Tensor& image, const FocusPlan& plan,
                                const AlignedFeatures& aligned, const TokenSequence& loc_output,
                                const WeightStore& w, const ModelConfig& cfg);

}  // namespace lfvit
