#pragma once

#include <cstdint>
#include <string>

#include "lfvit/backbone.hpp"
#include "lfvit/tensor.hpp"

namespace lfvit {

// Moving-average class attention restricted to the localization patch grid.
struct GcaMap {
    int rows = 0;
    int cols = 0;
    std::vector<float> grid;  // row-major, rows*cols entries, all >= 0

    float at(int r, int c) const {
        return grid[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)];
    }
};

// Selected class-discriminative window in coarse-grid coordinates.
struct Region {
    int top_row = 0;
    int top_col = 0;
    int m = 0;
    float score = 0.0f;
};

enum class RegionVariant { negative_ngca, max_gca, min_gca, random };

// Moving average over layers: seeded with the layer-2 class attention,
// then a <- beta*a + (1-beta)*a_l for l = 3..L. The class-token entry is
// dropped (not renormalized) and the patch entries reshape row-major onto
// the grid. Requires at least 3 layers and beta in [0,1].
GcaMap accumulate_gca(const ClassAttentionTrace& trace, double beta, int rows, int cols);

// Sliding m x m window sums; output is (rows-m+1) x (cols-m+1).
Tensor ngca_scan(const GcaMap& gca, int m);

// Argmax window, row-major tie-break (smallest row, then smallest column).
Region select_region(const Tensor& ngca, int m);

// Ablation selectors. negative_ngca takes the argmin window; max_gca/min_gca
// center the window on the extreme cell and clamp into bounds; random picks
// uniformly over all windows from the seed.
Region select_region_variant(const GcaMap& gca, int m, RegionVariant variant,
                             std::uint64_t seed = 0);

const char* region_variant_name(RegionVariant v);
RegionVariant region_variant_from_name(const std::string& name);  // throws ConfigError

// 8-bit PGM with min-max normalization (constant maps render as zeros).
void write_pgm(const std::string& path, int rows, int cols, const float* values);

}  // namespace lfvit
