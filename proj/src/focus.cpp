#include "lfvit/focus.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "lfvit/kernels.hpp"

namespace lfvit {

Tensor upsample_features_2x(const Tensor& features, int rows, int cols) {
    if (rows <= 0 || cols <= 0) {
        throw DimError("upsample_features_2x: grid must be positive, got " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (features.rank() != 2 || features.dim(0) != rows * cols) {
        throw DimError("upsample_features_2x: features " + features.shape_str() +
                       " do not match grid " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    const int d = features.dim(1);
    Tensor out = Tensor::zeros({2 * rows * 2 * cols, d});
    for (int r = 0; r < 2 * rows; ++r) {
        for (int c = 0; c < 2 * cols; ++c) {
            const float* src = features.row((r / 2) * cols + (c / 2));
            std::memcpy(out.row(r * 2 * cols + c), src, sizeof(float) * static_cast<size_t>(d));
        }
    }
    return out;
}

GcaMap upsample_gca_2x(const GcaMap& gca) {
    if (gca.rows <= 0 || gca.cols <= 0 ||
        gca.grid.size() != static_cast<size_t>(gca.rows) * static_cast<size_t>(gca.cols)) {
        throw DimError("upsample_gca_2x: malformed GCA map");
    }
    GcaMap out;
    out.rows = 2 * gca.rows;
    out.cols = 2 * gca.cols;
    out.grid.resize(static_cast<size_t>(out.rows) * static_cast<size_t>(out.cols));
    for (int r = 0; r < out.rows; ++r) {
        for (int c = 0; c < out.cols; ++c) {
            out.grid[static_cast<size_t>(r) * out.cols + c] = gca.at(r / 2, c / 2);
        }
    }
    return out;
}

AlignedFeatures align_features(const TokenSequence& loc_output, const WeightStore& w,
                               const ModelConfig& cfg, bool apply_activation) {
    const int gc = cfg.coarse_grid();
    const int d = cfg.dim;
    if (loc_output.grid_rows != gc || loc_output.grid_cols != gc) {
        throw DimError("align_features: localization grid " + std::to_string(loc_output.grid_rows) +
                       "x" + std::to_string(loc_output.grid_cols) + " does not match expected " +
                       std::to_string(gc) + "x" + std::to_string(gc));
    }
    if (loc_output.tokens.rank() != 2 || loc_output.tokens.dim(0) != gc * gc + 1 ||
        loc_output.tokens.dim(1) != d) {
        throw DimError("align_features: token matrix " + loc_output.tokens.shape_str() +
                       " does not match grid");
    }
    // Drop the class token, keep the coarse patch tokens.
    Tensor coarse = Tensor::zeros({gc * gc, d});
    std::memcpy(coarse.data.data(), loc_output.tokens.row(1),
                sizeof(float) * static_cast<size_t>(gc * gc) * static_cast<size_t>(d));
    Tensor up = upsample_features_2x(coarse, gc, gc);
    Tensor mapped = kern::matmul(up, w.align_w);
    for (int r = 0; r < mapped.dim(0); ++r) {
        kern::add_f32(mapped.row(r), w.align_b.data.data(), mapped.row(r),
                      static_cast<std::size_t>(d));
    }
    AlignedFeatures out;
    out.f_prime = apply_activation ? kern::gelu(mapped) : std::move(mapped);
    out.fine_rows = 2 * gc;
    out.fine_cols = 2 * gc;
    return out;
}

std::vector<int> region_to_fine_indices(const Region& region, int fine_rows, int fine_cols) {
    const int r0 = 2 * region.top_row;
    const int c0 = 2 * region.top_col;
    const int side = 2 * region.m;
    if (region.m <= 0 || r0 < 0 || c0 < 0 || r0 + side > fine_rows || c0 + side > fine_cols) {
        throw DimError("region_to_fine_indices: region (" + std::to_string(region.top_row) + "," +
                       std::to_string(region.top_col) + ") m=" + std::to_string(region.m) +
                       " does not fit the " + std::to_string(fine_rows) + "x" +
                       std::to_string(fine_cols) + " fine grid");
    }
    std::vector<int> idx;
    idx.reserve(static_cast<size_t>(side) * static_cast<size_t>(side));
    for (int r = r0; r < r0 + side; ++r) {
        for (int c = c0; c < c0 + side; ++c) {
            idx.push_back(r * fine_cols + c);
        }
    }
    return idx;
}

FocusPlan build_focus_plan(const Region& region, const GcaMap& gca, const ModelConfig& cfg) {
    const int gc = cfg.coarse_grid();
    const int gf = cfg.fine_grid();
    if (gca.rows != gc || gca.cols != gc) {
        throw DimError("build_focus_plan: GCA map " + std::to_string(gca.rows) + "x" +
                       std::to_string(gca.cols) + " does not match the coarse grid " +
                       std::to_string(gc) + "x" + std::to_string(gc));
    }
    if (region.m != cfg.region_m) {
        throw ConfigError("build_focus_plan: region m=" + std::to_string(region.m) +
                          " disagrees with config region_m=" + std::to_string(cfg.region_m));
    }

    const int side = 2 * region.m;
    const int window = side * side;
    const int k_fresh = static_cast<int>(std::floor(cfg.alpha * static_cast<double>(window)));
    if (k_fresh <= 0) {
        throw ConfigError("build_focus_plan: alpha=" + std::to_string(cfg.alpha) +
                          " selects zero fresh tokens for m=" + std::to_string(region.m));
    }

    GcaMap fine_gca = upsample_gca_2x(gca);
    std::vector<int> candidates = region_to_fine_indices(region, gf, gf);
    // Descending GCA; stable sort keeps equal scores in ascending-index order.
    std::stable_sort(candidates.begin(), candidates.end(), [&](int a, int b) {
        return fine_gca.grid[static_cast<size_t>(a)] > fine_gca.grid[static_cast<size_t>(b)];
    });

    FocusPlan plan;
    plan.region = region;
    plan.mode = cfg.focus_mode;
    plan.fine_rows = gf;
    plan.fine_cols = gf;
    plan.coarse_rows = gc;
    plan.coarse_cols = gc;
    plan.fresh.assign(candidates.begin(), candidates.begin() + k_fresh);
    plan.reused_region.assign(candidates.begin() + k_fresh, candidates.end());
    std::sort(plan.fresh.begin(), plan.fresh.end());
    std::sort(plan.reused_region.begin(), plan.reused_region.end());

    if (cfg.focus_mode == FocusMode::full_sequence) {
        plan.reused_background.reserve(static_cast<size_t>(gf * gf - window));
        const int r0 = 2 * region.top_row, c0 = 2 * region.top_col;
        for (int r = 0; r < gf; ++r) {
            for (int c = 0; c < gf; ++c) {
                const bool inside = r >= r0 && r < r0 + side && c >= c0 && c < c0 + side;
                if (!inside) plan.reused_background.push_back(r * gf + c);
            }
        }
    } else {
        plan.reused_background.reserve(static_cast<size_t>(gc * gc - region.m * region.m));
        for (int r = 0; r < gc; ++r) {
            for (int c = 0; c < gc; ++c) {
                const bool inside = r >= region.top_row && r < region.top_row + region.m &&
                                    c >= region.top_col && c < region.top_col + region.m;
                if (!inside) plan.reused_background.push_back(r * gc + c);
            }
        }
    }
    return plan;
}

FocusSequence fuse_and_assemble(const Tensor& image, const FocusPlan& plan,
                                const AlignedFeatures& aligned, const TokenSequence& loc_output,
                                const WeightStore& w, const ModelConfig& cfg) {
    const int d = cfg.dim;
    const int gf = cfg.fine_grid();
    const int n_fine = gf * gf;
    if (plan.fine_rows != gf || plan.fine_cols != gf) {
        throw DimError("fuse_and_assemble: plan fine grid " + std::to_string(plan.fine_rows) + "x" +
                       std::to_string(plan.fine_cols) + " does not match config grid " +
                       std::to_string(gf) + "x" + std::to_string(gf));
    }
    if (aligned.f_prime.rank() != 2 || aligned.f_prime.dim(0) != n_fine ||
        aligned.f_prime.dim(1) != d) {
        throw DimError("fuse_and_assemble: aligned features " + aligned.f_prime.shape_str() +
                       " do not match the fine grid");
    }

    FocusSequence out;
    if (plan.mode == FocusMode::full_sequence) {
        out.seq.tokens = Tensor::zeros({n_fine + 1, d});
        out.seq.grid_rows = gf;
        out.seq.grid_cols = gf;
        out.origins.resize(static_cast<size_t>(n_fine));
        // Class token.
        for (int j = 0; j < d; ++j) {
            out.seq.tokens.at(0, j) = w.cls_token.data[static_cast<size_t>(j)] +
                                      w.pos_embed.at(0, j);
        }
        std::vector<TokenOrigin::Kind> kind(static_cast<size_t>(n_fine),
                                            TokenOrigin::Kind::background_fine);
        for (int q : plan.fresh) kind[static_cast<size_t>(q)] = TokenOrigin::Kind::fresh;
        for (int q : plan.reused_region)
            kind[static_cast<size_t>(q)] = TokenOrigin::Kind::reused_region;
        for (int q = 0; q < n_fine; ++q) {
            float* dst = out.seq.tokens.row(1 + q);
            const float* al = aligned.f_prime.row(q);
            if (kind[static_cast<size_t>(q)] == TokenOrigin::Kind::fresh) {
                std::vector<float> emb = patch_token(image, q / gf, q % gf, w, cfg);
                for (int j = 0; j < d; ++j) dst[j] = emb[static_cast<size_t>(j)] + al[j];
            } else {
                std::memcpy(dst, al, sizeof(float) * static_cast<size_t>(d));
            }
            out.origins[static_cast<size_t>(q)] = {kind[static_cast<size_t>(q)], q};
        }
        return out;
    }

    // Compact mode: cls + fresh + reused region + coarse background tokens.
    const int gc = cfg.coarse_grid();
    if (loc_output.tokens.rank() != 2 || loc_output.tokens.dim(0) != gc * gc + 1 ||
        loc_output.tokens.dim(1) != d) {
        throw DimError("fuse_and_assemble: localization tokens " + loc_output.tokens.shape_str() +
                       " do not match the coarse grid");
    }
    const int t = 1 + static_cast<int>(plan.fresh.size() + plan.reused_region.size() +
                                       plan.reused_background.size());
    out.seq.tokens = Tensor::zeros({t, d});
    out.seq.grid_rows = 1;
    out.seq.grid_cols = t - 1;
    out.origins.reserve(static_cast<size_t>(t - 1));
    for (int j = 0; j < d; ++j) {
        out.seq.tokens.at(0, j) = w.cls_token.data[static_cast<size_t>(j)] + w.pos_embed.at(0, j);
    }
    int row = 1;
    for (int q : plan.fresh) {
        std::vector<float> emb = patch_token(image, q / gf, q % gf, w, cfg);
        const float* al = aligned.f_prime.row(q);
        float* dst = out.seq.tokens.row(row++);
        for (int j = 0; j < d; ++j) dst[j] = emb[static_cast<size_t>(j)] + al[j];
        out.origins.push_back({TokenOrigin::Kind::fresh, q});
    }
    for (int q : plan.reused_region) {
        std::memcpy(out.seq.tokens.row(row++), aligned.f_prime.row(q),
                    sizeof(float) * static_cast<size_t>(d));
        out.origins.push_back({TokenOrigin::Kind::reused_region, q});
    }
    for (int q : plan.reused_background) {
        std::memcpy(out.seq.tokens.row(row++), loc_output.tokens.row(1 + q),
                    sizeof(float) * static_cast<size_t>(d));
        out.origins.push_back({TokenOrigin::Kind::background_coarse, q});
    }
    return out;
}

}  // namespace lfvit
