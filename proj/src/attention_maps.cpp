#include "lfvit/attention_maps.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace lfvit {

GcaMap accumulate_gca(const ClassAttentionTrace& trace, double beta, int rows, int cols) {
    const int layers = static_cast<int>(trace.per_layer.size());
    if (layers < 3) {
        throw ConfigError("accumulate_gca needs at least 3 layers, got " + std::to_string(layers));
    }
    if (beta < 0.0 || beta > 1.0) throw ConfigError("accumulate_gca: beta must lie in [0,1]");
    const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    for (const auto& a : trace.per_layer) {
        if (a.size() != n + 1) {
            throw DimError("accumulate_gca: trace vector length " + std::to_string(a.size()) +
                           " does not match grid " + std::to_string(rows) + "x" +
                           std::to_string(cols) + " plus class token");
        }
    }

    // running average in double; the recurrence oracle tolerance is 1e-6
    std::vector<double> avg(trace.per_layer[1].begin(), trace.per_layer[1].end());
    for (int l = 2; l < layers; ++l) {
        const auto& a = trace.per_layer[static_cast<std::size_t>(l)];
        for (std::size_t i = 0; i < avg.size(); ++i) {
            avg[i] = beta * avg[i] + (1.0 - beta) * a[i];
        }
    }

    GcaMap gca;
    gca.rows = rows;
    gca.cols = cols;
    gca.grid.resize(n);
    for (std::size_t i = 0; i < n; ++i) gca.grid[i] = static_cast<float>(avg[i + 1]);
    return gca;
}

Tensor ngca_scan(const GcaMap& gca, int m) {
    if (m < 1 || m > gca.rows || m > gca.cols) {
        throw DimError("ngca_scan: window " + std::to_string(m) + " does not fit grid " +
                       std::to_string(gca.rows) + "x" + std::to_string(gca.cols));
    }
    const int out_rows = gca.rows - m + 1;
    const int out_cols = gca.cols - m + 1;
    Tensor out({out_rows, out_cols});
    for (int r = 0; r < out_rows; ++r) {
        for (int c = 0; c < out_cols; ++c) {
            float sum = 0.0f;
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < m; ++j) sum += gca.at(r + i, c + j);
            }
            out.at(r, c) = sum;
        }
    }
    return out;
}

Region select_region(const Tensor& ngca, int m) {
    if (ngca.numel() == 0) throw DimError("select_region: empty NGCA map");
    const int rows = ngca.rows();
    const int cols = ngca.cols();
    Region best{0, 0, m, ngca.at(0, 0)};
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (ngca.at(r, c) > best.score) best = Region{r, c, m, ngca.at(r, c)};
        }
    }
    return best;
}

namespace {

Region centered_window(const GcaMap& gca, int m, int cell_r, int cell_c) {
    const auto clamp = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    Region region;
    region.m = m;
    region.top_row = clamp(cell_r - m / 2, gca.rows - m);
    region.top_col = clamp(cell_c - m / 2, gca.cols - m);
    float sum = 0.0f;
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) sum += gca.at(region.top_row + i, region.top_col + j);
    }
    region.score = sum;
    return region;
}

// Exactly uniform over [0, n) by rejection.
std::uint32_t uniform_index(std::mt19937& rng, std::uint32_t n) {
    const std::uint32_t limit = (0xffffffffu / n) * n;
    std::uint32_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

}  // namespace

Region select_region_variant(const GcaMap& gca, int m, RegionVariant variant, std::uint64_t seed) {
    if (m < 1 || m > gca.rows || m > gca.cols) {
        throw DimError("select_region_variant: window " + std::to_string(m) +
                       " does not fit grid " + std::to_string(gca.rows) + "x" +
                       std::to_string(gca.cols));
    }
    switch (variant) {
        case RegionVariant::negative_ngca: {
            const Tensor ngca = ngca_scan(gca, m);
            Region best{0, 0, m, ngca.at(0, 0)};
            for (int r = 0; r < ngca.rows(); ++r) {
                for (int c = 0; c < ngca.cols(); ++c) {
                    if (ngca.at(r, c) < best.score) best = Region{r, c, m, ngca.at(r, c)};
                }
            }
            return best;
        }
        case RegionVariant::max_gca: {
            int br = 0, bc = 0;
            for (int r = 0; r < gca.rows; ++r) {
                for (int c = 0; c < gca.cols; ++c) {
                    if (gca.at(r, c) > gca.at(br, bc)) { br = r; bc = c; }
                }
            }
            return centered_window(gca, m, br, bc);
        }
        case RegionVariant::min_gca: {
            int br = 0, bc = 0;
            for (int r = 0; r < gca.rows; ++r) {
                for (int c = 0; c < gca.cols; ++c) {
                    if (gca.at(r, c) < gca.at(br, bc)) { br = r; bc = c; }
                }
            }
            return centered_window(gca, m, br, bc);
        }
        case RegionVariant::random: {
            const int wr = gca.rows - m + 1;
            const int wc = gca.cols - m + 1;
            std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
            const std::uint32_t idx =
                uniform_index(rng, static_cast<std::uint32_t>(wr) * static_cast<std::uint32_t>(wc));
            Region region;
            region.m = m;
            region.top_row = static_cast<int>(idx) / wc;
            region.top_col = static_cast<int>(idx) % wc;
            float sum = 0.0f;
            for (int i = 0; i < m; ++i) {
                for (int j = 0; j < m; ++j) sum += gca.at(region.top_row + i, region.top_col + j);
            }
            region.score = sum;
            return region;
        }
    }
    throw ConfigError("select_region_variant: unknown variant");
}

const char* region_variant_name(RegionVariant v) {
    switch (v) {
        case RegionVariant::negative_ngca: return "negative_ngca";
        case RegionVariant::max_gca: return "max_gca";
        case RegionVariant::min_gca: return "min_gca";
        case RegionVariant::random: return "random";
    }
    return "?";
}

RegionVariant region_variant_from_name(const std::string& name) {
    if (name == "negative_ngca") return RegionVariant::negative_ngca;
    if (name == "max_gca") return RegionVariant::max_gca;
    if (name == "min_gca") return RegionVariant::min_gca;
    if (name == "random") return RegionVariant::random;
    throw ConfigError("unknown region variant '" + name + "'");
}

void write_pgm(const std::string& path, int rows, int cols, const float* values) {
    const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    float lo = values[0], hi = values[0];
    for (std::size_t i = 1; i < n; ++i) {
        lo = std::min(lo, values[i]);
        hi = std::max(hi, values[i]);
    }
    const float span = hi - lo;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "P5\n" << cols << " " << rows << "\n255\n";
    for (std::size_t i = 0; i < n; ++i) {
        const float scaled = span > 0.0f ? (values[i] - lo) / span * 255.0f : 0.0f;
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(scaled))));
    }
    if (!out) throw IoError("short write to " + path);
}

}  // namespace lfvit
