#include <cmath>

#include "kernels_impl.hpp"

// Reference kernels. Plain loops, float accumulation for matmul (the AVX2
// variants are equivalence-tested against these), double accumulation for the
// row statistics so softmax rows renormalize to 1 within 1e-6.

namespace lfvit::kern::scalar {

void matmul(const float* a, const float* b, float* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<std::size_t>(i) * k;
        float* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) crow[j] = 0.0f;
        for (int p = 0; p < k; ++p) {
            const float av = arow[p];
            const float* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt(const float* a, const float* b, float* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<std::size_t>(i) * k;
        float* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const float* brow = b + static_cast<std::size_t>(j) * k;
            float acc = 0.0f;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
}

void softmax_rows(float* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        float* row = x + static_cast<std::size_t>(r) * cols;
        float mx = row[0];
        for (int j = 1; j < cols; ++j) mx = row[j] > mx ? row[j] : mx;
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (int j = 0; j < cols; ++j) row[j] *= inv;
    }
}

void layer_norm_rows(const float* x, const float* gamma, const float* beta, float* y,
                     int rows, int cols, float eps) {
    for (int r = 0; r < rows; ++r) {
        const float* xr = x + static_cast<std::size_t>(r) * cols;
        float* yr = y + static_cast<std::size_t>(r) * cols;
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) sum += xr[j];
        const double mean = sum / cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double d = xr[j] - mean;
            var += d * d;
        }
        var /= cols;
        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        const float mu = static_cast<float>(mean);
        for (int j = 0; j < cols; ++j) yr[j] = (xr[j] - mu) * inv * gamma[j] + beta[j];
    }
}

void add(const float* a, const float* b, float* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

void scale(float* x, std::size_t n, float s) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= s;
}

}  // namespace lfvit::kern::scalar
