// AVX2+FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma on x86_64 and must only be entered after available() returned
// true; on other targets every entry point falls back to scalar.

#include <cmath>

#include "kernels_impl.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define LFVIT_HAVE_AVX2_BUILD 1
#else
#define LFVIT_HAVE_AVX2_BUILD 0
#endif

namespace lfvit::kern::avx2 {

#if LFVIT_HAVE_AVX2_BUILD

bool available() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

void matmul(const float* a, const float* b, float* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<std::size_t>(i) * k;
        float* crow = c + static_cast<std::size_t>(i) * n;
        int j = 0;
        for (; j + 8 <= n; j += 8) _mm256_storeu_ps(crow + j, _mm256_setzero_ps());
        for (; j < n; ++j) crow[j] = 0.0f;
        for (int p = 0; p < k; ++p) {
            const __m256 av = _mm256_set1_ps(arow[p]);
            const float* brow = b + static_cast<std::size_t>(p) * n;
            j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256 cv = _mm256_loadu_ps(crow + j);
                cv = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j), cv);
                _mm256_storeu_ps(crow + j, cv);
            }
            const float as = arow[p];
            for (; j < n; ++j) crow[j] += as * brow[j];
        }
    }
}

static inline float hsum8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    lo = _mm_hadd_ps(lo, lo);
    lo = _mm_hadd_ps(lo, lo);
    return _mm_cvtss_f32(lo);
}

void matmul_nt(const float* a, const float* b, float* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<std::size_t>(i) * k;
        float* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const float* brow = b + static_cast<std::size_t>(j) * k;
            __m256 acc = _mm256_setzero_ps();
            int p = 0;
            for (; p + 8 <= k; p += 8) {
                acc = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(brow + p), acc);
            }
            float s = hsum8(acc);
            for (; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    }
}

static inline float hmax8(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_max_ps(lo, hi);
    lo = _mm_max_ps(lo, _mm_movehl_ps(lo, lo));
    lo = _mm_max_ss(lo, _mm_shuffle_ps(lo, lo, 1));
    return _mm_cvtss_f32(lo);
}

// Vectorized max reduction and normalization; exp stays scalar so the row sum
// matches the scalar backend to a few ulp.
void softmax_rows(float* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        float* row = x + static_cast<std::size_t>(r) * cols;
        float mx;
        if (cols >= 8) {
            __m256 vmax = _mm256_loadu_ps(row);
            int j = 8;
            for (; j + 8 <= cols; j += 8) vmax = _mm256_max_ps(vmax, _mm256_loadu_ps(row + j));
            mx = hmax8(vmax);
            for (; j < cols; ++j) mx = row[j] > mx ? row[j] : mx;
        } else {
            mx = row[0];
            for (int j = 1; j < cols; ++j) mx = row[j] > mx ? row[j] : mx;
        }
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const float inv = static_cast<float>(1.0 / sum);
        const __m256 vinv = _mm256_set1_ps(inv);
        int j = 0;
        for (; j + 8 <= cols; j += 8) {
            _mm256_storeu_ps(row + j, _mm256_mul_ps(_mm256_loadu_ps(row + j), vinv));
        }
        for (; j < cols; ++j) row[j] *= inv;
    }
}

void layer_norm_rows(const float* x, const float* gamma, const float* beta, float* y,
                     int rows, int cols, float eps) {
    for (int r = 0; r < rows; ++r) {
        const float* xr = x + static_cast<std::size_t>(r) * cols;
        float* yr = y + static_cast<std::size_t>(r) * cols;
        __m256 vsum = _mm256_setzero_ps();
        int j = 0;
        for (; j + 8 <= cols; j += 8) vsum = _mm256_add_ps(vsum, _mm256_loadu_ps(xr + j));
        double sum = hsum8(vsum);
        for (; j < cols; ++j) sum += xr[j];
        const double mean = sum / cols;

        const __m256 vmean = _mm256_set1_ps(static_cast<float>(mean));
        __m256 vvar = _mm256_setzero_ps();
        j = 0;
        for (; j + 8 <= cols; j += 8) {
            const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(xr + j), vmean);
            vvar = _mm256_fmadd_ps(d, d, vvar);
        }
        double var = hsum8(vvar);
        for (; j < cols; ++j) {
            const double d = xr[j] - mean;
            var += d * d;
        }
        var /= cols;

        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        const __m256 vinv = _mm256_set1_ps(inv);
        j = 0;
        for (; j + 8 <= cols; j += 8) {
            const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(xr + j), vmean);
            const __m256 g = _mm256_loadu_ps(gamma + j);
            const __m256 bi = _mm256_loadu_ps(beta + j);
            _mm256_storeu_ps(yr + j, _mm256_fmadd_ps(_mm256_mul_ps(d, vinv), g, bi));
        }
        const float mu = static_cast<float>(mean);
        for (; j < cols; ++j) yr[j] = (xr[j] - mu) * inv * gamma[j] + beta[j];
    }
}

void add(const float* a, const float* b, float* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    }
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

void scale(float* x, std::size_t n, float s) {
    const __m256 vs = _mm256_set1_ps(s);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(x + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), vs));
    }
    for (; i < n; ++i) x[i] *= s;
}

#else  // !LFVIT_HAVE_AVX2_BUILD

bool available() { return false; }

void matmul(const float* a, const float* b, float* c, int m, int k, int n) {
    scalar::matmul(a, b, c, m, k, n);
}
void matmul_nt(const float* a, const float* b, float* c, int m, int k, int n) {
    scalar::matmul_nt(a, b, c, m, k, n);
}
void softmax_rows(float* x, int rows, int cols) { scalar::softmax_rows(x, rows, cols); }
void layer_norm_rows(const float* x, const float* gamma, const float* beta, float* y,
                     int rows, int cols, float eps) {
    scalar::layer_norm_rows(x, gamma, beta, y, rows, cols, eps);
}
void add(const float* a, const float* b, float* y, std::size_t n) { scalar::add(a, b, y, n); }
void scale(float* x, std::size_t n, float s) { scalar::scale(x, n, s); }

#endif

}  // namespace lfvit::kern::avx2
