#include "lfvit/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include "kernels_impl.hpp"

namespace lfvit::kern {

namespace {

Backend pick_default() {
    if (const char* env = std::getenv("LFVIT_KERNEL")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
        if (std::strcmp(env, "avx2") == 0) {
            if (!avx2::available()) {
                throw ConfigError("LFVIT_KERNEL=avx2 but AVX2 is not available on this CPU");
            }
            return Backend::avx2;
        }
        // anything else (including "auto") falls through to detection
    }
    return avx2::available() ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& backend_slot() {
    static std::atomic<Backend> slot{pick_default()};
    return slot;
}

}  // namespace

Backend active_backend() { return backend_slot().load(std::memory_order_relaxed); }

bool backend_available(Backend b) {
    return b == Backend::scalar || (b == Backend::avx2 && avx2::available());
}

void set_backend(Backend b) {
    if (!backend_available(b)) {
        throw ConfigError(std::string("kernel backend not available: ") + backend_name(b));
    }
    backend_slot().store(b, std::memory_order_relaxed);
}

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "?";
}

void matmul_f32(const float* a, const float* b, float* c, int m, int k, int n) {
    if (active_backend() == Backend::avx2) {
        avx2::matmul(a, b, c, m, k, n);
    } else {
        scalar::matmul(a, b, c, m, k, n);
    }
}

void matmul_nt_f32(const float* a, const float* b, float* c, int m, int k, int n) {
    if (active_backend() == Backend::avx2) {
        avx2::matmul_nt(a, b, c, m, k, n);
    } else {
        scalar::matmul_nt(a, b, c, m, k, n);
    }
}

void softmax_rows_f32(float* x, int rows, int cols) {
    if (active_backend() == Backend::avx2) {
        avx2::softmax_rows(x, rows, cols);
    } else {
        scalar::softmax_rows(x, rows, cols);
    }
}

void layer_norm_rows_f32(const float* x, const float* gamma, const float* beta, float* y,
                         int rows, int cols, float eps) {
    if (active_backend() == Backend::avx2) {
        avx2::layer_norm_rows(x, gamma, beta, y, rows, cols, eps);
    } else {
        scalar::layer_norm_rows(x, gamma, beta, y, rows, cols, eps);
    }
}

void gelu_f32(const float* x, float* y, std::size_t n) {
    // exact erf form; gelu(0)=0, asymptotically x for large positive x
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = x[i];
        y[i] = static_cast<float>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
    }
}

void add_f32(const float* a, const float* b, float* y, std::size_t n) {
    if (active_backend() == Backend::avx2) {
        avx2::add(a, b, y, n);
    } else {
        scalar::add(a, b, y, n);
    }
}

void scale_f32(float* x, std::size_t n, float s) {
    if (active_backend() == Backend::avx2) {
        avx2::scale(x, n, s);
    } else {
        scalar::scale(x, n, s);
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw DimError("matmul: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
    }
    Tensor c({a.rows(), b.cols()});
    matmul_f32(a.data.data(), b.data.data(), c.data.data(), a.rows(), a.cols(), b.cols());
    return c;
}

Tensor softmax(const Tensor& x) {
    if (x.rank() < 1) throw DimError("softmax: rank-0 tensor");
    const int cols = x.shape.back();
    if (cols == 0) throw DimError("softmax: empty last axis");
    const int rows = static_cast<int>(x.numel()) / cols;
    Tensor y = x;
    softmax_rows_f32(y.data.data(), rows, cols);
    return y;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
    if (x.rank() < 1) throw DimError("layer_norm: rank-0 tensor");
    const int cols = x.shape.back();
    if (gamma.numel() != static_cast<std::size_t>(cols) ||
        beta.numel() != static_cast<std::size_t>(cols)) {
        throw DimError("layer_norm: affine shape " + gamma.shape_str() + "/" + beta.shape_str() +
                       " does not match feature dim " + std::to_string(cols));
    }
    if (eps <= 0.0f) throw ConfigError("layer_norm: eps must be positive");
    const int rows = static_cast<int>(x.numel()) / cols;
    Tensor y(x.shape);
    layer_norm_rows_f32(x.data.data(), gamma.data.data(), beta.data.data(), y.data.data(), rows,
                        cols, eps);
    return y;
}

Tensor gelu(const Tensor& x) {
    Tensor y(x.shape);
    gelu_f32(x.data.data(), y.data.data(), x.numel());
    return y;
}

}  // namespace lfvit::kern
