#pragma once

#include <cstddef>

#include "lfvit/tensor.hpp"

namespace lfvit::kern {

// Kernel backend selection. The default is the best backend the CPU supports,
// overridable with LFVIT_KERNEL=scalar|avx2|auto or set_backend().
enum class Backend { scalar, avx2 };

Backend active_backend();
bool backend_available(Backend b);
void set_backend(Backend b);  // throws ConfigError when unavailable
const char* backend_name(Backend b);

// Raw row-major kernels; all dispatch to the active backend.

// c[m x n] = a[m x k] * b[k x n]
void matmul_f32(const float* a, const float* b, float* c, int m, int k, int n);
// c[m x n] = a[m x k] * b[n x k]^T  (both operands row-major)
void matmul_nt_f32(const float* a, const float* b, float* c, int m, int k, int n);
// In-place row softmax with max subtraction.
void softmax_rows_f32(float* x, int rows, int cols);
// Per-row standardization followed by the gamma/beta affine.
void layer_norm_rows_f32(const float* x, const float* gamma, const float* beta, float* y,
                         int rows, int cols, float eps);
// Exact-erf GELU: 0.5*x*(1+erf(x/sqrt(2))). Scalar on every backend.
void gelu_f32(const float* x, float* y, std::size_t n);
void add_f32(const float* a, const float* b, float* y, std::size_t n);
void scale_f32(float* x, std::size_t n, float s);

// Shape-checked Tensor wrappers.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax(const Tensor& x);  // over the last axis
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps = 1e-6f);
Tensor gelu(const Tensor& x);

}  // namespace lfvit::kern
