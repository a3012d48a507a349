#pragma once

#include <cstddef>

// Per-backend kernel entry points. Internal to the dispatch layer; callers go
// through lfvit::kern.

namespace lfvit::kern::scalar {

void matmul(const float* a, const float* b, float* c, int m, int k, int n);
void matmul_nt(const float* a, const float* b, float* c, int m, int k, int n);
void softmax_rows(float* x, int rows, int cols);
void layer_norm_rows(const float* x, const float* gamma, const float* beta, float* y,
                     int rows, int cols, float eps);
void add(const float* a, const float* b, float* y, std::size_t n);
void scale(float* x, std::size_t n, float s);

}  // namespace lfvit::kern::scalar

namespace lfvit::kern::avx2 {

// False when the binary was built without x86 AVX2 support or the CPU lacks
// avx2/fma at runtime.
bool available();

void matmul(const float* a, const float* b, float* c, int m, int k, int n);
void matmul_nt(const float* a, const float* b, float* c, int m, int k, int n);
void softmax_rows(float* x, int rows, int cols);
void layer_norm_rows(const float* x, const float* gamma, const float* beta, float* y,
                     int rows, int cols, float eps);
void add(const float* a, const float* b, float* y, std::size_t n);
void scale(float* x, std::size_t n, float s);

}  // namespace lfvit::kern::avx2
