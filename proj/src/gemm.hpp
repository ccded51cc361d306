#pragma once

// Row-major single-precision matrix products used by the convolution kernels.
// Kept behind a plain interface so the Eigen dependency stays in one place.

namespace sononet {

// C = A(m x k) * B(k x n), optionally accumulating into C.
void gemm_nn(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate);

// C = A(m x k) * B(n x k)^T
void gemm_nt(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate);

// C = A(k x m)^T * B(k x n)
void gemm_tn(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate);

}  // namespace sononet
