#include "gemm.hpp"

#include <Eigen/Core>

namespace sononet {

using MatMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void gemm_nn(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  ConstMatMap A(a, m, k), B(b, k, n);
  MatMap C(c, m, n);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

void gemm_nt(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  ConstMatMap A(a, m, k), B(b, n, k);
  MatMap C(c, m, n);
  if (accumulate)
    C.noalias() += A * B.transpose();
  else
    C.noalias() = A * B.transpose();
}

void gemm_tn(const float* a, const float* b, float* c, int m, int k, int n, bool accumulate) {
  ConstMatMap A(a, k, m), B(b, k, n);
  MatMap C(c, m, n);
  if (accumulate)
    C.noalias() += A.transpose() * B;
  else
    C.noalias() = A.transpose() * B;
}

}  // namespace sononet
