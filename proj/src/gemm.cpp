#include "gemm.hpp"

#include <Eigen/Core>

namespace srvp::detail {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;
}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate) {
  const auto M = static_cast<Eigen::Index>(m);
  const auto N = static_cast<Eigen::Index>(n);
  const auto K = static_cast<Eigen::Index>(k);
  Map out(c, M, N);
  // Four layouts; Eigen needs the transpose expression at compile time.
  if (!trans_a && !trans_b) {
    ConstMap A(a, M, K), B(b, K, N);
    if (accumulate) out.noalias() += A * B; else out.noalias() = A * B;
  } else if (trans_a && !trans_b) {
    ConstMap A(a, K, M), B(b, K, N);
    if (accumulate) out.noalias() += A.transpose() * B; else out.noalias() = A.transpose() * B;
  } else if (!trans_a && trans_b) {
    ConstMap A(a, M, K), B(b, N, K);
    if (accumulate) out.noalias() += A * B.transpose(); else out.noalias() = A * B.transpose();
  } else {
    ConstMap A(a, K, M), B(b, N, K);
    if (accumulate) {
      out.noalias() += A.transpose() * B.transpose();
    } else {
      out.noalias() = A.transpose() * B.transpose();
    }
  }
}

}  // namespace srvp::detail
