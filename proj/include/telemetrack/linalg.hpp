#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace telemetrack {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

template <int N>
inline void symmetrize(Eigen::Matrix<double, N, N>& m) {
  m = 0.5 * (m + m.transpose()).eval();
}

/// Lower Cholesky factor of a symmetric PSD matrix, with jitter escalation:
/// on failure, 1e-12 * mean diagonal is added to the diagonal and doubled up
/// to three times before giving up.
template <int N>
Eigen::Matrix<double, N, N> cholesky_with_jitter(const Eigen::Matrix<double, N, N>& m) {
  using Mat = Eigen::Matrix<double, N, N>;
  if (m.norm() == 0.0) return Mat::Zero();  // 0 = L L^T with L = 0

  Eigen::LLT<Mat> llt(m);
  if (llt.info() == Eigen::Success) return llt.matrixL();

  const double base = 1e-12 * m.trace() / N;
  double jitter = base > 0.0 ? base : 1e-300;
  for (int attempt = 0; attempt < 4; ++attempt) {
    Mat jittered = m + jitter * Mat::Identity();
    llt.compute(jittered);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    jitter *= 2.0;
  }
  throw std::runtime_error("cholesky_with_jitter: matrix not factorizable after jitter escalation");
}

/// Clamps eigenvalues at `floor` and reconstructs. Returns true if any
/// eigenvalue actually had to be raised.
template <int N>
bool floor_eigenvalues(Eigen::Matrix<double, N, N>& m, double floor = 0.0) {
  symmetrize<N>(m);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> es(m);
  if (es.eigenvalues().minCoeff() >= floor) return false;
  Eigen::Matrix<double, N, 1> d = es.eigenvalues().cwiseMax(floor);
  m = es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
  symmetrize<N>(m);
  return true;
}

}  // namespace telemetrack
