#include "tll/linalg.hpp"

#include <lapacke.h>

#include <stdexcept>
#include <string>
#include <vector>

namespace tll::linalg {

EighResult eigh(Eigen::MatrixXd a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("eigh: matrix not square");
  const lapack_int n = static_cast<lapack_int>(a.rows());
  EighResult r;
  r.eigenvalues.resize(n);
  r.eigenvectors.resize(n, n);
  if (n == 0) return r;

  // dsyevr keeps the workspace at O(n) plus one n*n output block, which is what
  // lets the 12870-dimensional sector spectra fit in memory (dsyevd would ask
  // for 2n^2 extra).
  lapack_int m = 0;
  std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(n));
  const lapack_int info = LAPACKE_dsyevr(
      LAPACK_COL_MAJOR, 'V', 'A', 'L', n, a.data(), n, 0.0, 0.0, 0, 0,
      /*abstol=*/0.0, &m, r.eigenvalues.data(), r.eigenvectors.data(), n, isuppz.data());
  if (info != 0) throw std::runtime_error("eigh: dsyevr failed, info=" + std::to_string(info));
  if (m != n) throw std::runtime_error("eigh: dsyevr returned " + std::to_string(m) + " of " + std::to_string(n));
  return r;
}

EighResult eigh_tridiagonal(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag) {
  const lapack_int n = static_cast<lapack_int>(diag.size());
  if (offdiag.size() != n - 1 && !(n == 0 && offdiag.size() == 0))
    throw std::invalid_argument("eigh_tridiagonal: offdiag size mismatch");
  EighResult r;
  r.eigenvalues = diag;
  r.eigenvectors.resize(n, n);
  if (n == 0) return r;
  Eigen::VectorXd e = offdiag;
  const lapack_int info = LAPACKE_dstevd(LAPACK_COL_MAJOR, 'V', n, r.eigenvalues.data(),
                                         n > 1 ? e.data() : nullptr, r.eigenvectors.data(), n);
  if (info != 0) throw std::runtime_error("eigh_tridiagonal: dstevd failed, info=" + std::to_string(info));
  return r;
}

namespace {

template <class T>
T det_dot_impl(std::span<const T> a, std::span<const T> b) {
  const std::size_t n = a.size();
  T total{};
  for (std::size_t blk = 0; blk < n; blk += kDotBlock) {
    const std::size_t end = std::min(n, blk + kDotBlock);
    T part{};
    for (std::size_t i = blk; i < end; ++i) {
      if constexpr (std::is_same_v<T, std::complex<double>>)
        part += std::conj(a[i]) * b[i];
      else
        part += a[i] * b[i];
    }
    total += part;
  }
  return total;
}

}  // namespace

double det_dot(std::span<const double> a, std::span<const double> b) {
  return det_dot_impl(a, b);
}

std::complex<double> det_dot(std::span<const std::complex<double>> a,
                             std::span<const std::complex<double>> b) {
  return det_dot_impl(a, b);
}

double det_norm2(std::span<const double> a) {
  const std::size_t n = a.size();
  double total = 0;
  for (std::size_t blk = 0; blk < n; blk += kDotBlock) {
    const std::size_t end = std::min(n, blk + kDotBlock);
    double part = 0;
    for (std::size_t i = blk; i < end; ++i) part += a[i] * a[i];
    total += part;
  }
  return total;
}

double det_norm2(std::span<const std::complex<double>> a) {
  const std::size_t n = a.size();
  double total = 0;
  for (std::size_t blk = 0; blk < n; blk += kDotBlock) {
    const std::size_t end = std::min(n, blk + kDotBlock);
    double part = 0;
    for (std::size_t i = blk; i < end; ++i) part += std::norm(a[i]);
    total += part;
  }
  return total;
}

}  // namespace tll::linalg
