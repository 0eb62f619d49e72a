#pragma once
// Small dense-linear-algebra utilities shared by the solvers:
//  - eigh: full symmetric eigendecomposition through LAPACK (dsyevr), used for
//    sector spectra up to dimension ~13000 where Eigen's unblocked
//    tridiagonalization is too slow,
//  - deterministic blocked reductions for the Krylov solvers, so inner
//    products are bit-identical no matter how work is scheduled.

#include <Eigen/Dense>
#include <complex>
#include <span>

namespace tll::linalg {

struct EighResult {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // columns match eigenvalues
};

// Full spectrum of a symmetric matrix. Throws std::runtime_error on LAPACK
// failure. The input is taken by value because dsyevr destroys it.
EighResult eigh(Eigen::MatrixXd a);

// Eigenvalues/vectors of a symmetric tridiagonal matrix (Lanczos projections).
EighResult eigh_tridiagonal(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag);

// Fixed-block compensated-order reductions. Summation order depends only on
// the vector length, never on thread count or scheduling.
inline constexpr std::size_t kDotBlock = 4096;

double det_dot(std::span<const double> a, std::span<const double> b);
std::complex<double> det_dot(std::span<const std::complex<double>> a,
                             std::span<const std::complex<double>> b);
double det_norm2(std::span<const double> a);
double det_norm2(std::span<const std::complex<double>> a);

}  // namespace tll::linalg
