#include "tll/freefermion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/LU>

#include "tll/linalg.hpp"
#include "tll/rng.hpp"

namespace tll::freefermion {

Eigen::MatrixXd hopping_matrix(int n_sites, const Eigen::VectorXd& bonds,
                               bool periodic, int n_filled) {
  if (n_sites < 2) throw std::invalid_argument("hopping_matrix: need at least two sites");
  if (periodic && n_sites < 3)
    throw std::invalid_argument("hopping_matrix: a ring needs at least three sites");
  const int n_bonds = periodic ? n_sites : n_sites - 1;
  if (bonds.size() != n_bonds)
    throw std::invalid_argument("hopping_matrix: expected " + std::to_string(n_bonds) +
                                " bonds, got " + std::to_string(bonds.size()));
  if (n_filled < 0 || n_filled > n_sites)
    throw std::invalid_argument("hopping_matrix: filling out of range");

  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n_sites, n_sites);
  for (int i = 0; i + 1 < n_sites; ++i) {
    t(i, i + 1) = -bonds[i];
    t(i + 1, i) = -bonds[i];
  }
  if (periodic) {
    // String parity across the seam: even filling selects the antiperiodic
    // sector (boundary amplitude +J), odd filling the periodic one (-J).
    const double amp = (n_filled % 2 == 0) ? bonds[n_sites - 1] : -bonds[n_sites - 1];
    t(n_sites - 1, 0) = amp;
    t(0, n_sites - 1) = amp;
  }
  return t;
}

JwSolution jw_solve(int n_sites, const Eigen::VectorXd& bonds, bool periodic,
                    int n_filled) {
  JwSolution sol;
  sol.n_sites = n_sites;
  sol.n_filled = n_filled;
  sol.periodic = periodic;

  auto es = linalg::eigh(hopping_matrix(n_sites, bonds, periodic, n_filled));
  sol.orbital_energies = std::move(es.eigenvalues);
  sol.orbitals = std::move(es.eigenvectors);

  sol.ground_energy = sol.orbital_energies.head(n_filled).sum();
  if (n_filled > 0) {
    const auto occ = sol.orbitals.leftCols(n_filled);
    sol.green = occ * occ.transpose();
  } else {
    sol.green = Eigen::MatrixXd::Zero(n_sites, n_sites);
  }
  return sol;
}

Eigen::MatrixXd cz_from_green(const Eigen::MatrixXd& green) {
  const Eigen::Index n = green.rows();
  if (green.cols() != n) throw std::invalid_argument("cz_from_green: square matrix required");
  Eigen::MatrixXd cz(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mz = 2.0 * green(i, i) - 1.0;
    cz(i, i) = 1.0 - mz * mz;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = -4.0 * green(i, j) * green(i, j);
      cz(i, j) = v;
      cz(j, i) = v;
    }
  }
  return cz;
}

double cx_pair(const Eigen::MatrixXd& green, int i, int j, double* rcond_out) {
  if (i == j) {
    if (rcond_out) *rcond_out = 1.0;
    return 1.0;
  }
  if (i > j) std::swap(i, j);
  if (i < 0 || j >= green.rows())
    throw std::invalid_argument("cx_pair: site index out of range");

  const int m = j - i;
  if (m == 1) {
    if (rcond_out) *rcond_out = 1.0;
    return 2.0 * green(i, j);
  }

  Eigen::MatrixXd block(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b) {
      double v = 2.0 * green(i + a, i + b + 1);
      if (i + a == i + b + 1) v -= 1.0;
      block(a, b) = v;
    }

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(std::move(block));
  if (rcond_out) {
    const auto diag = lu.matrixLU().diagonal().cwiseAbs();
    const double hi = diag.maxCoeff();
    *rcond_out = hi > 0.0 ? diag.minCoeff() / hi : 0.0;
  }
  return lu.determinant();
}

Eigen::MatrixXd cx_from_green(const Eigen::MatrixXd& green) {
  const Eigen::Index n = green.rows();
  if (n > kCxAllPairsCap)
    throw std::invalid_argument("cx_from_green: chain longer than the all-pairs cap, use cx_pair on a distance grid");
  Eigen::MatrixXd cx = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = cx_pair(green, static_cast<int>(i), static_cast<int>(j));
      cx(i, j) = v;
      cx(j, i) = v;
    }
  return cx;
}

namespace {

std::vector<int> distance_grid(const DisorderOptions& opts) {
  const int r_top = std::min(static_cast<int>(opts.r_max_fraction * opts.n_sites),
                             opts.n_sites - 2 * opts.edge_margin - 1);
  std::vector<int> grid;
  for (int r = 1; r <= std::min(opts.dense_r_max, r_top); ++r) grid.push_back(r);
  if (r_top > opts.dense_r_max && opts.n_log_points > 0) {
    const double lo = std::log(static_cast<double>(opts.dense_r_max));
    const double hi = std::log(static_cast<double>(r_top));
    for (int k = 1; k <= opts.n_log_points; ++k) {
      const double f = static_cast<double>(k) / opts.n_log_points;
      grid.push_back(static_cast<int>(std::lround(std::exp(lo + f * (hi - lo)))));
    }
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

}  // namespace

DisorderProfile disorder_ensemble(const DisorderOptions& opts) {
  if (opts.n_sites < 8 || opts.n_sites % 2 != 0)
    throw std::invalid_argument("disorder_ensemble: half filling assumes an even chain of at least 8 sites");
  if (opts.weak_probability < 0.0 || opts.weak_probability > 1.0)
    throw std::invalid_argument("disorder_ensemble: weak-link probability outside [0, 1]");
  if (opts.n_realizations < 1)
    throw std::invalid_argument("disorder_ensemble: need at least one realization");

  const int n = opts.n_sites;
  const int margin = opts.edge_margin;

  DisorderProfile prof;
  prof.options = opts;
  prof.r = distance_grid(opts);
  const int n_r = static_cast<int>(prof.r.size());

  // Per-distance start sites, spread evenly across the interior window.
  std::vector<std::vector<int>> starts(n_r);
  for (int q = 0; q < n_r; ++q) {
    const int r = prof.r[q];
    const int lo = margin;
    const int hi = n - 1 - margin - r;
    if (hi < lo) continue;
    const int avail = hi - lo + 1;
    const int k = std::min(opts.max_pairs_per_distance, avail);
    for (int s = 0; s < k; ++s)
      starts[q].push_back(lo + static_cast<int>((static_cast<std::int64_t>(s) * avail) / k));
  }

  std::vector<double> cx_sum(n_r, 0.0), cx_sq(n_r, 0.0);
  std::vector<double> cz_sum(n_r, 0.0), cz_sq(n_r, 0.0);

  Eigen::VectorXd bonds(n - 1);
  for (int t = 0; t < opts.n_realizations; ++t) {
    auto gen = rng::substream(opts.seed, static_cast<std::uint64_t>(t));
    for (int b = 0; b < n - 1; ++b)
      bonds[b] = opts.j_xy * (rng::bernoulli(gen, opts.weak_probability) ? opts.weak_factor : 1.0);

    const auto sol = jw_solve(n, bonds, false, n / 2);

    for (int q = 0; q < n_r; ++q) {
      if (starts[q].empty()) continue;
      const int r = prof.r[q];
      double mx = 0.0, mzz = 0.0;
      for (int i : starts[q]) {
        double rcond = 1.0;
        mx += cx_pair(sol.green, i, i + r, &rcond);
        prof.min_rcond = std::min(prof.min_rcond, rcond);
        const double g = sol.green(i, i + r);
        mzz += -4.0 * g * g;
      }
      mx /= static_cast<double>(starts[q].size());
      mzz /= static_cast<double>(starts[q].size());
      cx_sum[q] += mx;
      cx_sq[q] += mx * mx;
      cz_sum[q] += mzz;
      cz_sq[q] += mzz * mzz;
    }
  }

  const double k = static_cast<double>(opts.n_realizations);
  for (int q = 0; q < n_r; ++q) {
    prof.n_pairs.push_back(static_cast<int>(starts[q].size()));
    const double mx = cx_sum[q] / k;
    const double mz = cz_sum[q] / k;
    prof.cx.push_back(mx);
    prof.cz.push_back(mz);
    if (opts.n_realizations > 1) {
      const double vx = std::max(0.0, cx_sq[q] / k - mx * mx);
      const double vz = std::max(0.0, cz_sq[q] / k - mz * mz);
      prof.cx_err.push_back(std::sqrt(vx / (k - 1.0)));
      prof.cz_err.push_back(std::sqrt(vz / (k - 1.0)));
    } else {
      prof.cx_err.push_back(0.0);
      prof.cz_err.push_back(0.0);
    }
  }
  return prof;
}

}  // namespace tll::freefermion
