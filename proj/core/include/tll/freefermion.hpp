// Jordan-Wigner solver for nearest-neighbour XY chains.
//
// The spin chain H = -sum_i J_i (s+_i s-_{i+1} + h.c.) maps to free fermions
// hopping with amplitude -J_i.  On a ring the bond closing the loop picks up
// a parity factor: with n_filled fermions the boundary hopping amplitude is
// +J (antiperiodic) when n_filled is even and -J (periodic) when odd, which
// is exactly the sector the fixed-magnetization spin ground state lives in.
//
// Correlations come from the one-body Green matrix G_ij = <c_i^dag c_j>:
//   <sz_i sz_j>_c = -4 G_ij^2 for i != j,
//   <sx_i sx_j>   = det M,  M_ab = 2 G(i+a, i+b+1) - delta(i+a, i+b+1),
// where M is the (j-i) x (j-i) string determinant.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace tll::freefermion {

struct JwSolution {
  int n_sites = 0;
  int n_filled = 0;
  bool periodic = false;
  Eigen::VectorXd orbital_energies;  // ascending
  Eigen::MatrixXd orbitals;          // column k holds orbital k
  double ground_energy = 0.0;        // sum of the n_filled lowest energies
  Eigen::MatrixXd green;             // G_ij = <c_i^dag c_j>, a projector
};

// Single-particle hopping matrix, including the parity-resolved boundary
// bond.  `bonds` holds J_i for bond (i, i+1); a ring carries n_sites bonds,
// an open chain n_sites - 1.
Eigen::MatrixXd hopping_matrix(int n_sites, const Eigen::VectorXd& bonds,
                               bool periodic, int n_filled);

JwSolution jw_solve(int n_sites, const Eigen::VectorXd& bonds, bool periodic,
                    int n_filled);

// Connected <sz_i sz_j> for all pairs; the diagonal is 1 - <sz_i>^2.
Eigen::MatrixXd cz_from_green(const Eigen::MatrixXd& green);

// <sx_i sx_j> via the string determinant.  When `rcond_out` is non-null it
// receives min|u_kk| / max|u_kk| from the pivoted LU factors, a cheap
// conditioning estimate that matters for separations beyond a few hundred
// sites.
double cx_pair(const Eigen::MatrixXd& green, int i, int j,
               double* rcond_out = nullptr);

// All-pairs <sx_i sx_j>.  The cost is one dense determinant per pair, so
// this path is capped; use cx_pair on a distance grid for long chains.
inline constexpr int kCxAllPairsCap = 128;
Eigen::MatrixXd cx_from_green(const Eigen::MatrixXd& green);

struct DisorderOptions {
  int n_sites = 400;
  double weak_probability = 0.06;  // per-bond chance of a weak link
  double weak_factor = 0.125;      // weak bonds carry J * weak_factor
  double j_xy = 1.0;
  int n_realizations = 64;
  std::uint64_t seed = 7;
  // Pairs whose string would touch the first or last bond are excluded, so
  // the margin of one site at each end keeps edge effects out of the stats.
  int edge_margin = 1;
  int dense_r_max = 30;       // every integer distance up to here
  int n_log_points = 40;      // then log-spaced out to r_max_fraction * N
  double r_max_fraction = 0.75;
  int max_pairs_per_distance = 12;
};

struct DisorderProfile {
  std::vector<int> r;
  std::vector<double> cx, cx_err;
  std::vector<double> cz, cz_err;
  std::vector<int> n_pairs;  // pairs averaged per distance in one realization
  double min_rcond = 1.0;    // worst determinant conditioning encountered
  DisorderOptions options;   // assumptions recorded alongside the data
};

// Open chain at half filling with i.i.d. weak links; errors are standard
// errors over realization means.
DisorderProfile disorder_ensemble(const DisorderOptions& opts = {});

}  // namespace tll::freefermion
