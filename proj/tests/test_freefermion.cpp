#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include <Eigen/Dense>

#include "tll/exact.hpp"
#include "tll/freefermion.hpp"
#include "tll/hilbert.hpp"

using namespace tll;

namespace {

Eigen::VectorXd random_bonds(int n_bonds, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(0.4, 1.6);
  Eigen::VectorXd b(n_bonds);
  for (int i = 0; i < n_bonds; ++i) b[i] = u(gen);
  return b;
}

Eigen::MatrixXd xy_from_bonds(int n, const Eigen::VectorXd& bonds, bool periodic) {
  Eigen::MatrixXd xy = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) xy(i, i + 1) = xy(i + 1, i) = bonds[i];
  if (periodic) xy(0, n - 1) = xy(n - 1, 0) = bonds[n - 1];
  return xy;
}

exact::SpectrumResult solve_sector(int n, int k, const Eigen::MatrixXd& xy) {
  auto basis = std::make_shared<const hilbert::SectorBasis>(n, k);
  const hilbert::SectorHamiltonian ham(basis, xy, Eigen::MatrixXd::Zero(n, n),
                                       Eigen::VectorXd::Zero(n));
  return exact::full_spectrum(ham);
}

}  // namespace

TEST_SUITE_BEGIN("freefermion");

TEST_CASE("hopping matrix carries the parity-resolved seam") {
  Eigen::VectorXd bonds(5);
  bonds << 1.0, 2.0, 3.0, 4.0, 5.0;

  const auto even = freefermion::hopping_matrix(5, bonds, true, 2);
  CHECK(even(0, 1) == doctest::Approx(-1.0));
  CHECK(even(3, 4) == doctest::Approx(-4.0));
  CHECK(even(4, 0) == doctest::Approx(5.0));  // antiperiodic sector

  const auto odd = freefermion::hopping_matrix(5, bonds, true, 3);
  CHECK(odd(4, 0) == doctest::Approx(-5.0));  // periodic sector

  const auto open = freefermion::hopping_matrix(5, bonds.head(4), false, 2);
  CHECK(open(4, 0) == 0.0);

  CHECK_THROWS_AS((void)freefermion::hopping_matrix(5, bonds.head(3), false, 2),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)freefermion::hopping_matrix(2, bonds.head(2), true, 1),
                  std::invalid_argument);
}

TEST_CASE("ground energies match sector diagonalization at every filling") {
  const int n = 8;
  for (bool periodic : {false, true}) {
    const auto bonds = random_bonds(periodic ? n : n - 1, periodic ? 41u : 42u);
    const auto xy = xy_from_bonds(n, bonds, periodic);
    for (int filled = 0; filled <= n; ++filled) {
      const auto sol = freefermion::jw_solve(n, bonds, periodic, filled);
      const auto spec = solve_sector(n, filled, xy);
      CHECK(sol.ground_energy == doctest::Approx(spec.energies[0]).epsilon(1e-9));
    }
  }
}

TEST_CASE("green matrix is the Fermi-sea projector") {
  const int n = 10, filled = 4;
  const auto bonds = random_bonds(n - 1, 9u);
  const auto sol = freefermion::jw_solve(n, bonds, false, filled);

  CHECK(sol.green.rows() == n);
  CHECK(sol.green.isApprox(sol.green.transpose(), 1e-12));
  CHECK((sol.green * sol.green - sol.green).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(sol.green.trace() == doctest::Approx(filled).epsilon(1e-12));
  for (Eigen::Index i = 1; i < sol.orbital_energies.size(); ++i)
    CHECK(sol.orbital_energies[i] >= sol.orbital_energies[i - 1]);
}

TEST_CASE("green-function correlations match the many-body ground state") {
  const int n = 8;
  const auto bonds = random_bonds(n - 1, 17u);
  const auto xy = xy_from_bonds(n, bonds, false);

  for (int filled : {3, 4}) {
    const auto sol = freefermion::jw_solve(n, bonds, false, filled);
    const auto spec = solve_sector(n, filled, xy);
    hilbert::SectorBasis basis(n, filled);
    const Eigen::VectorXd gs = spec.states.col(0);

    const Eigen::VectorXd sz = hilbert::observable_sz(basis, gs);
    const Eigen::MatrixXd czz = hilbert::observable_czz(basis, gs);
    const Eigen::MatrixXd cxx = hilbert::observable_cxx(basis, gs);

    const auto cz_ff = freefermion::cz_from_green(sol.green);
    const auto cx_ff = freefermion::cx_from_green(sol.green);

    for (int i = 0; i < n; ++i) {
      CHECK(sz[i] == doctest::Approx(2.0 * sol.green(i, i) - 1.0).epsilon(1e-9));
      for (int j = 0; j < n; ++j) {
        const double connected = czz(i, j) - sz[i] * sz[j];
        if (i != j) {
          CHECK(connected == doctest::Approx(cz_ff(i, j)).epsilon(1e-8));
          CHECK(cxx(i, j) == doctest::Approx(cx_ff(i, j)).epsilon(1e-8));
        }
      }
    }
  }
}

TEST_CASE("string determinant agrees with the all-pairs builder") {
  const int n = 12;
  const auto bonds = random_bonds(n - 1, 29u);
  const auto sol = freefermion::jw_solve(n, bonds, false, 5);
  const auto cx = freefermion::cx_from_green(sol.green);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double rcond = 0.0;
      const double v = freefermion::cx_pair(sol.green, i, j, &rcond);
      CHECK(v == doctest::Approx(cx(i, j)).epsilon(1e-12));
      CHECK(rcond > 0.0);
      CHECK(rcond <= 1.0 + 1e-12);
    }
  CHECK(freefermion::cx_pair(sol.green, 3, 3) == 1.0);

  Eigen::MatrixXd big = Eigen::MatrixXd::Zero(freefermion::kCxAllPairsCap + 2,
                                              freefermion::kCxAllPairsCap + 2);
  CHECK_THROWS_AS((void)freefermion::cx_from_green(big), std::invalid_argument);
}

TEST_CASE("clean half-filled chain reproduces the continuum numbers") {
  const int n = 400;
  const Eigen::VectorXd bonds = Eigen::VectorXd::Ones(n - 1);
  const auto sol = freefermion::jw_solve(n, bonds, false, n / 2);

  // nearest-neighbour longitudinal correlation in the bulk: -4/pi^2
  const int c = n / 2;
  const double g1 = sol.green(c, c + 1);
  CHECK(-4.0 * g1 * g1 == doctest::Approx(-4.0 / (M_PI * M_PI)).epsilon(0.02));

  // transverse correlations fall off with exponent 1/2
  std::vector<double> lr, lc;
  for (int r = 10; r <= 50; r += 5) {
    const int i = c - r / 2;
    lr.push_back(std::log(static_cast<double>(r)));
    lc.push_back(std::log(freefermion::cx_pair(sol.green, i, i + r)));
  }
  const auto m = static_cast<double>(lr.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t q = 0; q < lr.size(); ++q) {
    sx += lr[q];
    sy += lc[q];
    sxx += lr[q] * lr[q];
    sxy += lr[q] * lc[q];
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  CHECK(slope == doctest::Approx(-0.5).epsilon(0.05));
}

TEST_CASE("disorder ensemble limits behave") {
  freefermion::DisorderOptions base;
  base.n_sites = 64;
  base.n_realizations = 3;
  base.dense_r_max = 10;
  base.n_log_points = 6;
  base.seed = 3;

  auto clean = base;
  clean.weak_probability = 0.0;
  const auto p0 = freefermion::disorder_ensemble(clean);

  REQUIRE(!p0.r.empty());
  CHECK(p0.r.front() == 1);
  for (std::size_t q = 1; q < p0.r.size(); ++q) CHECK(p0.r[q] > p0.r[q - 1]);
  for (int np : p0.n_pairs) CHECK(np <= base.max_pairs_per_distance);

  // identical realizations leave no spread beyond roundoff in the variance
  for (double e : p0.cx_err) CHECK(e < 1e-7);
  for (double e : p0.cz_err) CHECK(e < 1e-7);
  CHECK(p0.cz[0] == doctest::Approx(-4.0 / (M_PI * M_PI)).epsilon(0.05));
  CHECK(p0.min_rcond > 0.0);

  // every bond weak is a uniform chain again; correlations are scale free
  auto allweak = base;
  allweak.weak_probability = 1.0;
  const auto p1 = freefermion::disorder_ensemble(allweak);
  REQUIRE(p1.r == p0.r);
  for (std::size_t q = 0; q < p0.r.size(); ++q) {
    CHECK(p1.cx[q] == doctest::Approx(p0.cx[q]).epsilon(1e-10));
    CHECK(p1.cz[q] == doctest::Approx(p0.cz[q]).epsilon(1e-10));
  }

  auto bad = base;
  bad.n_sites = 63;
  CHECK_THROWS_AS((void)freefermion::disorder_ensemble(bad), std::invalid_argument);
  bad = base;
  bad.weak_probability = 1.5;
  CHECK_THROWS_AS((void)freefermion::disorder_ensemble(bad), std::invalid_argument);
}

TEST_SUITE_END();
