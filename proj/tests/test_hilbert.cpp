#include <doctest.h>

#include <bit>
#include <complex>
#include <memory>
#include <random>

#include <Eigen/Dense>

#include "tll/hilbert.hpp"
#include "tll/lattice.hpp"

using namespace tll;
using hilbert::Config;

namespace {

// Dense matrix of the sector Hamiltonian built straight from the definition:
// diagonal from zz/field plus the addressed shift, one off-diagonal -xy(i,j)
// per opposite-spin pair swap. Independent of every kernel under test.
Eigen::MatrixXd dense_sector_matrix(const hilbert::SectorBasis& basis, const Eigen::MatrixXd& xy,
                                    const Eigen::MatrixXd& zz, const Eigen::VectorXd& field_z,
                                    Config addressed_mask, double coeff) {
  const int n = basis.n_spins();
  const auto dim = static_cast<Eigen::Index>(basis.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index a = 0; a < dim; ++a) {
    const Config c = basis.config(static_cast<std::size_t>(a));
    double diag = 0;
    for (int i = 0; i < n; ++i) {
      const int si = (c >> i) & 1 ? 1 : -1;
      diag += field_z[i] * si;
      if ((addressed_mask >> i) & 1) diag += coeff * si;
      for (int j = i + 1; j < n; ++j) {
        const int sj = (c >> j) & 1 ? 1 : -1;
        diag += zz(i, j) * si * sj;
      }
    }
    h(a, a) = diag;
    for (int i = 0; i < n; ++i) {
      if (!((c >> i) & 1)) continue;
      for (int j = 0; j < n; ++j) {
        if (((c >> j) & 1) || j == i) continue;
        const Config c2 = (c ^ (Config(1) << i)) | (Config(1) << j);
        const auto b = static_cast<Eigen::Index>(basis.rank(c2));
        h(b, a) += -xy(i, j);
      }
    }
  }
  return h;
}

struct RandomCouplings {
  Eigen::MatrixXd xy, zz;
  Eigen::VectorXd field;
};

RandomCouplings random_couplings(int n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RandomCouplings rc;
  rc.xy = Eigen::MatrixXd::Zero(n, n);
  rc.zz = Eigen::MatrixXd::Zero(n, n);
  rc.field = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    rc.field[i] = u(gen);
    for (int j = i + 1; j < n; ++j) {
      rc.xy(i, j) = rc.xy(j, i) = u(gen);
      rc.zz(i, j) = rc.zz(j, i) = u(gen);
    }
  }
  return rc;
}

}  // namespace

TEST_SUITE_BEGIN("hilbert");

TEST_CASE("sector enumeration is ascending and complete") {
  const auto configs = hilbert::enumerate_sector(6, 3);
  CHECK(configs.size() == 20);
  for (std::size_t i = 1; i < configs.size(); ++i) CHECK(configs[i] > configs[i - 1]);
  for (Config c : configs) CHECK(std::popcount(c) == 3);
}

TEST_CASE("binomial and the half-filled 24-site sector") {
  CHECK(hilbert::binomial(24, 12) == 2704156);
  CHECK(hilbert::binomial(12, 0) == 1);
  CHECK(hilbert::binomial(12, 12) == 1);
  const hilbert::SectorBasis basis(24, 12);
  CHECK(basis.size() == 2704156);
  // rank inverts config at both ends and in the middle of the ordering
  for (std::size_t idx : {std::size_t(0), std::size_t(1352078), std::size_t(2704155)})
    CHECK(basis.rank(basis.config(idx)) == idx);
}

TEST_CASE("rank inverts config across a whole sector") {
  const hilbert::SectorBasis basis(16, 8);
  REQUIRE(basis.size() == 12870);
  for (std::size_t i = 0; i < basis.size(); ++i) CHECK(basis.rank(basis.config(i)) == i);
}

TEST_CASE("structured apply matches the dense definition") {
  for (int n : {4, 6, 8}) {
    for (int k = 1; k < n; ++k) {
      const auto rc = random_couplings(n, static_cast<unsigned>(100 * n + k));
      auto basis = std::make_shared<const hilbert::SectorBasis>(n, k);
      const Config mask = (k % 2 == 0) ? Config(0b0101) : Config(0);
      const hilbert::SectorHamiltonian ham(basis, rc.xy, rc.zz, rc.field, mask);
      const auto dense = dense_sector_matrix(*basis, rc.xy, rc.zz, rc.field, mask, 0.37);

      const auto dim = static_cast<Eigen::Index>(basis->size());
      std::mt19937 gen(n * 7 + k);
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      Eigen::VectorXd x(dim);
      for (Eigen::Index i = 0; i < dim; ++i) x[i] = u(gen);

      Eigen::VectorXd y(dim), y_ref(dim);
      ham.apply(x.data(), y.data(), 0.37);
      ham.apply_reference(x.data(), y_ref.data(), 0.37);
      const Eigen::VectorXd y_dense = dense * x;
      CHECK((y - y_dense).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((y_ref - y_dense).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("complex apply agrees with two real applies") {
  const int n = 8, k = 4;
  const auto rc = random_couplings(n, 42);
  auto basis = std::make_shared<const hilbert::SectorBasis>(n, k);
  const hilbert::SectorHamiltonian ham(basis, rc.xy, rc.zz, rc.field);
  const auto dim = static_cast<Eigen::Index>(basis->size());
  Eigen::VectorXcd x = Eigen::VectorXcd::Random(dim);
  Eigen::VectorXcd y(dim);
  ham.apply(x.data(), y.data());
  Eigen::VectorXd yr(dim), yi(dim);
  Eigen::VectorXd xr = x.real(), xi = x.imag();
  ham.apply(xr.data(), yr.data());
  ham.apply(xi.data(), yi.data());
  CHECK((y.real() - yr).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((y.imag() - yi).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("the operator is symmetric") {
  const int n = 7, k = 3;
  const auto rc = random_couplings(n, 9);
  auto basis = std::make_shared<const hilbert::SectorBasis>(n, k);
  const hilbert::SectorHamiltonian ham(basis, rc.xy, rc.zz, rc.field);
  const auto dim = static_cast<Eigen::Index>(basis->size());
  const Eigen::VectorXd x = Eigen::VectorXd::Random(dim);
  const Eigen::VectorXd y = Eigen::VectorXd::Random(dim);
  Eigen::VectorXd hx(dim), hy(dim);
  ham.apply(x.data(), hx.data());
  ham.apply(y.data(), hy.data());
  CHECK(y.dot(hx) == doctest::Approx(x.dot(hy)).epsilon(1e-12));
}

TEST_CASE("observables match the definition on a random state") {
  const int n = 6, k = 3;
  auto basis = std::make_shared<const hilbert::SectorBasis>(n, k);
  const auto dim = static_cast<Eigen::Index>(basis->size());
  Eigen::VectorXcd psi = Eigen::VectorXcd::Random(dim);
  psi.normalize();

  Eigen::VectorXd sz_direct = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd czz_direct = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd cxx_direct = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index a = 0; a < dim; ++a) {
    const Config c = basis->config(static_cast<std::size_t>(a));
    const double w = std::norm(psi[a]);
    for (int i = 0; i < n; ++i) {
      const int si = (c >> i) & 1 ? 1 : -1;
      sz_direct[i] += w * si;
      for (int j = 0; j < n; ++j) {
        const int sj = (c >> j) & 1 ? 1 : -1;
        czz_direct(i, j) += w * si * sj;
        if (i != j && si != sj) {
          const Config c2 = c ^ (Config(1) << i) ^ (Config(1) << j);
          const auto b = static_cast<Eigen::Index>(basis->rank(c2));
          cxx_direct(i, j) += std::real(std::conj(psi[b]) * psi[a]);
        } else if (i == j) {
          cxx_direct(i, i) += w;
        }
      }
    }
  }

  CHECK((hilbert::observable_sz(*basis, psi) - sz_direct).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((hilbert::observable_czz(*basis, psi) - czz_direct).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((hilbert::observable_cxx(*basis, psi) - cxx_direct).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("product state is one-hot and projection follows Born") {
  auto basis2 = std::make_shared<const hilbert::SectorBasis>(2, 1);
  const auto up_down = hilbert::product_state(basis2, 0b01);  // site 0 up
  CHECK(up_down.amps.cwiseAbs().sum() == doctest::Approx(1.0));
  CHECK(std::abs(up_down.amps[static_cast<Eigen::Index>(basis2->rank(0b01))]) ==
        doctest::Approx(1.0));

  // alpha |up,down> + beta |down,up>
  const double alpha = 0.6, beta = 0.8;
  hilbert::SectorState mixed = up_down;
  mixed.amps.setZero();
  mixed.amps[static_cast<Eigen::Index>(basis2->rank(0b01))] = alpha;
  mixed.amps[static_cast<Eigen::Index>(basis2->rank(0b10))] = beta;

  const auto branch = hilbert::project_out_site(mixed, 0, true);
  CHECK(branch.probability == doctest::Approx(alpha * alpha));
  CHECK(branch.state.n_spins() == 1);
  CHECK(branch.state.n_up() == 0);  // the surviving site was down
  CHECK(branch.state.amps.norm() == doctest::Approx(1.0));
}

TEST_CASE("y-polarized product state matches the tensor construction") {
  for (bool staggered : {false, true}) {
    const int n = 3;
    const auto state = hilbert::css_y_state(n, staggered);
    CHECK(state.norm2() == doctest::Approx(1.0));

    Eigen::VectorXcd manual = Eigen::VectorXcd::Zero(1 << n);
    manual[0] = 1.0;
    // build (|up> + i s_j |down>)/sqrt(2) site by site; bit set means up
    for (int c = 0; c < (1 << n); ++c) {
      std::complex<double> amp = 1.0;
      for (int j = 0; j < n; ++j) {
        const double sj = staggered ? (j % 2 == 0 ? 1.0 : -1.0) : 1.0;
        if ((c >> j) & 1)
          amp *= 1.0 / std::sqrt(2.0);
        else
          amp *= std::complex<double>(0.0, sj) / std::sqrt(2.0);
      }
      manual[c] = amp;
    }

    Eigen::VectorXcd assembled = Eigen::VectorXcd::Zero(1 << n);
    for (int k = 0; k <= n; ++k) {
      const auto& sec = state.sectors[static_cast<std::size_t>(k)];
      if (sec.size() == 0) continue;
      assembled += hilbert::to_full_vector(*state.bases[static_cast<std::size_t>(k)], sec);
    }
    CHECK((assembled - manual).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("full vector split and reassembly round trip") {
  const int n = 6;
  Eigen::VectorXcd full = Eigen::VectorXcd::Random(1 << n);
  full.normalize();
  const auto state = hilbert::split_full_vector(full, n);
  Eigen::VectorXcd back = Eigen::VectorXcd::Zero(1 << n);
  for (int k = 0; k <= n; ++k)
    if (state.sectors[static_cast<std::size_t>(k)].size() > 0)
      back += hilbert::to_full_vector(*state.bases[static_cast<std::size_t>(k)],
                                      state.sectors[static_cast<std::size_t>(k)]);
  CHECK((back - full).cwiseAbs().maxCoeff() < 1e-14);

  const Eigen::VectorXd sz = hilbert::observable_sz(state);
  double total = 0;
  for (int c = 0; c < (1 << n); ++c) {
    const double w = std::norm(full[c]);
    for (int j = 0; j < n; ++j) total += w * (((c >> j) & 1) ? 1 : -1);
  }
  CHECK(sz.sum() == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("single-qubit gate acts on the addressed site only") {
  const int n = 4;
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(1 << n);
  psi[0b0000] = 1.0;
  Eigen::Matrix2cd sx;
  sx << 0, 1, 1, 0;
  hilbert::apply_single_qubit(psi, n, 2, sx);
  CHECK(std::abs(psi[0b0100]) == doctest::Approx(1.0));
}

TEST_CASE("site map respects vacancies") {
  lattice::ChainGeometry g;
  g.n_sites = 8;
  g.boundary = lattice::Boundary::OpenRing;
  g.removed_site = 7;
  g.holes = {2};
  const auto map = hilbert::SiteMap::for_geometry(g);
  CHECK(map.n_labels() == 6);
  CHECK(map.ring_of[0] == 0);
  CHECK(map.ring_of[2] == 3);  // label 2 sits past the hole
  CHECK(map.label_of[2] == -1);
  CHECK(map.label_of[7] == -1);
  CHECK(map.label_of[3] == 2);
}

TEST_SUITE_END();
