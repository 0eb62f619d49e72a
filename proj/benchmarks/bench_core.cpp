// Microbenchmarks for the kernels that dominate wall time: the structured
// sector matvec, basis rank lookups, string determinants, and a Krylov
// propagation step.

#include <benchmark/benchmark.h>

#include <complex>
#include <memory>

#include <Eigen/Dense>

#include "tll/exact.hpp"
#include "tll/freefermion.hpp"
#include "tll/hilbert.hpp"
#include "tll/lattice.hpp"

namespace {

using namespace tll;

hilbert::SectorHamiltonian make_ham(int n) {
  lattice::ChainGeometry geom;
  geom.n_sites = n;
  const auto model = lattice::CouplingModel::dipolar_adiabatic(lattice::Sign::FM);
  const auto mats = lattice::build_couplings(geom, model);
  auto basis = std::make_shared<const hilbert::SectorBasis>(n, n / 2);
  return hilbert::SectorHamiltonian(basis, mats.xy, mats.zz, mats.field_z);
}

void bm_sector_matvec(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto ham = make_ham(n);
  Eigen::VectorXd x = Eigen::VectorXd::Random(static_cast<Eigen::Index>(ham.basis().size()));
  Eigen::VectorXd y(x.size());
  for (auto _ : state) {
    ham.apply(x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * x.size());
}
BENCHMARK(bm_sector_matvec)->Arg(12)->Arg(16)->Arg(20)->Unit(benchmark::kMillisecond);

void bm_basis_rank(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const hilbert::SectorBasis basis(n, n / 2);
  const auto& configs = basis.configs();
  std::size_t acc = 0, i = 0;
  for (auto _ : state) {
    acc += basis.rank(configs[i]);
    if (++i == configs.size()) i = 0;
  }
  benchmark::DoNotOptimize(acc);
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(bm_basis_rank)->Arg(16)->Arg(24);

void bm_string_determinant(benchmark::State& state) {
  const int n = 200;
  const int d = static_cast<int>(state.range(0));
  const Eigen::VectorXd bonds = Eigen::VectorXd::Ones(n - 1);
  const auto sol = freefermion::jw_solve(n, bonds, false, n / 2);
  const int i = n / 2 - d / 2;
  for (auto _ : state) {
    const double v = freefermion::cx_pair(sol.green, i, i + d);
    benchmark::DoNotOptimize(v);
  }
}
BENCHMARK(bm_string_determinant)->Arg(10)->Arg(50)->Arg(100);

void bm_krylov_step(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto ham = make_ham(n);
  Eigen::VectorXcd psi =
      Eigen::VectorXcd::Random(static_cast<Eigen::Index>(ham.basis().size()));
  psi.normalize();
  const auto coeff = [](double) { return 0.0; };
  for (auto _ : state) {
    Eigen::VectorXcd work = psi;
    exact::krylov_propagate(ham, coeff, work, 0.0, 0.01);
    benchmark::DoNotOptimize(work.data());
  }
}
BENCHMARK(bm_krylov_step)->Arg(12)->Arg(14)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
