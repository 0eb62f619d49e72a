#pragma once
// Sector eigensolvers, Krylov time evolution, dense small-N spectra, thermal
// ensembles, the dynamical structure factor, and the compressibility route to
// the sound velocity.

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

#include "tll/hilbert.hpp"

namespace tll::exact {

// Highest selects the top of the spectrum by running the solver on -H; the
// antiferromagnetic chain lives there.
enum class Which { Lowest, Highest };

struct LanczosOptions {
  int max_subspace = 80;   // Krylov vectors held at once (memory bound)
  int keep = 8;            // Ritz vectors carried through a thick restart
  int max_restarts = 60;
  double tol = 1e-9;       // residual / max(1, |E|)
  std::uint64_t seed = 0x5eed5eed;
  double addressed_coeff = 0;
};

struct LanczosResult {
  double energy = 0;
  Eigen::VectorXd state;
  double residual = 0;
  int iterations = 0;  // operator applications
  bool converged = false;
  bool near_degenerate = false;  // next Ritz value within 1e-8 scale
};

LanczosResult lanczos_extremal(const hilbert::SectorHamiltonian& h, Which which,
                               const LanczosOptions& opts = {});

struct PropagationOptions {
  double dt = 0.01;     // outer step; the light-shift coefficient is frozen
                        // at each outer midpoint
  int krylov_dim = 40;  // adaptive inner dimension cap
  double tol = 1e-10;   // local error estimate per accepted substep
  int max_halvings = 24;
};

struct PropagationReport {
  long matvecs = 0;
  long substeps = 0;
  long rejections = 0;
  double max_error_estimate = 0;
};

// Integrates i d/dt psi = (H + coeff(t) * addressed term) psi from t0 to t1.
// Within each outer dt the coefficient is constant; each substep applies
// exp(-i H_eff tau) through a Lanczos subspace exponential with substep
// halving when the error estimate exceeds tol. Norm is restored to its
// incoming value after every accepted substep (drift beyond 1e-6 rejects).
void krylov_propagate(const hilbert::SectorHamiltonian& h,
                      const std::function<double(double)>& addressed_coeff,
                      Eigen::VectorXcd& psi, double t0, double t1,
                      const PropagationOptions& opts = {}, PropagationReport* report = nullptr);

struct SpectrumResult {
  Eigen::VectorXd energies;   // ascending
  Eigen::MatrixXd states;     // columns match energies
};

inline constexpr std::size_t kDenseDimCap = 16384;

SpectrumResult full_spectrum(const hilbert::SectorHamiltonian& h, double addressed_coeff = 0,
                             std::size_t dim_cap = kDenseDimCap);

struct ThermalOptions {
  double transverse_field = 0;  // adds -(h/2) sum_i sx_i
  Which which = Which::Lowest;
  double hole_density = 0;      // i.i.d. site dilution per realization
  int n_realizations = 1;
  std::uint64_t seed = 1;
  std::size_t full_dim_cap = 8192;  // dense 2^n work
};

// Site-resolved Gibbs averages; entries are NaN where a site was never
// present across the hole ensemble. Errors are standard errors over
// realizations (zero when a single realization is run).
struct ThermalResult {
  Eigen::VectorXd sz, sz_err;
  Eigen::MatrixXd czz, czz_err;  // connected
  Eigen::MatrixXd cxx, cxx_err;  // connected
  double energy = 0;
  int n_realizations = 1;
};

ThermalResult thermal_observables(const Eigen::MatrixXd& xy, const Eigen::MatrixXd& zz,
                                  const Eigen::VectorXd& field_z, double temperature,
                                  const ThermalOptions& opts = {});

// Uniform shift making the double sum of the correlation matrix match a
// target total-magnetization variance.
Eigen::MatrixXd varmz_offset_correction(const Eigen::MatrixXd& czz, double target_variance);

struct DsfStick {
  double omega;
  double weight;
};

struct DsfOptions {
  double eta = 0;      // 0 = exact bin deposit; > 0 = Lorentzian density
  int n_bins = 256;
  double omega_max = -1;  // auto: a hair past the largest stick
  Which which = Which::Lowest;
  std::vector<int> q_indices;  // default 0..n_ring/2
};

struct DsfGrid {
  std::vector<int> q_index;
  std::vector<double> q;           // 2 pi n / n_ring
  Eigen::VectorXd omega_centers;
  Eigen::MatrixXd intensity;       // n_bins x n_q, normalized to unit peak
  double peak_raw = 0;             // undo factor for the normalization
  double eta = 0;
  std::vector<std::vector<DsfStick>> sticks;  // exact line spectrum per q
  std::vector<double> static_structure;       // total weight per q
};

// Spectral decomposition of the longitudinal structure factor built from a
// full sector spectrum. Labels carry ring positions through the site map, so
// chains with vacancies keep their physical phases.
DsfGrid dynamical_structure_factor(const SpectrumResult& spectrum,
                                   const hilbert::SectorBasis& basis,
                                   const hilbert::SiteMap& map, int n_ring,
                                   const DsfOptions& opts = {});

struct VelocityEstimate {
  double kappa_j = 0;     // susceptibility in units of 1/J (second difference
                          // of sector ground energies, tilt-immune)
  double u = 0;           // rad/us times lattice spacings
  double u_over_2ja = 0;  // pi * kappa_j * K
  double e_center = 0, e_plus = 0, e_minus = 0;  // effective-sign energies
};

VelocityEstimate susceptibility_and_velocity(const Eigen::MatrixXd& xy,
                                             const Eigen::MatrixXd& zz,
                                             const Eigen::VectorXd& field_z, int mz_center,
                                             Which which, double luttinger_k, double j_xy,
                                             const LanczosOptions& opts = {});

}  // namespace tll::exact
