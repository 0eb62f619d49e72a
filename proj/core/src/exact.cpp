#include "tll/exact.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "tll/linalg.hpp"
#include "tll/rng.hpp"
#include "tll/stats.hpp"

namespace tll::exact {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using hilbert::Config;

[[noreturn]] void fail_arg(const std::string& what) { throw std::invalid_argument(what); }
[[noreturn]] void fail_run(const std::string& what) { throw std::runtime_error(what); }

VectorXd seeded_unit_vector(std::size_t dim, std::uint64_t seed) {
  rng::Xoshiro256ss gen(seed);
  VectorXd v(dim);
  for (std::size_t i = 0; i < dim; ++i) v[i] = rng::uniform01(gen) - 0.5;
  const double nrm = v.norm();
  if (nrm == 0) fail_run("seeded start vector vanished");
  return v / nrm;
}

}  // namespace

LanczosResult lanczos_extremal(const hilbert::SectorHamiltonian& h, Which which,
                               const LanczosOptions& opts) {
  const std::size_t dim = h.dim();
  const double flip = which == Which::Highest ? -1.0 : 1.0;
  const int m = std::max<int>(3, static_cast<int>(std::min<std::size_t>(opts.max_subspace, dim)));
  const int keep = std::max(1, std::min(opts.keep, m - 2));

  LanczosResult res;
  MatrixXd v_basis(dim, m + 1);
  MatrixXd proj = MatrixXd::Zero(m, m);
  v_basis.col(0) = seeded_unit_vector(dim, opts.seed);

  const auto apply_op = [&](const VectorXd& x) {
    VectorXd y(dim);
    h.apply(x.data(), y.data(), opts.addressed_coeff);
    ++res.iterations;
    if (flip < 0) y = -y;
    return y;
  };

  // Rayleigh-Ritz state carried between iterations and across restarts.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es;
  double beta_last = 0;
  int block = 0;       // current subspace size after the latest iteration
  bool dead_end = false;  // the built subspace exhausted the space

  int j_start = 0;
  for (int restart = 0; restart <= opts.max_restarts && !dead_end; ++restart) {
    for (int j = j_start; j < m; ++j) {
      VectorXd w = apply_op(v_basis.col(j));
      auto vj = v_basis.leftCols(j + 1);
      VectorXd coef = vj.transpose() * w;
      w.noalias() -= vj * coef;
      VectorXd coef2 = vj.transpose() * w;
      w.noalias() -= vj * coef2;
      coef += coef2;
      for (int i = 0; i <= j; ++i) proj(i, j) = proj(j, i) = coef[i];

      beta_last = w.norm();
      block = j + 1;
      es.compute(proj.topLeftCorner(block, block));
      const double theta = es.eigenvalues()(0);
      const double scale = std::max(1.0, std::abs(theta));
      res.residual = beta_last * std::abs(es.eigenvectors()(block - 1, 0));
      if (res.residual <= opts.tol * scale) {
        res.converged = true;
        res.energy = flip * theta;
        res.state = v_basis.leftCols(block) * es.eigenvectors().col(0);
        res.state /= res.state.norm();
        res.near_degenerate =
            block > 1 && (es.eigenvalues()(1) - theta) <= 1e-8 * scale;
        return res;
      }
      if (beta_last <= 1e-13 * scale) {
        // Invariant subspace that has not reached tolerance: re-seed with a
        // fresh direction orthogonal to everything built so far.
        VectorXd fresh = seeded_unit_vector(dim, opts.seed + 1 + restart + j);
        fresh.noalias() -= vj * (vj.transpose() * fresh).eval();
        const double nrm = fresh.norm();
        if (nrm < 1e-8) {
          dead_end = true;  // the subspace is the whole space
          break;
        }
        w = fresh / nrm;
        beta_last = 0;  // the new direction carries no Krylov coupling
      } else {
        w /= beta_last;
      }
      v_basis.col(j + 1) = w;
    }
    if (dead_end) break;

    // Thick restart: keep the lowest Ritz vectors plus the trailing residual
    // direction; reorthogonalization rebuilds the couplings as it goes.
    const int keep_eff = std::min(keep, block - 1);
    if (keep_eff < 1) break;
    const MatrixXd kept =
        v_basis.leftCols(block) * es.eigenvectors().leftCols(keep_eff);
    v_basis.leftCols(keep_eff) = kept;
    v_basis.col(keep_eff) = v_basis.col(block);
    proj.setZero();
    for (int i = 0; i < keep_eff; ++i) proj(i, i) = es.eigenvalues()(i);
    j_start = keep_eff;
  }

  res.converged = false;
  const double theta = es.eigenvalues()(0);
  res.energy = flip * theta;
  res.state = v_basis.leftCols(block) * es.eigenvectors().col(0);
  res.state /= res.state.norm();
  res.near_degenerate = block > 1 && (es.eigenvalues()(1) - theta) <= 1e-8;
  return res;
}

void krylov_propagate(const hilbert::SectorHamiltonian& h,
                      const std::function<double(double)>& addressed_coeff,
                      Eigen::VectorXcd& psi, double t0, double t1,
                      const PropagationOptions& opts, PropagationReport* report) {
  if (t1 < t0) fail_arg("krylov_propagate: t1 < t0");
  if (static_cast<std::size_t>(psi.size()) != h.dim())
    fail_arg("krylov_propagate: state dimension mismatch");
  if (!(opts.dt > 0)) fail_arg("krylov_propagate: dt must be positive");
  PropagationReport local;
  PropagationReport& rep = report ? *report : local;

  const std::size_t dim = h.dim();
  const int m_cap =
      std::max<int>(2, static_cast<int>(std::min<std::size_t>(opts.krylov_dim, dim)));
  Eigen::MatrixXcd v_basis(dim, m_cap + 1);
  VectorXd alpha(m_cap), beta(m_cap);

  // One Lanczos subspace exponential over time tau at a frozen coefficient.
  // Returns false (rejection) when the error estimate or the norm drift is
  // out of tolerance.
  const auto try_substep = [&](double tau, double coeff) {
    const double norm0 = psi.norm();
    if (norm0 == 0) fail_run("krylov_propagate: zero state");
    v_basis.col(0) = psi / norm0;
    int built = 0;
    bool invariant = false;
    for (int j = 0; j < m_cap; ++j) {
      VectorXcd w(dim);
      h.apply(v_basis.col(j).data(), w.data(), coeff);
      ++rep.matvecs;
      if (j > 0) w.noalias() -= beta[j - 1] * v_basis.col(j - 1);
      alpha[j] = std::real(v_basis.col(j).dot(w));
      w.noalias() -= alpha[j] * v_basis.col(j);
      // one full orthogonalization pass keeps the basis clean at these sizes
      auto vj = v_basis.leftCols(j + 1);
      w.noalias() -= vj * (vj.adjoint() * w).eval();
      beta[j] = w.norm();
      built = j + 1;
      if (beta[j] <= 1e-13 * std::max(1.0, std::abs(alpha[j]))) {
        invariant = true;
        break;
      }
      v_basis.col(j + 1) = w / beta[j];
    }

    const VectorXd tri_d = alpha.head(built);
    const VectorXd tri_e = built > 1 ? VectorXd(beta.head(built - 1)) : VectorXd();
    const auto tri = linalg::eigh_tridiagonal(tri_d, tri_e);
    VectorXcd u = VectorXcd::Zero(built);
    for (int n = 0; n < built; ++n) {
      const std::complex<double> phase =
          std::exp(std::complex<double>(0, -tau * tri.eigenvalues[n]));
      const double first = tri.eigenvectors(0, n);
      for (int r = 0; r < built; ++r) u[r] += tri.eigenvectors(r, n) * phase * first;
    }
    const double err = invariant ? 0.0 : beta[built - 1] * std::abs(u[built - 1]);
    rep.max_error_estimate = std::max(rep.max_error_estimate, err);
    if (err > opts.tol) return false;

    VectorXcd next = v_basis.leftCols(built) * u;
    const double drift = std::abs(next.norm() - 1.0);
    if (drift > 1e-6) return false;
    psi = next * (norm0 / next.norm());
    ++rep.substeps;
    return true;
  };

  const double span = t1 - t0;
  const long n_outer = std::max<long>(1, static_cast<long>(std::ceil(span / opts.dt - 1e-12)));
  for (long step = 0; step < n_outer; ++step) {
    const double ta = t0 + span * static_cast<double>(step) / static_cast<double>(n_outer);
    const double tb = t0 + span * static_cast<double>(step + 1) / static_cast<double>(n_outer);
    const double coeff = addressed_coeff ? addressed_coeff(0.5 * (ta + tb)) : 0.0;
    double remaining = tb - ta;
    double sub = remaining;
    int halvings = 0;
    while (remaining > 1e-15 * span) {
      sub = std::min(sub, remaining);
      if (try_substep(sub, coeff)) {
        remaining -= sub;
      } else {
        ++rep.rejections;
        sub *= 0.5;
        if (++halvings > opts.max_halvings)
          fail_run("krylov_propagate: time step underflow (error estimate will not settle)");
      }
    }
  }
}

SpectrumResult full_spectrum(const hilbert::SectorHamiltonian& h, double addressed_coeff,
                             std::size_t dim_cap) {
  const std::size_t dim = h.dim();
  if (dim > dim_cap) fail_arg("full_spectrum: sector dimension exceeds the dense cap");
  const auto& basis = h.basis();
  const int n = basis.n_spins();
  const Eigen::MatrixXd& xy = h.xy();

  MatrixXd mat = MatrixXd::Zero(dim, dim);
  mat.diagonal() = h.diagonal(addressed_coeff);
  for (std::size_t idx = 0; idx < dim; ++idx) {
    const Config c = basis.config(idx);
    for (int i = 0; i < n; ++i) {
      if (!((c >> i) & 1)) continue;
      for (int j = 0; j < n; ++j) {
        if ((c >> j) & 1) continue;
        const double w = xy(i, j);
        if (w == 0) continue;
        mat(basis.rank(c ^ (Config(1) << i) ^ (Config(1) << j)), idx) = -w;
      }
    }
  }
  auto eig = linalg::eigh(std::move(mat));
  return SpectrumResult{std::move(eig.eigenvalues), std::move(eig.eigenvectors)};
}

namespace {

struct DenseFullSpace {
  VectorXd energies;
  MatrixXd states;
};

// Dense 2^n Hamiltonian over the given labels, transverse field included.
DenseFullSpace diagonalize_full_space(const MatrixXd& xy, const MatrixXd& zz,
                                      const VectorXd& field_z, double transverse) {
  const int n = static_cast<int>(xy.rows());
  const std::size_t dim = std::size_t(1) << n;
  MatrixXd mat = MatrixXd::Zero(dim, dim);
  for (Config c = 0; c < dim; ++c) {
    double diag = 0;
    for (int i = 0; i < n; ++i) {
      const double zi = ((c >> i) & 1) ? 1.0 : -1.0;
      diag += field_z[i] * zi;
      for (int j = i + 1; j < n; ++j)
        diag += zz(i, j) * zi * (((c >> j) & 1) ? 1.0 : -1.0);
    }
    mat(c, c) = diag;
    for (int i = 0; i < n; ++i) {
      if (transverse != 0) mat(c ^ (Config(1) << i), c) += -0.5 * transverse;
      if (!((c >> i) & 1)) continue;
      for (int j = 0; j < n; ++j) {
        if ((c >> j) & 1) continue;
        const double w = xy(i, j);
        if (w == 0) continue;
        mat(c ^ (Config(1) << i) ^ (Config(1) << j), c) += -w;
      }
    }
  }
  auto eig = linalg::eigh(std::move(mat));
  return DenseFullSpace{std::move(eig.eigenvalues), std::move(eig.eigenvectors)};
}

}  // namespace

ThermalResult thermal_observables(const Eigen::MatrixXd& xy, const Eigen::MatrixXd& zz,
                                  const Eigen::VectorXd& field_z, double temperature,
                                  const ThermalOptions& opts) {
  const int n = static_cast<int>(xy.rows());
  if (xy.cols() != n || zz.rows() != n || zz.cols() != n || field_z.size() != n)
    fail_arg("thermal_observables: coupling dimensions disagree");
  if (!(temperature > 0)) fail_arg("thermal_observables: temperature must be positive");
  if (opts.hole_density < 0 || opts.hole_density >= 1)
    fail_arg("thermal_observables: hole_density out of [0,1)");
  if ((std::size_t(1) << n) > opts.full_dim_cap)
    fail_arg("thermal_observables: 2^n exceeds the dense cap");
  const int n_real = opts.hole_density == 0 ? 1 : std::max(1, opts.n_realizations);

  stats::WelfordMat acc_sz, acc_czz, acc_cxx;
  acc_sz.init(n, 1);
  acc_czz.init(n, n);
  acc_cxx.init(n, n);
  double energy_sum = 0;

  for (int real = 0; real < n_real; ++real) {
    std::vector<int> kept;
    if (opts.hole_density == 0) {
      kept.resize(n);
      for (int i = 0; i < n; ++i) kept[i] = i;
    } else {
      auto gen = rng::substream(opts.seed, static_cast<std::uint64_t>(real));
      while (kept.empty())
        for (int i = 0; i < n; ++i)
          if (!rng::bernoulli(gen, opts.hole_density)) kept.push_back(i);
    }
    const int nk = static_cast<int>(kept.size());
    MatrixXd sxy(nk, nk), szz(nk, nk);
    VectorXd sfield(nk);
    for (int a = 0; a < nk; ++a) {
      sfield[a] = field_z[kept[a]];
      for (int b = 0; b < nk; ++b) {
        sxy(a, b) = xy(kept[a], kept[b]);
        szz(a, b) = zz(kept[a], kept[b]);
      }
    }
    const auto full = diagonalize_full_space(sxy, szz, sfield, opts.transverse_field);
    const std::size_t dim = std::size_t(1) << nk;

    // Gibbs weights on the requested end of the spectrum.
    VectorXd eff = opts.which == Which::Highest ? VectorXd(-full.energies) : full.energies;
    const double e_ref = eff.minCoeff();
    VectorXd w(dim);
    double z_sum = 0;
    for (std::size_t s = 0; s < dim; ++s) {
      w[s] = std::exp(-(eff[s] - e_ref) / temperature);
      z_sum += w[s];
    }
    w /= z_sum;

    VectorXd sz = VectorXd::Zero(nk), sx = VectorXd::Zero(nk);
    MatrixXd czz = MatrixXd::Zero(nk, nk), cxx = MatrixXd::Zero(nk, nk);
    double energy = 0;
    for (std::size_t s = 0; s < dim; ++s) {
      if (w[s] < 1e-16) continue;
      energy += w[s] * full.energies[s];
      const auto& psi = full.states.col(s);
      for (Config c = 0; c < dim; ++c) {
        const double p = w[s] * psi[c] * psi[c];
        if (p != 0)
          for (int a = 0; a < nk; ++a) {
            const double za = ((c >> a) & 1) ? 1.0 : -1.0;
            sz[a] += p * za;
            for (int b = a + 1; b < nk; ++b)
              czz(a, b) += p * za * (((c >> b) & 1) ? 1.0 : -1.0);
          }
        for (int a = 0; a < nk; ++a) {
          const double fa = w[s] * psi[c ^ (Config(1) << a)] * psi[c];
          sx[a] += fa;
          for (int b = a + 1; b < nk; ++b)
            cxx(a, b) += w[s] * psi[c ^ (Config(1) << a) ^ (Config(1) << b)] * psi[c];
        }
      }
    }
    energy_sum += energy;

    for (int a = 0; a < nk; ++a) {
      acc_sz.add(kept[a], 0, sz[a]);
      acc_czz.add(kept[a], kept[a], 1.0 - sz[a] * sz[a]);
      acc_cxx.add(kept[a], kept[a], 1.0 - sx[a] * sx[a]);
      for (int b = a + 1; b < nk; ++b) {
        const double vz = czz(a, b) - sz[a] * sz[b];
        const double vx = cxx(a, b) - sx[a] * sx[b];
        acc_czz.add(kept[a], kept[b], vz);
        acc_czz.add(kept[b], kept[a], vz);
        acc_cxx.add(kept[a], kept[b], vx);
        acc_cxx.add(kept[b], kept[a], vx);
      }
    }
  }

  ThermalResult out;
  out.n_realizations = n_real;
  out.energy = energy_sum / n_real;
  Eigen::MatrixXd mean, err;
  acc_sz.finish(mean, err);
  out.sz = mean.col(0);
  out.sz_err = err.col(0);
  acc_czz.finish(out.czz, out.czz_err);
  acc_cxx.finish(out.cxx, out.cxx_err);
  return out;
}

Eigen::MatrixXd varmz_offset_correction(const Eigen::MatrixXd& czz, double target_variance) {
  if (czz.rows() != czz.cols()) fail_arg("varmz_offset_correction: matrix must be square");
  const double n = static_cast<double>(czz.rows());
  const double offset = (target_variance - czz.sum()) / (n * n);
  return czz.array() + offset;
}

DsfGrid dynamical_structure_factor(const SpectrumResult& spectrum,
                                   const hilbert::SectorBasis& basis,
                                   const hilbert::SiteMap& map, int n_ring,
                                   const DsfOptions& opts) {
  const std::size_t dim = basis.size();
  if (static_cast<std::size_t>(spectrum.energies.size()) != dim ||
      static_cast<std::size_t>(spectrum.states.rows()) != dim)
    fail_arg("dynamical_structure_factor: spectrum does not match basis");
  const int n = basis.n_spins();
  if (map.n_labels() != n) fail_arg("dynamical_structure_factor: site map does not match basis");
  if (opts.n_bins < 2) fail_arg("dynamical_structure_factor: need at least two bins");

  const bool top = opts.which == Which::Highest;
  const std::size_t g = top ? dim - 1 : 0;
  const VectorXd psi0 = spectrum.states.col(g);
  const double e0 = spectrum.energies(g);

  std::vector<int> q_indices = opts.q_indices;
  if (q_indices.empty())
    for (int qi = 0; qi <= n_ring / 2; ++qi) q_indices.push_back(qi);

  DsfGrid grid;
  grid.eta = opts.eta;
  grid.q_index = q_indices;
  const int nq = static_cast<int>(q_indices.size());
  grid.q.resize(nq);
  grid.sticks.resize(nq);
  grid.static_structure.resize(nq);

  double omega_hi = 0;
  const double span = top ? e0 - spectrum.energies(0) : spectrum.energies(dim - 1) - e0;
  omega_hi = opts.omega_max > 0 ? opts.omega_max : span * 1.02 + 1e-12;

  for (int iq = 0; iq < nq; ++iq) {
    const double q = 2.0 * std::numbers::pi * q_indices[iq] / n_ring;
    grid.q[iq] = q;

    // S^z_q is diagonal: phase-weighted magnetization per configuration.
    VectorXd w_re(dim), w_im(dim);
    std::vector<double> cos_q(n), sin_q(n);
    for (int l = 0; l < n; ++l) {
      cos_q[l] = std::cos(q * map.ring_of[l]);
      sin_q[l] = std::sin(q * map.ring_of[l]);
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(n_ring));
    for (std::size_t idx = 0; idx < dim; ++idx) {
      const Config c = basis.config(idx);
      double re = 0, im = 0;
      for (int l = 0; l < n; ++l) {
        const double z = ((c >> l) & 1) ? 1.0 : -1.0;
        re += z * cos_q[l];
        im += z * sin_q[l];
      }
      w_re[idx] = re * scale * psi0[idx];
      w_im[idx] = im * scale * psi0[idx];
    }
    const VectorXd a_re = spectrum.states.transpose() * w_re;
    const VectorXd a_im = spectrum.states.transpose() * w_im;

    auto& sticks = grid.sticks[iq];
    double total = 0;
    double max_w = 0;
    for (std::size_t s = 0; s < dim; ++s) {
      const double weight = a_re[s] * a_re[s] + a_im[s] * a_im[s];
      total += weight;
      max_w = std::max(max_w, weight);
    }
    for (std::size_t s = 0; s < dim; ++s) {
      const double weight = a_re[s] * a_re[s] + a_im[s] * a_im[s];
      if (weight <= 1e-15 * max_w) continue;
      const double omega = top ? e0 - spectrum.energies(s) : spectrum.energies(s) - e0;
      sticks.push_back({omega, weight});
    }
    std::sort(sticks.begin(), sticks.end(),
              [](const DsfStick& a, const DsfStick& b) { return a.omega < b.omega; });
    grid.static_structure[iq] = total;
  }

  grid.omega_centers.resize(opts.n_bins);
  const double d_omega = omega_hi / opts.n_bins;
  for (int b = 0; b < opts.n_bins; ++b) grid.omega_centers[b] = (b + 0.5) * d_omega;
  grid.intensity = Eigen::MatrixXd::Zero(opts.n_bins, nq);
  for (int iq = 0; iq < nq; ++iq) {
    for (const auto& st : grid.sticks[iq]) {
      if (opts.eta <= 0) {
        const int b = std::clamp(static_cast<int>(st.omega / d_omega), 0, opts.n_bins - 1);
        grid.intensity(b, iq) += st.weight;
      } else {
        for (int b = 0; b < opts.n_bins; ++b) {
          const double d = grid.omega_centers[b] - st.omega;
          grid.intensity(b, iq) +=
              st.weight * (opts.eta / std::numbers::pi) / (d * d + opts.eta * opts.eta);
        }
      }
    }
  }
  grid.peak_raw = grid.intensity.maxCoeff();
  if (grid.peak_raw > 0) grid.intensity /= grid.peak_raw;
  return grid;
}

VelocityEstimate susceptibility_and_velocity(const Eigen::MatrixXd& xy,
                                             const Eigen::MatrixXd& zz,
                                             const Eigen::VectorXd& field_z, int mz_center,
                                             Which which, double luttinger_k, double j_xy,
                                             const LanczosOptions& opts) {
  const int n = static_cast<int>(xy.rows());
  if ((n + mz_center) % 2 != 0) fail_arg("susceptibility_and_velocity: M_z parity mismatch");
  const int n_up0 = (n + mz_center) / 2;
  if (n_up0 - 1 < 0 || n_up0 + 1 > n)
    fail_arg("susceptibility_and_velocity: neighboring sectors out of range");

  const auto sector_energy = [&](int n_up) {
    auto basis = std::make_shared<hilbert::SectorBasis>(n, n_up);
    const hilbert::SectorHamiltonian ham(std::move(basis), xy, zz, field_z);
    const auto r = lanczos_extremal(ham, which, opts);
    if (!r.converged)
      fail_run("susceptibility_and_velocity: sector solve did not converge");
    return which == Which::Highest ? -r.energy : r.energy;  // effective-sign energy
  };

  VelocityEstimate out;
  out.e_center = sector_energy(n_up0);
  out.e_plus = sector_energy(n_up0 + 1);
  out.e_minus = sector_energy(n_up0 - 1);
  const double d2 = out.e_plus - 2 * out.e_center + out.e_minus;
  if (!(d2 > 0)) fail_run("susceptibility_and_velocity: energy curve is not convex");
  const double kappa = (2.0 / n) / d2;  // in 1/(rad/us)
  out.kappa_j = kappa * j_xy;
  out.u_over_2ja = std::numbers::pi * out.kappa_j * luttinger_k;
  out.u = out.u_over_2ja * 2.0 * j_xy;
  return out;
}

}  // namespace tll::exact
