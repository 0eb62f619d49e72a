#include "tll/analysis.hpp"

#include <gsl/gsl_blas.h>
#include <gsl/gsl_matrix.h>
#include <gsl/gsl_multifit_nlinear.h>
#include <gsl/gsl_vector.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tll/stats.hpp"

namespace tll::analysis {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

[[noreturn]] void fail_arg(const std::string& msg) { throw std::invalid_argument(msg); }

double chord_of_separation(int d, const lattice::ChainGeometry& geom) {
  return lattice::chord_distance(0, d, geom);
}

// ---------------------------------------------------------------- binning

struct BinAcc {
  stats::WelfordScalar w;
  int pairs = 0;
};

CorrelationProfile finish_bins(const std::vector<BinAcc>& bins,
                               const std::vector<double>& extra_var,
                               const lattice::ChainGeometry& geom, const std::string& basis,
                               long n_samples) {
  CorrelationProfile prof;
  prof.basis = basis;
  prof.n_samples = n_samples;
  for (std::size_t d = 1; d < bins.size(); ++d) {
    if (bins[d].pairs == 0) continue;  // no such pair exists geometrically
    if (bins[d].w.count == 0) {
      std::cerr << "bin_correlations: no usable pairs at separation " << d << ", bin skipped\n";
      continue;
    }
    prof.d.push_back(static_cast<int>(d));
    prof.r.push_back(chord_of_separation(static_cast<int>(d), geom));
    prof.mean.push_back(bins[d].w.mean());
    const double spread = bins[d].w.stderror();
    const double shot = extra_var.empty() ? 0.0 : std::sqrt(extra_var[d]);
    prof.err.push_back(std::max(spread, shot));
    prof.n_pairs.push_back(bins[d].w.count);
  }
  return prof;
}

}  // namespace

CorrelationProfile bin_correlations(const Eigen::MatrixXd& corr,
                                    const lattice::ChainGeometry& geom,
                                    const std::string& basis) {
  geom.validate();
  const int n = geom.n_sites;
  if (corr.rows() != n || corr.cols() != n)
    fail_arg("bin_correlations: matrix size does not match the geometry");

  const auto active = geom.active_sites();
  std::vector<BinAcc> bins(static_cast<std::size_t>(n / 2) + 1);
  long used = 0;
  for (std::size_t a = 0; a < active.size(); ++a)
    for (std::size_t b = a + 1; b < active.size(); ++b) {
      const int i = active[a], j = active[b];
      const double u = corr(i, j), v = corr(j, i);
      double val;
      if (std::isfinite(u) && std::isfinite(v)) val = 0.5 * (u + v);
      else if (std::isfinite(u)) val = u;
      else if (std::isfinite(v)) val = v;
      else {
        bins[lattice::ring_separation(i, j, geom)].pairs += 1;
        continue;
      }
      const int d = lattice::ring_separation(i, j, geom);
      bins[d].pairs += 1;
      bins[d].w.add(val);
      ++used;
    }
  return finish_bins(bins, {}, geom, basis, used);
}

CorrelationProfile bin_correlations(const protocol::SnapshotSet& snapshots,
                                    const lattice::ChainGeometry& geom) {
  geom.validate();
  const int n = geom.n_sites;
  if (snapshots.n_sites != n)
    fail_arg("bin_correlations: snapshot width does not match the geometry");
  if (snapshots.shots.empty()) fail_arg("bin_correlations: no shots");

  Eigen::VectorXd sum_i = Eigen::VectorXd::Zero(n);
  Eigen::VectorXi cnt_i = Eigen::VectorXi::Zero(n);
  Eigen::MatrixXd sum_ij = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXi cnt_ij = Eigen::MatrixXi::Zero(n, n);
  for (const auto& shot : snapshots.shots) {
    for (int i = 0; i < n; ++i) {
      if (shot[i] == 0) continue;
      sum_i[i] += shot[i];
      cnt_i[i] += 1;
      for (int j = i + 1; j < n; ++j) {
        if (shot[j] == 0) continue;
        sum_ij(i, j) += shot[i] * shot[j];
        cnt_ij(i, j) += 1;
      }
    }
  }

  const auto active = geom.active_sites();
  std::vector<BinAcc> bins(static_cast<std::size_t>(n / 2) + 1);
  // Shot-noise variance per bin, averaged as if pairs were fully correlated
  // (they share the same shots), which errs on the conservative side.
  std::vector<double> bin_var(bins.size(), 0.0);
  std::vector<int> bin_var_n(bins.size(), 0);
  for (std::size_t a = 0; a < active.size(); ++a)
    for (std::size_t b = a + 1; b < active.size(); ++b) {
      const int i = active[a], j = active[b];
      const int d = lattice::ring_separation(i, j, geom);
      bins[d].pairs += 1;
      if (cnt_ij(i, j) < 2 || cnt_i[i] == 0 || cnt_i[j] == 0) continue;
      const double mij = sum_ij(i, j) / cnt_ij(i, j);
      const double mi = sum_i[i] / cnt_i[i];
      const double mj = sum_i[j] / cnt_i[j];
      bins[d].w.add(mij - mi * mj);
      const double var = (1.0 - mij * mij) / cnt_ij(i, j) +
                         mj * mj * (1.0 - mi * mi) / cnt_i[i] +
                         mi * mi * (1.0 - mj * mj) / cnt_i[j];
      bin_var[d] += std::max(var, 0.0);
      bin_var_n[d] += 1;
    }
  for (std::size_t d = 0; d < bins.size(); ++d)
    if (bin_var_n[d] > 0) bin_var[d] /= bin_var_n[d];

  auto prof = finish_bins(bins, bin_var, geom, snapshots.basis_label,
                          static_cast<long>(snapshots.shots.size()));
  return prof;
}

// ------------------------------------------------------- detection errors

namespace {
void check_eps(double eps_up, double eps_dn) {
  if (eps_up < 0 || eps_up >= 0.25 || eps_dn < 0 || eps_dn >= 0.25)
    fail_arg("detection inversion: eps outside [0, 0.25)");
}
}  // namespace

double detection_factor(double eps_up, double eps_dn) {
  check_eps(eps_up, eps_dn);
  return 1.0 - 2.0 * eps_up - 2.0 * eps_dn;
}

double invert_detection(double magnetization, double eps_up, double eps_dn) {
  check_eps(eps_up, eps_dn);
  return (magnetization - (eps_dn - eps_up)) / (1.0 - eps_up - eps_dn);
}

Eigen::VectorXd invert_detection(const Eigen::VectorXd& magnetization, double eps_up,
                                 double eps_dn) {
  check_eps(eps_up, eps_dn);
  return (magnetization.array() - (eps_dn - eps_up)) / (1.0 - eps_up - eps_dn);
}

CorrelationProfile invert_detection(const CorrelationProfile& profile, double eps_up,
                                    double eps_dn) {
  const double f = detection_factor(eps_up, eps_dn);
  CorrelationProfile out = profile;
  for (auto& v : out.mean) v /= f;
  for (auto& v : out.err) v /= f;
  return out;
}

// ------------------------------------------------------------ fit engine

double FitResult::value(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return values[static_cast<Eigen::Index>(i)];
  fail_arg("FitResult: unknown parameter " + name);
}

double FitResult::error(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) {
      const auto k = static_cast<Eigen::Index>(i);
      return std::sqrt(std::max(0.0, covariance(k, k)));
    }
  fail_arg("FitResult: unknown parameter " + name);
}

namespace {

struct FitPoint {
  double x = 0;      // abscissa entering the model (chord r, or site offset)
  double y = 0;
  double sigma = 1;  // unit when the input is unweighted
  int d = 0;         // integer ring separation for signs and envelopes
};

using ModelFn = std::function<double(const FitPoint&, const double*)>;

struct NlsContext {
  const std::vector<FitPoint>* pts = nullptr;
  const ModelFn* model = nullptr;
};

int nls_residuals(const gsl_vector* p, void* raw, gsl_vector* f) {
  const auto* ctx = static_cast<const NlsContext*>(raw);
  double par[8] = {0};
  for (std::size_t j = 0; j < p->size && j < 8; ++j) par[j] = gsl_vector_get(p, j);
  for (std::size_t i = 0; i < ctx->pts->size(); ++i) {
    const auto& pt = (*ctx->pts)[i];
    double m = (*ctx->model)(pt, par);
    if (!std::isfinite(m)) m = 1e12;
    gsl_vector_set(f, i, (m - pt.y) / pt.sigma);
  }
  return GSL_SUCCESS;
}

struct NlsSolution {
  Eigen::VectorXd p;
  Eigen::MatrixXd cov;
  double chi2 = kNan;
  bool converged = false;
};

NlsSolution solve_nls(const std::vector<FitPoint>& pts, const ModelFn& model,
                      const Eigen::VectorXd& p0, bool weighted) {
  const std::size_t n = pts.size();
  const std::size_t np = static_cast<std::size_t>(p0.size());
  NlsSolution sol;
  if (n <= np) return sol;

  gsl_multifit_nlinear_parameters params = gsl_multifit_nlinear_default_parameters();
  gsl_multifit_nlinear_workspace* w =
      gsl_multifit_nlinear_alloc(gsl_multifit_nlinear_trust, &params, n, np);
  if (!w) throw std::runtime_error("solve_nls: workspace allocation failed");

  NlsContext ctx{&pts, &model};
  gsl_multifit_nlinear_fdf fdf{};
  fdf.f = &nls_residuals;
  fdf.df = nullptr;   // finite-difference Jacobian
  fdf.fvv = nullptr;
  fdf.n = n;
  fdf.p = np;
  fdf.params = &ctx;

  gsl_vector_const_view pv = gsl_vector_const_view_array(p0.data(), np);
  gsl_multifit_nlinear_init(&pv.vector, &fdf, w);

  int info = 0;
  const int status = gsl_multifit_nlinear_driver(500, 1e-10, 1e-10, 0.0, nullptr, nullptr, &info, w);

  gsl_vector* f = gsl_multifit_nlinear_residual(w);
  double chi2 = 0;
  gsl_blas_ddot(f, f, &chi2);

  gsl_matrix* covar = gsl_matrix_alloc(np, np);
  gsl_multifit_nlinear_covar(gsl_multifit_nlinear_jac(w), 0.0, covar);

  sol.p.resize(np);
  sol.cov.resize(np, np);
  gsl_vector* x = gsl_multifit_nlinear_position(w);
  for (std::size_t i = 0; i < np; ++i) {
    sol.p[i] = gsl_vector_get(x, i);
    for (std::size_t j = 0; j < np; ++j) sol.cov(i, j) = gsl_matrix_get(covar, i, j);
  }
  sol.chi2 = chi2;
  sol.converged = (status == GSL_SUCCESS);
  if (!weighted && n > np) sol.cov *= chi2 / static_cast<double>(n - np);

  gsl_matrix_free(covar);
  gsl_multifit_nlinear_free(w);
  return sol;
}

int separation_of(double r, int n_ring, const std::string& who) {
  double d;
  if (n_ring > 0) {
    const lattice::ChainGeometry ring{n_ring, lattice::Boundary::PeriodicRing};
    d = lattice::perimeter_distance(r, ring);
  } else {
    d = r;
  }
  const double rounded = std::round(d);
  if (std::abs(d - rounded) > 1e-6)
    fail_arg(who + ": distance " + std::to_string(r) + " is not an integer separation");
  return static_cast<int>(rounded);
}

struct PointSet {
  std::vector<FitPoint> pts;
  bool weighted = false;
};

PointSet collect_points(const CorrelationProfile& profile, int n_ring, double r_c,
                        std::size_t min_points, const std::string& who) {
  PointSet set;
  bool all_sigma = true;
  for (std::size_t i = 0; i < profile.r.size(); ++i) {
    if (!std::isfinite(profile.mean[i])) continue;
    FitPoint pt;
    pt.x = profile.r[i];
    pt.y = profile.mean[i];
    pt.d = i < profile.d.size() ? profile.d[i] : separation_of(profile.r[i], n_ring, who);
    if (pt.d <= r_c) continue;
    const double s = i < profile.err.size() ? profile.err[i] : 0.0;
    if (std::isfinite(s) && s > 0)
      pt.sigma = s;
    else
      all_sigma = false;
    set.pts.push_back(pt);
  }
  if (set.pts.size() < min_points)
    fail_arg(who + ": fewer than " + std::to_string(min_points) + " points beyond the cutoff");
  set.weighted = all_sigma;
  if (!all_sigma)
    for (auto& pt : set.pts) pt.sigma = 1.0;
  return set;
}

double stagger_sign(int d) { return (d % 2 == 0) ? 1.0 : -1.0; }

// Smooth one-sided penalty steering the solver back into K > kmin.
double k_penalty(double k, double kmin) { return 1e4 * (1.0 + (kmin - k)); }

FitResult finish_fit(const NlsSolution& sol, std::vector<std::string> names,
                     const PointSet& set, double r_c, double rescale, std::string extra) {
  FitResult res;
  res.names = std::move(names);
  res.r_c = r_c;
  res.rescale = rescale;
  res.weighted = set.weighted;
  res.converged = sol.converged;
  res.message = std::move(extra);
  if (sol.p.size() > 0) {
    res.values = sol.p;
    res.covariance = sol.cov;
    res.chi2 = sol.chi2;
    res.dof = static_cast<int>(set.pts.size()) - static_cast<int>(sol.p.size());
    res.chi2_reduced = res.dof > 0 ? sol.chi2 / res.dof : kNan;
  } else {
    res.values = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(res.names.size()), kNan);
    res.covariance = Eigen::MatrixXd::Zero(res.values.size(), res.values.size());
    res.converged = false;
  }
  return res;
}

// Least squares for amplitudes that enter the model linearly.
Eigen::VectorXd linear_amplitudes(const std::vector<FitPoint>& pts,
                                  const std::vector<std::function<double(const FitPoint&)>>& basis) {
  const int nb = static_cast<int>(basis.size());
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(nb, nb);
  Eigen::VectorXd aty = Eigen::VectorXd::Zero(nb);
  for (const auto& pt : pts) {
    Eigen::VectorXd row(nb);
    for (int b = 0; b < nb; ++b) row[b] = basis[b](pt) / pt.sigma;
    ata += row * row.transpose();
    aty += row * (pt.y / pt.sigma);
  }
  return ata.ldlt().solve(aty);
}

}  // namespace

FitResult fit_cx(const CorrelationProfile& profile, int n_ring, double r_c, bool stagger,
                 double rescale) {
  const auto set = collect_points(profile, n_ring, r_c, 5, "fit_cx");

  const ModelFn model = [stagger, rescale](const FitPoint& pt, const double* p) {
    const double k = p[0];
    if (k < 0.02) return k_penalty(k, 0.02);
    const double a = p[1], b = p[2], inv_xi = p[3];
    const double lead = std::pow(pt.x, -1.0 / (2.0 * k));
    const double sub = std::pow(pt.x, -(2.0 * k + 1.0 / (2.0 * k)));
    const double env = std::exp(-std::abs(inv_xi) * pt.d);
    const double sgn = stagger_sign(pt.d);
    const double v = stagger ? (a * sgn * lead + b * sub) : (a * lead + b * sgn * sub);
    return rescale * v * env;
  };

  NlsSolution best;
  for (const double k0 : {0.5, 1.0, 1.85, 3.0}) {
    std::vector<std::function<double(const FitPoint&)>> basis = {
        [&, k0](const FitPoint& pt) {
          const double lead = std::pow(pt.x, -1.0 / (2.0 * k0));
          return rescale * (stagger ? stagger_sign(pt.d) * lead : lead);
        },
        [&, k0](const FitPoint& pt) {
          const double sub = std::pow(pt.x, -(2.0 * k0 + 1.0 / (2.0 * k0)));
          return rescale * (stagger ? sub : stagger_sign(pt.d) * sub);
        }};
    const Eigen::VectorXd ab = linear_amplitudes(set.pts, basis);
    Eigen::VectorXd p0(4);
    p0 << k0, ab[0], ab[1], 0.0;
    const auto sol = solve_nls(set.pts, model, p0, set.weighted);
    if (sol.converged && (!best.converged || sol.chi2 < best.chi2)) best = sol;
    if (!best.p.size() && sol.p.size()) best = sol;
  }
  if (best.p.size()) best.p[3] = std::abs(best.p[3]);

  std::string note;
  if (best.converged && best.p[0] <= 0.021) {
    best.converged = false;
    note = "K pinned at the lower bound";
  }
  return finish_fit(best, {"K", "A", "B", "inv_xi"}, set, r_c, rescale, note);
}

FitResult fit_cz(const CorrelationProfile& profile, int n_ring, double r_c, double rescale) {
  const auto set = collect_points(profile, n_ring, r_c, 4, "fit_cz");

  const ModelFn model = [rescale](const FitPoint& pt, const double* p) {
    const double k = p[0];
    if (k < 0.02) return k_penalty(k, 0.02);
    const double d_amp = p[1];
    const double smooth = -(2.0 * k / (M_PI * M_PI)) * std::pow(pt.x, -2.0);
    const double stag = d_amp * stagger_sign(pt.d) * std::pow(pt.x, -2.0 * k);
    return rescale * (smooth + stag);
  };

  NlsSolution best;
  for (const double k0 : {0.5, 0.85, 1.0, 1.85, 3.0}) {
    double num = 0, den = 0;
    for (const auto& pt : set.pts) {
      const double phi =
          rescale * stagger_sign(pt.d) * std::pow(pt.x, -2.0 * k0) / pt.sigma;
      const double resid =
          (pt.y + rescale * (2.0 * k0 / (M_PI * M_PI)) * std::pow(pt.x, -2.0)) / pt.sigma;
      num += phi * resid;
      den += phi * phi;
    }
    Eigen::VectorXd p0(2);
    p0 << k0, (den > 0 ? num / den : 0.0);
    const auto sol = solve_nls(set.pts, model, p0, set.weighted);
    if (sol.converged && (!best.converged || sol.chi2 < best.chi2)) best = sol;
    if (!best.p.size() && sol.p.size()) best = sol;
  }

  std::string note;
  if (best.converged && best.p[0] <= 0.021) {
    best.converged = false;
    note = "K pinned at the lower bound";
  }
  return finish_fit(best, {"K", "D"}, set, r_c, rescale, note);
}

FitResult fit_power_law(const CorrelationProfile& profile, double r_min, double r_max) {
  std::vector<FitPoint> pts;
  bool all_sigma = true;
  int dropped = 0;
  for (std::size_t i = 0; i < profile.r.size(); ++i) {
    const double r = profile.r[i], y = profile.mean[i];
    if (r < r_min || r > r_max || !std::isfinite(y)) continue;
    if (y <= 0) {
      ++dropped;
      continue;
    }
    FitPoint pt;
    pt.x = std::log(r);
    pt.y = std::log(y);
    const double s = i < profile.err.size() ? profile.err[i] : 0.0;
    if (std::isfinite(s) && s > 0)
      pt.sigma = s / y;
    else
      all_sigma = false;
    pts.push_back(pt);
  }
  if (pts.size() < 3) fail_arg("fit_power_law: fewer than 3 usable points in range");
  if (!all_sigma)
    for (auto& pt : pts) pt.sigma = 1.0;

  // weighted straight line in log-log coordinates
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& pt : pts) {
    const double w = 1.0 / (pt.sigma * pt.sigma);
    sw += w;
    sx += w * pt.x;
    sy += w * pt.y;
    sxx += w * pt.x * pt.x;
    sxy += w * pt.x * pt.y;
  }
  const double det = sw * sxx - sx * sx;
  const double slope = (sw * sxy - sx * sy) / det;
  const double inter = (sxx * sy - sx * sxy) / det;
  double chi2 = 0;
  for (const auto& pt : pts) {
    const double r = (inter + slope * pt.x - pt.y) / pt.sigma;
    chi2 += r * r;
  }

  FitResult res;
  res.names = {"A", "slope"};
  res.values.resize(2);
  res.values << std::exp(inter), slope;
  res.covariance = Eigen::MatrixXd::Zero(2, 2);
  double var_scale = 1.0;
  res.dof = static_cast<int>(pts.size()) - 2;
  if (!all_sigma && res.dof > 0) var_scale = chi2 / res.dof;
  res.covariance(0, 0) = var_scale * (sxx / det) * res.values[0] * res.values[0];
  res.covariance(1, 1) = var_scale * (sw / det);
  res.chi2 = chi2;
  res.chi2_reduced = res.dof > 0 ? chi2 / res.dof : kNan;
  res.weighted = all_sigma;
  res.converged = true;
  if (dropped > 0) res.message = std::to_string(dropped) + " nonpositive points dropped";
  return res;
}

double CutoffScan::selected_rc() const {
  if (selected_index < 0) throw std::runtime_error("cutoff_scan: no convergent plateau");
  return r_c[selected_index];
}

CutoffScan cutoff_scan(const CorrelationProfile& profile,
                       const std::function<FitResult(const CorrelationProfile&, double)>& fitter,
                       const std::vector<double>& r_c_list, double tolerance) {
  if (r_c_list.size() < 2) fail_arg("cutoff_scan: need at least two cutoffs");
  if (!std::is_sorted(r_c_list.begin(), r_c_list.end()))
    fail_arg("cutoff_scan: cutoffs must be ascending");

  CutoffScan scan;
  scan.r_c = r_c_list;
  for (const double rc : r_c_list) {
    double k = kNan;
    bool ok = false;
    try {
      const FitResult fit = fitter(profile, rc);
      if (fit.converged) {
        k = fit.value("K");
        ok = true;
      }
    } catch (const std::invalid_argument&) {
      // not enough points at this cutoff
    }
    scan.k.push_back(k);
    scan.converged.push_back(ok);
  }
  for (std::size_t i = 0; i + 1 < scan.k.size(); ++i)
    if (scan.converged[i] && scan.converged[i + 1] &&
        std::abs(scan.k[i] - scan.k[i + 1]) < tolerance) {
      scan.selected_index = static_cast<int>(i);
      break;
    }
  return scan;
}

double friedel_wavevector(int mz, int n_sites) {
  if (n_sites < 1 || std::abs(mz) > n_sites) fail_arg("friedel_wavevector: bad arguments");
  return M_PI * (1.0 - static_cast<double>(mz) / n_sites);
}

FitResult fit_friedel(const Eigen::VectorXd& signal, const Eigen::VectorXd& sigma,
                      int n_sites, int mz, bool pin_wavevector) {
  const int n = static_cast<int>(signal.size());
  if (n != n_sites) fail_arg("fit_friedel: profile length does not match n_sites");
  if (n % 2 == 0) fail_arg("fit_friedel: chain length must be odd");
  if (sigma.size() != 0 && sigma.size() != n) fail_arg("fit_friedel: sigma length mismatch");

  PointSet set;
  bool all_sigma = sigma.size() == n;
  for (int k = 0; k < n; ++k) {
    if (!std::isfinite(signal[k])) continue;
    FitPoint pt;
    pt.x = k - (n - 1) / 2;  // coordinate from the chain center
    pt.y = signal[k];
    if (all_sigma && std::isfinite(sigma[k]) && sigma[k] > 0)
      pt.sigma = sigma[k];
    else if (all_sigma)
      all_sigma = false;
    set.pts.push_back(pt);
  }
  if (set.pts.size() < 7) fail_arg("fit_friedel: fewer than 7 usable sites");
  set.weighted = all_sigma;
  if (!all_sigma)
    for (auto& pt : set.pts) pt.sigma = 1.0;

  const double nn = n;
  const auto envelope = [nn](double x, double k) {
    return std::pow((nn / M_PI) * std::cos(M_PI * x / nn), -k);
  };

  const double kf_pinned = friedel_wavevector(mz, n);
  const ModelFn model = [&, pin_wavevector](const FitPoint& pt, const double* p) {
    const double a = p[0];
    const double kf = pin_wavevector ? kf_pinned : p[1];
    const double k = pin_wavevector ? p[1] : p[2];
    if (k < 0.02) return k_penalty(k, 0.02);
    return a * std::cos(kf * pt.x) * envelope(pt.x, k);
  };

  // seed the wavevector from the spectrum of the profile
  Eigen::VectorXd dense(n);
  dense.setZero();
  for (int k = 0; k < n; ++k) dense[k] = std::isfinite(signal[k]) ? signal[k] : 0.0;
  const FftPeak peak = friedel_fft(dense);
  const double kf0 = pin_wavevector ? kf_pinned : (peak.flat ? kf_pinned : peak.peak_q);

  NlsSolution best;
  for (const double k0 : {0.5, 0.85, 1.5}) {
    std::vector<std::function<double(const FitPoint&)>> basis = {
        [&](const FitPoint& pt) { return std::cos(kf0 * pt.x) * envelope(pt.x, k0); }};
    const Eigen::VectorXd a0 = linear_amplitudes(set.pts, basis);
    Eigen::VectorXd p0(pin_wavevector ? 2 : 3);
    if (pin_wavevector)
      p0 << a0[0], k0;
    else
      p0 << a0[0], kf0, k0;
    const auto sol = solve_nls(set.pts, model, p0, set.weighted);
    if (sol.converged && (!best.converged || sol.chi2 < best.chi2)) best = sol;
    if (!best.p.size() && sol.p.size()) best = sol;
  }

  const int n_fitted = pin_wavevector ? 2 : 3;
  if (pin_wavevector && best.p.size()) {
    // report the same parameter set either way
    NlsSolution full = best;
    full.p.resize(3);
    full.p << best.p[0], kf_pinned, best.p[1];
    full.cov = Eigen::MatrixXd::Zero(3, 3);
    full.cov(0, 0) = best.cov(0, 0);
    full.cov(0, 2) = full.cov(2, 0) = best.cov(0, 1);
    full.cov(2, 2) = best.cov(1, 1);
    best = full;
  }
  FitResult res =
      finish_fit(best, {"A", "kf2", "K"}, set, 0.0, 1.0, pin_wavevector ? "kf2 pinned" : "");
  res.dof = static_cast<int>(set.pts.size()) - n_fitted;
  res.chi2_reduced = res.dof > 0 ? res.chi2 / res.dof : kNan;
  return res;
}

FftPeak friedel_fft(const Eigen::VectorXd& profile) {
  const int n = static_cast<int>(profile.size());
  if (n < 3) fail_arg("friedel_fft: profile too short");
  for (int j = 0; j < n; ++j)
    if (!std::isfinite(profile[j])) fail_arg("friedel_fft: profile contains non-finite entries");

  FftPeak out;
  const int nq = n / 2 + 1;
  out.q.resize(nq);
  out.amplitude.resize(nq);
  for (int m = 0; m < nq; ++m) {
    const double q = 2.0 * M_PI * m / n;
    std::complex<double> acc = 0;
    for (int j = 0; j < n; ++j) acc += profile[j] * std::polar(1.0, -q * j);
    out.q[m] = q;
    out.amplitude[m] = std::abs(acc);
  }
  int best = -1;
  for (int m = 1; m < nq; ++m)
    if (best < 0 || out.amplitude[m] > out.amplitude[best]) best = m;
  out.peak_index = best;
  out.peak_q = out.q[best];

  std::vector<double> rest;
  for (int m = 1; m < nq; ++m)
    if (m != best) rest.push_back(out.amplitude[m]);
  double median = 0;
  if (!rest.empty()) {
    std::nth_element(rest.begin(), rest.begin() + rest.size() / 2, rest.end());
    median = rest[rest.size() / 2];
  }
  out.flat = out.amplitude[best] < std::max(1e-12, 2.0 * median);
  return out;
}

FitResult fit_lightcone(const protocol::QuenchGrid& grid, const LightconeOptions& opts) {
  const int nt = static_cast<int>(grid.times.size());
  const int nd = static_cast<int>(grid.distances.size());
  if (nt < 4) fail_arg("fit_lightcone: need at least 4 times");

  std::vector<double> ds, ts;
  for (int di = 0; di < nd; ++di) {
    const int d = grid.distances[di];
    if (d < opts.d_min) continue;
    const Eigen::VectorXd row = grid.czz.col(di);

    double pre_mean = 0, pre_sq = 0;
    const int npre = std::min(opts.n_pre, nt);
    for (int ti = 0; ti < npre; ++ti) {
      pre_mean += row[ti];
      pre_sq += row[ti] * row[ti];
    }
    pre_mean /= npre;
    const double pre_sigma = std::sqrt(std::max(0.0, pre_sq / npre - pre_mean * pre_mean));
    const double floor =
        std::max(opts.threshold_sigma * pre_sigma, opts.rel_floor * row.maxCoeff());

    for (int ti = 1; ti + 1 < nt; ++ti) {
      if (!(row[ti] > floor)) continue;
      if (!(row[ti] > row[ti - 1] && row[ti] >= row[ti + 1])) continue;
      const double denom = row[ti - 1] - 2.0 * row[ti] + row[ti + 1];
      double shift = 0.0;
      if (denom < 0)
        shift = std::clamp(0.5 * (row[ti - 1] - row[ti + 1]) / denom, -0.5, 0.5);
      const double h = 0.5 * (grid.times[ti + 1] - grid.times[ti - 1]);
      const double t_star = grid.times[ti] + shift * h;
      if (t_star > 0) {
        ds.push_back(d);
        ts.push_back(t_star);
      }
      break;
    }
  }

  FitResult res;
  res.names = {"vg"};
  res.values = Eigen::VectorXd::Constant(1, kNan);
  res.covariance = Eigen::MatrixXd::Zero(1, 1);
  if (ds.size() < 3) {
    res.message = "front detected at only " + std::to_string(ds.size()) + " distances";
    return res;
  }

  double st2 = 0, std_ = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    st2 += ts[i] * ts[i];
    std_ += ts[i] * ds[i];
  }
  const double vg = std_ / (2.0 * st2);
  double chi2 = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double r = ds[i] - 2.0 * vg * ts[i];
    chi2 += r * r;
  }
  res.values[0] = vg;
  res.dof = static_cast<int>(ds.size()) - 1;
  res.covariance(0, 0) = res.dof > 0 ? chi2 / res.dof / (4.0 * st2) : 0.0;
  res.chi2 = chi2;
  res.chi2_reduced = res.dof > 0 ? chi2 / res.dof : kNan;
  res.converged = true;
  return res;
}

HoleDecayLength hole_decay_length(double p, int n_ring) {
  if (!(p > 0 && p < 0.5)) fail_arg("hole_decay_length: p must lie in (0, 1/2)");
  HoleDecayLength out;
  out.perimeter = -1.0 / std::log(1.0 - 2.0 * p);
  if (n_ring > 0) {
    const double d = std::min(out.perimeter, n_ring / 2.0);
    out.chord = (n_ring / M_PI) * std::sin(M_PI * d / n_ring) * lattice::ChainGeometry::spacing;
  } else {
    out.chord = out.perimeter;
  }
  return out;
}

}  // namespace tll::analysis
