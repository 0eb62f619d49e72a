#include "tll/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "tll/rng.hpp"
#include "tll/stats.hpp"

namespace tll::protocol {

namespace {

using hilbert::Config;

[[noreturn]] void fail_arg(const std::string& msg) { throw std::invalid_argument(msg); }

double delta_folded(double t, const RampSchedule& s) {
  const double total = s.total_duration();
  double tt = std::clamp(t, 0.0, total);
  if (s.reverse && tt > s.duration) tt = 2.0 * s.duration - tt;
  tt = std::min(tt, s.duration);
  return s.delta0 * (s.duration - tt) / (s.duration - (1.0 - s.alpha) * tt);
}

lattice::ChainGeometry with_holes(const lattice::ChainGeometry& base, const std::vector<int>& extra) {
  lattice::ChainGeometry g = base;
  g.holes.insert(g.holes.end(), extra.begin(), extra.end());
  std::sort(g.holes.begin(), g.holes.end());
  g.holes.erase(std::unique(g.holes.begin(), g.holes.end()), g.holes.end());
  return g;
}

Config addressed_mask_for(const std::vector<int>& site_of_label, const std::set<int>& addressed) {
  Config mask = 0;
  for (std::size_t l = 0; l < site_of_label.size(); ++l)
    if (addressed.count(site_of_label[l])) mask |= Config(1) << l;
  return mask;
}

// Squeezed-chain operators for the current hole set, reusing the caller's basis.
std::unique_ptr<hilbert::SectorHamiltonian> make_ham(
    const lattice::ChainGeometry& base, const lattice::CouplingModel& model,
    const std::vector<int>& extra_holes, const std::set<int>& addressed,
    std::shared_ptr<const hilbert::SectorBasis> basis, std::vector<int>& site_of_label_out) {
  const auto g = with_holes(base, extra_holes);
  auto mats = lattice::build_couplings(g, model);
  auto sq = lattice::squeeze_holes(g, mats);
  site_of_label_out = sq.old_index;
  const Config mask = addressed_mask_for(sq.old_index, addressed);
  return std::make_unique<hilbert::SectorHamiltonian>(std::move(basis), sq.matrices.xy,
                                                      sq.matrices.zz, sq.matrices.field_z, mask);
}

struct CheckpointAcc {
  stats::WelfordMat sz, czz, cxx;
  stats::WelfordScalar mag_addr, mag_rest, energy;

  void init(int n_pos) {
    sz.init(n_pos, 1);
    czz.init(n_pos, n_pos);
    cxx.init(n_pos, n_pos);
  }
};

void record_state(CheckpointAcc& acc, const hilbert::SectorState& state,
                  const std::vector<int>& site_of_label, const std::set<int>& addressed,
                  const hilbert::SectorHamiltonian* ham) {
  const int m = state.n_spins();
  if (m == 0) return;
  const Eigen::VectorXd sz = hilbert::observable_sz(*state.basis, state.amps);
  const Eigen::MatrixXd czz = hilbert::observable_czz(*state.basis, state.amps);
  const Eigen::MatrixXd cxx = hilbert::observable_cxx(*state.basis, state.amps);

  double sum_a = 0.0, sum_r = 0.0;
  int n_a = 0, n_r = 0;
  for (int l = 0; l < m; ++l) {
    const int i = site_of_label[l];
    acc.sz.add(i, 0, sz[l]);
    if (addressed.count(i)) {
      sum_a += sz[l];
      ++n_a;
    } else {
      sum_r += sz[l];
      ++n_r;
    }
    for (int k = l; k < m; ++k) {
      const int j = site_of_label[k];
      acc.czz.add(i, j, czz(l, k));
      acc.cxx.add(i, j, cxx(l, k));
      if (k != l) {
        acc.czz.add(j, i, czz(l, k));
        acc.cxx.add(j, i, cxx(l, k));
      }
    }
  }
  if (n_a > 0) acc.mag_addr.add(sum_a / n_a);
  if (n_r > 0) acc.mag_rest.add(sum_r / n_r);
  if (ham) acc.energy.add(std::real(ham->expect(state.amps, 0.0)));
}

Eigen::Matrix2cd plane_rotation(double theta) {
  // Maps the +/- eigenstates of cos(theta) sx + sin(theta) sy onto the z axis
  // so a z read-out of U psi measures the in-plane component of psi.
  const std::complex<double> em(std::cos(theta / 2), -std::sin(theta / 2));
  const std::complex<double> ep = std::conj(em);
  const double s = 1.0 / std::sqrt(2.0);
  Eigen::Matrix2cd u;
  u(0, 0) = s * em;
  u(0, 1) = -s * ep;
  u(1, 0) = s * em;
  u(1, 1) = s * ep;
  return u;
}

// Born sampling table: cumulative weights plus the configuration behind each slot.
struct BornTable {
  std::vector<double> cum;
  std::vector<Config> cfg;  // empty when slot index == configuration
  std::vector<int> label_of;

  Config draw(double u) const {
    const auto it = std::upper_bound(cum.begin(), cum.end(), u * cum.back());
    const std::size_t k = std::min<std::size_t>(it - cum.begin(), cum.size() - 1);
    return cfg.empty() ? static_cast<Config>(k) : cfg[k];
  }
};

BornTable born_table(const hilbert::SectorState& state, const std::vector<int>& site_of_label,
                     int n_sites, bool z_basis, double theta) {
  const int m = state.n_spins();
  if (static_cast<int>(site_of_label.size()) != m)
    fail_arg("sample_snapshots: label map does not match the state");
  BornTable tab;
  tab.label_of.assign(n_sites, -1);
  for (int l = 0; l < m; ++l) {
    const int s = site_of_label[l];
    if (s < 0 || s >= n_sites) fail_arg("sample_snapshots: label map out of range");
    tab.label_of[s] = l;
  }

  if (z_basis) {
    const auto& b = *state.basis;
    tab.cum.resize(b.size());
    tab.cfg.resize(b.size());
    double run = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k) {
      run += std::norm(state.amps[k]);
      tab.cum[k] = run;
      tab.cfg[k] = b.config(k);
    }
  } else {
    Eigen::VectorXcd full = hilbert::to_full_vector(*state.basis, state.amps);
    const Eigen::Matrix2cd u = plane_rotation(theta);
    for (int l = 0; l < m; ++l) hilbert::apply_single_qubit(full, m, l, u);
    tab.cum.resize(full.size());
    double run = 0.0;
    for (Eigen::Index k = 0; k < full.size(); ++k) {
      run += std::norm(full[k]);
      tab.cum[k] = run;
    }
  }
  if (!(tab.cum.back() > 0)) fail_arg("sample_snapshots: state has zero norm");
  return tab;
}

std::vector<std::int8_t> one_shot(const BornTable& tab, const NoiseModel& noise,
                                  rng::Xoshiro256ss& gen) {
  const Config c = tab.draw(rng::uniform01(gen));
  std::vector<std::int8_t> row(tab.label_of.size(), 0);
  for (std::size_t p = 0; p < tab.label_of.size(); ++p) {
    const int l = tab.label_of[p];
    if (l < 0) continue;
    std::int8_t v = ((c >> l) & 1) ? std::int8_t{1} : std::int8_t{-1};
    if (noise.detection_enabled) {
      const double u = rng::uniform01(gen);
      if (v > 0 && u < noise.eps_up) v = -1;
      else if (v < 0 && u < noise.eps_dn) v = 1;
    }
    row[p] = v;
  }
  return row;
}

std::string basis_name(bool z_basis, double theta) {
  if (z_basis) return "z";
  std::ostringstream os;
  os << "theta=" << theta;
  return os.str();
}

}  // namespace

void RampSchedule::validate() const {
  if (!(duration > 0)) fail_arg("RampSchedule: duration must be positive");
  if (!(alpha >= 1)) fail_arg("RampSchedule: alpha must be at least 1");
  if (delta0 == 0) fail_arg("RampSchedule: delta0 must be nonzero");
  if (addressed.empty()) fail_arg("RampSchedule: addressed sublattice is empty");
  const double total = total_duration();
  double prev = 0.0;
  for (double t : checkpoints) {
    if (t < prev || t > total + 1e-12)
      fail_arg("RampSchedule: checkpoints must be ascending within the ramp");
    prev = t;
  }
}

double lila_delta(double t, const RampSchedule& schedule) {
  schedule.validate();
  if (t < 0 || t > schedule.total_duration() + 1e-12)
    fail_arg("lila_delta: time outside the ramp");
  return delta_folded(t, schedule);
}

void NoiseModel::validate() const {
  if (p_init < 0 || p_init > 1) fail_arg("NoiseModel: p_init outside [0,1]");
  if (gamma < 0) fail_arg("NoiseModel: gamma must be nonnegative");
  if (eps_up < 0 || eps_up > 1 || eps_dn < 0 || eps_dn > 1)
    fail_arg("NoiseModel: detection errors outside [0,1]");
}

bool NoiseModel::stochastic() const {
  return (holes_enabled && p_init > 0) || (decay_enabled && gamma > 0);
}

std::vector<int> alternating_sublattice(const lattice::ChainGeometry& geom) {
  std::vector<int> out;
  for (int s : geom.active_sites())
    if (s % 2 == 1) out.push_back(s);
  return out;
}

std::vector<int> friedel_pattern(const lattice::ChainGeometry& geom, int target_mz) {
  const auto active = geom.active_sites();
  const int n = static_cast<int>(active.size());
  if ((n + target_mz) % 2 != 0 || std::abs(target_mz) > n)
    fail_arg("friedel_pattern: target magnetization unreachable");
  const std::int64_t n_dn = (n - target_mz) / 2;
  std::vector<int> out;
  for (int k = 0; k < n; ++k)
    if ((static_cast<std::int64_t>(k + 1) * n_dn) / n > (static_cast<std::int64_t>(k) * n_dn) / n)
      out.push_back(active[k]);
  return out;
}

RampResult run_ramp(const lattice::ChainGeometry& geom, const lattice::CouplingModel& model,
                    const RampSchedule& schedule, const NoiseModel& noise,
                    int n_trajectories, std::uint64_t seed,
                    const exact::PropagationOptions& prop) {
  geom.validate();
  model.validate();
  schedule.validate();
  noise.validate();
  if (n_trajectories < 1) fail_arg("run_ramp: need at least one trajectory");
  if (model.sign == lattice::Sign::FM && schedule.delta0 < 0)
    fail_arg("run_ramp: a ferromagnetic model follows the lowest branch, delta0 must be positive");
  if (model.sign == lattice::Sign::AFM && schedule.delta0 > 0)
    fail_arg("run_ramp: an antiferromagnetic model follows the highest branch, delta0 must be negative");

  const int n_pos = geom.n_sites;
  const std::set<int> addressed(schedule.addressed.begin(), schedule.addressed.end());
  for (int s : addressed)
    if (s < 0 || s >= n_pos) fail_arg("run_ramp: addressed site out of range");

  const double total = schedule.total_duration();
  const auto active0 = geom.active_sites();
  const int n_traj_eff = noise.stochastic() ? n_trajectories : 1;

  std::vector<CheckpointAcc> acc(schedule.checkpoints.size());
  for (auto& a : acc) a.init(n_pos);

  const auto coeff = [schedule](double t) { return 0.5 * delta_folded(t, schedule); };

  RampResult out;
  out.n_trajectories = n_traj_eff;

  for (int traj = 0; traj < n_traj_eff; ++traj) {
    auto gen = rng::substream(seed, static_cast<std::uint64_t>(traj));

    std::vector<int> holes;
    if (noise.holes_enabled && noise.p_init > 0)
      for (int s : active0)
        if (rng::bernoulli(gen, noise.p_init)) holes.push_back(s);

    std::vector<int> present;
    for (int s : active0)
      if (!std::binary_search(holes.begin(), holes.end(), s)) present.push_back(s);

    std::vector<std::pair<double, int>> pending;  // (jump time, original site)
    if (noise.decay_enabled && noise.gamma > 0)
      for (int s : present) {
        const double t = rng::exponential(gen, 2.0 * noise.gamma);
        if (t < total) pending.emplace_back(t, s);
      }
    std::sort(pending.begin(), pending.end());

    TrajectoryOutcome tr;

    hilbert::SectorState state;
    std::unique_ptr<hilbert::SectorHamiltonian> ham;
    std::vector<int> site_of_label;
    if (!present.empty()) {
      Config init = 0;
      int n_up = 0;
      for (std::size_t l = 0; l < present.size(); ++l)
        if (!addressed.count(present[l])) {
          init |= Config(1) << l;
          ++n_up;
        }
      auto basis = std::make_shared<const hilbert::SectorBasis>(static_cast<int>(present.size()), n_up);
      ham = make_ham(geom, model, holes, addressed, basis, site_of_label);
      state = hilbert::product_state(std::move(basis), init);
    }

    const auto evolve_to = [&](double t_from, double t_to) {
      if (state.n_spins() > 0 && t_to > t_from + 1e-15)
        exact::krylov_propagate(*ham, coeff, state.amps, t_from, t_to, prop);
    };

    const auto apply_jump = [&](double t_jump, int site) {
      const auto it = std::find(site_of_label.begin(), site_of_label.end(), site);
      if (it == site_of_label.end()) return;  // site already gone
      const int label = static_cast<int>(it - site_of_label.begin());
      const Eigen::VectorXd sz = hilbert::observable_sz(*state.basis, state.amps);
      const double p_up = std::clamp(0.5 * (1.0 + sz[label]), 0.0, 1.0);
      const double u = rng::uniform01(gen);
      bool up = u < p_up;
      if (p_up < 1e-12) up = false;
      if (p_up > 1.0 - 1e-12) up = true;
      auto projected = hilbert::project_out_site(state, label, up);
      state = std::move(projected.state);
      const int channel = (up ? 0 : 2) + (rng::bernoulli(gen, 0.5) ? 1 : 0);
      holes.push_back(site);
      std::sort(holes.begin(), holes.end());
      tr.jump_times.push_back(t_jump);
      tr.jump_sites.push_back(site);
      tr.jump_channels.push_back(channel);
      if (state.n_spins() > 0) {
        ham = make_ham(geom, model, holes, addressed, state.basis, site_of_label);
      } else {
        ham.reset();
        site_of_label.clear();
      }
    };

    double t_cur = 0.0;
    std::size_t jp = 0;
    for (std::size_t ci = 0; ci < schedule.checkpoints.size(); ++ci) {
      const double t_ck = schedule.checkpoints[ci];
      while (jp < pending.size() && pending[jp].first <= t_ck) {
        evolve_to(t_cur, pending[jp].first);
        t_cur = pending[jp].first;
        apply_jump(t_cur, pending[jp].second);
        ++jp;
      }
      evolve_to(t_cur, t_ck);
      t_cur = t_ck;
      record_state(acc[ci], state, site_of_label, addressed, ham.get());
    }
    while (jp < pending.size()) {
      evolve_to(t_cur, pending[jp].first);
      t_cur = pending[jp].first;
      apply_jump(t_cur, pending[jp].second);
      ++jp;
    }
    evolve_to(t_cur, total);

    tr.state = std::move(state);
    tr.site_of_label = std::move(site_of_label);
    tr.holes = std::move(holes);
    out.trajectories.push_back(std::move(tr));
  }

  for (std::size_t ci = 0; ci < acc.size(); ++ci) {
    CheckpointObservables ck;
    ck.time = schedule.checkpoints[ci];
    ck.delta = delta_folded(ck.time, schedule);
    Eigen::MatrixXd m, e;
    acc[ci].sz.finish(m, e);
    ck.sz = m.col(0);
    ck.sz_err = e.col(0);
    acc[ci].czz.finish(ck.czz, ck.czz_err);
    acc[ci].cxx.finish(ck.cxx, ck.cxx_err);
    ck.czz_connected = ck.czz - ck.sz * ck.sz.transpose();
    ck.mag_addressed = acc[ci].mag_addr.mean();
    ck.mag_addressed_err = acc[ci].mag_addr.stderror();
    ck.mag_rest = acc[ci].mag_rest.mean();
    ck.mag_rest_err = acc[ci].mag_rest.stderror();
    ck.energy = acc[ci].energy.mean();
    ck.energy_err = acc[ci].energy.stderror();
    out.checkpoints.push_back(std::move(ck));
  }
  return out;
}

SnapshotSet sample_snapshots(const hilbert::SectorState& state,
                             const std::vector<int>& site_of_label, int n_sites,
                             bool z_basis, double theta, int n_shots,
                             const NoiseModel& noise, std::uint64_t seed) {
  noise.validate();
  if (n_shots < 0) fail_arg("sample_snapshots: negative shot count");
  const BornTable tab = born_table(state, site_of_label, n_sites, z_basis, theta);

  SnapshotSet set;
  set.basis_label = basis_name(z_basis, theta);
  set.z_basis = z_basis;
  set.theta = theta;
  set.n_sites = n_sites;
  set.seed = seed;
  set.shots.reserve(n_shots);
  auto gen = rng::substream(seed, 0);
  for (int s = 0; s < n_shots; ++s) set.shots.push_back(one_shot(tab, noise, gen));
  return set;
}

SnapshotSet sample_snapshots(const std::vector<TrajectoryOutcome>& ensemble, int n_sites,
                             bool z_basis, double theta, int n_shots,
                             const NoiseModel& noise, std::uint64_t seed) {
  noise.validate();
  if (ensemble.empty()) fail_arg("sample_snapshots: empty ensemble");
  if (n_shots < 0) fail_arg("sample_snapshots: negative shot count");

  std::vector<BornTable> tabs(ensemble.size());
  std::vector<bool> ready(ensemble.size(), false);

  SnapshotSet set;
  set.basis_label = basis_name(z_basis, theta);
  set.z_basis = z_basis;
  set.theta = theta;
  set.n_sites = n_sites;
  set.seed = seed;
  set.shots.reserve(n_shots);
  auto gen = rng::substream(seed, 0);
  for (int s = 0; s < n_shots; ++s) {
    const std::size_t t = static_cast<std::size_t>(s) % ensemble.size();
    if (ensemble[t].state.n_spins() == 0 && ensemble[t].site_of_label.empty()) {
      // everything decayed away: an all-missing shot
      if (!ready[t]) {
        tabs[t].label_of.assign(n_sites, -1);
        tabs[t].cum = {1.0};
        ready[t] = true;
      }
    } else if (!ready[t]) {
      tabs[t] = born_table(ensemble[t].state, ensemble[t].site_of_label, n_sites, z_basis, theta);
      ready[t] = true;
    }
    set.shots.push_back(one_shot(tabs[t], noise, gen));
  }
  return set;
}

QuenchGrid run_quench(const lattice::ChainGeometry& geom, const lattice::CouplingModel& model,
                      QuenchInitial initial, const std::vector<double>& times,
                      const exact::PropagationOptions& prop) {
  geom.validate();
  model.validate();
  const int n = geom.n_active();
  if (n < 2) fail_arg("run_quench: need at least two active sites");
  if (n > kQuenchMaxSpins)
    fail_arg("run_quench: chain exceeds the exact-evolution cap of " +
             std::to_string(kQuenchMaxSpins) + " spins");
  if (times.empty()) fail_arg("run_quench: empty time list");
  for (std::size_t i = 0; i < times.size(); ++i)
    if (times[i] < 0 || (i > 0 && times[i] <= times[i - 1]))
      fail_arg("run_quench: times must be nonnegative and strictly ascending");

  const auto mats = lattice::build_couplings(geom, model);
  auto sq = lattice::squeeze_holes(geom, mats);
  const auto& site_of_label = sq.old_index;

  auto fs = hilbert::css_y_state(n, initial == QuenchInitial::StaggeredCssY);
  std::vector<std::unique_ptr<hilbert::SectorHamiltonian>> hams(n + 1);
  for (int k = 0; k <= n; ++k)
    if (fs.sectors[k].size() > 0 && fs.sectors[k].squaredNorm() > 1e-14)
      hams[k] = std::make_unique<hilbert::SectorHamiltonian>(
          fs.bases[k], sq.matrices.xy, sq.matrices.zz, sq.matrices.field_z, Config(0));

  // pairs of compact labels grouped by ring separation of the original sites
  const int d_max = geom.n_sites / 2;
  std::vector<std::vector<std::pair<int, int>>> pairs(d_max + 1);
  for (int l = 0; l < n; ++l)
    for (int k = l; k < n; ++k)
      pairs[lattice::ring_separation(site_of_label[l], site_of_label[k], geom)].emplace_back(l, k);

  QuenchGrid grid;
  grid.times = times;
  for (int d = 0; d <= d_max; ++d)
    if (!pairs[d].empty()) grid.distances.push_back(d);
  const int n_d = static_cast<int>(grid.distances.size());
  const int n_t = static_cast<int>(times.size());
  grid.czz.setZero(n_t, n_d);
  grid.czz_err.setZero(n_t, n_d);
  grid.var_mz.setZero(n_t);

  double t_prev = 0.0;
  for (int ti = 0; ti < n_t; ++ti) {
    const double t = times[ti];
    if (t > t_prev + 1e-15)
      for (int k = 0; k <= n; ++k)
        if (hams[k]) exact::krylov_propagate(*hams[k], {}, fs.sectors[k], t_prev, t, prop);
    t_prev = t;

    const Eigen::VectorXd sz = hilbert::observable_sz(fs);
    const Eigen::MatrixXd czz = hilbert::observable_czz(fs);
    const Eigen::MatrixXd conn = czz - sz * sz.transpose();
    grid.var_mz[ti] = conn.sum();
    for (int di = 0; di < n_d; ++di) {
      const auto& ps = pairs[grid.distances[di]];
      stats::WelfordScalar w;
      for (const auto& [l, k] : ps) w.add(conn(l, k));
      grid.czz(ti, di) = w.mean();
      grid.czz_err(ti, di) = w.stderror();
    }
  }
  return grid;
}

FriedelResult run_friedel(const lattice::ChainGeometry& geom, const lattice::CouplingModel& model,
                          int target_mz, const RampSchedule& schedule, FriedelMode mode,
                          const NoiseModel& noise, int n_trajectories, std::uint64_t seed,
                          const exact::PropagationOptions& prop) {
  geom.validate();
  model.validate();
  if (geom.boundary != lattice::Boundary::OpenRing)
    fail_arg("run_friedel: an open ring (one position left empty) is required");
  if (!geom.holes.empty()) fail_arg("run_friedel: base geometry must be hole-free");
  const int n = geom.n_active();
  if (n % 2 == 0) fail_arg("run_friedel: active chain length must be odd");
  if ((n + target_mz) % 2 != 0 || std::abs(target_mz) > n)
    fail_arg("run_friedel: target magnetization unreachable at this length");

  const int n_pos = geom.n_sites;
  const auto active = geom.active_sites();
  constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

  FriedelResult res;
  res.mz = target_mz;
  res.n_active = n;
  res.mode = mode;
  res.addressed = friedel_pattern(geom, target_mz);
  res.sz_obc.setConstant(n_pos, kNan);
  res.sz_pbc.setConstant(n_pos, kNan);

  if (mode == FriedelMode::DirectGroundState) {
    const auto mats = lattice::build_couplings(geom, model);
    auto sq = lattice::squeeze_holes(geom, mats);
    const int n_up = (n + target_mz) / 2;
    auto basis = std::make_shared<const hilbert::SectorBasis>(n, n_up);
    hilbert::SectorHamiltonian ham(basis, sq.matrices.xy, sq.matrices.zz, sq.matrices.field_z);
    const auto which =
        model.sign == lattice::Sign::AFM ? exact::Which::Highest : exact::Which::Lowest;
    const auto ext = exact::lanczos_extremal(ham, which);
    if (!ext.converged)
      throw std::runtime_error("run_friedel: extremal state did not converge");
    const Eigen::VectorXd sz = hilbert::observable_sz(*basis, ext.state);
    for (int k = 0; k < n; ++k) res.sz_obc[sq.old_index[k]] = sz[k];
    // the translation-invariant background is uniform by symmetry
    for (int s : active) res.sz_pbc[s] = static_cast<double>(target_mz) / n;
  } else {
    RampSchedule sched = schedule;
    sched.addressed = res.addressed;
    if (sched.checkpoints.empty() ||
        sched.checkpoints.back() < sched.total_duration() - 1e-12)
      sched.checkpoints.push_back(sched.total_duration());
    const auto obc = run_ramp(geom, model, sched, noise, n_trajectories, seed, prop);
    res.sz_obc = obc.checkpoints.back().sz;

    lattice::ChainGeometry ring{n, lattice::Boundary::PeriodicRing};
    RampSchedule sched_ring = sched;
    sched_ring.addressed = friedel_pattern(ring, target_mz);
    const auto pbc = run_ramp(ring, model, sched_ring, noise, n_trajectories, seed + 1, prop);
    const auto& sz_ring = pbc.checkpoints.back().sz;
    for (int k = 0; k < n; ++k) res.sz_pbc[active[k]] = sz_ring[k];
  }
  res.signal = res.sz_obc - res.sz_pbc;
  return res;
}

std::vector<AngularPoint> angular_scan(const std::vector<TrajectoryOutcome>& ensemble,
                                       const std::vector<double>& angles,
                                       const std::vector<int>& addressed, int n_sites) {
  if (ensemble.empty()) fail_arg("angular_scan: empty ensemble");
  const std::set<int> addr(addressed.begin(), addressed.end());

  struct Acc {
    stats::WelfordMat ct;
    stats::WelfordScalar mag_a, mag_r;
  };
  std::vector<Acc> acc(angles.size());
  for (auto& a : acc) a.ct.init(n_sites, n_sites);

  for (const auto& tr : ensemble) {
    const int m = tr.state.n_spins();
    if (m == 0) continue;
    const Eigen::VectorXcd full0 = hilbert::to_full_vector(*tr.state.basis, tr.state.amps);
    for (std::size_t ai = 0; ai < angles.size(); ++ai) {
      Eigen::VectorXcd full = full0;
      const Eigen::Matrix2cd u = plane_rotation(angles[ai]);
      for (int l = 0; l < m; ++l) hilbert::apply_single_qubit(full, m, l, u);
      const auto fs = hilbert::split_full_vector(full, m);
      const Eigen::VectorXd sz = hilbert::observable_sz(fs);
      const Eigen::MatrixXd czz = hilbert::observable_czz(fs);
      const Eigen::MatrixXd conn = czz - sz * sz.transpose();

      double sum_a = 0.0, sum_r = 0.0;
      int n_a = 0, n_r = 0;
      for (int l = 0; l < m; ++l) {
        const int i = tr.site_of_label[l];
        if (addr.count(i)) {
          sum_a += sz[l];
          ++n_a;
        } else {
          sum_r += sz[l];
          ++n_r;
        }
        for (int k = l; k < m; ++k) {
          const int j = tr.site_of_label[k];
          acc[ai].ct.add(i, j, conn(l, k));
          if (k != l) acc[ai].ct.add(j, i, conn(l, k));
        }
      }
      if (n_a > 0) acc[ai].mag_a.add(sum_a / n_a);
      if (n_r > 0) acc[ai].mag_r.add(sum_r / n_r);
    }
  }

  std::vector<AngularPoint> out(angles.size());
  for (std::size_t ai = 0; ai < angles.size(); ++ai) {
    out[ai].theta = angles[ai];
    out[ai].mag_addressed = acc[ai].mag_a.mean();
    out[ai].mag_addressed_err = acc[ai].mag_a.stderror();
    out[ai].mag_rest = acc[ai].mag_r.mean();
    out[ai].mag_rest_err = acc[ai].mag_r.stderror();
    acc[ai].ct.finish(out[ai].ctheta, out[ai].ctheta_err);
  }
  return out;
}

}  // namespace tll::protocol
