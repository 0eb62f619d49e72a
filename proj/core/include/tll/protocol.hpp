// Experimental sequences on the dipolar chain: adiabatic light-shift ramps
// with trajectory noise, projective snapshot sampling, sudden quenches from
// coherent product states, and open-ring magnetization profiles with their
// periodic background.
//
// Conventions shared by everything here:
//   - States live on the squeezed (hole-free) chain; site_of_label maps each
//     compact label back to its original position, and every reported
//     observable is keyed by original positions with NaN marking cells that
//     were absent in all trajectories.
//   - The addressed sublattice feels an extra (delta(t)/2) sz per site; the
//     constant delta(t)/2 per addressed site is dropped as a global phase.
//   - A positive delta0 follows the lowest state of the coupling model, a
//     negative one the highest; run_ramp rejects a sign that disagrees with
//     the model's FM/AFM label.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "tll/exact.hpp"
#include "tll/hilbert.hpp"
#include "tll/lattice.hpp"

namespace tll::protocol {

struct RampSchedule {
  double delta0 = 0.0;    // rad/us at t=0; sign picks the spectral branch
  double duration = 0.0;  // us; reverse=true runs the mirror image afterwards
  double alpha = 20.0;    // shape parameter, larger = slower near the end
  std::vector<int> addressed;     // original site labels carrying the shift
  std::vector<double> checkpoints;  // observable times within [0, total]
  bool reverse = false;

  double total_duration() const { return reverse ? 2.0 * duration : duration; }
  void validate() const;
};

// delta(t) = delta0 (T-t) / (T - (1-alpha) t), folded back for the reverse
// leg; hits zero exactly at t = T. Throws outside [0, total].
double lila_delta(double t, const RampSchedule& schedule);

struct NoiseModel {
  double p_init = 0.0;  // per-site hole probability at preparation
  double gamma = 0.0;   // per-channel decay rate; each site decays at 2*gamma
  double eps_up = 0.0;  // P(read down | up)
  double eps_dn = 0.0;  // P(read up | down)
  bool holes_enabled = true;
  bool decay_enabled = true;
  bool detection_enabled = true;

  void validate() const;
  bool stochastic() const;  // any mechanism that varies between trajectories
};

// Alternating sublattice (odd original labels among the active sites): the
// default addressing pattern for Neel preparation.
std::vector<int> alternating_sublattice(const lattice::ChainGeometry& geom);

// Down-site pattern reaching target_mz with maximally uniform spacing:
// active-order position k is addressed iff floor((k+1) m / N) increments,
// m = (N - mz) / 2.
std::vector<int> friedel_pattern(const lattice::ChainGeometry& geom, int target_mz);

struct CheckpointObservables {
  double time = 0.0;
  double delta = 0.0;                 // light shift at this time
  Eigen::VectorXd sz, sz_err;         // per original site
  Eigen::MatrixXd czz, czz_err;       // raw <sz_i sz_j>
  Eigen::MatrixXd czz_connected;      // czz minus the outer product of mean sz
  Eigen::MatrixXd cxx, cxx_err;       // <sx_i sx_j>
  double mag_addressed = 0.0, mag_addressed_err = 0.0;
  double mag_rest = 0.0, mag_rest_err = 0.0;
  double energy = 0.0, energy_err = 0.0;  // <H> with the light shift off
};

struct TrajectoryOutcome {
  hilbert::SectorState state;
  std::vector<int> site_of_label;  // original position of each compact label
  std::vector<int> holes;          // original labels lost (initial + decayed)
  std::vector<double> jump_times;
  std::vector<int> jump_sites;     // original labels
  std::vector<int> jump_channels;  // 0 up->g, 1 up->r', 2 down->g, 3 down->r'
};

struct RampResult {
  std::vector<CheckpointObservables> checkpoints;
  std::vector<TrajectoryOutcome> trajectories;
  int n_trajectories = 0;
};

// Quantum-trajectory ramp from the Neel state with the addressed sublattice
// down. Jump times are pre-sampled per site from Exp(2*gamma); a jump
// projects the site out (up/down branch by Born weight, final level g or r'
// by a fair coin) and the chain closes ranks around the new hole. With no
// stochastic mechanism enabled a single trajectory is run regardless of
// n_trajectories.
RampResult run_ramp(const lattice::ChainGeometry& geom, const lattice::CouplingModel& model,
                    const RampSchedule& schedule, const NoiseModel& noise,
                    int n_trajectories, std::uint64_t seed,
                    const exact::PropagationOptions& prop = {});

struct SnapshotSet {
  std::string basis_label;  // "z" or "theta=<radians>"
  bool z_basis = true;
  double theta = 0.0;
  int n_sites = 0;  // original positions per shot entry
  std::vector<std::vector<std::int8_t>> shots;  // +1 up, -1 down, 0 missing
  std::uint64_t seed = 0;
};

// Projective shots in the z basis or along cos(theta) x + sin(theta) y (the
// state is rotated site by site, then read in z). Detection errors flip
// outcomes independently per site; holes read as missing.
SnapshotSet sample_snapshots(const hilbert::SectorState& state,
                             const std::vector<int>& site_of_label, int n_sites,
                             bool z_basis, double theta, int n_shots,
                             const NoiseModel& noise, std::uint64_t seed);

// Ensemble flavour: shot s draws from trajectory s mod ensemble size.
SnapshotSet sample_snapshots(const std::vector<TrajectoryOutcome>& ensemble, int n_sites,
                             bool z_basis, double theta, int n_shots,
                             const NoiseModel& noise, std::uint64_t seed);

enum class QuenchInitial { CssY, StaggeredCssY };

inline constexpr int kQuenchMaxSpins = 16;

struct QuenchGrid {
  std::vector<double> times;
  std::vector<int> distances;    // ring separations 0 .. floor(N/2)
  Eigen::MatrixXd czz, czz_err;  // connected C^z(d, t), rows = times; err over pairs
  Eigen::VectorXd var_mz;        // sum of the connected matrix at each time
};

// Sudden quench from a y-polarized (optionally staggered) product state,
// evolved exactly sector by sector; correlations are binned by ring
// separation. Chains above kQuenchMaxSpins are rejected.
QuenchGrid run_quench(const lattice::ChainGeometry& geom, const lattice::CouplingModel& model,
                      QuenchInitial initial, const std::vector<double>& times,
                      const exact::PropagationOptions& prop = {});

enum class FriedelMode { AdiabaticRamp, DirectGroundState };

struct FriedelResult {
  Eigen::VectorXd sz_obc;   // per original position, NaN where no atom sits
  Eigen::VectorXd sz_pbc;   // matching periodic background on the same axis
  Eigen::VectorXd signal;   // sz_obc - sz_pbc
  std::vector<int> addressed;  // down pattern used, recorded for the output
  int mz = 0;
  int n_active = 0;
  FriedelMode mode = FriedelMode::DirectGroundState;
};

// Open-ring magnetization profile at fixed total sz with its periodic
// background. DirectGroundState solves the sector extremal state per chain
// and uses the exact uniform background mz/N; AdiabaticRamp runs the full
// preparation on both geometries with identical schedules.
FriedelResult run_friedel(const lattice::ChainGeometry& geom, const lattice::CouplingModel& model,
                          int target_mz, const RampSchedule& schedule, FriedelMode mode,
                          const NoiseModel& noise = {}, int n_trajectories = 1,
                          std::uint64_t seed = 1,
                          const exact::PropagationOptions& prop = {});

struct AngularPoint {
  double theta = 0.0;
  double mag_addressed = 0.0, mag_addressed_err = 0.0;
  double mag_rest = 0.0, mag_rest_err = 0.0;
  Eigen::MatrixXd ctheta, ctheta_err;  // connected, original positions
};

// Rotated-basis magnetization and connected correlations, exactly evaluated
// per trajectory and averaged over the ensemble.
std::vector<AngularPoint> angular_scan(const std::vector<TrajectoryOutcome>& ensemble,
                                       const std::vector<double>& angles,
                                       const std::vector<int>& addressed, int n_sites);

}  // namespace tll::protocol
