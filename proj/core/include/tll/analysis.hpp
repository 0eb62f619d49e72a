// Estimators and fits on top of the simulation output: chord-distance
// binning, detection-error inversion, Luttinger-parameter fits of the x and
// z correlation profiles, boundary-oscillation fits and their FFT, light
// cone front tracking, and the hole-induced decay length.
//
// Distance conventions: profiles carry the chord distance r of each integer
// ring separation d; fit models evaluate staggered signs and envelopes at d.
// Fits taking an `n_ring` accept 0 to mean an infinite straight chain, where
// r itself is the integer separation.

#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

#include "tll/lattice.hpp"
#include "tll/protocol.hpp"

namespace tll::analysis {

struct CorrelationProfile {
  std::vector<double> r;     // chord distances, strictly increasing
  std::vector<int> d;        // ring separation behind each r
  std::vector<double> mean;
  std::vector<double> err;   // 0 when the input carried no uncertainty
  std::vector<int> n_pairs;
  std::string basis;
  long n_samples = 0;  // pairs for matrix input, shots for snapshot input
};

// Pair average of a symmetric correlation matrix keyed by original site
// labels; NaN entries (never-present pairs) are skipped, empty bins are
// dropped with a note on stderr.
CorrelationProfile bin_correlations(const Eigen::MatrixXd& corr,
                                    const lattice::ChainGeometry& geom,
                                    const std::string& basis);

// Connected-correlation estimator from projective shots with hole-aware
// counts; the error combines shot noise with the pair spread.
CorrelationProfile bin_correlations(const protocol::SnapshotSet& snapshots,
                                    const lattice::ChainGeometry& geom);

// First-order read-out correction factor for correlations.
double detection_factor(double eps_up, double eps_dn);

// Invert the affine magnetization map m -> (eps_dn - eps_up) + (1-eps_up-eps_dn) m.
double invert_detection(double magnetization, double eps_up, double eps_dn);
Eigen::VectorXd invert_detection(const Eigen::VectorXd& magnetization, double eps_up,
                                 double eps_dn);

// Divide a correlation profile by the detection factor (recorded in basis
// metadata by the caller; the factor itself is detection_factor()).
CorrelationProfile invert_detection(const CorrelationProfile& profile, double eps_up,
                                    double eps_dn);

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd values;
  Eigen::MatrixXd covariance;
  double chi2 = 0.0;
  double chi2_reduced = 0.0;
  int dof = 0;
  double r_c = 0.0;
  double rescale = 1.0;
  bool weighted = false;
  bool converged = false;
  std::string message;

  double value(const std::string& name) const;
  double error(const std::string& name) const;  // sqrt of covariance diagonal
};

// Two-power-law x-correlation model with an exponential envelope:
//   C(r) = rescale * [ A r^(-1/2K) + B (-1)^d r^(-(2K + 1/2K)) ] e^(-d/xi),
// with the staggered sign on the A term instead when stagger=true (the
// antiferromagnetic branch). Points with d <= r_c are excluded. Reported
// parameters: K, A, B, inv_xi.
FitResult fit_cx(const CorrelationProfile& profile, int n_ring, double r_c,
                 bool stagger, double rescale = 1.0);

// z-correlation model with the amplitude of the smooth part tied to K:
//   C(r) = rescale * [ -(2K/pi^2) r^-2 + D (-1)^d r^(-2K) ].
// Reported parameters: K, D.
FitResult fit_cz(const CorrelationProfile& profile, int n_ring, double r_c,
                 double rescale = 1.0);

// Plain power law A r^s on log-log axes; used for tail-slope checks and for
// goodness-of-fit rejection of a single power law. Reported: A, slope.
FitResult fit_power_law(const CorrelationProfile& profile, double r_min, double r_max);

struct CutoffScan {
  std::vector<double> r_c;
  std::vector<double> k;
  std::vector<bool> converged;
  int selected_index = -1;  // -1 when no plateau was found

  bool has_selection() const { return selected_index >= 0; }
  double selected_rc() const;
};

// Runs the fitter at each cutoff and selects the smallest r_c whose K moves
// by less than `tolerance` when stepping to the next cutoff in the list.
CutoffScan cutoff_scan(const CorrelationProfile& profile,
                       const std::function<FitResult(const CorrelationProfile&, double)>& fitter,
                       const std::vector<double>& r_c_list, double tolerance = 0.05);

// Distance between the Fermi points at magnetization mz on n sites.
double friedel_wavevector(int mz, int n_sites);

// Boundary-oscillation model for the background-subtracted profile,
// indexed from the chain center (x = k - (N-1)/2):
//   signal(x) = A cos(kf2 * x) * [ (N/pi) cos(pi x / N) ]^(-K).
// sigma may be empty (unweighted). kf2 is pinned to friedel_wavevector when
// pin_wavevector is set, otherwise fitted. Reported: A, kf2, K.
FitResult fit_friedel(const Eigen::VectorXd& signal, const Eigen::VectorXd& sigma,
                      int n_sites, int mz, bool pin_wavevector = false);

struct FftPeak {
  Eigen::VectorXd q;          // 2 pi n / N, n = 0 .. N/2
  Eigen::VectorXd amplitude;  // |sum_j f_j exp(-i q j)|
  int peak_index = -1;        // argmax over q > 0
  double peak_q = 0.0;
  bool flat = false;  // no peak clearly above the typical level
};

FftPeak friedel_fft(const Eigen::VectorXd& profile);

struct LightconeOptions {
  int d_min = 2;               // shortest distance entering the fit
  double threshold_sigma = 3;  // front must clear this many pre-arrival sigmas
  double rel_floor = 0.2;      // ... and this fraction of the row maximum
  int n_pre = 3;               // leading times used for the pre-arrival noise
};

// Front arrival time per distance (first local maximum above the detection
// floor, refined by a three-point parabola), then a weighted fit of
// d = 2 v_g t* through the origin. Reported: vg.
FitResult fit_lightcone(const protocol::QuenchGrid& grid, const LightconeOptions& opts = {});

struct HoleDecayLength {
  double perimeter = 0.0;  // 1 / |ln(1 - 2p)| in site units
  double chord = 0.0;      // same length mapped onto the ring chord
};

HoleDecayLength hole_decay_length(double p, int n_ring);

}  // namespace tll::analysis
