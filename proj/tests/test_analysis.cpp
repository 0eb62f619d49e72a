#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "tll/analysis.hpp"
#include "tll/lattice.hpp"
#include "tll/protocol.hpp"

using namespace tll;

namespace {

lattice::ChainGeometry ring(int n) {
  lattice::ChainGeometry g;
  g.n_sites = n;
  return g;
}

analysis::CorrelationProfile straight_profile(int d_max,
                                              const std::function<double(int)>& model) {
  analysis::CorrelationProfile p;
  for (int d = 1; d <= d_max; ++d) {
    p.d.push_back(d);
    p.r.push_back(static_cast<double>(d));
    p.mean.push_back(model(d));
    p.n_pairs.push_back(1);
  }
  return p;
}

}  // namespace

TEST_SUITE_BEGIN("analysis");

TEST_CASE("matrix binning averages pairs by ring separation") {
  const auto geom = ring(4);
  Eigen::MatrixXd corr(4, 4);
  corr << 0.0, 1.0, 5.0, 4.0,  //
      1.0, 0.0, 2.0, 6.0,      //
      5.0, 2.0, 0.0, 3.0,      //
      4.0, 6.0, 3.0, 0.0;

  const auto prof = analysis::bin_correlations(corr, geom, "z");
  REQUIRE(prof.d == std::vector<int>{1, 2});
  CHECK(prof.r[0] == doctest::Approx((4.0 / M_PI) * std::sin(M_PI / 4.0)));
  CHECK(prof.r[1] == doctest::Approx(4.0 / M_PI));
  CHECK(prof.mean[0] == doctest::Approx((1.0 + 2.0 + 3.0 + 4.0) / 4.0));
  CHECK(prof.mean[1] == doctest::Approx((5.0 + 6.0) / 2.0));
  CHECK(prof.n_pairs == std::vector<int>{4, 2});
  CHECK(prof.basis == "z");
  CHECK(prof.n_samples == 6);

  // sample spread of {1,2,3,4}: std sqrt(5/3) over sqrt(4)
  CHECK(prof.err[0] == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0).epsilon(1e-12));

  // the two triangles are averaged
  Eigen::MatrixXd skew = corr;
  skew(0, 1) = 2.0;  // pair (0,1) now averages to 1.5
  const auto prof2 = analysis::bin_correlations(skew, geom, "z");
  CHECK(prof2.mean[0] == doctest::Approx((1.5 + 2.0 + 3.0 + 4.0) / 4.0));

  // NaN pairs drop out of the usable count
  Eigen::MatrixXd holey = corr;
  holey(0, 1) = holey(1, 0) = std::nan("");
  const auto prof3 = analysis::bin_correlations(holey, geom, "z");
  CHECK(prof3.n_pairs[0] == 3);
  CHECK(prof3.mean[0] == doctest::Approx(3.0));
}

TEST_CASE("snapshot binning estimates connected correlations") {
  const int n = 4, n_shots = 4000;
  std::mt19937 gen(12);
  std::bernoulli_distribution coin(0.5);

  protocol::SnapshotSet snaps;
  snaps.basis_label = "z";
  snaps.n_sites = n;
  for (int s = 0; s < n_shots; ++s) {
    std::vector<std::int8_t> shot(n);
    const std::int8_t pair = coin(gen) ? 1 : -1;
    shot[0] = pair;
    shot[1] = pair;  // perfectly correlated pair
    shot[2] = coin(gen) ? 1 : -1;
    shot[3] = coin(gen) ? 1 : -1;
    snaps.shots.push_back(shot);
  }

  const auto prof = analysis::bin_correlations(snaps, ring(n));
  REQUIRE(prof.d == std::vector<int>{1, 2});
  // one of the four d=1 pairs carries unit correlation, the others none
  CHECK(prof.mean[0] == doctest::Approx(0.25).epsilon(0.2));
  CHECK(std::abs(prof.mean[1]) < 0.05);
  CHECK(prof.err[0] > 0.0);

  // a dead site drops every pair that touches it
  for (auto& shot : snaps.shots) shot[3] = 0;
  const auto prof2 = analysis::bin_correlations(snaps, ring(n));
  CHECK(prof2.n_pairs == std::vector<int>{2, 1});
  CHECK(prof2.mean[0] == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("detection factor and its inversions") {
  CHECK(analysis::detection_factor(0.03, 0.025) == doctest::Approx(0.89).epsilon(1e-15));
  CHECK(analysis::detection_factor(0.0, 0.0) == 1.0);
  CHECK_THROWS_AS((void)analysis::detection_factor(0.3, 0.0), std::invalid_argument);

  const double eu = 0.04, ed = 0.02;
  for (double m : {-0.8, -0.1, 0.0, 0.37, 1.0}) {
    const double measured = (ed - eu) + (1.0 - eu - ed) * m;
    CHECK(analysis::invert_detection(measured, eu, ed) == doctest::Approx(m).epsilon(1e-12));
  }

  Eigen::VectorXd mags(3);
  mags << -0.5, 0.1, 0.9;
  const Eigen::VectorXd measured = (mags.array() * (1.0 - eu - ed) + (ed - eu)).matrix();
  const Eigen::VectorXd back = analysis::invert_detection(measured, eu, ed);
  CHECK((back - mags).cwiseAbs().maxCoeff() < 1e-12);

  analysis::CorrelationProfile prof = straight_profile(4, [](int d) { return 1.0 / d; });
  prof.err = {0.1, 0.1, 0.1, 0.1};
  const auto fixed = analysis::invert_detection(prof, eu, ed);
  const double f = analysis::detection_factor(eu, ed);
  for (int i = 0; i < 4; ++i) {
    CHECK(fixed.mean[i] == doctest::Approx(prof.mean[i] / f));
    CHECK(fixed.err[i] == doctest::Approx(0.1 / f));
  }
}

TEST_CASE("plain power law is recovered exactly") {
  const double a = 3.7, s = -1.3;
  const auto prof =
      straight_profile(30, [&](int d) { return a * std::pow(static_cast<double>(d), s); });
  const auto fit = analysis::fit_power_law(prof, 2.0, 30.0);
  REQUIRE(fit.converged);
  CHECK(fit.value("A") == doctest::Approx(a).epsilon(1e-8));
  CHECK(fit.value("slope") == doctest::Approx(s).epsilon(1e-8));
  CHECK(fit.chi2 < 1e-12);
}

TEST_CASE("transverse-correlation fit recovers its own model") {
  const double k = 1.4, a = 0.8, b = 0.1, inv_xi = 0.0;
  auto model = [&](int d) {
    const double r = static_cast<double>(d);
    return a * std::pow(r, -1.0 / (2.0 * k)) +
           b * (d % 2 == 0 ? 1.0 : -1.0) * std::pow(r, -(2.0 * k + 1.0 / (2.0 * k)));
  };
  const auto prof = straight_profile(40, model);

  const auto fit = analysis::fit_cx(prof, 0, 0.0, false);
  REQUIRE(fit.converged);
  CHECK(fit.value("K") == doctest::Approx(k).epsilon(1e-5));
  CHECK(fit.value("A") == doctest::Approx(a).epsilon(1e-4));
  CHECK(fit.value("B") == doctest::Approx(b).epsilon(1e-3));
  CHECK(std::abs(fit.value("inv_xi") - inv_xi) < 1e-6);

  // doubling data and rescale together leaves the parameters alone
  auto doubled = prof;
  for (auto& v : doubled.mean) v *= 2.0;
  const auto fit2 = analysis::fit_cx(doubled, 0, 0.0, false, 2.0);
  REQUIRE(fit2.converged);
  CHECK(fit2.value("K") == doctest::Approx(fit.value("K")).epsilon(1e-8));
  CHECK(fit2.value("A") == doctest::Approx(fit.value("A")).epsilon(1e-8));
  CHECK(fit2.rescale == doctest::Approx(2.0));
}

TEST_CASE("staggered transverse fit and the exponential envelope") {
  const double k = 0.9, a = 0.6, b = 0.05, inv_xi = 1.0 / 25.0;
  auto model = [&](int d) {
    const double r = static_cast<double>(d);
    const double sgn = d % 2 == 0 ? 1.0 : -1.0;
    return (a * sgn * std::pow(r, -1.0 / (2.0 * k)) +
            b * std::pow(r, -(2.0 * k + 1.0 / (2.0 * k)))) *
           std::exp(-d * inv_xi);
  };
  const auto prof = straight_profile(40, model);
  const auto fit = analysis::fit_cx(prof, 0, 0.0, true);
  REQUIRE(fit.converged);
  CHECK(fit.value("K") == doctest::Approx(k).epsilon(1e-4));
  CHECK(fit.value("inv_xi") == doctest::Approx(inv_xi).epsilon(1e-2));
}

TEST_CASE("longitudinal fit ties the smooth amplitude to K") {
  const double k = 0.85, dd = 0.3;
  const int n_ring = 48;
  const auto geom = ring(n_ring);

  analysis::CorrelationProfile prof;
  for (int d = 1; d <= n_ring / 2; ++d) {
    const double r = lattice::chord_distance(0, d, geom);
    prof.d.push_back(d);
    prof.r.push_back(r);
    prof.mean.push_back(-(2.0 * k / (M_PI * M_PI)) * std::pow(r, -2.0) +
                        dd * (d % 2 == 0 ? 1.0 : -1.0) * std::pow(r, -2.0 * k));
    prof.n_pairs.push_back(1);
  }

  const auto fit = analysis::fit_cz(prof, n_ring, 0.0);
  REQUIRE(fit.converged);
  CHECK(fit.value("K") == doctest::Approx(k).epsilon(1e-5));
  CHECK(fit.value("D") == doctest::Approx(dd).epsilon(1e-4));
}

TEST_CASE("cutoff scan picks the first plateau") {
  const std::vector<double> ks = {2.50, 2.30, 2.10, 2.02, 2.00, 1.99};
  auto fake = [&](const analysis::CorrelationProfile&, double rc) {
    analysis::FitResult r;
    r.names = {"K"};
    r.values = Eigen::VectorXd::Constant(1, ks[static_cast<std::size_t>(rc)]);
    r.covariance = Eigen::MatrixXd::Zero(1, 1);
    r.converged = true;
    return r;
  };
  const analysis::CorrelationProfile dummy = straight_profile(8, [](int) { return 1.0; });

  const auto scan = analysis::cutoff_scan(dummy, fake, {0, 1, 2, 3, 4, 5}, 0.05);
  REQUIRE(scan.has_selection());
  CHECK(scan.selected_rc() == doctest::Approx(3.0));
  CHECK(scan.k.size() == 6);

  auto drifting = [&](const analysis::CorrelationProfile&, double rc) {
    analysis::FitResult r;
    r.names = {"K"};
    r.values = Eigen::VectorXd::Constant(1, 1.0 + 0.2 * rc);
    r.converged = true;
    return r;
  };
  const auto none = analysis::cutoff_scan(dummy, drifting, {0, 1, 2, 3}, 0.05);
  CHECK_FALSE(none.has_selection());
  CHECK_THROWS_AS((void)none.selected_rc(), std::runtime_error);

  CHECK_THROWS_AS((void)analysis::cutoff_scan(dummy, fake, {1.0}, 0.05),
                  std::invalid_argument);
}

TEST_CASE("boundary oscillation fit finds wavevector and exponent") {
  const int n = 23, mz = 5;
  const double kf2 = analysis::friedel_wavevector(mz, n);
  CHECK(kf2 == doctest::Approx(M_PI * (1.0 - 5.0 / 23.0)));

  const double a = 0.2, k = 0.9;
  Eigen::VectorXd signal(n);
  for (int j = 0; j < n; ++j) {
    const double x = j - (n - 1) / 2;
    signal[j] = a * std::cos(kf2 * x) * std::pow((n / M_PI) * std::cos(M_PI * x / n), -k);
  }

  const auto free_fit = analysis::fit_friedel(signal, {}, n, mz, false);
  REQUIRE(free_fit.converged);
  CHECK(free_fit.value("A") == doctest::Approx(a).epsilon(1e-4));
  CHECK(free_fit.value("kf2") == doctest::Approx(kf2).epsilon(1e-4));
  CHECK(free_fit.value("K") == doctest::Approx(k).epsilon(1e-3));

  const auto pinned = analysis::fit_friedel(signal, {}, n, mz, true);
  REQUIRE(pinned.converged);
  CHECK(pinned.value("kf2") == doctest::Approx(kf2).epsilon(1e-12));
  CHECK(pinned.value("K") == doctest::Approx(k).epsilon(1e-3));
  CHECK(pinned.message.find("kf2 pinned") != std::string::npos);
}

TEST_CASE("oscillation spectrum peaks where it should") {
  const int n = 23;
  Eigen::VectorXd profile(n);
  const double q6 = 2.0 * M_PI * 6.0 / n;
  for (int j = 0; j < n; ++j) profile[j] = std::cos(q6 * j);

  const auto peak = analysis::friedel_fft(profile);
  CHECK(peak.q.size() == n / 2 + 1);
  CHECK(peak.peak_index == 6);
  CHECK(peak.peak_q == doctest::Approx(q6));
  CHECK_FALSE(peak.flat);

  const auto flat = analysis::friedel_fft(Eigen::VectorXd::Ones(n));
  CHECK(flat.flat);
}

TEST_CASE("light-cone fit recovers the front velocity") {
  const double vg = 1.3, width = 0.08;
  protocol::QuenchGrid grid;
  for (double t = 0.0; t <= 3.0 + 1e-12; t += 0.05) grid.times.push_back(t);
  grid.distances = {0, 1, 2, 3, 4, 5, 6, 7};
  const int nt = static_cast<int>(grid.times.size());
  const int nd = static_cast<int>(grid.distances.size());
  grid.czz.resize(nt, nd);
  grid.czz_err = Eigen::MatrixXd::Zero(nt, nd);
  grid.var_mz = Eigen::VectorXd::Zero(nt);
  for (int ti = 0; ti < nt; ++ti)
    for (int di = 0; di < nd; ++di) {
      const double arrive = grid.distances[di] / (2.0 * vg);
      const double u = (grid.times[ti] - arrive) / width;
      grid.czz(ti, di) = std::exp(-u * u);
    }

  const auto fit = analysis::fit_lightcone(grid);
  REQUIRE(fit.converged);
  CHECK(fit.value("vg") == doctest::Approx(vg).epsilon(0.02));
}

TEST_CASE("hole decay length in both metrics") {
  const auto len = analysis::hole_decay_length(0.06, 24);
  CHECK(len.perimeter == doctest::Approx(-1.0 / std::log(1.0 - 0.12)).epsilon(1e-12));
  CHECK(len.perimeter == doctest::Approx(7.8227).epsilon(1e-4));
  const double chord_expect = (24.0 / M_PI) * std::sin(M_PI * len.perimeter / 24.0);
  CHECK(len.chord == doctest::Approx(chord_expect).epsilon(1e-12));
  CHECK(len.chord == doctest::Approx(6.53).epsilon(0.01));

  // more holes cut the chain faster
  CHECK(analysis::hole_decay_length(0.10, 24).perimeter < len.perimeter);

  // a straight chain keeps the perimeter metric
  const auto open = analysis::hole_decay_length(0.06, 0);
  CHECK(open.chord == doctest::Approx(open.perimeter));

  CHECK_THROWS_AS((void)analysis::hole_decay_length(0.5, 24), std::invalid_argument);
  CHECK_THROWS_AS((void)analysis::hole_decay_length(0.0, 24), std::invalid_argument);
}

TEST_SUITE_END();
