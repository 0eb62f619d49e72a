#include "tll/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace tll::lattice {

namespace {

constexpr double kPi = std::numbers::pi;

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

}  // namespace

bool ChainGeometry::is_vacant(int i) const {
  if (boundary == Boundary::OpenRing && i == removed_site) return true;
  return std::find(holes.begin(), holes.end(), i) != holes.end();
}

int ChainGeometry::n_active() const { return static_cast<int>(active_sites().size()); }

std::vector<int> ChainGeometry::active_sites() const {
  std::vector<int> out;
  // callers may probe a not-yet-validated geometry; a negative n_sites must
  // land in validate()'s report, not in a length_error from reserve
  out.reserve(std::max(0, n_sites));
  for (int i = 0; i < n_sites; ++i)
    if (!is_vacant(i)) out.push_back(i);
  return out;
}

void ChainGeometry::validate() const {
  if (n_sites < 2) fail("ChainGeometry: n_sites must be at least 2");
  if (boundary == Boundary::OpenRing) {
    if (removed_site < 0 || removed_site >= n_sites)
      fail("ChainGeometry: OpenRing needs removed_site in [0, n_sites)");
  } else if (removed_site != -1) {
    fail("ChainGeometry: removed_site is only meaningful for OpenRing");
  }
  std::set<int> seen;
  for (int h : holes) {
    if (h < 0 || h >= n_sites) fail("ChainGeometry: hole index out of range");
    if (boundary == Boundary::OpenRing && h == removed_site)
      fail("ChainGeometry: hole coincides with the removed site");
    if (!seen.insert(h).second) fail("ChainGeometry: duplicate hole index");
  }
  if (n_active() < 1) fail("ChainGeometry: no active sites left");
}

int ring_separation(int i, int j, const ChainGeometry& geom) {
  const int n = geom.n_sites;
  int d = std::abs(i - j) % n;
  return std::min(d, n - d);
}

double chord_distance(int i, int j, const ChainGeometry& geom) {
  const double n = geom.n_sites;
  const int d = ring_separation(i, j, geom);
  return n / kPi * std::sin(kPi * d / n) * ChainGeometry::spacing;
}

double perimeter_distance(double r, const ChainGeometry& geom) {
  const double n = geom.n_sites;
  // Round-off can push a maximal chord a hair past the asin domain.
  const double x = std::min(1.0, kPi * r / (n * ChainGeometry::spacing));
  if (x < 0) fail("perimeter_distance: negative distance");
  return n / kPi * std::asin(x);
}

CouplingModel CouplingModel::dipolar_adiabatic(Sign sign) {
  CouplingModel m;
  m.j_xy = 2 * kPi * 0.55;
  m.exponent = 3;
  m.sign = sign;
  m.vdw_uu = 2 * kPi * 0.051;
  m.vdw_dd = -2 * kPi * 0.007;
  m.vdw_ud = 2 * kPi * 0.058;
  return m;
}

CouplingModel CouplingModel::dipolar_quench(Sign sign) {
  CouplingModel m;
  m.j_xy = 2 * kPi * 0.62;
  m.exponent = 3;
  m.sign = sign;
  m.vdw_uu = 2 * kPi * 0.030;
  m.vdw_dd = -2 * kPi * 0.006;
  m.vdw_ud = 2 * kPi * 0.009;
  return m;
}

CouplingModel CouplingModel::nn_chain(double j, Sign sign) {
  CouplingModel m;
  m.j_xy = j;
  m.exponent = std::numeric_limits<double>::infinity();
  m.sign = sign;
  return m;
}

void CouplingModel::validate() const {
  if (!(j_xy > 0)) fail("CouplingModel: j_xy must be positive");
  if (!(exponent > 0)) fail("CouplingModel: exponent must be positive");
  for (const auto& [bond, factor] : bond_overrides) {
    if (bond.first >= bond.second) fail("CouplingModel: bond_overrides keys must have i < j");
    if (bond.first < 0) fail("CouplingModel: bond_overrides site out of range");
    if (factor < 0) fail("CouplingModel: bond_overrides factor must be non-negative");
  }
}

CouplingMatrices build_couplings(const ChainGeometry& geom, const CouplingModel& model) {
  geom.validate();
  model.validate();
  for (const auto& [bond, factor] : model.bond_overrides) {
    (void)factor;
    if (bond.second >= geom.n_sites) fail("build_couplings: bond_overrides site out of range");
  }

  const int n = geom.n_sites;
  const bool nn_only = std::isinf(model.exponent);
  // sz sz and single-sz coefficients of the 1/r^6 interaction tensor written
  // in the Pauli basis; the constant piece is dropped as an energy offset.
  const double c_zz = (model.vdw_uu + model.vdw_dd - 2 * model.vdw_ud) / 4.0;
  const double c_z = (model.vdw_uu - model.vdw_dd) / 4.0;

  CouplingMatrices out;
  out.xy = Eigen::MatrixXd::Zero(n, n);
  out.zz = Eigen::MatrixXd::Zero(n, n);
  out.field_z = Eigen::VectorXd::Zero(n);

  for (int i = 0; i < n; ++i) {
    if (geom.is_vacant(i)) continue;
    for (int j = i + 1; j < n; ++j) {
      if (geom.is_vacant(j)) continue;
      const double r = chord_distance(i, j, geom);
      double xy;
      if (nn_only) {
        xy = ring_separation(i, j, geom) == 1 ? model.j_xy : 0.0;
      } else {
        xy = model.j_xy / std::pow(r, model.exponent);
      }
      if (auto it = model.bond_overrides.find({i, j}); it != model.bond_overrides.end())
        xy *= it->second;
      const double r6 = std::pow(r, 6);
      const double zz = c_zz / r6;
      out.xy(i, j) = out.xy(j, i) = xy;
      out.zz(i, j) = out.zz(j, i) = zz;
      out.field_z(i) += c_z / r6;
      out.field_z(j) += c_z / r6;
    }
  }
  return out;
}

SqueezeResult squeeze_holes(const ChainGeometry& geom, const CouplingMatrices& matrices) {
  geom.validate();
  if (matrices.xy.rows() != geom.n_sites || matrices.zz.rows() != geom.n_sites ||
      matrices.field_z.size() != geom.n_sites)
    fail("squeeze_holes: matrices do not match geometry");

  SqueezeResult out;
  out.old_index = geom.active_sites();
  const int m = static_cast<int>(out.old_index.size());

  // The survivors are relabeled 0..m-1; the result geometry only records the
  // count and labeling, the ring physics lives in the carried-over couplings.
  out.geom.n_sites = m;
  out.geom.boundary = Boundary::PeriodicRing;
  out.geom.removed_site = -1;

  out.matrices.xy = Eigen::MatrixXd::Zero(m, m);
  out.matrices.zz = Eigen::MatrixXd::Zero(m, m);
  out.matrices.field_z = Eigen::VectorXd::Zero(m);
  for (int a = 0; a < m; ++a) {
    out.matrices.field_z(a) = matrices.field_z(out.old_index[a]);
    for (int b = 0; b < m; ++b) {
      out.matrices.xy(a, b) = matrices.xy(out.old_index[a], out.old_index[b]);
      out.matrices.zz(a, b) = matrices.zz(out.old_index[a], out.old_index[b]);
    }
  }
  return out;
}

}  // namespace tll::lattice
