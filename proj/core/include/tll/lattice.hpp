#pragma once
// Ring geometry, chord/perimeter metrics, and coupling-matrix assembly.
//
// Units everywhere: hbar = 1, lattice spacing a = 1, energies in rad/us.
// The spin Hamiltonian encoded by CouplingMatrices is
//
//   H = -(1/2) sum_{i<j} xy[i][j] (sx_i sx_j + sy_i sy_j)
//       + sum_{i<j} zz[i][j] sz_i sz_j
//       + sum_i field_z[i] sz_i
//
// so xy[i][j] = J / r_ij^exponent is positive for the ferromagnetic chain and
// the antiferromagnet is obtained downstream as the highest state of H.

#include <Eigen/Dense>
#include <map>
#include <utility>
#include <vector>

namespace tll::lattice {

enum class Boundary { PeriodicRing, OpenRing };

struct ChainGeometry {
  int n_sites = 0;  // ring positions, including a removed OpenRing site
  Boundary boundary = Boundary::PeriodicRing;
  int removed_site = -1;        // valid iff boundary == OpenRing
  std::vector<int> holes = {};  // non-interacting vacancies, disjoint from removed_site
  static constexpr double spacing = 1.0;

  bool is_vacant(int i) const;
  int n_active() const;
  std::vector<int> active_sites() const;  // ascending ring indices
  void validate() const;                  // throws std::invalid_argument
};

// Shortest separation along the ring, in sites.
int ring_separation(int i, int j, const ChainGeometry& geom);

// Straight-line distance between ring positions: (N/pi) sin(pi |i-j| / N).
// The removed site of an OpenRing does not change the circle, only which
// positions hold an atom.
double chord_distance(int i, int j, const ChainGeometry& geom);

// Inverse map, (N/pi) asin(pi r / N); integer-valued (to round-off) when r is
// a lattice chord distance.
double perimeter_distance(double r, const ChainGeometry& geom);

enum class Sign { FM, AFM };

struct CouplingModel {
  double j_xy = 0;       // rad/us, > 0
  double exponent = 3;   // power-law range; infinity = nearest-neighbor only
  Sign sign = Sign::FM;  // AFM is realized as the highest state of H downstream
  double vdw_uu = 0, vdw_dd = 0, vdw_ud = 0;        // rad/us, 1/r^6 tensor
  std::map<std::pair<int, int>, double> bond_overrides;  // (i<j) -> scale factor

  // Interaction parameters for the two experimental operating points
  // (slow-preparation and quench calibrations), in rad/us.
  static CouplingModel dipolar_adiabatic(Sign sign = Sign::FM);
  static CouplingModel dipolar_quench(Sign sign = Sign::FM);
  static CouplingModel nn_chain(double j, Sign sign = Sign::FM);

  void validate() const;
};

struct CouplingMatrices {
  Eigen::MatrixXd xy;       // symmetric, zero diagonal, zero rows at vacancies
  Eigen::MatrixXd zz;       // sz_i sz_j coefficients from the 1/r^6 tensor
  Eigen::VectorXd field_z;  // per-site sz coefficients from the same rewriting
};

CouplingMatrices build_couplings(const ChainGeometry& geom, const CouplingModel& model);

struct SqueezeResult {
  ChainGeometry geom;        // holes deleted, sites relabeled contiguously
  CouplingMatrices matrices; // couplings carried over between survivors
  std::vector<int> old_index;  // old_index[new_label] = original ring site
};

// Relabeled ("squeezed") chain with hole sites deleted. A hole between former
// neighbors leaves the weakened long bond behind. Distances computed on the
// squeezed geometry are label distances; the carried-over couplings keep the
// original ring physics.
SqueezeResult squeeze_holes(const ChainGeometry& geom, const CouplingMatrices& matrices);

}  // namespace tll::lattice
