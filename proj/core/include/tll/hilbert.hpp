#pragma once
// Fixed-magnetization bases over compact spin labels and a matrix-free,
// cache-blocked application of the ring Hamiltonian.
//
// Conventions: a basis configuration is a bitstring over compact labels
// 0..n_spins-1; bit set means sz = +1. Configurations of a sector are stored
// in ascending numeric order, and rank() inverts config() in O(1) via a
// high/low bit split (the low 12 bits index within a block, the high bits
// select the block).

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <memory>
#include <vector>

#include "tll/lattice.hpp"

namespace tll::hilbert {

using Config = std::uint32_t;

std::uint64_t binomial(int n, int k);

// All n_spins-bit words with n_up set bits, ascending.
std::vector<Config> enumerate_sector(int n_spins, int n_up);

class SectorBasis {
 public:
  SectorBasis(int n_spins, int n_up);

  int n_spins() const { return n_; }
  int n_up() const { return k_; }
  std::size_t size() const { return configs_.size(); }
  Config config(std::size_t idx) const { return configs_[idx]; }
  const std::vector<Config>& configs() const { return configs_; }
  std::size_t rank(Config c) const {
    return base_[c >> low_bits_] + rank12(c & low_mask_);
  }

  // Block layout used by the structured Hamiltonian kernel. Configurations
  // sharing a high word are contiguous; within a block the low words ascend,
  // so the in-block offset is the low word's rank among equal-popcount words.
  int low_bits() const { return low_bits_; }
  Config low_mask() const { return low_mask_; }
  bool high_valid(Config high) const;
  std::size_t block_start(Config high) const { return base_[high]; }

  // Rank of a 12-bit word among same-popcount 12-bit words, ascending.
  static std::uint16_t rank12(Config low);

 private:
  int n_, k_;
  int low_bits_;
  Config low_mask_;
  std::vector<Config> configs_;
  std::vector<std::size_t> base_;  // block start per high word
};

// Compact label <-> ring site translation for chains with vacancies.
struct SiteMap {
  std::vector<int> ring_of;   // label -> ring site
  std::vector<int> label_of;  // ring site -> label, -1 at vacancies

  static SiteMap identity(int n);
  static SiteMap for_geometry(const lattice::ChainGeometry& geom);
  int n_labels() const { return static_cast<int>(ring_of.size()); }
};

// Matrix-free H restricted to one magnetization sector. The operator is
//
//   H(b) = -(1/2) sum_{i<j} xy[i][j] (sx_i sx_j + sy_i sy_j)
//          + sum_{i<j} zz[i][j] sz_i sz_j + sum_i field_z[i] sz_i
//          + b * sum_{i in addressed_mask} sz_i
//
// with b supplied per application so ramps can sweep the addressed term
// without rebuilding. Couplings are indexed by compact label; squeeze
// vacancies out of the ring matrices first.
class SectorHamiltonian {
 public:
  SectorHamiltonian(std::shared_ptr<const SectorBasis> basis, const Eigen::MatrixXd& xy,
                    const Eigen::MatrixXd& zz, const Eigen::VectorXd& field_z,
                    Config addressed_mask = 0);

  std::size_t dim() const { return basis_->size(); }
  const SectorBasis& basis() const { return *basis_; }
  std::shared_ptr<const SectorBasis> basis_ptr() const { return basis_; }

  void apply(const double* x, double* y, double addressed_coeff = 0.0) const;
  void apply(const std::complex<double>* x, std::complex<double>* y,
             double addressed_coeff = 0.0) const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x, double addressed_coeff = 0.0) const;
  Eigen::VectorXcd apply(const Eigen::VectorXcd& x, double addressed_coeff = 0.0) const;

  // Plain per-configuration kernel, one rank lookup per generated hop. Slow
  // and simple; the structured path is validated against it.
  void apply_reference(const double* x, double* y, double addressed_coeff = 0.0) const;
  void apply_reference(const std::complex<double>* x, std::complex<double>* y,
                       double addressed_coeff = 0.0) const;

  const Eigen::VectorXd& static_diagonal() const { return diag_static_; }
  const Eigen::MatrixXd& xy() const { return xy_; }
  Eigen::VectorXd diagonal(double addressed_coeff) const;
  double expect(const Eigen::VectorXd& x, double addressed_coeff = 0.0) const;
  std::complex<double> expect(const Eigen::VectorXcd& x, double addressed_coeff = 0.0) const;

 private:
  struct LowHop {
    std::uint16_t src, dst;
    double w;
  };
  struct BlockAxpy {
    std::size_t a, b;
    std::uint32_t len;
    double w;
  };
  struct CrossBlock {
    std::size_t a, b;  // a: block holding the movable low bit; b: high gained
    std::uint8_t low_site, low_pop;
    double w;
  };

  template <typename Scalar>
  void apply_impl(const Scalar* x, Scalar* y, double addressed_coeff) const;
  template <typename Scalar>
  void apply_reference_impl(const Scalar* x, Scalar* y, double addressed_coeff) const;

  std::shared_ptr<const SectorBasis> basis_;
  Eigen::MatrixXd xy_;
  Eigen::VectorXd diag_static_;
  Eigen::VectorXd diag_addressed_;  // empty when addressed_mask == 0
  Config addressed_mask_ = 0;

  std::vector<std::vector<LowHop>> low_hops_;       // per low popcount
  std::vector<std::vector<std::size_t>> blocks_;    // block starts per low popcount
  std::vector<std::uint32_t> block_len_;            // per low popcount
  std::vector<BlockAxpy> high_hops_;
  std::vector<CrossBlock> cross_hops_;
  // pair_drop_[site][pop]: (rank12 with bit, rank12 without bit) for every
  // low word of that popcount containing the bit.
  std::vector<std::vector<std::vector<std::pair<std::uint16_t, std::uint16_t>>>> pair_drop_;
};

struct SectorState {
  std::shared_ptr<const SectorBasis> basis;
  Eigen::VectorXcd amps;

  int n_spins() const { return basis->n_spins(); }
  int n_up() const { return basis->n_up(); }
};

SectorState product_state(std::shared_ptr<const SectorBasis> basis, Config c);

// One-shot H|psi> with an arbitrary per-label sz light shift folded into the
// on-site field. Convenience path for tests and short-lived states; hot loops
// should build a SectorHamiltonian once and reuse it.
SectorState apply_hamiltonian(const lattice::CouplingMatrices& matrices,
                              const Eigen::VectorXd& light_shift, const SectorState& state);

// Measure sz at one compact label, keep the chosen outcome, and drop the
// label from the basis (remaining labels close ranks). probability is the
// Born weight of the branch; the returned state is normalized.
struct ProjectionResult {
  SectorState state;
  double probability = 0;
};
ProjectionResult project_out_site(const SectorState& state, int label, bool up);

// State spread over every magnetization sector, stored sector by sector.
struct FullState {
  int n_spins = 0;
  std::vector<std::shared_ptr<const SectorBasis>> bases;  // index n_up
  std::vector<Eigen::VectorXcd> sectors;

  double norm2() const;
};

// Product of single-site sy eigenstates (|up> + i s_j |down>)/sqrt(2) with
// s_j = +1 everywhere, or s_j = (-1)^j when staggered.
FullState css_y_state(int n_spins, bool staggered);

FullState split_full_vector(const Eigen::VectorXcd& full, int n_spins);
Eigen::VectorXcd to_full_vector(const SectorBasis& basis, const Eigen::VectorXcd& amps);
// In-place one-site gate; u is indexed (row, col) with 0 = sz=-1, 1 = sz=+1.
void apply_single_qubit(Eigen::VectorXcd& psi, int n_spins, int site,
                        const Eigen::Matrix2cd& u);

Eigen::VectorXd observable_sz(const SectorBasis& basis, const Eigen::VectorXd& amps);
Eigen::VectorXd observable_sz(const SectorBasis& basis, const Eigen::VectorXcd& amps);
Eigen::MatrixXd observable_czz(const SectorBasis& basis, const Eigen::VectorXd& amps);
Eigen::MatrixXd observable_czz(const SectorBasis& basis, const Eigen::VectorXcd& amps);
// <sx_i sx_j>; within a sector only the particle-conserving part contributes.
Eigen::MatrixXd observable_cxx(const SectorBasis& basis, const Eigen::VectorXd& amps);
Eigen::MatrixXd observable_cxx(const SectorBasis& basis, const Eigen::VectorXcd& amps);

Eigen::VectorXd observable_sz(const FullState& state);
Eigen::MatrixXd observable_czz(const FullState& state);

}  // namespace tll::hilbert
