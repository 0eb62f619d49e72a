#include "tll/hilbert.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <span>
#include <stdexcept>
#include <tuple>

#include "tll/linalg.hpp"

namespace tll::hilbert {

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument(what); }

constexpr int kMaxSpins = 26;      // keeps sector sizes and Config width sane
constexpr int kMaxFullSpins = 20;  // 2^n amplitude arrays

int popcount(Config c) { return std::popcount(c); }

}  // namespace

std::uint64_t binomial(int n, int k) {
  static const auto table = [] {
    std::array<std::array<std::uint64_t, 33>, 33> t{};
    for (int i = 0; i <= 32; ++i) {
      t[i][0] = 1;
      for (int j = 1; j <= i; ++j)
        t[i][j] = t[i - 1][j - 1] + (j <= i - 1 ? t[i - 1][j] : 0);
    }
    return t;
  }();
  if (n < 0 || n > 32 || k < 0) fail("binomial: out of tabulated range");
  return k > n ? 0 : table[n][k];
}

std::vector<Config> enumerate_sector(int n_spins, int n_up) {
  if (n_spins < 1 || n_spins > kMaxSpins) fail("enumerate_sector: n_spins out of range");
  if (n_up < 0 || n_up > n_spins) fail("enumerate_sector: n_up out of range");
  std::vector<Config> out;
  out.reserve(binomial(n_spins, n_up));
  if (n_up == 0) {
    out.push_back(0);
    return out;
  }
  const Config limit = Config(1) << n_spins;
  Config c = (Config(1) << n_up) - 1;
  while (true) {
    out.push_back(c);
    const Config u = c & (~c + 1);
    const Config v = c + u;
    if (v >= limit) break;
    c = v | (((v ^ c) / u) >> 2);
  }
  return out;
}

std::uint16_t SectorBasis::rank12(Config low) {
  static const auto table = [] {
    std::vector<std::uint16_t> t(4096);
    std::array<std::uint16_t, 13> counter{};
    for (Config w = 0; w < 4096; ++w) t[w] = counter[std::popcount(w)]++;
    return t;
  }();
  return table[low];
}

SectorBasis::SectorBasis(int n_spins, int n_up) : n_(n_spins), k_(n_up) {
  configs_ = enumerate_sector(n_spins, n_up);  // validates the arguments
  low_bits_ = std::min(n_, 12);
  low_mask_ = (Config(1) << low_bits_) - 1;
  base_.assign(std::size_t(1) << (n_ - low_bits_), 0);
  Config prev_high = ~Config(0);
  for (std::size_t idx = 0; idx < configs_.size(); ++idx) {
    const Config high = configs_[idx] >> low_bits_;
    if (high != prev_high) {
      base_[high] = idx;
      prev_high = high;
    }
  }
}

bool SectorBasis::high_valid(Config high) const {
  const int p = k_ - popcount(high);
  return p >= 0 && p <= low_bits_;
}

SiteMap SiteMap::identity(int n) {
  SiteMap m;
  m.ring_of.resize(n);
  m.label_of.resize(n);
  for (int i = 0; i < n; ++i) m.ring_of[i] = m.label_of[i] = i;
  return m;
}

SiteMap SiteMap::for_geometry(const lattice::ChainGeometry& geom) {
  geom.validate();
  SiteMap m;
  m.label_of.assign(geom.n_sites, -1);
  for (int site : geom.active_sites()) {
    m.label_of[site] = static_cast<int>(m.ring_of.size());
    m.ring_of.push_back(site);
  }
  return m;
}

SectorHamiltonian::SectorHamiltonian(std::shared_ptr<const SectorBasis> basis,
                                     const Eigen::MatrixXd& xy, const Eigen::MatrixXd& zz,
                                     const Eigen::VectorXd& field_z, Config addressed_mask)
    : basis_(std::move(basis)), xy_(xy), addressed_mask_(addressed_mask) {
  const int n = basis_->n_spins();
  const int k = basis_->n_up();
  if (xy.rows() != n || xy.cols() != n || zz.rows() != n || zz.cols() != n ||
      field_z.size() != n)
    fail("SectorHamiltonian: coupling dimensions do not match the basis");
  if (!xy.isApprox(xy.transpose(), 1e-12) || !zz.isApprox(zz.transpose(), 1e-12))
    fail("SectorHamiltonian: coupling matrices must be symmetric");
  if (addressed_mask >> n) fail("SectorHamiltonian: addressed_mask has bits past n_spins");

  std::vector<std::tuple<int, int, double>> zz_pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (zz(i, j) != 0) zz_pairs.emplace_back(i, j, zz(i, j));
  std::vector<std::pair<int, double>> fields;
  for (int i = 0; i < n; ++i)
    if (field_z(i) != 0) fields.emplace_back(i, field_z(i));

  const auto& cfgs = basis_->configs();
  diag_static_.resize(cfgs.size());
  for (std::size_t idx = 0; idx < cfgs.size(); ++idx) {
    const Config c = cfgs[idx];
    double s = 0;
    for (const auto& [i, j, w] : zz_pairs) s += (((c >> i) ^ (c >> j)) & 1) ? -w : w;
    for (const auto& [i, w] : fields) s += ((c >> i) & 1) ? w : -w;
    diag_static_[idx] = s;
  }
  if (addressed_mask_ != 0) {
    const int mask_pop = popcount(addressed_mask_);
    diag_addressed_.resize(cfgs.size());
    for (std::size_t idx = 0; idx < cfgs.size(); ++idx)
      diag_addressed_[idx] = 2 * popcount(cfgs[idx] & addressed_mask_) - mask_pop;
  }

  const int L = basis_->low_bits();
  const int hb = n - L;
  low_hops_.assign(L + 1, {});
  blocks_.assign(L + 1, {});
  block_len_.assign(L + 1, 0);
  for (int p = 0; p <= L; ++p) block_len_[p] = static_cast<std::uint32_t>(binomial(L, p));

  for (Config high = 0; high < (Config(1) << hb); ++high)
    if (basis_->high_valid(high))
      blocks_[k - popcount(high)].push_back(basis_->block_start(high));

  // Hops with both sites in the low window stay inside one block and reuse
  // the same local (src, dst) pattern in every block of that low popcount.
  for (Config w = 0; w < (Config(1) << L); ++w) {
    const int p = popcount(w);
    for (int a = 0; a < L; ++a) {
      if (!((w >> a) & 1)) continue;
      for (int b = 0; b < L; ++b) {
        if (b == a || ((w >> b) & 1)) continue;
        if (b < a) continue;  // each unordered word pair once, applied both ways
        if (xy_(a, b) == 0) continue;
        const Config w2 = w ^ (Config(1) << a) ^ (Config(1) << b);
        low_hops_[p].push_back({SectorBasis::rank12(w), SectorBasis::rank12(w2), -xy_(a, b)});
      }
    }
  }

  // Hops with both sites in the high window keep the low word, so they move
  // whole blocks onto whole blocks of the same length.
  pair_drop_.assign(L, std::vector<std::vector<std::pair<std::uint16_t, std::uint16_t>>>(L + 1));
  for (Config w = 0; w < (Config(1) << L); ++w) {
    const int p = popcount(w);
    for (int a = 0; a < L; ++a)
      if ((w >> a) & 1)
        pair_drop_[a][p].push_back({SectorBasis::rank12(w), SectorBasis::rank12(w & ~(Config(1) << a))});
  }

  for (Config high = 0; high < (Config(1) << hb); ++high) {
    if (!basis_->high_valid(high)) continue;
    const int p = k - popcount(high);
    for (int b2 = 0; b2 < hb; ++b2) {
      if ((high >> b2) & 1) continue;
      const Config gained = high | (Config(1) << b2);
      for (int a2 = 0; a2 < hb; ++a2) {
        if (a2 == b2 || !((high >> a2) & 1)) continue;
        const Config high2 = gained & ~(Config(1) << a2);
        if (high2 <= high) continue;  // unordered block pairs once
        const double w = xy_(L + a2, L + b2);
        if (w == 0) continue;
        high_hops_.push_back({basis_->block_start(high), basis_->block_start(high2),
                              block_len_[p], -w});
      }
      // One low site empties into the gained high bit; the receiving block
      // has one fewer low spin.
      if (p == 0) continue;
      for (int a = 0; a < L; ++a) {
        const double w = xy_(a, L + b2);
        if (w == 0) continue;
        cross_hops_.push_back({basis_->block_start(high), basis_->block_start(gained),
                               static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(p),
                               -w});
      }
    }
  }
}

template <typename Scalar>
void SectorHamiltonian::apply_impl(const Scalar* x, Scalar* y, double addressed_coeff) const {
  const std::size_t dim = basis_->size();
  if (addressed_coeff != 0.0 && diag_addressed_.size() > 0) {
    for (std::size_t i = 0; i < dim; ++i)
      y[i] = (diag_static_[i] + addressed_coeff * diag_addressed_[i]) * x[i];
  } else {
    for (std::size_t i = 0; i < dim; ++i) y[i] = diag_static_[i] * x[i];
  }

  const int L = basis_->low_bits();
  for (int p = 0; p <= L; ++p) {
    const auto& hops = low_hops_[p];
    if (hops.empty()) continue;
    for (const std::size_t start : blocks_[p]) {
      for (const auto& h : hops) {
        y[start + h.dst] += h.w * x[start + h.src];
        y[start + h.src] += h.w * x[start + h.dst];
      }
    }
  }

  for (const auto& e : high_hops_) {
    for (std::uint32_t t = 0; t < e.len; ++t) {
      y[e.b + t] += e.w * x[e.a + t];
      y[e.a + t] += e.w * x[e.b + t];
    }
  }

  for (const auto& e : cross_hops_) {
    const auto& moves = pair_drop_[e.low_site][e.low_pop];
    for (const auto& m : moves) {
      y[e.b + m.second] += e.w * x[e.a + m.first];
      y[e.a + m.first] += e.w * x[e.b + m.second];
    }
  }
}

template <typename Scalar>
void SectorHamiltonian::apply_reference_impl(const Scalar* x, Scalar* y,
                                             double addressed_coeff) const {
  const std::size_t dim = basis_->size();
  const int n = basis_->n_spins();
  if (addressed_coeff != 0.0 && diag_addressed_.size() > 0) {
    for (std::size_t i = 0; i < dim; ++i)
      y[i] = (diag_static_[i] + addressed_coeff * diag_addressed_[i]) * x[i];
  } else {
    for (std::size_t i = 0; i < dim; ++i) y[i] = diag_static_[i] * x[i];
  }
  for (std::size_t idx = 0; idx < dim; ++idx) {
    const Config c = basis_->config(idx);
    for (int i = 0; i < n; ++i) {
      if (!((c >> i) & 1)) continue;
      for (int j = 0; j < n; ++j) {
        if ((c >> j) & 1) continue;
        const double w = xy_(i, j);
        if (w == 0) continue;
        const Config c2 = c ^ (Config(1) << i) ^ (Config(1) << j);
        y[basis_->rank(c2)] += -w * x[idx];
      }
    }
  }
}

void SectorHamiltonian::apply(const double* x, double* y, double addressed_coeff) const {
  apply_impl(x, y, addressed_coeff);
}
void SectorHamiltonian::apply(const std::complex<double>* x, std::complex<double>* y,
                              double addressed_coeff) const {
  apply_impl(x, y, addressed_coeff);
}

Eigen::VectorXd SectorHamiltonian::apply(const Eigen::VectorXd& x, double addressed_coeff) const {
  if (static_cast<std::size_t>(x.size()) != dim()) fail("apply: dimension mismatch");
  Eigen::VectorXd y(x.size());
  apply_impl(x.data(), y.data(), addressed_coeff);
  return y;
}
Eigen::VectorXcd SectorHamiltonian::apply(const Eigen::VectorXcd& x,
                                          double addressed_coeff) const {
  if (static_cast<std::size_t>(x.size()) != dim()) fail("apply: dimension mismatch");
  Eigen::VectorXcd y(x.size());
  apply_impl(x.data(), y.data(), addressed_coeff);
  return y;
}

void SectorHamiltonian::apply_reference(const double* x, double* y,
                                        double addressed_coeff) const {
  apply_reference_impl(x, y, addressed_coeff);
}
void SectorHamiltonian::apply_reference(const std::complex<double>* x, std::complex<double>* y,
                                        double addressed_coeff) const {
  apply_reference_impl(x, y, addressed_coeff);
}

Eigen::VectorXd SectorHamiltonian::diagonal(double addressed_coeff) const {
  if (addressed_coeff == 0.0 || diag_addressed_.size() == 0) return diag_static_;
  return diag_static_ + addressed_coeff * diag_addressed_;
}

double SectorHamiltonian::expect(const Eigen::VectorXd& x, double addressed_coeff) const {
  const Eigen::VectorXd y = apply(x, addressed_coeff);
  return linalg::det_dot(std::span<const double>(x.data(), x.size()),
                         std::span<const double>(y.data(), y.size()));
}
std::complex<double> SectorHamiltonian::expect(const Eigen::VectorXcd& x,
                                               double addressed_coeff) const {
  const Eigen::VectorXcd y = apply(x, addressed_coeff);
  return linalg::det_dot(std::span<const std::complex<double>>(x.data(), x.size()),
                         std::span<const std::complex<double>>(y.data(), y.size()));
}

SectorState product_state(std::shared_ptr<const SectorBasis> basis, Config c) {
  if (popcount(c) != basis->n_up() || (c >> basis->n_spins()) != 0)
    fail("product_state: configuration not in this sector");
  SectorState st;
  st.amps = Eigen::VectorXcd::Zero(basis->size());
  st.amps[basis->rank(c)] = 1.0;
  st.basis = std::move(basis);
  return st;
}

SectorState apply_hamiltonian(const lattice::CouplingMatrices& matrices,
                              const Eigen::VectorXd& light_shift, const SectorState& state) {
  const int n = state.basis->n_spins();
  if (light_shift.size() != n) fail("apply_hamiltonian: light_shift size mismatch");
  const SectorHamiltonian h(state.basis, matrices.xy, matrices.zz,
                            matrices.field_z + light_shift);
  SectorState out;
  out.basis = state.basis;
  out.amps = h.apply(state.amps);
  return out;
}

ProjectionResult project_out_site(const SectorState& state, int label, bool up) {
  const SectorBasis& b = *state.basis;
  const int n = b.n_spins();
  const int k = b.n_up();
  if (n < 2) fail("project_out_site: need at least two spins");
  if (label < 0 || label >= n) fail("project_out_site: label out of range");

  const int new_k = std::min(std::max(k - (up ? 1 : 0), 0), n - 1);
  auto nb = std::make_shared<SectorBasis>(n - 1, new_k);
  ProjectionResult out;
  out.state.amps = Eigen::VectorXcd::Zero(nb->size());
  const bool branch_possible = up ? (k >= 1) : (k <= n - 1);
  if (branch_possible) {
    const Config keep_low = (Config(1) << label) - 1;
    for (std::size_t idx = 0; idx < b.size(); ++idx) {
      const Config c = b.config(idx);
      if (static_cast<bool>((c >> label) & 1) != up) continue;
      const Config nc = (c & keep_low) | ((c >> (label + 1)) << label);
      out.state.amps[nb->rank(nc)] = state.amps[idx];
    }
  }
  out.probability = out.state.amps.squaredNorm();
  if (out.probability > 0) out.state.amps /= std::sqrt(out.probability);
  out.state.basis = std::move(nb);
  return out;
}

double FullState::norm2() const {
  double s = 0;
  for (const auto& v : sectors) s += v.squaredNorm();
  return s;
}

FullState css_y_state(int n_spins, bool staggered) {
  if (n_spins < 1 || n_spins > kMaxFullSpins) fail("css_y_state: n_spins out of range");
  FullState st;
  st.n_spins = n_spins;
  st.bases.resize(n_spins + 1);
  st.sectors.resize(n_spins + 1);
  for (int k = 0; k <= n_spins; ++k) {
    st.bases[k] = std::make_shared<SectorBasis>(n_spins, k);
    st.sectors[k] = Eigen::VectorXcd::Zero(st.bases[k]->size());
  }
  const double scale = std::pow(2.0, -0.5 * n_spins);
  for (Config c = 0; c < (Config(1) << n_spins); ++c) {
    std::complex<double> amp(scale, 0);
    for (int j = 0; j < n_spins; ++j) {
      if ((c >> j) & 1) continue;
      const double s = staggered && (j % 2 == 1) ? -1.0 : 1.0;
      amp *= std::complex<double>(0, s);
    }
    const int k = popcount(c);
    st.sectors[k][st.bases[k]->rank(c)] = amp;
  }
  return st;
}

FullState split_full_vector(const Eigen::VectorXcd& full, int n_spins) {
  if (n_spins < 1 || n_spins > kMaxFullSpins) fail("split_full_vector: n_spins out of range");
  if (full.size() != (std::int64_t(1) << n_spins)) fail("split_full_vector: size mismatch");
  FullState st;
  st.n_spins = n_spins;
  st.bases.resize(n_spins + 1);
  st.sectors.resize(n_spins + 1);
  for (int k = 0; k <= n_spins; ++k) {
    st.bases[k] = std::make_shared<SectorBasis>(n_spins, k);
    st.sectors[k] = Eigen::VectorXcd::Zero(st.bases[k]->size());
  }
  for (Config c = 0; c < (Config(1) << n_spins); ++c) {
    const int k = popcount(c);
    st.sectors[k][st.bases[k]->rank(c)] = full[c];
  }
  return st;
}

Eigen::VectorXcd to_full_vector(const SectorBasis& basis, const Eigen::VectorXcd& amps) {
  if (basis.n_spins() > kMaxFullSpins) fail("to_full_vector: n_spins out of range");
  if (static_cast<std::size_t>(amps.size()) != basis.size())
    fail("to_full_vector: size mismatch");
  Eigen::VectorXcd full = Eigen::VectorXcd::Zero(std::int64_t(1) << basis.n_spins());
  for (std::size_t idx = 0; idx < basis.size(); ++idx) full[basis.config(idx)] = amps[idx];
  return full;
}

void apply_single_qubit(Eigen::VectorXcd& psi, int n_spins, int site,
                        const Eigen::Matrix2cd& u) {
  if (psi.size() != (std::int64_t(1) << n_spins)) fail("apply_single_qubit: size mismatch");
  if (site < 0 || site >= n_spins) fail("apply_single_qubit: site out of range");
  const Config stride = Config(1) << site;
  for (Config c = 0; c < (Config(1) << n_spins); ++c) {
    if (c & stride) continue;
    const auto a0 = psi[c];
    const auto a1 = psi[c | stride];
    psi[c] = u(0, 0) * a0 + u(0, 1) * a1;
    psi[c | stride] = u(1, 0) * a0 + u(1, 1) * a1;
  }
}

namespace {

template <typename Vec>
Eigen::VectorXd observable_sz_impl(const SectorBasis& basis, const Vec& amps) {
  if (static_cast<std::size_t>(amps.size()) != basis.size()) fail("observable_sz: size mismatch");
  const int n = basis.n_spins();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (std::size_t idx = 0; idx < basis.size(); ++idx) {
    const double p = std::norm(amps[idx]);
    if (p == 0) continue;
    const Config c = basis.config(idx);
    for (int i = 0; i < n; ++i) out[i] += ((c >> i) & 1) ? p : -p;
  }
  return out;
}

template <typename Vec>
Eigen::MatrixXd observable_czz_impl(const SectorBasis& basis, const Vec& amps) {
  if (static_cast<std::size_t>(amps.size()) != basis.size())
    fail("observable_czz: size mismatch");
  const int n = basis.n_spins();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t idx = 0; idx < basis.size(); ++idx) {
    const double p = std::norm(amps[idx]);
    if (p == 0) continue;
    const Config c = basis.config(idx);
    for (int i = 0; i < n; ++i) {
      out(i, i) += p;
      for (int j = i + 1; j < n; ++j)
        out(i, j) += (((c >> i) ^ (c >> j)) & 1) ? -p : p;
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out(j, i) = out(i, j);
  return out;
}

template <typename Vec>
Eigen::MatrixXd observable_cxx_impl(const SectorBasis& basis, const Vec& amps) {
  if (static_cast<std::size_t>(amps.size()) != basis.size())
    fail("observable_cxx: size mismatch");
  const int n = basis.n_spins();
  const double nrm = [&] {
    double s = 0;
    for (std::size_t idx = 0; idx < basis.size(); ++idx) s += std::norm(amps[idx]);
    return s;
  }();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    out(i, i) = nrm;
    for (int j = i + 1; j < n; ++j) {
      const Config bi = Config(1) << i;
      const Config bj = Config(1) << j;
      double acc = 0;
      for (std::size_t idx = 0; idx < basis.size(); ++idx) {
        const Config c = basis.config(idx);
        if ((c & bi) || !(c & bj)) continue;  // need i down, j up
        const std::size_t dst = basis.rank(c ^ bi ^ bj);
        acc += 2.0 * std::real(std::conj(amps[dst]) * amps[idx]);
      }
      out(i, j) = out(j, i) = acc;
    }
  }
  return out;
}

}  // namespace

Eigen::VectorXd observable_sz(const SectorBasis& b, const Eigen::VectorXd& a) {
  return observable_sz_impl(b, a);
}
Eigen::VectorXd observable_sz(const SectorBasis& b, const Eigen::VectorXcd& a) {
  return observable_sz_impl(b, a);
}
Eigen::MatrixXd observable_czz(const SectorBasis& b, const Eigen::VectorXd& a) {
  return observable_czz_impl(b, a);
}
Eigen::MatrixXd observable_czz(const SectorBasis& b, const Eigen::VectorXcd& a) {
  return observable_czz_impl(b, a);
}
Eigen::MatrixXd observable_cxx(const SectorBasis& b, const Eigen::VectorXd& a) {
  return observable_cxx_impl(b, a);
}
Eigen::MatrixXd observable_cxx(const SectorBasis& b, const Eigen::VectorXcd& a) {
  return observable_cxx_impl(b, a);
}

Eigen::VectorXd observable_sz(const FullState& state) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(state.n_spins);
  for (std::size_t k = 0; k < state.sectors.size(); ++k)
    if (state.sectors[k].size() > 0) out += observable_sz(*state.bases[k], state.sectors[k]);
  return out;
}

Eigen::MatrixXd observable_czz(const FullState& state) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(state.n_spins, state.n_spins);
  for (std::size_t k = 0; k < state.sectors.size(); ++k)
    if (state.sectors[k].size() > 0) out += observable_czz(*state.bases[k], state.sectors[k]);
  return out;
}

}  // namespace tll::hilbert
