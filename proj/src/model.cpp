#include "toric/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace toric {

namespace {

constexpr std::uint32_t kMissing = std::numeric_limits<std::uint32_t>::max();

double unit_draw(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

}  // namespace

double ModelParams::lambda() const noexcept {
  if (tau >= 1.0) return std::numeric_limits<double>::infinity();
  return tau * g / ((1.0 - tau) * xi);
}

void ModelParams::validate() const {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("ModelParams: tau must lie in [0,1]");
  if (!(U > 0.0 && g > 0.0 && xi > 0.0)) throw std::invalid_argument("ModelParams: U, g, xi must be positive");
}

std::string to_string(HzMode mode) { return mode == HzMode::zero ? "zero" : "uniform02"; }

HzMode parse_hz_mode(const std::string& text) {
  if (text == "zero") return HzMode::zero;
  if (text == "uniform02") return HzMode::uniform02;
  throw std::invalid_argument("unknown hz mode '" + text + "'");
}

bool PerturbationField::has_x() const noexcept {
  return std::any_of(hx.begin(), hx.end(), [](double v) { return v != 0.0; });
}

bool PerturbationField::has_z() const noexcept {
  return std::any_of(hz.begin(), hz.end(), [](double v) { return v != 0.0; });
}

PerturbationField sample_field(int num_sites, double P, HzMode hz_mode, std::uint64_t seed) {
  if (P < 0.0) throw std::invalid_argument("sample_field: P must be non-negative");
  PerturbationField f;
  f.P = P;
  f.hz_mode = hz_mode;
  f.seed = seed;
  f.hx.assign(num_sites, 0.0);
  f.hz.assign(num_sites, 0.0);
  std::mt19937_64 gen(seed);
  for (auto& h : f.hx) h = P * (2.0 * unit_draw(gen) - 1.0);
  if (hz_mode == HzMode::uniform02)
    for (auto& h : f.hz) h = 0.2 * (2.0 * unit_draw(gen) - 1.0);
  return f;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 gen(seq);
  return gen();
}

nlohmann::json to_json(const ModelParams& p) {
  nlohmann::json j{{"U", p.U}, {"g", p.g}, {"xi", p.xi}, {"tau", p.tau}};
  if (p.tau < 1.0) j["lambda"] = p.lambda();
  return j;
}

nlohmann::json to_json(const PerturbationField& f) {
  return {{"P", f.P}, {"hz_mode", to_string(f.hz_mode)}, {"seed", f.seed}, {"hx", f.hx}, {"hz", f.hz}};
}

ToricHamiltonian::ToricHamiltonian(const SectorBasis& basis, ModelParams params, PerturbationField field)
    : basis_(basis), params_(params), field_(std::move(field)) {
  params_.validate();
  const auto& lat = basis_.lattice();
  const int n = lat.num_sites();
  if (field_.hx.empty()) field_.hx.assign(n, 0.0);
  if (field_.hz.empty()) field_.hz.assign(n, 0.0);
  if (static_cast<int>(field_.hx.size()) != n || static_cast<int>(field_.hz.size()) != n)
    throw std::invalid_argument("ToricHamiltonian: field size does not match lattice");
  const SectorKind kind = basis_.id().kind;
  if (field_.has_x() && (kind == SectorKind::winding || kind == SectorKind::gauge_invariant))
    throw std::invalid_argument("ToricHamiltonian: x-field breaks the star constraint; use the full basis");

  plaquettes_ = lat.plaquettes();
  const std::size_t dim = basis_.size();
  star_energy_.resize(dim);
  z_sum_.resize(dim);
  hz_energy_.assign(dim, 0.0);
  const bool with_hz = field_.has_z();
  for (std::size_t m = 0; m < dim; ++m) {
    const Mask c = basis_.config(m);
    double stars = 0.0;
    for (Mask s : lat.stars()) stars += parity(c & s) ? -1.0 : 1.0;
    star_energy_[m] = -params_.U * stars;
    z_sum_[m] = static_cast<double>(n - 2 * popcount(c));
    if (with_hz) {
      double e = 0.0;
      for (int j = 0; j < n; ++j) e += field_.hz[j] * (((c >> j) & 1) ? -1.0 : 1.0);
      hz_energy_[m] = e;
    }
  }

  if (!basis_.is_full()) {
    const std::size_t np = plaquettes_.size();
    plaq_neighbour_.resize(dim * np);
    for (std::size_t m = 0; m < dim; ++m) {
      const Mask c = basis_.config(m);
      for (std::size_t p = 0; p < np; ++p) {
        const std::size_t t = basis_.index_of(c ^ plaquettes_[p]);
        plaq_neighbour_[m * np + p] = t == SectorBasis::npos ? kMissing : static_cast<std::uint32_t>(t);
      }
    }
    if (field_.has_x()) {
      site_neighbour_.resize(dim * n);
      for (std::size_t m = 0; m < dim; ++m) {
        const Mask c = basis_.config(m);
        for (int j = 0; j < n; ++j) {
          const std::size_t t = basis_.index_of(c ^ (Mask{1} << j));
          site_neighbour_[m * n + j] = t == SectorBasis::npos ? kMissing : static_cast<std::uint32_t>(t);
        }
      }
    }
  }
  rebuild_diagonal();
}

void ToricHamiltonian::set_tau(double tau) {
  ModelParams p = params_;
  p.tau = tau;
  p.validate();
  params_ = p;
  rebuild_diagonal();
}

void ToricHamiltonian::rebuild_diagonal() {
  const double tension = (1.0 - params_.tau) * params_.xi;
  diagonal_.resize(star_energy_.size());
  for (std::size_t m = 0; m < diagonal_.size(); ++m)
    diagonal_[m] = star_energy_[m] - tension * z_sum_[m] + hz_energy_[m];
}

template <class T>
void ToricHamiltonian::apply(std::span<const T> in, std::span<T> out) const {
  const std::size_t dim = basis_.size();
  if (in.size() != dim || out.size() != dim) throw std::invalid_argument("ToricHamiltonian::apply: size mismatch");
  const double hop = -params_.tau * params_.g;
  const std::size_t np = plaquettes_.size();
  const int n = basis_.lattice().num_sites();
  const bool with_x = field_.has_x();
  const double* hx = field_.hx.data();

  if (basis_.is_full()) {
    for (std::size_t c = 0; c < dim; ++c) {
      T acc = diagonal_[c] * in[c];
      T flips{};
      for (std::size_t p = 0; p < np; ++p) flips += in[c ^ plaquettes_[p]];
      acc += hop * flips;
      if (with_x)
        for (int j = 0; j < n; ++j) acc += hx[j] * in[c ^ (std::size_t{1} << j)];
      out[c] = acc;
    }
    return;
  }

  for (std::size_t m = 0; m < dim; ++m) {
    T acc = diagonal_[m] * in[m];
    T flips{};
    const std::uint32_t* nb = plaq_neighbour_.data() + m * np;
    for (std::size_t p = 0; p < np; ++p)
      if (nb[p] != kMissing) flips += in[nb[p]];
    acc += hop * flips;
    if (with_x) {
      const std::uint32_t* sn = site_neighbour_.data() + m * n;
      for (int j = 0; j < n; ++j)
        if (sn[j] != kMissing) acc += hx[j] * in[sn[j]];
    }
    out[m] = acc;
  }
}

std::pair<double, double> ToricHamiltonian::spectral_bounds() const {
  double off = static_cast<double>(plaquettes_.size()) * std::abs(params_.tau * params_.g);
  for (double h : field_.hx) off += std::abs(h);
  const auto [lo, hi] = std::minmax_element(diagonal_.begin(), diagonal_.end());
  return {*lo - off, *hi + off};
}

IsingHamiltonian::IsingHamiltonian(const VertexTorus& torus, double J, double h) : num_sites_(torus.num_sites()) {
  if (num_sites_ > max_sites)
    throw std::length_error("IsingHamiltonian: m=" + std::to_string(num_sites_) + " exceeds the full-space limit of " +
                            std::to_string(max_sites) + " spins");
  const std::size_t dim = std::size_t{1} << num_sites_;
  zz_.resize(dim);
  for (std::size_t c = 0; c < dim; ++c) {
    double s = 0.0;
    for (auto [u, v] : torus.bonds()) s += (((c >> u) ^ (c >> v)) & 1) ? -1.0 : 1.0;
    zz_[c] = s;
  }
  set_couplings(J, h);
}

void IsingHamiltonian::set_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("IsingHamiltonian: tau must lie in [0,1]");
  set_couplings(tau, 1.0 - tau);
}

void IsingHamiltonian::set_couplings(double J, double h) {
  J_ = J;
  h_ = h;
}

template <class T>
void IsingHamiltonian::apply(std::span<const T> in, std::span<T> out) const {
  const std::size_t dim = zz_.size();
  if (in.size() != dim || out.size() != dim) throw std::invalid_argument("IsingHamiltonian::apply: size mismatch");
  for (std::size_t c = 0; c < dim; ++c) {
    T flips{};
    for (int u = 0; u < num_sites_; ++u) flips += in[c ^ (std::size_t{1} << u)];
    out[c] = (-J_ * zz_[c]) * in[c] - h_ * flips;
  }
}

template <class T>
std::vector<T> apply_h0(const ModelParams& params, const SectorBasis& basis, std::span<const T> psi) {
  if (psi.size() != basis.size()) throw std::invalid_argument("apply_h0: basis/state size mismatch");
  ToricHamiltonian H(basis, params);
  std::vector<T> out(psi.size());
  H.apply<T>(psi, out);
  return out;
}

template <class T>
std::vector<T> apply_perturbed(const ModelParams& params, const PerturbationField& field, const SectorBasis& basis,
                               std::span<const T> psi) {
  if (psi.size() != basis.size()) throw std::invalid_argument("apply_perturbed: basis/state size mismatch");
  ToricHamiltonian H(basis, params, field);
  std::vector<T> out(psi.size());
  H.apply<T>(psi, out);
  return out;
}

template <class T>
std::vector<T> apply_ising(double J, double h, const VertexTorus& torus, std::span<const T> psi) {
  IsingHamiltonian H(torus, J, h);
  if (psi.size() != H.dimension()) throw std::invalid_argument("apply_ising: state size mismatch");
  std::vector<T> out(psi.size());
  H.apply<T>(psi, out);
  return out;
}

template void ToricHamiltonian::apply<double>(std::span<const double>, std::span<double>) const;
template void ToricHamiltonian::apply<Complex>(std::span<const Complex>, std::span<Complex>) const;
template void IsingHamiltonian::apply<double>(std::span<const double>, std::span<double>) const;
template void IsingHamiltonian::apply<Complex>(std::span<const Complex>, std::span<Complex>) const;
template std::vector<double> apply_h0(const ModelParams&, const SectorBasis&, std::span<const double>);
template std::vector<Complex> apply_h0(const ModelParams&, const SectorBasis&, std::span<const Complex>);
template std::vector<double> apply_perturbed(const ModelParams&, const PerturbationField&, const SectorBasis&,
                                             std::span<const double>);
template std::vector<Complex> apply_perturbed(const ModelParams&, const PerturbationField&, const SectorBasis&,
                                              std::span<const Complex>);
template std::vector<double> apply_ising(double, double, const VertexTorus&, std::span<const double>);
template std::vector<Complex> apply_ising(double, double, const VertexTorus&, std::span<const Complex>);

}  // namespace toric
