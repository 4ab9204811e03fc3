#pragma once

// Matrix-free Hamiltonians.
//
//   H0(tau) = -U sum_s A_s - tau g sum_p B_p - (1 - tau) xi sum_j Z_j
//   H(tau)  = H0(tau) + sum_j (hx_j X_j + hz_j Z_j)
//
// |0> is the Z = +1 eigenstate, so a config bit set to 1 contributes -1 to
// sum_j Z_j and the all-zero configuration minimizes the tension term.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "toric/basis.hpp"
#include "toric/linalg.hpp"

namespace toric {

struct ModelParams {
  double U = 100.0;
  double g = 1.0;
  double xi = 1.0;
  double tau = 0.0;

  /// tau g / ((1 - tau) xi); +inf at tau = 1.
  [[nodiscard]] double lambda() const noexcept;
  /// Throws std::invalid_argument unless tau in [0,1] and U, g, xi > 0.
  void validate() const;
};

enum class HzMode { zero, uniform02 };

[[nodiscard]] std::string to_string(HzMode mode);
[[nodiscard]] HzMode parse_hz_mode(const std::string& text);

struct PerturbationField {
  std::vector<double> hx;
  std::vector<double> hz;
  double P = 0.0;
  HzMode hz_mode = HzMode::zero;
  std::uint64_t seed = 0;

  [[nodiscard]] bool has_x() const noexcept;
  [[nodiscard]] bool has_z() const noexcept;
  [[nodiscard]] bool empty() const noexcept { return !has_x() && !has_z(); }
};

/// hx_j uniform in [-P, P], hz_j uniform in [-0.2, 0.2] (or zero). Draws come
/// from std::mt19937_64 seeded with `seed`, 53-bit mantissa per draw, all hx
/// first then all hz, so a seed pins the field bit for bit.
[[nodiscard]] PerturbationField sample_field(int num_sites, double P, HzMode hz_mode, std::uint64_t seed);

/// Independent per-realization seed: first draw of std::mt19937_64 seeded
/// through std::seed_seq with the four 32-bit halves of (master, stream).
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

[[nodiscard]] nlohmann::json to_json(const ModelParams& params);
[[nodiscard]] nlohmann::json to_json(const PerturbationField& field);

/// H0 or the perturbed model on one basis. Transitions leaving the basis are
/// dropped, which restricts the operator to that subspace. The basis must
/// outlive the operator.
class ToricHamiltonian {
 public:
  ToricHamiltonian(const SectorBasis& basis, ModelParams params, PerturbationField field = {});

  void set_tau(double tau);
  [[nodiscard]] const ModelParams& params() const noexcept { return params_; }
  [[nodiscard]] const PerturbationField& field() const noexcept { return field_; }
  [[nodiscard]] const SectorBasis& basis() const noexcept { return basis_; }
  [[nodiscard]] std::size_t dimension() const noexcept { return basis_.size(); }

  template <class T>
  void apply(std::span<const T> in, std::span<T> out) const;

  /// Gershgorin enclosure of the spectrum.
  [[nodiscard]] std::pair<double, double> spectral_bounds() const;

 private:
  void rebuild_diagonal();

  const SectorBasis& basis_;
  ModelParams params_;
  PerturbationField field_;
  std::vector<Mask> plaquettes_;
  std::vector<double> star_energy_;  // -U sum_s (+-1)
  std::vector<double> z_sum_;        // sum_j Z_j
  std::vector<double> hz_energy_;    // sum_j hz_j Z_j
  std::vector<double> diagonal_;
  std::vector<std::uint32_t> plaq_neighbour_;  // sector bases only, size * k^2
  std::vector<std::uint32_t> site_neighbour_;  // non-full bases with hx, size * n
};

/// -J sum_<uv> Z_u Z_v - h sum_u X_u on the full 2^m space of a vertex torus.
class IsingHamiltonian {
 public:
  static constexpr int max_sites = 18;

  IsingHamiltonian(const VertexTorus& torus, double J, double h);

  /// J = tau, h = 1 - tau.
  void set_tau(double tau);
  void set_couplings(double J, double h);
  [[nodiscard]] std::size_t dimension() const noexcept { return zz_.size(); }
  [[nodiscard]] int num_sites() const noexcept { return num_sites_; }

  template <class T>
  void apply(std::span<const T> in, std::span<T> out) const;

 private:
  int num_sites_;
  double J_ = 0.0;
  double h_ = 0.0;
  std::vector<double> zz_;  // sum over bonds of Z_u Z_v per config
};

template <class T>
[[nodiscard]] std::vector<T> apply_h0(const ModelParams& params, const SectorBasis& basis, std::span<const T> psi);

template <class T>
[[nodiscard]] std::vector<T> apply_perturbed(const ModelParams& params, const PerturbationField& field,
                                             const SectorBasis& basis, std::span<const T> psi);

template <class T>
[[nodiscard]] std::vector<T> apply_ising(double J, double h, const VertexTorus& torus, std::span<const T> psi);

}  // namespace toric
