#pragma once

// Ground-state detectors: reduced density matrices and entropies (base 2),
// topological entropy on a calibrated ring, overlaps, Wilson loops,
// magnetization, and derivative / peak analysis of tau series.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "toric/basis.hpp"
#include "toric/lattice.hpp"
#include "toric/linalg.hpp"

namespace toric {

inline constexpr int kMaxRegionSites = 12;
inline constexpr double kEntropyCutoff = 1e-14;

template <class T>
struct ReducedDensityMatrix {
  Mask region = 0;
  Matrix<T> matrix;  // row index = region bits packed in ascending site order
};

/// rho[a, a'] = sum_b psi(a, b) conj(psi(a', b)), built by grouping basis
/// states on their complement bits. Cost O(dim * 2^m). Throws
/// std::length_error above kMaxRegionSites.
template <class T>
[[nodiscard]] ReducedDensityMatrix<T> reduced_density_matrix(const SectorBasis& basis, std::span<const T> psi,
                                                             Mask region);
/// Same for a vector over the full product basis, configuration = index.
template <class T>
[[nodiscard]] ReducedDensityMatrix<T> reduced_density_matrix(std::span<const T> psi, Mask region);

/// -sum lambda log2 lambda over eigenvalues above kEntropyCutoff.
template <class T>
[[nodiscard]] double von_neumann_entropy(const Matrix<T>& rho);

template <class T>
[[nodiscard]] double region_entropy(const SectorBasis& basis, std::span<const T> psi, Mask region);
template <class T>
[[nodiscard]] double region_entropy(std::span<const T> psi, Mask region);

/// The four ring entropies and their combination. `raw` is
/// S_ABC - S_AC - S_AB + S_A; `value` is its negation S_AB + S_AC - S_A - S_ABC,
/// the conditional mutual information I(B:C|A), which strong subadditivity
/// keeps non-negative and which is +1 on the toric code.
struct TopologicalEntropy {
  double s_a = 0.0, s_ab = 0.0, s_ac = 0.0, s_abc = 0.0;
  double raw = 0.0;
  double value = 0.0;
};

template <class T>
[[nodiscard]] TopologicalEntropy topological_entropy(const SectorBasis& basis, std::span<const T> psi,
                                                     const RingRegions& ring);
template <class T>
[[nodiscard]] TopologicalEntropy topological_entropy(std::span<const T> psi, const RingRegions& ring);

struct RingCalibration {
  RingRegions regions;
  std::vector<std::pair<RingPartition, double>> tried;  // candidate and its value
};

/// Evaluates candidates in ring_candidates() order on the exact tau = 1
/// ground state of winding(0,0) (uniform superposition of the sector) and
/// keeps the first whose S_top is 1 within 1e-9. Results are cached per k.
/// Throws std::runtime_error when no candidate qualifies.
[[nodiscard]] const RingCalibration& calibrate_ring(const TorusLattice& lat);

/// |<a|b>| for states on the same basis.
template <class T>
[[nodiscard]] double state_fidelity(std::span<const T> a, std::span<const T> b);

/// |<a|b>| with the two states embedded into their common configurations.
/// Throws std::invalid_argument when the lattices differ.
template <class T>
[[nodiscard]] double state_fidelity(const SectorBasis& basis_a, std::span<const T> a, const SectorBasis& basis_b,
                                    std::span<const T> b);

/// Norm of the projection of psi onto span(subspace); the states of
/// `subspace` must be orthonormal. Used when a ground level is degenerate.
template <class T>
[[nodiscard]] double subspace_fidelity(std::span<const T> psi, const std::vector<std::vector<T>>& subspace);

/// <psi| prod_{p in block} B_p |psi>, imaginary part dropped. Flipped
/// configurations outside the basis contribute zero.
template <class T>
[[nodiscard]] double wilson_expectation(const SectorBasis& basis, std::span<const T> psi, const FaceBlock& block);

/// (1/n) sum_j <Z_j>.
template <class T>
[[nodiscard]] double magnetization_z(const SectorBasis& basis, std::span<const T> psi);

/// Uniform-grid derivative. Interior points use central differences; edges
/// use second-order one-sided stencils. Order 1 needs 3 points, order 2
/// needs 5. Throws std::invalid_argument otherwise.
[[nodiscard]] std::vector<double> finite_difference(const std::vector<double>& values, double step, int order);

class NoPeakError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Peak {
  std::size_t index = 0;  // grid argmax
  double location = 0.0;  // parabola vertex through the three points at the argmax
  double height = 0.0;    // parabola vertex value
  double fwhm = 0.0;      // NaN when a half-height crossing lies outside the grid
  [[nodiscard]] bool has_fwhm() const noexcept { return fwhm == fwhm; }
};

/// Maximum of `values` on the grid `x` (uniform). Half-height crossings are
/// located by linear interpolation outward from the argmax. Throws
/// NoPeakError when the maximum sits on either end of the grid.
[[nodiscard]] Peak peak_analysis(const std::vector<double>& x, const std::vector<double>& values);

[[nodiscard]] nlohmann::json to_json(const Peak& peak);
[[nodiscard]] nlohmann::json to_json(const TopologicalEntropy& s);

}  // namespace toric
