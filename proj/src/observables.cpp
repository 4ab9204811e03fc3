#include "toric/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>

#include "toric/solver.hpp"

namespace toric {

namespace {

/// Region bits of `config` packed into the low bits, ascending site order.
Mask pack(Mask config, const std::vector<int>& bits) {
  Mask a = 0;
  for (std::size_t t = 0; t < bits.size(); ++t) a |= ((config >> bits[t]) & 1u) << t;
  return a;
}

template <class T, class ConfigOf>
ReducedDensityMatrix<T> build_rdm(std::size_t dim, ConfigOf config, std::span<const T> psi, Mask region) {
  if (psi.size() != dim) throw std::invalid_argument("reduced_density_matrix: state does not match basis");
  const auto bits = sites_of(region);
  if (static_cast<int>(bits.size()) > kMaxRegionSites)
    throw std::length_error("reduced_density_matrix: region of " + std::to_string(bits.size()) +
                            " sites exceeds the limit of " + std::to_string(kMaxRegionSites));
  const std::size_t side = std::size_t{1} << bits.size();

  // Group nonzero amplitudes by their complement bits.
  struct Entry {
    Mask rest;
    std::uint32_t local;
    std::size_t index;
  };
  std::vector<Entry> entries;
  entries.reserve(dim);
  for (std::size_t m = 0; m < dim; ++m) {
    if (psi[m] == T{}) continue;
    const Mask c = config(m);
    entries.push_back({c & ~region, static_cast<std::uint32_t>(pack(c, bits)), m});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
    return x.rest != y.rest ? x.rest < y.rest : x.local < y.local;
  });

  ReducedDensityMatrix<T> out{region, Matrix<T>(side, side)};
  for (std::size_t lo = 0; lo < entries.size();) {
    std::size_t hi = lo;
    while (hi < entries.size() && entries[hi].rest == entries[lo].rest) ++hi;
    for (std::size_t i = lo; i < hi; ++i) {
      const T ai = psi[entries[i].index];
      for (std::size_t j = lo; j < hi; ++j)
        out.matrix(entries[i].local, entries[j].local) += ai * conj_of(psi[entries[j].index]);
    }
    lo = hi;
  }
  return out;
}

}  // namespace

template <class T>
ReducedDensityMatrix<T> reduced_density_matrix(const SectorBasis& basis, std::span<const T> psi, Mask region) {
  return build_rdm<T>(basis.size(), [&basis](std::size_t m) { return basis.config(m); }, psi, region);
}

template <class T>
ReducedDensityMatrix<T> reduced_density_matrix(std::span<const T> psi, Mask region) {
  return build_rdm<T>(psi.size(), [](std::size_t m) { return static_cast<Mask>(m); }, psi, region);
}

template <class T>
double von_neumann_entropy(const Matrix<T>& rho) {
  const auto eig = dense_symmetric_eig(rho, false);
  double s = 0.0;
  for (double l : eig.values)
    if (l > kEntropyCutoff) s -= l * std::log2(l);
  return std::max(0.0, s);
}

template <class T>
double region_entropy(const SectorBasis& basis, std::span<const T> psi, Mask region) {
  if (region == 0) return 0.0;
  return von_neumann_entropy(reduced_density_matrix<T>(basis, psi, region).matrix);
}

template <class T>
double region_entropy(std::span<const T> psi, Mask region) {
  if (region == 0) return 0.0;
  return von_neumann_entropy(reduced_density_matrix<T>(psi, region).matrix);
}

namespace {

template <class Entropy>
TopologicalEntropy combine_ring(const RingRegions& ring, Entropy entropy) {
  TopologicalEntropy s;
  s.s_a = entropy(ring.a.sites);
  s.s_ab = entropy(ring.ab.sites);
  s.s_ac = entropy(ring.ac.sites);
  s.s_abc = entropy(ring.abc.sites);
  s.raw = s.s_abc - s.s_ac - s.s_ab + s.s_a;
  s.value = -s.raw;
  return s;
}

}  // namespace

template <class T>
TopologicalEntropy topological_entropy(const SectorBasis& basis, std::span<const T> psi, const RingRegions& ring) {
  return combine_ring(ring, [&](Mask r) { return region_entropy<T>(basis, psi, r); });
}

template <class T>
TopologicalEntropy topological_entropy(std::span<const T> psi, const RingRegions& ring) {
  return combine_ring(ring, [&](Mask r) { return region_entropy<T>(psi, r); });
}

const RingCalibration& calibrate_ring(const TorusLattice& lat) {
  static std::mutex lock;
  static std::map<int, RingCalibration> cache;
  const std::scoped_lock guard(lock);
  if (auto it = cache.find(lat.k()); it != cache.end()) return it->second;

  const auto sector = enumerate_sector(lat, SectorId::winding(0, 0));
  const std::vector<double> psi(sector.size(), 1.0 / std::sqrt(static_cast<double>(sector.size())));
  RingCalibration cal;
  bool found = false;
  for (const auto& candidate : ring_candidates()) {
    const auto regions = ring_regions(lat, candidate);
    const double v = topological_entropy<double>(sector, psi, regions).value;
    cal.tried.emplace_back(candidate, v);
    if (std::abs(v - 1.0) < 1e-9) {
      cal.regions = regions;
      found = true;
      break;
    }
  }
  if (!found) throw std::runtime_error("calibrate_ring: no candidate partition gives S_top = 1 at k = " +
                                       std::to_string(lat.k()));
  return cache.emplace(lat.k(), std::move(cal)).first->second;
}

template <class T>
double state_fidelity(std::span<const T> a, std::span<const T> b) {
  return std::abs(dot<T>(a, b));
}

template <class T>
double state_fidelity(const SectorBasis& basis_a, std::span<const T> a, const SectorBasis& basis_b,
                      std::span<const T> b) {
  if (basis_a.lattice().k() != basis_b.lattice().k())
    throw std::invalid_argument("state_fidelity: states live on different lattices");
  if (a.size() != basis_a.size() || b.size() != basis_b.size())
    throw std::invalid_argument("state_fidelity: state does not match basis");
  const bool a_smaller = basis_a.size() <= basis_b.size();
  const SectorBasis& small = a_smaller ? basis_a : basis_b;
  const SectorBasis& large = a_smaller ? basis_b : basis_a;
  std::span<const T> vs = a_smaller ? a : b, vl = a_smaller ? b : a;
  T s{};
  for (std::size_t m = 0; m < small.size(); ++m) {
    const std::size_t j = large.index_of(small.config(m));
    if (j != SectorBasis::npos) s += conj_of(vs[m]) * vl[j];
  }
  return std::abs(s);
}

template <class T>
double subspace_fidelity(std::span<const T> psi, const std::vector<std::vector<T>>& subspace) {
  double s = 0.0;
  for (const auto& v : subspace) s += abs2(dot<T>(v, psi));
  return std::sqrt(s);
}

template <class T>
double wilson_expectation(const SectorBasis& basis, std::span<const T> psi, const FaceBlock& block) {
  if (psi.size() != basis.size()) throw std::invalid_argument("wilson_expectation: state does not match basis");
  T s{};
  for (std::size_t m = 0; m < basis.size(); ++m) {
    const std::size_t j = basis.index_of(basis.config(m) ^ block.x_mask);
    if (j != SectorBasis::npos) s += conj_of(psi[j]) * psi[m];
  }
  return real_of(s);
}

template <class T>
double magnetization_z(const SectorBasis& basis, std::span<const T> psi) {
  if (psi.size() != basis.size()) throw std::invalid_argument("magnetization_z: state does not match basis");
  const int n = basis.lattice().num_sites();
  double s = 0.0;
  for (std::size_t m = 0; m < basis.size(); ++m) s += abs2(psi[m]) * (n - 2 * popcount(basis.config(m)));
  return s / n;
}

std::vector<double> finite_difference(const std::vector<double>& f, double h, int order) {
  const std::size_t n = f.size();
  if (h <= 0.0) throw std::invalid_argument("finite_difference: step must be positive");
  std::vector<double> d(n);
  if (order == 1) {
    if (n < 3) throw std::invalid_argument("finite_difference: first derivative needs at least 3 points");
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
  } else if (order == 2) {
    if (n < 5) throw std::invalid_argument("finite_difference: second derivative needs at least 5 points");
    const double h2 = h * h;
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
    d[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
    d[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
  } else {
    throw std::invalid_argument("finite_difference: order must be 1 or 2");
  }
  return d;
}

Peak peak_analysis(const std::vector<double>& x, const std::vector<double>& f) {
  const std::size_t n = f.size();
  if (n != x.size() || n < 3) throw std::invalid_argument("peak_analysis: need matching grids of at least 3 points");
  const std::size_t i = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
  if (i == 0 || i == n - 1) throw NoPeakError("peak_analysis: maximum lies on the grid boundary");
  const double h = x[1] - x[0];

  Peak p;
  p.index = i;
  p.location = x[i];
  p.height = f[i];
  const double curv = f[i - 1] - 2.0 * f[i] + f[i + 1];
  if (curv < 0.0) {
    const double delta = 0.5 * (f[i - 1] - f[i + 1]) / curv;
    p.location = x[i] + delta * h;
    p.height = f[i] - 0.25 * (f[i - 1] - f[i + 1]) * delta;
  }

  const double half = 0.5 * p.height;
  double left = std::numeric_limits<double>::quiet_NaN(), right = left;
  for (std::size_t j = i; j > 0; --j)
    if (f[j - 1] <= half) {
      left = x[j - 1] + (half - f[j - 1]) / (f[j] - f[j - 1]) * h;
      break;
    }
  for (std::size_t j = i; j + 1 < n; ++j)
    if (f[j + 1] <= half) {
      right = x[j] + (f[j] - half) / (f[j] - f[j + 1]) * h;
      break;
    }
  p.fwhm = right - left;
  return p;
}

nlohmann::json to_json(const Peak& peak) {
  nlohmann::json j{{"location", peak.location}, {"height", peak.height}, {"index", peak.index}};
  j["fwhm"] = peak.has_fwhm() ? nlohmann::json(peak.fwhm) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json to_json(const TopologicalEntropy& s) {
  return {{"S_A", s.s_a}, {"S_AB", s.s_ab}, {"S_AC", s.s_ac}, {"S_ABC", s.s_abc}, {"raw", s.raw}, {"S_top", s.value}};
}

#define TORIC_OBSERVABLES(T)                                                                                       \
  template ReducedDensityMatrix<T> reduced_density_matrix<T>(const SectorBasis&, std::span<const T>, Mask);        \
  template ReducedDensityMatrix<T> reduced_density_matrix<T>(std::span<const T>, Mask);                            \
  template double region_entropy<T>(std::span<const T>, Mask);                                                     \
  template TopologicalEntropy topological_entropy<T>(std::span<const T>, const RingRegions&);                      \
  template double von_neumann_entropy<T>(const Matrix<T>&);                                                        \
  template double region_entropy<T>(const SectorBasis&, std::span<const T>, Mask);                                 \
  template TopologicalEntropy topological_entropy<T>(const SectorBasis&, std::span<const T>, const RingRegions&);  \
  template double state_fidelity<T>(std::span<const T>, std::span<const T>);                                      \
  template double state_fidelity<T>(const SectorBasis&, std::span<const T>, const SectorBasis&, std::span<const T>); \
  template double subspace_fidelity<T>(std::span<const T>, const std::vector<std::vector<T>>&);                    \
  template double wilson_expectation<T>(const SectorBasis&, std::span<const T>, const FaceBlock&);                 \
  template double magnetization_z<T>(const SectorBasis&, std::span<const T>);

TORIC_OBSERVABLES(double)
TORIC_OBSERVABLES(Complex)

#undef TORIC_OBSERVABLES

}  // namespace toric
