#pragma once

// Computational-basis enumeration for the torus: the full 2^n space, the
// gauge-invariant subspace (every star parity even) and its four winding
// sectors, plus a decoder-defined sector labelling for configurations that
// violate stars.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "toric/lattice.hpp"

namespace toric {

enum class SectorKind { full, gauge_invariant, winding, decoded_winding };

struct SectorId {
  SectorKind kind = SectorKind::full;
  int i = 0;
  int j = 0;

  static SectorId full() { return {SectorKind::full, 0, 0}; }
  static SectorId gauge() { return {SectorKind::gauge_invariant, 0, 0}; }
  static SectorId winding(int i, int j) { return {SectorKind::winding, i, j}; }
  static SectorId decoded(int i, int j) { return {SectorKind::decoded_winding, i, j}; }

  [[nodiscard]] std::string name() const;
  friend bool operator==(const SectorId&, const SectorId&) = default;
};

/// Parses "full", "gauge", "winding00" .. "winding11", "decoded00" .. "decoded11".
[[nodiscard]] SectorId parse_sector(const std::string& text);

struct BasisLimits {
  int max_full_sites = 26;  // full-space and decoded enumeration guard
};

class SectorBasis {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  /// `configs` must be sorted ascending and unique.
  SectorBasis(TorusLattice lattice, SectorId id, std::vector<Mask> configs);
  /// Full 2^n basis without storing the identity map.
  SectorBasis(TorusLattice lattice, std::size_t full_dimension);

  [[nodiscard]] const TorusLattice& lattice() const noexcept { return lattice_; }
  [[nodiscard]] SectorId id() const noexcept { return id_; }
  [[nodiscard]] std::size_t size() const noexcept { return size_; }
  [[nodiscard]] bool is_full() const noexcept { return id_.kind == SectorKind::full; }

  [[nodiscard]] Mask config(std::size_t m) const noexcept { return is_full() ? static_cast<Mask>(m) : configs_[m]; }
  [[nodiscard]] std::size_t index_of(Mask c) const noexcept;
  [[nodiscard]] bool contains(Mask c) const noexcept { return index_of(c) != npos; }

 private:
  TorusLattice lattice_;
  SectorId id_;
  std::size_t size_ = 0;
  std::vector<Mask> configs_;
  std::unordered_map<Mask, std::uint32_t> index_;
};

[[nodiscard]] SectorBasis enumerate_sector(const TorusLattice& lat, SectorId sector, const BasisLimits& limits = {});

/// Star-violation pattern: bit s set when star s has odd parity.
[[nodiscard]] Mask syndrome(const TorusLattice& lat, Mask config) noexcept;

/// Winding (i, j) for gauge-invariant configurations, SectorId::full() otherwise.
[[nodiscard]] SectorId classify(const TorusLattice& lat, Mask config) noexcept;

/// Assigns every configuration a winding label by first removing its star
/// violations with a fixed minimum-weight correction. Flipping any
/// incontractible loop shifts the label exactly, so the four labelled
/// sectors are images of each other under t1x^i t2x^j.
class SyndromeDecoder {
 public:
  explicit SyndromeDecoder(const TorusLattice& lat);

  [[nodiscard]] Mask correction(Mask star_syndrome) const;
  [[nodiscard]] SectorId decoded_winding(Mask config) const;

 private:
  TorusLattice lattice_;
  std::vector<Mask> corrections_;  // indexed by syndrome
  std::vector<bool> known_;
};

}  // namespace toric
