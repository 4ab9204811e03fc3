#include "toric/basis.hpp"

#include <algorithm>
#include <stdexcept>

namespace toric {

std::string SectorId::name() const {
  const std::string ij = std::to_string(i) + std::to_string(j);
  switch (kind) {
    case SectorKind::full: return "full";
    case SectorKind::gauge_invariant: return "gauge";
    case SectorKind::winding: return "winding" + ij;
    case SectorKind::decoded_winding: return "decoded" + ij;
  }
  return "full";
}

SectorId parse_sector(const std::string& text) {
  if (text == "full") return SectorId::full();
  if (text == "gauge") return SectorId::gauge();
  auto parse_ij = [&](const std::string& prefix) -> std::pair<int, int> {
    const std::string rest = text.substr(prefix.size());
    if (rest.size() != 2 || (rest[0] != '0' && rest[0] != '1') || (rest[1] != '0' && rest[1] != '1'))
      throw std::invalid_argument("unknown sector '" + text + "'");
    return {rest[0] - '0', rest[1] - '0'};
  };
  if (text.rfind("winding", 0) == 0) {
    auto [i, j] = parse_ij("winding");
    return SectorId::winding(i, j);
  }
  if (text.rfind("decoded", 0) == 0) {
    auto [i, j] = parse_ij("decoded");
    return SectorId::decoded(i, j);
  }
  throw std::invalid_argument("unknown sector '" + text + "'");
}

SectorBasis::SectorBasis(TorusLattice lattice, SectorId id, std::vector<Mask> configs)
    : lattice_(std::move(lattice)), id_(id), size_(configs.size()), configs_(std::move(configs)) {
  if (id_.kind == SectorKind::full) throw std::invalid_argument("SectorBasis: use the full-space constructor");
  index_.reserve(configs_.size());
  for (std::size_t m = 0; m < configs_.size(); ++m) {
    if (m > 0 && configs_[m] <= configs_[m - 1]) throw std::invalid_argument("SectorBasis: configs not sorted/unique");
    index_.emplace(configs_[m], static_cast<std::uint32_t>(m));
  }
}

SectorBasis::SectorBasis(TorusLattice lattice, std::size_t full_dimension)
    : lattice_(std::move(lattice)), id_(SectorId::full()), size_(full_dimension) {}

std::size_t SectorBasis::index_of(Mask c) const noexcept {
  if (is_full()) return c < size_ ? static_cast<std::size_t>(c) : npos;
  auto it = index_.find(c);
  return it == index_.end() ? npos : it->second;
}

Mask syndrome(const TorusLattice& lat, Mask config) noexcept {
  Mask s = 0;
  const auto& stars = lat.stars();
  for (std::size_t v = 0; v < stars.size(); ++v)
    if (parity(config & stars[v])) s |= Mask{1} << v;
  return s;
}

SectorId classify(const TorusLattice& lat, Mask config) noexcept {
  if (syndrome(lat, config) != 0) return SectorId::full();
  const int i = parity(config & lat.loop_mask(LoopKind::z_cut_1).sites);
  const int j = parity(config & lat.loop_mask(LoopKind::z_cut_2).sites);
  return SectorId::winding(i, j);
}

namespace {

std::vector<Mask> vacuum_orbit(const TorusLattice& lat) {
  // The last plaquette is the product of the others, so k^2 - 1 generators
  // give 2^(k^2 - 1) distinct configurations.
  std::vector<Mask> orbit{0};
  const auto& plaqs = lat.plaquettes();
  orbit.reserve(std::size_t{1} << (plaqs.size() - 1));
  for (std::size_t g = 0; g + 1 < plaqs.size(); ++g) {
    const std::size_t half = orbit.size();
    for (std::size_t m = 0; m < half; ++m) orbit.push_back(orbit[m] ^ plaqs[g]);
  }
  return orbit;
}

void check_full_guard(const TorusLattice& lat, const BasisLimits& limits, const char* what) {
  if (lat.num_sites() > limits.max_full_sites)
    throw std::length_error(std::string(what) + ": n=" + std::to_string(lat.num_sites()) +
                            " exceeds the full-space capacity limit of " + std::to_string(limits.max_full_sites) +
                            " spins");
}

}  // namespace

SectorBasis enumerate_sector(const TorusLattice& lat, SectorId sector, const BasisLimits& limits) {
  switch (sector.kind) {
    case SectorKind::full:
      check_full_guard(lat, limits, "enumerate_sector(full)");
      return SectorBasis(lat, std::size_t{1} << lat.num_sites());
    case SectorKind::winding:
    case SectorKind::gauge_invariant: {
      const Mask t1 = lat.loop_mask(LoopKind::t1x).sites;
      const Mask t2 = lat.loop_mask(LoopKind::t2x).sites;
      const auto orbit = vacuum_orbit(lat);
      std::vector<Mask> configs;
      auto add_sector = [&](int i, int j) {
        const Mask shift = (i ? t1 : 0) ^ (j ? t2 : 0);
        for (Mask c : orbit) configs.push_back(c ^ shift);
      };
      if (sector.kind == SectorKind::winding) {
        add_sector(sector.i, sector.j);
      } else {
        for (int i = 0; i < 2; ++i)
          for (int j = 0; j < 2; ++j) add_sector(i, j);
      }
      std::sort(configs.begin(), configs.end());
      return SectorBasis(lat, sector, std::move(configs));
    }
    case SectorKind::decoded_winding: {
      check_full_guard(lat, limits, "enumerate_sector(decoded)");
      const SyndromeDecoder decoder(lat);
      const Mask dim = Mask{1} << lat.num_sites();
      std::vector<Mask> configs;
      configs.reserve(dim / 4);
      const SectorId target = SectorId::decoded(sector.i, sector.j);
      for (Mask c = 0; c < dim; ++c)
        if (decoder.decoded_winding(c) == target) configs.push_back(c);
      return SectorBasis(lat, sector, std::move(configs));
    }
  }
  throw std::invalid_argument("enumerate_sector: unknown sector");
}

SyndromeDecoder::SyndromeDecoder(const TorusLattice& lat) : lattice_(lat) {
  const int nv = lat.num_vertices();
  if (nv > 25) throw std::length_error("SyndromeDecoder: too many stars");
  const std::size_t count = std::size_t{1} << nv;
  corrections_.assign(count, 0);
  known_.assign(count, false);
  std::vector<Mask> site_syndrome(lat.num_sites());
  for (int s = 0; s < lat.num_sites(); ++s) site_syndrome[s] = syndrome(lat, Mask{1} << s);

  // Breadth-first over single flips: the first correction reaching a
  // syndrome has minimum weight. Layers are processed in ascending syndrome
  // order and sites in ascending order, which fixes the tie-break.
  std::vector<Mask> layer{0};
  known_[0] = true;
  while (!layer.empty()) {
    std::sort(layer.begin(), layer.end());
    std::vector<Mask> next;
    for (Mask s : layer) {
      for (int site = 0; site < lat.num_sites(); ++site) {
        const Mask t = s ^ site_syndrome[site];
        if (known_[t]) continue;
        known_[t] = true;
        corrections_[t] = corrections_[s] ^ (Mask{1} << site);
        next.push_back(t);
      }
    }
    layer = std::move(next);
  }
}

Mask SyndromeDecoder::correction(Mask star_syndrome) const {
  if (star_syndrome >= corrections_.size() || !known_[star_syndrome])
    throw std::invalid_argument("SyndromeDecoder: unreachable syndrome");
  return corrections_[star_syndrome];
}

SectorId SyndromeDecoder::decoded_winding(Mask config) const {
  const Mask fixed = config ^ corrections_[syndrome(lattice_, config)];
  const SectorId w = classify(lattice_, fixed);
  return SectorId::decoded(w.i, w.j);
}

}  // namespace toric
