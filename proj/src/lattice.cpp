#include "toric/lattice.hpp"

#include <stdexcept>

namespace toric {

namespace {

int wrap(int x, int k) noexcept { return ((x % k) + k) % k; }

Mask bit(int site) noexcept { return Mask{1} << site; }

}  // namespace

std::vector<int> sites_of(Mask m) {
  std::vector<int> out;
  while (m) {
    out.push_back(std::countr_zero(m));
    m &= m - 1;
  }
  return out;
}

Mask mask_of(const std::vector<int>& sites) {
  Mask m = 0;
  for (int s : sites) {
    if (s < 0 || s >= 64) throw std::out_of_range("mask_of: site index out of range");
    m |= bit(s);
  }
  return m;
}

TorusLattice::TorusLattice(int k) : k_(k) {
  if (k < 2) throw std::invalid_argument("TorusLattice: invalid size k=" + std::to_string(k) + " (need k >= 2)");
  if (2 * k * k > 64) throw std::invalid_argument("TorusLattice: k=" + std::to_string(k) + " exceeds 64 spins");
  stars_.reserve(k * k);
  plaquettes_.reserve(k * k);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c < k; ++c) {
      stars_.push_back(bit(horizontal(r, c)) | bit(horizontal(r, c - 1)) | bit(vertical(r, c)) |
                       bit(vertical(r - 1, c)));
      plaquettes_.push_back(bit(horizontal(r, c)) | bit(horizontal(r + 1, c)) | bit(vertical(r, c)) |
                            bit(vertical(r, c + 1)));
    }
  }
}

Mask TorusLattice::all_sites() const noexcept {
  const int n = num_sites();
  return n == 64 ? ~Mask{0} : (Mask{1} << n) - 1;
}

int TorusLattice::site(int row, int col, Orientation o) const noexcept {
  return 2 * (wrap(row, k_) * k_ + wrap(col, k_)) + static_cast<int>(o);
}

EdgeCoord TorusLattice::coord(int site) const {
  if (site < 0 || site >= num_sites()) throw std::out_of_range("coord: site out of range");
  const int cell = site / 2;
  return {cell / k_, cell % k_, site % 2 == 0 ? Orientation::horizontal : Orientation::vertical};
}

int TorusLattice::face_index(int row, int col) const noexcept { return wrap(row, k_) * k_ + wrap(col, k_); }

PauliMask TorusLattice::star_mask(int vertex) const {
  if (vertex < 0 || vertex >= num_vertices()) throw std::out_of_range("star_mask: vertex index out of range");
  return {stars_[vertex], PauliAxis::z};
}

PauliMask TorusLattice::plaq_mask(int face) const {
  if (face < 0 || face >= num_faces()) throw std::out_of_range("plaq_mask: face index out of range");
  return {plaquettes_[face], PauliAxis::x};
}

PauliMask TorusLattice::loop_mask(LoopKind kind) const {
  Mask m = 0;
  switch (kind) {
    case LoopKind::t1x:  // horizontal edges of row 0
      for (int c = 0; c < k_; ++c) m |= bit(horizontal(0, c));
      return {m, PauliAxis::x};
    case LoopKind::t2x:  // vertical edges of column 0
      for (int r = 0; r < k_; ++r) m |= bit(vertical(r, 0));
      return {m, PauliAxis::x};
    case LoopKind::z_cut_1:  // horizontal edges of column 0, crosses t1x once
      for (int r = 0; r < k_; ++r) m |= bit(horizontal(r, 0));
      return {m, PauliAxis::z};
    case LoopKind::z_cut_2:  // vertical edges of row 0, crosses t2x once
      for (int c = 0; c < k_; ++c) m |= bit(vertical(0, c));
      return {m, PauliAxis::z};
  }
  throw std::invalid_argument("loop_mask: unknown kind");
}

TorusLattice build_lattice(int k) { return TorusLattice(k); }

std::string to_string(RegionLabel label) {
  switch (label) {
    case RegionLabel::A: return "A";
    case RegionLabel::B: return "B";
    case RegionLabel::C: return "C";
    case RegionLabel::AB: return "AB";
    case RegionLabel::AC: return "AC";
    case RegionLabel::ABC: return "ABC";
    case RegionLabel::plaquette_block: return "plaquette-block";
    case RegionLabel::wilson_block: return "wilson-block";
    case RegionLabel::custom: return "custom";
  }
  return "custom";
}

std::string RingPartition::describe() const {
  std::string s = shape == RingShape::face_centred ? "face-centred" : "edge-centred";
  s += split == RingSplit::half ? "/half" : "/quarters";
  s += "/rot" + std::to_string(rotation);
  return s;
}

std::vector<int> ring_sites(const TorusLattice& lat, RingShape shape) {
  if (lat.k() < 3) throw std::invalid_argument("ring_regions: region too small for k=" + std::to_string(lat.k()));
  if (shape == RingShape::face_centred) {
    // boundary of faces (0,0),(0,1),(1,0),(1,1), walked clockwise from the top-left corner
    return {lat.horizontal(0, 0), lat.horizontal(0, 1), lat.vertical(0, 2), lat.vertical(1, 2),
            lat.horizontal(2, 1), lat.horizontal(2, 0), lat.vertical(1, 0), lat.vertical(0, 0)};
  }
  // neighbours of edge h(1,1); consecutive entries share a vertex
  return {lat.horizontal(1, 0), lat.vertical(0, 1), lat.horizontal(0, 1), lat.vertical(0, 2),
          lat.horizontal(1, 2), lat.vertical(1, 2), lat.horizontal(2, 1), lat.vertical(1, 1)};
}

RingRegions ring_regions(const TorusLattice& lat, const RingPartition& partition) {
  if (partition.rotation < 0 || partition.rotation >= 8) throw std::invalid_argument("ring_regions: rotation must be 0..7");
  const auto ring = ring_sites(lat, partition.shape);
  auto at = [&](int i) { return bit(ring[(i + partition.rotation) % 8]); };
  Mask a = 0, b = 0, c = 0;
  if (partition.split == RingSplit::half) {
    a = at(0) | at(1) | at(2) | at(3);
    b = at(4) | at(5);
    c = at(6) | at(7);
  } else {
    a = at(0) | at(1) | at(4) | at(5);
    b = at(2) | at(3);
    c = at(6) | at(7);
  }
  if (popcount(a | b | c) != 8) throw std::logic_error("ring_regions: ring sites collide on the torus");
  RingRegions out;
  out.partition = partition;
  out.a = {a, RegionLabel::A, "A"};
  out.b = {b, RegionLabel::B, "B"};
  out.c = {c, RegionLabel::C, "C"};
  out.ab = {a | b, RegionLabel::AB, "AB"};
  out.ac = {a | c, RegionLabel::AC, "AC"};
  out.abc = {a | b | c, RegionLabel::ABC, "ABC"};
  return out;
}

std::vector<RingPartition> ring_candidates() {
  std::vector<RingPartition> out;
  for (auto shape : {RingShape::face_centred, RingShape::edge_centred})
    for (auto split : {RingSplit::half, RingSplit::quarters})
      for (int r = 0; r < 8; ++r) out.push_back({shape, split, r});
  return out;
}

Region plaquette_region(const TorusLattice& lat, int face) {
  return {lat.plaq_mask(face).sites, RegionLabel::plaquette_block, "plaquette-" + std::to_string(face)};
}

std::string FaceBlock::name() const { return std::to_string(width) + "x" + std::to_string(height); }

FaceBlock wilson_region(const TorusLattice& lat, int width, int height, int anchor) {
  const int k = lat.k();
  if (width < 1 || height < 1 || width > k || height > k)
    throw std::invalid_argument("wilson_region: block " + std::to_string(width) + "x" + std::to_string(height) +
                                " larger than lattice k=" + std::to_string(k));
  if (anchor < 0 || anchor >= lat.num_faces()) throw std::out_of_range("wilson_region: anchor face out of range");
  FaceBlock block;
  block.width = width;
  block.height = height;
  block.anchor = anchor;
  const int r0 = anchor / k, c0 = anchor % k;
  for (int dr = 0; dr < height; ++dr) {
    for (int dc = 0; dc < width; ++dc) {
      const int f = lat.face_index(r0 + dr, c0 + dc);
      block.faces.push_back(f);
      block.x_mask ^= lat.plaquettes()[f];
    }
  }
  return block;
}

VertexTorus::VertexTorus(int L) : L_(L) {
  if (L < 3) throw std::invalid_argument("VertexTorus: need L >= 3");
  if (L * L > 64) throw std::invalid_argument("VertexTorus: too many spins");
  for (int r = 0; r < L; ++r) {
    for (int c = 0; c < L; ++c) {
      bonds_.emplace_back(site(r, c), site(r, c + 1));
      bonds_.emplace_back(site(r, c), site(r + 1, c));
    }
  }
}

int VertexTorus::site(int row, int col) const noexcept { return wrap(row, L_) * L_ + wrap(col, L_); }

RingRegions VertexTorus::ring_regions() const {
  const std::vector<int> ring = {site(0, 0), site(0, 1), site(0, 2), site(1, 2),
                                 site(2, 2), site(2, 1), site(2, 0), site(1, 0)};
  RingRegions out;
  out.partition = {RingShape::face_centred, RingSplit::half, 0};
  const Mask a = bit(ring[0]) | bit(ring[1]) | bit(ring[2]) | bit(ring[3]);
  const Mask b = bit(ring[4]) | bit(ring[5]);
  const Mask c = bit(ring[6]) | bit(ring[7]);
  out.a = {a, RegionLabel::A, "A"};
  out.b = {b, RegionLabel::B, "B"};
  out.c = {c, RegionLabel::C, "C"};
  out.ab = {a | b, RegionLabel::AB, "AB"};
  out.ac = {a | c, RegionLabel::AC, "AC"};
  out.abc = {a | b | c, RegionLabel::ABC, "ABC"};
  return out;
}

Region VertexTorus::block_region() const {
  return {bit(site(0, 0)) | bit(site(0, 1)) | bit(site(1, 0)) | bit(site(1, 1)), RegionLabel::plaquette_block,
          "vertex-block-2x2"};
}

nlohmann::json to_json(const Region& region) {
  return {{"label", to_string(region.label)}, {"name", region.name}, {"sites", sites_of(region.sites)}};
}

nlohmann::json to_json(const RingRegions& rings) {
  return {{"partition", rings.partition.describe()}, {"A", sites_of(rings.a.sites)},   {"B", sites_of(rings.b.sites)},
          {"C", sites_of(rings.c.sites)},            {"ABC", sites_of(rings.abc.sites)}};
}

nlohmann::json to_json(const FaceBlock& block) {
  return {{"size", block.name()}, {"anchor", block.anchor}, {"faces", block.faces}, {"x_mask", sites_of(block.x_mask)}};
}

nlohmann::json lattice_to_json(const TorusLattice& lat) {
  nlohmann::json j;
  j["k"] = lat.k();
  j["n"] = lat.num_sites();
  for (Mask s : lat.stars()) j["stars"].push_back(sites_of(s));
  for (Mask p : lat.plaquettes()) j["plaquettes"].push_back(sites_of(p));
  j["loops"]["t1x"] = sites_of(lat.loop_mask(LoopKind::t1x).sites);
  j["loops"]["t2x"] = sites_of(lat.loop_mask(LoopKind::t2x).sites);
  j["loops"]["z_cut_1"] = sites_of(lat.loop_mask(LoopKind::z_cut_1).sites);
  j["loops"]["z_cut_2"] = sites_of(lat.loop_mask(LoopKind::z_cut_2).sites);
  if (lat.k() >= 3) {
    for (const auto& p : ring_candidates()) j["ring_candidates"].push_back(to_json(ring_regions(lat, p)));
  }
  return j;
}

}  // namespace toric
