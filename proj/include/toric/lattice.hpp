#pragma once

// k x k torus with spins on edges (standard toric-code layout).
//
// Indexing: vertex (r, c) and face (r, c) both map to r*k + c. Face (r, c) has
// vertex (r, c) as its top-left corner. Horizontal edge (r, c) joins vertices
// (r, c) and (r, c+1); vertical edge (r, c) joins (r, c) and (r+1, c). Site
// index of edge (r, c, o) is 2*(r*k + c) + o with o = 0 horizontal, 1 vertical.

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace toric {

using Mask = std::uint64_t;

[[nodiscard]] inline int popcount(Mask m) noexcept { return std::popcount(m); }
[[nodiscard]] inline int parity(Mask m) noexcept { return std::popcount(m) & 1; }
[[nodiscard]] std::vector<int> sites_of(Mask m);
[[nodiscard]] Mask mask_of(const std::vector<int>& sites);

enum class Orientation { horizontal = 0, vertical = 1 };
enum class PauliAxis { x, z };

struct PauliMask {
  Mask sites = 0;
  PauliAxis axis = PauliAxis::x;

  [[nodiscard]] int weight() const noexcept { return popcount(sites); }
};

enum class LoopKind { t1x, t2x, z_cut_1, z_cut_2 };

struct EdgeCoord {
  int row;
  int col;
  Orientation orientation;
};

class TorusLattice {
 public:
  /// Throws std::invalid_argument for k < 2 or k > 5 (n must fit a 64-bit mask).
  explicit TorusLattice(int k);

  [[nodiscard]] int k() const noexcept { return k_; }
  [[nodiscard]] int num_sites() const noexcept { return 2 * k_ * k_; }
  [[nodiscard]] int num_vertices() const noexcept { return k_ * k_; }
  [[nodiscard]] int num_faces() const noexcept { return k_ * k_; }
  [[nodiscard]] Mask all_sites() const noexcept;

  /// Row and column wrap periodically.
  [[nodiscard]] int site(int row, int col, Orientation o) const noexcept;
  [[nodiscard]] int horizontal(int row, int col) const noexcept { return site(row, col, Orientation::horizontal); }
  [[nodiscard]] int vertical(int row, int col) const noexcept { return site(row, col, Orientation::vertical); }
  [[nodiscard]] EdgeCoord coord(int site) const;
  [[nodiscard]] int face_index(int row, int col) const noexcept;

  [[nodiscard]] PauliMask star_mask(int vertex) const;
  [[nodiscard]] PauliMask plaq_mask(int face) const;
  [[nodiscard]] PauliMask loop_mask(LoopKind kind) const;

  [[nodiscard]] const std::vector<Mask>& stars() const noexcept { return stars_; }
  [[nodiscard]] const std::vector<Mask>& plaquettes() const noexcept { return plaquettes_; }

 private:
  int k_;
  std::vector<Mask> stars_;
  std::vector<Mask> plaquettes_;
};

[[nodiscard]] TorusLattice build_lattice(int k);

enum class RegionLabel { A, B, C, AB, AC, ABC, plaquette_block, wilson_block, custom };

[[nodiscard]] std::string to_string(RegionLabel label);

struct Region {
  Mask sites = 0;
  RegionLabel label = RegionLabel::custom;
  std::string name;

  [[nodiscard]] int size() const noexcept { return popcount(sites); }
};

/// The eight spins bordering a 2x2 block of faces, or the eight spins
/// surrounding one edge (two stars plus two plaquettes through it, minus the
/// edge itself). The second is the 3x3 vertex square of the rotated drawing.
enum class RingShape { face_centred, edge_centred };

/// half: A is four consecutive ring sites, B and C the next two pairs.
/// quarters: A is two opposite pairs, B and C the remaining two pairs.
enum class RingSplit { half, quarters };

struct RingPartition {
  RingShape shape = RingShape::face_centred;
  RingSplit split = RingSplit::half;
  int rotation = 0;  // starting offset along the ring, 0..7

  [[nodiscard]] std::string describe() const;
};

struct RingRegions {
  RingPartition partition;
  Region a, b, c, ab, ac, abc;
};

/// Ring sites in cyclic order. Requires k >= 3.
[[nodiscard]] std::vector<int> ring_sites(const TorusLattice& lat, RingShape shape);
[[nodiscard]] RingRegions ring_regions(const TorusLattice& lat, const RingPartition& partition);
/// All 32 candidate partitions in calibration order.
[[nodiscard]] std::vector<RingPartition> ring_candidates();

/// Four edges of one plaquette.
[[nodiscard]] Region plaquette_region(const TorusLattice& lat, int face);

struct FaceBlock {
  int width = 1;
  int height = 1;
  int anchor = 0;
  std::vector<int> faces;
  Mask x_mask = 0;  // XOR of member plaquette masks

  [[nodiscard]] int perimeter() const noexcept { return 2 * (width + height); }
  [[nodiscard]] std::string name() const;
};

/// w x h block of faces whose top-left face is `anchor`.
[[nodiscard]] FaceBlock wilson_region(const TorusLattice& lat, int width, int height, int anchor = 0);

/// L x L torus with spins on vertices; nearest-neighbour bonds, 2*L*L of them.
class VertexTorus {
 public:
  explicit VertexTorus(int L);

  [[nodiscard]] int side() const noexcept { return L_; }
  [[nodiscard]] int num_sites() const noexcept { return L_ * L_; }
  [[nodiscard]] int site(int row, int col) const noexcept;
  [[nodiscard]] const std::vector<std::pair<int, int>>& bonds() const noexcept { return bonds_; }

  /// The 3x3 vertex square minus its centre, split with the half layout.
  [[nodiscard]] RingRegions ring_regions() const;
  /// 2x2 block of vertices.
  [[nodiscard]] Region block_region() const;

 private:
  int L_;
  std::vector<std::pair<int, int>> bonds_;
};

[[nodiscard]] nlohmann::json to_json(const Region& region);
[[nodiscard]] nlohmann::json to_json(const RingRegions& rings);
[[nodiscard]] nlohmann::json to_json(const FaceBlock& block);
/// Stars, plaquettes, loops and ring candidates as site-index lists.
[[nodiscard]] nlohmann::json lattice_to_json(const TorusLattice& lat);

}  // namespace toric
