#include <cmath>

#include "doctest.h"
#include "oracle.hpp"
#include "toric/observables.hpp"
#include "toric/solver.hpp"

using namespace toric;

namespace {

std::vector<double> uniform_state(const SectorBasis& b) {
  return std::vector<double>(b.size(), 1.0 / std::sqrt(static_cast<double>(b.size())));
}

std::vector<double> vacuum(const SectorBasis& b) {
  std::vector<double> v(b.size(), 0.0);
  v[b.index_of(0)] = 1.0;
  return v;
}

std::vector<double> ground_state(const SectorBasis& b, double tau) {
  ModelParams p;
  p.tau = tau;
  const ToricHamiltonian H(b, p);
  LinearOperator<double> op = [&H](std::span<const double> in, std::span<double> out) { H.apply<double>(in, out); };
  return lanczos_lowest<double>(op, b.size()).states[0];
}

}  // namespace

TEST_CASE("reduced density matrix equals the brute-force partial trace") {
  const TorusLattice lat(2);
  const auto w = enumerate_sector(lat, SectorId::winding(0, 0));
  auto psi = oracle::random_complex(w.size(), 21);
  normalize<Complex>(psi);
  std::vector<Complex> full(256, Complex{});
  for (std::size_t m = 0; m < w.size(); ++m) full[w.config(m)] = psi[m];
  for (const std::vector<int>& region : {std::vector<int>{0, 3, 5}, {1, 2}, {0, 1, 2, 3, 4, 5, 6, 7}}) {
    const auto mine = reduced_density_matrix<Complex>(w, psi, mask_of(region));
    const auto ref = oracle::partial_trace(full, 8, region);
    double err = 0.0;
    for (std::size_t a = 0; a < ref.rows(); ++a)
      for (std::size_t b = 0; b < ref.cols(); ++b) err = std::max(err, std::abs(ref(a, b) - mine.matrix(a, b)));
    CHECK(err < 1e-10);
    CHECK(std::abs(mine.matrix.trace() - 1.0) < 1e-12);
    CHECK(hermiticity_error(mine.matrix) == 0.0);
    CHECK(dense_symmetric_eig(mine.matrix, false).values.front() > -1e-12);
  }
  // the full-product-basis overload agrees with the basis version
  const auto a = reduced_density_matrix<Complex>(std::span<const Complex>(full), mask_of({0, 3, 5}));
  const auto b = reduced_density_matrix<Complex>(w, psi, mask_of({0, 3, 5}));
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(a.matrix(i, j) - b.matrix(i, j)) < 1e-15);
  CHECK_THROWS_AS((void)reduced_density_matrix<double>(w, uniform_state(w), Mask{0x1FFF}), std::length_error);
}

TEST_CASE("entropy basics: product, maximally mixed spin, purity symmetry") {
  const TorusLattice lat2(2);
  const auto full2 = enumerate_sector(lat2, SectorId::full());
  CHECK(std::abs(region_entropy<double>(full2, vacuum(full2), 0b111)) < 1e-14);
  std::vector<double> bell(256, 0.0);
  bell[0] = bell[0b11] = 1.0 / std::sqrt(2.0);
  CHECK(region_entropy<double>(full2, bell, 0b1) == doctest::Approx(1.0).epsilon(1e-14));

  const TorusLattice lat(3);
  const auto full = enumerate_sector(lat, SectorId::full());
  auto psi = oracle::random_real(full.size(), 4);
  normalize<double>(psi);
  const auto w = enumerate_sector(lat, SectorId::winding(0, 0));
  const auto gs = ground_state(w, 0.7);
  for (Mask region : {Mask{0xFF}, Mask{0x2A5A5}, lat.plaq_mask(4).sites | lat.star_mask(0).sites}) {
    const Mask rest = lat.all_sites() & ~region;
    if (popcount(rest) > kMaxRegionSites) continue;
    CHECK(std::abs(region_entropy<double>(full, psi, region) - region_entropy<double>(full, psi, rest)) < 1e-10);
    CHECK(std::abs(region_entropy<double>(w, gs, region) - region_entropy<double>(w, gs, rest)) < 1e-10);
  }
}

TEST_CASE("plaquette block entropy at the endpoints") {
  const TorusLattice lat(4);
  const auto w = enumerate_sector(lat, SectorId::winding(0, 0));
  const Mask plaq = lat.plaq_mask(5).sites;
  CHECK(std::abs(region_entropy<double>(w, uniform_state(w), plaq) - 3.0) < 1e-6);
  CHECK(std::abs(region_entropy<double>(w, vacuum(w), plaq)) < 1e-12);
}

TEST_CASE("ring calibration and stabilizer oracle for the four ring entropies") {
  for (int k : {3, 4}) {
    const TorusLattice lat(k);
    const auto& cal = calibrate_ring(lat);
    const auto w = enumerate_sector(lat, SectorId::winding(0, 0));
    const auto top = topological_entropy<double>(w, uniform_state(w), cal.regions);
    CHECK(std::abs(top.value - 1.0) < 1e-9);
    CHECK(std::abs(top.raw + 1.0) < 1e-9);
    const auto gens = oracle::toric_code_stabilizers(lat);
    CHECK(oracle::gf2_rank(gens) == lat.num_sites());
    CHECK(std::abs(top.s_a - oracle::stabilizer_entropy(gens, lat.all_sites(), cal.regions.a.sites)) < 1e-9);
    CHECK(std::abs(top.s_ab - oracle::stabilizer_entropy(gens, lat.all_sites(), cal.regions.ab.sites)) < 1e-9);
    CHECK(std::abs(top.s_ac - oracle::stabilizer_entropy(gens, lat.all_sites(), cal.regions.ac.sites)) < 1e-9);
    CHECK(std::abs(top.s_abc - oracle::stabilizer_entropy(gens, lat.all_sites(), cal.regions.abc.sites)) < 1e-9);
    CHECK(std::abs(topological_entropy<double>(w, vacuum(w), cal.regions).value) < 1e-9);
    // every rejected candidate also matches the oracle
    for (const auto& [candidate, value] : cal.tried) {
      const auto r = ring_regions(lat, candidate);
      const Mask all = lat.all_sites();
      const double ref = oracle::stabilizer_entropy(gens, all, r.ab.sites) +
                         oracle::stabilizer_entropy(gens, all, r.ac.sites) -
                         oracle::stabilizer_entropy(gens, all, r.a.sites) -
                         oracle::stabilizer_entropy(gens, all, r.abc.sites);
      CHECK(std::abs(value - ref) < 1e-9);
    }
  }
  CHECK(calibrate_ring(TorusLattice(4)).regions.partition.shape == RingShape::face_centred);
  CHECK(calibrate_ring(TorusLattice(3)).regions.partition.shape == RingShape::edge_centred);
}

TEST_CASE("strong subadditivity keeps S_top non-negative along the sweep") {
  const TorusLattice lat(3);
  const auto w = enumerate_sector(lat, SectorId::winding(0, 0));
  const auto& ring = calibrate_ring(lat).regions;
  for (double tau : {0.2, 0.5, 0.7, 0.72, 0.8, 0.95}) {
    const auto s = topological_entropy<double>(w, ground_state(w, tau), ring);
    CHECK(s.value > -1e-10);
    CHECK(s.value < 1.0 + 1e-9);
  }
}

TEST_CASE("fidelities") {
  const TorusLattice lat(2);
  const auto w = enumerate_sector(lat, SectorId::winding(0, 0));
  const auto full = enumerate_sector(lat, SectorId::full());
  const auto gs = ground_state(w, 0.6);
  CHECK(state_fidelity<double>(gs, gs) == doctest::Approx(1.0).epsilon(1e-14));
  std::vector<double> e(w.size(), 0.0), other(w.size(), 0.0);
  e[0] = 1.0;
  other[1] = 1.0;
  CHECK(state_fidelity<double>(e, other) == 0.0);
  std::vector<double> emb(full.size(), 0.0);
  for (std::size_t m = 0; m < w.size(); ++m) emb[w.config(m)] = gs[m];
  CHECK(state_fidelity<double>(w, gs, full, emb) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(state_fidelity<double>(full, emb, w, gs) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS((void)state_fidelity<double>(w, gs, enumerate_sector(TorusLattice(3), SectorId::full()),
                                               std::vector<double>(1 << 18)),
                  std::invalid_argument);
  // a state inside a two-dimensional subspace has unit subspace fidelity
  std::vector<double> mix(w.size(), 0.0);
  mix[0] = 0.6;
  mix[1] = 0.8;
  CHECK(subspace_fidelity<double>(mix, {e, other}) == doctest::Approx(1.0));
  CHECK(subspace_fidelity<double>(mix, {e}) == doctest::Approx(0.6));
}

TEST_CASE("Wilson loop expectations") {
  const TorusLattice lat(4);
  const auto w = enumerate_sector(lat, SectorId::winding(0, 0));
  const auto tc = uniform_state(w), vac = vacuum(w);
  const std::vector<std::pair<int, int>> sizes = {{1, 1}, {2, 1}, {2, 2}, {3, 2}, {3, 3}};
  for (auto [a, b] : sizes) {
    const auto block = wilson_region(lat, a, b);
    CHECK(std::abs(wilson_expectation<double>(w, tc, block) - 1.0) < 1e-9);
    CHECK(wilson_expectation<double>(w, vac, block) == 0.0);
  }
  const auto whole = wilson_region(lat, 4, 4);
  CHECK(whole.x_mask == 0);
  auto rnd = oracle::random_real(w.size(), 8);
  normalize<double>(rnd);
  CHECK(wilson_expectation<double>(w, rnd, whole) == doctest::Approx(1.0).epsilon(1e-12));

  // polarized phase: nested blocks decay with perimeter
  const auto gs = ground_state(w, 0.3);
  double previous = 1.0;
  for (auto [a, b] : sizes) {
    const double v = wilson_expectation<double>(w, gs, wilson_region(lat, a, b));
    CHECK(v <= previous);
    CHECK(v >= 0.0);
    previous = v;
  }
}

TEST_CASE("magnetization") {
  const TorusLattice lat2(2);
  const auto full = enumerate_sector(lat2, SectorId::full());
  CHECK(magnetization_z<double>(full, vacuum(full)) == 1.0);
  std::vector<double> flipped(256, 0.0);
  flipped[255] = 1.0;
  CHECK(magnetization_z<double>(full, flipped) == -1.0);
  const TorusLattice lat(3);
  const auto w = enumerate_sector(lat, SectorId::winding(0, 0));
  CHECK(std::abs(magnetization_z<double>(w, uniform_state(w))) < 1e-9);
  CHECK(std::abs(magnetization_z<double>(w, ground_state(w, 1.0))) < 1e-9);
}

TEST_CASE("finite differences") {
  std::vector<double> sq, c(20, 3.5);
  const double h = 0.01;
  for (int i = 0; i <= 100; ++i) sq.push_back((h * i) * (h * i));
  for (double d : finite_difference(sq, h, 2)) CHECK(std::abs(d - 2.0) < 1e-9);
  const auto d1 = finite_difference(sq, h, 1);
  for (int i = 0; i <= 100; ++i) CHECK(std::abs(d1[i] - 2.0 * h * i) < 1e-9);
  for (double d : finite_difference(c, h, 1)) CHECK(d == 0.0);
  CHECK_THROWS_AS((void)finite_difference({1.0, 2.0}, h, 1), std::invalid_argument);
  CHECK_THROWS_AS((void)finite_difference({1.0, 2.0, 3.0, 4.0}, h, 2), std::invalid_argument);
  CHECK_THROWS_AS((void)finite_difference(sq, h, 3), std::invalid_argument);
}

TEST_CASE("peak analysis") {
  std::vector<double> x, gauss, tri, mono;
  const double sigma = 0.05;
  for (int i = 0; i <= 100; ++i) {
    const double t = 0.01 * i;
    x.push_back(t);
    gauss.push_back(std::exp(-0.5 * (t - 0.503) * (t - 0.503) / (sigma * sigma)));
    tri.push_back(std::max(0.0, 1.0 - std::abs(t - 0.4) / 0.1));
    mono.push_back(t);
  }
  const auto g = peak_analysis(x, gauss);
  CHECK(std::abs(g.fwhm - 2.3548 * sigma) < 0.02 * 2.3548 * sigma);
  CHECK(std::abs(g.location - 0.503) < 1e-3);
  const auto t = peak_analysis(x, tri);
  CHECK(t.location == doctest::Approx(0.4));
  CHECK(t.fwhm == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(t.height == doctest::Approx(1.0));
  CHECK_THROWS_AS((void)peak_analysis(x, mono), NoPeakError);
  // half-height never reached on the right
  std::vector<double> cut(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) cut[i] = x[i] < 0.8 ? x[i] : 0.8 - 0.1 * (x[i] - 0.8);
  CHECK_FALSE(peak_analysis(x, cut).has_fwhm());
}
