#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "toric/runner.hpp"

using namespace toric;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("toric_runner_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small_config(const fs::path& out, int k = 2, double step = 0.05) {
  ExperimentConfig c;
  c.k = k;
  c.grid.step = step;
  c.out_dir = out;
  return c;
}

bool same_value(double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; }

void check_rows_identical(const SweepRow& a, const SweepRow& b) {
  CHECK(a.tau == b.tau);
  CHECK(same_value(a.energy, b.energy));
  CHECK(same_value(a.d2_energy, b.d2_energy));
  CHECK(same_value(a.s_v, b.s_v));
  CHECK(same_value(a.ds_v, b.ds_v));
  CHECK(same_value(a.fidelity, b.fidelity));
  CHECK(same_value(a.overlap, b.overlap));
  CHECK(same_value(a.s_top, b.s_top));
  CHECK(same_value(a.ds_top, b.ds_top));
  CHECK(same_value(a.m_z, b.m_z));
  CHECK(same_value(a.gap, b.gap));
  REQUIRE(a.wilson.size() == b.wilson.size());
  for (std::size_t i = 0; i < a.wilson.size(); ++i) CHECK(same_value(a.wilson[i], b.wilson[i]));
}

}  // namespace

TEST_CASE("tau grid") {
  TauGrid g;
  const auto t = g.points();
  REQUIRE(t.size() == 101);
  CHECK(t.front() == 0.0);
  CHECK(t.back() == 1.0);
  CHECK(t[71] == doctest::Approx(0.71).epsilon(1e-15));
  CHECK((TauGrid{0.4, 1.0, 0.01}.points().size()) == 61);
  CHECK((TauGrid{0.0, 1.0, 1.0}.points().size()) == 2);
  CHECK_THROWS_AS((void)(TauGrid{0.0, 1.0, 0.0}).points(), std::invalid_argument);
  CHECK_THROWS_AS((void)(TauGrid{0.0, 1.0, 0.3}).points(), std::invalid_argument);
  CHECK_THROWS_AS((void)(TauGrid{0.5, 1.2, 0.1}).points(), std::invalid_argument);
}

TEST_CASE("config JSON round trip and guards") {
  ExperimentConfig c;
  c.kind = ExperimentKind::ensemble;
  c.k = 3;
  c.sector = SectorId::decoded(0, 0);
  c.grid = {0.4, 1.0, 0.02};
  c.observables = {Observable::energy, Observable::topological};
  c.P = 10;
  c.hz_mode = HzMode::uniform02;
  c.realizations = 7;
  c.T_list = {20, 60};
  c.seed = 99;
  const auto back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.sector == c.sector);
  CHECK(back.wants(Observable::topological));
  CHECK_FALSE(back.wants(Observable::gap));

  ExperimentConfig bad;
  bad.realizations = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = {};
  bad.grid.step = -0.1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  CHECK_THROWS_AS((void)parse_observable("entropy"), std::invalid_argument);
}

TEST_CASE("sector choice follows the field") {
  ExperimentConfig c;
  CHECK(c.sector_for(false) == SectorId::winding(0, 0));
  CHECK(c.sector_for(true) == SectorId::decoded(0, 0));
  c.sector = SectorId::winding(1, 0);
  CHECK(c.sector_for(true) == SectorId::decoded(1, 0));
  c.sector = SectorId::full();
  CHECK(c.sector_for(true) == SectorId::full());
}

TEST_CASE("k=3 endpoints only: S_top = {0, 1}") {
  TempDir dir("endpoints");
  auto c = small_config(dir.path, 3, 1.0);
  const auto r = run_sweep(c);
  REQUIRE(r.rows.size() == 2);
  CHECK(std::abs(r.rows[0].s_top) <= 1e-9);
  CHECK(std::abs(r.rows[1].s_top - 1.0) <= 1e-6);
  CHECK(std::abs(r.rows[1].s_v - 3.0) <= 1e-6);
  CHECK(std::isnan(r.rows[0].fidelity));
  CHECK(std::isnan(r.rows[0].d2_energy));  // too few points for a derivative
}

TEST_CASE("sweep rows satisfy the record invariants") {
  TempDir dir("invariants");
  const auto r = run_sweep(small_config(dir.path, 3, 0.05));
  REQUIRE(r.rows.size() == 21);
  CHECK(r.rows.front().status == "ok");
  for (const auto& row : r.rows) {
    CHECK(row.status == "ok");
    CHECK(row.s_v >= -1e-12);
    CHECK(row.s_top >= -1e-9);
    if (!std::isnan(row.fidelity)) {
      CHECK(row.fidelity >= 0.0);
      CHECK(row.fidelity <= 1.0 + 1e-12);
    }
    CHECK(row.overlap == 1.0);
    for (double w : row.wilson) CHECK(std::abs(w) <= 1.0 + 1e-12);
    CHECK(std::abs(row.m_z) <= 1.0 + 1e-12);
    CHECK(row.gap > 0.0);
  }
  // E/n at tau = 0 is -(U k^2 + xi n) / n
  CHECK(r.rows[0].energy == doctest::Approx(-(100.0 * 9 + 18) / 18.0).epsilon(1e-12));
  CHECK(r.wilson_names.size() == 3);
  CHECK(fs::exists(dir.path / (r.name + ".csv")));
  CHECK(fs::exists(dir.path / (r.name + ".json")));
  CHECK_FALSE(fs::exists(dir.path / (r.name + ".partial.csv")));
  CHECK_FALSE(fs::exists(dir.path / (r.name + ".state")));
}

TEST_CASE("metadata carries config, seeds and the complete marker") {
  TempDir dir("meta");
  const auto r = run_sweep(small_config(dir.path));
  std::ifstream in(dir.path / (r.name + ".json"));
  const auto meta = nlohmann::json::parse(in);
  CHECK(meta["complete"] == true);
  CHECK(meta["config"]["k"] == 2);
  CHECK(meta["config"]["tau_step"] == 0.05);
  CHECK(meta.contains("code_version"));
  CHECK(meta["field"].contains("seed"));
  CHECK(meta.contains("critical"));
  CHECK(meta["dimension"] == 8);
}

TEST_CASE("identical config gives byte-identical CSV; reruns hit the cache") {
  TempDir a("det_a"), b("det_b");
  const auto ra = run_sweep(small_config(a.path));
  const auto rb = run_sweep(small_config(b.path));
  CHECK(slurp(a.path / (ra.name + ".csv")) == slurp(b.path / (rb.name + ".csv")));
  const auto again = run_sweep(small_config(a.path));
  CHECK(again.from_cache);
  REQUIRE(again.rows.size() == ra.rows.size());
  for (std::size_t i = 0; i < ra.rows.size(); ++i) check_rows_identical(again.rows[i], ra.rows[i]);

  // a changed config is not a cache hit
  auto other = small_config(a.path);
  other.model.g = 1.5;
  CHECK_FALSE(run_sweep(other).from_cache);
}

TEST_CASE("an interrupted sweep resumes to the same bytes") {
  TempDir ref("resume_ref"), cut("resume_cut");
  const auto full = run_sweep(small_config(ref.path, 3, 0.05));
  auto c = small_config(cut.path, 3, 0.05);
  for (std::size_t stop : {5u, 3u, 9u}) {
    c.stop_after_rows = stop;
    const auto part = run_sweep(c);
    CHECK_FALSE(part.complete);
    CHECK(fs::exists(cut.path / (part.name + ".partial.csv")));
    CHECK(fs::exists(cut.path / (part.name + ".state")));
  }
  c.stop_after_rows = 0;
  const auto done = run_sweep(c);
  CHECK(done.complete);
  CHECK_FALSE(done.from_cache);
  CHECK(slurp(cut.path / (done.name + ".csv")) == slurp(ref.path / (full.name + ".csv")));
}

TEST_CASE("P = 0 ensemble equals the unperturbed sweep with zero spread") {
  TempDir dir("p0");
  auto c = small_config(dir.path, 3, 0.05);
  const auto sweep = run_sweep(c);
  c.kind = ExperimentKind::ensemble;
  c.realizations = 3;
  c.P = 0.0;
  const auto ens = run_ensemble(c);
  REQUIRE(ens.rows.size() == sweep.rows.size());
  for (std::size_t i = 0; i < ens.rows.size(); ++i) {
    check_rows_identical(ens.rows[i], sweep.rows[i]);
    const auto& d = ens.deviation[i];
    for (double v : {d.energy, d.s_v, d.s_top, d.overlap, d.m_z, d.gap}) CHECK(v == 0.0);
  }
  CHECK(ens.report.energy.has_value() == sweep.report.energy.has_value());
  if (ens.report.energy) CHECK(ens.report.energy->location == sweep.report.energy->location);
}

TEST_CASE("perturbed ensemble runs in the decoded sector") {
  TempDir dir("p1");
  auto c = small_config(dir.path, 2, 0.1);
  c.kind = ExperimentKind::ensemble;
  c.realizations = 3;
  c.P = 1.0;
  c.observables = {Observable::energy, Observable::fidelity, Observable::overlap, Observable::block_entropy};
  const auto ens = run_ensemble(c);
  CHECK(ens.dimension == 64);
  REQUIRE(ens.seeds.size() == 3);
  CHECK(ens.seeds[0] != ens.seeds[1]);
  bool spread = false;
  for (std::size_t i = 0; i < ens.rows.size(); ++i) {
    CHECK(ens.rows[i].overlap <= 1.0 + 1e-12);
    CHECK(ens.rows[i].overlap > 0.5);
    CHECK(std::isnan(ens.rows[i].gap));
    spread = spread || ens.deviation[i].energy > 0.0;
  }
  CHECK(spread);

  // worker count does not change the bytes
  TempDir par("p1_par");
  c.out_dir = par.path;
  c.workers = 3;
  const auto ens2 = run_ensemble(c);
  CHECK(slurp(par.path / (ens2.name + ".csv")) == slurp(dir.path / (ens.name + ".csv")));
}

TEST_CASE("dynamics campaign") {
  TempDir dir("dyn");
  auto c = small_config(dir.path, 2);
  c.kind = ExperimentKind::dynamics;
  c.T_list = {2.0, 6.0};
  const auto runs = run_dynamics(c);
  REQUIRE(runs.size() == 2);
  CHECK(runs[1].trace.rows.back().fidelity > runs[0].trace.rows.back().fidelity);
  CHECK(runs[0].trace.max_leakage() < 1e-12);
  CHECK(runs[0].trace.halving_change.has_value());
  const auto cached = run_dynamics(c);
  REQUIRE(cached[0].trace.rows.size() == runs[0].trace.rows.size());
  CHECK(cached[0].trace.rows.back().fidelity == runs[0].trace.rows.back().fidelity);

  c.P = 1.0;
  c.realizations = 1;
  c.T_list = {2.0};
  const auto pert = run_dynamics(c);
  REQUIRE(pert.size() == 2);
  CHECK(pert[1].realization == 0);
  CHECK(pert[1].max_ideal_deviation < 0.05);
  CHECK(pert[1].trace.max_leakage() < 0.1);

  c.k = 3;
  CHECK_THROWS_AS((void)run_dynamics(c), std::invalid_argument);
}

TEST_CASE("Ising control endpoints on a 3x3 torus") {
  TempDir dir("ising");
  ExperimentConfig c;
  c.kind = ExperimentKind::ising_control;
  c.ising_L = 3;
  c.grid.step = 0.1;
  c.out_dir = dir.path;
  const auto r = run_ising_control(c);
  REQUIRE(r.rows.size() == 11);
  CHECK(r.dimension == 256);
  // tau = 0: -h sum X with h = 1, product state; tau = 1: -J sum ZZ, 2 bonds per site
  CHECK(r.rows.front().energy == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(r.rows.back().energy == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(std::abs(r.rows.front().s_v) < 1e-9);
  CHECK(std::abs(r.rows.front().s_top) < 1e-9);
  // the even cat state carries one bit on any proper block
  CHECK(r.rows.back().s_v == doctest::Approx(1.0).epsilon(1e-9));
  for (const auto& row : r.rows) CHECK(std::isnan(row.m_z));
}

TEST_CASE("critical report flags disagreeing detectors") {
  std::vector<SweepRow> rows;
  for (int i = 0; i <= 40; ++i) {
    SweepRow r;
    r.tau = i * 0.025;
    auto bump = [&](double c) { return std::exp(-std::pow((r.tau - c) / 0.05, 2)); };
    r.d2_energy = -bump(0.5);
    r.fidelity = 1.0 - 0.1 * bump(0.5);
    r.ds_top = bump(0.6);
    r.ds_v = bump(0.5);
    rows.push_back(r);
  }
  const auto rep = critical_report(rows);
  REQUIRE(rep.energy);
  REQUIRE(rep.entropy);
  CHECK(rep.energy->location == doctest::Approx(0.5).epsilon(1e-3));
  CHECK(rep.spread == doctest::Approx(0.1).epsilon(0.02));
  CHECK(rep.disagree);
  for (auto& r : rows) r.ds_top = std::exp(-std::pow((r.tau - 0.51) / 0.05, 2));
  CHECK_FALSE(critical_report(rows).disagree);
}

TEST_CASE("validate passes on a fresh build") {
  TempDir dir("validate");
  for (const auto& check : validate(dir.path)) {
    INFO(check.name << ": " << check.detail);
    CHECK(check.passed);
  }
}
