#include "toric/runner.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#ifndef TORIC_CODE_VERSION
#define TORIC_CODE_VERSION "unknown"
#endif

namespace toric {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// ---------------------------------------------------------------- enums

constexpr std::pair<ExperimentKind, const char*> kKindNames[] = {
    {ExperimentKind::sweep, "sweep"},
    {ExperimentKind::ensemble, "ensemble"},
    {ExperimentKind::dynamics, "dynamics"},
    {ExperimentKind::ising_control, "ising-control"},
    {ExperimentKind::validate, "validate"},
};

constexpr std::pair<Observable, const char*> kObservableNames[] = {
    {Observable::energy, "energy"},         {Observable::gap, "gap"},
    {Observable::block_entropy, "block_entropy"}, {Observable::fidelity, "fidelity"},
    {Observable::overlap, "overlap"},       {Observable::wilson, "wilson"},
    {Observable::topological, "topological"}, {Observable::magnetization, "magnetization"},
};

std::string format_number(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

std::string format_exact(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------- files

void write_atomic(const fs::path& path, const std::string& bytes, bool binary = false) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, binary ? std::ios::binary : std::ios::out);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << bytes;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::optional<json> read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  try {
    return json::parse(in);
  } catch (const json::exception&) {
    return std::nullopt;
  }
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw std::runtime_error("bad number '" + s + "'");
  return v;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

// Binary checkpoint: magic, rows done, dimension, has-state flag, state.
constexpr char kMagic[8] = {'T', 'R', 'C', 'K', 'P', 'T', '0', '1'};

struct Checkpoint {
  std::uint64_t rows = 0;
  std::vector<double> state;
};

void write_checkpoint(const fs::path& path, const Checkpoint& cp) {
  std::string bytes(kMagic, sizeof kMagic);
  auto put = [&bytes](const void* p, std::size_t n) { bytes.append(static_cast<const char*>(p), n); };
  const std::uint64_t dim = cp.state.size(), has = cp.state.empty() ? 0 : 1;
  put(&cp.rows, 8);
  put(&dim, 8);
  put(&has, 8);
  put(cp.state.data(), dim * sizeof(double));
  write_atomic(path, bytes, true);
}

std::optional<Checkpoint> read_checkpoint(const fs::path& path, std::size_t dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::uint64_t rows = 0, d = 0, has = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&rows), 8);
  in.read(reinterpret_cast<char*>(&d), 8);
  in.read(reinterpret_cast<char*>(&has), 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) return std::nullopt;
  Checkpoint cp;
  cp.rows = rows;
  if (has) {
    if (d != dim) return std::nullopt;
    cp.state.resize(d);
    in.read(reinterpret_cast<char*>(cp.state.data()), static_cast<std::streamsize>(d * sizeof(double)));
    if (!in) return std::nullopt;
  }
  return cp;
}

// ---------------------------------------------------------------- columns

std::vector<std::string> numeric_columns(const std::vector<std::string>& wilson_names) {
  std::vector<std::string> c = {"energy", "d2_energy", "s_v", "ds_v", "fidelity", "overlap"};
  for (const auto& w : wilson_names) c.push_back("W_" + w);
  for (const char* s : {"s_top", "ds_top", "m_z", "gap", "residual"}) c.emplace_back(s);
  return c;
}

double& column_ref(SweepRow& r, std::size_t c, std::size_t nw) {
  switch (c) {
    case 0: return r.energy;
    case 1: return r.d2_energy;
    case 2: return r.s_v;
    case 3: return r.ds_v;
    case 4: return r.fidelity;
    case 5: return r.overlap;
    default: break;
  }
  if (c < 6 + nw) return r.wilson[c - 6];
  switch (c - 6 - nw) {
    case 0: return r.s_top;
    case 1: return r.ds_top;
    case 2: return r.m_z;
    case 3: return r.gap;
    default: return r.residual;
  }
}

SweepRow nan_row(double tau, std::size_t nw) {
  SweepRow r;
  r.tau = tau;
  r.energy = r.d2_energy = r.s_v = r.ds_v = r.fidelity = r.overlap = kNaN;
  r.s_top = r.ds_top = r.m_z = r.gap = r.residual = kNaN;
  r.wilson.assign(nw, kNaN);
  return r;
}

std::string sweep_header(const std::vector<std::string>& wilson_names) {
  std::string h = "tau";
  for (const auto& c : numeric_columns(wilson_names)) h += "," + c;
  return h + ",iterations,status";
}

std::string sweep_line(const SweepRow& row, std::size_t nw) {
  SweepRow r = row;
  std::string line = format_exact(r.tau);
  const std::size_t nc = 6 + nw + 5;
  for (std::size_t c = 0; c < nc; ++c) line += "," + format_exact(column_ref(r, c, nw));
  return line + "," + std::to_string(r.iterations) + "," + sanitize(r.status);
}

std::optional<std::vector<SweepRow>> parse_sweep_csv(const fs::path& path, const std::vector<std::string>& wilson_names) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string line;
  if (!std::getline(in, line) || line != sweep_header(wilson_names)) return std::nullopt;
  const std::size_t nw = wilson_names.size(), nc = 6 + nw + 5;
  std::vector<SweepRow> rows;
  try {
    while (std::getline(in, line)) {
      const auto f = split(line, ',');
      if (f.size() != nc + 3) return std::nullopt;
      SweepRow r = nan_row(parse_double(f[0]), nw);
      for (std::size_t c = 0; c < nc; ++c) column_ref(r, c, nw) = parse_double(f[1 + c]);
      r.iterations = std::stoi(f[nc + 1]);
      r.status = f[nc + 2];
      rows.push_back(std::move(r));
    }
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return rows;
}

// ---------------------------------------------------------------- threads

// Runs fn(i) for i in [0, count) on up to `workers` threads. The first
// exception is rethrown after every thread has joined.
template <class F>
void parallel_for(std::size_t count, int workers, F&& fn) {
  const std::size_t nthreads = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < nthreads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------- derived

std::vector<double> derivative_or_nan(const std::vector<double>& v, double step, int order) {
  const std::size_t need = order == 1 ? 3 : 5;
  if (v.size() < need) return std::vector<double>(v.size(), kNaN);
  return finite_difference(v, step, order);
}

void fill_derivatives(std::vector<SweepRow>& rows, double step) {
  std::vector<double> e, sv, st;
  for (const auto& r : rows) {
    e.push_back(r.energy);
    sv.push_back(r.s_v);
    st.push_back(r.s_top);
  }
  const auto d2e = derivative_or_nan(e, step, 2), dsv = derivative_or_nan(sv, step, 1),
             dst = derivative_or_nan(st, step, 1);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].d2_energy = d2e[i];
    rows[i].ds_v = dsv[i];
    rows[i].ds_top = dst[i];
  }
}

// Peak of `values` after trimming NaN from either end; empty when NaN
// remains inside or no interior maximum exists.
std::optional<Peak> try_peak(const std::vector<double>& x, const std::vector<double>& values) {
  std::size_t lo = 0, hi = values.size();
  while (lo < hi && std::isnan(values[lo])) ++lo;
  while (hi > lo && std::isnan(values[hi - 1])) --hi;
  if (hi - lo < 3) return std::nullopt;
  std::vector<double> xs(x.begin() + lo, x.begin() + hi), vs(values.begin() + lo, values.begin() + hi);
  for (double v : vs)
    if (std::isnan(v)) return std::nullopt;
  try {
    return peak_analysis(xs, vs);
  } catch (const NoPeakError&) {
    return std::nullopt;
  }
}

json fingerprint(const ExperimentConfig& config) {
  json j = to_json(config);
  j.erase("out_dir");
  j.erase("workers");
  j.erase("stop_after_rows");
  return j;
}

json base_metadata(const ExperimentConfig& config) {
  json m;
  m["code_version"] = TORIC_CODE_VERSION;
  m["config"] = to_json(config);
  m["fingerprint"] = fingerprint(config);
  m["started"] = now_utc();
  m["complete"] = false;
  return m;
}

bool matches(const std::optional<json>& meta, const json& fp) {
  return meta && meta->contains("fingerprint") && (*meta)["fingerprint"] == fp;
}

std::string sector_tag(const SectorId& id) { return id.name(); }

std::string field_tag(const PerturbationField& field) {
  if (field.empty()) return "";
  return "_P" + format_number(field.P) + "_hz" + to_string(field.hz_mode) + "_s" + std::to_string(field.seed);
}

LinearOperator<double> real_op(const ToricHamiltonian& H) {
  return [&H](std::span<const double> in, std::span<double> out) { H.apply<double>(in, out); };
}

}  // namespace

// ---------------------------------------------------------------- enums / config

std::string to_string(ExperimentKind kind) {
  for (const auto& [k, s] : kKindNames)
    if (k == kind) return s;
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& text) {
  for (const auto& [k, s] : kKindNames)
    if (text == s) return k;
  if (text == "ising") return ExperimentKind::ising_control;
  throw std::invalid_argument("unknown experiment kind '" + text + "'");
}

std::string to_string(Observable o) {
  for (const auto& [k, s] : kObservableNames)
    if (k == o) return s;
  return "?";
}

Observable parse_observable(const std::string& text) {
  for (const auto& [k, s] : kObservableNames)
    if (text == s) return k;
  throw std::invalid_argument("unknown observable '" + text + "'");
}

std::vector<Observable> all_observables() {
  std::vector<Observable> out;
  for (const auto& [k, s] : kObservableNames) out.push_back(k);
  return out;
}

std::vector<double> TauGrid::points() const {
  if (!(step > 0.0)) throw std::invalid_argument("tau grid: step must be positive");
  if (!(start >= 0.0 && stop <= 1.0 && start <= stop)) throw std::invalid_argument("tau grid: need 0 <= start <= stop <= 1");
  const double intervals = (stop - start) / step;
  const long n = std::lround(intervals);
  if (std::abs(intervals - static_cast<double>(n)) > 1e-9 * std::max(1.0, intervals))
    throw std::invalid_argument("tau grid: (stop - start) must be a whole number of steps");
  std::vector<double> out;
  for (long i = 0; i <= n; ++i) out.push_back(i == n ? stop : start + static_cast<double>(i) * step);
  return out;
}

void ExperimentConfig::validate() const {
  (void)grid.points();
  if (k < 2 || k > 5) throw std::invalid_argument("config: k must lie in [2, 5]");
  if (realizations < 1) throw std::invalid_argument("config: realizations must be >= 1");
  if (P < 0.0) throw std::invalid_argument("config: P must be non-negative");
  if (workers < 1) throw std::invalid_argument("config: workers must be >= 1");
  if (dt < 0.0) throw std::invalid_argument("config: dt must be non-negative");
  for (double T : T_list)
    if (!(T > 0.0)) throw std::invalid_argument("config: every T must be positive");
  if (ising_L < 2 || ising_L * ising_L > IsingHamiltonian::max_sites)
    throw std::invalid_argument("config: ising_L out of range");
  model.validate();
}

bool ExperimentConfig::wants(Observable o) const {
  return std::find(observables.begin(), observables.end(), o) != observables.end();
}

SectorId ExperimentConfig::sector_for(bool has_x) const {
  if (sector) {
    if (has_x && sector->kind == SectorKind::winding) return SectorId::decoded(sector->i, sector->j);
    return *sector;
  }
  return has_x ? SectorId::decoded(0, 0) : SectorId::winding(0, 0);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["kind"] = to_string(c.kind);
  j["k"] = c.k;
  j["sector"] = c.sector ? c.sector->name() : "auto";
  j["tau_start"] = c.grid.start;
  j["tau_stop"] = c.grid.stop;
  j["tau_step"] = c.grid.step;
  json obs = json::array();
  for (auto o : c.observables) obs.push_back(to_string(o));
  j["observables"] = obs;
  j["model"] = to_json(c.model);
  j["P"] = c.P;
  j["hz"] = to_string(c.hz_mode);
  j["realizations"] = c.realizations;
  j["T"] = c.T_list;
  j["dt"] = c.dt;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir.string();
  j["workers"] = c.workers;
  j["ising_L"] = c.ising_L;
  j["stop_after_rows"] = c.stop_after_rows;
  j["lanczos"] = {{"tol", c.lanczos.tol}, {"max_krylov", c.lanczos.max_krylov}, {"keep", c.lanczos.keep},
                  {"max_restarts", c.lanczos.max_restarts}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  if (j.contains("kind")) c.kind = parse_experiment_kind(j["kind"].get<std::string>());
  c.k = j.value("k", c.k);
  if (j.contains("sector")) {
    const auto s = j["sector"].get<std::string>();
    if (s != "auto") c.sector = parse_sector(s);
  }
  c.grid.start = j.value("tau_start", c.grid.start);
  c.grid.stop = j.value("tau_stop", c.grid.stop);
  c.grid.step = j.value("tau_step", c.grid.step);
  if (j.contains("observables")) {
    c.observables.clear();
    for (const auto& o : j["observables"]) c.observables.push_back(parse_observable(o.get<std::string>()));
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    c.model.U = m.value("U", c.model.U);
    c.model.g = m.value("g", c.model.g);
    c.model.xi = m.value("xi", c.model.xi);
  }
  c.P = j.value("P", c.P);
  if (j.contains("hz")) c.hz_mode = parse_hz_mode(j["hz"].get<std::string>());
  c.realizations = j.value("realizations", c.realizations);
  if (j.contains("T")) c.T_list = j["T"].get<std::vector<double>>();
  c.dt = j.value("dt", c.dt);
  c.seed = j.value("seed", c.seed);
  if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  c.workers = j.value("workers", c.workers);
  c.ising_L = j.value("ising_L", c.ising_L);
  if (j.contains("lanczos")) {
    const auto& l = j["lanczos"];
    c.lanczos.tol = l.value("tol", c.lanczos.tol);
    c.lanczos.max_krylov = l.value("max_krylov", c.lanczos.max_krylov);
    c.lanczos.keep = l.value("keep", c.lanczos.keep);
    c.lanczos.max_restarts = l.value("max_restarts", c.lanczos.max_restarts);
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- results

std::vector<double> SweepResult::taus() const {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.tau);
  return out;
}

std::vector<double> SweepResult::column(double SweepRow::*member) const {
  std::vector<double> out;
  for (const auto& r : rows) out.push_back(r.*member);
  return out;
}

CriticalReport critical_report(const std::vector<SweepRow>& rows) {
  CriticalReport rep;
  std::vector<double> x, e, f, st, sv;
  for (const auto& r : rows) {
    x.push_back(r.tau);
    e.push_back(std::abs(r.d2_energy));
    f.push_back(1.0 - r.fidelity);
    st.push_back(r.ds_top);
    sv.push_back(std::abs(r.ds_v));
  }
  rep.energy = try_peak(x, e);
  rep.fidelity = try_peak(x, f);
  rep.entropy = try_peak(x, st);
  rep.block = try_peak(x, sv);
  std::vector<double> locs;
  for (const auto* p : {&rep.energy, &rep.fidelity, &rep.entropy})
    if (*p) locs.push_back((*p)->location);
  if (locs.size() >= 2) {
    const auto [lo, hi] = std::minmax_element(locs.begin(), locs.end());
    rep.spread = *hi - *lo;
  }
  rep.disagree = rep.spread > kDetectorTolerance;
  return rep;
}

json to_json(const CriticalReport& rep) {
  json j;
  auto put = [&j](const char* key, const std::optional<Peak>& p) { j[key] = p ? to_json(*p) : json(nullptr); };
  put("energy_second_derivative", rep.energy);
  put("fidelity_drop", rep.fidelity);
  put("topological_entropy_derivative", rep.entropy);
  put("block_entropy_derivative", rep.block);
  j["spread"] = rep.spread;
  j["disagree"] = rep.disagree;
  j["tolerance"] = kDetectorTolerance;
  return j;
}

std::vector<FaceBlock> wilson_blocks(const TorusLattice& lat) {
  std::vector<FaceBlock> out;
  for (auto [w, h] : {std::pair{1, 1}, {2, 1}, {2, 2}, {3, 2}, {3, 3}})
    if (w < lat.k() && h < lat.k()) out.push_back(wilson_region(lat, w, h, 0));
  return out;
}

void write_sweep_csv(std::ostream& out, const SweepResult& result) {
  const std::size_t nw = result.wilson_names.size();
  if (result.deviation.empty()) {
    out << sweep_header(result.wilson_names) << '\n';
    for (const auto& r : result.rows) out << sweep_line(r, nw) << '\n';
    return;
  }
  const auto cols = numeric_columns(result.wilson_names);
  out << "tau";
  for (const auto& c : cols) out << ',' << c << "_mean," << c << "_std";
  out << ",iterations,status\n";
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    SweepRow m = result.rows[i], s = result.deviation[i];
    out << format_exact(m.tau);
    for (std::size_t c = 0; c < cols.size(); ++c)
      out << ',' << format_exact(column_ref(m, c, nw)) << ',' << format_exact(column_ref(s, c, nw));
    out << ',' << m.iterations << ',' << sanitize(m.status) << '\n';
  }
}

namespace {

// ---------------------------------------------------------------- sweep engine

struct SweepSetup {
  TorusLattice lat;
  SectorBasis basis;
  std::optional<SectorBasis> ideal_basis;
  std::vector<FaceBlock> blocks;
  std::vector<std::string> wilson_names;
  std::optional<RingRegions> ring;
  Region plaquette;
};

SweepSetup make_setup(const ExperimentConfig& config, const PerturbationField& field) {
  const TorusLattice lat(config.k);
  const SectorId id = config.sector_for(field.has_x());
  SweepSetup s{lat, enumerate_sector(lat, id), std::nullopt, wilson_blocks(lat), {}, std::nullopt,
               plaquette_region(lat, 0)};
  if (!field.empty() && config.wants(Observable::overlap)) s.ideal_basis = enumerate_sector(lat, SectorId::winding(0, 0));
  for (const auto& b : s.blocks) s.wilson_names.push_back(b.name());
  if (config.k >= 3 && config.wants(Observable::topological)) s.ring = calibrate_ring(lat).regions;
  return s;
}

SweepRow evaluate_row(const ExperimentConfig& config, const SweepSetup& s, ToricHamiltonian& H,
                      std::optional<ToricHamiltonian>& ideal, double tau, std::vector<double>& state) {
  SweepRow row = nan_row(tau, s.blocks.size());
  H.set_tau(tau);
  LanczosOptions opt = config.lanczos;
  opt.count = config.wants(Observable::gap) ? 2 : 1;
  std::vector<std::vector<double>> seeds;
  if (!state.empty()) seeds.push_back(state);
  EigenResult<double> r;
  try {
    r = lanczos_lowest<double>(real_op(H), H.dimension(), seeds, opt);
  } catch (const ConvergenceError& e) {
    row.status = std::string("lanczos: ") + e.what();
    row.residual = e.best_residual();
    return row;
  }
  const auto& psi = r.states[0];
  const std::span<const double> view(psi);
  row.iterations = r.iterations;
  row.residual = r.residuals[0];
  row.energy = r.energies[0] / s.lat.num_sites();
  if (opt.count == 2) row.gap = r.gap();
  if (config.wants(Observable::fidelity) && !state.empty())
    row.fidelity = state_fidelity<double>(std::span<const double>(state), view);
  if (config.wants(Observable::overlap)) {
    if (!ideal) {
      row.overlap = 1.0;
    } else {
      ideal->set_tau(tau);
      LanczosOptions one = config.lanczos;
      one.count = 1;
      const auto g = lanczos_lowest<double>(real_op(*ideal), ideal->dimension(), {}, one);
      row.overlap = state_fidelity<double>(s.basis, view, *s.ideal_basis, std::span<const double>(g.states[0]));
    }
  }
  if (config.wants(Observable::block_entropy)) row.s_v = region_entropy<double>(s.basis, view, s.plaquette.sites);
  if (config.wants(Observable::wilson))
    for (std::size_t b = 0; b < s.blocks.size(); ++b) row.wilson[b] = wilson_expectation<double>(s.basis, view, s.blocks[b]);
  if (s.ring) row.s_top = topological_entropy<double>(s.basis, view, *s.ring).value;
  if (config.wants(Observable::magnetization)) row.m_z = magnetization_z<double>(s.basis, view);
  state = psi;
  return row;
}

json sweep_metadata(const ExperimentConfig& config, const PerturbationField& field, const SweepSetup& s,
                    const std::string& name) {
  json m = base_metadata(config);
  m["name"] = name;
  m["field"] = to_json(field);
  m["fingerprint"]["field_seed"] = field.seed;
  m["fingerprint"]["field_P"] = field.P;
  m["fingerprint"]["field_hz"] = to_string(field.hz_mode);
  m["fingerprint"]["field_empty"] = field.empty();
  m["sector"] = s.basis.id().name();
  m["dimension"] = s.basis.size();
  m["wilson_blocks"] = json::array();
  for (const auto& b : s.blocks) m["wilson_blocks"].push_back(to_json(b));
  m["plaquette_block"] = to_json(s.plaquette);
  if (s.ring) m["ring"] = to_json(*s.ring);
  m["columns"] = sweep_header(s.wilson_names);
  return m;
}

std::string default_sweep_name(const ExperimentConfig& config, const PerturbationField& field) {
  return "sweep_k" + std::to_string(config.k) + "_" + sector_tag(config.sector_for(field.has_x())) + field_tag(field);
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& config, const PerturbationField& field, const std::string& name_in) {
  config.validate();
  if (field.has_x() && config.k > 3)
    throw std::invalid_argument("run_sweep: x-field sweeps need k <= 3 (the star-violating space grows as 2^n)");
  const std::string name = name_in.empty() ? default_sweep_name(config, field) : name_in;
  const auto taus = config.grid.points();
  const SweepSetup s = make_setup(config, field);
  fs::create_directories(config.out_dir);
  const fs::path csv = config.out_dir / (name + ".csv"), meta_path = config.out_dir / (name + ".json"),
                 partial = config.out_dir / (name + ".partial.csv"), state_path = config.out_dir / (name + ".state");

  SweepResult result;
  result.name = name;
  result.wilson_names = s.wilson_names;
  result.dimension = s.basis.size();
  result.seeds = {field.seed};

  json meta = sweep_metadata(config, field, s, name);
  const auto old = read_json(meta_path);
  std::vector<double> state;
  if (matches(old, meta["fingerprint"])) {
    if (old->value("complete", false)) {
      if (auto rows = parse_sweep_csv(csv, s.wilson_names); rows && rows->size() == taus.size()) {
        result.rows = std::move(*rows);
        result.report = critical_report(result.rows);
        result.from_cache = true;
        return result;
      }
    } else if (auto cp = read_checkpoint(state_path, s.basis.size())) {
      if (auto rows = parse_sweep_csv(partial, s.wilson_names); rows && rows->size() >= cp->rows) {
        rows->resize(cp->rows);
        result.rows = std::move(*rows);
        state = std::move(cp->state);
        meta["started"] = old->value("started", meta["started"].get<std::string>());
        meta["resumed"] = now_utc();
      }
    }
  }
  // Rewrite the partial file so it holds exactly the rows the checkpoint covers.
  {
    std::string bytes = sweep_header(s.wilson_names) + "\n";
    for (const auto& r : result.rows) bytes += sweep_line(r, s.wilson_names.size()) + "\n";
    write_atomic(partial, bytes);
    write_checkpoint(state_path, {result.rows.size(), state});
    write_atomic(meta_path, meta.dump(2) + "\n");
  }

  ToricHamiltonian H(s.basis, config.model, field);
  std::optional<ToricHamiltonian> ideal;
  if (s.ideal_basis) ideal.emplace(*s.ideal_basis, config.model);
  std::ofstream append(partial, std::ios::app);
  std::size_t computed = 0;
  for (std::size_t i = result.rows.size(); i < taus.size(); ++i) {
    if (config.stop_after_rows && computed++ == config.stop_after_rows) {
      result.complete = false;
      return result;
    }
    SweepRow row = evaluate_row(config, s, H, ideal, taus[i], state);
    append << sweep_line(row, s.wilson_names.size()) << '\n';
    append.flush();
    result.rows.push_back(std::move(row));
    write_checkpoint(state_path, {result.rows.size(), state});
  }
  append.close();

  fill_derivatives(result.rows, config.grid.step);
  result.report = critical_report(result.rows);
  std::ostringstream out;
  write_sweep_csv(out, result);
  write_atomic(csv, out.str());
  meta["complete"] = true;
  meta["finished"] = now_utc();
  meta["critical"] = to_json(result.report);
  int failures = 0;
  for (const auto& r : result.rows) failures += r.status != "ok";
  meta["failed_rows"] = failures;
  write_atomic(meta_path, meta.dump(2) + "\n");
  fs::remove(partial);
  fs::remove(state_path);
  return result;
}

SweepResult run_ensemble(const ExperimentConfig& config) {
  config.validate();
  const int n = 2 * config.k * config.k;
  const std::string base = "ensemble_k" + std::to_string(config.k) + "_P" + format_number(config.P) + "_hz" +
                           to_string(config.hz_mode) + "_R" + std::to_string(config.realizations) + "_seed" +
                           std::to_string(config.seed);
  const auto R = static_cast<std::size_t>(config.realizations);
  std::vector<std::uint64_t> seeds(R);
  for (std::size_t r = 0; r < R; ++r) seeds[r] = derive_seed(config.seed, r);
  // all-zero fields must take the unperturbed path, so P = 0 reproduces the sweep
  std::vector<PerturbationField> fields(R);
  for (std::size_t r = 0; r < R; ++r) fields[r] = sample_field(n, config.P, config.hz_mode, seeds[r]);

  ExperimentConfig child = config;
  child.kind = ExperimentKind::sweep;
  child.workers = 1;
  std::vector<SweepResult> runs(R);
  parallel_for(R, config.workers, [&](std::size_t r) {
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_r%03zu", r);
    runs[r] = run_sweep(child, fields[r], base + suffix);
  });

  SweepResult out;
  out.name = base;
  out.wilson_names = runs[0].wilson_names;
  out.dimension = runs[0].dimension;
  out.seeds = seeds;
  out.from_cache = std::all_of(runs.begin(), runs.end(), [](const auto& x) { return x.from_cache; });
  const std::size_t rows = runs[0].rows.size(), nw = out.wilson_names.size(), nc = 6 + nw + 5;
  for (std::size_t i = 0; i < rows; ++i) {
    SweepRow mean = nan_row(runs[0].rows[i].tau, nw), dev = nan_row(runs[0].rows[i].tau, nw);
    int failures = 0, iterations = 0;
    for (const auto& run : runs) {
      failures += run.rows[i].status != "ok";
      iterations += run.rows[i].iterations;
    }
    for (std::size_t c = 0; c < nc; ++c) {
      // Welford; NaN entries (failed rows, undefined values) are skipped
      double m = 0.0, m2 = 0.0;
      int count = 0;
      for (auto& run : runs) {
        const double x = column_ref(run.rows[i], c, nw);
        if (std::isnan(x)) continue;
        ++count;
        const double d = x - m;
        m += d / count;
        m2 += d * (x - m);
      }
      column_ref(mean, c, nw) = count ? m : kNaN;
      column_ref(dev, c, nw) = count ? (count > 1 ? std::sqrt(m2 / (count - 1)) : 0.0) : kNaN;
    }
    mean.iterations = iterations;
    mean.status = failures ? "failed:" + std::to_string(failures) : "ok";
    out.rows.push_back(std::move(mean));
    out.deviation.push_back(std::move(dev));
  }
  // derivative columns of the mean rows are derivatives of the mean series
  fill_derivatives(out.rows, config.grid.step);
  out.report = critical_report(out.rows);

  std::ostringstream csv;
  write_sweep_csv(csv, out);
  write_atomic(config.out_dir / (base + ".csv"), csv.str());
  json meta = base_metadata(config);
  meta["name"] = base;
  meta["realizations"] = json::array();
  for (std::size_t r = 0; r < R; ++r) meta["realizations"].push_back({{"index", r}, {"seed", seeds[r]}, {"run", runs[r].name}});
  meta["dimension"] = out.dimension;
  meta["critical"] = to_json(out.report);
  meta["complete"] = true;
  meta["finished"] = now_utc();
  write_atomic(config.out_dir / (base + ".json"), meta.dump(2) + "\n");
  return out;
}

// ---------------------------------------------------------------- dynamics

namespace {

std::optional<EvolutionTrace> load_trace(const fs::path& csv, const json& meta) {
  std::ifstream in(csv);
  std::string line;
  if (!in || !std::getline(in, line) || line != "tau,F_ad,leak_01,leak_10,leak_11,norm_drift,energy") return std::nullopt;
  EvolutionTrace t;
  try {
    while (std::getline(in, line)) {
      const auto f = split(line, ',');
      if (f.size() != 7) return std::nullopt;
      EvolutionRow r;
      r.tau = parse_double(f[0]);
      r.fidelity = parse_double(f[1]);
      for (int l = 0; l < 3; ++l) r.leakage[l] = parse_double(f[2 + l]);
      r.norm_drift = parse_double(f[5]);
      r.energy = parse_double(f[6]);
      t.rows.push_back(r);
    }
    const auto& tr = meta.at("trace");
    t.T = tr.at("T");
    t.dt = tr.at("dt");
    t.steps = tr.at("steps");
    t.norm_drift = tr.at("norm_drift");
    t.renormalizations = tr.at("renormalizations");
    if (!tr.at("halving_change").is_null()) t.halving_change = tr.at("halving_change").get<double>();
    if (!tr.at("halving_fidelity").is_null()) t.halving_fidelity = tr.at("halving_fidelity").get<double>();
  } catch (const std::exception&) {
    return std::nullopt;
  }
  return t;
}

json trace_json(const EvolutionTrace& t) {
  json j;
  j["T"] = t.T;
  j["dt"] = t.dt;
  j["steps"] = t.steps;
  j["norm_drift"] = t.norm_drift;
  j["renormalizations"] = t.renormalizations;
  j["max_leakage"] = t.max_leakage();
  j["halving_change"] = t.halving_change ? json(*t.halving_change) : json(nullptr);
  j["halving_fidelity"] = t.halving_fidelity ? json(*t.halving_fidelity) : json(nullptr);
  return j;
}

// Cached evolve(); the cache key is the config fingerprint plus T and field.
EvolutionTrace cached_evolve(const ExperimentConfig& config, const std::string& name, const SectorBasis& basis,
                             const SectorBasis& reference, const PerturbationField& field, double T) {
  const fs::path csv = config.out_dir / (name + ".csv"), meta_path = config.out_dir / (name + ".json");
  json meta = base_metadata(config);
  meta["name"] = name;
  meta["fingerprint"]["run_T"] = T;
  meta["fingerprint"]["field_seed"] = field.seed;
  meta["fingerprint"]["field_empty"] = field.empty();
  meta["field"] = to_json(field);
  meta["basis"] = basis.id().name();
  meta["reference"] = reference.id().name();
  if (const auto old = read_json(meta_path); matches(old, meta["fingerprint"]) && old->value("complete", false))
    if (auto t = load_trace(csv, *old)) return *t;

  EvolutionOptions opt;
  opt.T = T;
  opt.dt = config.dt;
  opt.check_halving = true;
  opt.lanczos = config.lanczos;
  auto trace = evolve(basis, reference, config.model, field, opt);
  std::ostringstream out;
  write_csv(out, trace);
  write_atomic(csv, out.str());
  meta["trace"] = trace_json(trace);
  const auto dip = adiabaticity_dip(trace);
  meta["dip"] = dip ? json{{"tau", dip->tau}, {"F_ad", dip->fidelity}} : json(nullptr);
  meta["complete"] = true;
  meta["finished"] = now_utc();
  write_atomic(meta_path, meta.dump(2) + "\n");
  trace.final_state.clear();
  return trace;
}

}  // namespace

std::vector<DynamicsRun> run_dynamics(const ExperimentConfig& config) {
  config.validate();
  const TorusLattice lat(config.k);
  const int n = lat.num_sites();
  const bool perturbed = config.perturbed();
  if (perturbed && config.k != 2)
    throw std::invalid_argument("run_dynamics: perturbed dynamics needs the full space and is limited to k = 2");
  fs::create_directories(config.out_dir);
  const SectorBasis winding = enumerate_sector(lat, SectorId::winding(0, 0));
  std::optional<SectorBasis> full, decoded;
  if (perturbed) {
    full.emplace(enumerate_sector(lat, SectorId::full()));
    decoded.emplace(enumerate_sector(lat, SectorId::decoded(0, 0)));
  }

  struct Job {
    double T;
    int realization;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (double T : config.T_list) {
    jobs.push_back({T, -1, 0});
    if (perturbed)
      for (int r = 0; r < config.realizations; ++r)
        jobs.push_back({T, r, derive_seed(config.seed, static_cast<std::uint64_t>(r))});
  }
  std::vector<DynamicsRun> runs(jobs.size());
  const std::string base = "dynamics_k" + std::to_string(config.k);
  parallel_for(jobs.size(), config.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    DynamicsRun run{job.T, job.realization, job.seed, {}, std::nullopt, 0.0};
    const std::string tname = base + "_T" + format_number(job.T);
    if (job.realization < 0) {
      run.trace = cached_evolve(config, tname, winding, winding, {}, job.T);
    } else {
      const auto field = sample_field(n, config.P, config.hz_mode, job.seed);
      char suffix[64];
      std::snprintf(suffix, sizeof suffix, "_P%s_hz%s_r%03d", format_number(config.P).c_str(),
                    to_string(config.hz_mode).c_str(), job.realization);
      // without x terms the field keeps the star constraint
      const SectorBasis& basis = field.has_x() ? *full : winding;
      const SectorBasis& ref = field.has_x() ? *decoded : winding;
      run.trace = cached_evolve(config, tname + suffix, basis, ref, field, job.T);
    }
    run.dip = adiabaticity_dip(run.trace);
    runs[i] = std::move(run);
  });
  // deviation from the ideal trace with the same T
  for (auto& run : runs) {
    if (run.realization < 0) continue;
    const auto ideal = std::find_if(runs.begin(), runs.end(),
                                    [&](const auto& x) { return x.realization < 0 && x.T == run.T; });
    for (std::size_t r = 0; r < run.trace.rows.size() && r < ideal->trace.rows.size(); ++r)
      run.max_ideal_deviation =
          std::max(run.max_ideal_deviation, std::abs(run.trace.rows[r].fidelity - ideal->trace.rows[r].fidelity));
  }
  json summary = base_metadata(config);
  summary["runs"] = json::array();
  for (const auto& run : runs) {
    json r = trace_json(run.trace);
    r["realization"] = run.realization;
    r["seed"] = run.seed;
    r["final_F_ad"] = run.trace.rows.empty() ? 0.0 : run.trace.rows.back().fidelity;
    r["dip"] = run.dip ? json{{"tau", run.dip->tau}, {"F_ad", run.dip->fidelity}} : json(nullptr);
    if (run.realization >= 0) r["max_ideal_deviation"] = run.max_ideal_deviation;
    summary["runs"].push_back(r);
  }
  summary["complete"] = true;
  summary["finished"] = now_utc();
  write_atomic(config.out_dir / (base + (perturbed ? "_P" + format_number(config.P) : std::string()) + "_summary.json"),
               summary.dump(2) + "\n");
  return runs;
}

// ---------------------------------------------------------------- Ising control

SweepResult run_ising_control(const ExperimentConfig& config) {
  config.validate();
  const VertexTorus torus(config.ising_L);
  const int m = torus.num_sites();
  const auto taus = config.grid.points();
  const std::string name = "ising_L" + std::to_string(config.ising_L);
  fs::create_directories(config.out_dir);
  const fs::path csv = config.out_dir / (name + ".csv"), meta_path = config.out_dir / (name + ".json");
  SweepResult result;
  result.name = name;
  const Region block = torus.block_region();
  const RingRegions ring = torus.ring_regions();
  json meta = base_metadata(config);
  meta["name"] = name;
  meta["sector"] = "even global flip";
  meta["block"] = to_json(block);
  meta["ring"] = to_json(ring);
  meta["columns"] = sweep_header({});
  if (const auto old = read_json(meta_path); matches(old, meta["fingerprint"]) && old->value("complete", false)) {
    if (auto rows = parse_sweep_csv(csv, {}); rows && rows->size() == taus.size()) {
      result.rows = std::move(*rows);
      result.report = critical_report(result.rows);
      result.from_cache = true;
      return result;
    }
  }

  IsingHamiltonian H(torus, 0.0, 1.0);
  const std::size_t dim = H.dimension(), flip = dim - 1;
  result.dimension = dim / 2;
  std::vector<double> tmp(dim);
  auto symmetrize = [flip](std::span<double> x) {
    for (std::size_t i = 0; i < x.size(); ++i)
      if (i < (i ^ flip)) x[i] = x[i ^ flip] = 0.5 * (x[i] + x[i ^ flip]);
  };
  // P_even H P_even: the odd sector is annihilated, so with an even start
  // vector Lanczos never leaves the even sector
  LinearOperator<double> op = [&](std::span<const double> in, std::span<double> out) {
    std::copy(in.begin(), in.end(), tmp.begin());
    symmetrize(tmp);
    H.apply<double>(tmp, out);
    symmetrize(out);
  };
  std::vector<double> state = default_start_vector<double>(dim);
  symmetrize(state);
  std::vector<double> prev;
  for (double tau : taus) {
    SweepRow row = nan_row(tau, 0);
    H.set_tau(tau);
    LanczosOptions opt = config.lanczos;
    opt.count = config.wants(Observable::gap) ? 2 : 1;
    std::vector<std::vector<double>> seeds = {state};
    if (opt.count == 2) {
      auto second = default_start_vector<double>(dim, 1);
      symmetrize(second);
      seeds.push_back(std::move(second));
    }
    try {
      const auto r = lanczos_lowest<double>(op, dim, seeds, opt);
      const std::span<const double> view(r.states[0]);
      row.iterations = r.iterations;
      row.residual = r.residuals[0];
      row.energy = r.energies[0] / m;
      if (opt.count == 2) row.gap = r.gap();
      if (config.wants(Observable::fidelity) && !prev.empty())
        row.fidelity = state_fidelity<double>(std::span<const double>(prev), view);
      if (config.wants(Observable::block_entropy)) row.s_v = region_entropy<double>(view, block.sites);
      if (config.wants(Observable::topological)) row.s_top = topological_entropy<double>(view, ring).value;
      state = r.states[0];
      prev = state;
    } catch (const ConvergenceError& e) {
      row.status = std::string("lanczos: ") + e.what();
      row.residual = e.best_residual();
    }
    result.rows.push_back(std::move(row));
  }
  fill_derivatives(result.rows, config.grid.step);
  result.report = critical_report(result.rows);
  std::ostringstream out;
  write_sweep_csv(out, result);
  write_atomic(csv, out.str());
  meta["critical"] = to_json(result.report);
  meta["dimension"] = result.dimension;
  meta["complete"] = true;
  meta["finished"] = now_utc();
  write_atomic(meta_path, meta.dump(2) + "\n");
  return result;
}

// ---------------------------------------------------------------- validate

namespace {

template <class T>
Matrix<T> brute_partial_trace(std::span<const T> psi, int n, Mask region) {
  const auto sites = sites_of(region);
  const std::size_t m = sites.size(), da = std::size_t{1} << m;
  Matrix<T> rho(da, da);
  const Mask comp = ((Mask{1} << n) - 1) & ~region;
  auto place = [&](std::size_t a) {
    Mask c = 0;
    for (std::size_t b = 0; b < m; ++b)
      if ((a >> b) & 1) c |= Mask{1} << sites[b];
    return c;
  };
  for (Mask b = comp;; b = (b - 1) & comp) {
    for (std::size_t a = 0; a < da; ++a)
      for (std::size_t a2 = 0; a2 < da; ++a2) rho(a, a2) += psi[place(a) | b] * conj_of(psi[place(a2) | b]);
    if (b == 0) break;
  }
  return rho;
}

template <class T>
double max_abs_diff(const Matrix<T>& a, const Matrix<T>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) d = std::max(d, std::abs(a(i, j) - b(i, j)));
  return d;
}

std::vector<double> ground_state(const SectorBasis& basis, const ModelParams& p, double& energy) {
  ToricHamiltonian H(basis, p);
  const auto r = lanczos_lowest<double>(real_op(H), basis.size());
  energy = r.energies[0];
  return r.states[0];
}

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

std::vector<ValidationCheck> validate(const fs::path& scratch) {
  std::vector<ValidationCheck> out;
  auto add = [&out](std::string name, bool ok, std::string detail) {
    out.push_back({std::move(name), ok, std::move(detail)});
  };
  auto guarded = [&](const std::string& name, auto&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      add(name, false, std::string("threw: ") + e.what());
    }
  };
  const TorusLattice l2(2), l3(3);

  guarded("dense vs sector Lanczos energies, k=2, 11 tau points", [&] {
    const auto full = enumerate_sector(l2, SectorId::full());
    std::vector<SectorBasis> sectors;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) sectors.push_back(enumerate_sector(l2, SectorId::winding(i, j)));
    double worst = 0.0;
    for (int t = 0; t <= 10; ++t) {
      ModelParams p;
      p.tau = t / 10.0;
      ToricHamiltonian Hf(full, p);
      const auto dense = dense_symmetric_eig(dense_matrix<double>(real_op(Hf), full.size()), false).values;
      double lowest = std::numeric_limits<double>::infinity();
      for (const auto& s : sectors) {
        double e = 0.0;
        (void)ground_state(s, p, e);
        lowest = std::min(lowest, e);
        double nearest = std::numeric_limits<double>::infinity();
        for (double d : dense) nearest = std::min(nearest, std::abs(d - e));
        worst = std::max(worst, nearest);
      }
      worst = std::max(worst, std::abs(lowest - dense[0]));
    }
    add("dense vs sector Lanczos energies, k=2, 11 tau points", worst <= 1e-10, fmt("max |dE| = %.3e (tol 1e-10)", worst));
  });

  guarded("dense vs Lanczos, perturbed k=2 full space", [&] {
    const auto full = enumerate_sector(l2, SectorId::full());
    const auto field = sample_field(l2.num_sites(), 1.0, HzMode::uniform02, 7);
    ModelParams p;
    p.tau = 0.7;
    ToricHamiltonian H(full, p, field);
    const auto dense = dense_symmetric_eig(dense_matrix<double>(real_op(H), full.size()), false).values;
    const auto r = lanczos_lowest<double>(real_op(H), full.size());
    const double d = std::abs(r.energies[0] - dense[0]);
    add("dense vs Lanczos, perturbed k=2 full space", d <= 1e-10, fmt("|dE0| = %.3e (tol 1e-10)", d));
  });

  guarded("partial trace vs brute force", [&] {
    const auto full = enumerate_sector(l2, SectorId::full());
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    std::vector<Complex> psi(full.size());
    for (auto& x : psi) x = Complex(nd(rng), nd(rng));
    scale<Complex>(psi, Complex(1.0 / norm<Complex>(psi)));
    double worst = 0.0, herm = 0.0;
    for (Mask region : {Mask{0b111}, Mask{0b10010001}, Mask{0b01101100}}) {
      const auto fast = reduced_density_matrix<Complex>(full, std::span<const Complex>(psi), region);
      worst = std::max(worst, max_abs_diff(fast.matrix, brute_partial_trace<Complex>(psi, l2.num_sites(), region)));
      herm = std::max(herm, hermiticity_error(fast.matrix));
    }
    add("partial trace vs brute force", worst <= 1e-10, fmt("max |d rho| = %.3e (tol 1e-10)", worst));
    add("reduced density matrix hermiticity", herm <= 1e-12, fmt("max |rho - rho^H| = %.3e (tol 1e-12)", herm));
  });

  guarded("purity symmetry S_A = S_Ac, k=3 tau=0.7", [&] {
    const auto w = enumerate_sector(l3, SectorId::winding(0, 0));
    ModelParams p;
    p.tau = 0.7;
    double e = 0.0;
    const auto psi = ground_state(w, p, e);
    const Mask all = l3.all_sites();
    double worst = 0.0;
    for (Mask region : {Mask{0x1FF}, Mask{0x2AAAA} & all, Mask{0x0F0F0} & all}) {
      const double sa = region_entropy<double>(w, std::span<const double>(psi), region);
      const double sc = region_entropy<double>(w, std::span<const double>(psi), all & ~region);
      worst = std::max(worst, std::abs(sa - sc));
    }
    add("purity symmetry S_A = S_Ac, k=3 tau=0.7", worst <= 1e-10, fmt("max |S_A - S_Ac| = %.3e (tol 1e-10)", worst));
  });

  guarded("Hamiltonian hermiticity, k=2 perturbed", [&] {
    const auto full = enumerate_sector(l2, SectorId::full());
    ModelParams p;
    p.tau = 0.4;
    ToricHamiltonian H(full, p, sample_field(l2.num_sites(), 2.0, HzMode::uniform02, 3));
    const double h = hermiticity_error(dense_matrix<double>(real_op(H), full.size()));
    add("Hamiltonian hermiticity, k=2 perturbed", h <= 1e-12, fmt("max |H - H^T| = %.3e (tol 1e-12)", h));
  });

  guarded("mask invariants", [&] {
    std::string broken;
    for (int k : {2, 3, 4}) {
      const TorusLattice lat(k);
      Mask xs = 0, xp = 0;
      for (Mask s : lat.stars()) {
        xs ^= s;
        if (popcount(s) != 4) broken += " star weight k=" + std::to_string(k) + ";";
        for (Mask q : lat.plaquettes())
          if (parity(s & q)) broken += " star/plaquette anticommute k=" + std::to_string(k) + ";";
        for (auto lk : {LoopKind::t1x, LoopKind::t2x})
          if (parity(s & lat.loop_mask(lk).sites)) broken += " loop violates star k=" + std::to_string(k) + ";";
      }
      for (Mask q : lat.plaquettes()) {
        xp ^= q;
        if (popcount(q) != 4) broken += " plaquette weight k=" + std::to_string(k) + ";";
      }
      if (xs || xp) broken += " stars or plaquettes do not multiply to 1, k=" + std::to_string(k) + ";";
      const Mask t1 = lat.loop_mask(LoopKind::t1x).sites, z1 = lat.loop_mask(LoopKind::z_cut_1).sites;
      if (!parity(t1 & z1)) broken += " t1x commutes with its z cut k=" + std::to_string(k) + ";";
    }
    add("mask invariants", broken.empty(), broken.empty() ? "stars, plaquettes, loops at k=2,3,4" : broken);
  });

  guarded("RK4 dt-halving convergence", [&] {
    const auto w = enumerate_sector(l2, SectorId::winding(0, 0));
    EvolutionOptions opt;
    opt.T = 5.0;
    opt.check_halving = true;
    const auto t = evolve(w, w, ModelParams{}, {}, opt);
    const double inf = 1.0 - *t.halving_fidelity;
    add("RK4 dt-halving convergence", inf < 1e-8 && *t.halving_change < 1e-6,
        fmt("1 - |<psi_dt|psi_dt/2>| = %.3e (tol 1e-8), dF_ad = %.3e (tol 1e-6)", inf, *t.halving_change));
  });

  guarded("analytic endpoints, k=3", [&] {
    const auto w = enumerate_sector(l3, SectorId::winding(0, 0));
    const auto& ring = calibrate_ring(l3).regions;
    ModelParams p;
    double e = 0.0;
    p.tau = 0.0;
    const auto g0 = ground_state(w, p, e);
    p.tau = 1.0;
    const auto g1 = ground_state(w, p, e);
    const double s0 = topological_entropy<double>(w, std::span<const double>(g0), ring).value;
    const double s1 = topological_entropy<double>(w, std::span<const double>(g1), ring).value;
    const double sv = region_entropy<double>(w, std::span<const double>(g1), plaquette_region(l3, 0).sites);
    add("S_top(tau=0) = 0, k=3", std::abs(s0) <= 1e-9, fmt("S_top = %.3e (tol 1e-9)", s0));
    add("S_top(tau=1) = 1, k=3", std::abs(s1 - 1.0) <= 1e-6, fmt("S_top = %.12f (tol 1e-6)", s1));
    add("plaquette S_v(tau=1) = 3, k=3", std::abs(sv - 3.0) <= 1e-6, fmt("S_v = %.12f (tol 1e-6)", sv));
  });

  guarded("ring calibration", [&] {
    std::string detail;
    bool ok = true;
    for (int k : {3, 4}) {
      const auto& cal = calibrate_ring(TorusLattice(k));
      double value = kNaN;
      for (const auto& [part, v] : cal.tried)
        if (part.describe() == cal.regions.partition.describe()) value = v;
      ok = ok && std::abs(value - 1.0) <= 1e-9;
      detail += "k=" + std::to_string(k) + ": " + cal.regions.partition.describe() + " -> " + fmt("%.12f", value) + "; ";
    }
    add("ring calibration", ok, detail);
  });

  guarded("determinism and resume", [&] {
    ExperimentConfig c;
    c.k = 2;
    c.grid.step = 0.05;
    c.lanczos.tol = 1e-11;
    std::vector<std::string> bytes;
    for (const char* dir : {"a", "b"}) {
      c.out_dir = scratch / dir;
      fs::remove_all(c.out_dir);
      const auto r = run_sweep(c);
      bytes.push_back(read_file(c.out_dir / (r.name + ".csv")));
    }
    add("determinism byte-identity", !bytes[0].empty() && bytes[0] == bytes[1], "two fresh k=2 sweeps");

    c.out_dir = scratch / "resume";
    fs::remove_all(c.out_dir);
    c.stop_after_rows = 7;
    const auto cut = run_sweep(c);
    c.stop_after_rows = 0;
    const auto resumed = run_sweep(c);
    const bool same = !cut.complete && cut.rows.size() == 7 &&
                      read_file(c.out_dir / (resumed.name + ".csv")) == bytes[1];
    add("resume identity", same, "k=2 sweep interrupted after 7 of 21 rows, then resumed");
  });
  return out;
}

}  // namespace toric
