// Command-line front end for the experiment runner.
//
//   toric sweep --k 4 --out out
//   toric ensemble --k 3 --P 10 --realizations 20 --tau-start 0.4
//   toric dynamics --k 3 --T 20 --T 40 --T 60
//   toric fig3            (presets fill in k, P lists and T lists)

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "toric/runner.hpp"

namespace {

using toric::ExperimentConfig;
using toric::ExperimentKind;

const std::vector<double> kPresetP = {0, 1, 2, 5, 10, 15, 20, 25, 30, 40};

struct Options {
  std::vector<int> k;
  std::string sector = "auto";
  double tau_start = 0.0, tau_stop = 1.0, tau_step = 0.01;
  std::vector<double> P;
  std::string hz = "zero";
  int realizations = 0;  // 0: preset default
  std::vector<double> T;
  double dt = 0.0;
  std::uint64_t seed = 1;
  std::string out = "out";
  int workers = 1;
  std::string config_file;
  std::vector<std::string> observables;
};

void add_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--k", o.k, "Torus size(s); n = 2 k^2 spins")->check(CLI::Range(2, 5));
  cmd->add_option("--sector", o.sector, "winding00..winding11, decoded00..decoded11, gauge, full or auto");
  cmd->add_option("--tau-start", o.tau_start, "First tau of the grid");
  cmd->add_option("--tau-stop", o.tau_stop, "Last tau of the grid");
  cmd->add_option("--tau-step", o.tau_step, "Grid spacing")->check(CLI::PositiveNumber);
  cmd->add_option("--P", o.P, "Perturbation strength(s): hx uniform in [-P, P]");
  cmd->add_option("--hz", o.hz, "hz mode")->check(CLI::IsMember({"zero", "uniform02"}));
  cmd->add_option("--realizations", o.realizations, "Realizations per ensemble")->check(CLI::PositiveNumber);
  cmd->add_option("--T", o.T, "Total evolution time(s)");
  cmd->add_option("--dt", o.dt, "RK4 step; 0 picks the default")->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--workers", o.workers, "Concurrent realizations or runs")->check(CLI::PositiveNumber);
  cmd->add_option("--config", o.config_file, "JSON config; command-line flags override it");
  cmd->add_option("--observables", o.observables, "Subset of observables to compute");
}

ExperimentConfig make_config(const Options& o, ExperimentKind kind, CLI::App* cmd) {
  ExperimentConfig c;
  if (!o.config_file.empty()) {
    std::ifstream in(o.config_file);
    if (!in) throw std::runtime_error("cannot read " + o.config_file);
    c = toric::config_from_json(nlohmann::json::parse(in));
  }
  c.kind = kind;
  auto given = [cmd](const char* flag) { return cmd->count(flag) > 0; };
  if (given("--sector")) c.sector = o.sector == "auto" ? std::nullopt : std::optional(toric::parse_sector(o.sector));
  if (given("--tau-start")) c.grid.start = o.tau_start;
  if (given("--tau-stop")) c.grid.stop = o.tau_stop;
  if (given("--tau-step")) c.grid.step = o.tau_step;
  if (given("--hz")) c.hz_mode = toric::parse_hz_mode(o.hz);
  if (given("--realizations")) c.realizations = o.realizations;
  if (given("--T")) c.T_list = o.T;
  if (given("--dt")) c.dt = o.dt;
  if (given("--seed")) c.seed = o.seed;
  if (given("--out") || o.config_file.empty()) c.out_dir = o.out;
  if (given("--workers")) c.workers = o.workers;
  if (given("--observables")) {
    c.observables.clear();
    for (const auto& s : o.observables) c.observables.push_back(toric::parse_observable(s));
  }
  return c;
}

void print_peak(const char* label, const std::optional<toric::Peak>& p) {
  if (!p) {
    std::printf("  %-24s none\n", label);
    return;
  }
  std::printf("  %-24s tau = %.4f  height = %.5g  FWHM = %s\n", label, p->location, p->height,
              p->has_fwhm() ? std::to_string(p->fwhm).c_str() : "n/a");
}

void print_sweep(const toric::SweepResult& r) {
  std::printf("%s  (%zu rows, dim %zu%s)\n", r.name.c_str(), r.rows.size(), r.dimension, r.from_cache ? ", cached" : "");
  print_peak("|d2E/dtau2| peak", r.report.energy);
  print_peak("1 - F_dtau peak", r.report.fidelity);
  print_peak("dS_top/dtau peak", r.report.entropy);
  print_peak("|dS_v/dtau| peak", r.report.block);
  std::printf("  detector spread %.4f%s\n", r.report.spread, r.report.disagree ? "  (DISAGREE > 0.02)" : "");
}

void print_dynamics(const std::vector<toric::DynamicsRun>& runs) {
  for (const auto& run : runs) {
    const auto& t = run.trace;
    std::printf("T = %-5g realization %-3d dt = %.4g  F_ad(1) = %.8f  max leakage = %.3e  drift = %.2e", run.T,
                run.realization, t.dt, t.rows.back().fidelity, t.max_leakage(), t.norm_drift);
    if (run.dip) std::printf("  dip at tau = %.2f", run.dip->tau);
    if (run.realization >= 0) std::printf("  max |F - F_ideal| = %.3e", run.max_ideal_deviation);
    std::printf("\n");
  }
}

int run_validate(const ExperimentConfig& c) {
  const auto checks = toric::validate(c.out_dir / "validate");
  bool ok = true;
  for (const auto& ch : checks) {
    std::printf("%s  %-52s %s\n", ch.passed ? "PASS" : "FAIL", ch.name.c_str(), ch.detail.c_str());
    ok = ok && ch.passed;
  }
  return ok ? 0 : 1;
}

void sweeps(ExperimentConfig c, const std::vector<int>& ks) {
  for (int k : ks) {
    c.k = k;
    print_sweep(toric::run_sweep(c));
  }
}

void ensembles(ExperimentConfig c, const std::vector<double>& Ps) {
  std::printf("P,tau_energy,tau_fidelity,tau_dstop,dstop_height,dstop_fwhm,spread\n");
  for (double P : Ps) {
    c.P = P;
    const auto r = toric::run_ensemble(c);
    auto loc = [](const auto& p) { return p ? p->location : NAN; };
    std::printf("%g,%.4f,%.4f,%.4f,%.5g,%.5g,%.4f\n", P, loc(r.report.energy), loc(r.report.fidelity),
                loc(r.report.entropy), r.report.entropy ? r.report.entropy->height : NAN,
                r.report.entropy ? r.report.entropy->fwhm : NAN, r.report.spread);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Toric code with string tension: sweeps, ensembles, dynamics and controls"};
  app.require_subcommand(1);
  Options o;
  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"sweep", "Ground-state sweep over the tau grid"},
      {"ensemble", "Averaged sweeps over random x-field realizations"},
      {"dynamics", "RK4 evolution along the schedule for each T"},
      {"ising", "Transverse-field Ising control on the vertex torus"},
      {"validate", "Oracle and property checks"},
      {"fig2a", "Dynamics, k=3, T = 20, 40, 60"},
      {"fig2b", "Dynamics, k=2, P=1 against the ideal schedule"},
      {"fig3", "Detectors for k = 2, 3, 4 plus k=3 ensembles over P"},
      {"fig4", "Wilson loops, k=4"},
      {"fig5", "Ising control, L=4"},
      {"fig6", "Block and topological entropy, k = 3, 4"},
      {"fig7", "dS_top/dtau and its FWHM against P, k=3 ensembles"},
  };
  std::vector<CLI::App*> cmds;
  for (const auto& s : subs) {
    cmds.push_back(app.add_subcommand(s.name, s.help));
    add_options(cmds.back(), o);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    auto ks = [&](std::vector<int> dflt) { return o.k.empty() ? dflt : o.k; };
    auto Ps = [&](std::vector<double> dflt) { return o.P.empty() ? dflt : o.P; };
    auto cfg = [&](ExperimentKind kind) { return make_config(o, kind, cmd); };

    if (name == "sweep") {
      auto c = cfg(ExperimentKind::sweep);
      if (!o.P.empty() || c.hz_mode != toric::HzMode::zero) {
        c.k = ks({c.k}).front();
        c.P = Ps({0}).front();
        const auto field = toric::sample_field(2 * c.k * c.k, c.P, c.hz_mode, c.seed);
        print_sweep(toric::run_sweep(c, field));
      } else {
        sweeps(c, ks({c.k}));
      }
    } else if (name == "ensemble" || name == "fig7") {
      auto c = cfg(ExperimentKind::ensemble);
      c.k = ks({3}).front();
      if (name == "fig7" && !cmd->count("--observables"))
        c.observables = {toric::Observable::energy, toric::Observable::fidelity, toric::Observable::overlap,
                         toric::Observable::block_entropy, toric::Observable::topological};
      ensembles(c, Ps(name == "fig7" ? kPresetP : std::vector<double>{c.P}));
    } else if (name == "dynamics" || name == "fig2a" || name == "fig2b") {
      auto c = cfg(ExperimentKind::dynamics);
      c.k = ks({name == "fig2b" ? 2 : 3}).front();
      if (name == "fig2b") {
        c.P = Ps({1.0}).front();
        if (!cmd->count("--realizations")) c.realizations = 10;
      } else {
        c.P = Ps({0.0}).front();
      }
      print_dynamics(toric::run_dynamics(c));
    } else if (name == "ising" || name == "fig5") {
      print_sweep(toric::run_ising_control(cfg(ExperimentKind::ising_control)));
    } else if (name == "validate") {
      return run_validate(cfg(ExperimentKind::validate));
    } else if (name == "fig3") {
      auto c = cfg(ExperimentKind::sweep);
      sweeps(c, ks({2, 3, 4}));
      c.kind = ExperimentKind::ensemble;
      c.k = 3;
      c.observables = {toric::Observable::energy, toric::Observable::fidelity, toric::Observable::overlap,
                       toric::Observable::block_entropy};
      ensembles(c, Ps(kPresetP));
    } else if (name == "fig4") {
      sweeps(cfg(ExperimentKind::sweep), ks({4}));
    } else if (name == "fig6") {
      sweeps(cfg(ExperimentKind::sweep), ks({3, 4}));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
