// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below,
// followed by supplementary checks (S1) that are reported but not counted.
//
//   acceptance [cache_dir] [--strict]
//
// All runs go through the runner cache, so a second invocation only re-reads
// finished outputs. The exit status is 0 once every criterion has been
// evaluated (2 on an exception); --strict also fails on any FAIL line.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "toric/runner.hpp"

using namespace toric;

namespace {

// criterion 1
constexpr double kTauCLow = 0.68, kTauCHigh = 0.74, kDetectorWindow = 0.02;
// criterion 2
constexpr double kStopZeroTol = 1e-9, kStopOneTol = 1e-6;
// criterion 3
constexpr double kPlaquetteValue = 3.0, kPlaquetteTol = 1e-6, kTopoPhaseFloor = 2.7, kTopoPhaseFrom = 0.9;
// criterion 4
constexpr double kWilsonTol = 1e-9, kWilsonPolarizedTau = 0.3;
// criterion 5
constexpr double kDipWindow = 0.2;
// criterion 6
constexpr double kLeakPerturbed = 1e-2, kLeakIdeal = 1e-12;
constexpr double kPerturbedP = 1.0;
constexpr int kLeakRealizations = 10;
// criterion 7
constexpr double kShiftAtP10 = 0.03, kHeightFraction = 0.5;
constexpr int kEnsembleRealizations = 20;
const std::vector<double> kEnsembleP = {0, 10, 20, 30};
constexpr double kEnsembleStart = 0.40;
// criterion 8
constexpr double kScalingFactor = 2.0;
// criterion 9
constexpr double kIsingStopMax = 0.2;
// supplementary: ground-state overlap at small P (not one of the ten criteria)
constexpr double kOverlapP = 4.0, kOverlapMax = 0.95, kOverlapDipWindow = 0.05;
constexpr int kOverlapRealizations = 10;

int failures = 0, supplementary_failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  std::printf("%s  C%-2d %-34s %s\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ExperimentConfig base(const std::string& cache) {
  ExperimentConfig c;
  c.out_dir = cache;
  return c;
}

const SweepRow& row_at(const SweepResult& r, double tau) {
  return *std::min_element(r.rows.begin(), r.rows.end(),
                           [tau](const auto& a, const auto& b) { return std::abs(a.tau - tau) < std::abs(b.tau - tau); });
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

}  // namespace

int main(int argc, char** argv) {
  std::string cache = "acceptance_cache";
  bool strict = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--strict")
      strict = true;
    else
      cache = a;
  }
  try {
    Timer total;
    std::vector<SweepResult> sweeps;  // k = 2, 3, 4
    for (int k : {2, 3, 4}) {
      auto c = base(cache);
      c.k = k;
      sweeps.push_back(run_sweep(c));
      std::printf("       sweep k=%d ready (%.1f s)\n", k, total.seconds());
    }
    const SweepResult& s3 = sweeps[1];
    const SweepResult& s4 = sweeps[2];

    // 1. critical point at k=4
    {
      const auto& rep = s4.report;
      bool ok = rep.energy && rep.fidelity && rep.entropy;
      std::string detail = "missing detector";
      if (ok) {
        const double tc = rep.energy->location;
        const double df = std::abs(rep.fidelity->location - tc), ds = std::abs(rep.entropy->location - tc);
        ok = tc >= kTauCLow && tc <= kTauCHigh && df <= kDetectorWindow && ds <= kDetectorWindow;
        detail = fmt("tau_c(E'') = %.4f in [%.2f, %.2f]; |F min - tau_c| = %.4f, |dS_top peak - tau_c| = %.4f (<= %.2f); "
                     "(1 - tau_c)/tau_c = %.3f",
                     tc, kTauCLow, kTauCHigh, df, ds, kDetectorWindow, (1 - tc) / tc);
      }
      report(1, ok, "critical point, k=4", detail);
    }

    // 2. topological entropy endpoints
    {
      bool ok = true;
      std::string detail;
      for (const auto* s : {&s3, &s4}) {
        const double a = s->rows.front().s_top, b = s->rows.back().s_top;
        ok = ok && std::abs(a) <= kStopZeroTol && std::abs(b - 1.0) <= kStopOneTol;
        detail += fmt("k=%d: S_top(0) = %.2e, S_top(1) - 1 = %.2e; ", s == &s3 ? 3 : 4, a, b - 1.0);
      }
      report(2, ok, "S_top endpoints, k=3 and k=4", detail + fmt("(tol %.0e / %.0e)", kStopZeroTol, kStopOneTol));
    }

    // 3. plaquette block entropy
    {
      const double sv1 = s4.rows.back().s_v;
      double floor = 1e300;
      for (const auto& r : s4.rows)
        if (r.tau >= kTopoPhaseFrom - 1e-9) floor = std::min(floor, r.s_v);
      const bool ok = std::abs(sv1 - kPlaquetteValue) <= kPlaquetteTol && floor >= kTopoPhaseFloor;
      report(3, ok, "plaquette S_v, k=4",
             fmt("S_v(1) = %.9f (3 +- %.0e); min S_v for tau >= %.1f = %.6f (>= %.1f)", sv1, kPlaquetteTol, kTopoPhaseFrom,
                 floor, kTopoPhaseFloor));
    }

    // 4. Wilson loops
    {
      const auto& top = s4.rows.back();
      const auto& low = row_at(s4, kWilsonPolarizedTau);
      double worst = 0.0;
      for (double w : top.wilson) worst = std::max(worst, std::abs(w - 1.0));
      bool monotone = true;
      for (std::size_t b = 1; b < low.wilson.size(); ++b) monotone = monotone && low.wilson[b] < low.wilson[b - 1];
      // rise after tau_c, steeper (larger maximum slope) for larger blocks
      const double tc = s4.report.energy ? s4.report.energy->location : 0.71;
      std::vector<double> taus = s4.taus(), slopes;
      bool rises = true;
      for (std::size_t b = 0; b < top.wilson.size(); ++b) {
        std::vector<double> w;
        for (const auto& r : s4.rows) w.push_back(r.wilson[b]);
        for (std::size_t i = 1; i < w.size(); ++i)
          if (taus[i] > tc) rises = rises && w[i] >= w[i - 1];
        slopes.push_back(peak_analysis(taus, finite_difference(w, s4.rows[1].tau - s4.rows[0].tau, 1)).height);
      }
      bool steeper = true;
      std::string slope_text;
      for (std::size_t b = 0; b < slopes.size(); ++b) {
        if (b) steeper = steeper && slopes[b] >= slopes[b - 1];
        slope_text += fmt("%s%s %.3f", b ? ", " : "", s4.wilson_names[b].c_str(), slopes[b]);
      }
      std::string w03;
      for (std::size_t b = 0; b < low.wilson.size(); ++b) w03 += fmt("%s%.2e", b ? " > " : "", low.wilson[b]);
      report(4, worst <= kWilsonTol && monotone && rises && steeper, "Wilson loops, k=4",
             fmt("max |W(1) - 1| = %.1e (tol %.0e); W(%.1f): %s [%s]; rise after tau_c: %s; max dW/dtau: %s [%s]", worst,
                 kWilsonTol, kWilsonPolarizedTau, w03.c_str(), monotone ? "monotone" : "NOT monotone",
                 rises ? "yes" : "no", slope_text.c_str(), steeper ? "nondecreasing" : "NOT nondecreasing"));
    }

    // 5. adiabatic dynamics at k=3
    {
      auto c = base(cache);
      c.kind = ExperimentKind::dynamics;
      c.k = 3;
      c.T_list = {20, 40, 60};
      const auto runs = run_dynamics(c);
      const double tc = s3.report.fidelity ? s3.report.fidelity->location : NAN;
      bool increasing = true, near = true;
      std::string detail;
      for (std::size_t i = 0; i < runs.size(); ++i) {
        const double f = runs[i].trace.rows.back().fidelity;
        if (i) increasing = increasing && f > runs[i - 1].trace.rows.back().fidelity;
        const bool has = runs[i].dip.has_value();
        near = near && has && std::abs(runs[i].dip->tau - tc) <= kDipWindow;
        detail += fmt("T=%g: F_ad(1) = %.6f, dip %.3f at tau %.2f; ", runs[i].T, f, has ? runs[i].dip->fidelity : NAN,
                      has ? runs[i].dip->tau : NAN);
      }
      report(5, increasing && near, "adiabatic dynamics, k=3",
             detail + fmt("tau_c(F, k=3) = %.4f, window %.1f", tc, kDipWindow));
    }

    // 6. sector leakage at k=2
    {
      auto c = base(cache);
      c.kind = ExperimentKind::dynamics;
      c.k = 2;
      c.P = kPerturbedP;
      c.realizations = kLeakRealizations;
      c.T_list = {20, 40, 60};
      const auto runs = run_dynamics(c);
      double pert = 0.0, ideal = 0.0, dev = 0.0;
      int over = 0, count = 0;
      for (const auto& r : runs) {
        if (r.realization < 0) {
          ideal = std::max(ideal, r.trace.max_leakage());
        } else {
          pert = std::max(pert, r.trace.max_leakage());
          dev = std::max(dev, r.max_ideal_deviation);
          over += r.trace.max_leakage() >= kLeakPerturbed;
          ++count;
        }
      }
      report(6, pert < kLeakPerturbed && ideal < kLeakIdeal, "sector leakage, k=2",
             fmt("perturbed P=%g, R=%d, T=20/40/60: max leakage = %.3e (< %.0e; %d of %d runs above); "
                 "unperturbed max leakage = %.1e (< %.0e); max |F_ad - F_ad(ideal)| = %.3e",
                 kPerturbedP, kLeakRealizations, pert, kLeakPerturbed, over, count, ideal, kLeakIdeal, dev));
    }

    // 7. perturbation robustness at k=3
    {
      auto c = base(cache);
      c.kind = ExperimentKind::ensemble;
      c.k = 3;
      c.grid.start = kEnsembleStart;
      c.realizations = kEnsembleRealizations;
      c.observables = {Observable::energy, Observable::fidelity, Observable::overlap, Observable::topological};
      std::vector<SweepResult> ens;
      std::string table;
      for (double P : kEnsembleP) {
        c.P = P;
        ens.push_back(run_ensemble(c));
        const auto& rep = ens.back().report;
        table += fmt("P=%g: tau_c %.4f, dS_top peak %.3f at %.4f, FWHM %.4f; ", P, rep.energy ? rep.energy->location : NAN,
                     rep.entropy ? rep.entropy->height : NAN, rep.entropy ? rep.entropy->location : NAN,
                     rep.entropy ? rep.entropy->fwhm : NAN);
        std::printf("       ensemble P=%g ready (%.1f s)\n", P, total.seconds());
      }
      const auto& r0 = ens[0].report;
      bool ok = r0.energy && ens[1].report.energy && r0.entropy;
      double shift = NAN;
      if (ok) {
        shift = std::abs(ens[1].report.energy->location - r0.energy->location);
        ok = shift <= kShiftAtP10;
        for (std::size_t i = 1; i < kEnsembleP.size(); ++i)
          if (kEnsembleP[i] <= 20)
            ok = ok && ens[i].report.entropy && ens[i].report.entropy->height > kHeightFraction * r0.entropy->height;
      }
      report(7, ok, "perturbation robustness, k=3",
             fmt("R=%d, tau in [%.2f, 1]; |tau_c(10) - tau_c(0)| = %.4f (<= %.2f); peak height > %.1f x P=0 for P <= 20; ",
                 kEnsembleRealizations, kEnsembleStart, shift, kShiftAtP10, kHeightFraction) +
                 table);
    }

    // 8. gap scaling
    {
      std::vector<double> gaps, scaled;
      std::string detail;
      for (const auto& s : sweeps) {
        double g = 1e300;
        for (const auto& r : s.rows) g = std::min(g, r.gap);
        const int k = static_cast<int>(&s - sweeps.data()) + 2;
        gaps.push_back(g);
        scaled.push_back(g * std::sqrt(2.0 * k * k));
        detail += fmt("k=%d: min gap %.5f, x sqrt(n) = %.4f; ", k, g, scaled.back());
      }
      const bool decreasing = gaps[0] > gaps[1] && gaps[1] > gaps[2];
      const auto [lo, hi] = std::minmax_element(scaled.begin(), scaled.end());
      report(8, decreasing && *hi / *lo <= kScalingFactor, "gap scaling, k=2,3,4",
             detail + fmt("spread of gap sqrt(n) = %.3f (<= %.0f)", *hi / *lo, kScalingFactor));
    }

    // 9. Ising control
    {
      auto c = base(cache);
      c.kind = ExperimentKind::ising_control;
      c.observables = {Observable::energy, Observable::block_entropy, Observable::fidelity, Observable::topological};
      const auto r = run_ising_control(c);
      double worst = 0.0, at = 0.0;
      for (const auto& row : r.rows)
        if (std::abs(row.s_top) > worst) {
          worst = std::abs(row.s_top);
          at = row.tau;
        }
      const auto& peak = r.report.block;
      report(9, worst < kIsingStopMax && peak.has_value(), "Ising control, L=4",
             fmt("max |S_top| = %.4f at tau %.2f (< %.1f); |dS_v/dtau| interior peak: %s", worst, at, kIsingStopMax,
                 peak ? fmt("tau %.4f, height %.3f", peak->location, peak->height).c_str() : "none"));
    }

    // 10. oracle and property suite
    {
      const auto checks = validate(std::string(cache) + "/validate");
      int bad = 0;
      std::string which;
      for (const auto& ch : checks)
        if (!ch.passed) {
          ++bad;
          which += " [" + ch.name + ": " + ch.detail + "]";
        }
      report(10, bad == 0, "oracle and property suite",
             fmt("%zu checks, %d failed", checks.size(), bad) + which);
    }

    std::printf("%d of 10 criteria pass (%.0f s)\n", 10 - failures, total.seconds());

    // S1. mean overlap with the ideal ground state at P=4: visibly below 1,
    // with its minimum at tau_c. Printed after the criteria and not counted
    // among them; --strict still fails on it.
    {
      auto c = base(cache);
      c.kind = ExperimentKind::ensemble;
      c.k = 3;
      c.P = kOverlapP;
      c.grid.start = kEnsembleStart;
      c.realizations = kOverlapRealizations;
      c.observables = {Observable::energy, Observable::overlap};
      const auto r = run_ensemble(c);
      const auto lowest = std::min_element(r.rows.begin(), r.rows.end(),
                                           [](const auto& a, const auto& b) { return a.overlap < b.overlap; });
      const double tc = s3.report.energy ? s3.report.energy->location : NAN;
      // second order in hx / 4U: 1 - |<psi|psi_ideal>|^2 ~ n <hx^2> / (4U)^2
      const double U = c.model.U, n = 2.0 * c.k * c.k;
      const double predicted = std::sqrt(1.0 - n * kOverlapP * kOverlapP / 3.0 / (16.0 * U * U));
      const bool ok = lowest->overlap < kOverlapMax && std::abs(lowest->tau - tc) <= kOverlapDipWindow;
      std::printf("%s  S1  %-34s %s\n", ok ? "PASS" : "FAIL", "overlap dip at P=4, k=3",
                  fmt("R=%d: min mean overlap = %.6f at tau %.2f (< %.2f, within %.2f of tau_c = %.4f); "
                      "second-order estimate away from tau_c %.6f",
                      kOverlapRealizations, lowest->overlap, lowest->tau, kOverlapMax, kOverlapDipWindow, tc, predicted)
                      .c_str());
      std::fflush(stdout);
      if (!ok) ++supplementary_failures;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "acceptance aborted: %s\n", e.what());
    return 2;
  }
  return strict && (failures || supplementary_failures) ? 1 : 0;
}
