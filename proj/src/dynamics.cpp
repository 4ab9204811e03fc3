#include "toric/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "toric/observables.hpp"

namespace toric {

namespace {

constexpr double kRenormalizeAbove = 1e-9;
constexpr double kBlowUpAbove = 1e-3;

std::vector<Complex> embed(const SectorBasis& basis, const SectorBasis& reference, std::span<const double> ref) {
  std::vector<Complex> out(basis.size(), Complex{});
  for (std::size_t m = 0; m < reference.size(); ++m) {
    const std::size_t j = basis.index_of(reference.config(m));
    if (j == SectorBasis::npos) throw std::invalid_argument("evolve: reference sector is not contained in the basis");
    out[j] = ref[m];
  }
  return out;
}

LinearOperator<double> real_operator(const ToricHamiltonian& H) {
  return [&H](std::span<const double> in, std::span<double> out) { H.apply<double>(in, out); };
}

struct Reference {
  double energy = 0.0;
  std::vector<double> state;
};

Reference ground_state(const ToricHamiltonian& H, const std::vector<double>& seed, const LanczosOptions& options) {
  LanczosOptions one = options;
  one.count = 1;
  std::vector<std::vector<double>> seeds;
  if (!seed.empty()) seeds.push_back(seed);
  auto r = lanczos_lowest<double>(real_operator(H), H.dimension(), seeds, one);
  return {r.energies[0], std::move(r.states[0])};
}

EvolutionTrace run_once(const SectorBasis& basis, const SectorBasis& reference, const ModelParams& params,
                        const PerturbationField& field, const EvolutionOptions& options, double dt) {
  ToricHamiltonian H(basis, params, field);
  ToricHamiltonian Href(reference, params, field);
  const double T = options.T;
  const int records = static_cast<int>(std::lround(1.0 / options.record_step));
  const auto steps_per_record = static_cast<std::size_t>(std::lround(options.record_step * T / dt));
  auto tau_at = [&](double t) { return options.frozen_tau ? *options.frozen_tau : std::min(1.0, t / T); };

  EvolutionTrace trace;
  trace.T = T;
  trace.dt = dt;

  // initial state and reference
  const double tau0 = tau_at(0.0);
  H.set_tau(tau0);
  Href.set_tau(tau0);
  Reference ref = ground_state(Href, {}, options.lanczos);
  std::vector<Complex> psi(basis.size(), Complex{});
  if (field.empty() && !options.frozen_tau) {
    psi[basis.index_of(0)] = 1.0;
  } else {
    const auto g = ground_state(H, {}, options.lanczos);
    std::copy(g.state.begin(), g.state.end(), psi.begin());
  }

  std::vector<Complex> k(basis.size()), y(basis.size()), acc(basis.size()), hpsi(basis.size());
  double current_tau = tau0;
  double shift = ref.energy;  // global phase only; keeps the occupied low-energy part slow
  auto deriv = [&](double t, const std::vector<Complex>& x, std::vector<Complex>& out) {
    const double tau = tau_at(t);
    if (tau != current_tau) {
      H.set_tau(tau);
      current_tau = tau;
    }
    H.apply<Complex>(x, out);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = Complex(0.0, -1.0) * (out[i] - shift * x[i]);
  };

  auto record = [&](double tau) {
    EvolutionRow row;
    row.tau = tau;
    const auto emb = embed(basis, reference, ref.state);
    row.fidelity = std::abs(dot<Complex>(psi, emb));
    row.leakage = sector_leakage(basis, psi, reference, ref.state);
    row.norm_drift = trace.norm_drift + std::abs(norm<Complex>(psi) - 1.0);
    if (tau != current_tau) {
      H.set_tau(tau);
      current_tau = tau;
    }
    H.apply<Complex>(psi, hpsi);
    row.energy = real_of(dot<Complex>(psi, hpsi)) / abs2(norm<Complex>(psi));
    trace.rows.push_back(row);
  };
  record(tau0);

  std::size_t step = 0;
  for (int r = 1; r <= records; ++r) {
    for (std::size_t s = 0; s < steps_per_record; ++s, ++step) {
      const double t = static_cast<double>(step) * dt;
      deriv(t, psi, k);
      for (std::size_t i = 0; i < psi.size(); ++i) {
        acc[i] = psi[i] + (dt / 6.0) * k[i];
        y[i] = psi[i] + (0.5 * dt) * k[i];
      }
      deriv(t + 0.5 * dt, y, k);
      for (std::size_t i = 0; i < psi.size(); ++i) {
        acc[i] += (dt / 3.0) * k[i];
        y[i] = psi[i] + (0.5 * dt) * k[i];
      }
      deriv(t + 0.5 * dt, y, k);
      for (std::size_t i = 0; i < psi.size(); ++i) {
        acc[i] += (dt / 3.0) * k[i];
        y[i] = psi[i] + dt * k[i];
      }
      deriv(t + dt, y, k);
      for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = acc[i] + (dt / 6.0) * k[i];

      const double nrm = norm<Complex>(psi);
      const double drift = std::abs(nrm - 1.0);
      if (!(drift <= kBlowUpAbove))
        throw InstabilityError("evolve: norm changed by " + std::to_string(drift) + " in one step at t = " +
                               std::to_string(t) + "; reduce dt below " + std::to_string(dt));
      if (drift > kRenormalizeAbove) {
        scale<Complex>(psi, Complex(1.0 / nrm));
        trace.norm_drift += drift;
        ++trace.renormalizations;
      }
    }
    const double tau = options.frozen_tau ? *options.frozen_tau : r * options.record_step;
    if (!options.frozen_tau) {
      Href.set_tau(tau);
      ref = ground_state(Href, ref.state, options.lanczos);
      shift = ref.energy;
    }
    record(tau);
  }
  trace.steps = step;
  trace.norm_drift += std::abs(norm<Complex>(psi) - 1.0);
  trace.final_state = std::move(psi);
  return trace;
}

}  // namespace

double default_time_step(const EvolutionOptions& options, double spectral_radius) {
  if (options.T <= 0.0) throw std::invalid_argument("evolve: T must be positive");
  if (options.record_step <= 0.0 || options.record_step > 1.0)
    throw std::invalid_argument("evolve: record_step must lie in (0, 1]");
  double dt = options.dt > 0.0 ? options.dt : std::min(1e-3 * options.T, 0.01);
  if (spectral_radius > 0.0) dt = std::min(dt, options.stability / spectral_radius);
  const double span = options.record_step * options.T;
  const double steps = std::ceil(span / dt - 1e-9);
  return span / steps;
}

double EvolutionTrace::max_leakage() const {
  double m = 0.0;
  for (const auto& r : rows)
    for (double l : r.leakage) m = std::max(m, l);
  return m;
}

EvolutionTrace evolve(const SectorBasis& basis, const SectorBasis& reference, const ModelParams& params,
                      const PerturbationField& field, const EvolutionOptions& options) {
  const double steps = 1.0 / options.record_step;
  if (std::abs(steps - std::round(steps)) > 1e-9)
    throw std::invalid_argument("evolve: 1 / record_step must be a whole number");
  params.validate();

  // The Gershgorin width over the schedule bounds |E - shift| for any shift
  // inside the spectrum; both bounds are extremal at tau = 0 or 1.
  ToricHamiltonian probe(basis, params, field);
  double lo = 0.0, hi = 0.0;
  for (double tau : {0.0, 1.0}) {
    probe.set_tau(tau);
    const auto [a, b] = probe.spectral_bounds();
    lo = tau == 0.0 ? a : std::min(lo, a);
    hi = tau == 0.0 ? b : std::max(hi, b);
  }
  const double dt = default_time_step(options, hi - lo);

  auto trace = run_once(basis, reference, params, field, options, dt);
  if (options.check_halving) {
    const auto fine = run_once(basis, reference, params, field, options, 0.5 * dt);
    const double change = std::abs(fine.rows.back().fidelity - trace.rows.back().fidelity);
    trace.halving_change = change;
    trace.halving_fidelity = std::abs(dot<Complex>(trace.final_state, fine.final_state)) /
                             (norm<Complex>(trace.final_state) * norm<Complex>(fine.final_state));
    if (change > options.halving_tol) {
      char buf[200];
      std::snprintf(buf, sizeof buf, "evolve: halving dt = %.3e changed the final F_ad by %.3e (> %.1e); use a smaller dt",
                    dt, change, options.halving_tol);
      throw StepConvergenceError(buf);
    }
  }
  return trace;
}

std::array<double, 3> sector_leakage(const SectorBasis& basis, std::span<const Complex> psi,
                                     const SectorBasis& reference, std::span<const double> ref) {
  const auto& lat = basis.lattice();
  const Mask t1 = lat.loop_mask(LoopKind::t1x).sites, t2 = lat.loop_mask(LoopKind::t2x).sites;
  const std::array<Mask, 3> loops = {t2, t1, t1 ^ t2};  // (0,1), (1,0), (1,1)
  std::array<double, 3> out{};
  for (std::size_t l = 0; l < 3; ++l) {
    Complex s{};
    for (std::size_t m = 0; m < reference.size(); ++m) {
      const std::size_t j = basis.index_of(reference.config(m) ^ loops[l]);
      if (j != SectorBasis::npos) s += std::conj(psi[j]) * ref[m];
    }
    out[l] = std::abs(s);
  }
  return out;
}

std::optional<Dip> adiabaticity_dip(const EvolutionTrace& trace) {
  if (trace.rows.empty()) return std::nullopt;
  const auto [lo, hi] = std::minmax_element(trace.rows.begin(), trace.rows.end(),
                                            [](const auto& a, const auto& b) { return a.fidelity < b.fidelity; });
  if (hi->fidelity - lo->fidelity < 1e-12) return std::nullopt;
  return Dip{lo->tau, lo->fidelity};
}

void write_csv(std::ostream& out, const EvolutionTrace& trace) {
  out << "tau,F_ad,leak_01,leak_10,leak_11,norm_drift,energy\n";
  char buf[256];
  for (const auto& r : trace.rows) {
    std::snprintf(buf, sizeof buf, "%.10g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.tau, r.fidelity, r.leakage[0],
                  r.leakage[1], r.leakage[2], r.norm_drift, r.energy);
    out << buf;
  }
}

}  // namespace toric
