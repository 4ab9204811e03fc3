#pragma once

// Schedule dynamics i dpsi/dt = H(t/T) psi with fixed-step RK4 (hbar = 1).
//
// The state lives on an evolution basis (a winding sector, or the full space
// when the field breaks star symmetry). Fidelity and leakage are measured
// against the instantaneous ground state of H(tau) restricted to a reference
// sector contained in that basis, found by Lanczos seeded along the sweep.

#include <array>
#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "toric/basis.hpp"
#include "toric/linalg.hpp"
#include "toric/model.hpp"
#include "toric/solver.hpp"

namespace toric {

struct EvolutionOptions {
  double T = 20.0;
  double dt = 0.0;            // 0 selects the default step
  double record_step = 0.01;  // tau spacing of recorded rows
  double stability = 0.5;     // cap on dt * (spectral radius of H - shift)
  bool check_halving = false;
  double halving_tol = 1e-6;   // allowed change of the final F_ad under dt/2
  std::optional<double> frozen_tau;  // hold H fixed and start in its ground state
  LanczosOptions lanczos;
};

/// min(1e-3 T, 0.01), further capped at stability / spectral_radius and
/// shrunk so that record_step * T is a whole number of steps.
[[nodiscard]] double default_time_step(const EvolutionOptions& options, double spectral_radius);

struct EvolutionRow {
  double tau = 0.0;
  double fidelity = 0.0;                 // |<psi(t)|psi_0(tau)>|
  std::array<double, 3> leakage{};       // (i,j) = (0,1), (1,0), (1,1)
  double norm_drift = 0.0;               // cumulative up to this row
  double energy = 0.0;                   // <psi(t)|H(tau)|psi(t)>
};

struct EvolutionTrace {
  double T = 0.0;
  double dt = 0.0;
  std::size_t steps = 0;
  std::vector<EvolutionRow> rows;
  double norm_drift = 0.0;
  int renormalizations = 0;
  std::vector<Complex> final_state;
  std::optional<double> halving_change;    // |F_ad(dt) - F_ad(dt/2)| at the end
  std::optional<double> halving_fidelity;  // |<psi_dt|psi_dt/2>| at the end

  [[nodiscard]] double max_leakage() const;
};

class InstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StepConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Evolves from the exact ground state at tau = 0 (the vacuum when the
/// field is empty, Lanczos otherwise) to tau = 1. `reference` must be
/// contained in `basis`. The norm is restored whenever it drifts by more
/// than 1e-9; a drift above 1e-3 in one step throws InstabilityError. With
/// check_halving the run is repeated at dt/2 and StepConvergenceError is
/// thrown when the final F_ad moves by more than halving_tol.
[[nodiscard]] EvolutionTrace evolve(const SectorBasis& basis, const SectorBasis& reference, const ModelParams& params,
                                    const PerturbationField& field, const EvolutionOptions& options);

/// |<psi| t1x^i t2x^j |ref>| for (i,j) = (0,1), (1,0), (1,1). `ref` is over
/// `reference`, `psi` over `basis`; flipped configurations missing from
/// `basis` contribute zero.
[[nodiscard]] std::array<double, 3> sector_leakage(const SectorBasis& basis, std::span<const Complex> psi,
                                                   const SectorBasis& reference, std::span<const double> ref);

struct Dip {
  double tau = 0.0;
  double fidelity = 0.0;
};

/// Location and value of the minimum F_ad; empty when F_ad is constant to 1e-12.
[[nodiscard]] std::optional<Dip> adiabaticity_dip(const EvolutionTrace& trace);

/// Columns: tau,F_ad,leak_01,leak_10,leak_11,norm_drift,energy.
void write_csv(std::ostream& out, const EvolutionTrace& trace);

}  // namespace toric
