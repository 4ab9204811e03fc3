#pragma once

// Experiment orchestration: seeded tau sweeps, perturbation ensembles,
// dynamics campaigns, the Ising control and the validation table.
//
// Every run writes <name>.csv and a <name>.json sidecar into the output
// directory. A sidecar with "complete": true and an identical config makes
// the run a cache hit; sweeps additionally keep <name>.partial.csv and a
// binary <name>.state checkpoint so an interrupted sweep resumes at the
// first unfinished tau and produces the same bytes as an uninterrupted one.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "toric/basis.hpp"
#include "toric/dynamics.hpp"
#include "toric/lattice.hpp"
#include "toric/model.hpp"
#include "toric/observables.hpp"
#include "toric/solver.hpp"

namespace toric {

enum class ExperimentKind { sweep, ensemble, dynamics, ising_control, validate };

[[nodiscard]] std::string to_string(ExperimentKind kind);
[[nodiscard]] ExperimentKind parse_experiment_kind(const std::string& text);

enum class Observable { energy, gap, block_entropy, fidelity, overlap, wilson, topological, magnetization };

[[nodiscard]] std::string to_string(Observable o);
[[nodiscard]] Observable parse_observable(const std::string& text);
[[nodiscard]] std::vector<Observable> all_observables();

struct TauGrid {
  double start = 0.0;
  double stop = 1.0;
  double step = 0.01;

  /// start + i * step; throws std::invalid_argument unless step > 0 and the
  /// span is a whole number of steps inside [0, 1].
  [[nodiscard]] std::vector<double> points() const;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::sweep;
  int k = 3;
  std::optional<SectorId> sector;  // empty: winding00, or decoded00 when the field has x terms
  TauGrid grid;
  std::vector<Observable> observables = all_observables();
  ModelParams model;
  double P = 0.0;
  HzMode hz_mode = HzMode::zero;
  int realizations = 20;
  std::vector<double> T_list = {20.0, 40.0, 60.0};
  double dt = 0.0;  // 0 selects the dynamics default
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  int workers = 1;
  int ising_L = 4;
  LanczosOptions lanczos;
  /// Leaves a sweep interrupted after this many newly computed rows (0: never),
  /// exactly as a crash after the checkpoint write would. Not part of the
  /// cache fingerprint.
  std::size_t stop_after_rows = 0;

  /// Throws std::invalid_argument on any violated invariant.
  void validate() const;
  [[nodiscard]] bool wants(Observable o) const;
  [[nodiscard]] bool perturbed() const noexcept { return P > 0.0 || hz_mode != HzMode::zero; }
  /// Basis used for a field with (has_x) or without x terms.
  [[nodiscard]] SectorId sector_for(bool has_x) const;
};

[[nodiscard]] nlohmann::json to_json(const ExperimentConfig& config);
[[nodiscard]] ExperimentConfig config_from_json(const nlohmann::json& j);

/// One tau row. Quantities not requested, or undefined at this row, are NaN.
struct SweepRow {
  double tau = 0.0;
  double energy = 0.0;     // E0 / n
  double d2_energy = 0.0;  // d^2 (E0 / n) / dtau^2
  double s_v = 0.0;        // plaquette block entropy, bits
  double ds_v = 0.0;
  double fidelity = 0.0;   // |<psi(tau)|psi(tau - dtau)>|, NaN on the first row
  double overlap = 0.0;    // |<psi(tau)|psi_ideal(tau)>|, 1 without a field
  std::vector<double> wilson;
  double s_top = 0.0;
  double ds_top = 0.0;
  double m_z = 0.0;
  double gap = 0.0;        // E1 - E0 within the basis
  int iterations = 0;
  double residual = 0.0;
  std::string status = "ok";  // solver failure text when the row failed
};

struct CriticalReport {
  std::optional<Peak> energy;    // peak of |d2_energy|
  std::optional<Peak> fidelity;  // peak of 1 - F
  std::optional<Peak> entropy;   // peak of ds_top
  std::optional<Peak> block;     // peak of |ds_v|
  double spread = 0.0;           // largest disagreement among the three tau_c detectors
  bool disagree = false;         // spread > kDetectorTolerance
};

inline constexpr double kDetectorTolerance = 0.02;

struct SweepResult {
  std::string name;
  std::vector<std::string> wilson_names;
  std::vector<SweepRow> rows;       // mean rows for ensembles
  std::vector<SweepRow> deviation;  // per-row stddev for ensembles, empty otherwise
  CriticalReport report;
  std::vector<std::uint64_t> seeds;
  std::size_t dimension = 0;
  bool from_cache = false;
  bool complete = true;  // false only for an interrupted sweep

  [[nodiscard]] std::vector<double> taus() const;
  [[nodiscard]] std::vector<double> column(double SweepRow::*member) const;
};

[[nodiscard]] CriticalReport critical_report(const std::vector<SweepRow>& rows);
[[nodiscard]] nlohmann::json to_json(const CriticalReport& report);

/// Face blocks measured at lattice size k: 1x1, 2x1, 2x2, 3x2, 3x3 kept when
/// both sides are below k.
[[nodiscard]] std::vector<FaceBlock> wilson_blocks(const TorusLattice& lat);

/// Ground-state sweep for `field` (empty for H0). Rows are appended to disk as
/// they finish; a matching checkpoint resumes the sweep. Solver failures mark
/// the row and the sweep continues from the last good state.
[[nodiscard]] SweepResult run_sweep(const ExperimentConfig& config, const PerturbationField& field = {},
                                    const std::string& name = "");

/// `realizations` sweeps with fields drawn from derive_seed(seed, r), run on
/// up to `workers` threads, reduced to mean and stddev. Derivative columns of
/// the mean rows are derivatives of the mean series.
[[nodiscard]] SweepResult run_ensemble(const ExperimentConfig& config);

struct DynamicsRun {
  double T = 0.0;
  int realization = -1;  // -1 for the unperturbed schedule
  std::uint64_t seed = 0;
  EvolutionTrace trace;
  std::optional<Dip> dip;
  double max_ideal_deviation = 0.0;  // max |F_ad - F_ad(ideal)|, perturbed runs only
};

/// One trace per T (times realizations when perturbed). k = 3 unperturbed
/// runs in winding00; perturbed runs require k = 2 and use the full space
/// with the decoded00 reference.
[[nodiscard]] std::vector<DynamicsRun> run_dynamics(const ExperimentConfig& config);

/// Transverse-field Ising sweep on the ising_L vertex torus, solved in the
/// even sector of the global spin flip. Only energy, gap, block_entropy,
/// fidelity and topological apply; the remaining columns are NaN.
[[nodiscard]] SweepResult run_ising_control(const ExperimentConfig& config);

struct ValidationCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Oracle and property checks; scratch files go under `scratch`.
[[nodiscard]] std::vector<ValidationCheck> validate(const std::filesystem::path& scratch);

/// CSV writers. Sweep columns: tau,energy,d2_energy,s_v,ds_v,fidelity,overlap,
/// W_<block>...,s_top,ds_top,m_z,gap,residual,iterations,status. Ensembles
/// write <col>_mean,<col>_std for every numeric column, the summed
/// iterations, and status "failed:<count>" when realizations failed.
void write_sweep_csv(std::ostream& out, const SweepResult& result);

}  // namespace toric
