#pragma once

// Eigensolvers. Lanczos with full reorthogonalization for the lowest
// eigenpairs of matrix-free operators; Householder tridiagonalization with
// implicit-shift QL for small dense hermitian matrices.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "toric/basis.hpp"
#include "toric/linalg.hpp"
#include "toric/model.hpp"

namespace toric {

template <class T>
using LinearOperator = std::function<void(std::span<const T>, std::span<T>)>;

template <class T>
struct EigenResult {
  std::vector<double> energies;  // ascending
  std::vector<std::vector<T>> states;
  std::vector<double> residuals;  // ||H x - E x||
  int iterations = 0;             // operator applications
  bool degenerate = false;        // E1 - E0 below the degeneracy threshold

  [[nodiscard]] double gap() const;
};

struct LanczosOptions {
  int count = 1;
  double tol = 1e-10;
  int max_krylov = 60;   // basis size that triggers a thick restart
  int keep = 20;         // Ritz vectors carried across a restart
  int max_restarts = 200;
  int check_interval = 5;
  double degeneracy_threshold = 1e-8;
};

class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double best_residual)
      : std::runtime_error(what), best_residual_(best_residual) {}
  [[nodiscard]] double best_residual() const noexcept { return best_residual_; }

 private:
  double best_residual_;
};

/// Fixed pseudo-random start vector, identical on every call for a given
/// (dim, salt). Each deflated pair uses its own salt so that degenerate
/// partners of earlier pairs stay reachable.
template <class T>
[[nodiscard]] std::vector<T> default_start_vector(std::size_t dim, std::uint64_t salt = 0);

/// Lowest `options.count` eigenpairs. seeds[j], when present, starts the
/// search for pair j; states found earlier are deflated out of every Krylov
/// space. Throws ConvergenceError when the residual never reaches tol.
template <class T>
[[nodiscard]] EigenResult<T> lanczos_lowest(const LinearOperator<T>& op, std::size_t dim,
                                            const std::vector<std::vector<T>>& seeds = {},
                                            const LanczosOptions& options = {});

/// Eigenvalues of a real symmetric tridiagonal matrix (diag d, sub-diagonal e
/// with e.size() == d.size() - 1) sorted ascending. For every index in
/// `tracked_rows` the matching row of the eigenvector matrix is returned, in
/// the same column order.
struct TridiagonalEigen {
  std::vector<double> values;
  std::vector<std::vector<double>> rows;
};
[[nodiscard]] TridiagonalEigen tridiagonal_eig(std::vector<double> d, std::vector<double> e,
                                               const std::vector<std::size_t>& tracked_rows);

template <class T>
struct DenseEigen {
  std::vector<double> values;  // ascending
  Matrix<T> vectors;           // column j pairs with values[j]; empty without vectors
};

inline constexpr std::size_t kDenseLimit = 4096;

/// Throws std::length_error above kDenseLimit and std::invalid_argument when
/// the input is not hermitian to 1e-12 relative to its norm.
template <class T>
[[nodiscard]] DenseEigen<T> dense_symmetric_eig(const Matrix<T>& m, bool want_vectors = true);

/// Dense matrix of an operator, column by column.
template <class T>
[[nodiscard]] Matrix<T> dense_matrix(const LinearOperator<T>& op, std::size_t dim);

struct GapSeries {
  std::vector<double> taus;
  std::vector<double> gaps;
  std::vector<double> ground_energies;
  double min_gap = 0.0;
  double argmin_tau = 0.0;
};

/// E1 - E0 of H0(tau) within the basis at every grid point, seeded along the grid.
[[nodiscard]] GapSeries gap_series(const SectorBasis& basis, const ModelParams& params, const std::vector<double>& taus,
                                   const LanczosOptions& options = {});

}  // namespace toric
