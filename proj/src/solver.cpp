#include "toric/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <string>

namespace toric {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Removes the components of w along every vector in the given sets:
/// classical Gram-Schmidt in cache-sized chunks, repeated once when the first
/// pass cancels most of w.
template <class T>
void orthogonalize(std::span<T> w, std::initializer_list<const std::vector<std::vector<T>>*> sets) {
  std::vector<const T*> basis;
  for (const auto* set : sets)
    for (const auto& v : *set) basis.push_back(v.data());
  if (basis.empty()) return;
  constexpr std::size_t chunk = 512;
  const std::size_t n = w.size();
  std::vector<T> coeff(basis.size());
  for (int pass = 0; pass < 2; ++pass) {
    const double before = norm<T>(w);
    std::fill(coeff.begin(), coeff.end(), T{});
    for (std::size_t lo = 0; lo < n; lo += chunk) {
      const std::size_t hi = std::min(n, lo + chunk);
      for (std::size_t b = 0; b < basis.size(); ++b) {
        const T* v = basis[b];
        T s{};
        for (std::size_t i = lo; i < hi; ++i) s += conj_of(v[i]) * w[i];
        coeff[b] += s;
      }
    }
    for (std::size_t lo = 0; lo < n; lo += chunk) {
      const std::size_t hi = std::min(n, lo + chunk);
      for (std::size_t b = 0; b < basis.size(); ++b) {
        const T* v = basis[b];
        const T c = coeff[b];
        for (std::size_t i = lo; i < hi; ++i) w[i] -= c * v[i];
      }
    }
    if (norm<T>(w) > 0.7 * before) break;
  }
}

/// out[c] = sum_i coeff(i, c) basis[i] for c < out.size(), one chunked sweep.
template <class T>
void combine(const std::vector<std::vector<T>>& basis, const Matrix<double>& coeff, std::size_t rows,
             std::vector<std::vector<T>>& out) {
  constexpr std::size_t chunk = 512;
  const std::size_t n = basis.front().size();
  for (auto& o : out) o.assign(n, T{});
  for (std::size_t lo = 0; lo < n; lo += chunk) {
    const std::size_t hi = std::min(n, lo + chunk);
    for (std::size_t i = 0; i < rows; ++i) {
      const T* v = basis[i].data();
      for (std::size_t c = 0; c < out.size(); ++c) {
        const double k = coeff(i, c);
        T* o = out[c].data();
        for (std::size_t x = lo; x < hi; ++x) o[x] += k * v[x];
      }
    }
  }
}

template <class T>
void orthogonalize(std::span<T> w, const std::vector<std::vector<T>>& basis) {
  orthogonalize<T>(w, {&basis});
}

std::string format_residual(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", r);
  return buf;
}

template <class T>
double residual_norm(std::span<const T> hx, std::span<const T> x, double theta) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += abs2(hx[i] - theta * x[i]);
  return std::sqrt(s);
}

}  // namespace

template <class T>
double EigenResult<T>::gap() const {
  if (energies.size() < 2) throw std::logic_error("EigenResult::gap: fewer than two eigenvalues");
  return energies[1] - energies[0];
}

template <class T>
std::vector<T> default_start_vector(std::size_t dim, std::uint64_t salt) {
  std::vector<T> v(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const double u = static_cast<double>(splitmix64(i ^ (salt << 40)) >> 11) * 0x1.0p-53;
    v[i] = T(u - 0.25);
  }
  normalize<T>(v);
  return v;
}

TridiagonalEigen tridiagonal_eig(std::vector<double> d, std::vector<double> e,
                                 const std::vector<std::size_t>& tracked_rows) {
  const std::size_t n = d.size();
  if (n == 0) return {};
  if (e.size() + 1 != n) throw std::invalid_argument("tridiagonal_eig: need n-1 off-diagonal entries");
  e.push_back(0.0);
  std::vector<std::vector<double>> z(tracked_rows.size(), std::vector<double>(n, 0.0));
  for (std::size_t t = 0; t < tracked_rows.size(); ++t) {
    if (tracked_rows[t] >= n) throw std::out_of_range("tridiagonal_eig: tracked row out of range");
    z[t][tracked_rows[t]] = 1.0;
  }

  // Off-diagonals below eps * ||T|| are noise: without this floor a cluster
  // of numerically zero eigenvalues (rank-deficient density matrices) never
  // meets the purely relative test.
  double anorm = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    anorm = std::max(anorm, std::abs(d[i]) + std::abs(e[i]) + (i > 0 ? std::abs(e[i - 1]) : 0.0));
  const double floor = std::numeric_limits<double>::epsilon() * anorm;

  // Implicit-shift QL; each rotation mixes columns i and i+1 of the
  // eigenvector matrix, so only the tracked rows need updating.
  for (std::size_t l = 0; l < n; ++l) {
    int iter = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd || std::abs(e[m]) <= floor) break;
      }
      if (m == l) break;
      if (++iter > 100) throw ConvergenceError("tridiagonal_eig: QL iteration did not converge", std::abs(e[l]));
      double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
      double r = std::hypot(g, 1.0);
      g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
      double s = 1.0, c = 1.0, p = 0.0;
      bool underflow = false;
      for (std::size_t ii = m; ii-- > l;) {
        const double f = s * e[ii];
        const double b = c * e[ii];
        r = std::hypot(f, g);
        e[ii + 1] = r;
        if (r == 0.0) {
          d[ii + 1] -= p;
          e[m] = 0.0;
          underflow = true;
          break;
        }
        s = f / r;
        c = g / r;
        g = d[ii + 1] - p;
        r = (d[ii] - g) * s + 2.0 * c * b;
        p = s * r;
        d[ii + 1] = g + p;
        g = c * r - b;
        for (auto& row : z) {
          const double zf = row[ii + 1];
          row[ii + 1] = s * row[ii] + c * zf;
          row[ii] = c * row[ii] - s * zf;
        }
      }
      if (underflow) continue;
      d[l] -= p;
      e[l] = g;
      e[m] = 0.0;
    } while (m != l);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
  TridiagonalEigen out;
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = d[order[i]];
  out.rows.resize(z.size());
  for (std::size_t t = 0; t < z.size(); ++t) {
    out.rows[t].resize(n);
    for (std::size_t i = 0; i < n; ++i) out.rows[t][i] = z[t][order[i]];
  }
  return out;
}

template <class T>
EigenResult<T> lanczos_lowest(const LinearOperator<T>& op, std::size_t dim, const std::vector<std::vector<T>>& seeds,
                              const LanczosOptions& o) {
  if (dim == 0) throw std::invalid_argument("lanczos_lowest: empty space");
  if (o.count < 1 || static_cast<std::size_t>(o.count) > dim)
    throw std::invalid_argument("lanczos_lowest: count must lie in [1, dim]");
  if (o.max_krylov < 2) throw std::invalid_argument("lanczos_lowest: max_krylov must be at least 2");

  EigenResult<T> res;
  std::vector<T> w(dim), hx(dim);
  std::vector<std::vector<T>> V;

  for (int j = 0; j < o.count; ++j) {
    std::vector<T> start;
    if (static_cast<std::size_t>(j) < seeds.size() && !seeds[j].empty()) {
      if (seeds[j].size() != dim) throw std::invalid_argument("lanczos_lowest: seed size mismatch");
      if (norm<T>(seeds[j]) == 0.0) throw std::invalid_argument("lanczos_lowest: zero seed vector");
      start = seeds[j];
    } else {
      start = default_start_vector<T>(dim, j);
    }
    const double start_norm = norm<T>(start);
    orthogonalize<T>(start, res.states);
    if (norm<T>(start) < 1e-8 * start_norm) {
      start = default_start_vector<T>(dim, j + 1000);
      orthogonalize<T>(start, res.states);
    }
    for (std::size_t probe = 0; norm<T>(start) < 1e-8 && probe < dim; ++probe) {
      start.assign(dim, T{});
      start[probe] = T(1);
      orthogonalize<T>(start, res.states);
    }
    normalize<T>(start);

    const std::size_t room = dim - res.states.size();
    const std::size_t mmax = std::min<std::size_t>(static_cast<std::size_t>(o.max_krylov), room);
    // Pairs that later pairs are deflated against aim lower: their error
    // enters every later residual. The requested tol still suffices once the
    // Krylov estimate says the rounding floor has been reached.
    const double target = j + 1 < o.count ? 0.01 * o.tol : o.tol;
    double best = std::numeric_limits<double>::infinity();
    bool converged = false;

    // Krylov recurrences run on H - sigma with sigma the Rayleigh quotient of
    // the start vector. Without the shift a large constant diagonal (the
    // star energy) dominates every dot product and its rounding sets the
    // residual floor.
    auto shifted = [&](std::span<const T> in, std::span<T> out, double sigma) {
      op(in, out);
      ++res.iterations;
      axpy<T>(T(-sigma), in, out);
    };
    op(start, w);
    ++res.iterations;
    double sigma = real_of(dot<T>(start, w));

    // Thick restart: when the basis is full, the `keep` lowest Ritz vectors
    // and the current residual direction start the next cycle, so the
    // projected matrix becomes an arrowhead block followed by the usual
    // tridiagonal recurrence. Every new direction is reorthogonalized against
    // the whole basis and all converged pairs.
    const std::size_t keep = std::clamp<std::size_t>(static_cast<std::size_t>(o.keep), 1, std::max<std::size_t>(mmax, 2) - 1);
    Matrix<double> tm(mmax, mmax);
    V.clear();
    V.push_back(start);
    int restarts = 0;
    while (!converged) {
      const std::size_t jv = V.size() - 1;
      shifted(V[jv], w, sigma);
      const double a = real_of(dot<T>(V[jv], w));
      tm(jv, jv) = a;
      axpy<T>(T(-a), V[jv], w);
      for (std::size_t i = 0; i < jv; ++i)
        if (tm(jv, i) != 0.0) axpy<T>(T(-tm(jv, i)), V[i], w);
      orthogonalize<T>(w, {&res.states, &V});
      const double b = norm<T>(w);
      const std::size_t n = jv + 1;
      const bool breakdown = b <= 1e-12 * std::max(1.0, std::abs(a) + std::abs(sigma));
      const bool no_room = n >= room || breakdown;
      const bool full = n >= mmax;

      if (no_room || full || n % static_cast<std::size_t>(o.check_interval) == 0) {
        Matrix<double> sub(n, n);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < n; ++c) sub(r, c) = tm(r, c);
        const auto ev = dense_symmetric_eig(sub, true);
        const double estimate = b * std::abs(ev.vectors(n - 1, 0));
        const bool at_floor = estimate < 0.1 * target;
        if (at_floor || no_room) {
          std::vector<std::vector<T>> ritz(1);
          combine<T>(V, ev.vectors, n, ritz);
          std::vector<T> x = std::move(ritz[0]);
          orthogonalize<T>(x, res.states);
          normalize<T>(x);
          shifted(x, hx, sigma);
          const double theta_shifted = real_of(dot<T>(x, hx));
          const double r = residual_norm<T>(hx, x, theta_shifted);
          best = std::min(best, r);
          if (r < o.tol) {
            res.energies.push_back(theta_shifted + sigma);
            res.states.push_back(std::move(x));
            res.residuals.push_back(r);
            converged = true;
            break;
          }
          if (no_room) {
            if (++restarts > o.max_restarts) break;
            sigma += theta_shifted;
            tm = Matrix<double>(mmax, mmax);
            V.clear();
            V.push_back(std::move(x));
            continue;
          }
        }
        if (full) {
          if (++restarts > o.max_restarts) break;
          const std::size_t kk = std::min(keep, n - 1);
          std::vector<std::vector<T>> kept(kk);
          combine<T>(V, ev.vectors, n, kept);
          tm = Matrix<double>(mmax, mmax);
          for (std::size_t c = 0; c < kk; ++c) {
            tm(c, c) = ev.values[c];
            tm(kk, c) = tm(c, kk) = b * ev.vectors(n - 1, c);
          }
          V = std::move(kept);
          for (auto& wi : w) wi *= T(1.0 / b);
          V.push_back(w);
          continue;
        }
      }
      tm(n, jv) = tm(jv, n) = b;
      for (auto& wi : w) wi *= T(1.0 / b);
      V.push_back(w);
    }
    if (!converged)
      throw ConvergenceError("lanczos_lowest: eigenpair " + std::to_string(j) + " not converged, best residual " +
                                 format_residual(best),
                             best);
  }

  // Deflated pairs come out in order only up to near-degeneracies; sort.
  std::vector<std::size_t> order(res.energies.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return res.energies[a] < res.energies[b]; });
  EigenResult<T> sorted;
  sorted.iterations = res.iterations;
  for (auto i : order) {
    sorted.energies.push_back(res.energies[i]);
    sorted.states.push_back(std::move(res.states[i]));
    sorted.residuals.push_back(res.residuals[i]);
  }
  sorted.degenerate = sorted.energies.size() >= 2 && sorted.energies[1] - sorted.energies[0] < o.degeneracy_threshold;
  return sorted;
}

template <class T>
DenseEigen<T> dense_symmetric_eig(const Matrix<T>& input, bool want_vectors) {
  const std::size_t n = input.rows();
  if (input.cols() != n) throw std::invalid_argument("dense_symmetric_eig: matrix not square");
  if (n > kDenseLimit)
    throw std::length_error("dense_symmetric_eig: dimension " + std::to_string(n) + " exceeds the dense limit of " +
                            std::to_string(kDenseLimit));
  DenseEigen<T> out;
  if (n == 0) return out;
  if (hermiticity_error(input) > 1e-12 * std::max(1.0, frobenius_norm(input)))
    throw std::invalid_argument("dense_symmetric_eig: matrix is not hermitian");

  Matrix<T> a = input;
  Matrix<T> q = want_vectors ? Matrix<T>::identity(n) : Matrix<T>();
  std::vector<T> v(n), p(n), wv(n);

  // Householder: H = I - 2 v v^dagger maps column k below the diagonal onto
  // alpha e_1; the trailing block updates as A - 2 v w^dagger - 2 w v^dagger.
  for (std::size_t k = 0; k + 2 < n; ++k) {
    const std::size_t len = n - k - 1;
    double tail = 0.0;
    for (std::size_t i = k + 2; i < n; ++i) tail += abs2(a(i, k));
    if (tail == 0.0) continue;
    const T x0 = a(k + 1, k);
    const double xnorm = std::sqrt(tail + abs2(x0));
    const T phase = std::abs(x0) > 0.0 ? x0 / std::abs(x0) : T(1);
    const T alpha = -phase * xnorm;
    for (std::size_t i = 0; i < len; ++i) v[i] = a(k + 1 + i, k);
    v[0] -= alpha;
    normalize<T>(std::span<T>(v.data(), len));

    for (std::size_t i = 0; i < len; ++i) {
      T s{};
      for (std::size_t jj = 0; jj < len; ++jj) s += a(k + 1 + i, k + 1 + jj) * v[jj];
      p[i] = s;
    }
    double c = 0.0;
    for (std::size_t i = 0; i < len; ++i) c += real_of(conj_of(v[i]) * p[i]);
    for (std::size_t i = 0; i < len; ++i) wv[i] = p[i] - c * v[i];
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t jj = 0; jj < len; ++jj)
        a(k + 1 + i, k + 1 + jj) -= T(2) * (v[i] * conj_of(wv[jj]) + wv[i] * conj_of(v[jj]));
    a(k + 1, k) = alpha;
    a(k, k + 1) = conj_of(alpha);
    for (std::size_t i = k + 2; i < n; ++i) a(i, k) = a(k, i) = T{};

    if (want_vectors) {
      for (std::size_t r = 0; r < n; ++r) {
        T s{};
        for (std::size_t jj = 0; jj < len; ++jj) s += q(r, k + 1 + jj) * v[jj];
        for (std::size_t jj = 0; jj < len; ++jj) q(r, k + 1 + jj) -= T(2) * s * conj_of(v[jj]);
      }
    }
  }

  // Diagonal phases make the off-diagonal real: T = D T_real D^dagger.
  std::vector<double> d(n), e(n - 1);
  std::vector<T> phi(n, T(1));
  for (std::size_t i = 0; i < n; ++i) d[i] = real_of(a(i, i));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const T sub = a(i + 1, i);
    e[i] = std::abs(sub);
    phi[i + 1] = e[i] > 0.0 ? phi[i] * sub / e[i] : phi[i];
  }

  std::vector<std::size_t> rows;
  if (want_vectors) {
    rows.resize(n);
    std::iota(rows.begin(), rows.end(), 0);
  }
  const auto tri = tridiagonal_eig(d, e, rows);
  out.values = tri.values;
  if (want_vectors) {
    out.vectors = Matrix<T>(n, n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        const T qd = q(r, c) * phi[c];
        if (qd == T{}) continue;
        for (std::size_t jj = 0; jj < n; ++jj) out.vectors(r, jj) += qd * tri.rows[c][jj];
      }
  }
  return out;
}

template <class T>
Matrix<T> dense_matrix(const LinearOperator<T>& op, std::size_t dim) {
  if (dim > kDenseLimit) throw std::length_error("dense_matrix: dimension exceeds the dense limit");
  Matrix<T> m(dim, dim);
  std::vector<T> e(dim), col(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    std::fill(e.begin(), e.end(), T{});
    e[j] = T(1);
    op(e, col);
    for (std::size_t i = 0; i < dim; ++i) m(i, j) = col[i];
  }
  return m;
}

GapSeries gap_series(const SectorBasis& basis, const ModelParams& params, const std::vector<double>& taus,
                     const LanczosOptions& options) {
  GapSeries out;
  ToricHamiltonian H(basis, params);
  LinearOperator<double> op = [&H](std::span<const double> in, std::span<double> o) { H.apply<double>(in, o); };
  LanczosOptions opt = options;
  opt.count = 2;
  std::vector<std::vector<double>> seeds;
  out.min_gap = std::numeric_limits<double>::infinity();
  for (double tau : taus) {
    H.set_tau(tau);
    auto r = lanczos_lowest<double>(op, basis.size(), seeds, opt);
    out.taus.push_back(tau);
    out.gaps.push_back(r.gap());
    out.ground_energies.push_back(r.energies[0]);
    if (r.gap() < out.min_gap) {
      out.min_gap = r.gap();
      out.argmin_tau = tau;
    }
    seeds = std::move(r.states);
  }
  return out;
}

template struct EigenResult<double>;
template struct EigenResult<Complex>;
template std::vector<double> default_start_vector<double>(std::size_t, std::uint64_t);
template std::vector<Complex> default_start_vector<Complex>(std::size_t, std::uint64_t);
template EigenResult<double> lanczos_lowest(const LinearOperator<double>&, std::size_t,
                                            const std::vector<std::vector<double>>&, const LanczosOptions&);
template EigenResult<Complex> lanczos_lowest(const LinearOperator<Complex>&, std::size_t,
                                             const std::vector<std::vector<Complex>>&, const LanczosOptions&);
template DenseEigen<double> dense_symmetric_eig(const Matrix<double>&, bool);
template DenseEigen<Complex> dense_symmetric_eig(const Matrix<Complex>&, bool);
template Matrix<double> dense_matrix(const LinearOperator<double>&, std::size_t);
template Matrix<Complex> dense_matrix(const LinearOperator<Complex>&, std::size_t);

}  // namespace toric
