#pragma once

// Small dense vector/matrix helpers shared by the solver, observables and
// dynamics code. Vectors are plain std::vector; kernels take spans.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace toric {

using Complex = std::complex<double>;
using RealVector = std::vector<double>;
using ComplexVector = std::vector<Complex>;

template <class T>
struct is_complex : std::false_type {};
template <class T>
struct is_complex<std::complex<T>> : std::true_type {};
template <class T>
inline constexpr bool is_complex_v = is_complex<T>::value;

template <class T>
[[nodiscard]] inline T conj_of(const T& x) noexcept {
  if constexpr (is_complex_v<T>) {
    return std::conj(x);
  } else {
    return x;
  }
}

template <class T>
[[nodiscard]] inline double abs2(const T& x) noexcept {
  if constexpr (is_complex_v<T>) {
    return std::norm(x);
  } else {
    return x * x;
  }
}

template <class T>
[[nodiscard]] inline double real_of(const T& x) noexcept {
  if constexpr (is_complex_v<T>) {
    return x.real();
  } else {
    return x;
  }
}

/// <a|b> with the first argument conjugated.
template <class T>
[[nodiscard]] T dot(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  T s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += conj_of(a[i]) * b[i];
  return s;
}

template <class T>
[[nodiscard]] double norm(std::span<const T> a) {
  double s = 0.0;
  for (const auto& x : a) s += abs2(x);
  return std::sqrt(s);
}

template <class T>
void scale(std::span<T> a, T factor) {
  for (auto& x : a) x *= factor;
}

/// y += alpha * x
template <class T>
void axpy(T alpha, std::span<const T> x, std::span<T> y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// Normalizes in place and returns the norm it had.
template <class T>
double normalize(std::span<T> a) {
  const double nrm = norm<T>(a);
  if (nrm == 0.0) throw std::invalid_argument("normalize: zero vector");
  scale<T>(a, T(1.0 / nrm));
  return nrm;
}

template <class T>
[[nodiscard]] std::vector<Complex> to_complex(std::span<const T> a) {
  return std::vector<Complex>(a.begin(), a.end());
}

/// Row-major dense matrix.
template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
  [[nodiscard]] std::size_t cols() const noexcept { return cols_; }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  [[nodiscard]] std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  [[nodiscard]] std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  [[nodiscard]] T* data() noexcept { return data_.data(); }
  [[nodiscard]] const T* data() const noexcept { return data_.data(); }

  [[nodiscard]] T trace() const {
    T t{};
    for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
    return t;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// max |M - M^dagger| over entries.
template <class T>
[[nodiscard]] double hermiticity_error(const Matrix<T>& m) {
  double err = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = i; j < m.cols(); ++j)
      err = std::max(err, std::abs(m(i, j) - conj_of(m(j, i))));
  return err;
}

/// Frobenius norm.
template <class T>
[[nodiscard]] double frobenius_norm(const Matrix<T>& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) s += abs2(m(i, j));
  return std::sqrt(s);
}

}  // namespace toric
