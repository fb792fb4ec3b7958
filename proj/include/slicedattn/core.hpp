#pragma once

// Small shared pieces: a flat row-major matrix, the error taxonomy used by
// every module, seeded RNG helpers, and a minimal parallel-for.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace slicedattn {

// ---------------------------------------------------------------------------
// Errors. The CLI maps these onto process exit codes, everything else just
// propagates them.

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable or malformed input files.
struct ParseError : Error {
  using Error::Error;
};

// Inconsistent dimensions between inputs and parameters.
struct ShapeError : Error {
  using Error::Error;
};

// A valid object used in a mode it does not support.
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

// Domain precondition violated (unsorted scan input, duplicate sequences,
// zero-sum constraint broken, ...).
struct InputError : Error {
  using Error::Error;
};

// A condition the algorithms themselves should have made impossible.
struct InternalError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Matrix

template <class T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  T* row(std::size_t r) { return data.data() + r * cols; }
  const T* row(std::size_t r) const { return data.data() + r * cols; }

  bool empty() const { return rows == 0 || cols == 0; }

  bool operator==(const Matrix& o) const {
    return rows == o.rows && cols == o.cols && data == o.data;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }
};

// Token sequences are plain n x d matrices, one token per row.
template <class T>
using TokenSequence = Matrix<T>;

template <class T>
bool all_finite(const Matrix<T>& m) {
  for (const T& v : m.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <class T>
bool all_finite(const std::vector<T>& v) {
  for (const T& x : v)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

template <class T>
void validate_tokens(const TokenSequence<T>& seq, const char* what = "tokens") {
  if (seq.rows == 0) throw ShapeError(std::string(what) + ": empty input (n = 0)");
  if (seq.cols == 0) throw ShapeError(std::string(what) + ": embedding dimension is 0");
  if (!all_finite(seq)) throw NumericError(std::string(what) + ": non-finite entry");
}

// ---------------------------------------------------------------------------
// Tiny dense helpers (hot paths stay hand-rolled, like the rest of the code).

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// y = M x  (M is r x c, x has length c)
template <class T>
void matvec(const Matrix<T>& m, const T* x, T* y) {
  for (std::size_t r = 0; r < m.rows; ++r) y[r] = dot(m.row(r), x, m.cols);
}

// y = M^T x  (x has length rows, y has length cols)
template <class T>
void matvec_t(const Matrix<T>& m, const T* x, T* y) {
  for (std::size_t c = 0; c < m.cols; ++c) y[c] = T(0);
  for (std::size_t r = 0; r < m.rows; ++r) axpy(x[r], m.row(r), y, m.cols);
}

// ---------------------------------------------------------------------------
// RNG

using Rng = std::mt19937_64;

template <class T>
Matrix<T> random_normal_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix<T> m(rows, cols);
  for (T& v : m.data) v = static_cast<T>(dist(rng));
  return m;
}

template <class T>
std::vector<T> random_normal_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<T> v(n);
  for (T& x : v) x = static_cast<T>(dist(rng));
  return v;
}

template <class T>
std::vector<T> random_unit_vector(Rng& rng, std::size_t d) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<T> v(d);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double x = dist(rng);
      v[i] = static_cast<T>(x);
      norm2 += x * x;
    }
  } while (norm2 < 1e-24);
  const T inv = static_cast<T>(1.0 / std::sqrt(norm2));
  for (T& x : v) x *= inv;
  return v;
}

// ---------------------------------------------------------------------------
// parallel_for: runs fn(i) for i in [0, count). threads <= 1 stays on the
// calling thread, which is also the reproducible-timing default.

inline void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace slicedattn
