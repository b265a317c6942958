#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace iorlab {

// ---------------------------------------------------------------------------
// Errors
//
// ValidationError covers bad inputs (malformed files, contract violations the
// caller could have checked); RuntimeError covers environment failures. The
// CLI maps them to exit codes 2 and 1 respectively.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : Error {
  using Error::Error;
};

struct RuntimeError : Error {
  using Error::Error;
};

struct EmptyDataset : ValidationError {
  EmptyDataset() : ValidationError("dataset is empty") {}
};
struct EmptyInput : ValidationError {
  EmptyInput() : ValidationError("input is empty") {}
};
struct EmptyLogitSet : ValidationError {
  EmptyLogitSet() : ValidationError("logit set is empty") {}
};
struct ParseError : ValidationError {
  explicit ParseError(std::size_t line, const std::string& what)
      : ValidationError("parse error at line " + std::to_string(line) + ": " + what),
        line_number(line) {}
  std::size_t line_number;
};
struct LabelOutOfRange : ValidationError {
  LabelOutOfRange(int label, int num_classes)
      : ValidationError("label " + std::to_string(label) + " out of range for " +
                        std::to_string(num_classes) + " classes") {}
};
struct IdOutOfRange : ValidationError {
  IdOutOfRange(int id, int vocab_size)
      : ValidationError("token id " + std::to_string(id) + " out of range for vocab size " +
                        std::to_string(vocab_size)) {}
};
struct InvalidDims : ValidationError {
  using ValidationError::ValidationError;
};
struct InvalidRatios : ValidationError {
  using ValidationError::ValidationError;
};
struct NonPositiveTemperature : ValidationError {
  explicit NonPositiveTemperature(double t)
      : ValidationError("temperature must be > 0, got " + std::to_string(t)) {}
};
struct InvalidBracket : ValidationError {
  using ValidationError::ValidationError;
};
struct UnknownExperiment : ValidationError {
  explicit UnknownExperiment(const std::string& name)
      : ValidationError("unknown experiment: " + name) {}
};
struct LengthMismatch : ValidationError {
  using ValidationError::ValidationError;
};
struct DegenerateInput : ValidationError {
  using ValidationError::ValidationError;
};
struct IoError : RuntimeError {
  using RuntimeError::RuntimeError;
};

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// A SplitMix64-seeded xoshiro-free design: we stick to a single well-defined
// generator (std::mt19937_64 has a standardized output sequence) and derive
// all floating point draws ourselves, so results are identical across
// standard libraries. Never use std::uniform_*_distribution here: its output
// is implementation-defined.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix(seed)) {}

  // Derive an independent stream, e.g. per (epoch, batch, example).
  Rng fork(std::uint64_t salt) const {
    return Rng(state_ ^ splitmix(salt * 0x9e3779b97f4a7c15ULL + 0x243f6a8885a308d3ULL));
  }

  std::uint64_t next_u64() {
    // xorshift64* step; standardized behavior, no library dependence
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  // Uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n)
  std::size_t next_index(std::size_t n) {
    // modulo bias is negligible for n << 2^64 and keeps the draw sequence simple
    return static_cast<std::size_t>(next_u64() % n);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    if (v.size() < 2) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
      std::size_t j = next_index(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  explicit Rng() = default;
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Dense vector / matrix, 64-bit, row-major. Sized for d,h,C in the tens.
// ---------------------------------------------------------------------------

using Vec = std::vector<double>;

struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
};

inline double dot(const Vec& x, const Vec& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline double l2_norm(const Vec& x) { return std::sqrt(dot(x, x)); }

inline void axpy(double alpha, const Vec& x, Vec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// ---------------------------------------------------------------------------
// Number formatting: shortest string that round-trips the double exactly.
// Used for every CSV/JSON we emit so reruns are byte-identical.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == std::floor(v) && std::fabs(v) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  for (int prec = 1; prec <= 17; ++prec) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    std::string s = os.str();
    if (std::stod(s) == v) return s;
  }
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace iorlab
