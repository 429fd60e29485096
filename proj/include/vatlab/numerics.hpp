#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vatlab/errors.hpp"

namespace vatlab {

/// Floor applied to probabilities before they enter a logarithm.
inline constexpr double kProbabilityFloor = 1e-12;

/// Dense row-major array of doubles. Rank 1 or 2 in practice; the leading
/// dimension is the batch.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  /// Row-major matrix from nested initializer lists, e.g. {{1,2},{3,4}}.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Leading dimension, and the product of the rest.
  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const noexcept;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  bool all_finite() const noexcept;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);
  /// this += alpha * other
  Tensor& axpy(double alpha, const Tensor& other);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double s, Tensor a);

std::string shape_string(const std::vector<std::size_t>& shape);

/// Throws NumericError naming `where` if any entry is NaN or infinite.
void require_finite(const Tensor& t, const char* where);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
/// Per-row L2 norms of a 2-D tensor.
std::vector<double> row_norms(const Tensor& t);

/// Seeded pseudo-random stream. Equal seeds and equal call sequences give
/// bitwise-equal outputs.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream keyed by `stream`; does not advance this one.
  Rng fork(std::uint64_t stream) const;

  template <typename It>
  void shuffle(It first, It last) {
    for (auto n = last - first; n > 1; --n) {
      auto j = static_cast<decltype(n)>(index(static_cast<std::size_t>(n)));
      std::swap(first[n - 1], first[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Mixes a seed with a stream id (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Row-wise log-softmax with max subtraction. Requires at least two columns.
Tensor log_softmax(const Tensor& logits);
Tensor softmax(const Tensor& logits);

/// Gaussian sample normalized to unit L2 norm.
Tensor sample_unit_vector(Rng& rng, std::size_t dim);
/// Fills every row of `out` with an independent unit vector.
void fill_unit_rows(Rng& rng, Tensor& out);

}  // namespace vatlab
