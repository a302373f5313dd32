#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace pne {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v);
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Dense row-major rank-3 tensor; element (i, j, k) lives at (i * d1 + j) * d2 + k.
class Tensor3 {
 public:
  Tensor3() = default;
  Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, double fill = 0.0);

  std::size_t dim0() const noexcept { return d0_; }
  std::size_t dim1() const noexcept { return d1_; }
  std::size_t dim2() const noexcept { return d2_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[(i * d1_ + j) * d2_ + k]; }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const { return data_[(i * d1_ + j) * d2_ + k]; }

  // Contiguous innermost fiber (i, j, :).
  std::span<double> fiber(std::size_t i, std::size_t j) { return {data_.data() + (i * d1_ + j) * d2_, d2_}; }
  std::span<const double> fiber(std::size_t i, std::size_t j) const {
    return {data_.data() + (i * d1_ + j) * d2_, d2_};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v);

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t d0_ = 0, d1_ = 0, d2_ = 0;
  std::vector<double> data_;
};

enum class ActivationKind { ReLU, GELU, Sin };

std::string_view to_string(ActivationKind kind);
ActivationKind parse_activation(std::string_view name);

// Standard normal CDF through erfc, accurate in both tails.
double normal_cdf(double x);
double normal_pdf(double x);

// ReLU: max(x, 0). GELU: x * Phi(x) with the exact CDF. Sin: sin(x).
double activation_forward(ActivationKind kind, double x);

// ReLU'(0) is taken as 0.
double activation_derivative(ActivationKind kind, double x);

using VectorFunction = std::function<std::vector<double>(std::span<const double>)>;

// Central-difference Jacobian, rows = outputs, cols = inputs.
Matrix finite_diff_jacobian(const VectorFunction& f, std::span<const double> x, double h);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Pairwise tree sum: the range is split at n/2 and both halves are summed
// recursively, left half first. The order depends only on the length, so a
// fixed input sequence always produces the same bits.
double deterministic_sum(std::span<const double> values);

// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero gradients from
// turning roundoff into huge relative errors.
double relative_error(double a, double b, double floor = 1e-4);

}  // namespace pne
