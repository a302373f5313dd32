#include "pne/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pne/errors.hpp"

namespace pne {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor3::Tensor3(std::size_t d0, std::size_t d1, std::size_t d2, double fill)
    : d0_(d0), d1_(d1), d2_(d2), data_(d0 * d1 * d2, fill) {}

void Tensor3::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string_view to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::GELU: return "gelu";
    case ActivationKind::Sin: return "sin";
  }
  return "?";
}

ActivationKind parse_activation(std::string_view name) {
  if (name == "relu") return ActivationKind::ReLU;
  if (name == "gelu") return ActivationKind::GELU;
  if (name == "sin") return ActivationKind::Sin;
  throw ParameterError("unknown activation '" + std::string(name) + "'");
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  constexpr double inv_sqrt_2pi = 0.3989422804014326779399460599343819;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

namespace {

void require_finite(double x) {
  if (!std::isfinite(x)) throw DomainError("activation input is not finite");
}

}  // namespace

double activation_forward(ActivationKind kind, double x) {
  require_finite(x);
  switch (kind) {
    case ActivationKind::ReLU: return x > 0.0 ? x : 0.0;
    case ActivationKind::GELU: return x * normal_cdf(x);
    case ActivationKind::Sin: return std::sin(x);
  }
  return 0.0;
}

double activation_derivative(ActivationKind kind, double x) {
  require_finite(x);
  switch (kind) {
    case ActivationKind::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case ActivationKind::GELU: return normal_cdf(x) + x * normal_pdf(x);
    case ActivationKind::Sin: return std::cos(x);
  }
  return 0.0;
}

Matrix finite_diff_jacobian(const VectorFunction& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ParameterError("finite difference step must be positive");
  std::vector<double> probe(x.begin(), x.end());
  Matrix jac;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const std::vector<double> plus = f(probe);
    probe[i] = x[i] - h;
    const std::vector<double> minus = f(probe);
    probe[i] = x[i];
    if (plus.size() != minus.size()) throw DimensionError("function output size changed between probes");
    if (i == 0) jac = Matrix(plus.size(), x.size());
    for (std::size_t r = 0; r < plus.size(); ++r) {
      if (!std::isfinite(plus[r]) || !std::isfinite(minus[r])) {
        throw DomainError("function returned a non-finite value at coordinate " + std::to_string(i));
      }
      jac(r, i) = (plus[r] - minus[r]) / (2.0 * h);
    }
  }
  return jac;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner dimensions " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.rows()) + " disagree");
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

double deterministic_sum(std::span<const double> values) {
  if (values.empty()) return 0.0;
  if (values.size() == 1) return values[0];
  const std::size_t half = values.size() / 2;
  const double left = deterministic_sum(values.first(half));
  const double right = deterministic_sum(values.subspan(half));
  return left + right;
}

double relative_error(double a, double b, double floor) {
  const double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

}  // namespace pne
