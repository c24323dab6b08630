#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace burgers {

/// Thrown when a grid is too coarse for the number of modes it is paired with.
class ResolutionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Coefficients (u_1, ..., u_N) of a function on (0,1) in the Dirichlet sine
/// basis e_n(x) = sqrt(2) sin(n pi x). Index 0 holds mode n = 1.
class SpectralField {
 public:
  SpectralField() = default;
  explicit SpectralField(std::size_t modes) : coeffs_(modes, 0.0) {}
  /// Throws std::invalid_argument on non-finite entries.
  explicit SpectralField(std::vector<double> coeffs);

  /// The basis function e_n truncated to `modes` modes.
  static SpectralField basis(std::size_t modes, std::size_t n);

  std::size_t modes() const noexcept { return coeffs_.size(); }
  bool empty() const noexcept { return coeffs_.empty(); }

  double operator[](std::size_t i) const { return coeffs_[i]; }
  double& operator[](std::size_t i) { return coeffs_[i]; }
  /// 1-based access by mode number.
  double mode(std::size_t n) const { return coeffs_.at(n - 1); }

  std::span<const double> coeffs() const noexcept { return coeffs_; }
  std::span<double> coeffs() noexcept { return coeffs_; }
  const std::vector<double>& vector() const noexcept { return coeffs_; }

  bool all_finite() const noexcept;

  friend bool operator==(const SpectralField&, const SpectralField&) = default;

 private:
  std::vector<double> coeffs_;
};

/// Values at the M interior points x_j = j / (M + 1), j = 1..M. The Dirichlet
/// boundary values are zero and are not stored.
class GridField {
 public:
  GridField() = default;
  explicit GridField(std::size_t points) : values_(points, 0.0) {}
  explicit GridField(std::vector<double> values);

  std::size_t points() const noexcept { return values_.size(); }
  double spacing() const noexcept { return 1.0 / static_cast<double>(values_.size() + 1); }
  /// Coordinate of the j-th stored value (0-based index).
  double x(std::size_t i) const noexcept { return static_cast<double>(i + 1) * spacing(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  bool all_finite() const noexcept;

 private:
  std::vector<double> values_;
};

/// lambda_n = pi^2 n^2, the n-th eigenvalue of -d^2/dx^2 with Dirichlet conditions.
double eigenvalue(std::size_t n);

/// e_n(x) = sqrt(2) sin(n pi x).
double eigenfunction_at(std::size_t n, double x);

GridField to_grid(const SpectralField& u, std::size_t grid_points);
SpectralField from_grid(const GridField& g, std::size_t modes);

/// u_n -> lambda_n^{s/2} u_n.
SpectralField fractional_laplacian_apply(double s, const SpectralField& u);

/// sqrt(sum_n lambda_n^s u_n^2).
double sobolev_norm(double s, const SpectralField& u);

/// Composite trapezoid approximation of ||g||_{L^p(0,1)} with zero boundary values.
double lp_norm(double p, const GridField& g);
double lp_norm(double p, std::span<const double> interior_values);

/// Reusable sine/cosine transforms on an M-point interior grid. Plans and
/// buffers are owned by the instance; an instance must not be shared between
/// threads, but any number of instances may run concurrently.
class SineTransform {
 public:
  explicit SineTransform(std::size_t grid_points);
  ~SineTransform();
  SineTransform(SineTransform&&) noexcept;
  SineTransform& operator=(SineTransform&&) noexcept;
  SineTransform(const SineTransform&) = delete;
  SineTransform& operator=(const SineTransform&) = delete;

  std::size_t grid_points() const noexcept;

  /// grid[j] = sum_n coeffs[n-1] e_n(x_j). coeffs.size() <= grid_points.
  void synthesize(std::span<const double> coeffs, std::span<double> grid);

  /// coeffs[n-1] = h sum_j grid[j] e_n(x_j), the exact inverse of synthesize
  /// for band-limited input.
  void analyze(std::span<const double> grid, std::span<double> coeffs);

  /// out[n-1] = h sum_j grid[j] sqrt(2) cos(n pi x_j), the trapezoid rule for
  /// <g, sqrt(2) cos(n pi .)> when g vanishes at both ends.
  void cosine_analyze(std::span<const double> grid, std::span<double> out);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace burgers
