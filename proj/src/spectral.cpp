#include "burgers/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include <fmt/core.h>

namespace burgers {

namespace {

// FFTW's planner is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

bool finite_range(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

struct FftwBuffer {
  double* data = nullptr;
  explicit FftwBuffer(std::size_t n) : data(fftw_alloc_real(n)) {
    if (data == nullptr) throw std::bad_alloc();
    std::fill(data, data + n, 0.0);
  }
  ~FftwBuffer() { fftw_free(data); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
};

}  // namespace

SpectralField::SpectralField(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
  if (!all_finite()) throw std::invalid_argument("SpectralField: non-finite coefficient");
}

SpectralField SpectralField::basis(std::size_t modes, std::size_t n) {
  if (n == 0 || n > modes) {
    throw std::out_of_range(fmt::format("basis mode {} outside 1..{}", n, modes));
  }
  SpectralField u(modes);
  u[n - 1] = 1.0;
  return u;
}

bool SpectralField::all_finite() const noexcept { return finite_range(coeffs_); }

GridField::GridField(std::vector<double> values) : values_(std::move(values)) {
  if (!all_finite()) throw std::invalid_argument("GridField: non-finite value");
}

bool GridField::all_finite() const noexcept { return finite_range(values_); }

double eigenvalue(std::size_t n) {
  const double k = std::numbers::pi * static_cast<double>(n);
  return k * k;
}

double eigenfunction_at(std::size_t n, double x) {
  return std::numbers::sqrt2 * std::sin(static_cast<double>(n) * std::numbers::pi * x);
}

GridField to_grid(const SpectralField& u, std::size_t grid_points) {
  if (grid_points < u.modes()) {
    throw ResolutionError(
        fmt::format("to_grid: {} grid points cannot carry {} modes", grid_points, u.modes()));
  }
  GridField g(grid_points);
  SineTransform(grid_points).synthesize(u.coeffs(), g.values());
  return g;
}

SpectralField from_grid(const GridField& g, std::size_t modes) {
  if (modes > g.points()) {
    throw ResolutionError(
        fmt::format("from_grid: {} modes requested from {} grid points", modes, g.points()));
  }
  SpectralField u(modes);
  SineTransform(g.points()).analyze(g.values(), u.coeffs());
  return u;
}

SpectralField fractional_laplacian_apply(double s, const SpectralField& u) {
  SpectralField out(u.modes());
  for (std::size_t i = 0; i < u.modes(); ++i) {
    out[i] = std::pow(eigenvalue(i + 1), 0.5 * s) * u[i];
  }
  return out;
}

double sobolev_norm(double s, const SpectralField& u) {
  double sum = 0.0;
  for (std::size_t i = 0; i < u.modes(); ++i) {
    sum += std::pow(eigenvalue(i + 1), s) * u[i] * u[i];
  }
  return std::sqrt(sum);
}

double lp_norm(double p, std::span<const double> interior_values) {
  if (!(p >= 1.0)) throw std::invalid_argument("lp_norm: p must be >= 1");
  const double h = 1.0 / static_cast<double>(interior_values.size() + 1);
  double sum = 0.0;
  for (double v : interior_values) sum += std::pow(std::abs(v), p);
  return std::pow(h * sum, 1.0 / p);
}

double lp_norm(double p, const GridField& g) { return lp_norm(p, g.values()); }

struct SineTransform::Impl {
  std::size_t m;
  FftwBuffer sine_buf;
  FftwBuffer cosine_buf;
  fftw_plan sine_plan = nullptr;
  fftw_plan cosine_plan = nullptr;

  explicit Impl(std::size_t points) : m(points), sine_buf(points), cosine_buf(points + 2) {
    std::lock_guard lock(planner_mutex());
    // FFTW_ESTIMATE keeps plan selection independent of timing, so every
    // instance of a given size performs the same arithmetic.
    sine_plan = fftw_plan_r2r_1d(static_cast<int>(m), sine_buf.data, sine_buf.data, FFTW_RODFT00,
                                 FFTW_ESTIMATE);
    cosine_plan = fftw_plan_r2r_1d(static_cast<int>(m + 2), cosine_buf.data, cosine_buf.data,
                                   FFTW_REDFT00, FFTW_ESTIMATE);
    if (sine_plan == nullptr || cosine_plan == nullptr) {
      throw std::runtime_error("SineTransform: FFTW planning failed");
    }
  }

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(sine_plan);
    fftw_destroy_plan(cosine_plan);
  }
};

SineTransform::SineTransform(std::size_t grid_points) {
  if (grid_points == 0) throw std::invalid_argument("SineTransform: empty grid");
  impl_ = std::make_unique<Impl>(grid_points);
}

SineTransform::~SineTransform() = default;
SineTransform::SineTransform(SineTransform&&) noexcept = default;
SineTransform& SineTransform::operator=(SineTransform&&) noexcept = default;

std::size_t SineTransform::grid_points() const noexcept { return impl_->m; }

void SineTransform::synthesize(std::span<const double> coeffs, std::span<double> grid) {
  const std::size_t m = impl_->m;
  if (coeffs.size() > m) throw ResolutionError("synthesize: more modes than grid points");
  if (grid.size() != m) throw std::invalid_argument("synthesize: grid size mismatch");
  double* buf = impl_->sine_buf.data;
  std::copy(coeffs.begin(), coeffs.end(), buf);
  std::fill(buf + coeffs.size(), buf + m, 0.0);
  fftw_execute(impl_->sine_plan);
  constexpr double scale = std::numbers::sqrt2 / 2.0;
  for (std::size_t j = 0; j < m; ++j) grid[j] = scale * buf[j];
}

void SineTransform::analyze(std::span<const double> grid, std::span<double> coeffs) {
  const std::size_t m = impl_->m;
  if (coeffs.size() > m) throw ResolutionError("analyze: more modes than grid points");
  if (grid.size() != m) throw std::invalid_argument("analyze: grid size mismatch");
  double* buf = impl_->sine_buf.data;
  std::copy(grid.begin(), grid.end(), buf);
  fftw_execute(impl_->sine_plan);
  const double scale = std::numbers::sqrt2 / (2.0 * static_cast<double>(m + 1));
  for (std::size_t n = 0; n < coeffs.size(); ++n) coeffs[n] = scale * buf[n];
}

void SineTransform::cosine_analyze(std::span<const double> grid, std::span<double> out) {
  const std::size_t m = impl_->m;
  if (out.size() > m) throw ResolutionError("cosine_analyze: more modes than grid points");
  if (grid.size() != m) throw std::invalid_argument("cosine_analyze: grid size mismatch");
  double* buf = impl_->cosine_buf.data;
  buf[0] = 0.0;
  std::copy(grid.begin(), grid.end(), buf + 1);
  buf[m + 1] = 0.0;
  fftw_execute(impl_->cosine_plan);
  const double scale = std::numbers::sqrt2 / (2.0 * static_cast<double>(m + 1));
  for (std::size_t n = 0; n < out.size(); ++n) out[n] = scale * buf[n + 1];
}

}  // namespace burgers
