#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "burgers/spectral.hpp"

using namespace burgers;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> random_coeffs(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d;
  std::vector<double> c(n);
  for (auto& v : c) v = d(gen);
  return c;
}

// O(MN) reference synthesis.
std::vector<double> direct_synthesis(const std::vector<double>& c, std::size_t m) {
  std::vector<double> g(m, 0.0);
  for (std::size_t j = 0; j < m; ++j) {
    const double x = static_cast<double>(j + 1) / static_cast<double>(m + 1);
    for (std::size_t n = 0; n < c.size(); ++n) {
      g[j] += c[n] * std::sqrt(2.0) * std::sin(static_cast<double>(n + 1) * kPi * x);
    }
  }
  return g;
}

}  // namespace

TEST(Eigensystem, Eigenvalues) {
  EXPECT_NEAR(eigenvalue(1), 9.869604401089358, 1e-13);
  EXPECT_NEAR(eigenvalue(2), 39.47841760435743, 1e-12);
  for (std::size_t n = 1; n < 100; ++n) EXPECT_LT(eigenvalue(n), eigenvalue(n + 1));
}

TEST(Eigensystem, EigenfunctionValues) {
  EXPECT_NEAR(eigenfunction_at(1, 0.5), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(eigenfunction_at(2, 0.5), 0.0, 1e-15);
  for (std::size_t n = 1; n <= 50; ++n) {
    EXPECT_NEAR(eigenfunction_at(n, 0.0), 0.0, 1e-15);
    EXPECT_NEAR(eigenfunction_at(n, 1.0), 0.0, 1e-13);
  }
}

TEST(Transforms, SingleModeAtMidpoint) {
  const auto g = to_grid(SpectralField::basis(1, 1), 1);
  ASSERT_EQ(g.points(), 1u);
  EXPECT_DOUBLE_EQ(g.x(0), 0.5);
  EXPECT_NEAR(g[0], std::sqrt(2.0), 1e-15);
}

TEST(Transforms, ZeroField) {
  const auto g = to_grid(SpectralField(8), 20);
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(Transforms, SynthesisMatchesDirectSum) {
  for (std::size_t m : {7u, 64u, 100u, 1023u, 1024u}) {
    const std::size_t n = std::min<std::size_t>(m, 60);
    const auto c = random_coeffs(n, 11 + m);
    const auto fast = to_grid(SpectralField(c), m);
    const auto slow = direct_synthesis(c, m);
    double scale = 0.0;
    for (double v : slow) scale = std::max(scale, std::abs(v));
    for (std::size_t j = 0; j < m; ++j) EXPECT_NEAR(fast[j], slow[j], 1e-12 * scale) << m;
  }
}

TEST(Transforms, AnalysisMatchesDirectQuadrature) {
  const std::size_t m = 200;
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> g(m);
  for (auto& v : g) v = d(gen);
  const auto u = from_grid(GridField(g), 50);
  for (std::size_t n = 1; n <= 50; ++n) {
    double ref = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      ref += g[j] * eigenfunction_at(n, static_cast<double>(j + 1) / (m + 1));
    }
    ref /= static_cast<double>(m + 1);
    EXPECT_NEAR(u.mode(n), ref, 1e-13);
  }
}

TEST(Transforms, RoundTrip) {
  for (std::size_t m : {16u, 255u, 768u, 1024u}) {
    const std::size_t n = m / 2 + 1;
    const auto c = random_coeffs(n, m);
    const auto back = from_grid(to_grid(SpectralField(c), m), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(back[i], c[i], 1e-10);
  }
}

TEST(Transforms, ResolutionErrors) {
  EXPECT_THROW(to_grid(SpectralField(10), 9), ResolutionError);
  EXPECT_THROW(from_grid(GridField(9), 10), ResolutionError);
  EXPECT_THROW(SpectralField(std::vector<double>{1.0, NAN}), std::invalid_argument);
}

TEST(Transforms, CosineAnalysisMatchesDirectSum) {
  const std::size_t m = 150;
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> g(m);
  for (auto& v : g) v = d(gen);
  std::vector<double> out(40);
  SineTransform(m).cosine_analyze(g, out);
  for (std::size_t n = 1; n <= 40; ++n) {
    double ref = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double x = static_cast<double>(j + 1) / (m + 1);
      ref += g[j] * std::sqrt(2.0) * std::cos(static_cast<double>(n) * kPi * x);
    }
    ref /= static_cast<double>(m + 1);
    EXPECT_NEAR(out[n - 1], ref, 1e-13);
  }
}

TEST(Operators, FractionalLaplacian) {
  const SpectralField u(random_coeffs(30, 9));
  EXPECT_EQ(fractional_laplacian_apply(0.0, u), u);
  const auto lap = fractional_laplacian_apply(2.0, SpectralField::basis(4, 1));
  EXPECT_NEAR(lap[0], kPi * kPi, 1e-13);
  EXPECT_EQ(lap[1], 0.0);
  const auto back = fractional_laplacian_apply(-1.0, fractional_laplacian_apply(1.0, u));
  for (std::size_t i = 0; i < 30; ++i) EXPECT_NEAR(back[i], u[i], 1e-12 * std::abs(u[i]));
  const auto a = fractional_laplacian_apply(0.7, fractional_laplacian_apply(-0.3, u));
  const auto b = fractional_laplacian_apply(0.4, u);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_NEAR(a[i], b[i], 1e-12 * std::abs(b[i]));
}

TEST(Operators, SobolevNorm) {
  EXPECT_DOUBLE_EQ(sobolev_norm(0.0, SpectralField(std::vector<double>{3.0, 4.0})), 5.0);
  EXPECT_NEAR(sobolev_norm(2.0, SpectralField::basis(5, 1)), kPi * kPi, 1e-13);
  EXPECT_EQ(sobolev_norm(1.3, SpectralField(7)), 0.0);
}

TEST(Norms, ZeroGrid) { EXPECT_EQ(lp_norm(3.0, GridField(50)), 0.0); }

TEST(Norms, ConstantInteriorGrid) {
  // The zero boundary values make the integrand discontinuous at the ends, so
  // the trapezoid sum M/(M+1) approaches 1 only at first order.
  for (std::size_t m : {10u, 100u, 1000u}) {
    const double value = lp_norm(2.0, GridField(std::vector<double>(m, 1.0)));
    const double exact_sum = std::sqrt(static_cast<double>(m) / static_cast<double>(m + 1));
    EXPECT_NEAR(value, exact_sum, 1e-14);
    EXPECT_LT(std::abs(value - 1.0), 1.0 / static_cast<double>(m));
  }
}

TEST(Norms, ParsevalAgreesWithQuadrature) {
  const auto c = random_coeffs(64, 21);
  const SpectralField u(c);
  for (std::size_t m : {64u, 128u, 512u}) {
    EXPECT_NEAR(lp_norm(2.0, to_grid(u, m)), sobolev_norm(0.0, u), 1e-12) << m;
  }
}

TEST(Norms, EigenfunctionOrthonormality) {
  const std::size_t m = 64;
  for (std::size_t n = 1; n <= 16; ++n) {
    const auto gn = to_grid(SpectralField::basis(16, n), m);
    for (std::size_t k = 1; k <= 16; ++k) {
      const auto gk = to_grid(SpectralField::basis(16, k), m);
      double ip = 0.0;
      for (std::size_t j = 0; j < m; ++j) ip += gn[j] * gk[j];
      ip /= static_cast<double>(m + 1);
      EXPECT_NEAR(ip, n == k ? 1.0 : 0.0, 1e-13);
    }
  }
}

TEST(Norms, L4OfSingleMode) {
  // ||sqrt(2) sin(pi x)||_4^4 = 4 * 3/8 = 3/2.
  const auto g = to_grid(SpectralField::basis(1, 1), 400);
  EXPECT_NEAR(std::pow(lp_norm(4.0, g), 4.0), 1.5, 1e-12);
}
