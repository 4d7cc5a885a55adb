#include "sinkformer/error.hpp"
#include "sinkformer/measures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace sinkformer;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> data) {
  Matrix m(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(data.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : data) {
    Eigen::Index j = 0;
    for (const double x : r) m(i, j++) = x;
    ++i;
  }
  return m;
}

Vector vec(std::initializer_list<double> data) {
  Vector v(static_cast<Eigen::Index>(data.size()));
  Eigen::Index i = 0;
  for (const double x : data) v[i++] = x;
  return v;
}

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kInvalidInput;
}

}  // namespace

TEST(Measure, RejectsBadWeights) {
  EXPECT_EQ(kind_of([] { DiscreteMeasure(rows({{0.0}, {1.0}}), vec({0.5, 0.6})); }), ErrorKind::kInvalidInput);
  EXPECT_EQ(kind_of([] { DiscreteMeasure(rows({{0.0}, {1.0}}), vec({1.5, -0.5})); }), ErrorKind::kInvalidInput);
  EXPECT_EQ(kind_of([] { DiscreteMeasure(rows({{0.0}, {1.0}}), vec({1.0})); }), ErrorKind::kDimensionMismatch);
  EXPECT_EQ(kind_of([] { DiscreteMeasure(Matrix(0, 2), Vector(0)); }), ErrorKind::kInvalidInput);
  EXPECT_EQ(kind_of([] {
              DiscreteMeasure(rows({{std::numeric_limits<double>::quiet_NaN()}}), vec({1.0}));
            }),
            ErrorKind::kInvalidInput);
}

TEST(Measure, AcceptsSumWithinTolerance) {
  EXPECT_NO_THROW(DiscreteMeasure(rows({{0.0}, {1.0}}), vec({0.5, 0.5 + 5e-13})));
}

TEST(FromTokens, SingleAtom) {
  const std::vector<Point> tokens = {vec({1.0, 2.0})};
  const DiscreteMeasure mu = from_tokens(tokens);
  ASSERT_EQ(mu.size(), 1);
  EXPECT_EQ(mu.weights()[0], 1.0);
}

TEST(FromTokens, UniformThirds) {
  const std::vector<Point> tokens = {vec({0.0}), vec({1.0}), vec({2.0})};
  const DiscreteMeasure mu = from_tokens(tokens);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(mu.weights()[i], 1.0 / 3.0);
}

TEST(FromTokens, DuplicateAtomsIntegrateLikeOne) {
  const Point x = vec({0.3, -1.2});
  const std::vector<Point> twice = {x, x};
  const std::vector<Point> once = {x};
  const DiscreteMeasure a = from_tokens(twice);
  EXPECT_DOUBLE_EQ(a.weights()[0], 0.5);
  EXPECT_DOUBLE_EQ(a.weights()[1], 0.5);
  const auto f = [](const Point& p) { return std::sin(p[0]) + p[1] * p[1]; };
  EXPECT_DOUBLE_EQ(integrate(a, f), integrate(from_tokens(once), f));
}

TEST(FromTokens, Errors) {
  EXPECT_EQ(kind_of([] { from_tokens(std::vector<Point>{}); }), ErrorKind::kInvalidInput);
  const std::vector<Point> mixed = {vec({0.0}), vec({0.0, 1.0})};
  EXPECT_EQ(kind_of([&] { from_tokens(mixed); }), ErrorKind::kDimensionMismatch);
}

TEST(ProductCoupling, Examples) {
  const auto u2 = DiscreteMeasure::uniform(rows({{0.0}, {1.0}}));
  EXPECT_TRUE(product_coupling(u2, u2).mass().isApproxToConstant(0.25, 0.0));

  const DiscreteMeasure one(rows({{0.0}}), vec({1.0}));
  const DiscreteMeasure b(rows({{0.0}, {1.0}}), vec({0.3, 0.7}));
  const Matrix m1 = product_coupling(one, b).mass();
  EXPECT_EQ(m1(0, 0), 0.3);
  EXPECT_EQ(m1(0, 1), 0.7);

  const DiscreteMeasure a(rows({{0.0}, {1.0}}), vec({0.2, 0.8}));
  const DiscreteMeasure h(rows({{0.0}, {1.0}}), vec({0.5, 0.5}));
  const Matrix m2 = product_coupling(a, h).mass();
  EXPECT_DOUBLE_EQ(m2(0, 0), 0.1);
  EXPECT_DOUBLE_EQ(m2(0, 1), 0.1);
  EXPECT_DOUBLE_EQ(m2(1, 0), 0.4);
  EXPECT_DOUBLE_EQ(m2(1, 1), 0.4);
}

TEST(Coupling, ValidatesMassAndMarginals) {
  const auto u2 = DiscreteMeasure::uniform(rows({{0.0}, {1.0}}));
  EXPECT_EQ(kind_of([&] { Coupling(u2, u2, rows({{0.5, 0.0}, {0.0, 0.6}})); }), ErrorKind::kInvalidInput);
  EXPECT_EQ(kind_of([&] { Coupling(u2, u2, rows({{0.6, -0.1}, {-0.1, 0.6}})); }), ErrorKind::kInvalidInput);
  EXPECT_EQ(kind_of([&] { Coupling(u2, u2, rows({{0.5, 0.0}, {0.25, 0.25}})); }), ErrorKind::kInvalidInput);
  EXPECT_EQ(kind_of([&] { Coupling(u2, u2, rows({{1.0}})); }), ErrorKind::kDimensionMismatch);
  EXPECT_NO_THROW(Coupling(u2, u2, rows({{0.5, 0.0}, {0.0, 0.5}})));
}

TEST(Marginals, ProductAndDiagonal) {
  const DiscreteMeasure a(rows({{0.0}, {1.0}, {3.0}}), vec({0.2, 0.3, 0.5}));
  const DiscreteMeasure b(rows({{0.0}, {2.0}}), vec({0.6, 0.4}));
  const auto [r, c] = marginals(product_coupling(a, b));
  EXPECT_LE((r - a.weights()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((c - b.weights()).cwiseAbs().maxCoeff(), 1e-15);

  const Coupling diag(a, a, a.weights().asDiagonal().toDenseMatrix());
  const auto [r2, c2] = marginals(diag);
  EXPECT_EQ(r2, a.weights());
  EXPECT_EQ(c2, a.weights());
}

TEST(Marginals, MatchDoubleLoop) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix mass(3, 4);
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) mass(i, j) = u(rng);
  }
  mass /= mass.sum();
  std::vector<double> row(3, 0.0), col(4, 0.0);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      row[i] += mass(i, j);
      col[j] += mass(i, j);
    }
  }
  const Coupling pi(DiscreteMeasure(Matrix::Zero(3, 1), mass.rowwise().sum()),
                    DiscreteMeasure(Matrix::Zero(4, 1), mass.colwise().sum().transpose()), mass);
  const auto [r, c] = marginals(pi);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(r[i], row[i], 1e-15);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(c[j], col[j], 1e-15);
}

TEST(Integrate, Examples) {
  const DiscreteMeasure a(rows({{0.0}, {1.0}, {3.0}}), vec({0.2, 0.3, 0.5}));
  EXPECT_DOUBLE_EQ(integrate(a, [](const Point&) { return 1.0; }), 1.0);
  const auto u = DiscreteMeasure::uniform(rows({{0.0}, {1.0}}));
  EXPECT_DOUBLE_EQ(integrate(u, [](const Point& x) { return x[0]; }), 0.5);
}

TEST(Integrate, LipschitzBumpMatchesSummation) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix support(5, 2);
  Vector w(5);
  for (Eigen::Index i = 0; i < 5; ++i) {
    support(i, 0) = u(rng);
    support(i, 1) = u(rng);
    w[i] = 0.1 + u(rng);
  }
  w /= w.sum();
  const DiscreteMeasure mu(support, w);
  const auto bump = [](const Point& x) { return std::max(0.0, 0.5 - std::hypot(x[0] - 0.5, x[1] - 0.5)); };
  double expected = 0.0;
  for (Eigen::Index i = 0; i < 5; ++i) {
    expected += w[i] * std::max(0.0, 0.5 - std::hypot(support(i, 0) - 0.5, support(i, 1) - 0.5));
  }
  EXPECT_NEAR(integrate(mu, bump), expected, 1e-15);
}

TEST(Integrate, NonFiniteIsNumericError) {
  const auto u = DiscreteMeasure::uniform(rows({{0.0}, {1.0}}));
  EXPECT_EQ(kind_of([&] { integrate(u, [](const Point& x) { return 1.0 / x[0]; }); }), ErrorKind::kNumeric);
  EXPECT_EQ(kind_of([&] {
              integrate(product_coupling(u, u), [](const Point& x, const Point&) { return std::log(x[0]) * 0.0; });
            }),
            ErrorKind::kNumeric);
}

TEST(Integrate, ProductOfSeparableFunctions) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix sx(4, 2), sy(3, 2);
    for (Eigen::Index i = 0; i < sx.size(); ++i) sx.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < sy.size(); ++i) sy.data()[i] = u(rng);
    Vector a = (Vector::Random(4).array() + 1.5).matrix();
    Vector b = (Vector::Random(3).array() + 1.5).matrix();
    const DiscreteMeasure mu(sx, a / a.sum());
    const DiscreteMeasure nu(sy, b / b.sum());
    const auto f = [](const Point& x) { return std::cos(x[0]) + x[1]; };
    const auto g = [](const Point& y) { return y[0] * y[1] - 2.0; };
    const double lhs = integrate(product_coupling(mu, nu), [&](const Point& x, const Point& y) { return f(x) * g(y); });
    EXPECT_NEAR(lhs, integrate(mu, f) * integrate(nu, g), 1e-10);
  }
}

TEST(Density, RoundTrip) {
  const DiscreteMeasure a(rows({{0.0}, {1.0}}), vec({0.5, 0.5}));
  const Coupling pi(a, a, rows({{0.4, 0.1}, {0.1, 0.4}}));
  const Density rho = density_of(pi);
  EXPECT_NEAR(rho.values(0, 0), 1.6, 1e-15);
  EXPECT_NEAR(rho.values(0, 1), 0.4, 1e-15);
  const Coupling back = coupling_from_density(rho, a, a);
  EXPECT_LE((back.mass() - pi.mass()).cwiseAbs().maxCoeff(), 1e-16);
}

TEST(Density, ZeroWeightAtomsGiveZero) {
  const DiscreteMeasure a(rows({{0.0}, {1.0}}), vec({1.0, 0.0}));
  const DiscreteMeasure b = DiscreteMeasure::uniform(rows({{0.0}, {1.0}}));
  const Density rho = density_of(product_coupling(a, b));
  EXPECT_EQ(rho.values(1, 0), 0.0);
  EXPECT_EQ(rho.values(1, 1), 0.0);
  EXPECT_DOUBLE_EQ(rho.values(0, 0), 1.0);
}

TEST(Diameter, Examples) {
  EXPECT_DOUBLE_EQ(diameter(rows({{0.0, 0.0}, {3.0, 4.0}, {1.0, 1.0}})), 5.0);
  EXPECT_EQ(diameter(rows({{2.0, 2.0}})), 0.0);
  const auto x = DiscreteMeasure::uniform(rows({{0.0, 0.0}, {3.0, 4.0}}));
  const auto y = DiscreteMeasure::uniform(rows({{0.0}, {2.0}}));
  EXPECT_DOUBLE_EQ(product_diameter(product_coupling(x, y)), 7.0);
}

TEST(WeakLimit, EntrywiseLimitKeepsMarginals) {
  const DiscreteMeasure a(rows({{0.0}, {1.0}}), vec({0.3, 0.7}));
  const DiscreteMeasure b(rows({{0.0}, {1.0}}), vec({0.4, 0.6}));
  const Matrix limit = a.weights() * b.weights().transpose();
  Matrix twist(2, 2);
  twist << 1.0, -1.0, -1.0, 1.0;
  for (int n = 1; n <= 1024; n *= 2) {
    const Coupling pi_n(a, b, limit + twist * (0.1 / n));
    const auto [r, c] = marginals(pi_n);
    EXPECT_LE((r - a.weights()).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_LE((c - b.weights()).cwiseAbs().maxCoeff(), 1e-15);
  }
  const auto [r, c] = marginals(Coupling(a, b, limit));
  EXPECT_LE((r - a.weights()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((c - b.weights()).cwiseAbs().maxCoeff(), 1e-10);
}
