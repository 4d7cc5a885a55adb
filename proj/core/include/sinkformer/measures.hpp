#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <utility>

namespace sinkformer {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A point of the embedding space. Positional information, when used, is
/// already appended to the coordinates.
using Point = Eigen::VectorXd;

inline constexpr double kWeightSumTol = 1e-12;
inline constexpr double kCouplingMassTol = 1e-10;
inline constexpr double kCouplingMarginalTol = 1e-8;

/// Finitely supported probability measure. Atoms are stored row-wise in
/// `support()` (n x d). Duplicate atoms are kept as given.
class DiscreteMeasure {
 public:
  DiscreteMeasure(Matrix support, Vector weights);

  static DiscreteMeasure uniform(Matrix support);

  Eigen::Index size() const { return weights_.size(); }
  Eigen::Index dim() const { return support_.cols(); }
  const Matrix& support() const { return support_; }
  const Vector& weights() const { return weights_; }
  Point atom(Eigen::Index i) const { return support_.row(i).transpose(); }

  /// Same support, new weights (validated).
  DiscreteMeasure with_weights(Vector weights) const;

 private:
  Matrix support_;
  Vector weights_;
};

/// Nonnegative mass matrix over rows() x cols() whose marginals match the two
/// measures' weights. The measures double as the declared marginals.
class Coupling {
 public:
  Coupling(DiscreteMeasure rows, DiscreteMeasure cols, Matrix mass,
           double marginal_tol = kCouplingMarginalTol);

  const DiscreteMeasure& rows() const { return rows_; }
  const DiscreteMeasure& cols() const { return cols_; }
  const Matrix& mass() const { return mass_; }

 private:
  DiscreteMeasure rows_;
  DiscreteMeasure cols_;
  Matrix mass_;
};

/// dpi / d(mu x nu) sampled on the product of supports.
struct Density {
  Matrix values;

  double min() const { return values.minCoeff(); }
};

DiscreteMeasure from_tokens(std::span<const Point> embeddings);

Coupling product_coupling(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

std::pair<Vector, Vector> marginals(const Coupling& pi);

/// Density of pi with respect to the product of its declared marginals.
/// Entries over zero-weight atoms are set to zero.
Density density_of(const Coupling& pi);

/// Coupling with mass[i,j] = density[i,j] * a_i * b_j.
Coupling coupling_from_density(const Density& density, const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu,
                               double marginal_tol = kCouplingMarginalTol);

using TestFunction = std::function<double(const Point&)>;
using PairTestFunction = std::function<double(const Point&, const Point&)>;

double integrate(const DiscreteMeasure& mu, const TestFunction& f);
double integrate(const Coupling& pi, const PairTestFunction& f);

/// Largest sum-metric distance d_X + d_Y between two atoms of pi's product
/// support (Euclidean on each factor).
double product_diameter(const Coupling& pi);

/// Largest pairwise Euclidean distance within the support.
double diameter(const Matrix& support);

}  // namespace sinkformer
