#include "sinkformer/measures.hpp"

#include "sinkformer/error.hpp"

#include <cmath>
#include <sstream>

namespace sinkformer {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kDimensionMismatch: return "dimension-mismatch";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kConvergence: return "convergence";
    case ErrorKind::kSize: return "size";
    case ErrorKind::kRange: return "range";
    case ErrorKind::kStrictPositivity: return "strict-positivity";
    case ErrorKind::kUnattainable: return "unattainable";
    case ErrorKind::kDivergence: return "divergence";
  }
  return "unknown";
}

namespace {

void check_weights(const Vector& weights) {
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!std::isfinite(weights[i]) || weights[i] < 0.0) {
      std::ostringstream os;
      os << "measure weight " << i << " is negative or non-finite (" << weights[i] << ")";
      throw Error(ErrorKind::kInvalidInput, os.str());
    }
  }
  const double total = weights.sum();
  if (std::abs(total - 1.0) > kWeightSumTol) {
    std::ostringstream os;
    os.precision(17);
    os << "measure weights sum to " << total << ", expected 1";
    throw Error(ErrorKind::kInvalidInput, os.str());
  }
}

}  // namespace

DiscreteMeasure::DiscreteMeasure(Matrix support, Vector weights)
    : support_(std::move(support)), weights_(std::move(weights)) {
  if (support_.rows() == 0) {
    throw Error(ErrorKind::kInvalidInput, "measure needs at least one atom");
  }
  if (support_.rows() != weights_.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "support and weights differ in length");
  }
  if (!support_.allFinite()) {
    throw Error(ErrorKind::kInvalidInput, "support coordinates must be finite");
  }
  check_weights(weights_);
}

DiscreteMeasure DiscreteMeasure::uniform(Matrix support) {
  const auto n = support.rows();
  if (n == 0) throw Error(ErrorKind::kInvalidInput, "measure needs at least one atom");
  return DiscreteMeasure(std::move(support), Vector::Constant(n, 1.0 / static_cast<double>(n)));
}

DiscreteMeasure DiscreteMeasure::with_weights(Vector weights) const {
  return DiscreteMeasure(support_, std::move(weights));
}

Coupling::Coupling(DiscreteMeasure rows, DiscreteMeasure cols, Matrix mass, double marginal_tol)
    : rows_(std::move(rows)), cols_(std::move(cols)), mass_(std::move(mass)) {
  if (mass_.rows() != rows_.size() || mass_.cols() != cols_.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "coupling mass shape does not match supports");
  }
  if (!mass_.allFinite() || mass_.minCoeff() < 0.0) {
    throw Error(ErrorKind::kInvalidInput, "coupling mass must be finite and nonnegative");
  }
  if (std::abs(mass_.sum() - 1.0) > kCouplingMassTol) {
    throw Error(ErrorKind::kInvalidInput, "coupling total mass differs from 1");
  }
  const double row_dev = (mass_.rowwise().sum() - rows_.weights()).cwiseAbs().maxCoeff();
  const double col_dev = (mass_.colwise().sum().transpose() - cols_.weights()).cwiseAbs().maxCoeff();
  if (row_dev > marginal_tol || col_dev > marginal_tol) {
    std::ostringstream os;
    os << "coupling marginals deviate from declared measures (row " << row_dev << ", col "
       << col_dev << ", tol " << marginal_tol << ")";
    throw Error(ErrorKind::kInvalidInput, os.str());
  }
}

DiscreteMeasure from_tokens(std::span<const Point> embeddings) {
  if (embeddings.empty()) throw Error(ErrorKind::kInvalidInput, "token list is empty");
  const auto d = embeddings.front().size();
  Matrix support(static_cast<Eigen::Index>(embeddings.size()), d);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].size() != d) {
      throw Error(ErrorKind::kDimensionMismatch, "tokens have mixed embedding dimensions");
    }
    support.row(static_cast<Eigen::Index>(i)) = embeddings[i].transpose();
  }
  return DiscreteMeasure::uniform(std::move(support));
}

Coupling product_coupling(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  Matrix mass = mu.weights() * nu.weights().transpose();
  return Coupling(mu, nu, std::move(mass));
}

std::pair<Vector, Vector> marginals(const Coupling& pi) {
  return {pi.mass().rowwise().sum(), pi.mass().colwise().sum().transpose()};
}

Density density_of(const Coupling& pi) {
  const Vector& a = pi.rows().weights();
  const Vector& b = pi.cols().weights();
  Matrix values = Matrix::Zero(a.size(), b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const double ref = a[i] * b[j];
      if (ref > 0.0) values(i, j) = pi.mass()(i, j) / ref;
    }
  }
  return {std::move(values)};
}

Coupling coupling_from_density(const Density& density, const DiscreteMeasure& mu,
                               const DiscreteMeasure& nu, double marginal_tol) {
  Matrix mass = (mu.weights() * nu.weights().transpose()).cwiseProduct(density.values);
  return Coupling(mu, nu, std::move(mass), marginal_tol);
}

double integrate(const DiscreteMeasure& mu, const TestFunction& f) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double value = f(mu.atom(i));
    if (!std::isfinite(value)) {
      throw Error(ErrorKind::kNumeric, "test function is not finite on atom " + std::to_string(i));
    }
    acc += mu.weights()[i] * value;
  }
  return acc;
}

double integrate(const Coupling& pi, const PairTestFunction& f) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pi.rows().size(); ++i) {
    const Point x = pi.rows().atom(i);
    for (Eigen::Index j = 0; j < pi.cols().size(); ++j) {
      const double value = f(x, pi.cols().atom(j));
      if (!std::isfinite(value)) {
        throw Error(ErrorKind::kNumeric, "test function is not finite on a coupling atom");
      }
      acc += pi.mass()(i, j) * value;
    }
  }
  return acc;
}

double diameter(const Matrix& support) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < support.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < support.rows(); ++j) {
      best = std::max(best, (support.row(i) - support.row(j)).norm());
    }
  }
  return best;
}

double product_diameter(const Coupling& pi) {
  return diameter(pi.rows().support()) + diameter(pi.cols().support());
}

}  // namespace sinkformer
