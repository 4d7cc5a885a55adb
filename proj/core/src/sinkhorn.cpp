#include "sinkformer/error.hpp"
#include "sinkformer/transport.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sinkformer {

CostMatrix::CostMatrix(Matrix values, std::optional<double> bound)
    : values_(std::move(values)) {
  if (values_.size() == 0) throw Error(ErrorKind::kInvalidInput, "cost matrix is empty");
  if (!values_.allFinite()) throw Error(ErrorKind::kInvalidInput, "cost matrix has non-finite entries");
  const double max_abs = values_.cwiseAbs().maxCoeff();
  bound_ = bound.value_or(max_abs);
  if (max_abs > bound_) {
    std::ostringstream os;
    os << "cost magnitude " << max_abs << " exceeds declared bound " << bound_;
    throw Error(ErrorKind::kRange, os.str());
  }
}

void SinkhornConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw Error(ErrorKind::kRange, "sinkhorn epsilon must be positive");
  }
  if (!(tol > 0.0)) throw Error(ErrorKind::kRange, "sinkhorn tol must be positive");
  if (max_iters <= 0) throw Error(ErrorKind::kRange, "sinkhorn max_iters must be positive");
}

namespace {

void check_inputs(const CostMatrix& cost, const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (cost.rows() != mu.size() || cost.cols() != nu.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "cost shape does not match the measures");
  }
  if (mu.weights().minCoeff() <= 0.0 || nu.weights().minCoeff() <= 0.0) {
    throw Error(ErrorKind::kInvalidInput,
                "sinkhorn needs strictly positive weights; drop zero-weight atoms first");
  }
}

// Plan from log-potentials: a_i b_j exp((f_i + g_j - c_ij) / eps).
Matrix plan_from_potentials(const Matrix& c, const Vector& log_a, const Vector& log_b,
                            const Vector& f, const Vector& g, double eps) {
  Matrix plan(c.rows(), c.cols());
  for (Eigen::Index j = 0; j < c.cols(); ++j) {
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      plan(i, j) = std::exp(log_a[i] + log_b[j] + (f[i] + g[j] - c(i, j)) / eps);
    }
  }
  return plan;
}

double column_violation(const Matrix& plan, const Vector& b) {
  return (plan.colwise().sum().transpose() - b).cwiseAbs().sum();
}

// Row-rescaling pass: exact row sums, absorbed into f. A last correction puts
// the residual of a compensated row sum on the row's largest entry.
void rescale_rows(Matrix& plan, const Vector& a, Vector& f, double eps) {
  for (Eigen::Index i = 0; i < plan.rows(); ++i) {
    const double row = plan.row(i).sum();
    const double factor = a[i] / row;
    plan.row(i) *= factor;
    f[i] += eps * std::log(factor);

    long double acc = 0.0L;
    for (Eigen::Index j = 0; j < plan.cols(); ++j) acc += plan(i, j);
    Eigen::Index largest = 0;
    plan.row(i).maxCoeff(&largest);
    plan(i, largest) += static_cast<double>(static_cast<long double>(a[i]) - acc);
  }
}

struct ScalingResult {
  Vector f;
  Vector g;
  int iters = 0;
  double violation = 0.0;
};

ScalingResult log_domain_scaling(const Matrix& c, const Vector& log_a, const Vector& log_b,
                                 const Vector& b, const SinkhornConfig& cfg) {
  const double eps = cfg.epsilon;
  const Eigen::Index n = c.rows();
  const Eigen::Index m = c.cols();
  ScalingResult out{Vector::Zero(n), Vector::Zero(m), 0, kInfinity};
  Vector scratch_n(n);
  Vector scratch_m(m);
  for (int it = 1; it <= cfg.max_iters; ++it) {
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) scratch_n[i] = log_a[i] + (out.f[i] - c(i, j)) / eps;
      const double top = scratch_n.maxCoeff();
      out.g[j] = -eps * (top + std::log((scratch_n.array() - top).exp().sum()));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) scratch_m[j] = log_b[j] + (out.g[j] - c(i, j)) / eps;
      const double top = scratch_m.maxCoeff();
      out.f[i] = -eps * (top + std::log((scratch_m.array() - top).exp().sum()));
    }
    out.iters = it;
    out.violation = column_violation(plan_from_potentials(c, log_a, log_b, out.f, out.g, eps), b);
    if (out.violation <= cfg.tol) break;
  }
  return out;
}

ScalingResult kernel_scaling(const Matrix& c, const Vector& a, const Vector& b,
                             const SinkhornConfig& cfg) {
  const double eps = cfg.epsilon;
  const Matrix kernel = (-c.array() / eps).exp().matrix();
  Vector u = Vector::Ones(c.rows());
  Vector v = Vector::Ones(c.cols());
  ScalingResult out{Vector(), Vector(), 0, kInfinity};
  for (int it = 1; it <= cfg.max_iters; ++it) {
    v = (kernel.transpose() * a.cwiseProduct(u)).cwiseInverse();
    u = (kernel * b.cwiseProduct(v)).cwiseInverse();
    if (!u.allFinite() || !v.allFinite() || u.minCoeff() <= 0.0 || v.minCoeff() <= 0.0) {
      throw Error(ErrorKind::kNumeric,
                  "kernel-domain sinkhorn overflowed at iteration " + std::to_string(it) +
                      "; use log_domain=true");
    }
    const Matrix plan = a.cwiseProduct(u).asDiagonal() * kernel * b.cwiseProduct(v).asDiagonal();
    out.iters = it;
    out.violation = column_violation(plan, b);
    if (out.violation <= cfg.tol) break;
  }
  out.f = eps * u.array().log().matrix();
  out.g = eps * v.array().log().matrix();
  return out;
}

}  // namespace

SinkhornSolution sinkhorn_solve(const CostMatrix& cost, const DiscreteMeasure& mu,
                                const DiscreteMeasure& nu, const SinkhornConfig& cfg) {
  cfg.validate();
  check_inputs(cost, mu, nu);
  const Matrix& c = cost.values();
  const Vector& a = mu.weights();
  const Vector& b = nu.weights();
  const Vector log_a = a.array().log().matrix();
  const Vector log_b = b.array().log().matrix();

  ScalingResult scaled = cfg.log_domain ? log_domain_scaling(c, log_a, log_b, b, cfg)
                                        : kernel_scaling(c, a, b, cfg);
  if (!(scaled.violation <= cfg.tol)) {
    std::ostringstream os;
    os << "sinkhorn did not converge in " << scaled.iters << " iterations (column violation "
       << scaled.violation << " > tol " << cfg.tol << ")";
    throw ConvergenceError(os.str(), scaled.violation, scaled.iters);
  }

  Matrix plan = plan_from_potentials(c, log_a, log_b, scaled.f, scaled.g, cfg.epsilon);
  if (!plan.allFinite()) {
    throw Error(ErrorKind::kNumeric, "sinkhorn plan is not finite");
  }
  rescale_rows(plan, a, scaled.f, cfg.epsilon);

  const double gauge = scaled.f[0];
  scaled.f.array() -= gauge;
  scaled.g.array() += gauge;

  const double final_violation = column_violation(plan, b);
  const double row_violation = (plan.rowwise().sum() - a).cwiseAbs().sum();
  Coupling coupling(mu, nu, std::move(plan), std::max(kCouplingMarginalTol, cfg.tol));
  Vector u = (scaled.f / cfg.epsilon).array().exp().matrix();
  Vector v = (scaled.g / cfg.epsilon).array().exp().matrix();
  return SinkhornSolution{std::move(coupling), std::move(u), std::move(v),
                          std::move(scaled.f), std::move(scaled.g), scaled.iters,
                          final_violation, row_violation};
}

}  // namespace sinkformer
