#include "sinkformer/error.hpp"
#include "sinkformer/transport.hpp"

#include <cmath>

namespace sinkformer {

double kl_divergence(const Matrix& p, const Matrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "KL arguments differ in shape");
  }
  double acc = 0.0;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double pij = p(i, j);
      if (pij <= 0.0) continue;  // 0 log 0 = 0
      if (q(i, j) <= 0.0) return kInfinity;
      acc += pij * std::log(pij / q(i, j));
    }
  }
  return acc;
}

double kl_divergence(const Coupling& p, const Coupling& q) {
  return kl_divergence(p.mass(), q.mass());
}

double entropic_objective(const Coupling& pi, const CostMatrix& cost, double epsilon,
                          const Coupling& ref) {
  if (cost.rows() != pi.mass().rows() || cost.cols() != pi.mass().cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "cost shape does not match the coupling");
  }
  const double kl = kl_divergence(pi.mass(), ref.mass());
  if (std::isinf(kl)) return kInfinity;
  return cost.values().cwiseProduct(pi.mass()).sum() + epsilon * kl;
}

}  // namespace sinkformer
