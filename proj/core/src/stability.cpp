#include "sinkformer/error.hpp"
#include "sinkformer/transport.hpp"

#include <algorithm>
#include <cmath>

namespace sinkformer {

LipschitzProbe lipschitz_probe(const CostMatrix& c1, const CostMatrix& c2,
                               const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                               const SinkhornConfig& cfg) {
  if (c1.rows() != c2.rows() || c1.cols() != c2.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "probe costs differ in shape");
  }
  LipschitzProbe probe;
  probe.cost_gap = (c1.values() - c2.values()).cwiseAbs().maxCoeff();
  if (!(probe.cost_gap > 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "lipschitz probe needs distinct costs (gap is zero)");
  }
  const SinkhornSolution s1 = sinkhorn_solve(c1, mu, nu, cfg);
  const SinkhornSolution s2 = sinkhorn_solve(c2, mu, nu, cfg);
  probe.w1 = coupling_w1(s1.coupling, s2.coupling);
  probe.ratio = probe.w1 / probe.cost_gap;
  return probe;
}

std::vector<CostSequenceStep> cost_sequence_probe(const CostMatrix& cost, const Matrix& direction,
                                                  const DiscreteMeasure& mu,
                                                  const DiscreteMeasure& nu,
                                                  const std::vector<int>& ns,
                                                  const SinkhornConfig& cfg) {
  if (direction.rows() != cost.rows() || direction.cols() != cost.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "perturbation direction differs in shape");
  }
  const double scale = direction.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) throw Error(ErrorKind::kInvalidInput, "perturbation direction is zero");
  const Matrix unit = direction / scale;

  const SinkhornSolution limit = sinkhorn_solve(cost, mu, nu, cfg);
  const Coupling ref = product_coupling(mu, nu);
  const double limit_objective = entropic_objective(limit.coupling, cost, cfg.epsilon, ref);
  // Equibounded sequence: every c_n shares the bound of c plus one unit.
  const double bound = cost.bound() + 1.0;

  std::vector<CostSequenceStep> steps;
  steps.reserve(ns.size());
  for (const int n : ns) {
    if (n <= 0) throw Error(ErrorKind::kRange, "sequence indices must be positive");
    const CostMatrix cn(cost.values() + unit / static_cast<double>(n), bound);
    const SinkhornSolution sol = sinkhorn_solve(cn, mu, nu, cfg);
    CostSequenceStep step;
    step.n = n;
    step.cost_gap = (cn.values() - cost.values()).cwiseAbs().maxCoeff();
    step.w1_to_limit = coupling_w1(sol.coupling, limit.coupling);
    step.objective_gap =
        entropic_objective(sol.coupling, cost, cfg.epsilon, ref) - limit_objective;
    steps.push_back(step);
  }
  return steps;
}

}  // namespace sinkformer
