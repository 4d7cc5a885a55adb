#pragma once

#include "sinkformer/measures.hpp"
#include "sinkformer/transport.hpp"

#include <vector>

namespace sinkformer {

/// Disjoint cover of a support by index sets; every cell has diameter
/// at most 1/(2k).
struct Partition {
  std::vector<std::vector<Eigen::Index>> cells;
  std::vector<std::size_t> cell_of;  ///< atom index -> cell index
  int k = 1;
};

/// Greedy closed-ball cover of radius 1/(4k), centres in index order, then
/// disjointified: cell_i = ball_i minus earlier cells. Empty cells dropped.
Partition build_partition(const Matrix& support, int k);

struct BlockApproximation {
  Coupling coupling;
  Density density;  ///< piecewise constant on cells x cells
};

/// Piecewise-constant-density version of pi on px x py. Marginals are kept
/// exactly; cells without marginal mass get density zero.
BlockApproximation block_coupling(const Coupling& pi, const Partition& px, const Partition& py);

struct EntropicRoundtrip {
  CostMatrix cost;
  SinkhornSolution recovered;
  double w1_gap = 0.0;
};

/// Cost -eps log(rho) for pi's density rho, its Sinkhorn plan, and the W1
/// distance back to pi. Needs rho > 0 everywhere.
EntropicRoundtrip entropic_representation_roundtrip(const Coupling& pi, double epsilon,
                                                    const SinkhornConfig& cfg = {});

/// (1 - delta) pi + delta (mu x nu), delta in [0, 1].
Coupling regularize_mix(const Coupling& pi, double delta);

struct PipelineResult {
  Coupling coupling;
  Density density;
  double achieved_w1 = 0.0;
  double delta_first = 0.0;
  double delta_last = 0.0;
  double stage_w1[3] = {0.0, 0.0, 0.0};
};

/// Mix towards the product, Sinkhorn round trip with cost -eps log rho, then a
/// second small mix. Each stage must stay within target_w1 / 3 of its input;
/// the mixing weights are found by halving. Throws kUnattainable otherwise.
PipelineResult regularization_pipeline(const Coupling& pi, double target_w1,
                                       const SinkhornConfig& cfg = {}, int max_halvings = 60);

struct PerturbationReport {
  double uv_deviation = 0.0;  ///< max_ij |u_i v_j - 1|
  double w1_to_limit = 0.0;   ///< W1 to the unperturbed plan
  int iters = 0;
};

/// For each perturbed pair of marginals (same supports as mu0, nu0), solves
/// the entropic problem with cost -eps log s0 and reports how far the
/// potentials are from 1. s0 must be a feasible density for (mu0, nu0).
std::vector<PerturbationReport> schrodinger_perturbation_probe(
    const Density& s0, const DiscreteMeasure& mu0, const DiscreteMeasure& nu0,
    const std::vector<std::pair<DiscreteMeasure, DiscreteMeasure>>& perturbed,
    const SinkhornConfig& cfg = {});

}  // namespace sinkformer
