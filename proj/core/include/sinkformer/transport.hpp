#pragma once

#include "sinkformer/measures.hpp"

#include <limits>
#include <optional>
#include <vector>

namespace sinkformer {

/// Finite n x m cost with a declared uniform bound max|c| <= bound.
class CostMatrix {
 public:
  /// Without an explicit bound, the bound is max|c| itself.
  explicit CostMatrix(Matrix values, std::optional<double> bound = std::nullopt);

  const Matrix& values() const { return values_; }
  double bound() const { return bound_; }
  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }

 private:
  Matrix values_;
  double bound_;
};

struct SinkhornConfig {
  double epsilon = 1.0;
  int max_iters = 10000;
  /// L1 violation of the column marginal after a row-feasible update.
  double tol = 1e-9;
  bool log_domain = true;

  void validate() const;
};

/// Sinkhorn plan with mass[i,j] = u[i] exp(-c[i,j]/eps) v[j] a_i b_j.
/// Potentials are gauge-fixed so that u[0] == 1.
struct SinkhornSolution {
  Coupling coupling;
  Vector u;
  Vector v;
  /// eps * log(u), eps * log(v); finite even when u or v would overflow.
  Vector f;
  Vector g;
  int iters = 0;
  double final_violation = 0.0;  ///< L1 column violation at exit
  double row_violation = 0.0;    ///< L1 row violation after the rescale pass
};

/// Entropic OT by alternating scaling. Throws ConvergenceError when the
/// column violation is still above cfg.tol after cfg.max_iters sweeps.
SinkhornSolution sinkhorn_solve(const CostMatrix& cost, const DiscreteMeasure& mu,
                                const DiscreteMeasure& nu, const SinkhornConfig& cfg = {});

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// sum c*pi + eps * KL(pi || ref); +inf when pi is not absolutely continuous
/// with respect to ref.
double entropic_objective(const Coupling& pi, const CostMatrix& cost, double epsilon,
                          const Coupling& ref);

double kl_divergence(const Coupling& p, const Coupling& q);
double kl_divergence(const Matrix& p, const Matrix& q);

// ---------------------------------------------------------------------------
// Exact Wasserstein-1 by min-cost flow.

/// Ground distance between two atoms. `is_metric` declares the metric axioms;
/// when false the duality certificate is skipped.
struct GroundMetric {
  std::function<double(const Point&, const Point&)> distance;
  bool is_metric = true;
};

GroundMetric euclidean_metric();

inline constexpr Eigen::Index kMaxW1Support = 512;
inline constexpr double kW1MassScale = 1e9;

struct W1Result {
  double value = 0.0;
  /// Certified bound on |value - W1(p, q)| caused by rounding the weights to
  /// multiples of 1/kW1MassScale.
  double rounding_slack = 0.0;
  bool metric = true;
  /// |primal - dual| of the transportation LP; NaN when skipped.
  double duality_gap = std::numeric_limits<double>::quiet_NaN();
};

/// Optimal value of the transportation LP with the given cost between the
/// weight vectors p and q (each summing to 1).
W1Result solve_transport_lp(const Matrix& cost, const Vector& p, const Vector& q,
                            bool certify_duality = true);

W1Result exact_w1(const DiscreteMeasure& p, const DiscreteMeasure& q,
                  const GroundMetric& metric = euclidean_metric());

/// W1 between two couplings seen as measures on X x Y with the sum metric
/// d_X + d_Y (Euclidean factors). Zero-mass atoms are dropped.
double coupling_w1(const Coupling& a, const Coupling& b);

// ---------------------------------------------------------------------------
// Stability probes.

struct LipschitzProbe {
  double ratio = 0.0;
  double w1 = 0.0;
  double cost_gap = 0.0;
};

/// W1 between the Sinkhorn plans of two costs, divided by max|c1 - c2|.
LipschitzProbe lipschitz_probe(const CostMatrix& c1, const CostMatrix& c2,
                               const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                               const SinkhornConfig& cfg = {});

struct CostSequenceStep {
  int n = 0;
  double cost_gap = 0.0;        ///< max|c_n - c|
  double w1_to_limit = 0.0;     ///< W1(S_{c_n}, S_c)
  double objective_gap = 0.0;   ///< J_c(S_{c_n}) - J_c(S_c) >= 0
};

/// Solves along c_n = c + direction / n and compares each plan with the plan
/// of c. `direction` is rescaled to max|direction| = 1.
std::vector<CostSequenceStep> cost_sequence_probe(const CostMatrix& cost, const Matrix& direction,
                                                  const DiscreteMeasure& mu,
                                                  const DiscreteMeasure& nu,
                                                  const std::vector<int>& ns,
                                                  const SinkhornConfig& cfg = {});

}  // namespace sinkformer
