#include "sinkformer/approx.hpp"

#include "sinkformer/error.hpp"

#include <cmath>
#include <sstream>

namespace sinkformer {

Partition build_partition(const Matrix& support, int k) {
  if (support.rows() == 0) throw Error(ErrorKind::kInvalidInput, "cannot partition an empty support");
  if (k <= 0) throw Error(ErrorKind::kRange, "partition resolution k must be positive");
  const double radius = 1.0 / (4.0 * static_cast<double>(k));
  constexpr std::size_t kUnassigned = static_cast<std::size_t>(-1);

  Partition out;
  out.k = k;
  out.cell_of.assign(static_cast<std::size_t>(support.rows()), kUnassigned);
  for (Eigen::Index centre = 0; centre < support.rows(); ++centre) {
    std::vector<Eigen::Index> cell;
    for (Eigen::Index j = 0; j < support.rows(); ++j) {
      if (out.cell_of[static_cast<std::size_t>(j)] != kUnassigned) continue;
      if ((support.row(j) - support.row(centre)).norm() <= radius) cell.push_back(j);
    }
    if (cell.empty()) continue;
    for (const auto j : cell) out.cell_of[static_cast<std::size_t>(j)] = out.cells.size();
    out.cells.push_back(std::move(cell));
  }
  return out;
}

BlockApproximation block_coupling(const Coupling& pi, const Partition& px, const Partition& py) {
  const Matrix& mass = pi.mass();
  if (px.cell_of.size() != static_cast<std::size_t>(mass.rows()) ||
      py.cell_of.size() != static_cast<std::size_t>(mass.cols())) {
    throw Error(ErrorKind::kDimensionMismatch, "partitions do not cover the coupling supports");
  }
  // Realised marginals of pi, not the declared ones.
  const auto [row, col] = marginals(pi);
  const std::size_t nx = px.cells.size();
  const std::size_t ny = py.cells.size();
  Matrix block_mass = Matrix::Zero(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(ny));
  Vector row_mass = Vector::Zero(static_cast<Eigen::Index>(nx));
  Vector col_mass = Vector::Zero(static_cast<Eigen::Index>(ny));
  for (Eigen::Index i = 0; i < mass.rows(); ++i) {
    const auto ci = static_cast<Eigen::Index>(px.cell_of[static_cast<std::size_t>(i)]);
    row_mass[ci] += row[i];
    for (Eigen::Index j = 0; j < mass.cols(); ++j) {
      block_mass(ci, static_cast<Eigen::Index>(py.cell_of[static_cast<std::size_t>(j)])) += mass(i, j);
    }
  }
  for (Eigen::Index j = 0; j < mass.cols(); ++j) {
    col_mass[static_cast<Eigen::Index>(py.cell_of[static_cast<std::size_t>(j)])] += col[j];
  }

  Matrix block_density = Matrix::Zero(block_mass.rows(), block_mass.cols());
  for (Eigen::Index r = 0; r < block_mass.rows(); ++r) {
    for (Eigen::Index c = 0; c < block_mass.cols(); ++c) {
      const double ref = row_mass[r] * col_mass[c];
      if (ref > 0.0) block_density(r, c) = block_mass(r, c) / ref;
    }
  }

  Matrix out_mass(mass.rows(), mass.cols());
  Matrix density(mass.rows(), mass.cols());
  for (Eigen::Index i = 0; i < mass.rows(); ++i) {
    const auto ci = static_cast<Eigen::Index>(px.cell_of[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < mass.cols(); ++j) {
      const auto cj = static_cast<Eigen::Index>(py.cell_of[static_cast<std::size_t>(j)]);
      density(i, j) = block_density(ci, cj);
      out_mass(i, j) = density(i, j) * row[i] * col[j];
    }
  }
  return {Coupling(pi.rows(), pi.cols(), std::move(out_mass)), Density{std::move(density)}};
}

EntropicRoundtrip entropic_representation_roundtrip(const Coupling& pi, double epsilon,
                                                    const SinkhornConfig& cfg) {
  const Density rho = density_of(pi);
  if (!(rho.min() > 0.0)) {
    throw Error(ErrorKind::kStrictPositivity,
                "entropic representation needs a strictly positive density; apply regularize_mix");
  }
  SinkhornConfig solve_cfg = cfg;
  solve_cfg.epsilon = epsilon;
  CostMatrix cost((-epsilon * rho.values.array().log()).matrix());
  SinkhornSolution recovered = sinkhorn_solve(cost, pi.rows(), pi.cols(), solve_cfg);
  const double gap = coupling_w1(recovered.coupling, pi);
  return {std::move(cost), std::move(recovered), gap};
}

Coupling regularize_mix(const Coupling& pi, double delta) {
  if (!(delta >= 0.0 && delta <= 1.0)) {
    throw Error(ErrorKind::kRange, "mixing weight delta must lie in [0, 1]");
  }
  const Matrix product = pi.rows().weights() * pi.cols().weights().transpose();
  return Coupling(pi.rows(), pi.cols(), (1.0 - delta) * pi.mass() + delta * product);
}

namespace {

constexpr double kFirstMix = 0.5;

// Largest delta in kFirstMix * 2^-t whose mix stays within `budget` of pi.
std::pair<Coupling, double> mix_within(const Coupling& pi, double budget, int max_halvings,
                                       const char* stage, double& w1_out) {
  double delta = kFirstMix;
  for (int t = 0; t <= max_halvings; ++t, delta *= 0.5) {
    Coupling mixed = regularize_mix(pi, delta);
    const double w1 = coupling_w1(mixed, pi);
    const bool moved = mixed.mass() != pi.mass();
    if (w1 <= budget && (budget > 0.0 || !moved)) {
      w1_out = w1;
      return {std::move(mixed), delta};
    }
  }
  std::ostringstream os;
  os << stage << ": no mixing weight down to " << delta * 2.0 << " meets the W1 budget " << budget;
  throw Error(ErrorKind::kUnattainable, os.str());
}

}  // namespace

PipelineResult regularization_pipeline(const Coupling& pi, double target_w1,
                                       const SinkhornConfig& cfg, int max_halvings) {
  if (!(target_w1 >= 0.0)) throw Error(ErrorKind::kRange, "W1 budget must be nonnegative");
  const double budget = target_w1 / 3.0;
  double stage_w1[3] = {0.0, 0.0, 0.0};

  // Stage 1: strict positivity. Already-positive plans pass through.
  double delta_first = 0.0;
  Coupling first = pi;
  if (!(density_of(pi).min() > 0.0)) {
    auto [mixed, delta] = mix_within(pi, budget, max_halvings, "stage 1", stage_w1[0]);
    first = std::move(mixed);
    delta_first = delta;
  }

  // Stage 2: Sinkhorn round trip with cost -eps log rho (u K v form).
  const EntropicRoundtrip trip = entropic_representation_roundtrip(first, cfg.epsilon, cfg);
  stage_w1[1] = trip.w1_gap;
  if (trip.w1_gap > budget) {
    std::ostringstream os;
    os << "stage 2: sinkhorn round trip moved the plan by " << trip.w1_gap
       << ", above the budget " << budget;
    throw Error(ErrorKind::kUnattainable, os.str());
  }

  // Stage 3: uniform positivity floor.
  auto [last, delta_last] =
      mix_within(trip.recovered.coupling, budget, max_halvings, "stage 3", stage_w1[2]);

  const double achieved = coupling_w1(last, pi);
  if (achieved > target_w1) {
    std::ostringstream os;
    os << "pipeline reached W1 " << achieved << " above the target " << target_w1;
    throw Error(ErrorKind::kUnattainable, os.str());
  }
  Density density = density_of(last);
  PipelineResult out{std::move(last), std::move(density), achieved, delta_first, delta_last, {}};
  std::copy(std::begin(stage_w1), std::end(stage_w1), std::begin(out.stage_w1));
  return out;
}

std::vector<PerturbationReport> schrodinger_perturbation_probe(
    const Density& s0, const DiscreteMeasure& mu0, const DiscreteMeasure& nu0,
    const std::vector<std::pair<DiscreteMeasure, DiscreteMeasure>>& perturbed,
    const SinkhornConfig& cfg) {
  if (s0.values.rows() != mu0.size() || s0.values.cols() != nu0.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "density shape does not match the base measures");
  }
  if (!(s0.min() > 0.0)) {
    throw Error(ErrorKind::kStrictPositivity, "base density must be strictly positive");
  }
  const Coupling limit = coupling_from_density(s0, mu0, nu0, std::max(kCouplingMarginalTol, cfg.tol));
  const CostMatrix cost((-cfg.epsilon * s0.values.array().log()).matrix());

  std::vector<PerturbationReport> reports;
  reports.reserve(perturbed.size());
  for (const auto& [mu, nu] : perturbed) {
    if (mu.size() != mu0.size() || nu.size() != nu0.size() || mu.support() != mu0.support() ||
        nu.support() != nu0.support()) {
      throw Error(ErrorKind::kInvalidInput,
                  "perturbed measures must keep the base supports; only weights may move");
    }
    const SinkhornSolution sol = sinkhorn_solve(cost, mu, nu, cfg);
    const Matrix uv = sol.u * sol.v.transpose();
    PerturbationReport report;
    report.uv_deviation = (uv.array() - 1.0).abs().maxCoeff();
    report.w1_to_limit = coupling_w1(sol.coupling, limit);
    report.iters = sol.iters;
    reports.push_back(report);
  }
  return reports;
}

}  // namespace sinkformer
