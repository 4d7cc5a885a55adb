#include "sinkformer/approx.hpp"
#include "sinkformer/error.hpp"
#include "sinkformer/model.hpp"

#include <random>

namespace sinkformer {

Family parse_family(std::string_view name) {
  if (name == "product") return Family::kProduct;
  if (name == "planted-entropic") return Family::kPlantedEntropic;
  if (name == "block") return Family::kBlock;
  throw Error(ErrorKind::kInvalidInput, "unknown family '" + std::string(name) + "'");
}

std::string to_string(Family family) {
  switch (family) {
    case Family::kProduct: return "product";
    case Family::kPlantedEntropic: return "planted-entropic";
    case Family::kBlock: return "block";
  }
  return "unknown";
}

void SynthOptions::validate() const {
  if (count <= 0) throw Error(ErrorKind::kRange, "count must be positive");
  if (n_min < 1 || n_min > n_max || n_max > kMaxSynthAtoms) {
    throw Error(ErrorKind::kSize, "n range must satisfy 1 <= n_min <= n_max <= 16");
  }
  if (m_min < 1 || m_min > m_max || m_max > kMaxSynthAtoms) {
    throw Error(ErrorKind::kSize, "m range must satisfy 1 <= m_min <= m_max <= 16");
  }
  if (dim <= 0 || teacher_out_dim <= 0 || teacher_hidden <= 0) {
    throw Error(ErrorKind::kRange, "dimensions must be positive");
  }
  if (identity_teacher && teacher_out_dim != dim) {
    throw Error(ErrorKind::kDimensionMismatch, "identity teacher needs teacher_out_dim == dim");
  }
  if (!(teacher_scale > 0.0)) throw Error(ErrorKind::kRange, "teacher_scale must be positive");
  if (block_k < 1) throw Error(ErrorKind::kRange, "block_k must be at least 1");
  if (!(epsilon > 0.0)) throw Error(ErrorKind::kRange, "epsilon must be positive");
}

namespace {

constexpr std::uint64_t kTeacherStream = 0x9e3779b97f4a7c15ULL;

MlpParams random_mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, double scale,
                     std::mt19937_64& rng) {
  const auto fill = [&](Eigen::Index r, Eigen::Index c, double s) {
    std::uniform_real_distribution<double> dist(-s, s);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
    }
    return m;
  };
  MlpParams mlp;
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  mlp.w1 = fill(hidden, in, s1);
  mlp.b1 = fill(hidden, 1, s1).col(0);
  mlp.w2 = scale * fill(out, hidden, s2);
  mlp.b2 = scale * fill(out, 1, s2).col(0);
  return mlp;
}

MlpParams identity_mlp(Eigen::Index dim, Eigen::Index hidden) {
  MlpParams mlp;
  mlp.w1 = Matrix::Zero(hidden, dim);
  mlp.b1 = Vector::Zero(hidden);
  mlp.w2 = Matrix::Zero(dim, hidden);
  mlp.b2 = Vector::Zero(dim);
  mlp.residual = true;
  return mlp;
}

DiscreteMeasure random_cloud(int n, Eigen::Index dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Matrix support(n, dim);
  for (Eigen::Index i = 0; i < support.rows(); ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) support(i, j) = dist(rng);
  }
  return DiscreteMeasure::uniform(support);
}

}  // namespace

Teacher make_teacher(const SynthOptions& opts) {
  opts.validate();
  if (opts.identity_teacher) {
    return {identity_mlp(opts.dim, opts.teacher_hidden), identity_mlp(opts.dim, opts.teacher_hidden)};
  }
  std::mt19937_64 rng(opts.seed ^ kTeacherStream);
  Teacher t;
  t.g = random_mlp(opts.dim, opts.teacher_hidden, opts.teacher_out_dim, opts.teacher_scale, rng);
  t.h = random_mlp(opts.dim, opts.teacher_hidden, opts.teacher_out_dim, opts.teacher_scale, rng);
  return t;
}

std::vector<CouplingSystemSample> synth_coupling_system(const SynthOptions& opts) {
  opts.validate();
  const Teacher teacher = make_teacher(opts);
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<int> n_dist(opts.n_min, opts.n_max);
  std::uniform_int_distribution<int> m_dist(opts.m_min, opts.m_max);
  SinkhornConfig target_cfg;
  target_cfg.epsilon = opts.epsilon;
  target_cfg.tol = 1e-12;
  target_cfg.max_iters = 1000000;

  std::vector<CouplingSystemSample> out;
  out.reserve(static_cast<std::size_t>(opts.count));
  for (int s = 0; s < opts.count; ++s) {
    const int n = n_dist(rng);
    const int m = m_dist(rng);
    DiscreteMeasure mu = random_cloud(n, opts.dim, rng);
    DiscreteMeasure nu = random_cloud(m, opts.dim, rng);
    if (opts.family == Family::kProduct) {
      Coupling target = product_coupling(mu, nu);
      out.push_back({std::move(mu), std::move(nu), std::move(target)});
      continue;
    }
    Matrix gx(n, opts.teacher_out_dim);
    Matrix hy(m, opts.teacher_out_dim);
    for (Eigen::Index i = 0; i < n; ++i) gx.row(i) = mlp_forward(teacher.g, mu.atom(i)).transpose();
    for (Eigen::Index j = 0; j < m; ++j) hy.row(j) = mlp_forward(teacher.h, nu.atom(j)).transpose();
    Coupling target = sinkhorn_solve(CostMatrix(-gx * hy.transpose()), mu, nu, target_cfg).coupling;
    if (opts.family == Family::kBlock) {
      target = block_coupling(target, build_partition(mu.support(), opts.block_k),
                              build_partition(nu.support(), opts.block_k))
                   .coupling;
    }
    out.push_back({std::move(mu), std::move(nu), std::move(target)});
  }
  return out;
}

}  // namespace sinkformer
