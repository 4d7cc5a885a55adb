#include "sinkformer/model.hpp"

#include "sinkformer/error.hpp"

#include <cmath>

namespace sinkformer {

void SinkhornTransformerParams::validate() const {
  q_encoder.validate();
  if (!shared) {
    k_encoder.validate();
    if (k_encoder.out_dim() != q_encoder.out_dim()) {
      throw Error(ErrorKind::kDimensionMismatch, "query and key encoders end in different dimensions");
    }
  }
}

SinkhornTransformerParams random_transformer(const EncoderShape& shape, bool shared,
                                             std::mt19937_64& rng) {
  SinkhornTransformerParams params;
  params.shared = shared;
  params.q_encoder = random_encoder(shape, rng);
  if (!shared) params.k_encoder = random_encoder(shape, rng);
  return params;
}

SinkhornTransformerParams zeros_like(const SinkhornTransformerParams& params) {
  SinkhornTransformerParams out;
  out.shared = params.shared;
  out.q_encoder = zeros_like(params.q_encoder);
  if (!params.shared) out.k_encoder = zeros_like(params.k_encoder);
  return out;
}

CostMatrix cost_from_encoders(const SinkhornTransformerParams& params, const DiscreteMeasure& mu,
                              const DiscreteMeasure& nu) {
  params.validate();
  const Matrix q = encode_atoms(params.q_encoder, mu);
  const Matrix k = encode_atoms(params.key_encoder(), nu);
  return CostMatrix(-q * k.transpose());
}

SinkhornSolution forward(const SinkhornTransformerParams& params, const DiscreteMeasure& mu,
                         const DiscreteMeasure& nu, const SinkhornConfig& cfg) {
  return sinkhorn_solve(cost_from_encoders(params, mu, nu), mu, nu, cfg);
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "kl") return LossKind::kKl;
  if (name == "frobenius") return LossKind::kFrobenius;
  throw Error(ErrorKind::kInvalidInput, "unknown loss kind '" + std::string(name) + "'");
}

std::string to_string(LossKind kind) { return kind == LossKind::kKl ? "kl" : "frobenius"; }

double loss(const Matrix& pred, const Matrix& target, LossKind kind) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "prediction and target have different supports");
  }
  if (kind == LossKind::kKl) return kl_divergence(target, pred);
  return (pred - target).squaredNorm();
}

double loss(const SinkhornSolution& pred, const Coupling& target, LossKind kind) {
  return loss(pred.coupling.mass(), target.mass(), kind);
}

namespace {

// Row-wise (over j) or column-wise (over i) normalised exp of the LSE argument.
Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - top).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double top = v.maxCoeff();
  return top + std::log((v.array() - top).exp().sum());
}

// lb_j + (g_j - c_ij)/eps, indexed (i, j).
Matrix row_logits(const Matrix& c, const Vector& log_b, const Vector& g, double eps) {
  return ((-c).rowwise() + g.transpose()) / eps + log_b.transpose().replicate(c.rows(), 1);
}

// la_i + (f_i - c_ij)/eps, indexed (i, j).
Matrix col_logits(const Matrix& c, const Vector& log_a, const Vector& f, double eps) {
  return ((-c).colwise() + f) / eps + log_a.replicate(1, c.cols());
}

}  // namespace

UnrolledSinkhorn unrolled_sinkhorn(const Matrix& cost, const Vector& a, const Vector& b,
                                   double epsilon, int steps) {
  if (steps <= 0) throw Error(ErrorKind::kRange, "unroll length must be positive");
  if (cost.rows() != a.size() || cost.cols() != b.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "cost shape does not match the marginals");
  }
  UnrolledSinkhorn run;
  run.cost = cost;
  run.log_a = a.array().log().matrix();
  run.log_b = b.array().log().matrix();
  run.epsilon = epsilon;
  run.f.assign(static_cast<std::size_t>(steps) + 1, Vector::Zero(cost.rows()));
  run.g.assign(static_cast<std::size_t>(steps) + 1, Vector::Zero(cost.cols()));
  for (int t = 1; t <= steps; ++t) {
    const auto ut = static_cast<std::size_t>(t);
    const Matrix cl = col_logits(cost, run.log_a, run.f[ut - 1], epsilon);
    for (Eigen::Index j = 0; j < cost.cols(); ++j) run.g[ut][j] = -epsilon * log_sum_exp(cl.col(j));
    const Matrix rl = row_logits(cost, run.log_b, run.g[ut], epsilon);
    for (Eigen::Index i = 0; i < cost.rows(); ++i) {
      run.f[ut][i] = -epsilon * log_sum_exp(rl.row(i).transpose());
    }
  }
  const Vector& f = run.f.back();
  const Vector& g = run.g.back();
  run.log_plan = ((-cost).colwise() + f).rowwise() + g.transpose();
  run.log_plan /= epsilon;
  run.log_plan.colwise() += run.log_a;
  run.log_plan.rowwise() += run.log_b.transpose();
  return run;
}

Matrix unrolled_sinkhorn_backward(const UnrolledSinkhorn& run, const Matrix& d_log_plan) {
  const double eps = run.epsilon;
  Matrix d_cost = -d_log_plan / eps;
  Vector d_f = d_log_plan.rowwise().sum() / eps;
  Vector d_g = d_log_plan.colwise().sum().transpose() / eps;
  for (std::size_t t = run.f.size() - 1; t >= 1; --t) {
    // f[t] = -eps LSE_j(row logits of g[t]): df/dg = -R, df/dc = R.
    const Matrix r = softmax_rows(row_logits(run.cost, run.log_b, run.g[t], eps));
    d_g -= r.transpose() * d_f;
    d_cost += d_f.asDiagonal() * r;
    // g[t] = -eps LSE_i(col logits of f[t-1]): dg/df = -C, dg/dc = C.
    const Matrix c = softmax_rows(col_logits(run.cost, run.log_a, run.f[t - 1], eps).transpose())
                         .transpose();
    d_f = -(c * d_g);
    d_cost += c * d_g.asDiagonal();
    d_g.setZero();
  }
  return d_cost;
}

namespace {

struct SampleForward {
  EncoderTape q_tape;
  EncoderTape k_tape;
  Matrix q_out;
  Matrix k_out;
  UnrolledSinkhorn run;
};

SampleForward sample_forward(const SinkhornTransformerParams& params,
                             const CouplingSystemSample& sample, const TrainConfig& cfg) {
  SampleForward fw;
  fw.q_out = encode_atoms(params.q_encoder, sample.mu, &fw.q_tape);
  fw.k_out = encode_atoms(params.key_encoder(), sample.nu, &fw.k_tape);
  fw.run = unrolled_sinkhorn(-fw.q_out * fw.k_out.transpose(), sample.mu.weights(),
                             sample.nu.weights(), cfg.sinkhorn.epsilon, cfg.unroll);
  return fw;
}

double sample_loss(const UnrolledSinkhorn& run, const Matrix& target, LossKind kind) {
  if (kind == LossKind::kKl) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < target.cols(); ++j) {
      for (Eigen::Index i = 0; i < target.rows(); ++i) {
        const double t = target(i, j);
        if (t > 0.0) acc += t * (std::log(t) - run.log_plan(i, j));
      }
    }
    return acc;
  }
  return (run.plan() - target).squaredNorm();
}

Matrix sample_loss_gradient(const UnrolledSinkhorn& run, const Matrix& target, LossKind kind) {
  if (kind == LossKind::kKl) return -target;
  const Matrix plan = run.plan();
  return 2.0 * (plan - target).cwiseProduct(plan);
}

void check_batch(const SinkhornTransformerParams& params,
                 std::span<const CouplingSystemSample> batch, const TrainConfig& cfg) {
  cfg.validate();
  params.validate();
  if (batch.empty()) throw Error(ErrorKind::kInvalidInput, "batch is empty");
}

}  // namespace

double batch_loss(const SinkhornTransformerParams& params,
                  std::span<const CouplingSystemSample> batch, const TrainConfig& cfg) {
  check_batch(params, batch, cfg);
  double acc = 0.0;
  for (const auto& sample : batch) {
    acc += sample_loss(sample_forward(params, sample, cfg).run, sample.target.mass(), cfg.loss);
  }
  return acc / static_cast<double>(batch.size());
}

GradientResult grad(const SinkhornTransformerParams& params,
                    std::span<const CouplingSystemSample> batch, const TrainConfig& cfg) {
  check_batch(params, batch, cfg);
  GradientResult out{zeros_like(params), 0.0};
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& sample : batch) {
    const SampleForward fw = sample_forward(params, sample, cfg);
    out.loss += scale * sample_loss(fw.run, sample.target.mass(), cfg.loss);
    const Matrix d_log_plan = scale * sample_loss_gradient(fw.run, sample.target.mass(), cfg.loss);
    const Matrix d_cost = unrolled_sinkhorn_backward(fw.run, d_log_plan);
    // cost = -Q K^T
    encoder_backward(params.q_encoder, fw.q_tape, -d_cost * fw.k_out, out.grad.q_encoder);
    encoder_backward(params.key_encoder(), fw.k_tape, -d_cost.transpose() * fw.q_out,
                     params.shared ? out.grad.q_encoder : out.grad.k_encoder);
  }
  visit_parameters(std::as_const(out.grad), [](const std::string& name, const auto& t) {
    if (!t.allFinite()) {
      throw Error(ErrorKind::kNumeric, "non-finite gradient in tensor " + name);
    }
  });
  return out;
}

SampleW1 evaluate_w1(const SinkhornTransformerParams& params, const CouplingSystemSample& sample,
                     const SinkhornConfig& cfg) {
  const SinkhornSolution pred = forward(params, sample.mu, sample.nu, cfg);
  return {coupling_w1(pred.coupling, sample.target), product_diameter(sample.target)};
}

}  // namespace sinkformer
