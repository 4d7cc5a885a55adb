#pragma once

#include "sinkformer/attention.hpp"
#include "sinkformer/measures.hpp"
#include "sinkformer/transport.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sinkformer {

/// Query and key encoders of a Sinkhorn Transformer. With `shared` the key
/// branch reuses q_encoder and k_encoder is ignored.
struct SinkhornTransformerParams {
  EncoderParams q_encoder;
  EncoderParams k_encoder;
  bool shared = false;

  const EncoderParams& key_encoder() const { return shared ? q_encoder : k_encoder; }
  Eigen::Index out_dim() const { return q_encoder.out_dim(); }
  void validate() const;
};

SinkhornTransformerParams random_transformer(const EncoderShape& shape, bool shared,
                                             std::mt19937_64& rng);
SinkhornTransformerParams zeros_like(const SinkhornTransformerParams& params);

/// Visits q_encoder tensors (prefixed "q.") and, unless shared, k_encoder
/// tensors (prefixed "k.").
template <class Params, class F>
void visit_parameters(Params& params, F&& f) {
  visit_tensors(params.q_encoder, [&](const std::string& name, auto& t) { f("q." + name, t); });
  if (!params.shared) {
    visit_tensors(params.k_encoder, [&](const std::string& name, auto& t) { f("k." + name, t); });
  }
}

struct CouplingSystemSample {
  DiscreteMeasure mu;
  DiscreteMeasure nu;
  Coupling target;
};

/// c[i,j] = -<Q(mu, x_i), K(nu, y_j)>.
CostMatrix cost_from_encoders(const SinkhornTransformerParams& params, const DiscreteMeasure& mu,
                              const DiscreteMeasure& nu);

/// Sinkhorn plan of the encoder cost; always a coupling of (mu, nu).
SinkhornSolution forward(const SinkhornTransformerParams& params, const DiscreteMeasure& mu,
                         const DiscreteMeasure& nu, const SinkhornConfig& cfg = {});

enum class LossKind { kKl, kFrobenius };

LossKind parse_loss_kind(std::string_view name);
std::string to_string(LossKind kind);

/// KL(target || pred) or sum (pred - target)^2.
double loss(const Matrix& pred, const Matrix& target, LossKind kind);
double loss(const SinkhornSolution& pred, const Coupling& target, LossKind kind);

/// Log-domain Sinkhorn run for exactly `steps` sweeps, keeping every
/// potential so the sweep can be differentiated in reverse.
struct UnrolledSinkhorn {
  Matrix cost;
  Vector log_a;
  Vector log_b;
  double epsilon = 1.0;
  std::vector<Vector> f;  ///< f[0] = 0, f[t] after sweep t
  std::vector<Vector> g;  ///< g[0] unused, g[t] after sweep t
  Matrix log_plan;

  Matrix plan() const { return log_plan.array().exp().matrix(); }
};

UnrolledSinkhorn unrolled_sinkhorn(const Matrix& cost, const Vector& a, const Vector& b,
                                   double epsilon, int steps);

/// dLoss/dcost given dLoss/dlog_plan.
Matrix unrolled_sinkhorn_backward(const UnrolledSinkhorn& run, const Matrix& d_log_plan);

struct TrainConfig {
  std::uint64_t seed = 0;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int iterations = 200;
  int batch_size = 8;
  /// Sweeps differentiated through during training.
  int unroll = 50;
  LossKind loss = LossKind::kKl;
  int eval_every = 10;
  double divergence_threshold = 1e6;
  /// Used for evaluation (converged solves) and for epsilon during training.
  SinkhornConfig sinkhorn;

  void validate() const;
};

struct GradientResult {
  SinkhornTransformerParams grad;
  double loss = 0.0;  ///< mean over the batch
};

/// Mean unrolled-Sinkhorn loss over the batch.
double batch_loss(const SinkhornTransformerParams& params,
                  std::span<const CouplingSystemSample> batch, const TrainConfig& cfg);

/// Reverse-mode gradient of batch_loss. Throws kNumeric naming the tensor
/// when a gradient entry is not finite.
GradientResult grad(const SinkhornTransformerParams& params,
                    std::span<const CouplingSystemSample> batch, const TrainConfig& cfg);

struct HistoryEntry {
  int iteration = 0;
  double heldout_loss = 0.0;
  double sup_w1 = 0.0;      ///< max over held-out samples of W1(pred, target)
  double sup_rel_w1 = 0.0;  ///< max of W1 / product-support diameter
};

struct TrainResult {
  SinkhornTransformerParams params;
  std::vector<HistoryEntry> history;
};

struct SampleW1 {
  double w1 = 0.0;
  double diameter = 0.0;
};

SampleW1 evaluate_w1(const SinkhornTransformerParams& params, const CouplingSystemSample& sample,
                     const SinkhornConfig& cfg);

/// Gradient descent with heavy-ball momentum. Held-out sup-W1 is recorded at
/// iteration 0, every eval_every iterations, and at the end.
TrainResult train(std::span<const CouplingSystemSample> train_set,
                  std::span<const CouplingSystemSample> heldout,
                  const SinkhornTransformerParams& params0, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Synthetic coupling systems.

enum class Family { kProduct, kPlantedEntropic, kBlock };

Family parse_family(std::string_view name);
std::string to_string(Family family);

inline constexpr int kMaxSynthAtoms = 16;

struct SynthOptions {
  Family family = Family::kProduct;
  std::uint64_t seed = 0;
  int count = 32;
  int n_min = 3;
  int n_max = 6;
  int m_min = 3;
  int m_max = 6;
  Eigen::Index dim = 2;
  /// Teacher g, h: dim -> teacher_hidden -> teacher_out_dim MLPs.
  Eigen::Index teacher_out_dim = 2;
  Eigen::Index teacher_hidden = 8;
  double teacher_scale = 2.0;
  bool identity_teacher = false;
  int block_k = 2;
  /// Regularization of the planted Sinkhorn targets.
  double epsilon = 1.0;

  void validate() const;
};

/// Hidden pointwise maps of the planted cost c*(x, y) = -<g(x), h(y)>.
struct Teacher {
  MlpParams g;
  MlpParams h;
};

Teacher make_teacher(const SynthOptions& opts);

std::vector<CouplingSystemSample> synth_coupling_system(const SynthOptions& opts);

}  // namespace sinkformer
