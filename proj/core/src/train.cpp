#include "sinkformer/error.hpp"
#include "sinkformer/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace sinkformer {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorKind::kRange, "learning_rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::kRange, "momentum must be in [0, 1)");
  if (iterations < 0) throw Error(ErrorKind::kRange, "iterations must be nonnegative");
  if (batch_size <= 0) throw Error(ErrorKind::kRange, "batch_size must be positive");
  if (unroll < 5) throw Error(ErrorKind::kRange, "unroll must be at least 5");
  if (eval_every <= 0) throw Error(ErrorKind::kRange, "eval_every must be positive");
  if (!(divergence_threshold > 0.0)) throw Error(ErrorKind::kRange, "divergence_threshold must be positive");
  sinkhorn.validate();
}

namespace {

HistoryEntry evaluate(const SinkhornTransformerParams& params,
                      std::span<const CouplingSystemSample> heldout, const TrainConfig& cfg,
                      int iteration) {
  HistoryEntry entry;
  entry.iteration = iteration;
  for (const auto& sample : heldout) {
    const SinkhornSolution pred = forward(params, sample.mu, sample.nu, cfg.sinkhorn);
    entry.heldout_loss += loss(pred, sample.target, cfg.loss);
    const double w1 = coupling_w1(pred.coupling, sample.target);
    const double diam = product_diameter(sample.target);
    entry.sup_w1 = std::max(entry.sup_w1, w1);
    entry.sup_rel_w1 = std::max(entry.sup_rel_w1, diam > 0.0 ? w1 / diam : 0.0);
  }
  entry.heldout_loss /= static_cast<double>(heldout.size());
  return entry;
}

template <class F>
void zip_parameters(SinkhornTransformerParams& a, SinkhornTransformerParams& b,
                    const SinkhornTransformerParams& c, F&& f) {
  std::vector<Eigen::Map<Eigen::VectorXd>> ta;
  std::vector<Eigen::Map<Eigen::VectorXd>> tb;
  std::vector<Eigen::Map<const Eigen::VectorXd>> tc;
  visit_parameters(a, [&](const std::string&, auto& t) { ta.emplace_back(t.data(), t.size()); });
  visit_parameters(b, [&](const std::string&, auto& t) { tb.emplace_back(t.data(), t.size()); });
  visit_parameters(c, [&](const std::string&, const auto& t) { tc.emplace_back(t.data(), t.size()); });
  for (std::size_t i = 0; i < ta.size(); ++i) f(ta[i], tb[i], tc[i]);
}

}  // namespace

TrainResult train(std::span<const CouplingSystemSample> train_set,
                  std::span<const CouplingSystemSample> heldout,
                  const SinkhornTransformerParams& params0, const TrainConfig& cfg) {
  cfg.validate();
  params0.validate();
  if (train_set.empty()) throw Error(ErrorKind::kInvalidInput, "training set is empty");
  if (heldout.empty()) throw Error(ErrorKind::kInvalidInput, "held-out set is empty");

  TrainResult result{params0, {}};
  SinkhornTransformerParams velocity = zeros_like(params0);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  std::vector<CouplingSystemSample> batch;

  result.history.push_back(evaluate(result.params, heldout, cfg, 0));
  for (int it = 1; it <= cfg.iterations; ++it) {
    batch.clear();
    for (int b = 0; b < cfg.batch_size && b < static_cast<int>(train_set.size()); ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(train_set[order[cursor++]]);
    }
    const GradientResult g = grad(result.params, batch, cfg);
    if (!std::isfinite(g.loss) || g.loss > cfg.divergence_threshold) {
      std::ostringstream msg;
      msg << "training diverged at iteration " << it << ": batch loss " << g.loss
          << " exceeds " << cfg.divergence_threshold;
      throw Error(ErrorKind::kDivergence, msg.str());
    }
    zip_parameters(velocity, result.params, g.grad, [&](auto& v, auto& p, const auto& d) {
      v = cfg.momentum * v - cfg.learning_rate * d;
      p += v;
    });
    if (it % cfg.eval_every == 0 || it == cfg.iterations) {
      result.history.push_back(evaluate(result.params, heldout, cfg, it));
    }
  }
  return result;
}

}  // namespace sinkformer
