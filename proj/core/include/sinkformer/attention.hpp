#pragma once

#include "sinkformer/measures.hpp"

#include <random>
#include <string>
#include <vector>

namespace sinkformer {

/// One attention head: scores <Q x, K y> / sqrt(k), values V y, output W.
struct AttentionHeadParams {
  Matrix query;   ///< k x d
  Matrix key;     ///< k x d
  Matrix value;   ///< d_v x d
  Matrix output;  ///< d x d_v

  Eigen::Index key_dim() const { return query.rows(); }
};

/// Two-layer perceptron w2 * silu(w1 z + b1) + b2, plus z when `residual`.
/// With zero weights and `residual` it is the identity.
struct MlpParams {
  Matrix w1;  ///< hidden x d_in
  Vector b1;
  Matrix w2;  ///< d_out x hidden
  Vector b2;
  bool residual = false;

  Eigen::Index in_dim() const { return w1.cols(); }
  Eigen::Index out_dim() const { return w2.rows(); }
};

struct EncoderLayer {
  std::vector<AttentionHeadParams> heads;
  MlpParams mlp;
};

/// Stacked attention + MLP layers. Every layer but the last keeps the input
/// dimension; the last MLP maps to the output embedding dimension.
struct EncoderParams {
  std::vector<EncoderLayer> layers;

  Eigen::Index in_dim() const;
  Eigen::Index out_dim() const;
  /// Throws on an empty stack or an inconsistent dimension chain.
  void validate() const;
};

/// Applies f(name, tensor) to every parameter matrix and vector in a fixed
/// order. Works for const and non-const encoders.
template <class Encoder, class F>
void visit_tensors(Encoder& enc, F&& f) {
  for (std::size_t l = 0; l < enc.layers.size(); ++l) {
    auto& layer = enc.layers[l];
    const std::string prefix = "layer" + std::to_string(l) + ".";
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
      auto& head = layer.heads[h];
      const std::string hp = prefix + "head" + std::to_string(h) + ".";
      f(hp + "query", head.query);
      f(hp + "key", head.key);
      f(hp + "value", head.value);
      f(hp + "output", head.output);
    }
    f(prefix + "mlp.w1", layer.mlp.w1);
    f(prefix + "mlp.b1", layer.mlp.b1);
    f(prefix + "mlp.w2", layer.mlp.w2);
    f(prefix + "mlp.b2", layer.mlp.b2);
  }
}

/// Same architecture with every parameter set to zero.
EncoderParams zeros_like(const EncoderParams& enc);

struct EncoderShape {
  Eigen::Index in_dim = 2;
  Eigen::Index out_dim = 2;
  int layers = 1;
  int heads = 1;
  Eigen::Index key_dim = 2;
  Eigen::Index value_dim = 2;
  Eigen::Index hidden = 8;
  /// Residual MLPs on inner layers (and on the last when out_dim == in_dim).
  bool residual_mlp = true;
  bool residual_last = false;
};

/// Entries i.i.d. uniform in [-s, s], s = 1/sqrt(fan_in).
EncoderParams random_encoder(const EncoderShape& shape, std::mt19937_64& rng);

double silu(double z);
double silu_derivative(double z);

/// Measure-weighted softmax of the head's scores against x over mu's atoms.
Vector softmax_measure_weights(const AttentionHeadParams& head, const DiscreteMeasure& mu,
                               const Point& x);

/// x + sum_h W_h sum_j w^h_j V_h y_j.
Point attention_forward(const std::vector<AttentionHeadParams>& heads, const DiscreteMeasure& mu,
                        const Point& x);

/// attention_forward evaluated at every atom of mu (row i = atom i).
Matrix attention_forward_atoms(const std::vector<AttentionHeadParams>& heads,
                               const DiscreteMeasure& mu);

/// Textbook finite-token attention (row softmax, no measure weights).
/// Row t of the result is the output for token t.
Matrix classical_attention_rows(const std::vector<AttentionHeadParams>& heads,
                                const Matrix& tokens);

Point mlp_forward(const MlpParams& mlp, const Point& z);

/// MLP(attention(mu, x)) for one layer.
Point layer_forward(const EncoderLayer& layer, const DiscreteMeasure& mu, const Point& x);

/// Pushforward of mu through x -> layer_forward(layer, mu, x); weights kept.
DiscreteMeasure context_pushforward(const EncoderLayer& layer, const DiscreteMeasure& mu);

/// Composition of all layers; each layer sees the pushforward of the
/// previous measure, computed from the pre-update atoms.
Point encoder_forward(const EncoderParams& enc, const DiscreteMeasure& mu, const Point& x);

/// Intermediate values kept by encode_atoms for the backward pass.
struct EncoderTape {
  struct Head {
    Matrix queries;  ///< n x k
    Matrix keys;     ///< n x k
    Matrix values;   ///< n x d_v
    Matrix weights;  ///< n x n, row-normalised attention weights
    Matrix mixed;    ///< n x d_v
  };
  struct Layer {
    Matrix input;        ///< n x d
    std::vector<Head> heads;
    Matrix attended;     ///< n x d
    Matrix pre_activation;  ///< n x hidden
    Matrix activation;   ///< n x hidden
  };
  Vector atom_weights;
  std::vector<Layer> layers;
};

/// Encoder outputs at every atom of mu (the final pushforward support).
Matrix encode_atoms(const EncoderParams& enc, const DiscreteMeasure& mu,
                    EncoderTape* tape = nullptr);

/// Reverse pass through encode_atoms. `d_output` is dLoss/d(outputs) (n x d');
/// gradients are accumulated into `grad`, which must have enc's shape.
void encoder_backward(const EncoderParams& enc, const EncoderTape& tape, const Matrix& d_output,
                      EncoderParams& grad);

}  // namespace sinkformer
