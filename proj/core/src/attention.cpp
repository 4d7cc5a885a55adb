#include "sinkformer/attention.hpp"

#include "sinkformer/error.hpp"

#include <cmath>
#include <limits>

namespace sinkformer {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::kDimensionMismatch, what);
}

void validate_heads(const std::vector<AttentionHeadParams>& heads, Eigen::Index d) {
  for (const auto& head : heads) {
    require(head.query.cols() == d && head.key.cols() == d && head.value.cols() == d,
            "attention head input dimension does not match the point dimension");
    require(head.query.rows() == head.key.rows() && head.query.rows() > 0,
            "attention head query/key dimensions disagree");
    require(head.output.rows() == d && head.output.cols() == head.value.rows(),
            "attention head output matrix must map values back to the point dimension");
  }
}

void validate_mlp(const MlpParams& mlp) {
  require(mlp.b1.size() == mlp.w1.rows() && mlp.w2.cols() == mlp.w1.rows() &&
              mlp.b2.size() == mlp.w2.rows(),
          "mlp weight and bias shapes are inconsistent");
  require(!mlp.residual || mlp.in_dim() == mlp.out_dim(),
          "residual mlp needs equal input and output dimensions");
}

Matrix fill_uniform(Eigen::Index rows, Eigen::Index cols, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix out(rows, cols);
  // Row-major draw order.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = dist(rng);
  }
  return out;
}

Vector fill_uniform(Eigen::Index n, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Vector out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = dist(rng);
  return out;
}

// Row-normalised weights a_j exp(s_ij - M_i); M_i taken over atoms with a_j > 0.
Matrix weighted_row_softmax(const Matrix& scores, const Vector& atom_weights) {
  Matrix out(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      if (atom_weights[j] > 0.0) top = std::max(top, scores(i, j));
    }
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      out(i, j) = atom_weights[j] * std::exp(scores(i, j) - top);
    }
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

Matrix attend_rows(const std::vector<AttentionHeadParams>& heads, const Matrix& queries_in,
                   const Matrix& atoms, const Vector& atom_weights,
                   std::vector<EncoderTape::Head>* record) {
  Matrix out = queries_in;
  for (const auto& head : heads) {
    EncoderTape::Head h;
    h.queries = queries_in * head.query.transpose();
    h.keys = atoms * head.key.transpose();
    const Matrix scores =
        h.queries * h.keys.transpose() / std::sqrt(static_cast<double>(head.key_dim()));
    h.weights = weighted_row_softmax(scores, atom_weights);
    h.values = atoms * head.value.transpose();
    h.mixed = h.weights * h.values;
    out += h.mixed * head.output.transpose();
    if (record != nullptr) record->push_back(std::move(h));
  }
  return out;
}

Matrix mlp_rows(const MlpParams& mlp, const Matrix& z, Matrix* pre, Matrix* act) {
  Matrix h = z * mlp.w1.transpose();
  h.rowwise() += mlp.b1.transpose();
  const Matrix a = h.unaryExpr([](double v) { return silu(v); });
  Matrix out = a * mlp.w2.transpose();
  out.rowwise() += mlp.b2.transpose();
  if (mlp.residual) out += z;
  if (pre != nullptr) *pre = std::move(h);
  if (act != nullptr) *act = a;
  return out;
}

}  // namespace

Eigen::Index EncoderParams::in_dim() const {
  return layers.empty() ? 0 : layers.front().mlp.in_dim();
}

Eigen::Index EncoderParams::out_dim() const {
  return layers.empty() ? 0 : layers.back().mlp.out_dim();
}

void EncoderParams::validate() const {
  if (layers.empty()) throw Error(ErrorKind::kInvalidInput, "encoder has no layers");
  const Eigen::Index d = in_dim();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    validate_heads(layers[l].heads, d);
    validate_mlp(layers[l].mlp);
    require(layers[l].mlp.in_dim() == d, "mlp input dimension must equal the model dimension");
    if (l + 1 < layers.size()) {
      require(layers[l].mlp.out_dim() == d, "only the last layer may change the dimension");
    }
  }
}

EncoderParams zeros_like(const EncoderParams& enc) {
  EncoderParams out = enc;
  visit_tensors(out, [](const std::string&, auto& t) { t.setZero(); });
  return out;
}

EncoderParams random_encoder(const EncoderShape& shape, std::mt19937_64& rng) {
  EncoderParams enc;
  const Eigen::Index d = shape.in_dim;
  for (int l = 0; l < shape.layers; ++l) {
    const bool last = l + 1 == shape.layers;
    EncoderLayer layer;
    const double s_in = 1.0 / std::sqrt(static_cast<double>(d));
    for (int h = 0; h < shape.heads; ++h) {
      AttentionHeadParams head;
      head.query = fill_uniform(shape.key_dim, d, s_in, rng);
      head.key = fill_uniform(shape.key_dim, d, s_in, rng);
      head.value = fill_uniform(shape.value_dim, d, s_in, rng);
      head.output = fill_uniform(d, shape.value_dim,
                                 1.0 / std::sqrt(static_cast<double>(shape.value_dim)), rng);
      layer.heads.push_back(std::move(head));
    }
    const Eigen::Index out = last ? shape.out_dim : d;
    const double s_hidden = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
    layer.mlp.w1 = fill_uniform(shape.hidden, d, s_in, rng);
    layer.mlp.b1 = fill_uniform(shape.hidden, s_in, rng);
    layer.mlp.w2 = fill_uniform(out, shape.hidden, s_hidden, rng);
    layer.mlp.b2 = fill_uniform(out, s_hidden, rng);
    layer.mlp.residual = (last ? shape.residual_last : shape.residual_mlp) && out == d;
    enc.layers.push_back(std::move(layer));
  }
  enc.validate();
  return enc;
}

double silu(double z) { return z / (1.0 + std::exp(-z)); }

double silu_derivative(double z) {
  const double sig = 1.0 / (1.0 + std::exp(-z));
  return sig * (1.0 + z * (1.0 - sig));
}

Vector softmax_measure_weights(const AttentionHeadParams& head, const DiscreteMeasure& mu,
                               const Point& x) {
  validate_heads({head}, x.size());
  require(mu.dim() == x.size(), "query point and measure differ in dimension");
  const Vector q = head.query * x;
  const Vector scores =
      (mu.support() * head.key.transpose()) * q / std::sqrt(static_cast<double>(head.key_dim()));
  return weighted_row_softmax(scores.transpose(), mu.weights()).row(0).transpose();
}

Point attention_forward(const std::vector<AttentionHeadParams>& heads, const DiscreteMeasure& mu,
                        const Point& x) {
  validate_heads(heads, x.size());
  require(mu.dim() == x.size(), "query point and measure differ in dimension");
  Point out = x;
  for (const auto& head : heads) {
    const Vector w = softmax_measure_weights(head, mu, x);
    const Vector mixed = (mu.support() * head.value.transpose()).transpose() * w;
    out += head.output * mixed;
  }
  return out;
}

Matrix attention_forward_atoms(const std::vector<AttentionHeadParams>& heads,
                               const DiscreteMeasure& mu) {
  validate_heads(heads, mu.dim());
  return attend_rows(heads, mu.support(), mu.support(), mu.weights(), nullptr);
}

Matrix classical_attention_rows(const std::vector<AttentionHeadParams>& heads,
                                const Matrix& tokens) {
  if (tokens.rows() == 0) throw Error(ErrorKind::kInvalidInput, "token list is empty");
  validate_heads(heads, tokens.cols());
  Matrix out = tokens;
  for (const auto& head : heads) {
    const Matrix q = tokens * head.query.transpose();
    const Matrix k = tokens * head.key.transpose();
    Matrix p = q * k.transpose() / std::sqrt(static_cast<double>(head.key_dim()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double top = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - top).exp();
      p.row(i) /= p.row(i).sum();
    }
    out += p * (tokens * head.value.transpose()) * head.output.transpose();
  }
  return out;
}

Point mlp_forward(const MlpParams& mlp, const Point& z) {
  validate_mlp(mlp);
  require(z.size() == mlp.in_dim(), "mlp input has the wrong dimension");
  return mlp_rows(mlp, z.transpose(), nullptr, nullptr).row(0).transpose();
}

Point layer_forward(const EncoderLayer& layer, const DiscreteMeasure& mu, const Point& x) {
  return mlp_forward(layer.mlp, attention_forward(layer.heads, mu, x));
}

DiscreteMeasure context_pushforward(const EncoderLayer& layer, const DiscreteMeasure& mu) {
  validate_mlp(layer.mlp);
  const Matrix attended = attention_forward_atoms(layer.heads, mu);
  require(attended.cols() == layer.mlp.in_dim(), "mlp input has the wrong dimension");
  return DiscreteMeasure(mlp_rows(layer.mlp, attended, nullptr, nullptr), mu.weights());
}

Point encoder_forward(const EncoderParams& enc, const DiscreteMeasure& mu, const Point& x) {
  enc.validate();
  require(x.size() == enc.in_dim() && mu.dim() == enc.in_dim(),
          "encoder input dimension does not match");
  DiscreteMeasure current = mu;
  Point point = x;
  for (const auto& layer : enc.layers) {
    // Query before the layer moves the atoms.
    point = layer_forward(layer, current, point);
    current = context_pushforward(layer, current);
  }
  return point;
}

Matrix encode_atoms(const EncoderParams& enc, const DiscreteMeasure& mu, EncoderTape* tape) {
  enc.validate();
  require(mu.dim() == enc.in_dim(), "encoder input dimension does not match");
  if (tape != nullptr) {
    tape->atom_weights = mu.weights();
    tape->layers.clear();
  }
  Matrix current = mu.support();
  for (const auto& layer : enc.layers) {
    EncoderTape::Layer rec;
    const Matrix attended = attend_rows(layer.heads, current, current, mu.weights(),
                                        tape != nullptr ? &rec.heads : nullptr);
    Matrix next = mlp_rows(layer.mlp, attended, tape != nullptr ? &rec.pre_activation : nullptr,
                           tape != nullptr ? &rec.activation : nullptr);
    if (tape != nullptr) {
      rec.input = std::move(current);
      rec.attended = attended;
      tape->layers.push_back(std::move(rec));
    }
    current = std::move(next);
  }
  return current;
}

void encoder_backward(const EncoderParams& enc, const EncoderTape& tape, const Matrix& d_output,
                      EncoderParams& grad) {
  require(tape.layers.size() == enc.layers.size() && grad.layers.size() == enc.layers.size(),
          "tape or gradient does not match the encoder");
  Matrix d_next = d_output;
  for (std::size_t l = enc.layers.size(); l-- > 0;) {
    const EncoderLayer& layer = enc.layers[l];
    const EncoderTape::Layer& rec = tape.layers[l];
    EncoderLayer& g = grad.layers[l];

    // MLP
    g.mlp.w2 += d_next.transpose() * rec.activation;
    g.mlp.b2 += d_next.colwise().sum().transpose();
    const Matrix d_pre = (d_next * layer.mlp.w2)
                             .cwiseProduct(rec.pre_activation.unaryExpr(
                                 [](double v) { return silu_derivative(v); }));
    g.mlp.w1 += d_pre.transpose() * rec.attended;
    g.mlp.b1 += d_pre.colwise().sum().transpose();
    Matrix d_attended = d_pre * layer.mlp.w1;
    if (layer.mlp.residual) d_attended += d_next;

    // Attention: residual path plus every head. Atoms act as queries, keys
    // and values at once.
    Matrix d_input = d_attended;
    for (std::size_t h = 0; h < layer.heads.size(); ++h) {
      const AttentionHeadParams& head = layer.heads[h];
      const EncoderTape::Head& hr = rec.heads[h];
      AttentionHeadParams& gh = g.heads[h];
      const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(head.key_dim()));

      const Matrix d_mixed = d_attended * head.output;
      gh.output += d_attended.transpose() * hr.mixed;
      const Matrix d_weights = d_mixed * hr.values.transpose();
      const Matrix d_values = hr.weights.transpose() * d_mixed;
      gh.value += d_values.transpose() * rec.input;
      d_input += d_values * head.value;

      const Vector row_dot = d_weights.cwiseProduct(hr.weights).rowwise().sum();
      const Matrix d_scores =
          hr.weights.cwiseProduct(d_weights - row_dot.replicate(1, d_weights.cols())) * inv_sqrt_k;
      const Matrix d_queries = d_scores * hr.keys;
      const Matrix d_keys = d_scores.transpose() * hr.queries;
      gh.query += d_queries.transpose() * rec.input;
      gh.key += d_keys.transpose() * rec.input;
      d_input += d_queries * head.query + d_keys * head.key;
    }
    d_next = std::move(d_input);
  }
}

}  // namespace sinkformer
