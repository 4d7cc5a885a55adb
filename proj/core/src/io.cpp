#include "sinkformer/io.hpp"

#include "sinkformer/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace sinkformer {

std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

Json matrix_rows(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

const Json& require(const Json& j, const std::string& key, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError(field.empty() ? key : field + "." + key, "missing");
  return *it;
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

double number(const Json& j, const std::string& field) {
  if (!j.is_number()) throw ConfigError(field, "expected a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ConfigError(field, "not finite");
  return x;
}

Matrix matrix_from_rows(const Json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field, "expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::Index cols = -1;
  Matrix m;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    const std::string rf = field + "[" + std::to_string(i) + "]";
    if (!row.is_array()) throw ConfigError(rf, "expected an array");
    if (cols < 0) {
      cols = static_cast<Eigen::Index>(row.size());
      m.resize(rows, cols);
    } else if (static_cast<Eigen::Index>(row.size()) != cols) {
      throw ConfigError(rf, "ragged row");
    }
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(i, c) = number(row[static_cast<std::size_t>(c)], rf + "[" + std::to_string(c) + "]");
    }
  }
  if (rows == 0) m.resize(0, 0);
  return m;
}

Vector vector_from_array(const Json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field, "expected an array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = number(j[i], field + "[" + std::to_string(i) + "]");
  }
  return v;
}

template <class F>
auto rethrow_as_config(const std::string& field, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(field, e.what());
  }
}

void reject_unknown(const Json& j, const std::set<std::string>& allowed, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field.empty() ? "<root>" : field, "expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(join(field, key), "unknown key");
  }
}

}  // namespace

Json tensor_to_json(const Matrix& m) {
  Json data = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return {{"shape", {m.rows(), m.cols()}}, {"data", std::move(data)}};
}

Matrix tensor_from_json(const Json& j, const std::string& field) {
  const Json& shape = require(j, "shape", field);
  const Json& data = require(j, "data", field);
  if (!shape.is_array() || shape.size() != 2 || !shape[0].is_number_integer() ||
      !shape[1].is_number_integer() || shape[0].get<long long>() < 0 ||
      shape[1].get<long long>() < 0) {
    throw ConfigError(field + ".shape", "expected two nonnegative integers");
  }
  const auto rows = static_cast<Eigen::Index>(shape[0].get<long long>());
  const auto cols = static_cast<Eigen::Index>(shape[1].get<long long>());
  const Vector flat = vector_from_array(data, field + ".data");
  if (flat.size() != rows * cols) throw ConfigError(field + ".data", "length does not match shape");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = flat[i * cols + c];
  }
  return m;
}

Json to_json(const DiscreteMeasure& mu) {
  Json weights = Json::array();
  for (Eigen::Index i = 0; i < mu.size(); ++i) weights.push_back(mu.weights()[i]);
  return {{"support", matrix_rows(mu.support())}, {"weights", std::move(weights)}};
}

Json to_json(const Coupling& pi) {
  return {{"rows", to_json(pi.rows())}, {"cols", to_json(pi.cols())}, {"mass", matrix_rows(pi.mass())}};
}

namespace {

DiscreteMeasure measure_at(const Json& j, const std::string& field) {
  reject_unknown(j, {"support", "weights"}, field);
  Matrix support = matrix_from_rows(require(j, "support", field), join(field, "support"));
  Vector weights = vector_from_array(require(j, "weights", field), join(field, "weights"));
  return rethrow_as_config(field.empty() ? "weights" : field, [&] {
    return DiscreteMeasure(std::move(support), std::move(weights));
  });
}

Coupling coupling_at(const Json& j, const std::string& field) {
  reject_unknown(j, {"rows", "cols", "mass"}, field);
  DiscreteMeasure rows = measure_at(require(j, "rows", field), join(field, "rows"));
  DiscreteMeasure cols = measure_at(require(j, "cols", field), join(field, "cols"));
  Matrix mass = matrix_from_rows(require(j, "mass", field), join(field, "mass"));
  if (mass.rows() == 0 && rows.size() > 0) throw ConfigError(join(field, "mass"), "empty");
  return rethrow_as_config(join(field, "mass"), [&] {
    return Coupling(std::move(rows), std::move(cols), std::move(mass));
  });
}

EncoderParams encoder_at(const Json& j, const std::string& field) {
  reject_unknown(j, {"layers"}, field);
  const Json& layers = require(j, "layers", field);
  if (!layers.is_array()) throw ConfigError(join(field, "layers"), "expected an array");
  EncoderParams enc;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string lf = join(field, "layers[" + std::to_string(l) + "]");
    const Json& lj = layers[l];
    reject_unknown(lj, {"heads", "mlp"}, lf);
    EncoderLayer layer;
    const Json& heads = require(lj, "heads", lf);
    if (!heads.is_array()) throw ConfigError(lf + ".heads", "expected an array");
    for (std::size_t h = 0; h < heads.size(); ++h) {
      const std::string hf = lf + ".heads[" + std::to_string(h) + "]";
      reject_unknown(heads[h], {"query", "key", "value", "output"}, hf);
      AttentionHeadParams head;
      head.query = tensor_from_json(require(heads[h], "query", hf), hf + ".query");
      head.key = tensor_from_json(require(heads[h], "key", hf), hf + ".key");
      head.value = tensor_from_json(require(heads[h], "value", hf), hf + ".value");
      head.output = tensor_from_json(require(heads[h], "output", hf), hf + ".output");
      layer.heads.push_back(std::move(head));
    }
    const std::string mf = lf + ".mlp";
    const Json& mj = require(lj, "mlp", lf);
    reject_unknown(mj, {"w1", "b1", "w2", "b2", "residual"}, mf);
    layer.mlp.w1 = tensor_from_json(require(mj, "w1", mf), mf + ".w1");
    layer.mlp.b1 = tensor_from_json(require(mj, "b1", mf), mf + ".b1").reshaped();
    layer.mlp.w2 = tensor_from_json(require(mj, "w2", mf), mf + ".w2");
    layer.mlp.b2 = tensor_from_json(require(mj, "b2", mf), mf + ".b2").reshaped();
    const Json& residual = require(mj, "residual", mf);
    if (!residual.is_boolean()) throw ConfigError(mf + ".residual", "expected a boolean");
    layer.mlp.residual = residual.get<bool>();
    enc.layers.push_back(std::move(layer));
  }
  rethrow_as_config(join(field, "layers"), [&] {
    enc.validate();
    return 0;
  });
  return enc;
}

}  // namespace

DiscreteMeasure measure_from_json(const Json& j) { return measure_at(j, ""); }
Coupling coupling_from_json(const Json& j) { return coupling_at(j, ""); }

Json to_json(const EncoderParams& enc) {
  Json layers = Json::array();
  for (const auto& layer : enc.layers) {
    Json heads = Json::array();
    for (const auto& head : layer.heads) {
      heads.push_back({{"query", tensor_to_json(head.query)},
                       {"key", tensor_to_json(head.key)},
                       {"value", tensor_to_json(head.value)},
                       {"output", tensor_to_json(head.output)}});
    }
    Json mlp = {{"w1", tensor_to_json(layer.mlp.w1)},
                {"b1", tensor_to_json(layer.mlp.b1)},
                {"w2", tensor_to_json(layer.mlp.w2)},
                {"b2", tensor_to_json(layer.mlp.b2)},
                {"residual", layer.mlp.residual}};
    layers.push_back({{"heads", std::move(heads)}, {"mlp", std::move(mlp)}});
  }
  return {{"layers", std::move(layers)}};
}

EncoderParams encoder_from_json(const Json& j) { return encoder_at(j, ""); }

Json to_json(const SinkhornTransformerParams& params) {
  Json j = {{"shared", params.shared}, {"q_encoder", to_json(params.q_encoder)}};
  if (!params.shared) j["k_encoder"] = to_json(params.k_encoder);
  return j;
}

SinkhornTransformerParams transformer_from_json(const Json& j) {
  reject_unknown(j, {"shared", "q_encoder", "k_encoder"}, "");
  SinkhornTransformerParams params;
  const Json& shared = require(j, "shared", "");
  if (!shared.is_boolean()) throw ConfigError("shared", "expected a boolean");
  params.shared = shared.get<bool>();
  params.q_encoder = encoder_at(require(j, "q_encoder", ""), "q_encoder");
  if (!params.shared) params.k_encoder = encoder_at(require(j, "k_encoder", ""), "k_encoder");
  rethrow_as_config("k_encoder", [&] {
    params.validate();
    return 0;
  });
  return params;
}

Json dataset_to_json(const std::vector<CouplingSystemSample>& samples) {
  Json arr = Json::array();
  for (const auto& s : samples) {
    arr.push_back({{"mu", to_json(s.mu)}, {"nu", to_json(s.nu)}, {"target", to_json(s.target)}});
  }
  return {{"samples", std::move(arr)}};
}

std::vector<CouplingSystemSample> dataset_from_json(const Json& j) {
  reject_unknown(j, {"samples"}, "");
  const Json& arr = require(j, "samples", "");
  if (!arr.is_array()) throw ConfigError("samples", "expected an array");
  std::vector<CouplingSystemSample> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string f = "samples[" + std::to_string(i) + "]";
    reject_unknown(arr[i], {"mu", "nu", "target"}, f);
    DiscreteMeasure mu = measure_at(require(arr[i], "mu", f), f + ".mu");
    DiscreteMeasure nu = measure_at(require(arr[i], "nu", f), f + ".nu");
    Coupling target = coupling_at(require(arr[i], "target", f), f + ".target");
    if (target.mass().rows() != mu.size() || target.mass().cols() != nu.size() ||
        (target.rows().weights() - mu.weights()).cwiseAbs().maxCoeff() > kCouplingMassTol ||
        (target.cols().weights() - nu.weights()).cwiseAbs().maxCoeff() > kCouplingMassTol) {
      throw ConfigError(f + ".target", "marginals do not match mu and nu");
    }
    out.push_back({std::move(mu), std::move(nu), std::move(target)});
  }
  return out;
}

namespace {

struct Reader {
  const Json& j;
  std::string prefix;

  bool has(const std::string& key) const { return j.contains(key); }
  std::string field(const std::string& key) const { return join(prefix, key); }

  double real(const std::string& key, double current, double lo, double hi, bool open_lo) const {
    if (!has(key)) return current;
    const double x = number(j.at(key), field(key));
    if (x > hi || x < lo || (open_lo && x == lo)) {
      std::ostringstream msg;
      msg << "must be in " << (open_lo ? "(" : "[") << lo << ", " << hi << "]";
      throw ConfigError(field(key), msg.str());
    }
    return x;
  }

  long long integer(const std::string& key, long long current, long long lo, long long hi) const {
    if (!has(key)) return current;
    const Json& v = j.at(key);
    if (!v.is_number_integer()) throw ConfigError(field(key), "expected an integer");
    const long long x = v.is_number_unsigned() ? static_cast<long long>(v.get<unsigned long long>())
                                               : v.get<long long>();
    if (x < lo || x > hi) {
      throw ConfigError(field(key), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return x;
  }

  bool boolean(const std::string& key, bool current) const {
    if (!has(key)) return current;
    if (!j.at(key).is_boolean()) throw ConfigError(field(key), "expected a boolean");
    return j.at(key).get<bool>();
  }

  std::string text(const std::string& key, const std::string& current) const {
    if (!has(key)) return current;
    if (!j.at(key).is_string()) throw ConfigError(field(key), "expected a string");
    return j.at(key).get<std::string>();
  }
};

constexpr long long kIntMax = 1LL << 31;

}  // namespace

Json to_json(const TrainConfig& cfg) {
  return {{"seed", cfg.seed},
          {"learning_rate", cfg.learning_rate},
          {"momentum", cfg.momentum},
          {"iterations", cfg.iterations},
          {"batch_size", cfg.batch_size},
          {"unroll", cfg.unroll},
          {"loss", to_string(cfg.loss)},
          {"eval_every", cfg.eval_every},
          {"divergence_threshold", cfg.divergence_threshold},
          {"epsilon", cfg.sinkhorn.epsilon},
          {"sinkhorn_tol", cfg.sinkhorn.tol},
          {"sinkhorn_max_iters", cfg.sinkhorn.max_iters}};
}

Json to_json(const TrainExperiment& exp) {
  Json j = to_json(exp.train);
  j["heldout_count"] = exp.heldout_count;
  j["data"] = {{"count", exp.data.count},           {"n_min", exp.data.n_min},
               {"n_max", exp.data.n_max},           {"m_min", exp.data.m_min},
               {"m_max", exp.data.m_max},           {"dim", exp.data.dim},
               {"teacher_out_dim", exp.data.teacher_out_dim},
               {"teacher_hidden", exp.data.teacher_hidden},
               {"teacher_scale", exp.data.teacher_scale},
               {"identity_teacher", exp.data.identity_teacher},
               {"block_k", exp.data.block_k}};
  j["model"] = {{"layers", exp.shape.layers},         {"heads", exp.shape.heads},
                {"key_dim", exp.shape.key_dim},       {"value_dim", exp.shape.value_dim},
                {"hidden", exp.shape.hidden},         {"out_dim", exp.shape.out_dim},
                {"residual_mlp", exp.shape.residual_mlp},
                {"residual_last", exp.shape.residual_last},
                {"shared", exp.shared}};
  return j;
}

TrainExperiment train_experiment_from_json(const Json& j) {
  reject_unknown(j,
                 {"seed", "learning_rate", "momentum", "iterations", "batch_size", "unroll", "loss",
                  "eval_every", "divergence_threshold", "epsilon", "sinkhorn_tol",
                  "sinkhorn_max_iters", "heldout_count", "data", "model"},
                 "");
  TrainExperiment exp;
  const Reader r{j, ""};
  TrainConfig& t = exp.train;
  t.seed = static_cast<std::uint64_t>(r.integer("seed", 0, 0, std::numeric_limits<long long>::max()));
  t.learning_rate = r.real("learning_rate", t.learning_rate, 0.0, 1e6, true);
  t.momentum = r.real("momentum", t.momentum, 0.0, 0.999, false);
  t.iterations = static_cast<int>(r.integer("iterations", t.iterations, 0, 1000000));
  t.batch_size = static_cast<int>(r.integer("batch_size", t.batch_size, 1, 4096));
  t.unroll = static_cast<int>(r.integer("unroll", t.unroll, 5, 100000));
  t.eval_every = static_cast<int>(r.integer("eval_every", t.eval_every, 1, kIntMax));
  t.divergence_threshold = r.real("divergence_threshold", t.divergence_threshold, 0.0, 1e300, true);
  t.sinkhorn.epsilon = r.real("epsilon", t.sinkhorn.epsilon, 0.0, 1e6, true);
  t.sinkhorn.tol = r.real("sinkhorn_tol", t.sinkhorn.tol, 0.0, 1.0, true);
  t.sinkhorn.max_iters = static_cast<int>(r.integer("sinkhorn_max_iters", t.sinkhorn.max_iters, 1, 100000000));
  try {
    t.loss = parse_loss_kind(r.text("loss", to_string(t.loss)));
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError("loss", e.what());
  }
  exp.heldout_count = static_cast<int>(r.integer("heldout_count", exp.heldout_count, 1, 10000));

  if (j.contains("data")) {
    const Json& dj = j.at("data");
    reject_unknown(dj,
                   {"count", "n_min", "n_max", "m_min", "m_max", "dim", "teacher_out_dim",
                    "teacher_hidden", "teacher_scale", "identity_teacher", "block_k"},
                   "data");
    const Reader d{dj, "data"};
    SynthOptions& s = exp.data;
    s.count = static_cast<int>(d.integer("count", s.count, 1, 100000));
    s.n_min = static_cast<int>(d.integer("n_min", s.n_min, 1, kMaxSynthAtoms));
    s.n_max = static_cast<int>(d.integer("n_max", s.n_max, 1, kMaxSynthAtoms));
    s.m_min = static_cast<int>(d.integer("m_min", s.m_min, 1, kMaxSynthAtoms));
    s.m_max = static_cast<int>(d.integer("m_max", s.m_max, 1, kMaxSynthAtoms));
    s.dim = d.integer("dim", s.dim, 1, 64);
    s.teacher_out_dim = d.integer("teacher_out_dim", s.teacher_out_dim, 1, 64);
    s.teacher_hidden = d.integer("teacher_hidden", s.teacher_hidden, 1, 256);
    s.teacher_scale = d.real("teacher_scale", s.teacher_scale, 0.0, 1e3, true);
    s.identity_teacher = d.boolean("identity_teacher", s.identity_teacher);
    s.block_k = static_cast<int>(d.integer("block_k", s.block_k, 1, 1024));
    if (s.n_min > s.n_max) throw ConfigError("data.n_min", "exceeds data.n_max");
    if (s.m_min > s.m_max) throw ConfigError("data.m_min", "exceeds data.m_max");
  }
  if (j.contains("model")) {
    const Json& mj = j.at("model");
    reject_unknown(mj,
                   {"layers", "heads", "key_dim", "value_dim", "hidden", "out_dim", "residual_mlp",
                    "residual_last", "shared"},
                   "model");
    const Reader m{mj, "model"};
    EncoderShape& sh = exp.shape;
    sh.layers = static_cast<int>(m.integer("layers", sh.layers, 1, 16));
    sh.heads = static_cast<int>(m.integer("heads", sh.heads, 0, 16));
    sh.key_dim = m.integer("key_dim", sh.key_dim, 1, 256);
    sh.value_dim = m.integer("value_dim", sh.value_dim, 1, 256);
    sh.hidden = m.integer("hidden", sh.hidden, 1, 1024);
    sh.out_dim = m.integer("out_dim", sh.out_dim, 1, 256);
    sh.residual_mlp = m.boolean("residual_mlp", sh.residual_mlp);
    sh.residual_last = m.boolean("residual_last", sh.residual_last);
    exp.shared = m.boolean("shared", exp.shared);
  }
  exp.shape.in_dim = exp.data.dim;
  exp.data.epsilon = t.sinkhorn.epsilon;
  if (exp.shape.residual_last && exp.shape.out_dim != exp.shape.in_dim) {
    throw ConfigError("model.residual_last", "needs model.out_dim equal to data.dim");
  }
  if (exp.data.identity_teacher && exp.data.teacher_out_dim != exp.data.dim) {
    throw ConfigError("data.identity_teacher", "needs data.teacher_out_dim equal to data.dim");
  }
  return exp;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string(), e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kInvalidInput, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Matrix read_matrix_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      const std::string trimmed = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
      double x = 0.0;
      const auto res = std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), x);
      if (trimmed.empty() || res.ec != std::errc() || res.ptr != trimmed.data() + trimmed.size()) {
        throw ConfigError("line " + std::to_string(lineno), "not a number: '" + trimmed + "'");
      }
      row.push_back(x);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError("line " + std::to_string(lineno), "ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("csv", "no rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
  }
  return m;
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), "cannot open file");
  return read_matrix_csv(in);
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

}  // namespace sinkformer
