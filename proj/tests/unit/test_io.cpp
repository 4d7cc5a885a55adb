#include "sinkformer/error.hpp"
#include "sinkformer/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

using namespace sinkformer;

namespace {

using Rng = std::mt19937_64;

std::vector<double> flatten(const EncoderParams& enc) {
  std::vector<double> out;
  visit_tensors(enc, [&](const std::string&, const auto& t) { out.insert(out.end(), t.data(), t.data() + t.size()); });
  return out;
}

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.field();
  }
  ADD_FAILURE() << "no ConfigError thrown";
  return {};
}

Json through_text(const Json& j) { return Json::parse(j.dump()); }

}  // namespace

TEST(FormatDouble, ShortestRoundTrip) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng) * std::pow(10.0, static_cast<double>(i % 40 - 20));
    EXPECT_EQ(std::stod(format_double(x)), x);
  }
  EXPECT_EQ(format_double(0.25), "0.25");
  EXPECT_EQ(format_double(1.0), "1");
}

TEST(MeasureJson, RoundTripIsBitwise) {
  Rng rng(2);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Matrix s(4, 3);
  for (auto& x : s.reshaped()) x = u(rng);
  Vector w(4);
  for (auto& x : w) x = u(rng);
  const DiscreteMeasure mu(s, w / w.sum());
  const DiscreteMeasure back = measure_from_json(through_text(to_json(mu)));
  EXPECT_EQ(back.support(), mu.support());
  EXPECT_EQ(back.weights(), mu.weights());
}

TEST(MeasureJson, Errors) {
  EXPECT_EQ(field_of([] { measure_from_json(Json::parse(R"({"support":[[0]],"weights":[1],"x":1})")); }), "x");
  EXPECT_EQ(field_of([] { measure_from_json(Json::parse(R"({"support":[[0],[1,2]],"weights":[0.5,0.5]})")); }),
            "support[1]");
  EXPECT_EQ(field_of([] { measure_from_json(Json::parse(R"({"support":[[0]]})")); }), "weights");
  EXPECT_EQ(field_of([] { measure_from_json(Json::parse(R"({"support":[[0]],"weights":["a"]})")); }),
            "weights[0]");
  EXPECT_THROW(measure_from_json(Json::parse(R"({"support":[[0],[1]],"weights":[0.5,0.6]})")), ConfigError);
}

TEST(CouplingJson, RoundTripIsBitwise) {
  const DiscreteMeasure mu = DiscreteMeasure::uniform((Matrix(2, 1) << 0.0, 1.0).finished());
  const DiscreteMeasure nu = DiscreteMeasure::uniform((Matrix(3, 1) << 0.0, 0.5, 1.0).finished());
  const Coupling pi = product_coupling(mu, nu);
  const Coupling back = coupling_from_json(through_text(to_json(pi)));
  EXPECT_EQ(back.mass(), pi.mass());
  EXPECT_EQ(back.cols().support(), nu.support());
}

TEST(CouplingJson, MarginalMismatch) {
  Json j = to_json(product_coupling(DiscreteMeasure::uniform(Matrix::Zero(2, 1)),
                                    DiscreteMeasure::uniform(Matrix::Zero(2, 1))));
  j["mass"][0][0] = 0.5;
  EXPECT_EQ(field_of([&] { coupling_from_json(j); }), "mass");
}

TEST(TensorJson, RowMajorWithShape) {
  const Matrix m = (Matrix(2, 3) << 1, 2, 3, 4, 5, 6).finished();
  const Json j = tensor_to_json(m);
  EXPECT_EQ(j.at("shape"), Json::parse("[2,3]"));
  EXPECT_EQ(j.at("data"), Json::parse("[1,2,3,4,5,6]"));
  EXPECT_EQ(tensor_from_json(j, "t"), m);
  EXPECT_EQ(field_of([] { tensor_from_json(Json::parse(R"({"shape":[2,2],"data":[1,2,3]})"), "t"); }), "t.data");
  EXPECT_EQ(field_of([] { tensor_from_json(Json::parse(R"({"shape":[-1,2],"data":[]})"), "t"); }), "t.shape");
}

TEST(EncoderJson, RoundTripIsBitwise) {
  Rng rng(3);
  EncoderShape s;
  s.in_dim = 3;
  s.out_dim = 2;
  s.layers = 2;
  s.heads = 2;
  const EncoderParams enc = random_encoder(s, rng);
  const EncoderParams back = encoder_from_json(through_text(to_json(enc)));
  EXPECT_EQ(flatten(back), flatten(enc));
  EXPECT_EQ(back.layers[1].mlp.residual, enc.layers[1].mlp.residual);
}

TEST(EncoderJson, ShapeErrorsAreReported) {
  Rng rng(4);
  EncoderShape s;
  s.in_dim = 2;
  s.out_dim = 2;
  Json j = to_json(random_encoder(s, rng));
  j["layers"][0]["heads"][0]["query"]["shape"][1] = 3;
  j["layers"][0]["heads"][0]["query"]["data"].push_back(0.0);
  j["layers"][0]["heads"][0]["query"]["data"].push_back(0.0);
  EXPECT_THROW(encoder_from_json(j), Error);
  Json k = to_json(random_encoder(s, rng));
  k["layers"][0]["mlp"]["bias"] = 1;
  EXPECT_EQ(field_of([&] { encoder_from_json(k); }), "layers[0].mlp.bias");
}

TEST(TransformerJson, SharedOmitsKeyEncoder) {
  Rng rng(5);
  EncoderShape s;
  s.in_dim = 2;
  s.out_dim = 2;
  const SinkhornTransformerParams shared = random_transformer(s, true, rng);
  const Json j = to_json(shared);
  EXPECT_FALSE(j.contains("k_encoder"));
  const SinkhornTransformerParams back = transformer_from_json(through_text(j));
  EXPECT_TRUE(back.shared);
  EXPECT_EQ(flatten(back.q_encoder), flatten(shared.q_encoder));

  const SinkhornTransformerParams split = random_transformer(s, false, rng);
  const SinkhornTransformerParams back2 = transformer_from_json(through_text(to_json(split)));
  EXPECT_EQ(flatten(back2.k_encoder), flatten(split.k_encoder));
}

TEST(DatasetJson, RoundTrip) {
  SynthOptions o;
  o.family = Family::kPlantedEntropic;
  o.count = 3;
  const auto samples = synth_coupling_system(o);
  const auto back = dataset_from_json(through_text(dataset_to_json(samples)));
  ASSERT_EQ(back.size(), samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].target.mass(), samples[i].target.mass());
    EXPECT_EQ(back[i].nu.support(), samples[i].nu.support());
  }
}

TEST(TrainExperimentJson, DefaultsAndRoundTrip) {
  const TrainExperiment def = train_experiment_from_json(Json::object());
  EXPECT_EQ(def.train.iterations, TrainConfig{}.iterations);
  const Json j = Json::parse(R"({"seed":7,"learning_rate":0.1,"loss":"frobenius","epsilon":0.5,
    "data":{"dim":3,"count":12},"model":{"layers":2,"out_dim":4,"shared":true}})");
  const TrainExperiment exp = train_experiment_from_json(j);
  EXPECT_EQ(exp.train.seed, 7u);
  EXPECT_EQ(exp.train.loss, LossKind::kFrobenius);
  EXPECT_EQ(exp.shape.in_dim, 3);
  EXPECT_EQ(exp.data.epsilon, 0.5);
  EXPECT_TRUE(exp.shared);
  const TrainExperiment again = train_experiment_from_json(through_text(to_json(exp)));
  EXPECT_EQ(to_json(again), to_json(exp));
}

TEST(TrainExperimentJson, FieldErrors) {
  const auto field = [](const char* text) {
    return field_of([&] { train_experiment_from_json(Json::parse(text)); });
  };
  EXPECT_EQ(field(R"({"learning_rate":-1})"), "learning_rate");
  EXPECT_EQ(field(R"({"momentum":1.5})"), "momentum");
  EXPECT_EQ(field(R"({"iterations":2.5})"), "iterations");
  EXPECT_EQ(field(R"({"unroll":3})"), "unroll");
  EXPECT_EQ(field(R"({"loss":"hinge"})"), "loss");
  EXPECT_EQ(field(R"({"lr":0.1})"), "lr");
  EXPECT_EQ(field(R"({"data":{"n_max":17}})"), "data.n_max");
  EXPECT_EQ(field(R"({"data":{"n_min":5,"n_max":4}})"), "data.n_min");
  EXPECT_EQ(field(R"({"model":{"depth":2}})"), "model.depth");
  EXPECT_EQ(field(R"({"model":{"residual_last":true,"out_dim":3}})"), "model.residual_last");
}

TEST(Csv, ParseAndWrite) {
  std::istringstream in("1, 2.5,-3\r\n\n4,5e-1,6\n");
  const Matrix m = read_matrix_csv(in);
  EXPECT_EQ(m, (Matrix(2, 3) << 1, 2.5, -3, 4, 0.5, 6).finished());
  std::ostringstream out;
  write_matrix_csv(out, m);
  std::istringstream again(out.str());
  EXPECT_EQ(read_matrix_csv(again), m);
}

TEST(Csv, Errors) {
  std::istringstream ragged("1,2\n3\n");
  EXPECT_EQ(field_of([&] { read_matrix_csv(ragged); }), "line 2");
  std::istringstream word("1,x\n");
  EXPECT_EQ(field_of([&] { read_matrix_csv(word); }), "line 1");
  std::istringstream empty("");
  EXPECT_THROW(read_matrix_csv(empty), ConfigError);
  EXPECT_THROW(read_matrix_csv(std::filesystem::path("/nonexistent/cost.csv")), ConfigError);
}

TEST(JsonFile, WriteThenRead) {
  const auto path = std::filesystem::temp_directory_path() / "sinkformer_io_test.json";
  const Json j = {{"a", 1}, {"b", Json::array({0.1, 0.2})}};
  write_json_file(path, j);
  EXPECT_EQ(read_json_file(path), j);
  std::filesystem::remove(path);
}
