#pragma once

#include "sinkformer/attention.hpp"
#include "sinkformer/measures.hpp"
#include "sinkformer/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace sinkformer {

using Json = nlohmann::json;

Json to_json(const DiscreteMeasure& mu);
Json to_json(const Coupling& pi);
Json to_json(const EncoderParams& enc);
Json to_json(const SinkhornTransformerParams& params);
Json to_json(const TrainConfig& cfg);
Json dataset_to_json(const std::vector<CouplingSystemSample>& samples);

/// Parsers throw ConfigError naming the first bad field.
DiscreteMeasure measure_from_json(const Json& j);
Coupling coupling_from_json(const Json& j);
EncoderParams encoder_from_json(const Json& j);
SinkhornTransformerParams transformer_from_json(const Json& j);
std::vector<CouplingSystemSample> dataset_from_json(const Json& j);

/// {"shape": [r, c], "data": [...]} with data in row-major order.
Json tensor_to_json(const Matrix& m);
Matrix tensor_from_json(const Json& j, const std::string& field);

/// Settings of `model train`: optimiser, data generation and architecture.
struct TrainExperiment {
  TrainConfig train;
  SynthOptions data;
  int heldout_count = 8;
  EncoderShape shape;
  bool shared = false;
};

/// Unknown keys are rejected; every number is range-checked.
TrainExperiment train_experiment_from_json(const Json& j);
Json to_json(const TrainExperiment& exp);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

/// Comma-separated numeric rows; blank lines ignored.
Matrix read_matrix_csv(std::istream& in);
Matrix read_matrix_csv(const std::filesystem::path& path);
/// Shortest round-trip decimal form of every entry.
void write_matrix_csv(std::ostream& out, const Matrix& m);

std::string format_double(double x);

}  // namespace sinkformer
