#pragma once

// Allocation head: a small MLP over sentence embeddings that outputs the
// probability a sub-task needs the cloud tier. It is a separate value; the
// embedding backend is never modified by training.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgecloud/alphatree.hpp"
#include "edgecloud/backend.hpp"

namespace edgecloud {

struct MlpConfig {
  std::size_t input_dim = 64;
  std::vector<std::size_t> hidden_dims{128};
  std::uint64_t seed = 0;

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // out x in, row-major
  std::vector<double> bias;     // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct AdapterWeights {
  MlpConfig config;
  std::vector<DenseLayer> layers;  // hidden layers (tanh) then the 1-unit output layer (logistic)

  std::size_t param_count() const;
  friend bool operator==(const AdapterWeights&, const AdapterWeights&) = default;
};

/// in*out + out summed over the layer chain input -> hidden... -> 1.
std::size_t analytic_param_count(const MlpConfig& config);

AdapterWeights init(const MlpConfig& config);

/// Probability of the "complex" label, strictly inside (0, 1).
double forward(const AdapterWeights& weights, std::span<const double> embedding);
double forward(const AdapterWeights& weights, const EmbeddingVector& embedding);

struct Example {
  std::vector<double> x;
  int label = 0;
};

/// Mean binary cross-entropy over the examples.
double mean_loss(const AdapterWeights& weights, std::span<const Example> examples);

/// Gradient of mean_loss, flattened in the order of flat_parameters().
std::vector<double> loss_gradient(const AdapterWeights& weights, std::span<const Example> examples);

std::vector<double> flat_parameters(const AdapterWeights& weights);
AdapterWeights with_parameters(AdapterWeights weights, std::span<const double> flat);

struct TrainConfig {
  double learning_rate = 1e-2;
  int epochs = 200;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
};

struct TrainResult {
  AdapterWeights weights;
  std::vector<double> loss_history;  // mean training loss after each epoch
};

/// Mini-batch gradient descent on binary cross-entropy, deterministic in the seeds.
TrainResult train_examples(std::span<const Example> examples, const MlpConfig& mlp, const TrainConfig& tc);

/// Every record must carry an embedding.
TrainResult train(std::span<const AdapterRecord> records, const MlpConfig& mlp, const TrainConfig& tc);

double accuracy(const AdapterWeights& weights, std::span<const Example> examples);

/// Seeded shuffle split; the first element holds `train_fraction` of the indices.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_holdout(std::size_t n, double train_fraction,
                                                                            std::uint64_t seed);

/// >= 0.5 is Cloud (label 1, complex).
ModelTier decide(double cloud_probability);

ModelTier allocate(const AdapterWeights& weights, const BackendRouter& router, std::string_view subtask_text,
                   ModelTier tier_for_embedding = ModelTier::Device);

nlohmann::json to_json(const AdapterWeights& weights);
AdapterWeights weights_from_json(const nlohmann::json& doc);
void save_weights(const std::filesystem::path& path, const AdapterWeights& weights);
AdapterWeights load_weights(const std::filesystem::path& path);

}  // namespace edgecloud
