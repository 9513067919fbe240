#include "edgecloud/adapter.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "edgecloud/error.hpp"
#include "edgecloud/hash.hpp"

namespace edgecloud {

namespace {

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Binary cross-entropy written in terms of the logit.
double bce_with_logit(double z, int label) {
  return std::max(z, 0.0) - static_cast<double>(label) * z + std::log1p(std::exp(-std::fabs(z)));
}

struct Activations {
  std::vector<std::vector<double>> values;  // values[0] = input, values[l+1] = output of layer l
  double logit = 0.0;
};

Activations run(const AdapterWeights& w, std::span<const double> x) {
  if (x.size() != w.config.input_dim) {
    throw PreconditionError(fmt::format("embedding has dimension {} but the adapter expects {}", x.size(),
                                        w.config.input_dim));
  }
  Activations a;
  a.values.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const auto& layer = w.layers[l];
    const auto& in = a.values.back();
    std::vector<double> out(layer.out);
    for (std::size_t o = 0; o < layer.out; ++o) {
      double z = layer.bias[o];
      const double* row = layer.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) z += row[i] * in[i];
      out[o] = z;
    }
    const bool is_output = l + 1 == w.layers.size();
    if (is_output) {
      a.logit = out[0];
    } else {
      for (auto& v : out) v = std::tanh(v);
    }
    a.values.push_back(std::move(out));
  }
  return a;
}

// Accumulates dLoss/dParams for one example into `grads` (layer-shaped).
void backprop(const AdapterWeights& w, const Activations& a, int label, double scale, std::vector<DenseLayer>& grads) {
  std::vector<double> delta{(logistic(a.logit) - static_cast<double>(label)) * scale};
  for (std::size_t l = w.layers.size(); l-- > 0;) {
    const auto& layer = w.layers[l];
    auto& g = grads[l];
    const auto& in = a.values[l];
    for (std::size_t o = 0; o < layer.out; ++o) {
      g.bias[o] += delta[o];
      double* grow = g.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) grow[i] += delta[o] * in[i];
    }
    if (l == 0) break;
    std::vector<double> prev(layer.in, 0.0);
    for (std::size_t o = 0; o < layer.out; ++o) {
      const double* row = layer.weights.data() + o * layer.in;
      for (std::size_t i = 0; i < layer.in; ++i) prev[i] += row[i] * delta[o];
    }
    // in[i] = tanh(pre) for hidden outputs, so d tanh = 1 - in^2.
    for (std::size_t i = 0; i < layer.in; ++i) prev[i] *= 1.0 - in[i] * in[i];
    delta = std::move(prev);
  }
}

std::vector<DenseLayer> zero_like(const AdapterWeights& w) {
  std::vector<DenseLayer> g;
  for (const auto& l : w.layers) {
    g.push_back({l.in, l.out, std::vector<double>(l.weights.size(), 0.0), std::vector<double>(l.bias.size(), 0.0)});
  }
  return g;
}

std::vector<Example> examples_of(std::span<const AdapterRecord> records) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.embedding) {
      throw PreconditionError(fmt::format("record for task '{}' sub-task {} has no embedding", r.task_id,
                                          r.subtask_index));
    }
    out.push_back({r.embedding->values, r.label});
  }
  return out;
}

}  // namespace

std::size_t analytic_param_count(const MlpConfig& config) {
  std::size_t total = 0;
  std::size_t in = config.input_dim;
  for (std::size_t h : config.hidden_dims) {
    total += in * h + h;
    in = h;
  }
  return total + in + 1;
}

std::size_t AdapterWeights::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

AdapterWeights init(const MlpConfig& config) {
  if (config.input_dim == 0) throw ConfigError("adapter input_dim must be positive");
  for (std::size_t h : config.hidden_dims) {
    if (h == 0) throw ConfigError("adapter hidden layers must have at least one unit");
  }
  AdapterWeights w;
  w.config = config;
  SplitMix64 rng(config.seed);
  std::size_t in = config.input_dim;
  auto add_layer = [&](std::size_t out) {
    DenseLayer layer{in, out, std::vector<double>(in * out), std::vector<double>(out)};
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : layer.weights) v = rng.uniform(-bound, bound);
    for (auto& v : layer.bias) v = rng.uniform(-bound, bound);
    w.layers.push_back(std::move(layer));
    in = out;
  };
  for (std::size_t h : config.hidden_dims) add_layer(h);
  add_layer(1);
  return w;
}

double forward(const AdapterWeights& weights, std::span<const double> embedding) {
  const double p = logistic(run(weights, embedding).logit);
  return std::clamp(p, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
}

double forward(const AdapterWeights& weights, const EmbeddingVector& embedding) {
  return forward(weights, std::span<const double>(embedding.values));
}

double mean_loss(const AdapterWeights& weights, std::span<const Example> examples) {
  if (examples.empty()) throw PreconditionError("loss over an empty example set");
  double total = 0.0;
  for (const auto& e : examples) total += bce_with_logit(run(weights, e.x).logit, e.label);
  return total / static_cast<double>(examples.size());
}

std::vector<double> loss_gradient(const AdapterWeights& weights, std::span<const Example> examples) {
  if (examples.empty()) throw PreconditionError("gradient over an empty example set");
  auto grads = zero_like(weights);
  const double scale = 1.0 / static_cast<double>(examples.size());
  for (const auto& e : examples) backprop(weights, run(weights, e.x), e.label, scale, grads);
  AdapterWeights shaped = weights;
  shaped.layers = std::move(grads);
  return flat_parameters(shaped);
}

std::vector<double> flat_parameters(const AdapterWeights& weights) {
  std::vector<double> flat;
  flat.reserve(weights.param_count());
  for (const auto& l : weights.layers) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

AdapterWeights with_parameters(AdapterWeights weights, std::span<const double> flat) {
  if (flat.size() != weights.param_count()) {
    throw PreconditionError(fmt::format("expected {} parameters, got {}", weights.param_count(), flat.size()));
  }
  std::size_t pos = 0;
  for (auto& l : weights.layers) {
    for (auto& v : l.weights) v = flat[pos++];
    for (auto& v : l.bias) v = flat[pos++];
  }
  return weights;
}

TrainResult train_examples(std::span<const Example> examples, const MlpConfig& mlp, const TrainConfig& tc) {
  if (examples.empty()) throw EmptyResultError("cannot train the adapter on an empty dataset");
  if (!(tc.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (tc.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (tc.batch_size < 1) throw ConfigError("batch size must be at least 1");
  std::size_t positives = 0;
  for (const auto& e : examples) positives += e.label == 1;
  if (positives == 0 || positives == examples.size()) {
    spdlog::warn("adapter training data holds a single class ({} of {} labelled complex)", positives, examples.size());
  }

  TrainResult result{init(mlp), {}};
  AdapterWeights& w = result.weights;
  SplitMix64 rng(tc.seed ^ 0x5EEDF00DULL);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      auto grads = zero_like(w);
      const double scale = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto& e = examples[order[k]];
        backprop(w, run(w, e.x), e.label, scale, grads);
      }
      for (std::size_t l = 0; l < w.layers.size(); ++l) {
        for (std::size_t i = 0; i < w.layers[l].weights.size(); ++i) {
          w.layers[l].weights[i] -= tc.learning_rate * grads[l].weights[i];
        }
        for (std::size_t i = 0; i < w.layers[l].bias.size(); ++i) {
          w.layers[l].bias[i] -= tc.learning_rate * grads[l].bias[i];
        }
      }
    }
    const double loss = mean_loss(w, examples);
    if (!std::isfinite(loss)) throw DivergenceError(fmt::format("training loss became non-finite at epoch {}", epoch), epoch);
    result.loss_history.push_back(loss);
  }
  return result;
}

TrainResult train(std::span<const AdapterRecord> records, const MlpConfig& mlp, const TrainConfig& tc) {
  if (records.empty()) throw EmptyResultError("cannot train the adapter on an empty dataset");
  auto examples = examples_of(records);
  return train_examples(examples, mlp, tc);
}

double accuracy(const AdapterWeights& weights, std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& e : examples) {
    const int predicted = decide(forward(weights, e.x)) == ModelTier::Cloud ? 1 : 0;
    hits += predicted == e.label;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_holdout(std::size_t n, double train_fraction,
                                                                            std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 rng(seed ^ 0x5B117ULL);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  cut = std::min(cut, n);
  return {std::vector<std::size_t>(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut)),
          std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(cut), order.end())};
}

ModelTier decide(double cloud_probability) {
  return cloud_probability >= 0.5 ? ModelTier::Cloud : ModelTier::Device;
}

ModelTier allocate(const AdapterWeights& weights, const BackendRouter& router, std::string_view subtask_text,
                   ModelTier tier_for_embedding) {
  return decide(forward(weights, router.embed_sentence(tier_for_embedding, subtask_text)));
}

nlohmann::json to_json(const AdapterWeights& w) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : w.layers) {
    layers.push_back({{"in", l.in}, {"out", l.out}, {"weights", l.weights}, {"bias", l.bias}});
  }
  return {{"config", {{"input_dim", w.config.input_dim}, {"hidden_dims", w.config.hidden_dims}, {"seed", w.config.seed}}},
          {"layers", std::move(layers)},
          {"param_count", w.param_count()}};
}

AdapterWeights weights_from_json(const nlohmann::json& doc) {
  try {
    AdapterWeights w;
    const auto& c = doc.at("config");
    w.config.input_dim = c.at("input_dim").get<std::size_t>();
    w.config.hidden_dims = c.at("hidden_dims").get<std::vector<std::size_t>>();
    w.config.seed = c.at("seed").get<std::uint64_t>();
    for (const auto& l : doc.at("layers")) {
      DenseLayer layer{l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                       l.at("weights").get<std::vector<double>>(), l.at("bias").get<std::vector<double>>()};
      if (layer.weights.size() != layer.in * layer.out || layer.bias.size() != layer.out) {
        throw ConfigError("adapter layer shape does not match its parameter arrays");
      }
      w.layers.push_back(std::move(layer));
    }
    if (w.param_count() != analytic_param_count(w.config) ||
        w.param_count() != doc.at("param_count").get<std::size_t>()) {
      throw ConfigError("adapter parameter count does not match its configuration");
    }
    std::size_t in = w.config.input_dim;
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      const std::size_t out = l < w.config.hidden_dims.size() ? w.config.hidden_dims[l] : 1;
      if (w.layers[l].in != in || w.layers[l].out != out) throw ConfigError("adapter layer chain is inconsistent");
      in = out;
    }
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed adapter weights: {}", e.what()));
  }
}

void save_weights(const std::filesystem::path& path, const AdapterWeights& weights) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(fmt::format("cannot write weights {}", path.string()));
  out << to_json(weights).dump() << '\n';
}

AdapterWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open weights {}", path.string()));
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("weights {} are not valid JSON: {}", path.string(), e.what()));
  }
  return weights_from_json(doc);
}

}  // namespace edgecloud
