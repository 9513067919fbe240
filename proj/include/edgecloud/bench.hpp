#pragma once

// Benchmark harness: load tasks, run a routing strategy end to end, fold the
// traces into metrics, sweep the cloud share, and write reports.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgecloud/adapter.hpp"
#include "edgecloud/alphatree.hpp"
#include "edgecloud/backend.hpp"
#include "edgecloud/decompose.hpp"
#include "edgecloud/execute.hpp"
#include "edgecloud/uncertainty.hpp"

namespace edgecloud {

enum class StrategyKind {
  AdapterDoT,         // adapter verdict per sub-task
  ThresholdDoT,       // device pass, then alpha-quantile > theta stays on device
  AllDevice,
  AllCloud,
  SimpleReferral,     // one cloud verdict routes the whole task
  SequentialNoGraph,  // threshold (or adapter) routing over a chain graph
  CloudFraction,      // the ceil(f*k) hardest sub-tasks go to cloud
};

struct Strategy {
  StrategyKind kind = StrategyKind::AllDevice;
  double theta = 0.5;
  double alpha = kDefaultAlpha;
  double cloud_fraction = 0.0;

  std::string name() const;
  static Strategy parse(std::string_view name);
};

std::vector<Task> load_benchmark(const std::filesystem::path& path);

struct SuiteConfig {
  Strategy strategy;
  ExemplarBank exemplars;
  ModelTier planning_tier = ModelTier::Device;  // decomposition and dependency judgment
  ExecOptions exec;
  std::size_t workers = 1;
  std::optional<AdapterWeights> weights;                     // AdapterDoT, optional for SequentialNoGraph
  std::map<std::string, std::vector<int>> difficulty_order;  // CloudFraction: hardest first, per task id
};

struct SuiteResult {
  Metrics metrics;
  std::vector<TaskTrace> traces;  // same order as the input tasks
};

/// Sub-tasks and dependency graph for one task. `chain` skips the dependency call.
struct PlannedTask {
  std::vector<SubTask> subtasks;
  DependencyGraph graph;
  CostLedger ledger;
};

PlannedTask plan_task(const BackendRouter& router, const Task& task, const ExemplarBank& exemplars, ModelTier tier,
                      const ExecOptions& exec, bool chain = false);

/// Decompose -> schedule -> allocate -> execute -> judge, one trace per task.
TaskTrace run_task(const BackendRouter& router, const Task& task, const SuiteConfig& config);

SuiteResult run_suite(const BackendRouter& router, std::span<const Task> tasks, const SuiteConfig& config);

/// Folds traces ordered by task id.
Metrics compute_metrics(std::span<const TaskTrace> traces);

struct TradeoffPoint {
  double cloud_fraction = 0.0;
  Metrics metrics;
};

inline const std::vector<double> kDefaultFractions{0.0, 0.25, 0.5, 0.75, 1.0};

/// Hardest-first sub-task order per task from a device pass. Planning calls are not billed to any point.
std::map<std::string, std::vector<int>> profile_difficulty(const BackendRouter& router, std::span<const Task> tasks,
                                                           const SuiteConfig& config, double alpha);

std::vector<TradeoffPoint> tradeoff_sweep(const BackendRouter& router, std::span<const Task> tasks,
                                          std::span<const double> fractions, const SuiteConfig& config,
                                          double alpha = kDefaultAlpha);

enum class Searcher { AlphaTree, Binary, ZeroShot };

Searcher parse_searcher(std::string_view name);
std::string_view to_string(Searcher searcher);

struct SearchSuiteConfig {
  Searcher searcher = Searcher::AlphaTree;
  AlphaTreeOptions alpha_tree;
  BinarySearchOptions binary;
  ExemplarBank exemplars;
  ModelTier planning_tier = ModelTier::Device;
  std::size_t workers = 1;
};

struct SearchSuiteResult {
  std::vector<SearchOutcome> outcomes;  // same order as the input tasks
  std::map<std::string, std::vector<SubTask>> subtasks;
  CostLedger planning;
};

/// Plans every task and runs the chosen searcher on it. Planning failures land in the outcome's error.
SearchSuiteResult run_search_suite(const BackendRouter& router, std::span<const Task> tasks,
                                   const SearchSuiteConfig& config);

nlohmann::json report_json(const std::string& strategy, const Metrics& metrics);
std::string report_csv(std::span<const std::pair<std::string, Metrics>> rows);
std::string tradeoff_csv(std::span<const TradeoffPoint> points);

void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace edgecloud
