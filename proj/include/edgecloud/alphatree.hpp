#pragma once

// Allocation search: the quantile-guided greedy tree search that labels
// sub-tasks as device- or cloud-worthy, the two reference searchers it is
// compared against, and the labelled dataset it emits for the adapter.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgecloud/backend.hpp"
#include "edgecloud/execute.hpp"
#include "edgecloud/schedule.hpp"
#include "edgecloud/uncertainty.hpp"

namespace edgecloud {

struct Evaluation {
  AllocationScheme scheme;
  bool correct = false;
};

struct SearchOutcome {
  std::string task_id;
  AllocationScheme final_scheme;
  bool final_correct = false;
  int evaluations = 0;            // == path.size()
  std::vector<Evaluation> path;   // path[0] is the initial scheme
  std::map<int, double> scores;   // alpha-quantile per sub-task (tree search only)
  CostLedger ledger;              // every model call made by the search
  std::optional<std::string> error;
};

/// Device when score > theta, otherwise Cloud.
AllocationScheme initial_allocation(const std::map<int, double>& scores, double theta);

double median_score(const std::map<int, double>& scores);

struct AlphaTreeOptions {
  int n = 1;                     // sub-tasks moved per step
  std::optional<double> theta;   // default: median of the task's scores
  double alpha = kDefaultAlpha;
  ExecOptions exec;
};

SearchOutcome alpha_tree_search(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                                const DependencyGraph& graph, const AlphaTreeOptions& options = {});

struct BinarySearchOptions {
  int attempts = 5;  // random halvings tried per round
  std::uint64_t seed = 0;
  ExecOptions exec;
};

/// Starts all-Cloud and moves a random half of the Cloud set to Device per round.
SearchOutcome binary_search_baseline(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                                     const DependencyGraph& graph, const BinarySearchOptions& options = {});

std::string zero_shot_prompt(const Task& task, std::span<const SubTask> subtasks, const SubTask& current);
std::string referral_prompt(const Task& task);

/// "simple" -> Device, "complex" -> Cloud, anything else (or both) -> nullopt.
std::optional<ModelTier> parse_difficulty_verdict(std::string_view text);

struct ZeroShotResult {
  AllocationScheme scheme;
  CostLedger ledger;
};

/// One cloud judgment per sub-task; unreadable verdicts default to Cloud.
ZeroShotResult zero_shot_baseline(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                                  const ExecOptions& exec = {});

/// zero_shot_baseline followed by a single evaluation pass.
SearchOutcome zero_shot_search(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                               const DependencyGraph& graph, const ExecOptions& exec = {});

struct AdapterRecord {
  std::string task_id;
  int subtask_index = 0;
  std::string text;
  int label = 0;  // 0: device (simple), 1: cloud (complex)
  std::optional<EmbeddingVector> embedding;

  friend bool operator==(const AdapterRecord&, const AdapterRecord&) = default;
};

/// One record per sub-task of every correct outcome. Throws EmptyResultError if none qualify.
std::vector<AdapterRecord> emit_adapter_dataset(std::span<const SearchOutcome> outcomes,
                                                const std::map<std::string, std::vector<SubTask>>& subtasks_by_task);

void write_adapter_dataset(const std::filesystem::path& path, std::span<const AdapterRecord> records);
std::vector<AdapterRecord> read_adapter_dataset(const std::filesystem::path& path);

struct SearchSummary {
  double slm_ratio = 0.0;     // device share of all sub-tasks in final schemes
  double success_rate = 0.0;  // share of tasks whose final scheme is correct
  double mean_evaluations = 0.0;
  double mean_api_cents = 0.0;
  std::size_t tasks = 0;
};

SearchSummary summarize(std::span<const SearchOutcome> outcomes);

nlohmann::json to_json(const SearchOutcome& outcome);

}  // namespace edgecloud
