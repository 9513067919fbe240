#pragma once

// On-graph reasoning: batches run in ascending depth, sub-tasks inside a batch
// run concurrently, and each sub-task sees only its direct prerequisites.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "edgecloud/backend.hpp"
#include "edgecloud/core.hpp"
#include "edgecloud/schedule.hpp"

namespace edgecloud {

struct StepResult {
  int index = 0;
  std::string question;
  ModelTier tier_used = ModelTier::Device;
  std::string answer;
  std::vector<double> token_probs;
  CostLedger ledger;
  bool cached = false;  // reused from an earlier pass; ledger is zero

  friend bool operator==(const StepResult&, const StepResult&) = default;
};

struct TaskTrace {
  std::string task_id;
  AllocationScheme scheme;
  std::vector<StepResult> steps;  // ordered by sub-task index
  std::string final_answer;
  ModelTier final_tier = ModelTier::Device;
  bool correct = false;
  CostLedger total;     // steps (batch-parallel wall time) plus the final call
  CostLedger final_call;
  CostLedger planning;  // decomposition, dependency judgment, routing calls
  std::optional<std::string> error;

  bool failed() const { return error.has_value(); }
  friend bool operator==(const TaskTrace&, const TaskTrace&) = default;
};

struct ExecOptions {
  int max_tokens = 512;
  double temperature = 0.0;
};

/// Device answers from an earlier pass, keyed by sub-task index. Device-assigned
/// sub-tasks found here are not re-asked.
using StepCache = std::map<int, StepResult>;

std::string step_system_prompt(const Task& task);

/// User prompt for one sub-task. `all_solved` feeds the resolved-answers block and
/// `predecessor_results` (a subset of it) is highlighted as directly related.
std::string assemble_step_prompt(const Task& task, const SubTask& subtask,
                                 std::span<const StepResult> predecessor_results,
                                 std::span<const StepResult> all_solved);

std::string final_answer_prompt(const Task& task, std::span<const StepResult> steps);

/// Tier of the majority of the deepest batch; ties go to Device.
ModelTier final_answer_tier(const DependencyGraph& graph, const AllocationScheme& scheme);

struct StepsOutcome {
  std::vector<StepResult> steps;  // ordered by sub-task index
  CostLedger ledger;              // wall time is the sum over batches of the slowest member
  std::optional<std::string> error;
};

/// Answers every sub-task along the graph without the final aggregation query.
StepsOutcome run_steps_on_graph(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                                const DependencyGraph& graph, const AllocationScheme& scheme,
                                const ExecOptions& options = {}, const StepCache* cache = nullptr);

TaskTrace run_on_graph(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                       const DependencyGraph& graph, const AllocationScheme& scheme, const ExecOptions& options = {},
                       const StepCache* cache = nullptr);

/// Last nonblank line of a response with markdown decoration removed.
std::string extract_final_answer(const std::string& response);
bool judge(const std::string& final_answer, const Task& task);

nlohmann::json to_json(const CostLedger& ledger);
nlohmann::json to_json(const AllocationScheme& scheme);
nlohmann::json to_json(const TaskTrace& trace);

}  // namespace edgecloud
