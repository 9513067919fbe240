#pragma once

// Shared domain types: tasks, sub-tasks, tiers, allocation schemes and cost
// ledgers. Everything here is a plain value type.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace edgecloud {

enum class Checker { ExactMatch, NumericMatch, ContainsMatch };

std::string_view to_string(Checker checker);
std::optional<Checker> parse_checker(std::string_view name);

struct Task {
  std::string id;
  std::string query;
  std::string category;
  std::string ground_truth;
  Checker checker = Checker::ExactMatch;
};

struct SubTask {
  int index = 0;  // 1-based, contiguous within a task
  std::string description;

  friend bool operator==(const SubTask&, const SubTask&) = default;
};

/// Throws PreconditionError unless indices are 1..k and descriptions are nonblank.
void validate_subtasks(std::span<const SubTask> subtasks);

enum class ModelTier : std::uint8_t { Device, Cloud };

std::string_view to_string(ModelTier tier);
std::optional<ModelTier> parse_tier(std::string_view name);

/// Total map from sub-task index to the tier that answers it.
class AllocationScheme {
 public:
  AllocationScheme() = default;
  explicit AllocationScheme(std::map<int, ModelTier> assignment) : assignment_(std::move(assignment)) {}

  static AllocationScheme uniform(std::span<const SubTask> subtasks, ModelTier tier);

  ModelTier at(int index) const;
  void set(int index, ModelTier tier) { assignment_[index] = tier; }
  bool contains(int index) const { return assignment_.contains(index); }
  std::size_t size() const { return assignment_.size(); }
  bool empty() const { return assignment_.empty(); }

  std::vector<int> indices() const;
  std::vector<int> indices_on(ModelTier tier) const;
  std::size_t count(ModelTier tier) const;

  /// Throws DomainMismatchError unless the domain equals exactly the sub-task indices.
  void require_total_over(std::span<const SubTask> subtasks) const;

  const std::map<int, ModelTier>& assignment() const { return assignment_; }

  friend bool operator==(const AllocationScheme&, const AllocationScheme&) = default;

 private:
  std::map<int, ModelTier> assignment_;
};

/// Hamming distance between two schemes over a shared index domain.
int scheme_distance(const AllocationScheme& a, const AllocationScheme& b);

/// Wall time and API spend accumulated by one or more model calls.
/// Cents are kept unrounded; rounding happens only when reports are written.
struct CostLedger {
  double wall_seconds = 0.0;
  double api_cents = 0.0;
  std::int64_t device_calls = 0;
  std::int64_t cloud_calls = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  CostLedger& operator+=(const CostLedger& other);
  friend CostLedger operator+(CostLedger a, const CostLedger& b) { return a += b; }
  friend bool operator==(const CostLedger&, const CostLedger&) = default;
};

CostLedger merge_ledgers(std::span<const CostLedger> parts);

struct Metrics {
  double accuracy = 0.0;
  double mean_wall_seconds = 0.0;
  double mean_api_cents = 0.0;
  double slm_time_fraction = 0.0;
  double slm_subtask_fraction = 0.0;
  std::size_t task_count = 0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Applies a checker to an already-extracted answer.
bool check_answer(std::string_view answer, std::string_view ground_truth, Checker checker);

// Small string helpers shared by the prompt builders and parsers.
std::string trim(std::string_view text);
std::string flatten_whitespace(std::string_view text);

}  // namespace edgecloud
