#pragma once

// Dependency judgment and graph construction. Sub-tasks of equal depth form
// one batch; batches run in ascending depth order.

#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "edgecloud/backend.hpp"
#include "edgecloud/core.hpp"

namespace edgecloud {

struct Dependency {
  int from_index = 0;
  int to_index = 0;

  friend auto operator<=>(const Dependency&, const Dependency&) = default;
};

struct DependencyGraph {
  std::vector<int> nodes;                 // ascending
  std::set<Dependency> edges;
  std::map<int, int> depth;               // longest-path distance from a source
  std::vector<std::vector<int>> batches;  // batches[d] = nodes of depth d, ascending

  /// Direct predecessors of `index`, ascending.
  std::vector<int> predecessors(int index) const;
  /// Edges dropped by cycle repair, in removal order.
  std::vector<Dependency> removed_edges;
};

std::string dependency_system_prompt();
std::string build_dependency_prompt(const Task& task, std::span<const SubTask> subtasks);

/// Extracts `Step i [..] -> Step j [..]` pairs ("Subproblem" also accepted).
/// Self-loops and unknown indices are dropped with a warning; duplicates collapse.
std::vector<Dependency> parse_dependencies(const std::string& response, std::span<const SubTask> subtasks);

/// Repairs cycles, then assigns longest-path depths and groups nodes into batches.
DependencyGraph build_graph(std::span<const SubTask> subtasks, std::span<const Dependency> deps);

/// 1 -> 2 -> ... -> k; every batch holds a single sub-task.
DependencyGraph chain_graph(std::span<const SubTask> subtasks);

std::string to_dot(const DependencyGraph& graph, std::span<const SubTask> subtasks, const std::string& name);

struct Schedule {
  DependencyGraph graph;
  CostLedger ledger;
};

struct ScheduleOptions {
  ModelTier tier = ModelTier::Device;
  int max_tokens = 512;
  double temperature = 0.0;
};

/// Asks the tier for dependencies and builds the graph. A single sub-task needs no call.
Schedule schedule(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                  const ScheduleOptions& options = {});

}  // namespace edgecloud
