#pragma once

// Task decomposition: few-shot meta-prompt in, numbered sub-task list out.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "edgecloud/backend.hpp"
#include "edgecloud/core.hpp"

namespace edgecloud {

inline constexpr std::size_t kMaxSubtasks = 20;

struct DecomposeExemplar {
  std::string question;
  std::vector<std::string> steps;
};

/// Hand-written exemplars grouped by task category. A "default" group (or a
/// bare list in the file) serves categories without their own entry.
class ExemplarBank {
 public:
  ExemplarBank() = default;
  explicit ExemplarBank(std::map<std::string, std::vector<DecomposeExemplar>> groups);

  static ExemplarBank load(const std::filesystem::path& path);

  const std::vector<DecomposeExemplar>& for_category(const std::string& category) const;
  bool empty() const { return groups_.empty(); }

 private:
  std::map<std::string, std::vector<DecomposeExemplar>> groups_;
};

std::string build_decompose_prompt(const Task& task, std::span<const DecomposeExemplar> exemplars);

/// Extracts `N.` / `"N.` lines, strips numbering and quotes, and renumbers 1..k.
/// Throws DecompositionParseError when nothing parses.
std::vector<SubTask> parse_subtasks(const std::string& response);

/// Inverse of parse_subtasks for well-formed lists: one "N. description" per line.
std::string format_subtasks(std::span<const SubTask> subtasks);

struct Decomposition {
  std::vector<SubTask> subtasks;
  CostLedger ledger;
};

struct DecomposeOptions {
  ModelTier tier = ModelTier::Device;
  int max_tokens = 512;
  double temperature = 0.0;
};

Decomposition decompose(const BackendRouter& router, const Task& task, std::span<const DecomposeExemplar> exemplars,
                        const DecomposeOptions& options = {});

}  // namespace edgecloud
