#include "edgecloud/core.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "edgecloud/error.hpp"

namespace edgecloud {

namespace {

constexpr double kNumericTolerance = 1e-6;

std::optional<double> parse_decimal(std::string_view text) {
  std::string s = trim(text);
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  double value = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace

std::string_view to_string(Checker checker) {
  switch (checker) {
    case Checker::ExactMatch: return "ExactMatch";
    case Checker::NumericMatch: return "NumericMatch";
    case Checker::ContainsMatch: return "ContainsMatch";
  }
  return "ExactMatch";
}

std::optional<Checker> parse_checker(std::string_view name) {
  if (name == "ExactMatch" || name == "exact") return Checker::ExactMatch;
  if (name == "NumericMatch" || name == "numeric") return Checker::NumericMatch;
  if (name == "ContainsMatch" || name == "contains") return Checker::ContainsMatch;
  return std::nullopt;
}

std::string_view to_string(ModelTier tier) {
  return tier == ModelTier::Device ? "device" : "cloud";
}

std::optional<ModelTier> parse_tier(std::string_view name) {
  if (name == "device" || name == "Device" || name == "D") return ModelTier::Device;
  if (name == "cloud" || name == "Cloud" || name == "C") return ModelTier::Cloud;
  return std::nullopt;
}

void validate_subtasks(std::span<const SubTask> subtasks) {
  for (std::size_t i = 0; i < subtasks.size(); ++i) {
    const auto& st = subtasks[i];
    if (st.index != static_cast<int>(i) + 1) {
      throw PreconditionError(
          fmt::format("sub-task indices must run 1..k without gaps; position {} holds index {}", i + 1, st.index));
    }
    if (trim(st.description).empty()) {
      throw PreconditionError(fmt::format("sub-task {} has an empty description", st.index));
    }
  }
}

AllocationScheme AllocationScheme::uniform(std::span<const SubTask> subtasks, ModelTier tier) {
  std::map<int, ModelTier> m;
  for (const auto& st : subtasks) m.emplace(st.index, tier);
  return AllocationScheme(std::move(m));
}

ModelTier AllocationScheme::at(int index) const {
  auto it = assignment_.find(index);
  if (it == assignment_.end()) {
    throw DomainMismatchError(fmt::format("allocation scheme has no entry for sub-task {}", index));
  }
  return it->second;
}

std::vector<int> AllocationScheme::indices() const {
  std::vector<int> out;
  out.reserve(assignment_.size());
  for (const auto& [idx, _] : assignment_) out.push_back(idx);
  return out;
}

std::vector<int> AllocationScheme::indices_on(ModelTier tier) const {
  std::vector<int> out;
  for (const auto& [idx, t] : assignment_) {
    if (t == tier) out.push_back(idx);
  }
  return out;
}

std::size_t AllocationScheme::count(ModelTier tier) const {
  std::size_t n = 0;
  for (const auto& [_, t] : assignment_) n += (t == tier);
  return n;
}

void AllocationScheme::require_total_over(std::span<const SubTask> subtasks) const {
  std::vector<int> missing;
  std::map<int, bool> expected;
  for (const auto& st : subtasks) {
    expected[st.index] = true;
    if (!assignment_.contains(st.index)) missing.push_back(st.index);
  }
  std::vector<int> extra;
  for (const auto& [idx, _] : assignment_) {
    if (!expected.contains(idx)) extra.push_back(idx);
  }
  if (!missing.empty() || !extra.empty()) {
    throw DomainMismatchError(
        fmt::format("allocation scheme is not total: missing {} extra {}", missing, extra));
  }
}

int scheme_distance(const AllocationScheme& a, const AllocationScheme& b) {
  std::vector<int> only_a;
  std::vector<int> only_b;
  int distance = 0;
  for (const auto& [idx, tier] : a.assignment()) {
    auto it = b.assignment().find(idx);
    if (it == b.assignment().end()) {
      only_a.push_back(idx);
    } else if (it->second != tier) {
      ++distance;
    }
  }
  for (const auto& [idx, _] : b.assignment()) {
    if (!a.contains(idx)) only_b.push_back(idx);
  }
  if (!only_a.empty() || !only_b.empty()) {
    throw DomainMismatchError(
        fmt::format("scheme domains differ: only in first {} only in second {}", only_a, only_b));
  }
  return distance;
}

CostLedger& CostLedger::operator+=(const CostLedger& other) {
  wall_seconds += other.wall_seconds;
  api_cents += other.api_cents;
  device_calls += other.device_calls;
  cloud_calls += other.cloud_calls;
  prompt_tokens += other.prompt_tokens;
  completion_tokens += other.completion_tokens;
  return *this;
}

CostLedger merge_ledgers(std::span<const CostLedger> parts) {
  CostLedger total;
  for (const auto& p : parts) total += p;
  return total;
}

bool check_answer(std::string_view answer, std::string_view ground_truth, Checker checker) {
  switch (checker) {
    case Checker::ExactMatch:
      return trim(answer) == trim(ground_truth);
    case Checker::NumericMatch: {
      auto a = parse_decimal(answer);
      auto g = parse_decimal(ground_truth);
      return a && g && std::fabs(*a - *g) <= kNumericTolerance;
    }
    case Checker::ContainsMatch: {
      std::string needle = trim(ground_truth);
      return !needle.empty() && answer.find(needle) != std::string_view::npos;
    }
  }
  return false;
}

std::string trim(std::string_view text) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  std::size_t b = 0;
  std::size_t e = text.size();
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
  return std::string(text.substr(b, e - b));
}

std::string flatten_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

}  // namespace edgecloud
