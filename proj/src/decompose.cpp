#include "edgecloud/decompose.hpp"

#include <fstream>
#include <regex>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "edgecloud/error.hpp"

namespace edgecloud {

namespace {

std::vector<DecomposeExemplar> exemplars_from_json(const nlohmann::json& list) {
  std::vector<DecomposeExemplar> out;
  for (const auto& e : list) {
    DecomposeExemplar ex;
    ex.question = e.at("question").get<std::string>();
    ex.steps = e.at("steps").get<std::vector<std::string>>();
    if (ex.steps.empty()) throw ConfigError(fmt::format("exemplar '{}' has no steps", ex.question));
    for (const auto& s : ex.steps) {
      if (trim(s).empty()) throw ConfigError(fmt::format("exemplar '{}' has an empty step", ex.question));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::string strip_quoted_tail(std::string s) {
  // `"1. step",` / `"1. step".` / `"1. step"`
  s = trim(s);
  if (!s.empty() && (s.back() == ',' || s.back() == '.')) {
    if (s.size() >= 2 && s[s.size() - 2] == '"') s.pop_back();
  }
  if (!s.empty() && s.back() == '"') s.pop_back();
  return trim(s);
}

}  // namespace

ExemplarBank::ExemplarBank(std::map<std::string, std::vector<DecomposeExemplar>> groups)
    : groups_(std::move(groups)) {}

ExemplarBank ExemplarBank::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open exemplars file {}", path.string()));
  try {
    nlohmann::json doc;
    in >> doc;
    std::map<std::string, std::vector<DecomposeExemplar>> groups;
    if (doc.is_array()) {
      groups["default"] = exemplars_from_json(doc);
    } else {
      for (const auto& [category, list] : doc.items()) groups[category] = exemplars_from_json(list);
    }
    return ExemplarBank(std::move(groups));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed exemplars file {}: {}", path.string(), e.what()));
  }
}

const std::vector<DecomposeExemplar>& ExemplarBank::for_category(const std::string& category) const {
  if (auto it = groups_.find(category); it != groups_.end()) return it->second;
  if (auto it = groups_.find("default"); it != groups_.end()) return it->second;
  throw ConfigError(fmt::format("no exemplars for category '{}' and no default group", category));
}

std::string build_decompose_prompt(const Task& task, std::span<const DecomposeExemplar> exemplars) {
  if (exemplars.empty()) throw ConfigError("decomposition needs at least one exemplar");
  std::string out = fmt::format(
      "I will now give you a {0} problem. The type of problem is {0}. Please break this problem down into several "
      "easy-to-solve steps.\n\n",
      task.category);
  out += fmt::format("{} examples are as follows:\n", exemplars.size());
  for (const auto& ex : exemplars) {
    out += fmt::format("Question: {}\n", ex.question);
    out += fmt::format("To solve the question \"{}\", we need to know:\n", ex.question);
    for (std::size_t i = 0; i < ex.steps.size(); ++i) {
      out += fmt::format("\"{}. {}\"{}\n", i + 1, ex.steps[i], i + 1 == ex.steps.size() ? "." : ",");
    }
    out += "\n";
  }
  out += fmt::format("Now the command is {}, please decompose it into easy-to-solve steps like the examples.\n",
                     task.query);
  out +=
      "Answer Format: (Please write each broken-down question step on a separate line, starting with a number.)\n"
      "\n"
      "To solve the question \"xxx\", we need to know:\n"
      "\"1. question step_1\",\n"
      "\"2. question step_2\",\n"
      "\"3. question step_3\".\n"
      "...\n";
  return out;
}

std::vector<SubTask> parse_subtasks(const std::string& response) {
  static const std::regex numbered(R"(^(\d+)\.\s*(.*)$)");
  std::vector<SubTask> out;
  std::size_t start = 0;
  while (start <= response.size()) {
    std::size_t end = response.find('\n', start);
    if (end == std::string::npos) end = response.size();
    std::string line = trim(std::string_view(response).substr(start, end - start));
    start = end + 1;

    bool quoted = !line.empty() && line.front() == '"';
    if (quoted) line.erase(0, 1);
    std::smatch m;
    if (!std::regex_match(line, m, numbered)) continue;
    std::string description = quoted ? strip_quoted_tail(m[2].str()) : trim(m[2].str());
    if (description.empty()) {
      spdlog::warn("skipping numbered line {} with an empty description", m[1].str());
      continue;
    }
    out.push_back({static_cast<int>(out.size()) + 1, std::move(description)});
  }
  if (out.empty()) {
    throw DecompositionParseError("decomposition response has no numbered sub-task lines", response);
  }
  if (out.size() > kMaxSubtasks) {
    spdlog::warn("decomposition produced {} sub-tasks; keeping the first {}", out.size(), kMaxSubtasks);
    out.resize(kMaxSubtasks);
  }
  return out;
}

std::string format_subtasks(std::span<const SubTask> subtasks) {
  std::string out;
  for (const auto& st : subtasks) out += fmt::format("{}. {}\n", st.index, st.description);
  return out;
}

Decomposition decompose(const BackendRouter& router, const Task& task, std::span<const DecomposeExemplar> exemplars,
                        const DecomposeOptions& options) {
  ChatRequest req;
  req.user = build_decompose_prompt(task, exemplars);
  req.max_tokens = options.max_tokens;
  req.temperature = options.temperature;
  req.want_token_probs = false;
  auto [resp, ledger] = router.call(options.tier, req);
  try {
    Decomposition d{parse_subtasks(resp.text), ledger};
    validate_subtasks(d.subtasks);
    return d;
  } catch (const DecompositionParseError& e) {
    throw DecompositionParseError(fmt::format("task '{}': {}", task.id, e.what()), e.raw_response(), task.id);
  }
}

}  // namespace edgecloud
