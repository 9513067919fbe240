#include "edgecloud/alphatree.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "edgecloud/error.hpp"
#include "edgecloud/hash.hpp"

namespace edgecloud {

namespace {

// Most recent correct scheme on the path, else the last one evaluated.
void settle(SearchOutcome& out) {
  out.evaluations = static_cast<int>(out.path.size());
  if (out.path.empty()) return;
  auto it = std::find_if(out.path.rbegin(), out.path.rend(), [](const Evaluation& e) { return e.correct; });
  if (it != out.path.rend()) {
    out.final_scheme = it->scheme;
    out.final_correct = true;
  } else {
    out.final_scheme = out.path.back().scheme;
    out.final_correct = false;
  }
}

// Runs one evaluation and appends it to the path. Returns false when the run failed.
bool evaluate(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
              const DependencyGraph& graph, const AllocationScheme& scheme, const ExecOptions& exec,
              const StepCache* cache, SearchOutcome& out) {
  TaskTrace trace = run_on_graph(router, task, subtasks, graph, scheme, exec, cache);
  out.ledger += trace.total;
  if (trace.failed()) {
    out.error = trace.error;
    return false;
  }
  out.path.push_back({scheme, trace.correct});
  return true;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

AllocationScheme initial_allocation(const std::map<int, double>& scores, double theta) {
  std::map<int, ModelTier> m;
  for (const auto& [idx, s] : scores) m[idx] = s > theta ? ModelTier::Device : ModelTier::Cloud;
  return AllocationScheme(std::move(m));
}

double median_score(const std::map<int, double>& scores) {
  if (scores.empty()) throw PreconditionError("median of an empty score set");
  std::vector<double> v;
  for (const auto& [_, s] : scores) v.push_back(s);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SearchOutcome alpha_tree_search(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                                const DependencyGraph& graph, const AlphaTreeOptions& options) {
  if (options.n < 1) throw PreconditionError("alpha-tree step size n must be at least 1");
  SearchOutcome out;
  out.task_id = task.id;

  // Every sub-task answered by the device tier, in graph order.
  const auto all_device = AllocationScheme::uniform(subtasks, ModelTier::Device);
  StepsOutcome device_pass = run_steps_on_graph(router, task, subtasks, graph, all_device, options.exec);
  out.ledger += device_pass.ledger;
  if (device_pass.error) {
    out.error = device_pass.error;
    return out;
  }
  StepCache cache;
  for (const auto& step : device_pass.steps) {
    out.scores[step.index] = alpha_quantile(step.token_probs, options.alpha);
    cache[step.index] = step;
  }

  const double theta = options.theta.value_or(median_score(out.scores));
  AllocationScheme current = initial_allocation(out.scores, theta);
  if (!evaluate(router, task, subtasks, graph, current, options.exec, &cache, out)) {
    settle(out);
    return out;
  }
  bool result = out.path.back().correct;

  for (;;) {
    // Correct: promote the most confident Cloud sub-tasks. Incorrect: demote the least confident Device ones.
    const ModelTier from = result ? ModelTier::Cloud : ModelTier::Device;
    const ModelTier to = result ? ModelTier::Device : ModelTier::Cloud;
    std::vector<int> movable = current.indices_on(from);
    if (movable.empty()) break;
    std::stable_sort(movable.begin(), movable.end(), [&](int a, int b) {
      return result ? out.scores.at(a) > out.scores.at(b) : out.scores.at(a) < out.scores.at(b);
    });
    AllocationScheme next = current;
    const std::size_t moves = std::min<std::size_t>(static_cast<std::size_t>(options.n), movable.size());
    for (std::size_t i = 0; i < moves; ++i) next.set(movable[i], to);

    if (!evaluate(router, task, subtasks, graph, next, options.exec, &cache, out)) break;
    if (out.path.back().correct != result) break;
    current = std::move(next);
  }
  settle(out);
  return out;
}

SearchOutcome binary_search_baseline(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                                     const DependencyGraph& graph, const BinarySearchOptions& options) {
  if (options.attempts < 1) throw PreconditionError("binary search needs at least one attempt per round");
  SearchOutcome out;
  out.task_id = task.id;
  SplitMix64 rng(options.seed ^ fnv1a64(task.id));

  AllocationScheme current = AllocationScheme::uniform(subtasks, ModelTier::Cloud);
  if (!evaluate(router, task, subtasks, graph, current, options.exec, nullptr, out) || !out.path.back().correct) {
    settle(out);
    return out;
  }
  for (;;) {
    std::vector<int> cloud = current.indices_on(ModelTier::Cloud);
    if (cloud.empty()) break;
    const std::size_t take = (cloud.size() + 1) / 2;
    bool advanced = false;
    for (int attempt = 0; attempt < options.attempts && !advanced; ++attempt) {
      std::vector<int> pool = cloud;
      AllocationScheme candidate = current;
      for (std::size_t i = 0; i < take; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
        candidate.set(pool[i], ModelTier::Device);
      }
      if (!evaluate(router, task, subtasks, graph, candidate, options.exec, nullptr, out)) {
        settle(out);
        return out;
      }
      if (out.path.back().correct) {
        current = std::move(candidate);
        advanced = true;
      }
    }
    if (!advanced) break;
  }
  settle(out);
  return out;
}

std::string zero_shot_prompt(const Task& task, std::span<const SubTask> subtasks, const SubTask& current) {
  std::string out = fmt::format("Here is a problem and the sub-problems it was broken into.\nProblem: {}\nSub-problems:\n",
                                flatten_whitespace(task.query));
  for (const auto& st : subtasks) out += fmt::format("{}. {}\n", st.index, flatten_whitespace(st.description));
  out += fmt::format("Current sub-problem: {}. {}\n", current.index, flatten_whitespace(current.description));
  out +=
      "Question: Is the current sub-problem simple enough for a small on-device model, or complex enough to need a "
      "large cloud model? Answer with one word: simple or complex.\nAnswer:";
  return out;
}

std::string referral_prompt(const Task& task) {
  return fmt::format(
      "Here is a problem: {}\n"
      "Question: Evaluate the complexity of this problem. Is it simple enough for a small on-device model, or complex "
      "enough to need a large cloud model? Answer with one word: simple or complex.\nAnswer:",
      flatten_whitespace(task.query));
}

std::optional<ModelTier> parse_difficulty_verdict(std::string_view text) {
  const std::string lower = lowercase(text);
  const bool simple = lower.find("simple") != std::string::npos;
  const bool complex = lower.find("complex") != std::string::npos;
  if (simple == complex) return std::nullopt;
  return simple ? ModelTier::Device : ModelTier::Cloud;
}

ZeroShotResult zero_shot_baseline(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                                  const ExecOptions& exec) {
  ZeroShotResult out;
  for (const auto& st : subtasks) {
    ChatRequest req;
    req.user = zero_shot_prompt(task, subtasks, st);
    req.max_tokens = exec.max_tokens;
    req.temperature = exec.temperature;
    req.want_token_probs = false;
    auto [resp, ledger] = router.call(ModelTier::Cloud, req);
    out.ledger += ledger;
    auto verdict = parse_difficulty_verdict(resp.text);
    if (!verdict) {
      spdlog::warn("task '{}' sub-task {}: unreadable difficulty verdict '{}', using cloud", task.id, st.index,
                   flatten_whitespace(resp.text));
    }
    out.scheme.set(st.index, verdict.value_or(ModelTier::Cloud));
  }
  return out;
}

SearchOutcome zero_shot_search(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                               const DependencyGraph& graph, const ExecOptions& exec) {
  SearchOutcome out;
  out.task_id = task.id;
  try {
    ZeroShotResult judged = zero_shot_baseline(router, task, subtasks, exec);
    out.ledger += judged.ledger;
    evaluate(router, task, subtasks, graph, judged.scheme, exec, nullptr, out);
  } catch (const BackendError& e) {
    out.error = e.what();
  }
  settle(out);
  return out;
}

std::vector<AdapterRecord> emit_adapter_dataset(std::span<const SearchOutcome> outcomes,
                                                const std::map<std::string, std::vector<SubTask>>& subtasks_by_task) {
  if (outcomes.empty()) throw PreconditionError("no search outcomes to label");
  std::vector<AdapterRecord> records;
  for (const auto& o : outcomes) {
    if (!o.final_correct) {
      spdlog::info("task '{}': no correct allocation found; excluded from the dataset", o.task_id);
      continue;
    }
    auto it = subtasks_by_task.find(o.task_id);
    if (it == subtasks_by_task.end()) throw PreconditionError(fmt::format("no sub-tasks for task '{}'", o.task_id));
    o.final_scheme.require_total_over(it->second);
    for (const auto& st : it->second) {
      records.push_back({o.task_id, st.index, st.description, o.final_scheme.at(st.index) == ModelTier::Cloud ? 1 : 0,
                         std::nullopt});
    }
  }
  if (records.empty()) throw EmptyResultError("no search outcome ended with a correct allocation; dataset is empty");
  return records;
}

void write_adapter_dataset(const std::filesystem::path& path, std::span<const AdapterRecord> records) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(fmt::format("cannot write dataset {}", path.string()));
  for (const auto& r : records) {
    nlohmann::json j = {{"task_id", r.task_id}, {"subtask_index", r.subtask_index}, {"text", r.text}, {"label", r.label}};
    out << j.dump() << '\n';
  }
}

std::vector<AdapterRecord> read_adapter_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open dataset {}", path.string()));
  std::vector<AdapterRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      AdapterRecord r;
      r.task_id = j.at("task_id").get<std::string>();
      r.subtask_index = j.at("subtask_index").get<int>();
      r.text = j.at("text").get<std::string>();
      r.label = j.at("label").get<int>();
      if (r.label != 0 && r.label != 1) throw ConfigError(fmt::format("label {} is not 0 or 1", r.label));
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

SearchSummary summarize(std::span<const SearchOutcome> outcomes) {
  SearchSummary s;
  s.tasks = outcomes.size();
  if (outcomes.empty()) return s;
  std::size_t device = 0;
  std::size_t total = 0;
  std::size_t correct = 0;
  double evals = 0.0;
  double cents = 0.0;
  for (const auto& o : outcomes) {
    device += o.final_scheme.count(ModelTier::Device);
    total += o.final_scheme.size();
    correct += o.final_correct;
    evals += o.evaluations;
    cents += o.ledger.api_cents;
  }
  const auto n = static_cast<double>(outcomes.size());
  s.slm_ratio = total == 0 ? 0.0 : static_cast<double>(device) / static_cast<double>(total);
  s.success_rate = static_cast<double>(correct) / n;
  s.mean_evaluations = evals / n;
  s.mean_api_cents = cents / n;
  return s;
}

nlohmann::json to_json(const SearchOutcome& o) {
  nlohmann::json path = nlohmann::json::array();
  for (const auto& e : o.path) path.push_back({{"scheme", to_json(e.scheme)}, {"correct", e.correct}});
  nlohmann::json scores = nlohmann::json::object();
  for (const auto& [idx, s] : o.scores) scores[std::to_string(idx)] = s;
  nlohmann::json j = {{"task_id", o.task_id},       {"final_scheme", to_json(o.final_scheme)},
                      {"final_correct", o.final_correct}, {"evaluations", o.evaluations},
                      {"path", std::move(path)},    {"scores", std::move(scores)},
                      {"ledger", to_json(o.ledger)}};
  j["error"] = o.error ? nlohmann::json(*o.error) : nlohmann::json(nullptr);
  return j;
}

}  // namespace edgecloud
