#include "edgecloud/execute.hpp"

#include <algorithm>
#include <future>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include "edgecloud/error.hpp"

namespace edgecloud {

namespace {

std::string solved_line(const StepResult& r) {
  return fmt::format("Sub-question-Id: {}; Sub-question: {}; Answer: {}\n", r.index, flatten_whitespace(r.question),
                     flatten_whitespace(r.answer));
}

StepResult answer_one(const BackendRouter& router, const Task& task, const SubTask& st, ModelTier tier,
                      std::vector<StepResult> preds, const ExecOptions& options) {
  ChatRequest req;
  req.system = step_system_prompt(task);
  req.user = assemble_step_prompt(task, st, preds, preds);
  req.max_tokens = options.max_tokens;
  req.temperature = options.temperature;
  req.want_token_probs = true;
  auto [resp, ledger] = router.call(tier, req);
  StepResult r;
  r.index = st.index;
  r.question = st.description;
  r.tier_used = tier;
  r.answer = std::move(resp.text);
  r.token_probs = std::move(resp.token_probs);
  r.ledger = ledger;
  return r;
}

}  // namespace

std::string step_system_prompt(const Task& task) {
  return fmt::format(
      "Here is a math word problem. I will first provide a passage of the problem to set the context. Then, I will "
      "ask a specific question that requires you to use the information from the problem description, along with "
      "calculation and reasoning, to solve it.\n"
      "Passage:\n"
      "Question: {}\n\n"
      "I have broken this math question down into several smaller questions. I will assign you sub-questions one by "
      "one, and provide the results of previous sub-questions as a reference for your reasoning.\n"
      "Please solve the question according to mathematical logic.",
      task.query);
}

std::string assemble_step_prompt(const Task&, const SubTask& subtask, std::span<const StepResult> predecessor_results,
                                 std::span<const StepResult> all_solved) {
  std::string out;
  if (!all_solved.empty()) {
    out +=
        "So far, the answers to the resolved sub-questions are as follows: The format is Sub-question-Id: xxx; "
        "Sub-question: xxx; Answer: xxx.\n";
    for (const auto& r : all_solved) out += solved_line(r);
    if (!predecessor_results.empty()) {
      std::vector<int> ids;
      for (const auto& r : predecessor_results) ids.push_back(r.index);
      out += fmt::format(
          "Among them, sub-questions {} are directly related to this sub-question, so please pay special attention "
          "to them.\n",
          fmt::join(ids, ", "));
    }
  }
  out += fmt::format("The sub-question to solve now is {}: {}\n", subtask.index, flatten_whitespace(subtask.description));
  out += "Based on the information above, please provide a concise and clear answer";
  return out;
}

std::string final_answer_prompt(const Task& task, std::span<const StepResult> steps) {
  std::string out =
      "All sub-questions have been resolved. The format is Sub-question-Id: xxx; Sub-question: xxx; Answer: xxx.\n";
  for (const auto& r : steps) out += solved_line(r);
  out += fmt::format("Based on the answers above, please give the final answer to the original question: {}\n",
                     flatten_whitespace(task.query));
  out += "Write the final answer alone on the last line.";
  return out;
}

ModelTier final_answer_tier(const DependencyGraph& graph, const AllocationScheme& scheme) {
  if (graph.batches.empty()) return ModelTier::Device;
  std::size_t cloud = 0;
  const auto& deepest = graph.batches.back();
  for (int idx : deepest) cloud += scheme.at(idx) == ModelTier::Cloud;
  return 2 * cloud > deepest.size() ? ModelTier::Cloud : ModelTier::Device;
}

StepsOutcome run_steps_on_graph(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                                const DependencyGraph& graph, const AllocationScheme& scheme,
                                const ExecOptions& options, const StepCache* cache) {
  scheme.require_total_over(subtasks);
  std::map<int, const SubTask*> by_index;
  for (const auto& st : subtasks) by_index[st.index] = &st;

  StepsOutcome out;
  std::map<int, StepResult> done;
  for (const auto& batch : graph.batches) {
    std::vector<std::future<StepResult>> pending;
    std::vector<int> launched;
    double batch_wall = 0.0;
    for (int idx : batch) {
      const ModelTier tier = scheme.at(idx);
      if (cache != nullptr && tier == ModelTier::Device) {
        if (auto it = cache->find(idx); it != cache->end()) {
          StepResult r = it->second;
          r.cached = true;
          r.ledger = CostLedger{};
          done[idx] = std::move(r);
          continue;
        }
      }
      std::vector<StepResult> preds;
      for (int p : graph.predecessors(idx)) preds.push_back(done.at(p));
      pending.push_back(std::async(std::launch::async, answer_one, std::cref(router), std::cref(task),
                                   std::cref(*by_index.at(idx)), tier, std::move(preds), std::cref(options)));
      launched.push_back(idx);
    }
    // Results are collected in index order, never arrival order.
    for (std::size_t i = 0; i < pending.size(); ++i) {
      try {
        StepResult r = pending[i].get();
        batch_wall = std::max(batch_wall, r.ledger.wall_seconds);
        CostLedger no_wall = r.ledger;
        no_wall.wall_seconds = 0.0;
        out.ledger += no_wall;
        done[launched[i]] = std::move(r);
      } catch (const Error& e) {
        if (!out.error) out.error = fmt::format("sub-task {}: {}", launched[i], e.what());
      }
    }
    out.ledger.wall_seconds += batch_wall;
    if (out.error) break;
  }
  for (auto& [_, r] : done) out.steps.push_back(std::move(r));
  return out;
}

TaskTrace run_on_graph(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                       const DependencyGraph& graph, const AllocationScheme& scheme, const ExecOptions& options,
                       const StepCache* cache) {
  TaskTrace trace;
  trace.task_id = task.id;
  trace.scheme = scheme;
  StepsOutcome steps = run_steps_on_graph(router, task, subtasks, graph, scheme, options, cache);
  trace.steps = std::move(steps.steps);
  trace.total = steps.ledger;
  if (steps.error) {
    trace.error = std::move(steps.error);
    spdlog::warn("task '{}' failed: {}", task.id, *trace.error);
    return trace;
  }
  trace.final_tier = final_answer_tier(graph, scheme);
  ChatRequest req;
  req.system = step_system_prompt(task);
  req.user = final_answer_prompt(task, trace.steps);
  req.max_tokens = options.max_tokens;
  req.temperature = options.temperature;
  req.want_token_probs = false;
  try {
    auto [resp, ledger] = router.call(trace.final_tier, req);
    trace.total += ledger;
    trace.final_call = ledger;
    trace.final_answer = std::move(resp.text);
    trace.correct = judge(trace.final_answer, task);
  } catch (const Error& e) {
    trace.error = fmt::format("final answer: {}", e.what());
    spdlog::warn("task '{}' failed: {}", task.id, *trace.error);
  }
  return trace;
}

std::string extract_final_answer(const std::string& response) {
  std::string last;
  std::size_t start = 0;
  while (start <= response.size()) {
    std::size_t end = response.find('\n', start);
    if (end == std::string::npos) end = response.size();
    std::string line = trim(std::string_view(response).substr(start, end - start));
    if (!line.empty()) last = std::move(line);
    start = end + 1;
  }
  // Leading heading/quote/bullet markers, then emphasis and code markers anywhere.
  std::size_t b = 0;
  while (b < last.size() && (last[b] == '#' || last[b] == '>' || last[b] == '-' || last[b] == ' ')) ++b;
  last.erase(0, b);
  std::string out;
  for (char c : last) {
    if (c != '*' && c != '`') out.push_back(c);
  }
  return trim(out);
}

bool judge(const std::string& final_answer, const Task& task) {
  return check_answer(extract_final_answer(final_answer), task.ground_truth, task.checker);
}

nlohmann::json to_json(const CostLedger& l) {
  return {{"wall_seconds", l.wall_seconds},   {"api_cents", l.api_cents},
          {"device_calls", l.device_calls},   {"cloud_calls", l.cloud_calls},
          {"prompt_tokens", l.prompt_tokens}, {"completion_tokens", l.completion_tokens}};
}

nlohmann::json to_json(const AllocationScheme& scheme) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [idx, tier] : scheme.assignment()) j[std::to_string(idx)] = std::string(to_string(tier));
  return j;
}

nlohmann::json to_json(const TaskTrace& t) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : t.steps) {
    steps.push_back({{"index", s.index},
                     {"question", s.question},
                     {"tier", std::string(to_string(s.tier_used))},
                     {"answer", s.answer},
                     {"token_probs", s.token_probs},
                     {"cached", s.cached},
                     {"ledger", to_json(s.ledger)}});
  }
  nlohmann::json j = {{"task_id", t.task_id},
                      {"scheme", to_json(t.scheme)},
                      {"steps", std::move(steps)},
                      {"final_answer", t.final_answer},
                      {"final_tier", std::string(to_string(t.final_tier))},
                      {"correct", t.correct},
                      {"total", to_json(t.total)},
                      {"final_call", to_json(t.final_call)},
                      {"planning", to_json(t.planning)}};
  j["error"] = t.error ? nlohmann::json(*t.error) : nlohmann::json(nullptr);
  return j;
}

}  // namespace edgecloud
