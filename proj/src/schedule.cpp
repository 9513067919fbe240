#include "edgecloud/schedule.hpp"

#include <algorithm>
#include <queue>
#include <regex>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "edgecloud/error.hpp"

namespace edgecloud {

namespace {

// Brackets delimit sub-task text in the dependency format, so they may not appear inside it.
std::string bracket_safe(std::string_view text) {
  std::string out = flatten_whitespace(text);
  std::replace(out.begin(), out.end(), '[', '(');
  std::replace(out.begin(), out.end(), ']', ')');
  return out;
}

using Adjacency = std::map<int, std::vector<int>>;

Adjacency adjacency_of(const std::vector<int>& nodes, const std::set<Dependency>& edges) {
  Adjacency adj;
  for (int n : nodes) adj[n];
  for (const auto& e : edges) adj[e.from_index].push_back(e.to_index);
  for (auto& [_, targets] : adj) std::sort(targets.begin(), targets.end());
  return adj;
}

// Iterative DFS from every unvisited node in ascending order, children ascending.
// Returns back edges in the order they are discovered.
std::vector<Dependency> back_edges(const std::vector<int>& nodes, const std::set<Dependency>& edges) {
  Adjacency adj = adjacency_of(nodes, edges);
  enum class Color { White, Grey, Black };
  std::map<int, Color> color;
  for (int n : nodes) color[n] = Color::White;
  std::vector<Dependency> found;
  for (int root : nodes) {
    if (color[root] != Color::White) continue;
    std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
    color[root] = Color::Grey;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      const auto& targets = adj[node];
      if (next == targets.size()) {
        color[node] = Color::Black;
        stack.pop_back();
        continue;
      }
      int child = targets[next++];
      if (color[child] == Color::Grey) {
        found.push_back({node, child});
      } else if (color[child] == Color::White) {
        color[child] = Color::Grey;
        stack.emplace_back(child, 0);
      }
    }
  }
  return found;
}

}  // namespace

std::vector<int> DependencyGraph::predecessors(int index) const {
  std::vector<int> out;
  for (const auto& e : edges) {
    if (e.to_index == index) out.push_back(e.from_index);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string dependency_system_prompt() {
  return "Now we have a problem, which we have broken down into many sub-problems. I want you to understand the "
         "connection between these sub-problems";
}

std::string build_dependency_prompt(const Task& task, std::span<const SubTask> subtasks) {
  if (subtasks.empty()) throw PreconditionError("dependency prompt needs at least one sub-task");
  std::string inline_steps;
  std::string step_lines;
  for (const auto& st : subtasks) {
    if (!inline_steps.empty()) inline_steps += "; ";
    inline_steps += fmt::format("{}. {}", st.index, flatten_whitespace(st.description));
    step_lines += fmt::format("Step {} [ {} ]\n", st.index, bracket_safe(st.description));
  }
  std::string out = fmt::format(
      "The init problem is {0}. And the sub-problems are {1}. Please provide your understanding of the relationships "
      "between these sub-problems. Your response must be concise.\n\n"
      "Now we need to create standardized connections for the relationships between these sub-problems.\n"
      "Now Given the following subtasks for question: {0}, determine the dependencies between them:\n\n",
      task.query, inline_steps);
  out += step_lines;
  out +=
      "\nPlease list the dependencies in the format 'Subproblem A [xxx] -> Subproblem B [xxx]' indicating that "
      "Sub-problem A must be completed before Sub-problem B can start.\n"
      "Please identify any potential conditional dependencies from a logical perspective.\n\n"
      "Answer format: (Please strictly follow the format. Each dependency should be separated by a new line. No "
      "explanation is required.)\n"
      "Step ID_i [ sub-problem i ] -> Step ID_j [ sub-problem j ]\n"
      "Step ID_j [ sub-problem m ] -> Step ID_n [ sub-problem n ] ...\n";
  return out;
}

std::vector<Dependency> parse_dependencies(const std::string& response, std::span<const SubTask> subtasks) {
  static const std::regex edge(
      R"((?:step|subproblem|sub-problem)\s*(\d+)\s*(?:\[[^\]]*\])?\s*->\s*(?:step|subproblem|sub-problem)\s*(\d+))",
      std::regex::icase);
  std::set<int> known;
  for (const auto& st : subtasks) known.insert(st.index);

  std::vector<Dependency> out;
  std::set<Dependency> seen;
  for (auto it = std::sregex_iterator(response.begin(), response.end(), edge); it != std::sregex_iterator(); ++it) {
    Dependency d{std::stoi((*it)[1].str()), std::stoi((*it)[2].str())};
    if (d.from_index == d.to_index) {
      spdlog::warn("dropping self-dependency on step {}", d.from_index);
      continue;
    }
    if (!known.contains(d.from_index) || !known.contains(d.to_index)) {
      spdlog::warn("dropping dependency {} -> {} that names an unknown step", d.from_index, d.to_index);
      continue;
    }
    if (seen.insert(d).second) out.push_back(d);
  }
  return out;
}

DependencyGraph build_graph(std::span<const SubTask> subtasks, std::span<const Dependency> deps) {
  DependencyGraph g;
  for (const auto& st : subtasks) g.nodes.push_back(st.index);
  std::sort(g.nodes.begin(), g.nodes.end());
  std::set<int> known(g.nodes.begin(), g.nodes.end());
  for (const auto& d : deps) {
    if (!known.contains(d.from_index) || !known.contains(d.to_index)) {
      throw PreconditionError(fmt::format("dependency {} -> {} references an unknown sub-task", d.from_index,
                                          d.to_index));
    }
    g.edges.insert(d);
  }

  for (;;) {
    auto back = back_edges(g.nodes, g.edges);
    if (back.empty()) break;
    const Dependency victim = back.back();
    spdlog::warn("dependency cycle: removing edge {} -> {}", victim.from_index, victim.to_index);
    g.edges.erase(victim);
    g.removed_edges.push_back(victim);
  }

  // Kahn's algorithm, smallest index first, relaxing longest-path depth.
  Adjacency adj = adjacency_of(g.nodes, g.edges);
  std::map<int, int> indegree;
  for (int n : g.nodes) indegree[n] = 0;
  for (const auto& e : g.edges) ++indegree[e.to_index];
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int n : g.nodes) {
    g.depth[n] = 0;
    if (indegree[n] == 0) ready.push(n);
  }
  while (!ready.empty()) {
    int n = ready.top();
    ready.pop();
    for (int m : adj[n]) {
      g.depth[m] = std::max(g.depth[m], g.depth[n] + 1);
      if (--indegree[m] == 0) ready.push(m);
    }
  }

  int max_depth = -1;
  for (const auto& [_, d] : g.depth) max_depth = std::max(max_depth, d);
  g.batches.assign(static_cast<std::size_t>(max_depth + 1), {});
  for (int n : g.nodes) g.batches[static_cast<std::size_t>(g.depth[n])].push_back(n);
  return g;
}

DependencyGraph chain_graph(std::span<const SubTask> subtasks) {
  std::vector<Dependency> deps;
  for (std::size_t i = 1; i < subtasks.size(); ++i) deps.push_back({subtasks[i - 1].index, subtasks[i].index});
  return build_graph(subtasks, deps);
}

std::string to_dot(const DependencyGraph& graph, std::span<const SubTask> subtasks, const std::string& name) {
  auto escape = [](std::string_view s) {
    std::string out;
    for (char c : flatten_whitespace(s)) {
      if (c == '"' || c == '\\') out.push_back('\\');
      out.push_back(c);
    }
    return out;
  };
  std::string out = fmt::format("digraph \"{}\" {{\n  rankdir=LR;\n", escape(name));
  for (const auto& st : subtasks) {
    auto it = graph.depth.find(st.index);
    int depth = it == graph.depth.end() ? 0 : it->second;
    out += fmt::format("  n{} [label=\"{}: {}\\ndepth {}\"];\n", st.index, st.index, escape(st.description), depth);
  }
  for (const auto& e : graph.edges) out += fmt::format("  n{} -> n{};\n", e.from_index, e.to_index);
  out += "}\n";
  return out;
}

Schedule schedule(const BackendRouter& router, const Task& task, std::span<const SubTask> subtasks,
                  const ScheduleOptions& options) {
  if (subtasks.size() <= 1) return {build_graph(subtasks, {}), {}};
  ChatRequest req;
  req.system = dependency_system_prompt();
  req.user = build_dependency_prompt(task, subtasks);
  req.max_tokens = options.max_tokens;
  req.temperature = options.temperature;
  req.want_token_probs = false;
  auto [resp, ledger] = router.call(options.tier, req);
  auto deps = parse_dependencies(resp.text, subtasks);
  if (deps.empty()) spdlog::info("task '{}': no dependencies parsed; running all sub-tasks as one batch", task.id);
  return {build_graph(subtasks, deps), ledger};
}

}  // namespace edgecloud
