#include "edgecloud/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "edgecloud/alphatree.hpp"
#include "edgecloud/error.hpp"
#include "edgecloud/schedule.hpp"

namespace edgecloud {

namespace {

double round_to(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(value * scale) / scale;
}

template <typename Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  }
}

AllocationScheme threshold_scheme(const StepsOutcome& device_pass, double theta, double alpha) {
  std::map<int, double> scores;
  for (const auto& step : device_pass.steps) scores[step.index] = alpha_quantile(step.token_probs, alpha);
  return initial_allocation(scores, theta);
}

AllocationScheme fraction_scheme(std::span<const SubTask> subtasks, const std::vector<int>* hardest_first,
                                 double fraction) {
  auto scheme = AllocationScheme::uniform(subtasks, ModelTier::Device);
  std::vector<int> order;
  if (hardest_first != nullptr && hardest_first->size() == subtasks.size()) {
    order = *hardest_first;
  } else {
    for (const auto& st : subtasks) order.push_back(st.index);
  }
  const auto k = static_cast<double>(subtasks.size());
  const auto to_cloud = static_cast<std::size_t>(std::ceil(fraction * k - 1e-9));
  for (std::size_t i = 0; i < std::min(to_cloud, order.size()); ++i) scheme.set(order[i], ModelTier::Cloud);
  return scheme;
}

}  // namespace

std::string Strategy::name() const {
  switch (kind) {
    case StrategyKind::AdapterDoT: return "adapter";
    case StrategyKind::ThresholdDoT: return "threshold";
    case StrategyKind::AllDevice: return "all-device";
    case StrategyKind::AllCloud: return "all-cloud";
    case StrategyKind::SimpleReferral: return "simple-referral";
    case StrategyKind::SequentialNoGraph: return "sequential";
    case StrategyKind::CloudFraction: return fmt::format("cloud-fraction-{:.2f}", cloud_fraction);
  }
  return "unknown";
}

Strategy Strategy::parse(std::string_view name) {
  Strategy s;
  if (name == "adapter") s.kind = StrategyKind::AdapterDoT;
  else if (name == "threshold") s.kind = StrategyKind::ThresholdDoT;
  else if (name == "all-device") s.kind = StrategyKind::AllDevice;
  else if (name == "all-cloud") s.kind = StrategyKind::AllCloud;
  else if (name == "simple-referral") s.kind = StrategyKind::SimpleReferral;
  else if (name == "sequential") s.kind = StrategyKind::SequentialNoGraph;
  else throw ConfigError(fmt::format("unknown strategy '{}'", name));
  return s;
}

std::vector<Task> load_benchmark(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open benchmark {}", path.string()));
  std::vector<Task> tasks;
  std::set<std::string> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    Task t;
    try {
      auto j = nlohmann::json::parse(line);
      t.id = j.at("id").get<std::string>();
      t.query = j.at("query").get<std::string>();
      t.category = j.value("category", std::string{"default"});
      t.ground_truth = j.at("ground_truth").get<std::string>();
      if (j.contains("checker")) {
        auto c = parse_checker(j["checker"].get<std::string>());
        if (!c) throw ConfigError(fmt::format("unknown checker '{}'", j["checker"].get<std::string>()));
        t.checker = *c;
      } else {
        spdlog::warn("{}:{}: task '{}' has no checker; using ExactMatch", path.string(), lineno, t.id);
      }
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
    if (trim(t.id).empty()) throw ConfigError(fmt::format("{}:{}: empty task id", path.string(), lineno));
    if (trim(t.query).empty()) throw ConfigError(fmt::format("{}:{}: task '{}' has an empty query", path.string(), lineno, t.id));
    if (!ids.insert(t.id).second) {
      throw ConfigError(fmt::format("{}:{}: duplicate task id '{}'", path.string(), lineno, t.id));
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

PlannedTask plan_task(const BackendRouter& router, const Task& task, const ExemplarBank& exemplars, ModelTier tier,
                      const ExecOptions& exec, bool chain) {
  PlannedTask p;
  DecomposeOptions dopts{tier, exec.max_tokens, exec.temperature};
  Decomposition d = decompose(router, task, exemplars.for_category(task.category), dopts);
  p.ledger += d.ledger;
  p.subtasks = std::move(d.subtasks);
  if (chain) {
    p.graph = chain_graph(p.subtasks);
  } else {
    ScheduleOptions sopts{tier, exec.max_tokens, exec.temperature};
    Schedule s = schedule(router, task, p.subtasks, sopts);
    p.ledger += s.ledger;
    p.graph = std::move(s.graph);
  }
  return p;
}

TaskTrace run_task(const BackendRouter& router, const Task& task, const SuiteConfig& config) {
  const Strategy& strategy = config.strategy;
  CostLedger planning;
  auto failed = [&](std::string message) {
    TaskTrace t;
    t.task_id = task.id;
    t.planning = planning;
    t.error = std::move(message);
    spdlog::warn("task '{}' failed: {}", task.id, *t.error);
    return t;
  };

  try {
    PlannedTask plan = plan_task(router, task, config.exemplars, config.planning_tier, config.exec,
                                 strategy.kind == StrategyKind::SequentialNoGraph);
    planning += plan.ledger;
    const auto& subtasks = plan.subtasks;
    const auto& graph = plan.graph;

    AllocationScheme scheme;
    std::optional<StepCache> cache;
    auto by_threshold = [&] {
      StepsOutcome pass =
          run_steps_on_graph(router, task, subtasks, graph, AllocationScheme::uniform(subtasks, ModelTier::Device),
                             config.exec);
      planning += pass.ledger;
      if (pass.error) throw BackendError(*pass.error);
      scheme = threshold_scheme(pass, strategy.theta, strategy.alpha);
      cache.emplace();
      for (auto& step : pass.steps) cache->emplace(step.index, std::move(step));
    };
    auto by_adapter = [&] {
      for (const auto& st : subtasks) scheme.set(st.index, allocate(*config.weights, router, st.description));
    };

    switch (strategy.kind) {
      case StrategyKind::AllDevice: scheme = AllocationScheme::uniform(subtasks, ModelTier::Device); break;
      case StrategyKind::AllCloud: scheme = AllocationScheme::uniform(subtasks, ModelTier::Cloud); break;
      case StrategyKind::ThresholdDoT: by_threshold(); break;
      case StrategyKind::AdapterDoT:
        if (!config.weights) throw ConfigError("the adapter strategy needs adapter weights");
        by_adapter();
        break;
      case StrategyKind::SequentialNoGraph:
        if (config.weights) by_adapter();
        else by_threshold();
        break;
      case StrategyKind::SimpleReferral: {
        ChatRequest req;
        req.user = referral_prompt(task);
        req.max_tokens = config.exec.max_tokens;
        req.temperature = config.exec.temperature;
        req.want_token_probs = false;
        auto [resp, ledger] = router.call(ModelTier::Cloud, req);
        planning += ledger;
        auto verdict = parse_difficulty_verdict(resp.text);
        if (!verdict) spdlog::warn("task '{}': unreadable referral verdict, using cloud", task.id);
        scheme = AllocationScheme::uniform(subtasks, verdict.value_or(ModelTier::Cloud));
        break;
      }
      case StrategyKind::CloudFraction: {
        auto it = config.difficulty_order.find(task.id);
        scheme = fraction_scheme(subtasks, it == config.difficulty_order.end() ? nullptr : &it->second,
                                 strategy.cloud_fraction);
        break;
      }
    }

    TaskTrace trace = run_on_graph(router, task, subtasks, graph, scheme, config.exec, cache ? &*cache : nullptr);
    trace.planning = planning;
    return trace;
  } catch (const Error& e) {
    return failed(e.what());
  }
}

SuiteResult run_suite(const BackendRouter& router, std::span<const Task> tasks, const SuiteConfig& config) {
  if (config.strategy.kind == StrategyKind::AdapterDoT && !config.weights) {
    throw ConfigError("the adapter strategy needs adapter weights");
  }
  SuiteResult result;
  result.traces.resize(tasks.size());
  parallel_for(tasks.size(), config.workers, [&](std::size_t i) { result.traces[i] = run_task(router, tasks[i], config); });
  result.metrics = compute_metrics(result.traces);
  return result;
}

Metrics compute_metrics(std::span<const TaskTrace> traces) {
  std::vector<const TaskTrace*> ordered;
  for (const auto& t : traces) ordered.push_back(&t);
  std::sort(ordered.begin(), ordered.end(), [](const TaskTrace* a, const TaskTrace* b) { return a->task_id < b->task_id; });

  Metrics m;
  m.task_count = ordered.size();
  if (ordered.empty()) return m;
  std::size_t correct = 0;
  double wall = 0.0;
  double cents = 0.0;
  double device_time = 0.0;
  double step_time = 0.0;
  std::size_t device_subtasks = 0;
  std::size_t subtasks = 0;
  for (const TaskTrace* t : ordered) {
    correct += t->correct;
    wall += t->total.wall_seconds + t->planning.wall_seconds;
    cents += t->total.api_cents + t->planning.api_cents;
    for (const auto& s : t->steps) {
      step_time += s.ledger.wall_seconds;
      if (s.tier_used == ModelTier::Device) device_time += s.ledger.wall_seconds;
    }
    step_time += t->final_call.wall_seconds;
    if (t->final_tier == ModelTier::Device) device_time += t->final_call.wall_seconds;
    device_subtasks += t->scheme.count(ModelTier::Device);
    subtasks += t->scheme.size();
  }
  const auto n = static_cast<double>(ordered.size());
  m.accuracy = static_cast<double>(correct) / n;
  m.mean_wall_seconds = wall / n;
  m.mean_api_cents = cents / n;
  m.slm_time_fraction = step_time > 0.0 ? device_time / step_time : 0.0;
  m.slm_subtask_fraction = subtasks > 0 ? static_cast<double>(device_subtasks) / static_cast<double>(subtasks) : 0.0;
  return m;
}

std::map<std::string, std::vector<int>> profile_difficulty(const BackendRouter& router, std::span<const Task> tasks,
                                                           const SuiteConfig& config, double alpha) {
  std::vector<std::optional<std::vector<int>>> orders(tasks.size());
  parallel_for(tasks.size(), config.workers, [&](std::size_t i) {
    const Task& task = tasks[i];
    try {
      PlannedTask plan = plan_task(router, task, config.exemplars, config.planning_tier, config.exec);
      StepsOutcome pass = run_steps_on_graph(router, task, plan.subtasks, plan.graph,
                                             AllocationScheme::uniform(plan.subtasks, ModelTier::Device), config.exec);
      if (pass.error) {
        spdlog::warn("task '{}': difficulty profiling failed: {}", task.id, *pass.error);
        return;
      }
      std::map<int, double> scores;
      for (const auto& step : pass.steps) scores[step.index] = alpha_quantile(step.token_probs, alpha);
      orders[i] = rank_by_difficulty(scores);
    } catch (const Error& e) {
      spdlog::warn("task '{}': difficulty profiling failed: {}", task.id, e.what());
    }
  });
  std::map<std::string, std::vector<int>> out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (orders[i]) out[tasks[i].id] = std::move(*orders[i]);
  }
  return out;
}

std::vector<TradeoffPoint> tradeoff_sweep(const BackendRouter& router, std::span<const Task> tasks,
                                          std::span<const double> fractions, const SuiteConfig& config, double alpha) {
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] <= 1.0)) {
      throw PreconditionError(fmt::format("cloud fraction {} outside [0, 1]", fractions[i]));
    }
    if (i > 0 && fractions[i] < fractions[i - 1]) throw PreconditionError("cloud fractions must be sorted ascending");
  }
  SuiteConfig cfg = config;
  cfg.difficulty_order = profile_difficulty(router, tasks, config, alpha);
  std::vector<TradeoffPoint> points;
  for (double f : fractions) {
    cfg.strategy = Strategy{StrategyKind::CloudFraction, 0.0, alpha, f};
    points.push_back({f, run_suite(router, tasks, cfg).metrics});
  }
  return points;
}

Searcher parse_searcher(std::string_view name) {
  if (name == "alpha") return Searcher::AlphaTree;
  if (name == "binary") return Searcher::Binary;
  if (name == "zeroshot") return Searcher::ZeroShot;
  throw ConfigError(fmt::format("unknown searcher '{}'", name));
}

std::string_view to_string(Searcher searcher) {
  switch (searcher) {
    case Searcher::AlphaTree: return "alpha";
    case Searcher::Binary: return "binary";
    case Searcher::ZeroShot: return "zeroshot";
  }
  return "unknown";
}

SearchSuiteResult run_search_suite(const BackendRouter& router, std::span<const Task> tasks,
                                   const SearchSuiteConfig& config) {
  std::vector<std::optional<PlannedTask>> plans(tasks.size());
  SearchSuiteResult result;
  result.outcomes.resize(tasks.size());
  parallel_for(tasks.size(), config.workers, [&](std::size_t i) {
    const Task& task = tasks[i];
    SearchOutcome& out = result.outcomes[i];
    out.task_id = task.id;
    try {
      plans[i] = plan_task(router, task, config.exemplars, config.planning_tier, config.alpha_tree.exec);
      const auto& p = *plans[i];
      switch (config.searcher) {
        case Searcher::AlphaTree: out = alpha_tree_search(router, task, p.subtasks, p.graph, config.alpha_tree); break;
        case Searcher::Binary: out = binary_search_baseline(router, task, p.subtasks, p.graph, config.binary); break;
        case Searcher::ZeroShot: out = zero_shot_search(router, task, p.subtasks, p.graph, config.alpha_tree.exec); break;
      }
    } catch (const Error& e) {
      out.error = e.what();
    }
    if (out.error) spdlog::warn("task '{}': search failed: {}", task.id, *out.error);
  });
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!plans[i]) continue;
    result.planning += plans[i]->ledger;
    result.subtasks[tasks[i].id] = plans[i]->subtasks;
  }
  return result;
}

nlohmann::json report_json(const std::string& strategy, const Metrics& m) {
  return {{"strategy", strategy},
          {"tasks", m.task_count},
          {"accuracy", m.accuracy},
          {"mean_wall_seconds", round_to(m.mean_wall_seconds, 1)},
          {"mean_api_cents", round_to(m.mean_api_cents, 2)},
          {"slm_time_fraction", m.slm_time_fraction},
          {"slm_subtask_fraction", m.slm_subtask_fraction}};
}

std::string report_csv(std::span<const std::pair<std::string, Metrics>> rows) {
  std::string out = "strategy,accuracy,mean_wall_seconds,mean_api_cents,slm_time_fraction,slm_subtask_fraction\n";
  for (const auto& [name, m] : rows) {
    out += fmt::format("{},{:.4f},{:.1f},{:.2f},{:.4f},{:.4f}\n", name, m.accuracy, m.mean_wall_seconds,
                       m.mean_api_cents, m.slm_time_fraction, m.slm_subtask_fraction);
  }
  return out;
}

std::string tradeoff_csv(std::span<const TradeoffPoint> points) {
  std::vector<std::pair<std::string, Metrics>> rows;
  for (const auto& p : points) {
    rows.emplace_back(Strategy{StrategyKind::CloudFraction, 0.0, kDefaultAlpha, p.cloud_fraction}.name(), p.metrics);
  }
  return report_csv(rows);
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(fmt::format("cannot write {}", path.string()));
  out << content;
  if (!out) throw ConfigError(fmt::format("failed writing {}", path.string()));
}

}  // namespace edgecloud
