// edgecloud: batch front end for decomposition, scheduling, allocation search,
// adapter training and benchmarking.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "edgecloud/adapter.hpp"
#include "edgecloud/alphatree.hpp"
#include "edgecloud/bench.hpp"
#include "edgecloud/decompose.hpp"
#include "edgecloud/error.hpp"
#include "edgecloud/schedule.hpp"

namespace fs = std::filesystem;
using namespace edgecloud;

namespace {

enum Exit { kOk = 0, kInput = 1, kEmpty = 2, kBackend = 3 };

struct Globals {
  std::string backends;
  std::string exemplars;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string out = "out";
  std::string planning_tier = "device";
  int max_tokens = 512;
  bool quiet = false;
};

ModelTier tier_arg(const std::string& s) {
  auto t = parse_tier(s);
  if (!t) throw ConfigError(fmt::format("unknown tier '{}'", s));
  return *t;
}

BackendRouter load_router(const Globals& g) {
  if (g.backends.empty()) throw ConfigError("--backends is required");
  return BackendRouter::from_profiles_file(g.backends, g.seed);
}

ExemplarBank load_exemplars(const Globals& g) {
  if (g.exemplars.empty()) throw ConfigError("--exemplars is required");
  return ExemplarBank::load(g.exemplars);
}

ExecOptions exec_options(const Globals& g) {
  ExecOptions e;
  e.max_tokens = g.max_tokens;
  return e;
}

// ---------------------------------------------------------------------------

struct PlanArgs {
  std::string tasks;
  bool dump_graph = false;
};

int cmd_plan(const Globals& g, const PlanArgs& a, bool with_schedule) {
  const auto router = load_router(g);
  const auto bank = load_exemplars(g);
  const auto tasks = load_benchmark(a.tasks);
  const ModelTier tier = tier_arg(g.planning_tier);
  const fs::path out(g.out);
  fs::create_directories(out);

  std::string dump;
  int status = kOk;
  for (const auto& task : tasks) {
    try {
      DecomposeOptions dopts{tier, g.max_tokens, 0.0};
      Decomposition d = decompose(router, task, bank.for_category(task.category), dopts);
      nlohmann::json j = {{"task_id", task.id}, {"ledger", to_json(d.ledger)}};
      nlohmann::json subs = nlohmann::json::array();
      for (const auto& st : d.subtasks) subs.push_back({{"index", st.index}, {"description", st.description}});
      j["subtasks"] = subs;

      std::cout << task.id << " (" << d.subtasks.size() << " sub-tasks)\n";
      if (!with_schedule) {
        for (const auto& st : d.subtasks) std::cout << "  " << st.index << ". " << st.description << "\n";
      }
      if (with_schedule || a.dump_graph) {
        ScheduleOptions sopts{tier, g.max_tokens, 0.0};
        Schedule s = schedule(router, task, d.subtasks, sopts);
        nlohmann::json edges = nlohmann::json::array();
        for (const auto& e : s.graph.edges) edges.push_back({e.from_index, e.to_index});
        nlohmann::json removed = nlohmann::json::array();
        for (const auto& e : s.graph.removed_edges) removed.push_back({e.from_index, e.to_index});
        j["edges"] = edges;
        j["removed_edges"] = removed;
        j["batches"] = s.graph.batches;
        j["schedule_ledger"] = to_json(s.ledger);
        if (with_schedule) {
          for (std::size_t b = 0; b < s.graph.batches.size(); ++b) {
            std::cout << "  batch " << b << ":";
            for (int idx : s.graph.batches[b]) std::cout << ' ' << idx;
            std::cout << "\n";
          }
        }
        if (a.dump_graph) write_text(out / "graphs" / (task.id + ".dot"), to_dot(s.graph, d.subtasks, task.id));
      }
      dump += j.dump() + "\n";
    } catch (const DecompositionParseError& e) {
      std::cerr << "task " << task.id << ": " << e.what() << "\n";
      status = std::max(status, static_cast<int>(kInput));
    } catch (const BackendError& e) {
      std::cerr << "task " << task.id << ": backend failure: " << e.what() << "\n";
      status = kBackend;
    }
  }
  write_text(out / (with_schedule ? "schedules.jsonl" : "decompositions.jsonl"), dump);
  return status;
}

// ---------------------------------------------------------------------------

struct SearchArgs {
  std::string tasks;
  std::string searcher = "alpha";
  int n = 1;
  std::optional<double> theta;
  double alpha = kDefaultAlpha;
  int attempts = 5;
};

int cmd_search(const Globals& g, const SearchArgs& a) {
  const auto router = load_router(g);
  const auto tasks = load_benchmark(a.tasks);
  SearchSuiteConfig cfg;
  cfg.searcher = parse_searcher(a.searcher);
  cfg.exemplars = load_exemplars(g);
  cfg.planning_tier = tier_arg(g.planning_tier);
  cfg.workers = g.workers;
  cfg.alpha_tree.n = a.n;
  cfg.alpha_tree.theta = a.theta;
  cfg.alpha_tree.alpha = a.alpha;
  cfg.alpha_tree.exec = exec_options(g);
  cfg.binary.attempts = a.attempts;
  cfg.binary.seed = g.seed;
  cfg.binary.exec = exec_options(g);

  SearchSuiteResult result = run_search_suite(router, tasks, cfg);
  const fs::path out(g.out);
  std::string log;
  std::size_t failed = 0;
  for (const auto& o : result.outcomes) {
    log += to_json(o).dump() + "\n";
    failed += o.error.has_value();
  }
  write_text(out / "search_log.jsonl", log);

  const SearchSummary s = summarize(result.outcomes);
  std::cout << fmt::format("{:<12} {:>10} {:>8} {:>12} {:>12}\n", "searcher", "SLM Ratio", "SR", "evaluations",
                           "api_cents");
  std::cout << fmt::format("{:<12} {:>9.2f}% {:>7.2f}% {:>12.2f} {:>12.2f}\n",
                           a.searcher == "alpha" ? fmt::format("alpha(n={})", a.n) : a.searcher, 100.0 * s.slm_ratio,
                           100.0 * s.success_rate, s.mean_evaluations, s.mean_api_cents);

  if (!tasks.empty() && failed == tasks.size()) {
    std::cerr << "every task failed\n";
    return kBackend;
  }
  std::vector<SearchOutcome> usable;
  for (const auto& o : result.outcomes) {
    if (!o.error) usable.push_back(o);
  }
  try {
    if (usable.empty()) throw EmptyResultError("no task produced a search outcome");
    auto records = emit_adapter_dataset(usable, result.subtasks);
    write_adapter_dataset(out / "adapter_dataset.jsonl", records);
    std::cout << records.size() << " labelled sub-tasks written\n";
  } catch (const EmptyResultError& e) {
    write_text(out / "adapter_dataset.jsonl", "");
    std::cerr << e.what() << "\n";
    return kEmpty;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::vector<std::size_t> hidden{128};
  double lr = 1e-2;
  int epochs = 200;
  std::size_t batch_size = 16;
  double train_fraction = 0.8;
  std::string embed_tier = "device";
};

int cmd_train(const Globals& g, const TrainArgs& a) {
  auto records = read_adapter_dataset(a.dataset);
  if (records.empty()) {
    std::cerr << "dataset " << a.dataset << " is empty\n";
    return kEmpty;
  }
  const auto router = load_router(g);
  const ModelTier tier = tier_arg(a.embed_tier);
  std::vector<Example> examples;
  for (auto& r : records) {
    r.embedding = router.embed_sentence(tier, r.text);
    examples.push_back({r.embedding->values, r.label});
  }

  auto [train_idx, hold_idx] = split_holdout(examples.size(), a.train_fraction, g.seed);
  std::vector<Example> train_set, hold_set;
  for (auto i : train_idx) train_set.push_back(examples[i]);
  for (auto i : hold_idx) hold_set.push_back(examples[i]);
  if (train_set.empty()) {
    std::cerr << "training split is empty\n";
    return kEmpty;
  }

  MlpConfig mlp;
  mlp.input_dim = examples.front().x.size();
  mlp.hidden_dims = a.hidden;
  mlp.seed = g.seed;
  TrainConfig tc;
  tc.learning_rate = a.lr;
  tc.epochs = a.epochs;
  tc.batch_size = a.batch_size;
  tc.seed = g.seed;
  TrainResult result = train_examples(train_set, mlp, tc);

  const fs::path out(g.out);
  save_weights(out / "adapter_weights.json", result.weights);
  std::string curve = "epoch,loss\n";
  for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
    curve += fmt::format("{},{:.17g}\n", e + 1, result.loss_history[e]);
  }
  write_text(out / "loss_curve.csv", curve);

  std::cout << fmt::format("parameters: {}\n", result.weights.param_count());
  std::cout << fmt::format("train accuracy: {:.4f} ({} examples)\n", accuracy(result.weights, train_set),
                           train_set.size());
  if (hold_set.empty()) {
    std::cout << "held-out accuracy: n/a (0 examples)\n";
  } else {
    std::cout << fmt::format("held-out accuracy: {:.4f} ({} examples)\n", accuracy(result.weights, hold_set),
                             hold_set.size());
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string tasks;
  std::string strategy = "all-device";
  std::string weights;
  double theta = 0.5;
  double alpha = kDefaultAlpha;
  bool tradeoff = false;
  std::vector<double> fractions = kDefaultFractions;
  bool traces = false;
};

int cmd_bench(const Globals& g, const BenchArgs& a) {
  const auto router = load_router(g);
  const auto tasks = load_benchmark(a.tasks);
  SuiteConfig cfg;
  cfg.strategy = Strategy::parse(a.strategy);
  cfg.strategy.theta = a.theta;
  cfg.strategy.alpha = a.alpha;
  cfg.exemplars = load_exemplars(g);
  cfg.planning_tier = tier_arg(g.planning_tier);
  cfg.exec = exec_options(g);
  cfg.workers = g.workers;
  if (!a.weights.empty()) cfg.weights = load_weights(a.weights);

  const fs::path out(g.out);
  SuiteResult result = run_suite(router, tasks, cfg);
  const std::string name = cfg.strategy.name();
  write_text(out / "report.json", report_json(name, result.metrics).dump(2) + "\n");
  std::vector<std::pair<std::string, Metrics>> rows{{name, result.metrics}};
  write_text(out / "report.csv", report_csv(rows));
  if (a.traces) {
    for (const auto& t : result.traces) write_text(out / "traces" / (t.task_id + ".json"), to_json(t).dump(2) + "\n");
  }
  std::cout << report_csv(rows);

  if (a.tradeoff) {
    auto points = tradeoff_sweep(router, tasks, a.fractions, cfg, a.alpha);
    write_text(out / "tradeoff.csv", tradeoff_csv(points));
    std::cout << tradeoff_csv(points);
  }

  std::size_t failed = 0;
  for (const auto& t : result.traces) failed += t.failed();
  if (!tasks.empty() && failed == tasks.size()) {
    std::cerr << "every task failed\n";
    return kBackend;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Device/cloud split reasoning: decompose, schedule, search allocations, train the adapter, benchmark"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--backends", g.backends, "Backend profiles JSON (device and cloud tiers)");
  app.add_option("--exemplars", g.exemplars, "Decomposition exemplars JSON");
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--workers", g.workers, "Tasks processed concurrently")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--planning-tier", g.planning_tier, "Tier for decomposition and dependency calls")
      ->capture_default_str()
      ->check(CLI::IsMember({"device", "cloud"}));
  app.add_option("--max-tokens", g.max_tokens, "Completion budget per call")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", g.quiet, "Only log errors");

  PlanArgs dec_args;
  auto* dec = app.add_subcommand("decompose", "Decompose each task and list its sub-tasks");
  dec->add_option("--tasks", dec_args.tasks, "Benchmark JSONL")->required();
  dec->add_flag("--dump-graph", dec_args.dump_graph, "Also schedule and write graphs/<task>.dot");

  PlanArgs sch_args;
  auto* sch = app.add_subcommand("schedule", "Decompose and schedule each task; print its batches");
  sch->add_option("--tasks", sch_args.tasks, "Benchmark JSONL")->required();
  sch->add_flag("--dump-graph", sch_args.dump_graph, "Write graphs/<task>.dot");

  SearchArgs se_args;
  auto* se = app.add_subcommand("search", "Search allocation schemes and write the adapter dataset");
  se->add_option("--tasks", se_args.tasks, "Benchmark JSONL")->required();
  se->add_option("--searcher", se_args.searcher, "alpha, binary or zeroshot")
      ->capture_default_str()
      ->check(CLI::IsMember({"alpha", "binary", "zeroshot"}));
  se->add_option("--n", se_args.n, "Sub-tasks moved per alpha-tree step")->capture_default_str()->check(CLI::PositiveNumber);
  se->add_option("--theta", se_args.theta, "Initial split threshold (default: per-task median score)");
  se->add_option("--alpha", se_args.alpha, "Quantile order of the confidence score")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  se->add_option("--attempts", se_args.attempts, "Random halvings per binary-search round")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  TrainArgs tr_args;
  auto* tr = app.add_subcommand("train", "Train the allocation adapter on a labelled dataset");
  tr->add_option("--dataset", tr_args.dataset, "Adapter dataset JSONL")->required();
  tr->add_option("--hidden", tr_args.hidden, "Hidden layer widths")->capture_default_str();
  tr->add_option("--lr", tr_args.lr, "Learning rate")->capture_default_str();
  tr->add_option("--epochs", tr_args.epochs, "Training epochs")->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--batch-size", tr_args.batch_size, "Mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  tr->add_option("--train-fraction", tr_args.train_fraction, "Share of examples used for training")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  tr->add_option("--embed-tier", tr_args.embed_tier, "Tier that produces sentence embeddings")
      ->capture_default_str()
      ->check(CLI::IsMember({"device", "cloud"}));

  BenchArgs be_args;
  auto* be = app.add_subcommand("bench", "Run a routing strategy over a benchmark and write reports");
  be->add_option("--tasks", be_args.tasks, "Benchmark JSONL")->required();
  be->add_option("--strategy", be_args.strategy,
                 "all-device, all-cloud, threshold, adapter, simple-referral or sequential")
      ->capture_default_str()
      ->check(CLI::IsMember({"all-device", "all-cloud", "threshold", "adapter", "simple-referral", "sequential"}));
  be->add_option("--weights", be_args.weights, "Adapter weights JSON (adapter strategy; optional for sequential)");
  be->add_option("--theta", be_args.theta, "Score threshold for threshold routing")->capture_default_str();
  be->add_option("--alpha", be_args.alpha, "Quantile order of the confidence score")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  be->add_flag("--tradeoff", be_args.tradeoff, "Also sweep the cloud share and write tradeoff.csv");
  be->add_option("--fractions", be_args.fractions, "Cloud shares for --tradeoff")->capture_default_str();
  be->add_flag("--traces", be_args.traces, "Write traces/<task>.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  spdlog::set_default_logger(spdlog::stderr_logger_mt("edgecloud"));
  spdlog::set_level(g.quiet ? spdlog::level::err : spdlog::level::warn);

  try {
    if (*dec) return cmd_plan(g, dec_args, false);
    if (*sch) return cmd_plan(g, sch_args, true);
    if (*se) return cmd_search(g, se_args);
    if (*tr) return cmd_train(g, tr_args);
    if (*be) return cmd_bench(g, be_args);
  } catch (const EmptyResultError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kEmpty;
  } catch (const BackendError& e) {
    std::cerr << "backend failure: " << e.what() << "\n";
    return kBackend;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  }
  return kOk;
}
