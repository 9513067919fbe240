#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "edgecloud/bench.hpp"
#include "edgecloud/error.hpp"
#include "population.hpp"

using namespace edgecloud;
namespace fs = std::filesystem;

namespace {

struct Suite {
  fixture::Population pop;
  BackendRouter router;
  std::vector<Task> tasks;
};

Suite make_suite(double solvable, int n = 12, std::uint64_t seed = 31) {
  fixture::PopulationSpec spec;
  spec.tasks = n;
  spec.k_min = 3;
  spec.k_max = 5;
  spec.solvable_fraction = solvable;
  spec.seed = seed;
  Suite s;
  s.pop = fixture::build_population(spec);
  s.router = fixture::make_router(s.pop, 2);
  s.tasks = s.pop.task_list();
  return s;
}

SuiteConfig config(const Suite& s, Strategy strategy) {
  SuiteConfig c;
  c.strategy = strategy;
  c.exemplars = ExemplarBank({{"default", s.pop.exemplars}});
  c.workers = 3;
  return c;
}

Strategy of(StrategyKind kind, double theta = 0.5) {
  Strategy s;
  s.kind = kind;
  s.theta = theta;
  return s;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("edgecloud_bench_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("benchmark loading") {
  const auto dir = scratch("load");
  {
    std::ofstream(dir / "ok.jsonl") << R"J({"id": "a", "query": "q1", "ground_truth": "1", "checker": "NumericMatch", "category": "math"}
{"id": "b", "query": "q2", "ground_truth": "x"}

{"id": "c", "query": "q3", "ground_truth": "(B)", "checker": "contains"}
)J";
    std::ofstream(dir / "dup.jsonl") << R"({"id": "a", "query": "q1", "ground_truth": "1"}
{"id": "a", "query": "q2", "ground_truth": "2"}
)";
    std::ofstream(dir / "broken.jsonl") << "{\"id\": \"a\", \"query\": \"q\", \"ground_truth\": \"1\"}\n{nope\n";
  }
  auto tasks = load_benchmark(dir / "ok.jsonl");
  REQUIRE(tasks.size() == 3);
  CHECK(tasks[0].checker == Checker::NumericMatch);
  CHECK(tasks[0].category == "math");
  CHECK(tasks[1].checker == Checker::ExactMatch);
  CHECK(tasks[1].category == "default");
  CHECK(tasks[2].checker == Checker::ContainsMatch);
  CHECK_THROWS_AS(load_benchmark(dir / "dup.jsonl"), ConfigError);
  try {
    load_benchmark(dir / "broken.jsonl");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  CHECK_THROWS_AS(load_benchmark(dir / "absent.jsonl"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("strategy names") {
  for (const char* n : {"adapter", "threshold", "all-device", "all-cloud", "simple-referral", "sequential"}) {
    CHECK(Strategy::parse(n).name() == n);
  }
  CHECK_THROWS_AS(Strategy::parse("cheapest"), ConfigError);
  CHECK(parse_searcher("binary") == Searcher::Binary);
  CHECK(to_string(Searcher::ZeroShot) == "zeroshot");
}

TEST_CASE("all-device with a device that is always right") {
  auto s = make_suite(1.0);
  auto r = run_suite(s.router, s.tasks, config(s, of(StrategyKind::AllDevice)));
  CHECK(r.metrics.accuracy == 1.0);
  CHECK(r.metrics.mean_api_cents == 0.0);
  CHECK(r.metrics.slm_subtask_fraction == 1.0);
  CHECK(r.metrics.slm_time_fraction == 1.0);
  CHECK(r.metrics.task_count == s.tasks.size());
  REQUIRE(r.traces.size() == s.tasks.size());
  for (std::size_t i = 0; i < s.tasks.size(); ++i) CHECK(r.traces[i].task_id == s.tasks[i].id);
}

TEST_CASE("strategy comparison on a mixed population") {
  auto s = make_suite(0.7, 20);
  auto dev = run_suite(s.router, s.tasks, config(s, of(StrategyKind::AllDevice))).metrics;
  auto cloud = run_suite(s.router, s.tasks, config(s, of(StrategyKind::AllCloud))).metrics;
  auto thr = run_suite(s.router, s.tasks, config(s, of(StrategyKind::ThresholdDoT, 0.7))).metrics;
  auto seq = run_suite(s.router, s.tasks, config(s, of(StrategyKind::SequentialNoGraph, 0.7))).metrics;
  auto ref = run_suite(s.router, s.tasks, config(s, of(StrategyKind::SimpleReferral))).metrics;

  CHECK(cloud.accuracy >= dev.accuracy);
  CHECK(cloud.mean_api_cents > dev.mean_api_cents);
  CHECK(cloud.slm_subtask_fraction == 0.0);
  CHECK(thr.accuracy >= dev.accuracy);
  CHECK(thr.mean_api_cents < cloud.mean_api_cents);
  CHECK(thr.slm_subtask_fraction > 0.0);
  CHECK(seq.accuracy == thr.accuracy);
  CHECK(seq.mean_wall_seconds >= thr.mean_wall_seconds);
  CHECK(ref.accuracy >= 0.0);
}

TEST_CASE("sequential and batched runs agree on final answers") {
  auto s = make_suite(0.7, 10);
  auto batched = run_suite(s.router, s.tasks, config(s, of(StrategyKind::ThresholdDoT, 0.7)));
  auto chained = run_suite(s.router, s.tasks, config(s, of(StrategyKind::SequentialNoGraph, 0.7)));
  for (std::size_t i = 0; i < s.tasks.size(); ++i) {
    CHECK(batched.traces[i].scheme == chained.traces[i].scheme);
    CHECK(batched.traces[i].correct == chained.traces[i].correct);
  }
}

TEST_CASE("adapter strategy needs weights") {
  auto s = make_suite(0.7, 3);
  CHECK_THROWS_AS(run_suite(s.router, s.tasks, config(s, of(StrategyKind::AdapterDoT))), ConfigError);
}

TEST_CASE("trade-off sweep") {
  auto s = make_suite(0.7, 10);
  const std::vector<double> fractions{0.0, 0.25, 0.5, 0.75, 1.0};
  auto pts = tradeoff_sweep(s.router, s.tasks, fractions, config(s, of(StrategyKind::CloudFraction)));
  REQUIRE(pts.size() == 5);
  CHECK(pts.front().metrics.mean_api_cents == 0.0);
  CHECK(pts.front().metrics.slm_subtask_fraction == 1.0);
  CHECK(pts.back().metrics.slm_subtask_fraction == 0.0);
  CHECK(pts.back().metrics.accuracy == 1.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    CHECK(pts[i].metrics.mean_api_cents >= pts[i - 1].metrics.mean_api_cents);
  }
  const std::string csv = tradeoff_csv(pts);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);

  const std::vector<double> unsorted{0.5, 0.25};
  CHECK_THROWS_AS(tradeoff_sweep(s.router, s.tasks, unsorted, config(s, of(StrategyKind::CloudFraction))),
                  PreconditionError);
  const std::vector<double> outside{0.0, 1.5};
  CHECK_THROWS_AS(tradeoff_sweep(s.router, s.tasks, outside, config(s, of(StrategyKind::CloudFraction))),
                  PreconditionError);
}

TEST_CASE("reports") {
  Metrics m;
  m.accuracy = 0.8125;
  m.mean_wall_seconds = 12.345;
  m.mean_api_cents = 0.126;
  m.slm_time_fraction = 0.5;
  m.slm_subtask_fraction = 0.25;
  m.task_count = 16;
  auto j = report_json("threshold", m);
  CHECK(j["strategy"] == "threshold");
  CHECK(j["tasks"] == 16);
  CHECK(j["mean_wall_seconds"] == 12.3);
  CHECK(j["mean_api_cents"] == 0.13);

  std::vector<std::pair<std::string, Metrics>> rows{{"threshold", m}};
  const std::string csv = report_csv(rows);
  CHECK(csv.starts_with("strategy,accuracy,mean_wall_seconds,mean_api_cents,slm_time_fraction,slm_subtask_fraction\n"));
  CHECK(csv.find("threshold,0.8125,12.3,0.13,0.5000,0.2500") != std::string::npos);

  const auto dir = scratch("reports");
  write_text(dir / "nested" / "r.json", j.dump(2));
  std::stringstream back;
  back << std::ifstream(dir / "nested" / "r.json").rdbuf();
  CHECK(back.str() == j.dump(2));
  fs::remove_all(dir);
}

TEST_CASE("reruns are byte-identical") {
  auto s = make_suite(0.7, 8);
  auto cfg = config(s, of(StrategyKind::ThresholdDoT, 0.7));
  auto a = run_suite(s.router, s.tasks, cfg);
  auto s2 = make_suite(0.7, 8);
  cfg.workers = 1;
  auto b = run_suite(s2.router, s2.tasks, cfg);
  CHECK(report_json("threshold", a.metrics).dump() == report_json("threshold", b.metrics).dump());
}

TEST_CASE("search suite") {
  auto s = make_suite(0.7, 6);
  SearchSuiteConfig cfg;
  cfg.exemplars = ExemplarBank({{"default", s.pop.exemplars}});
  cfg.workers = 2;
  auto r = run_search_suite(s.router, s.tasks, cfg);
  REQUIRE(r.outcomes.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(r.outcomes[i].task_id == s.tasks[i].id);
    CHECK(r.outcomes[i].final_correct);
    CHECK(r.subtasks.at(s.tasks[i].id).size() == s.pop.tasks[i].subtasks.size());
  }
  CHECK(r.planning.device_calls == 12);
}
