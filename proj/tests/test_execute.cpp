#include <doctest.h>

#include <mutex>

#include "edgecloud/error.hpp"
#include "edgecloud/execute.hpp"
#include "population.hpp"

using namespace edgecloud;

namespace {

constexpr auto D = ModelTier::Device;
constexpr auto C = ModelTier::Cloud;

class Recorder final : public Backend {
 public:
  explicit Recorder(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}
  ChatResponse complete(const ChatRequest& r) override {
    {
      std::lock_guard lock(mu_);
      prompts_.push_back(r.user);
    }
    return inner_->complete(r);
  }
  std::string describe() const override { return "recorder"; }
  std::vector<std::string> prompts() const {
    std::lock_guard lock(mu_);
    return prompts_;
  }
  std::string prompt_for(int index) const {
    const std::string needle = "The sub-question to solve now is " + std::to_string(index) + ":";
    for (const auto& p : prompts()) {
      if (p.find(needle) != std::string::npos) return p;
    }
    return {};
  }

 private:
  std::shared_ptr<Backend> inner_;
  mutable std::mutex mu_;
  std::vector<std::string> prompts_;
};

struct Rig {
  fixture::Population pop;
  BackendRouter router;
  std::shared_ptr<Recorder> device, cloud;
  const fixture::SyntheticTask& task() const { return pop.tasks.front(); }
};

Rig make_rig(int k, std::vector<Dependency> edges, double solvable = 1.0) {
  fixture::PopulationSpec spec;
  spec.tasks = 1;
  spec.k_min = spec.k_max = k;
  spec.solvable_fraction = solvable;
  spec.edge_probability = 0.0;
  Rig rig;
  rig.pop = fixture::build_population(spec);
  rig.pop.tasks.front().edges = std::move(edges);
  rig.device = std::make_shared<Recorder>(
      std::make_shared<MockBackend>(fixture::script_for(rig.pop, D), 1));
  rig.cloud = std::make_shared<Recorder>(
      std::make_shared<MockBackend>(fixture::script_for(rig.pop, C), 2));
  rig.router.register_backend(fixture::device_profile(), rig.device);
  rig.router.register_backend(fixture::cloud_profile(), rig.cloud);
  return rig;
}

StepResult solved(int index, std::string q, std::string a) {
  StepResult r;
  r.index = index;
  r.question = std::move(q);
  r.answer = std::move(a);
  return r;
}

}  // namespace

TEST_CASE("step prompt assembly") {
  Task t{"t", "q", "math", "1", Checker::ExactMatch};
  SubTask st{3, "combine results"};
  const std::string bare = assemble_step_prompt(t, st, {}, {});
  CHECK(bare.find("So far, the answers") == std::string::npos);
  CHECK(bare.find("The sub-question to solve now is 3: combine results") != std::string::npos);

  std::vector<StepResult> preds{solved(1, "first", "10"), solved(2, "second", "line one\nline two")};
  const std::string p = assemble_step_prompt(t, st, preds, preds);
  CHECK(p.find("Sub-question-Id: xxx; Sub-question: xxx; Answer: xxx") != std::string::npos);
  CHECK(p.find("Sub-question-Id: 1; Sub-question: first; Answer: 10") != std::string::npos);
  CHECK(p.find("Sub-question-Id: 2; Sub-question: second; Answer: line one line two") != std::string::npos);
  CHECK(p.find("sub-questions 1, 2 are directly related") != std::string::npos);
}

TEST_CASE("final answer tier follows the deepest batch") {
  std::vector<SubTask> subs{{1, "a"}, {2, "b"}, {3, "c"}};
  auto g = build_graph(subs, std::vector<Dependency>{{1, 3}});  // batches [[1,2],[3]]
  CHECK(final_answer_tier(g, AllocationScheme({{1, C}, {2, C}, {3, D}})) == D);
  CHECK(final_answer_tier(g, AllocationScheme({{1, D}, {2, D}, {3, C}})) == C);
  auto flat = build_graph(subs, {});
  CHECK(final_answer_tier(flat, AllocationScheme({{1, C}, {2, D}, {3, C}})) == C);
  std::vector<SubTask> two{{1, "a"}, {2, "b"}};
  CHECK(final_answer_tier(build_graph(two, {}), AllocationScheme({{1, C}, {2, D}})) == D);
}

TEST_CASE("run on graph wires predecessors and routes by scheme") {
  auto rig = make_rig(3, {{1, 3}, {2, 3}});
  const auto& t = rig.task();
  auto g = fixture::graph_of(t);
  REQUIRE(g.batches == std::vector<std::vector<int>>{{1, 2}, {3}});

  auto trace = run_on_graph(rig.router, t.task, t.subtasks, g, AllocationScheme::uniform(t.subtasks, D));
  REQUIRE(trace.steps.size() == 3);
  CHECK(trace.correct);
  const std::string p3 = rig.device->prompt_for(3);
  CHECK(p3.find("Answer: " + trace.steps[0].answer) != std::string::npos);
  CHECK(p3.find("Answer: " + trace.steps[1].answer) != std::string::npos);
  CHECK(rig.device->prompt_for(1).find("So far") == std::string::npos);

  auto mixed = run_on_graph(rig.router, t.task, t.subtasks, g, AllocationScheme({{1, D}, {2, C}, {3, D}}));
  CHECK(mixed.steps[0].tier_used == D);
  CHECK(mixed.steps[1].tier_used == C);
  CHECK(mixed.steps[2].tier_used == D);
  CHECK(mixed.total.cloud_calls == 1);
  CHECK(mixed.total.api_cents > 0.0);
}

TEST_CASE("a step sees only its direct predecessors") {
  auto rig = make_rig(3, {{1, 2}, {2, 3}});
  const auto& t = rig.task();
  auto trace = run_on_graph(rig.router, t.task, t.subtasks, fixture::graph_of(t), AllocationScheme::uniform(t.subtasks, D));
  const std::string p3 = rig.device->prompt_for(3);
  CHECK(p3.find("Sub-question-Id: 2;") != std::string::npos);
  CHECK(p3.find("Sub-question-Id: 1;") == std::string::npos);
}

TEST_CASE("batch wall time is the slowest member") {
  auto rig = make_rig(2, {});
  MockScript device = fixture::script_for(rig.pop, D);
  for (auto& rule : device.rules) {
    if (rule.match.starts_with("The sub-question to solve now is 1:")) rule.reply.elapsed_seconds = 1.0;
    if (rule.match.starts_with("The sub-question to solve now is 2:")) rule.reply.elapsed_seconds = 3.0;
  }
  BackendRouter r;
  r.register_backend(fixture::device_profile(), std::make_shared<MockBackend>(device, 1));
  const auto& t = rig.task();
  auto scheme = AllocationScheme::uniform(t.subtasks, D);
  auto steps = run_steps_on_graph(r, t.task, t.subtasks, build_graph(t.subtasks, {}), scheme);
  CHECK(steps.ledger.wall_seconds == 3.0);
  CHECK(steps.ledger.device_calls == 2);
  auto chained = run_steps_on_graph(r, t.task, t.subtasks, chain_graph(t.subtasks), scheme);
  CHECK(chained.ledger.wall_seconds == 4.0);
}

TEST_CASE("cached device answers are reused without calls") {
  auto rig = make_rig(3, {});
  const auto& t = rig.task();
  auto g = fixture::graph_of(t);
  auto first = run_steps_on_graph(rig.router, t.task, t.subtasks, g, AllocationScheme::uniform(t.subtasks, D));
  StepCache cache;
  for (const auto& s : first.steps) cache[s.index] = s;
  const auto before = rig.device->prompts().size();
  auto trace = run_on_graph(rig.router, t.task, t.subtasks, g, AllocationScheme({{1, D}, {2, C}, {3, D}}), {}, &cache);
  CHECK(trace.steps[0].cached);
  CHECK_FALSE(trace.steps[1].cached);
  CHECK(trace.steps[0].ledger == CostLedger{});
  // only the final aggregation call (device tier holds the majority) reaches the device
  CHECK(rig.device->prompts().size() == before + 1);
}

TEST_CASE("wrong device steps make the final answer wrong") {
  auto rig = make_rig(3, {}, 0.0);
  const auto& t = rig.task();
  auto g = fixture::graph_of(t);
  CHECK_FALSE(run_on_graph(rig.router, t.task, t.subtasks, g, AllocationScheme::uniform(t.subtasks, D)).correct);
  CHECK(run_on_graph(rig.router, t.task, t.subtasks, g, AllocationScheme::uniform(t.subtasks, C)).correct);
}

TEST_CASE("backend failure is recorded on the trace") {
  auto rig = make_rig(2, {});
  BackendRouter device_only;
  device_only.register_backend(fixture::device_profile(), rig.device);
  const auto& t = rig.task();
  auto trace = run_on_graph(device_only, t.task, t.subtasks, fixture::graph_of(t), AllocationScheme::uniform(t.subtasks, C));
  CHECK(trace.failed());
  CHECK_FALSE(trace.correct);
}

TEST_CASE("scheme must cover the sub-tasks") {
  auto rig = make_rig(2, {});
  const auto& t = rig.task();
  CHECK_THROWS_AS(run_on_graph(rig.router, t.task, t.subtasks, fixture::graph_of(t), AllocationScheme({{1, D}})),
                  DomainMismatchError);
}

TEST_CASE("final answer extraction and judging") {
  CHECK(extract_final_answer("Work:\n3 + 4 = 7\n\n**42**\n") == "42");
  CHECK(extract_final_answer("> `7`") == "7");
  Task exact{"t", "q", "x", "42", Checker::ExactMatch};
  CHECK(judge("reasoning\n42", exact));
  Task numeric{"t", "q", "x", "42", Checker::NumericMatch};
  CHECK(judge("so\n42.0000001", numeric));
  Task contains{"t", "q", "x", "(B)", Checker::ContainsMatch};
  CHECK(judge("The answer is (B).", contains));
}

TEST_CASE("trace JSON") {
  auto rig = make_rig(2, {});
  const auto& t = rig.task();
  auto trace = run_on_graph(rig.router, t.task, t.subtasks, fixture::graph_of(t), AllocationScheme({{1, D}, {2, C}}));
  auto j = to_json(trace);
  CHECK(j["scheme"]["1"] == "device");
  CHECK(j["scheme"]["2"] == "cloud");
  CHECK(j["steps"].size() == 2);
  CHECK(j["error"].is_null());
  CHECK(j.dump() == to_json(trace).dump());
}
