#include <doctest.h>

#include <set>

#include "edgecloud/error.hpp"
#include "edgecloud/hash.hpp"
#include "edgecloud/schedule.hpp"

using namespace edgecloud;

namespace {

std::vector<SubTask> steps(int k) {
  std::vector<SubTask> out;
  for (int i = 1; i <= k; ++i) out.push_back({i, "step " + std::to_string(i)});
  return out;
}

using Batches = std::vector<std::vector<int>>;

// Longest path from any source, by repeated relaxation over the edge list.
std::map<int, int> brute_depth(int k, const std::set<Dependency>& edges) {
  std::map<int, int> d;
  for (int i = 1; i <= k; ++i) d[i] = 0;
  for (int round = 0; round < k; ++round) {
    for (const auto& e : edges) d[e.to_index] = std::max(d[e.to_index], d[e.from_index] + 1);
  }
  return d;
}

}  // namespace

TEST_CASE("dependency prompt") {
  Task t{"t", "How much paint is needed?", "math", "3", Checker::NumericMatch};
  auto subs = std::vector<SubTask>{{1, "area of wall"}, {2, "coverage per can"}, {3, "number of cans"}};
  const std::string p = build_dependency_prompt(t, subs);
  for (const auto& s : subs) CHECK(p.find(s.description) != std::string::npos);
  CHECK(p.find("Subproblem A [xxx] -> Subproblem B [xxx]") != std::string::npos);
  CHECK(p.find("Step 2 [ coverage per can ]") != std::string::npos);

  auto one = std::vector<SubTask>{{1, "only step"}};
  CHECK(build_dependency_prompt(t, one).find("Step 1 [ only step ]") != std::string::npos);
}

TEST_CASE("arrows and brackets inside sub-task text stay parseable") {
  Task t{"t", "q", "math", "1", Checker::ExactMatch};
  auto subs = std::vector<SubTask>{{1, "map a -> b [see note]"}, {2, "use b"}};
  const std::string p = build_dependency_prompt(t, subs);
  CHECK(p.find("Step 1 [ map a -> b (see note) ]") != std::string::npos);
  // A model echoing the bracketed lines back yields exactly the intended edge.
  const std::string reply = "Step 1 [ map a -> b (see note) ] -> Step 2 [ use b ]";
  auto deps = parse_dependencies(reply, subs);
  REQUIRE(deps.size() == 1);
  CHECK(deps[0] == Dependency{1, 2});
}

TEST_CASE("dependency parsing") {
  auto subs = steps(3);
  auto deps = parse_dependencies("Step 1 [a] -> Step 3 [c]\nStep 2 [b] -> Step 3 [c]", subs);
  CHECK(deps == std::vector<Dependency>{{1, 3}, {2, 3}});
  CHECK(parse_dependencies("Step 2 -> Step 2", subs).empty());
  CHECK(parse_dependencies("Step 1 -> Step 2\nStep 1 -> Step 2\n", subs).size() == 1);
  CHECK(parse_dependencies("Subproblem 1 [x] -> Subproblem 2 [y]", subs) == std::vector<Dependency>{{1, 2}});
  CHECK(parse_dependencies("Step 1 -> Step 9", subs).empty());
  CHECK(parse_dependencies("", subs).empty());
}

TEST_CASE("batches") {
  CHECK(build_graph(steps(3), std::vector<Dependency>{{1, 3}, {2, 3}}).batches == Batches{{1, 2}, {3}});
  CHECK(build_graph(steps(4), {}).batches == Batches{{1, 2, 3, 4}});
  CHECK(build_graph(steps(4), std::vector<Dependency>{{1, 2}, {2, 3}, {3, 4}}).batches == Batches{{1}, {2}, {3}, {4}});
  CHECK(chain_graph(steps(4)).batches == Batches{{1}, {2}, {3}, {4}});
  // Longest path, not shortest: 1->3 directly and via 2.
  CHECK(build_graph(steps(3), std::vector<Dependency>{{1, 2}, {2, 3}, {1, 3}}).batches == Batches{{1}, {2}, {3}});
  CHECK_THROWS_AS(build_graph(steps(2), std::vector<Dependency>{{1, 5}}), PreconditionError);
}

TEST_CASE("cycles are broken deterministically") {
  auto g = build_graph(steps(3), std::vector<Dependency>{{1, 2}, {2, 3}, {3, 1}});
  CHECK(g.removed_edges == std::vector<Dependency>{{3, 1}});
  CHECK(g.batches == Batches{{1}, {2}, {3}});
  auto again = build_graph(steps(3), std::vector<Dependency>{{3, 1}, {2, 3}, {1, 2}});
  CHECK(again.edges == g.edges);
}

TEST_CASE("random acyclic edge sets keep every edge and match brute-force depth") {
  SplitMix64 rng(44);
  for (int trial = 0; trial < 300; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(10));
    std::vector<Dependency> deps;
    for (int a = 1; a <= k; ++a) {
      for (int b = a + 1; b <= k; ++b) {
        if (rng.unit() < 0.4) deps.push_back({a, b});
      }
    }
    auto g = build_graph(steps(k), deps);
    CHECK(g.removed_edges.empty());
    CHECK(g.edges.size() == deps.size());
    CHECK(g.depth == brute_depth(k, g.edges));
  }
}

TEST_CASE("DOT output") {
  auto g = build_graph(steps(2), std::vector<Dependency>{{1, 2}});
  const std::string dot = to_dot(g, steps(2), "t\"1");
  CHECK(dot.find("digraph \"t\\\"1\"") == 0);
  CHECK(dot.find("n1 -> n2;") != std::string::npos);
}

TEST_CASE("schedule through a mock") {
  MockScript s;
  s.rules.push_back({"The init problem is", {"Step 1 [a] -> Step 2 [b]", {}, 0.0}});
  BackendRouter r;
  BackendProfile p;
  p.tier = ModelTier::Device;
  r.register_backend(p, std::make_shared<MockBackend>(s, 1));
  Task t{"t", "q", "math", "1", Checker::ExactMatch};
  auto sched = schedule(r, t, steps(2), {});
  CHECK(sched.graph.batches == Batches{{1}, {2}});
  CHECK(sched.ledger.device_calls == 1);

  auto single = schedule(r, t, steps(1), {});
  CHECK(single.graph.batches == Batches{{1}});
  CHECK(single.ledger.device_calls == 0);
}
