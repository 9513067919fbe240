#include "population.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "edgecloud/error.hpp"
#include "edgecloud/hash.hpp"

namespace edgecloud::fixture {

namespace {

std::vector<double> draw_probs(SplitMix64& rng, double lo, double hi) {
  const auto len = 6 + rng.below(19);
  std::vector<double> p(len);
  for (auto& v : p) v = rng.uniform(lo, hi);
  return p;
}

long step_value(const SyntheticTask& t, int index) {
  return static_cast<long>(fnv1a64(fmt::format("{}#{}", t.task.id, index)) % 90 + 10);
}

std::string step_answer(const SyntheticTask& t, int index) {
  return fmt::format("v{} = {}", index, step_value(t, index));
}

std::string decomposition_text(const SyntheticTask& t) {
  std::string out = fmt::format("To solve the question \"{}\", we need to know:\n", t.task.query);
  for (std::size_t i = 0; i < t.subtasks.size(); ++i) {
    out += fmt::format("\"{}. {}\"{}\n", t.subtasks[i].index, t.subtasks[i].description,
                       i + 1 == t.subtasks.size() ? "." : ",");
  }
  return out;
}

std::string dependency_text(const SyntheticTask& t) {
  std::string out;
  for (const auto& e : t.edges) {
    out += fmt::format("Step {} [ {} ] -> Step {} [ {} ]\n", e.from_index,
                       t.subtasks[static_cast<std::size_t>(e.from_index - 1)].description, e.to_index,
                       t.subtasks[static_cast<std::size_t>(e.to_index - 1)].description);
  }
  if (out.empty()) out = "The sub-problems are independent.\n";
  return out;
}

struct RuleGroups {
  std::vector<MockRule> planning, steps, judges, finals;
};

void add_task_rules(const Population& pop, const SyntheticTask& t, ModelTier tier, RuleGroups& g) {
  const auto& spec = pop.spec;
  g.planning.push_back({fmt::format("Now the command is {}, please decompose", t.task.query),
                        {decomposition_text(t), {}, spec.planning_seconds}});
  g.planning.push_back({fmt::format("The init problem is {}. And", t.task.query),
                        {dependency_text(t), {}, spec.planning_seconds}});

  SplitMix64 doubt(fnv1a64(t.task.id) ^ spec.seed ^ 0x5EED);
  for (const auto& st : t.subtasks) {
    const auto pos = static_cast<std::size_t>(st.index - 1);
    const std::string match = fmt::format("The sub-question to solve now is {}: {}\n", st.index, st.description);
    MockReply reply;
    if (tier == ModelTier::Device) {
      reply.token_probs = t.device_probs[pos];
      reply.text = t.solvable[pos] ? step_answer(t, st.index) : fmt::format("v{} = WRONG", st.index);
      reply.elapsed_seconds =
          spec.device_step_seconds + spec.device_seconds_per_token * static_cast<double>(reply.token_probs.size());
    } else {
      reply.token_probs = t.cloud_probs[pos];
      reply.text = step_answer(t, st.index);
      reply.elapsed_seconds = spec.cloud_step_seconds;
    }
    g.steps.push_back({match, std::move(reply)});

    if (tier == ModelTier::Cloud) {
      const bool complex = !t.solvable[pos] || doubt.unit() < spec.zero_shot_doubt;
      g.judges.push_back({fmt::format("Current sub-problem: {}. {}\n", st.index, st.description),
                          {complex ? "complex" : "simple", {}, spec.planning_seconds}});
    }
  }
  if (tier == ModelTier::Cloud) {
    const bool all_solvable = std::all_of(t.solvable.begin(), t.solvable.end(), [](bool b) { return b; });
    g.judges.push_back({fmt::format("Here is a problem: {}\n", t.task.query),
                        {all_solvable ? "simple" : "complex", {}, spec.planning_seconds}});
  }
  g.finals.push_back({fmt::format("original question: {}\n", t.task.query),
                      {fmt::format("Adding the sub-answers gives the total.\n{}", t.task.ground_truth), {},
                       spec.final_seconds}});
}

}  // namespace

std::vector<Task> Population::task_list() const {
  std::vector<Task> out;
  for (const auto& t : tasks) out.push_back(t.task);
  return out;
}

Population build_population(const PopulationSpec& spec) {
  if (spec.k_min < 1 || spec.k_max < spec.k_min) throw PreconditionError("bad sub-task count range");
  Population pop;
  pop.spec = spec;
  SplitMix64 rng(spec.seed);

  std::vector<int> ks;
  std::size_t total = 0;
  for (std::size_t i = 0; i < spec.tasks; ++i) {
    ks.push_back(spec.k_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.k_max - spec.k_min + 1))));
    total += static_cast<std::size_t>(ks.back());
  }
  // Exact solvable share, shuffled over all sub-tasks.
  std::vector<bool> bits(total, false);
  const auto solvable = static_cast<std::size_t>(std::llround(spec.solvable_fraction * static_cast<double>(total)));
  std::fill(bits.begin(), bits.begin() + static_cast<std::ptrdiff_t>(std::min(solvable, total)), true);
  for (std::size_t i = total; i > 1; --i) {
    std::size_t j = rng.below(i);
    bool tmp = bits[i - 1];
    bits[i - 1] = bits[j];
    bits[j] = tmp;
  }

  std::size_t cursor = 0;
  for (std::size_t i = 0; i < spec.tasks; ++i) {
    SyntheticTask t;
    const int k = ks[i];
    t.task.id = fmt::format("{}{:04d}", spec.id_prefix, i + 1);
    t.task.query = fmt::format("Problem {} asks for the total of {} hidden values", t.task.id, k);
    t.task.category = "arithmetic";
    t.task.checker = Checker::NumericMatch;
    long sum = 0;
    for (int j = 1; j <= k; ++j) {
      t.subtasks.push_back({j, fmt::format("Work out hidden value v{} of {}", j, t.task.id)});
      t.solvable.push_back(bits[cursor++]);
    }
    for (int j = 1; j <= k; ++j) sum += step_value(t, j);
    t.task.ground_truth = std::to_string(sum);

    for (int a = 1; a <= k; ++a) {
      for (int b = a + 1; b <= k; ++b) {
        if (rng.unit() < spec.edge_probability) t.edges.push_back({a, b});
      }
    }

    if (rng.unit() < spec.overconfident_tasks) {
      std::vector<int> wrong;
      for (int j = 1; j <= k; ++j) {
        if (!t.solvable[static_cast<std::size_t>(j - 1)]) wrong.push_back(j);
      }
      if (!wrong.empty()) t.overconfident = wrong[rng.below(wrong.size())];
    }
    for (int j = 1; j <= k; ++j) {
      const bool ok = t.solvable[static_cast<std::size_t>(j - 1)];
      const bool bold = t.overconfident == j;
      t.device_probs.push_back(ok || bold ? draw_probs(rng, 0.86, 0.99) : draw_probs(rng, 0.15, 0.6));
      t.cloud_probs.push_back(draw_probs(rng, 0.9, 1.0));
    }
    pop.tasks.push_back(std::move(t));
  }

  pop.exemplars = {
      {"Anna has 3 boxes with 4 pens each and buys 5 more pens. How many pens does she have?",
       {"How many pens are in the boxes?", "How many pens does she have after buying 5 more?"}},
      {"A train covers 120 km in 2 hours and then 90 km in 1 hour. What is its average speed?",
       {"What is the total distance?", "What is the total time?", "What is the average speed?"}},
  };
  return pop;
}

DependencyGraph graph_of(const SyntheticTask& t) { return build_graph(t.subtasks, t.edges); }

MockScript script_for(const Population& pop, ModelTier tier, std::optional<std::size_t> only) {
  RuleGroups g;
  for (std::size_t i = 0; i < pop.tasks.size(); ++i) {
    if (!only || *only == i) add_task_rules(pop, pop.tasks[i], tier, g);
  }
  MockScript s;
  s.fallback = {"I am not sure.", {0.5}, 0.1};
  auto append = [&](std::vector<MockRule>& rules) { s.rules.insert(s.rules.end(), rules.begin(), rules.end()); };
  append(g.planning);
  append(g.steps);
  append(g.judges);
  // Step rules come first, so only final-answer prompts reach this rule.
  s.rules.push_back({"WRONG", {"Some sub-answers are unusable.\n-1", {}, pop.spec.final_seconds}});
  append(g.finals);

  for (std::size_t i = 0; i < pop.tasks.size(); ++i) {
    if (only && *only != i) continue;
    const auto& t = pop.tasks[i];
    for (const auto& st : t.subtasks) {
      s.embeddings.push_back({st.description, t.device_solvable(st.index) ? 0.0 : 1.0});
    }
  }
  return s;
}

BackendProfile device_profile() {
  BackendProfile p;
  p.tier = ModelTier::Device;
  p.model_name = "scripted-device";
  return p;
}

BackendProfile cloud_profile() {
  BackendProfile p;
  p.tier = ModelTier::Cloud;
  p.model_name = "scripted-cloud";
  p.price_per_prompt_token_cents = kCloudPromptCents;
  p.price_per_completion_token_cents = kCloudCompletionCents;
  return p;
}

BackendRouter make_router(const Population& pop, std::uint64_t seed, std::optional<std::size_t> only) {
  BackendRouter router;
  router.register_backend(device_profile(),
                          std::make_shared<MockBackend>(script_for(pop, ModelTier::Device, only), seed, "mock:device"));
  router.register_backend(cloud_profile(),
                          std::make_shared<MockBackend>(script_for(pop, ModelTier::Cloud, only), seed + 1, "mock:cloud"));
  return router;
}

void write_fixture(const Population& pop, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw ConfigError(fmt::format("cannot write {}", (dir / name).string()));
    out << content;
  };

  std::string bench;
  for (const auto& t : pop.tasks) {
    nlohmann::json j = {{"id", t.task.id},
                        {"query", t.task.query},
                        {"category", t.task.category},
                        {"ground_truth", t.task.ground_truth},
                        {"checker", std::string(to_string(t.task.checker))}};
    bench += j.dump() + "\n";
  }
  write("benchmark.jsonl", bench);

  nlohmann::json ex = nlohmann::json::array();
  for (const auto& e : pop.exemplars) ex.push_back({{"question", e.question}, {"steps", e.steps}});
  write("exemplars.json", nlohmann::json{{"arithmetic", ex}}.dump(2) + "\n");

  write("device_script.json", script_for(pop, ModelTier::Device).to_json().dump(1) + "\n");
  write("cloud_script.json", script_for(pop, ModelTier::Cloud).to_json().dump(1) + "\n");

  nlohmann::json profiles = {
      {"device", {{"endpoint", "mock"}, {"model_name", "scripted-device"}, {"script", "device_script.json"}}},
      {"cloud",
       {{"endpoint", "mock"},
        {"model_name", "scripted-cloud"},
        {"script", "cloud_script.json"},
        {"price_per_prompt_token_cents", kCloudPromptCents},
        {"price_per_completion_token_cents", kCloudCompletionCents}}},
      {"retry", {{"max_attempts", 3}, {"base_delay_ms", 10}}},
  };
  write("profiles.json", profiles.dump(2) + "\n");
}

}  // namespace edgecloud::fixture
