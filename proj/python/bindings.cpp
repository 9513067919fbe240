#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "edgecloud/adapter.hpp"
#include "edgecloud/bench.hpp"
#include "edgecloud/error.hpp"
#include "edgecloud/uncertainty.hpp"

namespace py = pybind11;
using namespace edgecloud;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::handle& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::dict graph_dict(const DependencyGraph& g) {
  py::dict d;
  d["nodes"] = g.nodes;
  std::vector<std::pair<int, int>> edges, removed;
  for (const auto& e : g.edges) edges.emplace_back(e.from_index, e.to_index);
  for (const auto& e : g.removed_edges) removed.emplace_back(e.from_index, e.to_index);
  d["edges"] = edges;
  d["removed_edges"] = removed;
  d["depth"] = g.depth;
  d["batches"] = g.batches;
  return d;
}

std::vector<Dependency> deps_of(const std::vector<std::pair<int, int>>& edges) {
  std::vector<Dependency> out;
  for (auto [a, b] : edges) out.push_back({a, b});
  return out;
}

SuiteConfig suite_config(const std::string& strategy, const std::filesystem::path& exemplars, double theta,
                         double alpha, std::size_t workers, const std::optional<std::filesystem::path>& weights) {
  SuiteConfig c;
  c.strategy = Strategy::parse(strategy);
  c.strategy.theta = theta;
  c.strategy.alpha = alpha;
  c.exemplars = ExemplarBank::load(exemplars);
  c.workers = workers;
  if (weights) c.weights = load_weights(*weights);
  return c;
}

MlpConfig mlp(std::size_t input_dim, std::vector<std::size_t> hidden, std::uint64_t seed) {
  MlpConfig c;
  c.input_dim = input_dim;
  c.hidden_dims = std::move(hidden);
  c.seed = seed;
  return c;
}

}  // namespace

PYBIND11_MODULE(_edgecloud, m) {
  m.doc() = "Edge/cloud task routing: decomposition, scheduling, allocation search and the routing adapter.";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
  py::register_exception<DomainMismatchError>(m, "DomainMismatchError", base.ptr());
  py::register_exception<DecompositionParseError>(m, "DecompositionParseError", base.ptr());
  auto backend = py::register_exception<BackendError>(m, "BackendError", base.ptr());
  py::register_exception<TransportError>(m, "TransportError", backend.ptr());
  py::register_exception<DecodeError>(m, "DecodeError", backend.ptr());
  py::register_exception<CapabilityError>(m, "CapabilityError", backend.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<EmptyResultError>(m, "EmptyResultError", base.ptr());

  py::enum_<Checker>(m, "Checker")
      .value("ExactMatch", Checker::ExactMatch)
      .value("NumericMatch", Checker::NumericMatch)
      .value("ContainsMatch", Checker::ContainsMatch);
  py::enum_<ModelTier>(m, "ModelTier").value("Device", ModelTier::Device).value("Cloud", ModelTier::Cloud);

  py::class_<Task>(m, "Task")
      .def(py::init([](std::string id, std::string query, std::string category, std::string ground_truth,
                       Checker checker) { return Task{id, query, category, ground_truth, checker}; }),
           py::arg("id"), py::arg("query"), py::arg("category") = "default", py::arg("ground_truth") = "",
           py::arg("checker") = Checker::ExactMatch)
      .def_readwrite("id", &Task::id)
      .def_readwrite("query", &Task::query)
      .def_readwrite("category", &Task::category)
      .def_readwrite("ground_truth", &Task::ground_truth)
      .def_readwrite("checker", &Task::checker)
      .def("__repr__", [](const Task& t) { return "<Task " + t.id + ">"; });

  py::class_<SubTask>(m, "SubTask")
      .def(py::init([](int index, std::string description) { return SubTask{index, description}; }), py::arg("index"),
           py::arg("description"))
      .def_readwrite("index", &SubTask::index)
      .def_readwrite("description", &SubTask::description)
      .def("__eq__", [](const SubTask& a, const SubTask& b) { return a == b; })
      .def("__repr__", [](const SubTask& s) { return std::to_string(s.index) + ". " + s.description; });

  m.def("load_benchmark", &load_benchmark, py::arg("path"));
  m.def("check_answer", &check_answer, py::arg("answer"), py::arg("ground_truth"), py::arg("checker"));
  m.def("extract_final_answer", &extract_final_answer, py::arg("response"));
  m.def("parse_subtasks", &parse_subtasks, py::arg("response"));
  m.def("format_subtasks", [](const std::vector<SubTask>& s) { return format_subtasks(s); }, py::arg("subtasks"));
  m.def(
      "parse_dependencies",
      [](const std::string& response, const std::vector<SubTask>& subtasks) {
        std::vector<std::pair<int, int>> out;
        for (const auto& d : parse_dependencies(response, subtasks)) out.emplace_back(d.from_index, d.to_index);
        return out;
      },
      py::arg("response"), py::arg("subtasks"));
  m.def(
      "build_graph",
      [](const std::vector<SubTask>& subtasks, const std::vector<std::pair<int, int>>& edges) {
        return graph_dict(build_graph(subtasks, deps_of(edges)));
      },
      py::arg("subtasks"), py::arg("edges"));
  m.def(
      "to_dot",
      [](const std::vector<SubTask>& subtasks, const std::vector<std::pair<int, int>>& edges, const std::string& name) {
        return to_dot(build_graph(subtasks, deps_of(edges)), subtasks, name);
      },
      py::arg("subtasks"), py::arg("edges"), py::arg("name") = "task");

  m.attr("DEFAULT_ALPHA") = kDefaultAlpha;
  m.def("alpha_quantile", [](const std::vector<double>& p, double a) { return alpha_quantile(p, a); }, py::arg("probs"),
        py::arg("alpha") = kDefaultAlpha);
  m.def("rank_by_difficulty", &rank_by_difficulty, py::arg("scores"));

  py::class_<BackendRouter>(m, "Router")
      .def_static("from_profiles", &BackendRouter::from_profiles_file, py::arg("path"), py::arg("seed") = 0)
      .def("has", &BackendRouter::has, py::arg("tier"));

  m.def(
      "run_bench",
      [](const BackendRouter& router, const std::vector<Task>& tasks, const std::string& strategy,
         const std::filesystem::path& exemplars, double theta, double alpha, std::size_t workers,
         std::optional<std::filesystem::path> weights) {
        const auto cfg = suite_config(strategy, exemplars, theta, alpha, workers, weights);
        SuiteResult r;
        {
          py::gil_scoped_release release;
          r = run_suite(router, tasks, cfg);
        }
        nlohmann::json traces = nlohmann::json::array();
        for (const auto& t : r.traces) traces.push_back(to_json(t));
        py::dict out;
        out["report"] = to_py(report_json(cfg.strategy.name(), r.metrics));
        out["traces"] = to_py(traces);
        return out;
      },
      py::arg("router"), py::arg("tasks"), py::arg("strategy"), py::arg("exemplars"), py::arg("theta") = 0.5,
      py::arg("alpha") = kDefaultAlpha, py::arg("workers") = 1, py::arg("weights") = py::none());

  m.def(
      "tradeoff",
      [](const BackendRouter& router, const std::vector<Task>& tasks, const std::vector<double>& fractions,
         const std::filesystem::path& exemplars, double alpha, std::size_t workers) {
        auto cfg = suite_config("all-device", exemplars, 0.5, alpha, workers, std::nullopt);
        std::vector<TradeoffPoint> pts;
        {
          py::gil_scoped_release release;
          pts = tradeoff_sweep(router, tasks, fractions, cfg, alpha);
        }
        py::list out;
        for (const auto& p : pts) {
          Strategy s;
          s.kind = StrategyKind::CloudFraction;
          s.cloud_fraction = p.cloud_fraction;
          auto row = to_py(report_json(s.name(), p.metrics));
          row["cloud_fraction"] = p.cloud_fraction;
          out.append(row);
        }
        return out;
      },
      py::arg("router"), py::arg("tasks"), py::arg("fractions"), py::arg("exemplars"),
      py::arg("alpha") = kDefaultAlpha, py::arg("workers") = 1);

  m.def(
      "search",
      [](const BackendRouter& router, const std::vector<Task>& tasks, const std::string& searcher,
         const std::filesystem::path& exemplars, int n, std::optional<double> theta, double alpha, int attempts,
         std::uint64_t seed, std::size_t workers) {
        SearchSuiteConfig cfg;
        cfg.searcher = parse_searcher(searcher);
        cfg.alpha_tree.n = n;
        cfg.alpha_tree.theta = theta;
        cfg.alpha_tree.alpha = alpha;
        cfg.binary.attempts = attempts;
        cfg.binary.seed = seed;
        cfg.exemplars = ExemplarBank::load(exemplars);
        cfg.workers = workers;
        SearchSuiteResult r;
        {
          py::gil_scoped_release release;
          r = run_search_suite(router, tasks, cfg);
        }
        const auto s = summarize(r.outcomes);
        nlohmann::json outcomes = nlohmann::json::array();
        for (const auto& o : r.outcomes) outcomes.push_back(to_json(o));
        py::dict out;
        out["outcomes"] = to_py(outcomes);
        out["slm_ratio"] = s.slm_ratio;
        out["success_rate"] = s.success_rate;
        out["mean_evaluations"] = s.mean_evaluations;
        out["mean_api_cents"] = s.mean_api_cents;
        return out;
      },
      py::arg("router"), py::arg("tasks"), py::arg("searcher"), py::arg("exemplars"), py::arg("n") = 1,
      py::arg("theta") = py::none(), py::arg("alpha") = kDefaultAlpha, py::arg("attempts") = 5, py::arg("seed") = 0,
      py::arg("workers") = 1);

  m.def(
      "adapter_param_count",
      [](std::size_t input_dim, std::vector<std::size_t> hidden) { return analytic_param_count(mlp(input_dim, hidden, 0)); },
      py::arg("input_dim"), py::arg("hidden"));
  m.def(
      "adapter_init",
      [](std::size_t input_dim, std::vector<std::size_t> hidden, std::uint64_t seed) {
        return to_py(to_json(init(mlp(input_dim, std::move(hidden), seed))));
      },
      py::arg("input_dim"), py::arg("hidden") = std::vector<std::size_t>{128}, py::arg("seed") = 0);
  m.def(
      "adapter_forward",
      [](const py::dict& weights, const std::vector<double>& x) { return forward(weights_from_json(from_py(weights)), x); },
      py::arg("weights"), py::arg("x"));
  m.def(
      "adapter_train",
      [](const std::vector<std::vector<double>>& xs, const std::vector<int>& labels, std::vector<std::size_t> hidden,
         double lr, int epochs, std::size_t batch_size, std::uint64_t seed) {
        if (xs.size() != labels.size()) throw PreconditionError("inputs and labels differ in length");
        if (xs.empty()) throw EmptyResultError("cannot train the adapter on an empty dataset");
        std::vector<Example> ex;
        for (std::size_t i = 0; i < xs.size(); ++i) ex.push_back({xs[i], labels[i]});
        TrainConfig tc;
        tc.learning_rate = lr;
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.seed = seed;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train_examples(ex, mlp(xs.front().size(), std::move(hidden), seed), tc);
        }
        return py::make_tuple(to_py(to_json(r.weights)), r.loss_history);
      },
      py::arg("xs"), py::arg("labels"), py::arg("hidden") = std::vector<std::size_t>{128}, py::arg("lr") = 1e-2,
      py::arg("epochs") = 200, py::arg("batch_size") = 16, py::arg("seed") = 0);
  m.def(
      "load_weights", [](const std::filesystem::path& p) { return to_py(to_json(load_weights(p))); }, py::arg("path"));
  m.def(
      "save_weights",
      [](const std::filesystem::path& p, const py::dict& w) { save_weights(p, weights_from_json(from_py(w))); },
      py::arg("path"), py::arg("weights"));
}
