import math
import pathlib

import pytest

import edgecloud as ec

FIXTURE = pathlib.Path(__file__).resolve().parents[2] / "tests" / "fixtures" / "small"
EXEMPLARS = FIXTURE / "exemplars.json"


@pytest.fixture(scope="module")
def router():
    return ec.Router.from_profiles(FIXTURE / "profiles.json", seed=1)


@pytest.fixture(scope="module")
def tasks():
    return ec.load_benchmark(FIXTURE / "benchmark.jsonl")


def test_load_benchmark(tasks):
    assert len(tasks) == 8
    assert tasks[0].id == "T0001"
    assert tasks[0].checker == ec.Checker.NumericMatch


def test_parsing_and_graph():
    subs = ec.parse_subtasks("1. find x\n2. find y\n3. add them")
    assert [s.description for s in subs] == ["find x", "find y", "add them"]
    deps = ec.parse_dependencies("Step 1 [a] -> Step 3 [c]\nStep 2 [b] -> Step 3 [c]", subs)
    assert deps == [(1, 3), (2, 3)]
    g = ec.build_graph(subs, deps)
    assert g["batches"] == [[1, 2], [3]]
    assert "n1 -> n3;" in ec.to_dot(subs, deps)
    with pytest.raises(ec.DecompositionParseError):
        ec.parse_subtasks("just add them")


def test_quantile_and_checkers():
    assert ec.alpha_quantile([0.2, 0.4, 0.6], 0.5) == pytest.approx(0.4)
    assert ec.alpha_quantile([0.9], ec.DEFAULT_ALPHA) == pytest.approx(0.9)
    assert ec.check_answer("42.0", "42", ec.Checker.NumericMatch)
    assert not ec.check_answer("41", "42", ec.Checker.ExactMatch)


def test_bench_strategies(router, tasks):
    cloud = ec.run_bench(router, tasks, "all-cloud", EXEMPLARS)
    device = ec.run_bench(router, tasks, "all-device", EXEMPLARS, workers=2)
    assert cloud["report"]["accuracy"] == 1.0
    assert device["report"]["mean_api_cents"] == 0.0
    assert cloud["report"]["mean_api_cents"] > 0.0
    assert len(device["traces"]) == len(tasks)
    again = ec.run_bench(router, tasks, "all-device", EXEMPLARS)
    assert again["report"] == device["report"]


def test_tradeoff(router, tasks):
    rows = ec.tradeoff(router, tasks, [0.0, 0.5, 1.0], EXEMPLARS)
    assert [r["cloud_fraction"] for r in rows] == [0.0, 0.5, 1.0]
    cents = [r["mean_api_cents"] for r in rows]
    assert cents == sorted(cents)
    with pytest.raises(ec.PreconditionError):
        ec.tradeoff(router, tasks, [0.5, 0.0], EXEMPLARS)


def test_search(router, tasks):
    alpha = ec.search(router, tasks, "alpha", EXEMPLARS)
    binary = ec.search(router, tasks, "binary", EXEMPLARS)
    assert alpha["success_rate"] == 1.0
    assert alpha["slm_ratio"] >= binary["slm_ratio"]
    assert len(alpha["outcomes"]) == len(tasks)
    with pytest.raises(ec.ConfigError):
        ec.search(router, tasks, "greedy", EXEMPLARS)


def test_adapter(tmp_path):
    assert ec.adapter_param_count(8, [4]) == 41
    w = ec.adapter_init(3, [4], seed=2)
    assert w == ec.adapter_init(3, [4], seed=2)
    p = ec.adapter_forward(w, [0.1, -0.2, 0.3])
    assert 0.0 < p < 1.0

    xs = [[1.0 + 0.1 * i, 1.0] for i in range(5)] + [[-1.0 - 0.1 * i, -1.0] for i in range(5)]
    labels = [1] * 5 + [0] * 5
    trained, losses = ec.adapter_train(xs, labels, hidden=[4], lr=0.1, epochs=50, seed=3)
    assert len(losses) == 50 and losses[-1] < losses[0]
    assert all(math.isfinite(v) for v in losses)
    assert ec.adapter_forward(trained, [1.2, 1.0]) > 0.5
    assert ec.adapter_forward(trained, [-1.2, -1.0]) < 0.5

    ec.save_weights(tmp_path / "w.json", trained)
    assert ec.load_weights(tmp_path / "w.json") == trained
    with pytest.raises(ec.PreconditionError):
        ec.adapter_forward(trained, [1.0])
    with pytest.raises(ec.EmptyResultError):
        ec.adapter_train([], [], hidden=[2])
