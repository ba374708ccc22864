import numpy as np
import pytest

import telemplan as tp


def square():
    return tp.Topology.from_parts([100.0] * 4, [tp.Edge(1, 2, 1), tp.Edge(2, 3, 1), tp.Edge(3, 4, 1), tp.Edge(1, 4, 1)])


def test_topology_round_trip():
    topo = tp.random_topology(12, 3.0, seed=4)
    assert topo.node_count == 12
    assert tp.load_topology(tp.write_topology(topo)) == topo
    assert tp.validate(topo) == []


def test_shortest_path():
    nodes, latency = tp.shortest_path(square(), 1, 3)
    assert nodes == [1, 2, 3]
    assert latency == 2


def test_invalid_topology_raises():
    with pytest.raises(ValueError):
        tp.load_topology("nodes 2\ncap 1 1\ncap 2 1\nedge 1 2 1\nedge 2 1 1\n")


def test_traffic_is_deterministic():
    topo = tp.random_topology(8, seed=2)
    a = tp.generate_traffic(topo, 50, seed=3)
    b = tp.generate_traffic(topo, 50, seed=3)
    assert a.shape == (50, topo.edge_count)
    assert np.array_equal(a, b)
    assert (a >= 0).all()


def test_highload_and_prune():
    topo = square()
    traffic = np.array([10.0, 20.0, 30.0, 40.0])
    loads = tp.switch_load(topo, traffic)
    expected = {v: 0.0 for v in range(1, 5)}
    for edge, value in zip(topo.edges, traffic):
        expected[edge.u] += value
        expected[edge.v] += value
    assert loads == expected
    assert tp.identify_highload(topo, loads, 0.5) == sorted(v for v, load in expected.items() if load >= 50.0)
    sub = tp.prune(topo, [1])
    assert sub.nodes == [1, 2, 3, 4]
    assert tp.is_biconnected(sub, topo)
    assert tp.articulation_points(sub, topo) == []


def test_baseline_plans():
    topo = tp.random_topology(10, seed=5)
    inst = tp.PlanningInstance.whole(topo, [1, 4, 7])
    cfg = tp.PlannerConfig()
    cfg.t_max = 30
    paths, score = tp.baseline_plan("sa", inst, cfg, iterations=2000)
    assert score.coverage == 1.0
    assert not score.flag
    assert score.K == len(paths)
    assert score.K >= tp.optimal_path_count(inst, 30)
    with pytest.raises(ValueError):
        tp.baseline_plan("nope", inst, cfg)


def test_pipeline(tmp_path):
    cfg = tp.default_config()
    cfg["out"] = str(tmp_path)
    cfg["seed"] = 11
    cfg["topology"]["nodes"] = 6
    cfg["traffic"]["slots"] = 300
    cfg["predictor"]["horizon"] = 1
    cfg["predictor"]["train"]["epochs"] = 1
    cfg["identify"]["theta"] = 0.6
    cfg["planner"].update(instances=20, epochs=1, batch=8, embed=8, hidden=8, t_max=20)
    cfg["annealing"]["iterations"] = 300
    cfg["ablation"]["enabled"] = False
    report = tp.run_pipeline(cfg)
    assert report["provenance"]["seed"] == 11
    assert (tmp_path / "report.json").exists()
    assert report["predictor"]["test_windows"] > 0
