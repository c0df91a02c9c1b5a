import numpy as np
import pytest

import lrp_walks as lw


def test_walk_moves_along_open_edges():
    env = lw.Environment({"d": 2, "s": 3.2, "beta": 1.0, "seed": 3})
    path = lw.run_walk(env, 200, seed=9)
    assert path.shape == (201, 2)
    assert (path[0] == 0).all()
    for a, b in zip(path[:-1], path[1:]):
        assert env.is_open(list(a), list(b))


def test_walk_is_reproducible():
    a = lw.run_walk(lw.Environment({"seed": 5}), 500, seed=1)
    b = lw.run_walk(lw.Environment({"seed": 5}), 500, seed=1)
    c = lw.run_walk(lw.Environment({"seed": 5}), 500, seed=2)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_stable_sampler_and_ecf():
    xs = lw.sample_stable(1.2, 1.0, 2, 1.0, 5000, 11)
    est = lw.estimate_alpha_ecf(xs.tolist())
    assert abs(est["alpha"] - 1.2) < 0.1
    assert est["r2"] > 0.99


def test_hill_on_pareto():
    rng = np.random.default_rng(0)
    mags = rng.pareto(1.5, 100000) + 1.0
    assert abs(lw.estimate_alpha_hill(mags.tolist(), 0.05)["alpha"] - 1.5) < 0.1


def test_cluster_sizes_sum_to_volume():
    sizes = lw.cluster_sizes({"beta": 0.05, "nn_open": False, "seed": 2}, 10)
    assert sum(sizes) == 21 * 21
    assert sizes == sorted(sizes, reverse=True)


def test_experiment_roundtrip():
    assert "coupling_errors" in lw.experiment_names()
    spec = lw.default_spec("no_return")
    spec.update({"walks": 0})
    assert lw.run_experiment(spec)["verdict"] == "insufficient data"
    with pytest.raises(Exception):
        lw.run_experiment({"experiment": "unknown"})


def test_coupling_errors_report():
    env = lw.Environment({"seed": 4})
    rep = lw.coupling_errors(env, 1024, 7, {"k": 10, "epsilon": 0.05, "gamma": 0.4, "delta": 0.6})
    assert "ledger" in rep or "phases" in rep
