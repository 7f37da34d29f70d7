import csv
import io
import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ulmax.errors import AgentOutOfRange, ConfigInvalid, NonPositiveRegret, ResolutionTooCoarse
from ulmax.geometry import Box, Simplex
from ulmax.harness import (
    CSV_HEADER,
    AdversarySpec,
    ExperimentConfig,
    alpha_regret,
    comparator_rounds,
    csv_text,
    fit_loglog,
    fit_loglog_slope,
    make_pool,
    offline_best,
    run_experiment,
    run_one,
    sweep,
    total_objective,
)
from ulmax.objectives import QuadraticObjective, linear_objective

MINIMAL = {
    "network": {"kind": "complete", "n": 2},
    "body": {"kind": "box", "dim": 2},
    "objective": {"seed": 0, "monotone": True, "concave": True},
    "adversary": {"kind": "fixed"},
    "algorithm": {"variant": "alg1", "case": "A1", "theta": 1.0, "T": 200},
    "seeds": [0],
    "run_id": "t",
}


def fixed_table(f, T=10, N=2):
    return AdversarySpec("fixed", (f,)).table(T, N)


class TestAdversary:
    def test_rotating_index(self):
        pool = make_pool(2, 3, np.random.default_rng(0))
        idx = AdversarySpec("rotating", pool).table(5, 2).index
        np.testing.assert_array_equal(idx[:, 0], [0, 1, 2, 0, 1])
        np.testing.assert_array_equal(idx[:, 1], [1, 2, 0, 1, 2])

    def test_stochastic_seeded(self):
        pool = make_pool(2, 4, np.random.default_rng(0))
        a = AdversarySpec("stochastic", pool, seed=3).table(50, 3).index
        b = AdversarySpec("stochastic", pool, seed=3).table(50, 3).index
        np.testing.assert_array_equal(a, b)
        assert set(np.unique(a)) <= {0, 1, 2, 3}

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            AdversarySpec("greedy", (linear_objective(np.ones(2)),))

    def test_total_objective_matches_sum(self, rng):
        pool = make_pool(3, 4, rng)
        table = AdversarySpec("rotating", pool).table(7, 3)
        F = total_objective(table)
        u = rng.uniform(size=3)
        direct = sum(pool[table.index[t, i]].value(u) for t in range(7) for i in range(3)) / 3
        assert F.value(u) == pytest.approx(direct)


class TestOfflineBest:
    def test_linear_picks_simplex_vertex(self):
        table = fixed_table(linear_objective(np.array([0.2, 0.9, 0.5])))
        u, val = offline_best(table, Simplex(3))
        np.testing.assert_allclose(u, [0, 1, 0], atol=1e-12)
        assert val == pytest.approx(10 * 0.9)

    def test_interior_maximizer(self):
        # f(x) = 0.6 x - x^2 peaks at 0.3
        f = QuadraticObjective(np.array([0.6]), np.array([[-2.0]]), 0.0)
        u, val = offline_best(fixed_table(f, T=1), Box(1))
        assert u[0] == pytest.approx(0.3, abs=1e-3)
        assert val == pytest.approx(0.09, abs=1e-6)

    def test_grid_and_fw_agree(self, rng):
        pool = make_pool(2, 3, rng, concave=True)
        table = AdversarySpec("rotating", pool).table(6, 3)
        _, grid = offline_best(table, Box(2))
        _, fw = offline_best(table, Box(2), mode="fw", fw_steps=2000)
        assert abs(grid - fw) <= 1e-3 * max(1.0, abs(grid))

    def test_resolution_too_coarse(self):
        with pytest.raises(ResolutionTooCoarse):
            offline_best(fixed_table(linear_objective(np.ones(2))), Box(2), resolution=0.2)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            offline_best(fixed_table(linear_objective(np.ones(2))), Box(2), mode="exact")

    @given(st.integers(0, 10_000))
    @settings(max_examples=10)
    def test_comparator_dominates_lattice(self, seed):
        rng = np.random.default_rng(seed)
        table = AdversarySpec("rotating", make_pool(2, 3, rng)).table(4, 2)
        u, val = offline_best(table, Box(2))
        F = total_objective(table)
        pts = rng.uniform(size=(200, 2))
        assert val >= F.value(pts).max() - 1e-9
        assert val == pytest.approx(F.value(u))


class TestAlphaRegret:
    def test_playing_comparator_gives_zero(self):
        f = linear_objective(np.array([1.0, 2.0]))
        table = fixed_table(f, T=5)
        u, _ = offline_best(table, Box(2))
        best = comparator_rounds(table, u)
        rewards = np.tile(best[:, None], (1, 2))
        np.testing.assert_allclose(alpha_regret(rewards, 1.0, best, 1), 0.0)

    def test_worse_point_grows_linearly(self):
        rewards = np.full((6, 2), 1.0)
        curve = alpha_regret(rewards, 0.5, 3.0, 0)
        np.testing.assert_allclose(curve, 0.5 * np.arange(1, 7))

    def test_agent_range(self):
        with pytest.raises(AgentOutOfRange):
            alpha_regret(np.zeros((3, 2)), 1.0, 0.0, 2)

    @pytest.mark.parametrize("alpha", [0.0, 1.5, -0.2])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            alpha_regret(np.zeros((3, 2)), alpha, 0.0, 0)

    @given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_monotone_in_alpha(self, a, b):
        rewards = np.random.default_rng(0).uniform(size=(20, 1))
        lo, hi = sorted((a, b))
        assert np.all(alpha_regret(rewards, lo, 2.0, 0) <= alpha_regret(rewards, hi, 2.0, 0) + 1e-12)


class TestSlopeFit:
    T = [2500, 5000, 10000, 20000]

    def test_square_root(self):
        assert fit_loglog_slope(self.T, [t**0.5 for t in self.T]) == pytest.approx(0.5, abs=1e-9)

    def test_linear(self):
        assert fit_loglog_slope(self.T, [3.0 * t for t in self.T]) == pytest.approx(1.0, abs=1e-9)

    def test_floor_warns(self):
        with pytest.warns(NonPositiveRegret):
            fit = fit_loglog(self.T, [-1.0, 0.0, 5.0, 10.0])
        assert fit.clipped

    def test_needs_four_points(self):
        with pytest.raises(ValueError):
            fit_loglog(self.T[:3], [1.0, 2.0, 3.0])

    def test_needs_increasing_horizons(self):
        with pytest.raises(ValueError):
            fit_loglog([1, 2, 2, 3], [1.0, 2.0, 3.0, 4.0])

    @given(st.floats(0.05, 1.5), st.floats(0.1, 100.0))
    def test_recovers_power(self, p, c):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert fit_loglog_slope(self.T, [c * t**p for t in self.T]) == pytest.approx(p, abs=1e-9)


class TestConfig:
    def test_roundtrip(self):
        cfg = ExperimentConfig.from_dict(MINIMAL)
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_all_problems_reported(self):
        raw = json.loads(json.dumps(MINIMAL))
        raw["algorithm"].update(variant="alg3", case="A1", theta=0.9)
        raw["body"]["color"] = "red"
        raw["workers"] = 0
        with pytest.raises(ConfigInvalid) as info:
            ExperimentConfig.from_dict(raw)
        names = {name for name, _ in info.value.problems}
        assert {"algorithm.case", "algorithm.theta", "body.color", "workers"} <= names

    def test_a2_origin_check(self):
        raw = json.loads(json.dumps(MINIMAL))
        raw["algorithm"]["case"] = "A2"
        raw["body"].update(lo=0.5, hi=1.0)
        with pytest.raises(ConfigInvalid, match="origin"):
            ExperimentConfig.from_dict(raw)

    def test_oracle_order(self):
        raw = json.loads(json.dumps(MINIMAL))
        raw["objective"]["oracle_order"] = 0
        with pytest.raises(ConfigInvalid, match="oracle_order"):
            ExperimentConfig.from_dict(raw)

    def test_wrong_type(self):
        raw = json.loads(json.dumps(MINIMAL))
        raw["algorithm"]["theta"] = "high"
        with pytest.raises(ConfigInvalid, match="algorithm.theta"):
            ExperimentConfig.from_dict(raw)

    def test_scalar_seed(self):
        raw = dict(MINIMAL, seeds=7)
        assert ExperimentConfig.from_dict(raw).seeds == [7]

    def test_overrides(self):
        cfg = ExperimentConfig.from_dict(MINIMAL).with_overrides(**{"algorithm.T": 99})
        assert cfg.algorithm.T == 99
        with pytest.raises(ConfigInvalid):
            cfg.with_overrides(**{"algorithm.T": 0})

    def test_bad_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{nope")
        with pytest.raises(ConfigInvalid):
            ExperimentConfig.load(p)


class TestRuns:
    def test_minimal_run_writes_files(self, tmp_path):
        cfg = ExperimentConfig.from_dict(MINIMAL)
        (oc,) = run_experiment(cfg, tmp_path)
        rows = list(csv.reader(open(tmp_path / "t-s0.csv")))
        assert tuple(rows[0]) == CSV_HEADER
        assert len(rows) == 1 + 2 * 200
        assert rows[1][CSV_HEADER.index("t")] == "1"
        last = rows[200]
        assert int(last[CSV_HEADER.index("comm_count")]) == oc.report.comm_count
        meta = json.loads((tmp_path / "t-s0.json").read_text())
        assert meta["schedule"]["K"] == 1
        assert meta["mean_final_regret"] == pytest.approx(oc.mean_regret)

    def test_csv_regret_column_matches_curves(self):
        cfg = ExperimentConfig.from_dict(MINIMAL)
        oc = run_one(cfg, 0)
        rows = list(csv.DictReader(io.StringIO(csv_text(oc))))
        got = np.array([float(r["cum_regret"]) for r in rows if r["agent"] == "1"])
        np.testing.assert_array_equal(got, oc.curves[1])

    def test_case_curves(self):
        raw = json.loads(json.dumps(MINIMAL))
        raw["algorithm"]["alpha"] = 1.0
        oc = run_one(ExperimentConfig.from_dict(raw), 0)
        assert oc.case_alpha == pytest.approx(0.5)
        assert np.all(oc.case_curves() <= oc.curves + 1e-9)

    def test_sweep_counts(self, tmp_path):
        raw = json.loads(json.dumps(MINIMAL))
        raw["algorithm"]["T"] = 100
        cfg = ExperimentConfig.from_dict(raw)
        points, fits = sweep(cfg, [0.5, 1.0], [100, 200, 400, 800], out=tmp_path)
        assert len(points) == 8
        for p in points:
            assert p.comm_count == -(-p.T // p.K) and p.L == 1
        assert fits[1.0]["comm_slope"] == pytest.approx(1.0)
        assert fits[0.5]["comm_slope"] == pytest.approx(0.5, abs=0.05)
        assert (tmp_path / "t-sweep.csv").exists() and (tmp_path / "t-sweep.json").exists()
