import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from ulmax.errors import DimensionMismatch
from ulmax.geometry import Box
from ulmax.objectives import (
    ObjectivePool,
    ObjectiveTable,
    QuadraticObjective,
    QueryOracle,
    boosted_grad_exact,
    boosted_query,
    check_linearizable,
    clip_to,
    clipped_noise,
    linear_objective,
    make_quadratic,
    make_spec,
    one_point_grad,
    sample_z_mono_origin,
    sample_z_nonmono,
    smoothed_value_mc,
    z_mono_origin_cdf,
    z_mono_origin_inv,
    z_mono_origin_pdf,
    z_nonmono_cdf,
    z_nonmono_inv,
    z_nonmono_pdf,
    zero_objective,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 5)


def random_quadratic(seed, dim, monotone=True):
    rng = np.random.default_rng(seed)
    return make_quadratic(dim, rng, monotone=monotone, concave=bool(rng.integers(2))), rng


class TestQuadraticFamily:
    @given(seeds, dims, st.booleans())
    def test_dr_order(self, seed, d, monotone):
        f, rng = random_quadratic(seed, d, monotone)
        x = rng.uniform(size=(256, d))
        y = x + rng.uniform(size=(256, d)) * (1 - x)
        assert np.all(f.grad(x) >= f.grad(y) - 1e-12)

    @given(seeds, dims)
    def test_monotone_gradient_nonnegative(self, seed, d):
        f, rng = random_quadratic(seed, d, True)
        assert np.all(f.grad(Box(d).sample(rng, 256)) >= -1e-12)
        assert np.all(f.grad(np.ones(d)) >= -1e-12)

    @given(seeds, dims)
    def test_non_monotone_changes_sign(self, seed, d):
        f, _ = random_quadratic(seed, d, False)
        assert np.all(f.grad(np.zeros(d)) > 0)
        assert np.all(f.grad(np.ones(d)) < 0)

    @given(seeds, dims, st.booleans())
    def test_nonnegative_on_body(self, seed, d, monotone):
        f, rng = random_quadratic(seed, d, monotone)
        pts = np.vstack([Box(d).sample(rng, 256), Box(d).vertices()])
        assert np.all(f.value(pts) >= -1e-12)

    @given(seeds, dims, st.booleans())
    def test_up_concavity_sandwich(self, seed, d, monotone):
        f, rng = random_quadratic(seed, d, monotone)
        x = rng.uniform(size=(64, d))
        y = x + rng.uniform(size=(64, d)) * (1 - x)
        diff = f.value(y) - f.value(x)
        lower = np.einsum("ij,ij->i", f.grad(y), y - x)
        upper = np.einsum("ij,ij->i", f.grad(x), y - x)
        assert np.all(lower <= diff + 1e-9)
        assert np.all(diff <= upper + 1e-9)

    def test_constants(self):
        f = QuadraticObjective(np.array([1.0, 2.0]), -np.array([[2.0, 0.0], [0.0, 1.0]]), 0.5)
        assert f.smoothness_L == pytest.approx(2.0)
        assert f.value(np.array([1.0, 1.0])) == pytest.approx(1.0 + 2.0 - 1.5 + 0.5)
        np.testing.assert_allclose(f.grad(np.array([1.0, 1.0])), [-1.0, 1.0])

    def test_pool_matches_members(self, rng):
        objs = [make_quadratic(3, rng) for _ in range(4)]
        pool = ObjectivePool.from_objectives(objs)
        idx = np.array([0, 3, 2, 1, 3])
        pts = rng.uniform(size=(5, 3))
        np.testing.assert_allclose(pool.values(idx, pts), [objs[i].value(p) for i, p in zip(idx, pts)])
        np.testing.assert_allclose(pool.grads(idx, pts), [objs[i].grad(p) for i, p in zip(idx, pts)])

    def test_table_padding_and_rewards(self, rng):
        objs = [linear_objective(np.array([1.0, 0.0])), linear_objective(np.array([0.0, 2.0]))]
        table = ObjectiveTable(ObjectivePool.from_objectives(objs), np.array([[0, 1], [1, 0], [0, 0]]))
        padded = table.padded(5)
        assert padded.index.shape == (5, 2)
        assert np.all(padded.pool.a[padded.index[3:]] == 0)
        pts = np.ones((3, 2, 2))
        # network average of <a, 1> is 1.5, 1.5, 1.0
        np.testing.assert_allclose(table.network_rewards(pts), [[1.5, 1.5], [1.5, 1.5], [1.0, 1.0]])


class TestZLaws:
    def test_mono_inverse_values(self):
        assert z_mono_origin_inv(0.5, 1.0) == pytest.approx(0.62011450695827752, abs=1e-14)
        assert z_mono_origin_inv(0.3, 0.5) == pytest.approx(0.35565022787527127, abs=1e-14)
        assert z_mono_origin_inv(0.0, 1.0) == pytest.approx(0.0, abs=1e-15)
        assert z_mono_origin_inv(1.0, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_nonmono_inverse_values(self):
        assert z_nonmono_inv(0.5) == pytest.approx(0.73508893593264827, abs=1e-14)
        assert z_nonmono_inv(0.0) == 0.0
        assert z_nonmono_inv(1.0) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("gamma", [0.3, 0.5, 1.0])
    def test_mono_density_integrates_to_cdf(self, gamma):
        for z in (0.2, 0.62, 1.0):
            val, _ = integrate.quad(lambda s: z_mono_origin_pdf(s, gamma), 0, z)
            assert val == pytest.approx(z_mono_origin_cdf(z, gamma), abs=1e-12)

    def test_nonmono_density_integrates_to_cdf(self):
        for z in (0.1, 0.735, 1.0):
            val, _ = integrate.quad(z_nonmono_pdf, 0, z)
            assert val == pytest.approx(z_nonmono_cdf(z), abs=1e-12)

    @given(st.floats(0.0, 1.0), st.floats(0.05, 1.0))
    def test_inverse_roundtrip(self, u, gamma):
        assert z_mono_origin_cdf(z_mono_origin_inv(u, gamma), gamma) == pytest.approx(u, abs=1e-12)
        assert z_nonmono_cdf(z_nonmono_inv(u)) == pytest.approx(u, abs=1e-12)

    def test_samples_in_unit_interval(self, rng):
        for z in (sample_z_mono_origin(0.7, rng, 1000), sample_z_nonmono(rng, 1000)):
            assert z.min() >= 0.0 and z.max() <= 1.0


class TestSpecs:
    def test_a1_constants(self):
        s = make_spec("A1")
        assert (s.alpha, s.beta) == (0.5, 0.5)
        s = make_spec("A1", gamma=0.8, curvature=0.5)
        assert s.alpha == pytest.approx(0.64 / 1.32)
        assert s.beta == pytest.approx(0.8 / 1.32)
        assert s.boosted_kind == "BQM" and s.trivial_query

    def test_a2_constants(self):
        s = make_spec("A2", dim=2)
        assert s.alpha == pytest.approx(1 - math.exp(-1))
        assert s.beta == pytest.approx(1 - math.exp(-1))
        s = make_spec("A2", gamma=0.5, dim=2)
        assert s.beta == pytest.approx((1 - math.exp(-0.5)) / 0.5)

    def test_a3_constants(self):
        s = make_spec("A3", anchor=Box(2, 0.25, 1.0).low_anchor())
        assert s.alpha == pytest.approx(0.1875)
        assert s.beta == 0.375
        np.testing.assert_allclose(s.h(np.array([1.0, 0.25])), [0.625, 0.25])
        with pytest.raises(ValueError):
            make_spec("A3")

    def test_query_points(self):
        x = np.array([0.8, 0.4])
        np.testing.assert_allclose(make_spec("A2", dim=2).query_point(0.5, x), [0.4, 0.2])
        a3 = make_spec("A3", anchor=np.array([0.2, 0.2]))
        np.testing.assert_allclose(a3.query_point(0.5, x), [0.35, 0.25])
        np.testing.assert_array_equal(make_spec("A1").query_point(0.3, x), x)


class TestBoosted:
    def test_a1_routes_gradient(self, rng):
        f = QuadraticObjective(np.array([1.0, 2.0]), np.zeros((2, 2)), 0.0)
        g, w = boosted_query(make_spec("A1"), QueryOracle(f, 1, rng=rng), np.array([0.3, 0.3]), rng)
        np.testing.assert_allclose(g, [1.0, 2.0])
        np.testing.assert_array_equal(w, [0.3, 0.3])

    @pytest.mark.parametrize("case", ["A1", "A2", "A3"])
    def test_linear_gives_a(self, case, rng):
        a = np.array([0.5, 1.5])
        f = linear_objective(a)
        spec = make_spec(case, dim=2, anchor=np.zeros(2))
        np.testing.assert_allclose(boosted_grad_exact(spec, f, np.array([0.4, 0.9])), a, atol=1e-12)
        g, _ = boosted_query(spec, QueryOracle(f, 1, rng=rng), np.array([0.4, 0.9]), rng, size=50)
        np.testing.assert_allclose(g, np.tile(a, (50, 1)))

    def test_a3_scalar_example(self):
        # f(x) = x - x^2 on [0, 1], anchor 0, x = 1; the exact value is 1/3
        f = QuadraticObjective(np.array([1.0]), np.array([[-2.0]]), 0.0)
        spec = make_spec("A3", anchor=np.zeros(1))
        for n in (256, 512):
            assert boosted_grad_exact(spec, f, np.array([1.0]), n)[0] == pytest.approx(1 / 3, abs=1e-13)

    def test_a2_scalar_example(self):
        # f(x) = x - x^2 / 2, x = 1: E[1 - z] under the gamma = 1 law
        f = QuadraticObjective(np.array([1.0]), np.array([[-1.0]]), 0.0)
        spec = make_spec("A2", dim=1)
        assert boosted_grad_exact(spec, f, np.array([1.0]))[0] == pytest.approx(0.41802329313067358, abs=1e-13)

    @given(seeds, dims, st.sampled_from(["A2", "A3"]))
    def test_quadrature_converged(self, seed, d, case):
        f, rng = random_quadratic(seed, d, case == "A2")
        spec = make_spec(case, dim=d, anchor=np.zeros(d))
        x = rng.uniform(size=d)
        np.testing.assert_allclose(boosted_grad_exact(spec, f, x, 256), boosted_grad_exact(spec, f, x, 512),
                                   atol=1e-12)

    def test_dimension_mismatch(self, rng):
        f = linear_objective(np.ones(3))
        with pytest.raises(DimensionMismatch):
            boosted_query(make_spec("A1"), QueryOracle(f, 1, rng=rng), np.ones(2), rng)
        with pytest.raises(DimensionMismatch):
            QueryOracle(f, 0, rng=rng)(np.ones(2))

    def test_quadrature_node_floor(self):
        with pytest.raises(ValueError):
            boosted_grad_exact(make_spec("A2", dim=1), linear_objective(np.ones(1)), np.ones(1), 32)


class TestOracles:
    @given(seeds, dims, st.sampled_from([0, 1]), st.floats(0.0, 2.0))
    def test_responses_bounded(self, seed, d, order, sigma):
        f, rng = random_quadratic(seed, d)
        oracle = QueryOracle.for_body(f, order, sigma, Box(d).radius, rng)
        out = oracle(Box(d).sample(rng, 200))
        norms = np.abs(out) if order == 0 else np.linalg.norm(out, axis=1)
        assert np.all(norms <= oracle.bound + 1e-12)

    def test_unbiased(self, rng):
        f = make_quadratic(3, rng)
        x = np.array([0.2, 0.5, 0.7])
        sigma = 0.5
        oracle = QueryOracle.for_body(f, 1, sigma, Box(3).radius, rng)
        g = oracle(np.tile(x, (10_000, 1)))
        assert np.all(np.abs(g.mean(axis=0) - f.grad(x)) <= 4 * sigma / 100)
        oracle0 = QueryOracle.for_body(f, 0, sigma, Box(3).radius, rng)
        v = oracle0(np.tile(x, (10_000, 1)))
        assert abs(v.mean() - f.value(x)) <= 4 * sigma / 100

    def test_scalar_value_for_single_point(self, rng):
        f = linear_objective(np.ones(2))
        assert isinstance(QueryOracle(f, 0, rng=rng)(np.array([0.5, 0.5])), float)

    def test_noise_clip(self, rng):
        xi = clipped_noise(rng, 1.0, (10_000, 2))
        assert np.linalg.norm(xi, axis=1).max() <= 6 * math.sqrt(2) + 1e-12
        np.testing.assert_array_equal(clipped_noise(rng, 0.0, (3, 2)), 0.0)
        np.testing.assert_allclose(clip_to(np.array([[3.0, 4.0]]), 1.0), [[0.6, 0.8]])


class TestLinearizable:
    @pytest.mark.parametrize("case", ["A1", "A2"])
    def test_same_point_margin(self, case, rng):
        f = make_quadratic(2, rng)
        spec = make_spec(case, dim=2)
        x = np.array([0.3, 0.6])
        assert check_linearizable(spec, f, x, x) == pytest.approx((1 - spec.alpha) * f.value(x), abs=1e-12)

    @given(seeds, dims, st.sampled_from(["A1", "A2", "A3"]))
    def test_margin_nonnegative(self, seed, d, case):
        f, rng = random_quadratic(seed, d, case != "A3")
        spec = make_spec(case, dim=d, anchor=np.zeros(d))
        x, y = Box(d).sample(rng, 2)
        assert check_linearizable(spec, f, x, y) >= -1e-7

    def test_linear_concave_margin(self, rng):
        f = linear_objective(np.array([0.3, 0.8]), 0.1)
        spec = make_spec("A1")
        for x, y in rng.uniform(size=(50, 2, 2)):
            assert check_linearizable(spec, f, x, y) >= 0


class TestSmoothing:
    def test_one_point_arithmetic(self):
        np.testing.assert_allclose(one_point_grad(2.0, [-1.0], 1, 0.1), [-20.0])
        np.testing.assert_array_equal(one_point_grad(0.0, [0.6, 0.8], 2, 0.1), [0.0, 0.0])
        with pytest.raises(ValueError):
            one_point_grad(1.0, [1.0], 1, 0.0)

    def test_linear_estimator_mean(self):
        rng = np.random.default_rng(3)
        a = np.array([0.7, -0.4])
        f = linear_objective(a, 1.0)
        x = np.array([0.5, 0.5])
        delta, n = 0.1, 100_000
        from ulmax.geometry import sample_sphere_subspace

        v = sample_sphere_subspace(np.eye(2), rng, n)
        est = one_point_grad(f.value(x + delta * v)[:, None], v, 2, delta)
        b0 = float(np.max(np.abs(f.value(Box(2).vertices()))))
        assert np.all(np.abs(est.mean(axis=0) - a) <= 3 * (2 * b0 / delta) / math.sqrt(n))

    def test_smoothed_value(self, rng):
        f = linear_objective(np.array([1.0, 2.0]), 0.5)
        x = np.array([0.4, 0.4])
        assert smoothed_value_mc(f, x, 0.0, np.eye(2), 10, rng) == f.value(x)
        assert smoothed_value_mc(f, x, 0.1, np.eye(2), 100_000, rng) == pytest.approx(f.value(x), abs=2e-3)
        g = make_quadratic(2, rng)
        est = smoothed_value_mc(g, x, 0.1, np.eye(2), 100_000, rng)
        assert abs(est - g.value(x)) <= 0.1 * g.lipschitz_M1(Box(2).radius) + 1e-3

    def test_zero_objective(self):
        z = zero_objective(3)
        assert z.value(np.ones(3)) == 0.0
