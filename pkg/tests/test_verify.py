import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gammasde import GammaParams, VolatilityFn, log_density, substream
from gammasde.driver import sample_jump_batch
from gammasde.likelihood import log_density_batch
from gammasde.sde import JumpPath, solve_batch
from gammasde.verify import (REFERENCE, McEstimate, check_martingale, check_transfer,
                             doleans_product, ess, exponent, f_forward, f_reverse, hill_estimator,
                             moment_sanity, run_blocks, run_suite, segment_exponents,
                             segment_log_densities, segmentation_plan, SuiteConfig, report_json)
from oracles import f_forward_quad, f_reverse_quad, min_N_scan


def test_f_values(unit):
    assert f_forward(unit, 1.0) == 0.0
    assert f_reverse(unit, 1.0) == 0.0
    assert f_forward(unit, 2.0) == pytest.approx(0.3068528, abs=1e-7)
    assert f_reverse(unit, 2.0) == pytest.approx(0.1931472, abs=1e-7)
    assert f_forward(GammaParams(3.0, 1.0), 2.0) == pytest.approx(3 * (1 - math.log(2)))
    with pytest.raises(ValueError):
        f_forward(unit, 0.0)
    with pytest.raises(ValueError):
        f_reverse(unit, -1.0)


@pytest.mark.parametrize("s", [0.5, 0.9, 2.0, 5.0])
@pytest.mark.parametrize("a,b", [(1.0, 1.0), (2.0, 0.5)])
def test_f_quadrature(s, a, b):
    p = GammaParams(a, b)
    assert f_forward(p, s) == pytest.approx(f_forward_quad(a, b, s), abs=1e-8)
    assert f_reverse(p, s) == pytest.approx(f_reverse_quad(a, b, s), abs=1e-8)


def test_f_duality(unit):
    s = np.random.default_rng(3).uniform(0.05, 20, 100)
    np.testing.assert_allclose(f_reverse(unit, s), f_forward(unit, 1 / s), rtol=0, atol=1e-14)


def test_f_convexity_grid(unit):
    grid = np.round(np.arange(0.1, 10.0 + 1e-9, 0.01), 10)
    for f in (f_forward, f_reverse):
        vals = f(unit, grid)
        assert np.all(vals >= 0)
        zero = np.flatnonzero(vals == 0)
        assert grid[zero].tolist() == [1.0]
    assert np.all(np.diff(f_forward(unit, grid), 2) > 0)
    # f_reverse'' = alpha (2 - s) / s^3: convex only below 2, but convex in log s everywhere
    d2 = np.diff(f_reverse(unit, grid), 2)
    mid = grid[1:-1]
    assert np.all(d2[mid < 1.99] > 0) and np.all(d2[mid > 2.01] < 0)
    u = np.linspace(np.log(0.1), np.log(10), 999)
    assert np.all(np.diff(f_reverse(unit, np.exp(u)), 2) > 0)


def test_segmentation_examples():
    plan = segmentation_plan(GammaParams(1, 1), VolatilityFn.constant(1.0), 1.0)
    assert plan.forward_threshold == 1.0 and plan.reverse_threshold == 0.5
    assert plan.N == 2 and plan.delta == 0.5
    v = VolatilityFn.constant(3.0)
    plan = segmentation_plan(GammaParams(2.0, 0.5), v, 1.0)
    assert plan.forward_threshold == 12.0 and plan.N == 13
    b = plan.boundaries
    assert b[0] == 0 and b[-1] == pytest.approx(1.0) and np.all(np.diff(b) > 0)
    assert plan.windows[-1][1] == 1.0


def test_segmentation_linear_in_T():
    # thresholds double with T; N follows up to the integer floor
    v = VolatilityFn.constant(1.0)
    p = GammaParams(1.3, 0.7)
    for T in (0.5, 1.0, 3.7, 10.0):
        a, b = segmentation_plan(p, v, T), segmentation_plan(p, v, 2 * T)
        assert b.forward_threshold == pytest.approx(2 * a.forward_threshold)
        assert b.reverse_threshold == pytest.approx(2 * a.reverse_threshold)
        assert 2 * a.N - 2 <= b.N <= 2 * a.N


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 5), st.floats(0.1, 5), st.floats(1.0, 5), st.floats(0.1, 10))
def test_segmentation_minimal(a, b, K, T):
    v = VolatilityFn.constant(K)
    plan = segmentation_plan(GammaParams(a, b), v, T)
    assert plan.N == min_N_scan(a, b, K, T)
    assert plan.N > a * K * T / b and plan.delta < 2 / (a * T)


def test_exponent_additivity(unit, two_level, affine):
    d = sample_jump_batch(unit, 4.0, 1e-3, 10, substream(3))
    for v in (two_level, affine):
        paths = solve_batch(v, d)
        plan = segmentation_plan(unit, v, 4.0)
        for i in range(paths.n):
            path = paths.path(i)
            for rev in (False, True):
                parts = segment_exponents(plan, v, path, unit, reverse=rev)
                assert parts.sum() == pytest.approx(exponent(v, path, unit, reverse=rev),
                                                    rel=1e-12, abs=1e-14)
            assert segment_log_densities(plan, v, path, unit).sum() == pytest.approx(
                log_density(v, path, unit).log_Z, rel=1e-12, abs=1e-12)


def test_exponent_constant(unit):
    path = JumpPath.from_observed(2.0, [0.5], [1.0])
    assert exponent(VolatilityFn.constant(2.0), path, unit) == pytest.approx(2 * (1 - math.log(2)))


def test_doleans(unit, affine):
    d = sample_jump_batch(unit, 1.0, 1e-4, 100, substream(4))
    paths = solve_batch(affine, d)
    for i in range(paths.n):
        path = paths.path(i)
        assert doleans_product(affine, path, unit) == pytest.approx(
            math.exp(log_density(affine, path, unit).log_Z), rel=1e-8)


def test_mc_estimate_and_ess():
    e = McEstimate.of(np.array([1.0, 2.0, 3.0, 4.0]), 7)
    assert e.mean == 2.5 and e.n == 4 and e.seed == 7
    assert e.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert ess(np.ones(50)) == pytest.approx(50)
    assert ess(np.array([1.0, 0, 0, 0])) == pytest.approx(1)
    with pytest.raises(ValueError):
        McEstimate.of(np.array([1.0]), 0)


def test_run_blocks_thread_independent():
    def fn(rng, size):
        return {"u": rng.random(size)}
    a = run_blocks(fn, 25_000, 11, 3, threads=1)["u"]
    b = run_blocks(fn, 25_000, 11, 3, threads=4)["u"]
    assert a.size == 25_000
    np.testing.assert_array_equal(a, b)


def test_martingale_reference_exact(unit):
    chk = check_martingale(REFERENCE, unit, 1.0, 1000, 1e-3, seed=1)
    assert chk.estimate.mean == 1.0 and chk.estimate.stderr == 0.0
    assert chk.passed


@pytest.mark.parametrize("c", [0.5, 2.0])
def test_martingale_constant(unit, c):
    chk = check_martingale(VolatilityFn.constant(c), unit, 1.0, 100_000, 1e-3, seed=2024)
    assert chk.passed, (chk.estimate, chk.band)
    assert chk.ess_ok


def test_martingale_affine_and_reverse(unit, affine):
    assert check_martingale(affine, unit, 1.0, 100_000, 1e-3, seed=5).passed
    assert check_martingale(affine, unit, 1.0, 50_000, 1e-3, seed=6, reverse=True).passed
    assert check_martingale(VolatilityFn.constant(2.0), unit, 1.0, 50_000, 1e-3, seed=6,
                            reverse=True).passed


def test_jensen_sign(unit):
    d = sample_jump_batch(unit, 1.0, 1e-3, 20_000, substream(8))
    lz = log_density_batch(VolatilityFn.constant(2.0), solve_batch(REFERENCE, d), unit)
    assert lz.mean() < 0


def test_transfer_reference_pathwise(unit):
    t = check_transfer(REFERENCE, unit, 1.0, "terminal", 2000, 1e-3, seed=3)
    assert t.direct.mean == t.weighted.mean and t.paired_stderr == 0.0


def test_transfer_constant_terminal(unit):
    c = 2.0
    t = check_transfer(VolatilityFn.constant(c), unit, 1.0, "terminal", 50_000, 1e-3, seed=4)
    assert t.passed
    # truncated mean of c L_T
    target = c * math.exp(-1e-3)
    assert abs(t.direct.mean - target) <= 3 * t.direct.stderr
    assert abs(t.weighted.mean - target) <= 3 * t.weighted.stderr + 0.01


@pytest.mark.parametrize("g", ["terminal", "log1p_terminal", "jump_count_above"])
def test_transfer_affine(unit, affine, g):
    assert check_transfer(affine, unit, 1.0, g, 50_000, 1e-3, seed=9).passed


def test_transfer_unknown(unit):
    with pytest.raises(ValueError):
        check_transfer(REFERENCE, unit, 1.0, "nope", 200, 1e-3, seed=1)


@pytest.mark.parametrize("c", [1.0, 2.0])
def test_moment_sanity_constant(unit, c):
    m = moment_sanity(VolatilityFn.constant(c), unit, 1.0, 50_000, 1e-3, seed=12)
    assert m.passed
    target = c * c * 1.0 * (1 + 1.0)
    assert abs(m.large.mean - target) <= 3 * m.large.stderr + 0.01


def test_moment_sanity_affine(unit, affine):
    m = moment_sanity(affine, unit, 1.0, 20_000, 1e-3, seed=13)
    assert m.passed and math.isfinite(m.large.mean) and m.hill_index > 1


def test_hill_estimator():
    x = 1.0 / np.random.default_rng(0).random(200_000) ** (1 / 3.0)  # Pareto(3)
    assert hill_estimator(x, 2000) == pytest.approx(3.0, rel=0.1)


def test_seed_determinism(unit, affine):
    a = check_martingale(affine, unit, 1.0, 12_000, 1e-3, seed=77, threads=1)
    b = check_martingale(affine, unit, 1.0, 12_000, 1e-3, seed=77, threads=3)
    assert a.estimate == b.estimate and a.ess == b.ess
    c = check_martingale(affine, unit, 1.0, 12_000, 1e-3, seed=78)
    assert c.estimate.mean != a.estimate.mean


def test_suite_small():
    rep = run_suite(SuiteConfig(n=2000, eps=1e-3))
    names = [c["name"] for c in rep["checks"]]
    assert len(names) == len(set(names))
    for c in rep["checks"]:
        assert set(c) >= {"name", "estimate", "stderr", "band", "pass"}
    json.loads(report_json(rep))
