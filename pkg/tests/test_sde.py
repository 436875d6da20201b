import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from gammasde import (GammaParams, JumpPath, VolatilityFn, sample_jump_series, solve_euler,
                      solve_jumpwise)
from gammasde.driver import DriverJumps, sample_jump_batch
from gammasde.rng import substream
from gammasde.sde import read_jump_path, solve_batch, solve_euler_batch, write_jump_path


def _single_jump_driver(t=0.5, dl=2.0, T=1.0):
    return DriverJumps(T, np.array([t]), np.array([dl]), eps=0.0)


def test_identity_reproduces_driver(unit, rng):
    d = sample_jump_series(unit, 2.0, 1e-3, False, rng)
    path = solve_jumpwise(VolatilityFn.constant(1.0), d)
    np.testing.assert_array_equal(path.x_jumps, d.sizes)
    np.testing.assert_array_equal(path.l_jumps, d.sizes)
    assert path.terminal == d.terminal


@pytest.mark.parametrize("c", [2.0, 0.5, 0.25])
def test_constant_scaling_exact(unit, rng, c):
    d = sample_jump_series(unit, 3.0, 1e-3, False, rng)
    path = solve_jumpwise(VolatilityFn.constant(c), d)
    assert path.terminal == c * d.terminal


def test_constant_scaling_roundoff(unit, rng):
    d = sample_jump_series(unit, 3.0, 1e-3, False, rng)
    path = solve_jumpwise(VolatilityFn.constant(3.0), d)
    assert path.terminal == pytest.approx(3.0 * d.terminal, rel=1e-13)


def test_single_jump_hand_computation(two_level):
    path = solve_jumpwise(two_level, _single_jump_driver())
    assert path.pre_states.tolist() == [0.0]
    assert path.x_jumps.tolist() == [4.0]
    assert path.terminal == 4.0


def test_compensated_driver_rejected(unit, rng, affine):
    d = sample_jump_series(unit, 1.0, 0.01, True, rng)
    with pytest.raises(ValueError):
        solve_jumpwise(affine, d)


def test_path_invariants(two_level, unit):
    d = sample_jump_batch(unit, 5.0, 1e-3, 20, substream(8))
    paths = solve_batch(two_level, d)
    for i in range(paths.n):
        p = paths.path(i)
        np.testing.assert_array_equal(p.pre_states, np.concatenate([[0.0], np.cumsum(p.x_jumps)[:-1]]))
        np.testing.assert_allclose(p.x_jumps, two_level(p.pre_states) * p.l_jumps, rtol=1e-15)
        assert p.terminal == pytest.approx(p.x_jumps.sum(), rel=1e-14)
        # reconstruction of driver jumps from the X path alone
        np.testing.assert_allclose(p.x_jumps / two_level(p.pre_states), p.l_jumps, rtol=1e-12)
        grid = np.linspace(0, 5, 300)
        assert np.all(np.diff(p.value(grid)) >= 0)
        assert p.value(0.0) == 0.0 and p.value(5.0) == p.terminal


def test_predictable_evaluation_uses_pre_jump_state():
    # first jump lands on the edge; the second jump must use the post-edge value
    v = VolatilityFn.piecewise([0.0, 1.0], [1.0, 5.0])
    d = DriverJumps(1.0, np.array([0.2, 0.6]), np.array([1.0, 1.0]), eps=0.0)
    path = solve_jumpwise(v, d)
    assert path.x_jumps.tolist() == [1.0, 5.0]


def test_scaling_covariance_ks(unit):
    c = 3.0
    d = sample_jump_batch(unit, 1.0, 1e-4, 10**4, substream(31))
    paths = solve_batch(VolatilityFn.constant(c), d)
    assert stats.kstest(paths.terminal / c, stats.gamma(1.0).cdf).pvalue > 0.01


def test_euler_constant_sigma_exact_law(unit):
    xs, _ = solve_euler_batch(VolatilityFn.constant(1.0), unit, 2.0, 8, 10**4, substream(4))
    assert stats.kstest(xs[:, -1], stats.gamma(2.0).cdf).pvalue > 0.01


def test_euler_one_step_closed_form(two_level, unit):
    g = solve_euler(two_level, unit, 1.0, 1, substream(6))
    assert g.X_T == 2.0 * g.increments[0]
    assert g.values[0] == 0.0 and g.times.tolist() == [0.0, 1.0]


def test_euler_monotone(affine, unit):
    g = solve_euler(affine, unit, 1.0, 64, substream(6))
    assert np.all(np.diff(g.values) >= 0)


def _euler_mean(m, b=0.1, mu=1.0):
    # E[X_T] of the grid scheme for sigma = 1 + b x: linear recursion of the mean
    return ((1 + b * mu / m) ** m - 1) / b


@pytest.mark.slow
def test_euler_mean_convergence(affine, unit):
    n = 10**5
    est = {}
    for m in (16, 256):
        xs, _ = solve_euler_batch(affine, unit, 1.0, m, n, substream(40, m))
        x = xs[:, -1]
        est[m] = (x.mean(), x.std(ddof=1) / math.sqrt(n))
        assert abs(est[m][0] - _euler_mean(m)) <= 3 * est[m][1]
    allowance = abs(_euler_mean(16) - _euler_mean(256))
    se = math.hypot(est[16][1], est[256][1])
    assert abs(est[16][0] - est[256][0]) <= 3 * se + allowance
    # jumpwise reference with eps = 1e-4: truncated mean rate exp(-eps)
    eps = 1e-4
    d = sample_jump_batch(unit, 1.0, eps, n, substream(41))
    xj = solve_batch(affine, d).terminal
    exact_trunc = (math.exp(0.1 * math.exp(-eps)) - 1) / 0.1
    assert abs(xj.mean() - exact_trunc) <= 3 * xj.std(ddof=1) / math.sqrt(n)
    # grid means approach the continuous-time mean from below as m grows
    assert _euler_mean(16) < _euler_mean(256) < (math.exp(0.1) - 1) / 0.1


def test_csv_round_trip_bit_exact(tmp_path, affine, unit):
    path = solve_jumpwise(affine, sample_jump_series(unit, 2.0, 1e-3, False, substream(3)))
    f = write_jump_path(path, tmp_path / "p.csv", {"seed": 3, "params": unit.to_dict()})
    assert f.read_text().splitlines()[0] == "time,x_jump,l_jump,pre_state"
    back = read_jump_path(f)
    for name in ("times", "x_jumps", "l_jumps", "pre_states"):
        assert getattr(back, name).tobytes() == getattr(path, name).tobytes()
    assert back.terminal == path.terminal
    assert back.T == 2.0
    assert back.meta["seed"] == 3


def test_read_minimal_csv(tmp_path):
    f = tmp_path / "obs.csv"
    f.write_text("time,x_jump\n0.2,0.5\n0.7,1.0\n")
    p = read_jump_path(f, T=1.0)
    assert p.pre_states.tolist() == [0.0, 0.5]
    assert p.terminal == 1.5
    assert np.isnan(p.l_jumps).all()
    with pytest.raises(ValueError):
        read_jump_path(f)  # no sidecar, no T


def test_read_missing_file(tmp_path):
    with pytest.raises(OSError, match="missing.csv"):
        read_jump_path(tmp_path / "missing.csv", T=1.0)


def test_from_observed_tie_stable():
    p = JumpPath.from_observed(1.0, [0.5, 0.5, 0.2], [1.0, 2.0, 3.0])
    assert p.x_jumps.tolist() == [3.0, 1.0, 2.0]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.1, 5.0), st.floats(0.0, 2.0))
def test_affine_paths_monotone_property(seed, a, b):
    v = VolatilityFn.affine(a, b)
    d = sample_jump_batch(GammaParams(1.0, 1.0), 1.0, 0.01, 3, substream(seed))
    paths = solve_batch(v, d)
    for i in range(paths.n):
        xs = paths.path(i).x_jumps
        assert np.all(xs > 0)
        assert np.all(np.diff(np.concatenate([[0.0], np.cumsum(xs)])) > 0)
