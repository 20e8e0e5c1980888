import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlkg_lab.errors import ConfigurationError
from nlkg_lab.fields import Grid1D, energy_norm_sq
from nlkg_lab.shooting import (TubeParams, build_problem, chi, decompose, default_omega, exit_time, ground_train,
                               initial_data, separation_time, theta_from_target, tube_check)

GRID = Grid1D(40.0, 512, "periodic", "spectral")


@pytest.fixture(scope="module")
def problem():
    return build_problem(ground_train([-0.3, 0.3], 3.0, GRID), GRID)


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5))
def test_cutoff_shape(s):
    c = float(chi(s))
    assert 0.0 <= c <= 1.0
    assert c == pytest.approx(float(chi(-s)))
    if abs(s) <= 1:
        assert c == 1.0
    if abs(s) >= 2:
        assert c == 0.0
    assert float(chi(abs(s) + 0.01)) <= c + 1e-15


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(1.5, 5.0), st.floats(0, 50))
def test_tube_rates_order(omega, p0, t):
    tube = TubeParams(omega, p0)
    thr = tube.thresholds(t)
    # a^± decays fastest, then W, then b
    assert thr["a_plus"] <= thr["W"] <= thr["b"] <= 1.0
    assert tube.a_rate == pytest.approx((p0 + 2) * omega / 3)


def test_default_omega_value(problem):
    rate = math.sqrt(3.0) * math.sqrt(1 - 0.3**2)
    assert default_omega([rate, rate]) == pytest.approx(0.25 * rate * 3 / 8)
    assert problem.tube.omega == pytest.approx(0.25 * rate * 3 / 8)
    with pytest.raises(ConfigurationError):
        TubeParams(0.7, 3.0).check_transversality(rate)


def test_separation_time_and_horizon(problem):
    assert problem.T0 == pytest.approx(17.25)
    assert problem.S0 == pytest.approx(problem.T0 + 15.0)
    assert separation_time(problem.frame, tol=1e-2) < problem.T0
    assert problem.ball_dim == 2


@settings(max_examples=10, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1))
def test_modulation_round_trip(problem, a1, a2):
    frak = np.array([a1, a2]) / max(1.0, math.hypot(a1, a2))
    S0 = problem.S0
    theta = theta_from_target(frak, S0, problem.frame, problem.tube)
    d = decompose(initial_data(problem.frame, S0, theta), problem.frame, S0)
    thr = math.exp(-problem.tube.a_rate * S0)
    assert np.max(np.abs(d.a_plus / thr - frak)) < 1e-7
    assert np.max(np.abs(d.a_minus / thr)) < 1e-7
    assert tube_check(d, problem.tube).inside or np.linalg.norm(frak) >= 1 - 1e-12


def test_pure_train_decomposes_to_zero(problem):
    S0 = problem.S0
    d = decompose(initial_data(problem.frame, S0, np.zeros(4)), problem.frame, S0)
    assert math.sqrt(energy_norm_sq(d.W)) < 1e-10
    assert np.linalg.norm(d.b) < 1e-8


def test_wrong_parameter_dimension(problem):
    with pytest.raises(ConfigurationError):
        theta_from_target([0.1, 0.2, 0.3], problem.S0, problem.frame, problem.tube)


@pytest.mark.parametrize("angle", [0.0, 2.0])
def test_boundary_candidates_exit_through_a_plus(problem, angle):
    frak = np.array([math.cos(angle), math.sin(angle)])
    res = exit_time(frak, problem)
    assert res.status == "a_plus"
    assert problem.T0 < res.S_star <= problem.S0
    assert res.dA_dt < 0
    # the exit map returns a point on the unit sphere
    assert np.linalg.norm(res.M) == pytest.approx(1.0, abs=0.05)


def test_sample_step_must_divide(problem):
    with pytest.raises(ConfigurationError):
        build_problem(problem.spec, GRID, dt=0.005, sample_dt=0.0123)


def test_zcal_is_block_diagonal_up_to_tail_overlap(problem):
    from nlkg_lab.shooting import _interleaved_Z, _pair

    S0 = problem.S0
    Z = _interleaved_Z(problem.frame, problem.frame.at(S0))
    Zcal = _pair(GRID, Z, Z)
    scale = np.abs(Zcal).max()
    # the cross blocks are set by the sech-tail overlap at separation 0.6·S0, not by e^{-10ωS0}
    sep = 0.6 * S0
    assert np.abs(Zcal[:2, 2:]).max() <= 10 * sep * math.exp(-sep) * scale
    assert np.allclose(Zcal[:2, :2], Zcal[2:, 2:], rtol=1e-8)
