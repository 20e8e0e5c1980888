import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.special import beta as beta_fn

from nlkg_lab.bound_states import (Nonlinearity, SandboxPotential, action_W, decay_rate_fit, elliptic_residual,
                                   ground_state_closed_form, lq_q_pairing, sandbox_depth_for_kbar,
                                   solve_bound_state_newton)
from nlkg_lab.errors import DomainError
from nlkg_lab.fields import Grid1D, ScalarField

GRID = Grid1D(30.0, 512)


def action_oracle(p):
    """Action of the closed-form ground state by adaptive quadrature."""
    a = ((p + 1) / 2) ** (1 / (p - 1))
    k = (p - 1) / 2
    q = lambda x: a / math.cosh(k * x) ** (2 / (p - 1))
    dq = lambda x: -a * math.tanh(k * x) * k * (2 / (p - 1)) / math.cosh(k * x) ** (2 / (p - 1))
    e = quad(lambda x: 0.5 * (dq(x) ** 2 + q(x) ** 2) - q(x) ** (p + 1) / (p + 1), -60.0, 60.0, limit=400)[0]
    return e


@pytest.mark.parametrize("p", [3.0, 5.0, 2.5])
def test_closed_form_solves_the_elliptic_equation(p):
    grid = Grid1D(30.0, 1024)
    bs = ground_state_closed_form(p, grid)
    assert np.max(np.abs(elliptic_residual(bs.profile.values, bs.nonlinearity, grid))) < 1e-8
    assert action_W(bs.profile, bs.nonlinearity) == pytest.approx(action_oracle(p), rel=1e-9)


def test_action_for_cubic_is_four_thirds():
    bs = ground_state_closed_form(3.0, GRID)
    assert action_W(bs.profile, bs.nonlinearity) == pytest.approx(4.0 / 3.0, abs=1e-10)
    # ∫ q² = 4 for q = √2 sech
    assert GRID.spacing * np.sum(bs.profile.values ** 2) == pytest.approx(4.0, abs=1e-10)


def test_newton_recovers_the_profile_from_a_perturbed_guess():
    bs = ground_state_closed_form(3.0, GRID)
    guess = ScalarField(GRID, 1.1 * bs.profile.values * (1 + 0.05 * np.exp(-GRID.x ** 2)))
    out = solve_bound_state_newton(guess, bs.nonlinearity, tol=1e-11)
    assert np.max(np.abs(out.profile.values - bs.profile.values)) < 1e-8
    assert out.residual_norm < 1e-10


def test_decay_rate_is_one():
    bs = ground_state_closed_form(3.0, GRID)
    assert decay_rate_fit(bs.profile) == pytest.approx(1.0, abs=1e-6)


def test_lq_pairing_sign():
    # (L q, q) = -(p - 1) ∫ q^{p+1} < 0; for p = 3 this is -2 * 16/3 * ... computed by quadrature
    bs = ground_state_closed_form(3.0, GRID)
    oracle = -2.0 * quad(lambda x: (math.sqrt(2) / math.cosh(x)) ** 4, -40, 40)[0]
    assert lq_q_pairing(bs.profile, bs.nonlinearity) == pytest.approx(oracle, rel=1e-8)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.2, 7.0), st.floats(-3.0, 3.0))
def test_nonlinearity_is_consistent(p, u):
    nl = Nonlinearity(p)
    h = 1e-6
    assert nl.f(np.array(u)) == pytest.approx(abs(u) ** (p - 1) * u, rel=1e-12, abs=1e-300)
    dF = (nl.F(np.array(u + h)) - nl.F(np.array(u - h))) / (2 * h)
    assert dF == pytest.approx(nl.f(np.array(u)), rel=1e-5, abs=1e-6)
    assert nl.F(np.array(-u)) == pytest.approx(nl.F(np.array(u)))


def test_nonlinearity_rejects_p_at_most_one():
    with pytest.raises((DomainError, ValueError)):
        Nonlinearity(1.0)


def poschl_teller_count(depth):
    """Negative eigenvalues of -d² + 1 - depth·sech²: levels 1 - (ν - n)², ν(ν+1) = depth."""
    nu = 0.5 * (-1 + math.sqrt(1 + 4 * depth))
    return sum(1 for n in range(int(nu) + 1) if n < nu and (nu - n) ** 2 > 1)


@pytest.mark.parametrize("kbar", [1, 2, 3])
def test_sandbox_depth_realizes_kbar(kbar):
    depth = sandbox_depth_for_kbar(kbar)
    assert poschl_teller_count(depth) == kbar
    SandboxPotential(depth)


def test_sandbox_rejects_bad_depth():
    with pytest.raises(DomainError):
        SandboxPotential(-1.0)
