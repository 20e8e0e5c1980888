"""The ten acceptance checks, shared by the ``verify-all`` subcommand and the test suite.

Each check returns a CriterionResult whose ``detail`` holds the measured
numbers. Checks never relax their thresholds; a check that cannot be met
reports ``passed = False`` with the measurements that show why.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bound_states import (SandboxPotential, ground_state_closed_form, sandbox_depth_for_kbar,
                           solve_bound_state_newton)
from .coercivity import (coercivity_H, coercivity_L, coercivity_prop, necessity_checks,
                         proof_diagnostics)
from .evolution import (EvolutionConfig, TrainEntry, TrainSpec, evolve, linearized_evolve, log_slope,
                        soliton_train_state)
from .fields import Grid1D, ScalarField, StateVector, energy_norm_sq, inner_pair
from .linear_spectrum import (BoostFrame, assemble_L, h_negative_count, negative_spectrum, spectral_bundle,
                              verify_eigenrelation)
from .shooting import (build_problem, decompose, ground_train, initial_data, modulation_ode_check,
                       monitor_constants, shoot, theta_from_target)

SWEEP_BETAS = (-0.8, -0.6, -0.3, 0.0, 0.3, 0.5, 0.6, 0.8)
SANDBOX_KBARS = (2, 3)
SANDBOX_BETAS = (0.0, 0.5)
NECESSITY_TOL = 1e-10


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:2d} [{tag}] {self.title}: {_short(self.detail)}"


def _short(d):
    parts = []
    for k, v in d.items():
        if isinstance(v, float):
            parts.append(f"{k}={v:.3e}")
        elif isinstance(v, (bool, int)) or (isinstance(v, str) and len(v) <= 60):
            parts.append(f"{k}={v}")
    return ", ".join(parts)


def _timed(number, title):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t = time.perf_counter()
            passed, detail = fn(*args, **kwargs)
            return CriterionResult(number, title, bool(passed), detail, time.perf_counter() - t)
        return run
    return wrap


@_timed(1, "bound-state fidelity")
def criterion_1():
    t = time.perf_counter()
    grid = Grid1D(40.0, 4096)
    q = ground_state_closed_form(3.0, grid)
    guess = ScalarField(grid, 1.1 * q.profile.values)
    bs = solve_bound_state_newton(guess, q.nonlinearity)
    err = float(np.max(np.abs(bs.profile.values - q.profile.values)))
    elapsed = time.perf_counter() - t
    ok = q.residual_norm <= 1e-8 and err <= 1e-7 and elapsed < 5.0
    return ok, {"residual": q.residual_norm, "newton_linf_error": err, "runtime_s": elapsed}


@_timed(2, "spectrum of L")
def criterion_2():
    t = time.perf_counter()
    grid = Grid1D(40.0, 2048)
    q = ground_state_closed_form(3.0, grid)
    spec = negative_spectrum(assemble_L(q, grid))
    elapsed = time.perf_counter() - t
    dq = grid.apply_derivative(q.profile.values)
    h = grid.spacing
    dq = dq / math.sqrt(h * dq @ dq)
    kern_err = float("inf")
    if len(spec.kernel) == 1:
        k = spec.kernel[0].values
        kern_err = float(min(math.sqrt(h * (k - dq) @ (k - dq)), math.sqrt(h * (k + dq) @ (k + dq))))
    lam_err = abs(-spec.eigenvalues[0] - 3.0) if spec.eigenvalues.size else float("inf")
    ok = spec.eigenvalues.size == 1 and lam_err <= 2e-4 and len(spec.kernel) == 1 and kern_err <= 1e-4 and elapsed < 30
    return ok, {"negative_count": int(spec.eigenvalues.size), "lambda_sq_error": float(lam_err),
                "kernel_dim": len(spec.kernel), "kernel_vs_dq": kern_err, "runtime_s": elapsed}


@_timed(3, "eigenrelation and H-orthogonality")
def criterion_3(betas=(0.0, 0.3, 0.6, 0.8)):
    grid = Grid1D(40.0, 2048)
    q = ground_state_closed_form(3.0, grid)
    worst_res, worst_ortho, ok = 0.0, 0.0, True
    for beta in betas:
        b = spectral_bundle(q, grid, BoostFrame(beta), with_upsilons=False)
        rep = verify_eigenrelation(b)
        worst_res = max(worst_res, float(rep.residual_plus.max()), float(rep.residual_minus.max()))
        worst_ortho = max(worst_ortho, float(rep.ortho_plus.max()), float(rep.ortho_minus.max()))
        ok &= rep.passed
    ok &= worst_res <= 1e-6 and worst_ortho <= 1e-6
    return ok, {"max_residual": worst_res, "max_orthogonality": worst_ortho}


@functools.lru_cache(maxsize=1)
def _sweep_cases():
    """(label, source, grid, beta) for the ground-state and sandbox sweeps."""
    cases = []
    g = Grid1D(40.0, 512, "periodic", "spectral")
    q = ground_state_closed_form(3.0, g)
    for beta in SWEEP_BETAS:
        cases.append((f"ground beta={beta:+.1f}", q, g, beta, 1))
    gs = Grid1D(25.0, 512)
    for kb in SANDBOX_KBARS:
        sb = SandboxPotential(sandbox_depth_for_kbar(kb))
        for beta in SANDBOX_BETAS:
            cases.append((f"sandbox kbar={kb} beta={beta:+.1f}", sb, gs, beta, kb))
    return tuple(cases)


@functools.lru_cache(maxsize=1)
def _sweep_bundles():
    return tuple((label, spectral_bundle(src, g, BoostFrame(beta)), kb) for label, src, g, beta, kb in _sweep_cases())


@_timed(4, "negative-direction count of H")
def criterion_4():
    bad = []
    for label, b, kb in _sweep_bundles():
        mbar, _, _ = h_negative_count(b.H)
        if not (b.kbar == kb and mbar == b.kbar):
            bad.append(f"{label}: kbar={b.kbar} mbar={mbar}")
    return not bad, {"cases": len(_sweep_bundles()), "mismatches": "; ".join(bad) or "none"}


@_timed(5, "coercivity, necessity and proof diagnostics")
def criterion_5():
    min_c, worst_ident, max_a = float("inf"), 0.0, 0.0
    nonneg_families, a_failures = [], []
    for label, b, _ in _sweep_bundles():
        g = b.grid
        cL = coercivity_L(assemble_L(b.source, g), b.phis, b.kernel, g).constant_c
        cH = coercivity_H(b.H, b.Upsilons, b.Phi0).constant_c
        cP = coercivity_prop(b.H, b.Z_plus, b.Z_minus, b.Phi0).constant_c
        min_c = min(min_c, cL, cH, cP)
        nec = necessity_checks(b, NECESSITY_TOL)
        families = {"L_without_phi": True, "H_without_upsilon": True, "prop_without_Z": True,
                    "L_without_kernel": b.ellbar > 0, "H_without_phi0": b.ellbar > 0,
                    "prop_without_phi0": b.ellbar > 0}
        for key, applicable in families.items():
            if applicable and not nec[key] < -NECESSITY_TOL:
                nonneg_families.append(f"{label}:{key}={nec[key]:.1e}")
        pd = proof_diagnostics(b)
        worst_ident = max(worst_ident, pd.gram_identity_plus, pd.gram_identity_minus)
        if not pd.a_constant < 1:
            a_failures.append(f"{label}: a={pd.a_constant:.6g}")
        else:
            max_a = max(max_a, pd.a_constant)
    ok = min_c >= 1e-3 and not nonneg_families and not a_failures and worst_ident <= 1e-8
    return ok, {"min_constant": min_c, "max_gram_identity_defect": worst_ident,
                "max_a_where_defined": max_a,
                "families_without_negative_minimum": len(nonneg_families),
                "cases_with_a_not_below_1": len(a_failures),
                "necessity_failures": "; ".join(nonneg_families) or "none",
                "a_failures": "; ".join(a_failures) or "none"}


@_timed(6, "conservation and reversibility")
def criterion_6(dt_conservation=2e-4):
    grid = Grid1D(20.0, 256, "periodic", "spectral")
    q = ground_state_closed_form(3.0, grid)
    spec = TrainSpec([TrainEntry(q, 0.6)], q.nonlinearity)
    U0 = soliton_train_state(spec, 0.0, grid)
    steps = round(30.0 / dt_conservation)
    tr = evolve(U0, EvolutionConfig(30.0 / steps, 0.0, 30.0), q.nonlinearity, sample_every=1.0)
    dE = float(np.max(np.abs(tr.energy / tr.energy[0] - 1.0)))
    dP = float(np.max(np.abs(tr.momentum - tr.momentum[0])))
    dt = 20.0 / round(20.0 / (0.25 * grid.spacing))
    fw = evolve(U0, EvolutionConfig(dt, 0.0, 20.0), q.nonlinearity, diagnostics=False)
    bw = evolve(fw.states[-1], EvolutionConfig(dt, 20.0, 0.0), q.nonlinearity, diagnostics=False)
    rev = math.sqrt(energy_norm_sq(bw.states[-1] - U0))
    ok = dE <= 1e-8 and dP <= 1e-8 and rev <= 1e-9
    return ok, {"energy_rel_drift": dE, "momentum_abs_drift": dP, "reversibility": rev,
                "dt_conservation": 30.0 / steps, "dt_reversibility": dt}


@_timed(7, "linearized rates")
def criterion_7(betas=(0.0, 0.6), dt=0.005):
    grid = Grid1D(30.0, 512)
    q = ground_state_closed_form(3.0, grid)
    worst, rows = 0.0, {}
    for beta in betas:
        b = spectral_bundle(q, grid, BoostFrame(beta), with_upsilons=False)
        rate = float(b.lambdas[0] / b.boost.gamma)
        T = 1.0 / rate
        steps = max(1, round(T / dt))
        for sign, Y, Z in ((1, b.Y_plus[0], b.Z_minus[0]), (-1, b.Y_minus[0], b.Z_plus[0])):
            tr = linearized_evolve(Y, b, EvolutionConfig(T / steps, 0.0, T), sample_every=T / 10)
            amp = [inner_pair(V, Z) for V in tr.states]
            fit = log_slope(tr.times, amp)
            err = abs(fit - sign * rate) / rate
            worst = max(worst, err)
            rows[f"beta={beta}:{'+' if sign > 0 else '-'}"] = fit
    return worst <= 0.01, {"max_relative_rate_error": worst, **{k: float(v) for k, v in rows.items()}}


@functools.lru_cache(maxsize=1)
def _shooting_grid():
    return Grid1D(40.0, 512, "periodic", "spectral")


@_timed(8, "modulation round trip")
def criterion_8(seed=0, trials=5):
    g = _shooting_grid()
    spec = ground_train([-0.3, 0.3], 3.0, g)
    pr = build_problem(spec, g)
    S0 = max(pr.S0, math.ceil(20.0 / 0.6) + 1.0)
    rng = np.random.default_rng(seed)
    thr = math.exp(-pr.tube.a_rate * S0)
    worst_a, worst_b = 0.0, 0.0
    for _ in range(trials):
        frak = rng.uniform(-1, 1, pr.ball_dim)
        frak /= max(1.0, np.linalg.norm(frak))
        theta = theta_from_target(frak, S0, pr.frame, pr.tube)
        d = decompose(initial_data(pr.frame, S0, theta), pr.frame, S0)
        worst_a = max(worst_a, float(np.max(np.abs(d.a_plus - thr * frak))) / thr,
                      float(np.max(np.abs(d.a_minus))) / thr)
        worst_b = max(worst_b, float(np.linalg.norm(d.b)))
    ok = worst_a <= 1e-8 and worst_b <= 1e-6
    return ok, {"S0": S0, "separation": 0.6 * S0, "max_target_error_rel": worst_a, "max_b": worst_b}


@functools.lru_cache(maxsize=2)
def shooting_run(dt=0.005, sample_dt=0.05):
    g = _shooting_grid()
    spec = ground_train([-0.3, 0.3], 3.0, g)
    t = time.perf_counter()
    pr = build_problem(spec, g, horizon=15.0, dt=dt, sample_dt=sample_dt)
    res = shoot(pr)
    return pr, res, time.perf_counter() - t


@_timed(9, "two-soliton construction")
def criterion_9():
    pr, res, elapsed = shooting_run()
    c = res.certificate
    rejected = [h for h in res.exit_history if h["status"] != "inside"]
    via_a = all(h["status"] == "a_plus" for h in rejected)
    boundary = [h for h in rejected if abs(np.linalg.norm(h["frak"]) - 1.0) < 1e-12]
    transversal = all(h["dA_dt"] < 0 for h in rejected)
    ok = (c["status"] == "inside" and abs(c["S_star"] - pr.T0) <= pr.sample_dt
          and c["sup_weighted_defect"] <= 1.0 and c["defect_log_slope"] <= -pr.tube.omega + 0.05
          and via_a and transversal and len(boundary) > 0 and elapsed < 600.0)
    return ok, {"S_star": c["S_star"], "T0": pr.T0, "sup_weighted_defect": c["sup_weighted_defect"],
                "defect_log_slope": c["defect_log_slope"], "slope_bound": -pr.tube.omega + 0.05,
                "rejected": len(rejected), "boundary_rejected": len(boundary),
                "all_exit_via_a_plus": via_a, "max_dA_dt": c["max_rejected_dA_dt"], "runtime_s": elapsed}


@_timed(10, "monitor constants under refinement")
def criterion_10():
    pr1, res1, _ = shooting_run()
    pr2, res2, _ = shooting_run(pr1.dt / 2, pr1.sample_dt / 2)
    m1 = monitor_constants(pr1, res1.solution)
    m2 = monitor_constants(pr2, res2.solution)
    ratios = {k: max(m1[k], m2[k]) / min(m1[k], m2[k]) for k in m1}
    finite = all(np.isfinite(v) and v > 0 for v in list(m1.values()) + list(m2.values()))
    mod = modulation_ode_check(pr1, res1.solution)
    ok = finite and max(ratios.values()) < 2.0
    detail = {f"{k}": m1[k] for k in m1}
    detail.update({f"{k}_ratio": v for k, v in ratios.items()})
    detail["integrator_gap_a"] = mod.integrator_gap_a
    return ok, detail


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10)


def run_all(selected=None):
    out = []
    for fn in CRITERIA:
        num = int(fn.__name__.split("_")[1])
        if selected and num not in selected:
            continue
        out.append(fn())
    return out
