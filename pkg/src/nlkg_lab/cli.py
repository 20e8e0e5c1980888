"""Command-line entry point: ``nlkg-lab [--config FILE] [--set key=value ...] <subcommand>``.

Exit status 0 on success, 2 for configuration errors, 3 for numerical failures
(a ``failure.json`` diagnostic is written to the output directory).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .bound_states import (SandboxPotential, action_W, decay_rate_fit, ground_state_closed_form,
                           sandbox_depth_for_kbar, solve_bound_state_newton)
from .errors import ConfigurationError, DomainError, LabError, NumericalError
from .evolution import SCHEMES, EvolutionConfig, TrainEntry, TrainSpec, evolve, soliton_train_state
from .fields import Grid1D, write_snapshot
from .linear_spectrum import BoostFrame, gram_determinant, spectral_bundle, verify_eigenrelation

OUTPUT_ENV = "NLKG_LAB_OUTPUT_DIR"
SUBCOMMANDS = ("boundstate", "spectrum", "coercivity", "evolve", "shoot", "verify-all")


def load_defaults() -> dict:
    return json.loads(resources.files("nlkg_lab").joinpath("defaults.json").read_text())


def _merge(base: dict, over: dict, path=""):
    for k, v in over.items():
        if k not in base:
            raise ConfigurationError(f"unknown configuration key {path + k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigurationError(f"configuration key {path + k!r} must be a section")
            _merge(base[k], v, path + k + ".")
        else:
            base[k] = v


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


@dataclass
class LabConfig:
    data: dict

    @classmethod
    def build(cls, config_path=None, overrides=(), env=None) -> "LabConfig":
        data = load_defaults()
        if config_path:
            try:
                _merge(data, json.loads(Path(config_path).read_text()))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigurationError(f"cannot read config {config_path}: {exc}") from exc
        for item in overrides:
            if "=" not in item:
                raise ConfigurationError(f"--set expects key=value, got {item!r}")
            key, val = item.split("=", 1)
            node, parts = {}, key.split(".")
            cur = node
            for p in parts[:-1]:
                cur = cur.setdefault(p, {})
            cur[parts[-1]] = _parse_value(val)
            _merge(data, node)
        env = os.environ if env is None else env
        if env.get(OUTPUT_ENV):
            data["output_dir"] = env[OUTPUT_ENV]
        cfg = cls(data)
        cfg.validate()
        return cfg

    def grid(self) -> Grid1D:
        g = self.data["grid"]
        return Grid1D(float(g["half_width"]), int(g["n_points"]), g["boundary"], g["stencil"])

    def validate(self):
        d = self.data
        try:
            grid = self.grid()
            p = float(d["nonlinearity"]["p"])
            if not p > 1:
                raise ConfigurationError("nonlinearity.p must exceed 1")
            if not float(d["spectral"]["kernel_threshold"]) > 0:
                raise ConfigurationError("spectral.kernel_threshold must be positive")
            for b in d["spectral"]["betas"]:
                BoostFrame(float(b))
            ev = d["evolution"]
            if ev["scheme"] not in SCHEMES:
                raise ConfigurationError(f"evolution.scheme must be one of {SCHEMES}")
            EvolutionConfig(float(ev["dt"]), scheme=ev["scheme"]).check_cfl(grid)
            BoostFrame(float(ev["beta"]))
            sh = d["shooting"]
            betas = [float(b) for b in sh["betas"]]
            TrainSpec([TrainEntry(None, b) for b in betas], None)
            if not float(sh["horizon"]) > 0 or not float(sh["sample_dt"]) > 0:
                raise ConfigurationError("shooting.horizon and shooting.sample_dt must be positive")
            if int(sh["seed_depth"]) < 1:
                raise ConfigurationError("shooting.seed_depth must be at least 1")
        except (TypeError, ValueError, KeyError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(str(exc)) from exc

    @property
    def output_dir(self) -> Path:
        return Path(self.data["output_dir"])


def _dump_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{float(v):.17g}" for v in r])


def _ground_state(cfg: LabConfig):
    grid = cfg.grid()
    q = ground_state_closed_form(float(cfg.data["nonlinearity"]["p"]), grid)
    return solve_bound_state_newton(q.profile, q.nonlinearity, tol=max(1e-9, q.residual_norm))


def cmd_boundstate(cfg: LabConfig, args) -> int:
    bs = _ground_state(cfg)
    out = cfg.output_dir
    _write_csv(out / "boundstate.csv", ["x", "q"], zip(bs.grid.x, bs.profile.values))
    _dump_json(out / "boundstate.json", {
        "p": bs.nonlinearity.power,
        "residual_norm": bs.residual_norm,
        "action_W": action_W(bs.profile, bs.nonlinearity),
        "decay_rate_fit": decay_rate_fit(bs.profile),
    })
    return 0


def _spectral_source(cfg: LabConfig):
    kb = cfg.data["spectral"]["sandbox_kbar"]
    if kb is None:
        return _ground_state(cfg)
    return SandboxPotential(sandbox_depth_for_kbar(int(kb)))


def cmd_spectrum(cfg: LabConfig, args) -> int:
    src, grid = _spectral_source(cfg), cfg.grid()
    thr = float(cfg.data["spectral"]["kernel_threshold"])
    rows = []
    for beta in cfg.data["spectral"]["betas"]:
        b = spectral_bundle(src, grid, BoostFrame(float(beta)), thr)
        rep = verify_eigenrelation(b)
        rows.append({
            "beta": float(beta), "kbar": b.kbar, "lambdas": b.lambdas, "ellbar": b.ellbar, "mbar": b.mbar,
            "eigenrelation_residuals": {"plus": rep.residual_plus, "minus": rep.residual_minus},
            "gram_determinants": {"Y": gram_determinant(b.Y_plus + b.Y_minus, grid),
                                  "Z": gram_determinant(b.Z_plus + b.Z_minus, grid)},
        })
    _dump_json(cfg.output_dir / "spectrum.json", rows)
    return 0 if all(r["mbar"] == r["kbar"] for r in rows) else 3


def cmd_coercivity(cfg: LabConfig, args) -> int:
    from .coercivity import coercivity_row

    src, grid = _spectral_source(cfg), cfg.grid()
    rows = [coercivity_row(src, grid, float(b)) for b in cfg.data["spectral"]["betas"]]
    _dump_json(cfg.output_dir / "coercivity.json", rows)
    return 0


def cmd_evolve(cfg: LabConfig, args) -> int:
    ev = cfg.data["evolution"]
    t0 = args.t0 if args.t0 is not None else float(ev["t0"])
    t1 = args.t1 if args.t1 is not None else float(ev["t1"])
    dt = args.dt if args.dt is not None else float(ev["dt"])
    scheme = args.scheme or ev["scheme"]
    snap = args.snap_every if args.snap_every is not None else float(ev["snap_every"])
    bs = _ground_state(cfg)
    grid = bs.grid
    spec = TrainSpec([TrainEntry(bs, float(ev["beta"]))], bs.nonlinearity)
    U0 = soliton_train_state(spec, t0, grid)
    span = abs(t1 - t0)
    steps = max(1, round(span / dt))
    ecfg = EvolutionConfig(span / steps, t0, t1, scheme)
    ecfg.check_cfl(grid)
    sample = span / max(1, round(span / snap)) if snap > 0 else None
    tr = evolve(U0, ecfg, bs.nonlinearity, sample_every=sample)
    out = cfg.output_dir
    for i, U in enumerate(tr.states):
        write_snapshot(out / f"snapshot_{i:04d}.csv", U)
    _write_csv(out / "diagnostics.csv", ["t", "E", "P", "norm"], zip(tr.times, tr.energy, tr.momentum, tr.norm))
    return 0


def cmd_shoot(cfg: LabConfig, args) -> int:
    from .shooting import build_problem, diagnostics_rows, ground_train, shoot

    sh = cfg.data["shooting"]
    betas = [float(b) for b in (args.betas.split(",") if args.betas else sh["betas"])]
    if args.n_solitons is not None and args.n_solitons != len(betas):
        raise ConfigurationError(f"--n-solitons {args.n_solitons} does not match {len(betas)} velocities")
    p = args.p if args.p is not None else float(cfg.data["nonlinearity"]["p"])
    omega = args.omega if args.omega is not None else sh["omega_override"]
    horizon = args.horizon if args.horizon is not None else float(sh["horizon"])
    depth = args.seed_depth if args.seed_depth is not None else int(sh["seed_depth"])
    grid = cfg.grid()
    spec = ground_train(betas, p, grid)
    pr = build_problem(spec, grid, horizon=horizon, omega=omega, dt=float(cfg.data["evolution"]["dt"]),
                       sample_dt=float(sh["sample_dt"]), scheme=cfg.data["evolution"]["scheme"],
                       kernel_threshold=float(cfg.data["spectral"]["kernel_threshold"]))
    res = shoot(pr, max_depth=depth)
    out = cfg.output_dir
    recs = sorted(res.solution.records, key=lambda r: r["t"])
    stride = max(1, round(1.0 / pr.sample_dt))
    for i, r in enumerate(recs[::stride]):
        write_snapshot(out / f"solution_{i:04d}.csv", r["state"])
    _write_csv(out / "diagnostics.csv",
               ["t", "normW", "b_norm", "a_plus_norm", "a_minus_norm", "F", "defect", "e_omega_t_defect"],
               diagnostics_rows(res.solution, pr.tube.omega))
    cert = dict(res.certificate)
    _dump_json(out / "certificate.json", cert)
    return 0


def cmd_verify_all(cfg: LabConfig, args) -> int:
    from .verify import run_all

    results = run_all()
    rows = []
    for r in results:
        print(r.line())
        rows.append({"criterion": r.number, "title": r.title, "passed": r.passed,
                     "detail": {k: v for k, v in r.detail.items() if not k.startswith("runtime")}})
    _dump_json(cfg.output_dir / "verify_all.json", rows)
    return 0 if all(r.passed for r in results) else 3


COMMANDS = {
    "boundstate": cmd_boundstate,
    "spectrum": cmd_spectrum,
    "coercivity": cmd_coercivity,
    "evolve": cmd_evolve,
    "shoot": cmd_shoot,
    "verify-all": cmd_verify_all,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nlkg-lab", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON file overriding the defaults")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override one configuration key, e.g. grid.n_points=1024")
    ap.add_argument("--output-dir", help="output directory (overrides config and environment)")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("boundstate", "spectrum", "coercivity", "verify-all"):
        sub.add_parser(name)
    ev = sub.add_parser("evolve")
    ev.add_argument("--t0", type=float)
    ev.add_argument("--t1", type=float)
    ev.add_argument("--dt", type=float)
    ev.add_argument("--scheme", choices=SCHEMES)
    ev.add_argument("--snap-every", type=float)
    sh = sub.add_parser("shoot")
    sh.add_argument("--n-solitons", type=int)
    sh.add_argument("--betas", help="comma-separated velocities")
    sh.add_argument("--p", type=float)
    sh.add_argument("--omega", type=float)
    sh.add_argument("--horizon", type=float)
    sh.add_argument("--seed-depth", type=int)
    return ap


def run_subcommand(name: str, cfg: LabConfig, args=None) -> int:
    if name not in COMMANDS:
        raise ConfigurationError(f"unknown subcommand {name!r}")
    args = args or argparse.Namespace(t0=None, t1=None, dt=None, scheme=None, snap_every=None, n_solitons=None,
                                      betas=None, p=None, omega=None, horizon=None, seed_depth=None)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    _dump_json(cfg.output_dir / "config.json", cfg.data)
    (cfg.output_dir / "defaults.json").write_text(
        resources.files("nlkg_lab").joinpath("defaults.json").read_text())
    return COMMANDS[name](cfg, args)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = LabConfig.build(args.config, args.set)
        if args.output_dir:
            cfg.data["output_dir"] = args.output_dir
        return run_subcommand(args.command, cfg, args)
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, LabError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        try:
            out = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or load_defaults()["output_dir"])
            _dump_json(out / "failure.json", {"command": args.command, "error": type(exc).__name__,
                                              "message": str(exc)})
        except OSError:
            pass
        return 3


if __name__ == "__main__":
    sys.exit(main())
