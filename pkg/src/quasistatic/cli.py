"""Command-line driver: one subcommand per experiment, CSV artifacts out.

Nothing is written until an experiment has finished, so a bad config or a
numerical failure leaves the output directory untouched.
Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import yaml

from . import adiabatic, model, ness, perturbation
from .errors import ConfigError, NumericalError
from .fock import SIGMA3

OUT_ENV = "QUASISTATIC_OUT"

DEFAULT_MODEL = {
    "omega0": 1.0,
    "g": 0.05,
    "theta_im": -0.25,
    "reservoirs": [{"beta": 1.0, "modes": 4, "u_max": 4.0}, {"beta": 2.0, "modes": 4, "u_max": 4.0}],
}


# ---------------------------------------------------------------- artifacts

@dataclass
class Table:
    header: Sequence[str]
    rows: List[Sequence] = field(default_factory=list)
    notes: Dict[str, object] = field(default_factory=dict)


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def render_csv(table: Table, config_hash: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.header)
    for row in table.rows:
        w.writerow([_cell(x) for x in row])
    for key, val in table.notes.items():
        buf.write(f"# {key}={_cell(val)}\n")
    buf.write(f"# config-hash={config_hash}\n")
    return buf.getvalue()


def config_hash(command: str, cfg: dict, seed: int) -> str:
    blob = json.dumps({"command": command, "config": cfg, "seed": seed},
                      sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _check(name: str, passed: bool, value, threshold) -> dict:
    def plain(x):
        if isinstance(x, (np.floating, float)):
            return float(x)
        if isinstance(x, (list, tuple, np.ndarray)):
            return [plain(v) for v in x]
        return x
    return {"name": name, "passed": bool(passed), "value": plain(value), "threshold": plain(threshold)}


# ---------------------------------------------------------------- config

def load_config(path: Optional[str]) -> dict:
    if path is None:
        cfg = json.loads(json.dumps(DEFAULT_MODEL))
    else:
        try:
            with open(path) as fh:
                cfg = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a mapping")
    model.validate_config(cfg)
    return cfg


def _sorted_increasing(values, key):
    vals = [float(v) for v in values]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"{key} must be strictly increasing")
    return vals


# ---------------------------------------------------------------- experiments

def run_check_adiabatic(cfg: dict, seed: int):
    syn = cfg.get("synthetic", {})
    fam = adiabatic.synthetic_family(seed, syn.get("coupling", 0.1), syn.get("rotation_scale", 0.5))
    lam0 = complex(*syn.get("lam0", [0.0, 0.0]))
    taus = _sorted_increasing(cfg.get("tau_list", [10.0, 31.6, 100.0, 316.0, 1000.0]), "tau_list")
    rtol = float(cfg.get("rtol", 1e-10))
    grid = np.linspace(0.0, 1.0, int(cfg.get("s_points", 21)))
    report = adiabatic.assumption_report(fam, lam0, grid)
    sweep, inter = adiabatic.adiabatic_error_sweep(fam, taus, lam0, grid, rtol)
    table = Table(["tau", "sup_defect", "intertwining"],
                  [(t, d, i) for (t, d), i in zip(sweep.rows(), inter)],
                  {"slope": sweep.slope})
    checks = [
        _check("adiabatic_slope", abs(sweep.slope + 1) <= 0.15, sweep.slope, [-1.15, -0.85]),
        _check("intertwining", max(inter) <= 100 * rtol, max(inter), 100 * rtol),
        _check("isolated_gap", report.flags["isolated"], float(report.gap.min()), 0.0),
    ]
    extra = {"abscissa_max": float(report.abscissa.max()), "flags": report.flags}
    return {"adiabatic_sweep.csv": table}, checks, extra


def run_model_spectrum(cfg: dict, seed: int):
    spec = model.spec_from_config(cfg)
    L = model.Liouvilleans(spec)
    s = float(cfg.get("s", 0.0))
    free = np.sort(np.real(np.diag(L.L0)))
    zero = np.sort(np.real(np.diag(L.L0))[np.real(np.diag(L.N)) < 0.5])
    eigs = np.linalg.eigvals(L.deformed(s, spec.theta, spec.g))
    eigs = eigs[np.lexsort((np.round(eigs.imag, 12), np.round(eigs.real, 12)))]
    spectrum = Table(["index", "re", "im"], [(k, e.real, e.imag) for k, e in enumerate(eigs)],
                     {"g": spec.g, "theta_im": spec.theta.imag, "s": s})
    zp = Table(["index", "energy"], [(k, e) for k, e in enumerate(zero)])
    expect = np.array([-2, 0, 0, 2]) * spec.omega0
    checks = [_check("zero_particle_free_spectrum", np.allclose(zero, expect, atol=1e-12, rtol=0),
                     zero.tolist(), expect.tolist())]
    if spec.g > 0:
        resid = float(np.linalg.norm(L.c_liouvillean(s, tol=np.inf) @ L.Omega))
        checks.append(_check("kernel", resid <= 1e-10, resid, 1e-10))
    extra = {"dimension": L.dim, "free_min": float(free[0]), "free_max": float(free[-1])}
    return {"spectrum.csv": spectrum, "zero_particle.csv": zp}, checks, extra


def run_pt_compare(cfg: dict, seed: int):
    spec = model.spec_from_config(cfg)
    L = model.Liouvilleans(spec)
    s = float(cfg.get("s", 0.0))
    g_list = _sorted_increasing(cfg.get("g_list", [0.02, 0.03, 0.05, 0.07, 0.1]), "g_list")
    reports, fits = perturbation.pt_residual_sweep(L, s, g_list)
    rows = []
    for r in reports:
        for j in range(4):
            rows.append((r.g, j, r.E_num[j].real, r.E_num[j].imag, r.E_pt[j].real, r.E_pt[j].imag,
                         abs(r.E_num[j] - r.E_pt[j])))
    notes = {f"slope_{j}": fits[j].slope for j in (1, 2, 3)}
    table = Table(["g", "j", "re_num", "im_num", "re_pt", "im_pt", "residual"], rows, notes)
    e0 = max(abs(r.E_num[0]) for r in reports)
    checks = [_check(f"pt_slope_{j}", fits[j].slope >= 3.5, fits[j].slope, 3.5) for j in (1, 2, 3)]
    checks.append(_check("E0_zero", e0 <= 1e-9, e0, 1e-9))
    return {"pt_compare.csv": table}, checks, {}


def run_theta_scan(cfg: dict, seed: int):
    spec = model.spec_from_config(cfg)
    L = model.Liouvilleans(spec)
    s = float(cfg.get("s", 0.0))
    thetas = [1j * t + spec.theta.real for t in cfg.get("theta_list", [-0.2, -0.25, -0.3])]
    g_floor = float(cfg.get("g_floor", 0.02))
    drift, rest, reps = perturbation.theta_drift_with_floor(L, s, spec.g, thetas, g_floor)
    rows = [(th.imag, j, r.E_num[j].real, r.E_num[j].imag) for th, r in zip(thetas, reps) for j in range(4)]
    table = Table(["theta_im", "j", "re", "im"], rows,
                  {"drift": drift, "drift_above_floor": rest, "g_floor": g_floor})
    checks = [_check("theta_drift_above_floor", rest <= 1e-6, rest, 1e-6)]
    extra = {"in_window": [spec.in_window(th) for th in thetas]}
    return {"theta_scan.csv": table}, checks, extra


def run_relaxation(cfg: dict, seed: int):
    spec = model.spec_from_config(cfg)
    L = model.Liouvilleans(spec)
    s0 = float(cfg.get("s", 0.0))
    deformed = bool(cfg.get("deformed", True))
    golden = ness.golden_rule_rate(L, s0)
    t_max = float(cfg.get("t_max", 2.5 / golden if golden > 0 else 100.0))
    dt = float(cfg.get("dt", t_max / 500))
    if not deformed:
        t_max = min(t_max, ness.recurrence_time(L) / 4)
    ts, trace = ness.relaxation_trace(L, SIGMA3, t_max, dt, deformed=deformed, s0=s0)
    table = Table(["t", "re_trace", "im_trace"], [(t, v.real, v.imag) for t, v in zip(ts, trace)])
    checks, extra = [], {"golden_rule_rate": golden, "t_max": t_max}
    if deformed:
        st = ness.ness_state(L, s0)
        steady = ness.steady_expectation(st, L, SIGMA3)
        rate = ness.fit_decay_rate(ts, trace, steady, t_min=min(200.0, t_max / 4))
        table.notes["rate"] = rate
        extra.update(steady=steady.real, im_E1=st.E1.imag)
        checks.append(_check("relaxation_rate", abs(rate / golden - 1) <= 0.2, rate / golden, [0.8, 1.2]))
    return {"relaxation.csv": table}, checks, extra


def run_ness_track(cfg: dict, seed: int):
    spec = model.spec_from_config(cfg)
    L = model.Liouvilleans(spec)
    taus = _sorted_increasing(cfg.get("tau_list", list(ness.TAU_LIST)), "tau_list")
    grid = np.linspace(0.0, 1.0, int(cfg.get("s_points", 41)))
    rtol = float(cfg.get("rtol", 1e-10))
    fit, runs = ness.tau_sweep(L, taus, SIGMA3, grid, rtol)
    tracking = Table(["tau", "s", "defect"], [row for r in runs for row in r.rows()])
    sweep = Table(["tau", "sup_defect"], fit.rows(), {"slope": fit.slope})
    frozen = model.Liouvilleans(spec.frozen())
    ffit, fruns = ness.tau_sweep(frozen, taus, SIGMA3, grid, rtol)
    fmax = max(r.sup for r in fruns)
    checks = [
        _check("tracking_slope", abs(fit.slope + 1) <= 0.2, fit.slope, [-1.2, -0.8]),
        _check("frozen_control", fmax <= 1e-8, fmax, 1e-8),
    ]
    extra = {"defect_times_tau": [r.sup * (1 + r.tau) for r in runs]}
    return {"tracking.csv": tracking, "tracking_sweep.csv": sweep}, checks, extra


EXPERIMENTS: Dict[str, Callable] = {
    "check-adiabatic": run_check_adiabatic,
    "model-spectrum": run_model_spectrum,
    "pt-compare": run_pt_compare,
    "theta-scan": run_theta_scan,
    "relaxation": run_relaxation,
    "ness-track": run_ness_track,
}


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quasistatic", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML config file (defaults to the built-in model)")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
        sp.add_argument("--seed", type=int, default=None, help="seed (overrides the config value)")
    return p


def _write(out: Path, files: Dict[str, str]):
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)


def run(command: str, config_path: Optional[str], out: Optional[str], seed: Optional[int]) -> int:
    try:
        cfg = load_config(config_path)
        if cfg.get("experiment", command) != command:
            raise ConfigError(f"config is for {cfg['experiment']!r}, not {command!r}")
        seed = int(cfg.get("seed", 0)) if seed is None else seed
        if seed < 0:
            raise ConfigError("seed must be non-negative")
        digest = config_hash(command, cfg, seed)
        tables, checks, extra = EXPERIMENTS[command](cfg, seed)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    files = {name: render_csv(t, digest) for name, t in tables.items()}
    summary = {"command": command, "seed": seed, "config_hash": digest, "checks": checks,
               "all_passed": all(c["passed"] for c in checks), "details": extra}
    files["summary.json"] = json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n"
    _write(Path(out or os.environ.get(OUT_ENV, "out")), files)
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']}")
    return 0


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"cannot serialise {type(x).__name__}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.command, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
