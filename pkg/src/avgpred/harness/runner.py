"""Experiment runners: single runs, paired controller comparisons and sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from ..certificates import (certify, decay_fit, epsilon, lyapunov_along,
                            mismatch_bound_along)
from ..errors import AvgPredError, ConfigError, DomainError
from ..matops import NORM_LABEL
from ..plant import SwitchedPlant, simulate
from ..predictor import AverageSystem, w_along
from .scenario import Scenario

SWEEP_AXES = ("D", "tau_d", "epsilon_scale")
SWEEP_HEADER = ("axis_value", "seed", "epsilon", "epsilon_star", "stable", "xi_hat")


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _arm_stats(traj):
    x_norm = np.linalg.norm(traj.states, axis=1)
    return {
        "final_norm": float(x_norm[-1]),
        "peak_norm": float(x_norm.max()),
        "peak_u": float(np.abs(traj.inputs).max()),
    }


def simulate_scenario(sc: Scenario, controller: str | None = None, seed: int | None = None):
    """Simulate one scenario arm; returns ``(trajectory, signal)``."""
    sig = sc.signal(seed)
    ctrl = sc.make_controller(controller or sc.controller, sig)
    traj = simulate(sc.plant, sig, ctrl, sc.x0, sc.horizon, n_delay=sc.n_per_delay,
                    u_init=sc.u_init_fn())
    return traj, sig


def run(sc: Scenario, seed: int | None = None) -> dict:
    """Certificate, simulation, diagnostics and summary for one scenario.

    Returns a dict with keys ``trajectory``, ``certificate`` and ``summary``.
    Precondition failures propagate as :class:`PreconditionError`.
    """
    cert = certify(sc.plant, sc.avg, sc.dwell_time, q=sc.Q)
    traj, sig = simulate_scenario(sc, seed=seed)
    want = {k: bool(sc.diagnostics.get(k, True)) for k in ("V", "W", "bound")}
    notes = []
    _, w = w_along(traj, cert.K)
    check = mismatch_bound_along(traj, cert)
    if want["W"]:
        traj.diagnostics["W_abs"] = check.W_abs
    if want["bound"]:
        traj.diagnostics["W_bound"] = check.bound
    if want["V"]:
        try:
            v = lyapunov_along(traj, cert, w)
            count = traj.times.size
            traj.diagnostics["V"] = v[:count] if v.size >= count else np.pad(
                v, (0, count - v.size), constant_values=np.nan)
        except DomainError as e:
            notes.append(f"V column omitted: {e}")
    try:
        rho_hat, xi_hat = decay_fit(traj)
    except DomainError as e:
        rho_hat = xi_hat = math.nan
        notes.append(f"decay fit skipped: {e}")
    summary = {
        "name": sc.name,
        "controller": sc.controller,
        "seed": sc.signal_spec.get("seed") if seed is None else seed,
        "epsilon": cert.epsilon,
        "epsilon_star": cert.epsilon_star,
        "active_branch": cert.active_branch,
        "stable": cert.stable,
        "xi_hat": xi_hat,
        "rho_hat": rho_hat,
        "max_bound_ratio": check.max_ratio,
        "bound_violations": check.violations,
        "final_norm": float(np.linalg.norm(traj.states[-1])),
        "initial_norm": float(np.linalg.norm(traj.states[0])),
        "norm_label": NORM_LABEL,
        "Q_used": cert.Q,
        "K": cert.K,
        "h": traj.h,
        "horizon": traj.horizon,
        "switch_times": list(sig.switch_times),
        "modes": list(sig.modes),
        "notes": notes,
    }
    return {"trajectory": traj, "certificate": cert, "summary": summary}


def run_scenario(sc: Scenario, out_dir, seed: int | None = None) -> dict:
    """Run a scenario and write ``<name>.trajectory.csv``, ``.certificate.json``, ``.summary.json``."""
    res = run(sc, seed)
    out = Path(out_dir)
    stem = sc.name if seed is None else f"{sc.name}.seed{seed}"
    paths = {
        "trajectory": out / f"{stem}.trajectory.csv",
        "certificate": out / f"{stem}.certificate.json",
        "summary": out / f"{stem}.summary.json",
    }
    atomic_write(paths["trajectory"], res["trajectory"].to_csv())
    atomic_write(paths["certificate"], dump_json(res["certificate"].to_dict()))
    atomic_write(paths["summary"], dump_json(res["summary"]))
    res["paths"] = paths
    return res


def compare_controllers(sc: Scenario, controllers, seed: int | None = None) -> dict:
    """Run each controller on one shared signal, initial state and input history.

    Errors in one arm are recorded for that arm; the batch continues.
    The ranking orders successful arms by final state norm.
    """
    controllers = list(controllers)
    sig = sc.signal(seed)
    arms = {}
    for name in controllers:
        try:
            ctrl = sc.make_controller(name, sig)
            traj = simulate(sc.plant, sig, ctrl, sc.x0, sc.horizon,
                            n_delay=sc.n_per_delay, u_init=sc.u_init_fn())
            stats = _arm_stats(traj)
            try:
                stats["rho_hat"], stats["xi_hat"] = decay_fit(traj)
            except DomainError:
                stats["rho_hat"] = stats["xi_hat"] = math.nan
            arms[name] = {"status": "ok", **stats}
        except AvgPredError as e:
            arms[name] = {"status": "error", "error": f"{type(e).__name__}: {e}"}
    ok = [n for n in controllers if arms[n]["status"] == "ok"]
    ranking = sorted(ok, key=lambda n: (arms[n]["final_norm"], controllers.index(n)))
    return {
        "name": sc.name,
        "seed": sc.signal_spec.get("seed") if seed is None else seed,
        "switch_times": list(sig.switch_times),
        "modes": list(sig.modes),
        "controllers": arms,
        "ranking": ranking,
    }


def scale_plant(plant: SwitchedPlant, avg: AverageSystem, factor: float) -> SwitchedPlant:
    """Move every mode towards (or away from) the average system by ``factor``."""
    a_list = [avg.A + factor * (m.A - avg.A) for m in plant.modes]
    b_list = [avg.B + factor * (m.B - avg.B) for m in plant.modes]
    return SwitchedPlant.from_arrays(a_list, b_list, plant.delay)


def sweep_variant(sc: Scenario, axis: str, value: float) -> Scenario:
    if axis == "D":
        return sc.variant(plant=sc.plant.with_delay(value))
    if axis == "tau_d":
        return sc.variant(dwell_time=value)
    if axis == "epsilon_scale":
        return sc.variant(plant=scale_plant(sc.plant, sc.avg, value))
    raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


def sweep(sc: Scenario, axis: str, values, seeds: int = 1, simulate_runs: bool = True) -> list[dict]:
    """One row per ``value x seed``: certificate numbers and the fitted decay rate.

    Seeds are ``base_seed, base_seed + 1, ...``. Errors land in the row's
    ``error`` field instead of aborting.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    values = [float(v) for v in values]
    for v in values:
        if not (v > 0 or (axis == "epsilon_scale" and v == 0)) or not math.isfinite(v):
            raise ConfigError(f"sweep value {v} must be positive")
    if seeds < 1:
        raise ConfigError("seeds must be >= 1")
    base = int(sc.signal_spec.get("seed", 0))
    rows = []
    for v in values:
        var = sweep_variant(sc, axis, v)
        for s in range(base, base + seeds):
            row = {"axis_value": v, "seed": s, "epsilon": math.nan, "epsilon_star": math.nan,
                   "stable": False, "xi_hat": math.nan, "error": ""}
            try:
                row["epsilon"] = epsilon(var.plant, var.avg)
                cert = certify(var.plant, var.avg, var.dwell_time, q=var.Q, eps=row["epsilon"])
                row["epsilon_star"] = cert.epsilon_star
                row["stable"] = cert.stable
                if simulate_runs:
                    traj, _ = simulate_scenario(var, seed=s)
                    row["xi_hat"] = decay_fit(traj)[1]
            except AvgPredError as e:
                row["error"] = f"{type(e).__name__}: {e}"
            rows.append(row)
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([
            format(r["axis_value"], ".17g"), r["seed"], format(r["epsilon"], ".17g"),
            format(r["epsilon_star"], ".17g"), "true" if r["stable"] else "false",
            format(r["xi_hat"], ".17g"),
        ])
    return buf.getvalue()


def certify_scenario(sc: Scenario) -> dict:
    cert = certify(sc.plant, sc.avg, sc.dwell_time, q=sc.Q)
    return cert.to_dict()
