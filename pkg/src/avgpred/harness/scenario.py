"""Scenario files: JSON description of one closed-loop experiment.

Schema (all matrices are row-major nested lists)::

    {
      "name": "example1",
      "modes": [{"A": [[1, 1], [1, 2]], "B": [[0], [1]]}, ...],
      "delay": 1.0,
      "dwell_time": 0.3,
      "average": "mean" | {"A": [[...]], "B": [[...]]},
      "gain": {"poles": [-3, -2]} | {"K": [[k1, k2]]},
      "signal": {"generator": "random", "seed": 1, "mean_extra_dwell": 0.5}
              | {"generator": "periodic", "period": 0.5}
              | {"switch_times": [...], "modes": [...]},
      "x0": [1, -1],
      "u_init": "zero" | {"values": [...]},
      "n_per_delay": 1000,            # or "h": 0.001
      "horizon": 10.0,
      "controller": "average" | "single_mode:<i>" | "exact_oracle" | "none",
      "diagnostics": {"V": true, "W": true, "bound": true},
      "Q": [[1, 0], [0, 1]],          # optional, identity by default
      "seeds": [1, 2, 3]              # optional seed set for batch runs
    }

Mode indices are 0-based everywhere.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..plant import SwitchedPlant, snap_step, zero_controller
from ..predictor import (AverageController, AverageSystem, ExactOracleController,
                         PredictionContext, SingleModeController, mean_system)
from ..switching import SwitchingSignal, generate_random, periodic

CONTROLLERS = ("average", "exact_oracle", "none")


@dataclass
class Scenario:
    raw: dict
    name: str
    plant: SwitchedPlant
    dwell_time: float
    avg: AverageSystem
    signal_spec: dict
    x0: np.ndarray
    u_init: object
    n_per_delay: int
    horizon: float
    controller: str
    diagnostics: dict = field(default_factory=dict)
    Q: np.ndarray | None = None
    seeds: tuple = ()

    @property
    def h(self) -> float:
        return self.plant.delay / self.n_per_delay

    def signal(self, seed: int | None = None) -> SwitchingSignal:
        """Switching signal covering ``[0, horizon + D]`` (room for the exact predictor)."""
        spec = self.signal_spec
        cover = self.horizon + self.plant.delay
        nm = self.plant.num_modes
        gen = spec.get("generator")
        try:
            if gen == "random":
                s = spec.get("seed", 0) if seed is None else seed
                return generate_random(nm, self.dwell_time, cover, int(s),
                                       float(spec.get("mean_extra_dwell", 0.5)),
                                       spec.get("initial_mode"))
            if gen == "periodic":
                return periodic(nm, float(spec["period"]), cover, self.dwell_time)
            if gen is None:
                d = dict(spec)
                d.setdefault("dwell_time", self.dwell_time)
                d.setdefault("horizon", cover)
                return SwitchingSignal.from_dict(d, num_modes=nm)
        except (KeyError, ValueError, TypeError) as e:
            raise ConfigError(f"field 'signal': {e}") from e
        raise ConfigError(f"field 'signal.generator': unknown generator {gen!r}")

    def u_init_fn(self):
        if self.u_init is None:
            return None
        vals = np.asarray(self.u_init, dtype=float)
        grid = np.linspace(-self.plant.delay, 0.0, vals.size)
        return lambda s: float(np.interp(s, grid, vals))

    def make_controller(self, name: str, signal: SwitchingSignal):
        if name == "average":
            return AverageController(self.avg)
        if name == "none":
            return zero_controller
        if name == "exact_oracle":
            return ExactOracleController(PredictionContext(self.plant, self.avg, signal))
        if name.startswith("single_mode:"):
            try:
                i = int(name.split(":", 1)[1])
            except ValueError as e:
                raise ConfigError(f"field 'controller': bad mode index in {name!r}") from e
            if not 0 <= i < self.plant.num_modes:
                raise ConfigError(f"field 'controller': mode {i} out of range")
            return SingleModeController(self.plant, i, self.avg.K)
        raise ConfigError(f"field 'controller': unknown controller {name!r}")

    def variant(self, **changes) -> "Scenario":
        return replace(self, **changes)


def _matrix(value, where: str, shape=None) -> np.ndarray:
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"field '{where}': not a numeric matrix") from e
    if a.ndim == 1 and shape is not None and shape[1] == 1:
        a = a[:, np.newaxis]
    if a.ndim != 2:
        raise ConfigError(f"field '{where}': expected a 2-D nested list, got {a.ndim}-D")
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"field '{where}': non-finite entries")
    if shape is not None and a.shape != shape:
        raise ConfigError(f"field '{where}': shape {a.shape}, expected {shape}")
    return a


def _num(raw: dict, key: str, default=None, positive: bool = True) -> float:
    if key not in raw:
        if default is None:
            raise ConfigError(f"field '{key}': missing")
        return default
    try:
        v = float(raw[key])
    except (TypeError, ValueError) as e:
        raise ConfigError(f"field '{key}': not a number") from e
    if positive and not v > 0:
        raise ConfigError(f"field '{key}': must be positive, got {v}")
    return v


def parse_scenario(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a JSON object")
    raw = copy.deepcopy(raw)
    modes = raw.get("modes")
    if not isinstance(modes, list) or not modes:
        raise ConfigError("field 'modes': need a non-empty list of {A, B}")
    a_list, b_list = [], []
    for i, m in enumerate(modes):
        if not isinstance(m, dict) or "A" not in m or "B" not in m:
            raise ConfigError(f"field 'modes[{i}]': need keys A and B")
        a = _matrix(m["A"], f"modes[{i}].A")
        n = a.shape[0]
        if a.shape != (n, n):
            raise ConfigError(f"field 'modes[{i}].A': not square {a.shape}")
        if a_list and a.shape != a_list[0].shape:
            raise ConfigError(f"field 'modes[{i}].A': size differs from modes[0].A")
        a_list.append(a)
        b_list.append(_matrix(m["B"], f"modes[{i}].B", (n, 1)))
    n = a_list[0].shape[0]
    delay = _num(raw, "delay")
    plant = SwitchedPlant.from_arrays(a_list, b_list, delay)

    avg_spec = raw.get("average", "mean")
    if avg_spec == "mean":
        a_bar, b_bar = mean_system(plant)
    elif isinstance(avg_spec, dict):
        a_bar = _matrix(avg_spec.get("A"), "average.A", (n, n))
        b_bar = _matrix(avg_spec.get("B"), "average.B", (n, 1))
    else:
        raise ConfigError("field 'average': expected \"mean\" or {A, B}")

    gain = raw.get("gain")
    if not isinstance(gain, dict):
        raise ConfigError("field 'gain': expected {poles: [...]} or {K: [[...]]}")
    if "K" in gain:
        try:
            k = np.reshape(np.asarray(gain["K"], dtype=float), (1, -1))
        except (ValueError, TypeError) as e:
            raise ConfigError(f"field 'gain.K': {e}") from e
        k = _matrix(k, "gain.K", (1, n))
        avg = AverageSystem(a_bar, b_bar, k)
    elif "poles" in gain:
        try:
            poles = [complex(p) if isinstance(p, str) else p for p in gain["poles"]]
        except (ValueError, TypeError) as e:
            raise ConfigError(f"field 'gain.poles': {e}") from e
        if len(poles) != n:
            raise ConfigError(f"field 'gain.poles': need {n} poles")
        try:
            avg = AverageSystem.by_poles(a_bar, b_bar, poles)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"field 'gain.poles': {e}") from e
    else:
        raise ConfigError("field 'gain': expected key 'poles' or 'K'")

    x0 = np.asarray(raw.get("x0", [0.0] * n), dtype=float).ravel()
    if x0.shape != (n,):
        raise ConfigError(f"field 'x0': need {n} entries")

    u_init = raw.get("u_init", "zero")
    if u_init == "zero":
        u_vals = None
    elif isinstance(u_init, dict) and isinstance(u_init.get("values"), list) and len(u_init["values"]) >= 2:
        u_vals = [float(v) for v in u_init["values"]]
    else:
        raise ConfigError("field 'u_init': expected \"zero\" or {values: [at least 2 numbers]}")

    if "h" in raw:
        _, n_per = snap_step(delay, h=_num(raw, "h"))
    else:
        n_per = int(_num(raw, "n_per_delay", 1000))

    controller = raw.get("controller", "average")
    q = raw.get("Q")
    q = None if q is None else _matrix(q, "Q", (n, n))
    signal_spec = raw.get("signal", {"generator": "random", "seed": 0})
    if not isinstance(signal_spec, dict):
        raise ConfigError("field 'signal': expected an object")
    seeds = tuple(int(s) for s in raw.get("seeds", ()))

    sc = Scenario(
        raw=raw, name=str(raw.get("name", "scenario")), plant=plant,
        dwell_time=_num(raw, "dwell_time"), avg=avg, signal_spec=signal_spec,
        x0=x0, u_init=u_vals, n_per_delay=n_per, horizon=_num(raw, "horizon"),
        controller=str(controller), diagnostics=dict(raw.get("diagnostics", {})),
        Q=q, seeds=seeds,
    )
    sc.signal()  # validate the signal spec eagerly
    if sc.controller.startswith("single_mode:") or sc.controller not in CONTROLLERS:
        sc.make_controller(sc.controller, None)
    return sc


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file; bundled names (``example1``) are accepted."""
    p = Path(path)
    if not p.exists():
        p = bundled_path(str(path))
    text = p.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p}: line {e.lineno}, column {e.colno}: {e.msg}") from e
    return parse_scenario(raw)


def bundled_names() -> list[str]:
    root = resources.files("avgpred") / "scenarios"
    return sorted(f.name[:-5] for f in root.iterdir() if f.name.endswith(".json"))


def bundled_path(name: str) -> Path:
    stem = name[:-5] if name.endswith(".json") else name
    p = resources.files("avgpred") / "scenarios" / f"{stem}.json"
    if not p.is_file():
        raise ConfigError(f"no such scenario file or bundled scenario: {name}")
    return Path(str(p))
