"""Delayed switched linear plant, input history record and simulation.

The plant is ``x' = A_sigma x + B_sigma U(t - D)`` with scalar input. The input
signal is represented by its samples on a uniform grid of step ``h = D / N``
and reconstructed by linear interpolation between samples. Over any
sub-interval with constant mode the state update is then exact: one
exponential of an augmented ``(n+2) x (n+2)`` matrix yields the homogeneous
factor together with the responses to a constant and to a ramp input.

Predictor integrals ``int_a^b e^{M (c - theta)} B U(theta) dtheta`` use the
same reconstruction, so a predictor built from the history agrees with the
simulated plant to rounding error.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionError, DomainError, SimulationError
from .matops import as_matrix, as_square
from .switching import SwitchingSignal

# relative tolerance (in units of h) for snapping instants onto the grid
GRID_SNAP = 1e-9


@dataclass(frozen=True)
class Mode:
    A: np.ndarray
    B: np.ndarray


@dataclass(frozen=True)
class SwitchedPlant:
    """Mode set ``{(A_i, B_i)}`` and input delay ``D``."""

    modes: tuple[Mode, ...]
    delay: float

    def __post_init__(self):
        if len(self.modes) < 1:
            raise ValueError("a plant needs at least one mode")
        if not (self.delay > 0 and math.isfinite(self.delay)):
            raise ValueError(f"delay must be positive and finite, got {self.delay}")
        n = self.modes[0].A.shape[0]
        for i, m in enumerate(self.modes):
            if m.A.shape != (n, n):
                raise DimensionError(f"A_{i} has shape {m.A.shape}, expected {(n, n)}")
            if m.B.shape != (n, 1):
                raise DimensionError(f"B_{i} has shape {m.B.shape}, expected {(n, 1)}")

    @classmethod
    def from_arrays(cls, a_list: Sequence, b_list: Sequence, delay: float) -> "SwitchedPlant":
        if len(a_list) != len(b_list):
            raise ValueError("need one B per A")
        modes = []
        for i, (a, b) in enumerate(zip(a_list, b_list)):
            b = np.array(b, dtype=float)
            if b.ndim == 1:
                b = b[:, np.newaxis]
            modes.append(Mode(as_square(a, f"A_{i}"), as_matrix(b, f"B_{i}")))
        return cls(tuple(modes), float(delay))

    @property
    def state_dim(self) -> int:
        return self.modes[0].A.shape[0]

    @property
    def num_modes(self) -> int:
        return len(self.modes)

    def with_delay(self, delay: float) -> "SwitchedPlant":
        return SwitchedPlant(self.modes, float(delay))


# ---------------------------------------------------------------------------
# exact segment responses


def _key(m: np.ndarray) -> tuple:
    return (m.shape, m.tobytes())


@lru_cache(maxsize=8192)
def _foh_blocks_cached(a_key: tuple, b_key: tuple, length: float):
    n = a_key[0][0]
    a = np.frombuffer(a_key[1]).reshape(a_key[0])
    b = np.frombuffer(b_key[1]).reshape(b_key[0])
    z = np.zeros((n + 2, n + 2))
    z[:n, :n] = a
    z[:n, n] = b[:, 0]
    z[n, n + 1] = 1.0
    e = scipy.linalg.expm(z * length)
    phi = e[:n, :n].copy()
    f0 = e[:n, n].copy()
    f1 = e[:n, n + 1].copy()
    for arr in (phi, f0, f1):
        arr.setflags(write=False)
    return phi, f0, f1


def foh_blocks(a: np.ndarray, b: np.ndarray, length: float):
    """Return ``(e^{A L}, F0, F1)`` for a segment of length ``L``.

    ``F0 = int_0^L e^{A(L-s)} B ds`` and ``F1 = int_0^L e^{A(L-s)} B s ds``,
    so a ramp input ``u(s) = u0 + (u1 - u0) s / L`` contributes
    ``F0 u0 + F1 (u1 - u0) / L``.
    """
    return _foh_blocks_cached(_key(np.ascontiguousarray(a, dtype=float)),
                              _key(np.ascontiguousarray(b, dtype=float)), float(length))


@lru_cache(maxsize=8192)
def _expm_cached(a_key: tuple, t: float) -> np.ndarray:
    a = np.frombuffer(a_key[1]).reshape(a_key[0])
    out = scipy.linalg.expm(a * t)
    out.setflags(write=False)
    return out


def expm_cached(a: np.ndarray, t: float) -> np.ndarray:
    return _expm_cached(_key(np.ascontiguousarray(a, dtype=float)), float(t))


def _segment(a, b, x, u0, u1, length):
    if length <= 0:
        return np.array(x, dtype=float)
    phi, f0, f1 = foh_blocks(a, b, length)
    return phi @ x + f0 * u0 + f1 * ((u1 - u0) / length)


def step_exact(a, b, x, u: float, h: float, u_end: float | None = None) -> np.ndarray:
    """Advance ``x' = A x + B u`` over ``h`` seconds exactly.

    With ``u_end`` omitted the input is held at ``u``; otherwise it ramps
    linearly from ``u`` to ``u_end``.
    """
    a = as_square(a, "A")
    b = as_matrix(np.reshape(b, (-1, 1)) if np.ndim(b) == 1 else b, "B")
    x = np.asarray(x, dtype=float)
    if b.shape != (a.shape[0], 1) or x.shape != (a.shape[0],):
        raise DimensionError(f"shapes A {a.shape}, B {b.shape}, x {x.shape} are inconsistent")
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    return _segment(a, b, x, float(u), float(u if u_end is None else u_end), float(h))


# ---------------------------------------------------------------------------
# input history


class _Kernel:
    """Powers of ``e^{M h}`` applied to the per-cell input responses."""

    def __init__(self, m: np.ndarray, b: np.ndarray, h: float):
        self.phi, f0, f1 = foh_blocks(m, b, h)
        self.h = h
        self.right = f1 / h
        self.left = f0 - self.right
        n = m.shape[0]
        self.powers = np.eye(n)[np.newaxis]
        self._grow(64)

    def _grow(self, size: int) -> None:
        k = self.powers.shape[0]
        if k >= size:
            return
        new = np.empty((size,) + self.powers.shape[1:])
        new[:k] = self.powers
        for i in range(k, size):
            new[i] = self.phi @ new[i - 1]
        self.powers = new
        self.kl = new @ self.left
        self.kr = new @ self.right

    def ensure(self, m: int) -> None:
        if m + 1 > self.powers.shape[0]:
            self._grow(max(m + 1, 2 * self.powers.shape[0]))


_KERNELS: dict = {}


def _kernel(m: np.ndarray, b: np.ndarray, h: float) -> _Kernel:
    key = (_key(np.ascontiguousarray(m, dtype=float)),
           _key(np.ascontiguousarray(b, dtype=float)), float(h))
    k = _KERNELS.get(key)
    if k is None:
        if len(_KERNELS) > 256:
            _KERNELS.clear()
        k = _KERNELS[key] = _Kernel(m, b, h)
    return k


class InputHistory:
    """Record of the scalar input ``U`` from ``-D`` up to the newest sample.

    Cell ``i`` spans ``[t_start + i h, t_start + (i+1) h]`` and carries the
    input values at its two ends; ``U`` is linear inside a cell. Neighbouring
    cells share their node value except at ``t = 0``, where the initial
    history may jump to the first computed input.

    The whole record is kept (not only the last ``D`` seconds) because the
    post-hoc diagnostics need windows at every past instant.
    """

    def __init__(self, h: float, n_delay: int, u_init: Callable[[float], float] | None = None,
                 capacity: int = 0):
        if n_delay < 1:
            raise ValueError("the delay must span at least one grid step")
        self.h = float(h)
        self.n_delay = int(n_delay)
        self.delay = self.n_delay * self.h
        self.t_start = -self.delay
        cap = max(capacity, 2 * self.n_delay + 1)
        self._left = np.zeros(cap)
        self._right = np.zeros(cap)
        nodes = -self.delay + self.h * np.arange(self.n_delay + 1)
        nodes[-1] = 0.0
        if u_init is None:
            vals = np.zeros(self.n_delay + 1)
        else:
            vals = np.array([float(u_init(s)) for s in nodes])
            if not np.all(np.isfinite(vals)):
                raise ValueError("initial input history has non-finite values")
        self._left[: self.n_delay] = vals[:-1]
        self._right[: self.n_delay] = vals[1:]
        self._n = self.n_delay
        self._last: float | None = None

    # -- bookkeeping -------------------------------------------------------

    @property
    def num_cells(self) -> int:
        return self._n

    @property
    def end_time(self) -> float:
        return self.t_start + self._n * self.h

    @property
    def last_node(self) -> float | None:
        """Most recent pushed sample (``None`` before the first push)."""
        return self._last

    def _reserve(self, n: int) -> None:
        if n > self._left.size:
            size = max(n, 2 * self._left.size)
            self._left = np.resize(self._left, size)
            self._right = np.resize(self._right, size)

    def push(self, u: float) -> None:
        """Append the sample taken at the next grid instant."""
        u = float(u)
        if self._last is not None:
            self._reserve(self._n + 1)
            self._left[self._n] = self._last
            self._right[self._n] = u
            self._n += 1
        self._last = u

    def extended(self, u: float) -> "InputHistory":
        """View with one provisional cell ending at ``u``.

        Writes into spare capacity; the view is invalidated by the next
        ``push`` or ``extended`` call.
        """
        if self._last is None:
            raise DomainError("no pending cell before the first push")
        self._reserve(self._n + 1)
        self._left[self._n] = self._last
        self._right[self._n] = float(u)
        view = object.__new__(InputHistory)
        view.__dict__.update(self.__dict__)
        view._n = self._n + 1
        return view

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Grid instants and right-continuous input values over the record."""
        n = self._n
        times = self.t_start + self.h * np.arange(n + 1)
        vals = np.empty(n + 1)
        vals[:n] = self._left[:n]
        vals[n] = self._right[n - 1] if self._last is None else self._last
        return times, vals

    def cells(self) -> tuple[np.ndarray, np.ndarray]:
        return self._left[: self._n].copy(), self._right[: self._n].copy()

    # -- queries -----------------------------------------------------------

    def _pos(self, t: float) -> float:
        x = (t - self.t_start) / self.h
        r = round(x)
        return float(r) if abs(x - r) <= GRID_SNAP else x

    def covers(self, a: float, b: float) -> bool:
        return self._pos(a) >= 0 and self._pos(b) <= self._n and a <= b + GRID_SNAP * self.h

    def _require(self, a: float, b: float) -> None:
        if not self.covers(a, b):
            raise DomainError(
                f"interval [{a}, {b}] not covered by input history "
                f"[{self.t_start}, {self.end_time}]"
            )

    def _cell_value(self, i: int, pos: float) -> float:
        frac = pos - i
        return self._left[i] + (self._right[i] - self._left[i]) * frac

    def value_at(self, t: float) -> float:
        """Input at ``t``; right-continuous at the grid nodes."""
        self._require(t, t)
        pos = self._pos(t)
        i = min(int(math.floor(pos)), self._n - 1)
        return self._cell_value(i, pos)

    def segment_values(self, a: float, b: float) -> tuple[float, float]:
        """Input at both ends of ``[a, b]``, which must lie within one cell."""
        self._require(a, b)
        pa, pb = self._pos(a), self._pos(b)
        i = min(int(math.floor(0.5 * (pa + pb))), self._n - 1)
        if pa < i - GRID_SNAP or pb > i + 1 + GRID_SNAP:
            raise DomainError(f"[{a}, {b}] straddles a grid node")
        return self._cell_value(i, pa), self._cell_value(i, pb)

    def integral(self, m, b, c: float, t0: float, t1: float) -> np.ndarray:
        """``int_{t0}^{t1} e^{M (c - theta)} B U(theta) dtheta`` for ``c >= t1``.

        Exact for the piecewise-linear input; in the limit of small ``h`` it
        is the product trapezoidal rule.
        """
        m = np.asarray(m, dtype=float)
        b = np.asarray(b, dtype=float).reshape(-1, 1)
        n = m.shape[0]
        self._require(t0, t1)
        if c < t1 - GRID_SNAP * self.h:
            raise DomainError(f"evaluation instant {c} precedes the upper limit {t1}")
        pa, pb = self._pos(t0), self._pos(t1)
        z = np.zeros(n)
        if pb - pa <= 0:
            return z
        ga, gb = math.ceil(pa), math.floor(pb)
        h = self.h
        if ga > gb:
            # both ends inside one cell
            i = int(math.floor(pa))
            z = _segment(m, b, z, self._cell_value(i, pa), self._cell_value(i, pb), (pb - pa) * h)
        else:
            if pa < ga:
                i = ga - 1
                z = _segment(m, b, z, self._cell_value(i, pa), self._right[i], (ga - pa) * h)
            cells = gb - ga
            if cells > 0:
                k = _kernel(m, b, h)
                k.ensure(cells)
                lo = ga
                left = self._left[lo:gb][::-1]
                right = self._right[lo:gb][::-1]
                z = (k.powers[cells] @ z + left @ k.kl[:cells] + right @ k.kr[:cells])
            if pb > gb:
                i = gb
                z = _segment(m, b, z, self._left[i], self._cell_value(i, pb), (pb - gb) * h)
        lag = c - t1
        if lag > GRID_SNAP * h:
            z = expm_cached(m, lag) @ z
        return z

    def abs_integral(self, t0: float, t1: float) -> float:
        """``int |U|`` over a grid-aligned window."""
        left, right = self._window(t0, t1)
        same = left * right >= 0
        tot = np.where(
            same,
            0.5 * (np.abs(left) + np.abs(right)),
            (left**2 + right**2) / (2 * np.maximum(np.abs(left) + np.abs(right), 1e-300)),
        )
        return float(self.h * tot.sum())

    def square_integral(self, t0: float, t1: float) -> float:
        """``int U^2`` over a grid-aligned window."""
        left, right = self._window(t0, t1)
        return float(self.h * np.sum(left**2 + left * right + right**2) / 3.0)

    def _window(self, t0: float, t1: float):
        self._require(t0, t1)
        pa, pb = self._pos(t0), self._pos(t1)
        if pa != int(pa) or pb != int(pb):
            raise DomainError("window ends must be grid instants")
        return self._left[int(pa):int(pb)], self._right[int(pa):int(pb)]


def history_integral(hist: InputHistory, m, bcol, t: float, a: float, b: float,
                     c: float | None = None) -> np.ndarray:
    """``int_a^b e^{M (c - theta)} Bcol U(theta) dtheta`` with ``c`` defaulting to ``b``.

    ``t`` is the current instant; the interval must lie inside ``[t - D, t]``.
    """
    tol = GRID_SNAP * hist.h
    if a < t - hist.delay - tol or b > t + tol or a > b + tol:
        raise DomainError(f"[{a}, {b}] not inside the window [{t - hist.delay}, {t}]")
    return hist.integral(m, bcol, b if c is None else c, a, b)


# ---------------------------------------------------------------------------
# simulation


@dataclass
class Trajectory:
    """Sampled closed-loop run on the grid ``t_j = j h``."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    mode_trace: np.ndarray
    history: InputHistory
    plant: SwitchedPlant
    signal: SwitchingSignal
    h: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def delay(self) -> float:
        return self.plant.delay

    @property
    def n_delay(self) -> int:
        return self.history.n_delay

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def index_of(self, t: float) -> int:
        x = t / self.h
        j = round(x)
        if abs(x - j) > GRID_SNAP or not (0 <= j < self.times.size):
            raise DomainError(f"{t} is not a grid instant of this trajectory")
        return int(j)

    def x_at(self, t: float) -> np.ndarray:
        """State at any instant in ``[0, horizon]``, propagated from the grid."""
        if t < -GRID_SNAP * self.h or t > self.horizon + GRID_SNAP * self.h:
            raise DomainError(f"{t} outside [0, {self.horizon}]")
        x = t / self.h
        j = round(x)
        if abs(x - j) <= GRID_SNAP:
            return self.states[int(j)].copy()
        j = int(math.floor(x))
        return propagate(self.plant, self.signal, self.history, self.states[j], j * self.h, t)

    def to_csv(self, path=None) -> str:
        n = self.states.shape[1]
        header = ["t"] + [f"x{i + 1}" for i in range(n)] + ["u", "mode"]
        extra = [k for k in ("V", "W_abs", "W_bound") if k in self.diagnostics]
        header += extra
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        fmt = lambda v: format(float(v), ".17g")  # noqa: E731
        for j in range(self.times.size):
            row = [fmt(self.times[j])] + [fmt(v) for v in self.states[j]]
            row += [fmt(self.inputs[j]), str(int(self.mode_trace[j]))]
            row += [fmt(self.diagnostics[k][j]) for k in extra]
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as f:
                f.write(text)
        return text


def propagate(plant: SwitchedPlant, sig: SwitchingSignal, hist: InputHistory,
              x: np.ndarray, t0: float, t1: float) -> np.ndarray:
    """Exact state transfer from ``t0`` to ``t1`` under the delayed recorded input.

    The interval is split at every switch instant and at every grid node of
    the delayed input, so each piece has one mode and a linear input.
    """
    h, d = hist.h, plant.delay
    if t1 < t0:
        raise DomainError("t1 precedes t0")
    cuts = [t0]
    k0 = math.floor(t0 / h + GRID_SNAP) + 1
    k = k0
    while k * h < t1 - GRID_SNAP * h:
        cuts.append(k * h)
        k += 1
    cuts.append(t1)
    for s, _, _ in sig.switches_in(t0, t1):
        if t0 < s < t1:
            cuts.append(s)
    cuts.sort()
    x = np.asarray(x, dtype=float)
    for p, q in zip(cuts[:-1], cuts[1:]):
        if q - p <= 0:
            continue
        mode = plant.modes[sig.mode_at(p)]
        u0, u1 = hist.segment_values(p - d, q - d)
        x = _segment(mode.A, mode.B, x, u0, u1, q - p)
    return x


Controller = Callable[[float, np.ndarray, InputHistory], float]


def snap_step(delay: float, h: float | None = None, n_delay: int | None = None) -> tuple[float, int]:
    """Grid step ``D / N`` with integer ``N``; ``h`` is rounded down to fit."""
    if n_delay is None:
        if h is None:
            n_delay = 1000
        else:
            n_delay = max(1, math.ceil(delay / h - 1e-12))
    return delay / n_delay, int(n_delay)


def simulate(plant: SwitchedPlant, sig: SwitchingSignal, controller: Controller, x0,
             horizon: float, h: float | None = None, n_delay: int | None = None,
             u_init: Callable[[float], float] | None = None) -> Trajectory:
    """Closed-loop run of the delayed switched plant.

    At each grid instant the controller is called with the current state and
    the input history, which covers ``[-D, t - h]`` (``[-D, 0]`` at ``t = 0``);
    controllers that need the input at ``t`` itself solve for it.
    """
    h, n_delay = snap_step(plant.delay, h, n_delay)
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (plant.state_dim,):
        raise DimensionError(f"x0 has shape {x.shape}, expected ({plant.state_dim},)")
    steps = int(math.floor(horizon / h + GRID_SNAP))
    if steps * h > sig.horizon + GRID_SNAP * h:
        raise DomainError(f"horizon {horizon} exceeds the switching signal ({sig.horizon})")
    hist = InputHistory(h, n_delay, u_init, capacity=n_delay + steps + 2)

    times = h * np.arange(steps + 1)
    states = np.empty((steps + 1, plant.state_dim))
    inputs = np.empty(steps + 1)
    modes = np.empty(steps + 1, dtype=int)
    for j in range(steps + 1):
        t = times[j]
        u = float(controller(t, x, hist))
        if not math.isfinite(u):
            raise SimulationError(f"controller returned non-finite input {u} at t={t}")
        if not np.all(np.isfinite(x)):
            raise SimulationError(f"state became non-finite at t={t}")
        states[j] = x
        inputs[j] = u
        modes[j] = sig.mode_at(t)
        hist.push(u)
        if j < steps:
            x = propagate(plant, sig, hist, x, t, times[j + 1])
    return Trajectory(times, states, inputs, modes, hist, plant, sig, h)


def zero_controller(t, x, hist) -> float:
    return 0.0
