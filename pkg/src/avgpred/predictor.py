"""Average predictor, exact (oracle) predictor and the backstepping pair.

The average predictor is what the controller uses: the state of the
constant average system ``(A_bar, B_bar)`` ``D`` seconds ahead. The exact
predictor reads the future switching signal and therefore is only an
analysis oracle. ``W = U - K_bar P`` and its inverse connect the closed loop
with the target system used in the stability argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, DomainError, OracleUnavailableError, PreconditionError, SimulationError
from .matops import as_matrix, as_square, is_controllable, is_hurwitz, place_poles_single_input
from .plant import GRID_SNAP, InputHistory, SwitchedPlant, Trajectory, expm_cached
from .switching import SwitchingSignal


@dataclass(frozen=True)
class AverageSystem:
    """Average pair ``(A_bar, B_bar)`` and the nominal gain ``K_bar`` (1 x n)."""

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        a = as_square(self.A, "A_bar")
        b = as_matrix(np.reshape(self.B, (-1, 1)), "B_bar")
        k = as_matrix(np.reshape(self.K, (1, -1)), "K_bar")
        n = a.shape[0]
        if b.shape != (n, 1) or k.shape != (1, n):
            raise DimensionError(f"A_bar {a.shape}, B_bar {b.shape}, K_bar {k.shape} do not fit")
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "B", b)
        object.__setattr__(self, "K", k)

    @property
    def closed_loop(self) -> np.ndarray:
        return self.A + self.B @ self.K

    def check(self) -> None:
        """Raise ``PreconditionError`` unless the pair is controllable and the loop Hurwitz."""
        if not is_controllable(self.A, self.B):
            raise PreconditionError("pair (A_bar, B_bar) not controllable")
        if not is_hurwitz(self.closed_loop):
            raise PreconditionError("A_bar + B_bar K_bar is not Hurwitz")

    @classmethod
    def by_poles(cls, a, b, poles) -> "AverageSystem":
        k = place_poles_single_input(a, b, poles)
        return cls(np.asarray(a, float), np.asarray(b, float), k)


def mean_system(plant: SwitchedPlant) -> tuple[np.ndarray, np.ndarray]:
    """Element-wise mean of the mode matrices."""
    a = np.mean([m.A for m in plant.modes], axis=0)
    b = np.mean([m.B for m in plant.modes], axis=0)
    return a, b


@dataclass(frozen=True)
class PredictionContext:
    plant: SwitchedPlant
    avg: AverageSystem
    signal: SwitchingSignal

    @property
    def K(self) -> np.ndarray:
        return self.avg.K

    def intervals(self, t: float) -> list[tuple[float, float, int]]:
        """Constant-mode pieces ``(s_{i-1}, s_i, m_i)`` of ``[t, t + D]``, offsets from ``t``."""
        d = self.plant.delay
        tol = 1e-9 * max(1.0, d)
        if t < -tol or t + d > self.signal.horizon + tol:
            raise OracleUnavailableError(
                f"switching signal (horizon {self.signal.horizon}) does not cover [{t}, {t + d}]"
            )
        t = max(t, 0.0)
        end = min(t + d, self.signal.horizon)
        cuts = [0.0]
        for s, _, _ in self.signal.switches_in(t, end):
            if s - t < d:
                cuts.append(s - t)
        cuts.append(d)
        out = []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            out.append((lo, hi, self.signal.mode_at(t + lo)))
        return out


def _window(hist: InputHistory, t: float | None) -> float:
    return hist.end_time if t is None else float(t)


def mode_predictor(a, b, d: float, x, hist: InputHistory, t: float | None = None) -> np.ndarray:
    """``e^{A D} x + int_{t-D}^{t} e^{A (t - theta)} B U(theta) dtheta``."""
    t = _window(hist, t)
    return expm_cached(a, d) @ np.asarray(x, float) + hist.integral(a, b, t, t - d, t)


def average_predictor(avg: AverageSystem, x, hist: InputHistory, t: float | None = None) -> np.ndarray:
    """Prediction of the average system ``D`` seconds ahead."""
    return mode_predictor(avg.A, avg.B, hist.delay, x, hist, t)


def exact_predictor(ctx: PredictionContext, t: float, x, hist: InputHistory) -> np.ndarray:
    """State of the true plant at ``t + D``, using the future switching signal.

    The product/sum formula is evaluated by nesting: the partial result is
    carried across each constant-mode piece, so every exponential factor is
    formed once.
    """
    d = ctx.plant.delay
    z = np.asarray(x, dtype=float)
    for lo, hi, m in ctx.intervals(t):
        mode = ctx.plant.modes[m]
        z = expm_cached(mode.A, hi - lo) @ z + hist.integral(
            mode.A, mode.B, t - d + hi, t - d + lo, t - d + hi
        )
    return z


def control_law(avg: AverageSystem, x, hist: InputHistory, t: float | None = None) -> float:
    return float(avg.K[0] @ average_predictor(avg, x, hist, t))


def single_mode_controller(plant: SwitchedPlant, i: int, k, x, hist: InputHistory,
                           t: float | None = None) -> float:
    if not 0 <= i < plant.num_modes:
        raise DomainError(f"mode index {i} out of range for {plant.num_modes} modes")
    k = np.reshape(np.asarray(k, float), (1, -1))
    mode = plant.modes[i]
    return float(k[0] @ mode_predictor(mode.A, mode.B, plant.delay, x, hist, t))


def backstepping_W(ctx: PredictionContext, t: float, x, hist: InputHistory, u_t: float) -> float:
    """``W(t) = U(t) - K_bar P(t)`` with ``P`` the exact predictor."""
    return float(u_t - ctx.K[0] @ exact_predictor(ctx, t, x, hist))


def mismatch_W(ctx: PredictionContext, t: float, x, hist: InputHistory) -> float:
    """``K_bar (P_bar(t) - P(t))``."""
    return float(ctx.K[0] @ (average_predictor(ctx.avg, x, hist, t) - exact_predictor(ctx, t, x, hist)))


# ---------------------------------------------------------------------------
# controllers for the simulator


def _implicit(predict: Callable[[InputHistory], np.ndarray], k: np.ndarray, t: float,
              hist: InputHistory) -> float:
    """Solve ``u = K pred(history ending in u)``; the law is linear in ``u``."""
    if hist.end_time >= t - GRID_SNAP * hist.h:
        return float(k[0] @ predict(hist))
    p0 = predict(hist.extended(0.0))
    p1 = predict(hist.extended(1.0))
    gain = float(k[0] @ (p1 - p0))
    if abs(1.0 - gain) < 1e-12:
        raise SimulationError("sampled control law is singular at this step size")
    return float(k[0] @ p0) / (1.0 - gain)


class AverageController:
    """The average predictor-feedback law ``U = K_bar P_bar``."""

    name = "average"

    def __init__(self, avg: AverageSystem):
        self.avg = avg

    def __call__(self, t, x, hist):
        return _implicit(lambda hh: average_predictor(self.avg, x, hh, t), self.avg.K, t, hist)


class SingleModeController:
    """Predictor feedback that assumes mode ``i`` is active forever."""

    def __init__(self, plant: SwitchedPlant, i: int, k):
        if not 0 <= i < plant.num_modes:
            raise DomainError(f"mode index {i} out of range for {plant.num_modes} modes")
        self.plant, self.i = plant, i
        self.k = np.reshape(np.asarray(k, float), (1, -1))
        self.name = f"single_mode:{i}"

    def __call__(self, t, x, hist):
        m = self.plant.modes[self.i]
        return _implicit(lambda hh: mode_predictor(m.A, m.B, self.plant.delay, x, hh, t),
                         self.k, t, hist)


class ExactOracleController:
    """Exact predictor feedback; needs the switching signal on ``[t, t + D]``."""

    name = "exact_oracle"

    def __init__(self, ctx: PredictionContext):
        self.ctx = ctx

    def __call__(self, t, x, hist):
        return _implicit(lambda hh: exact_predictor(self.ctx, t, x, hh), self.ctx.K, t, hist)


# ---------------------------------------------------------------------------
# post-hoc transforms along a recorded trajectory


def w_along(traj: Trajectory, k) -> tuple[np.ndarray, np.ndarray]:
    """Samples of ``W(theta) = U(theta) - K_bar X(theta + D)`` on the grid.

    Covers ``theta`` in ``[-D, T - D]``. This uses ``P(theta) = X(theta + D)``
    read from the recorded states, which is what the exact predictor returns.
    """
    k = np.reshape(np.asarray(k, float), (1, -1))
    node_t, node_u = traj.history.nodes()
    count = traj.times.size
    thetas = node_t[:count]
    w = node_u[:count] - (traj.states @ k[0])
    return thetas, w


class WSignal:
    """``W(theta) = U(theta) - K_bar P(theta)`` evaluated anywhere on ``[-D, T - D]``.

    ``P(theta)`` is the state ``X(theta + D)``, obtained by exact propagation
    from the nearest grid sample.
    """

    def __init__(self, traj: Trajectory, k):
        self.traj = traj
        self.k = np.reshape(np.asarray(k, float), (1, -1))

    def __call__(self, theta: float) -> float:
        tr = self.traj
        return float(tr.history.value_at(theta) - self.k[0] @ tr.x_at(theta + tr.delay))

    def breakpoints(self, a: float, b: float) -> list[float]:
        tr = self.traj
        h, d = tr.h, tr.delay
        pts = [a, b]
        k = math.floor(a / h + GRID_SNAP) + 1
        while k * h < b - GRID_SNAP * h:
            pts.append(k * h)
            k += 1
        for s in tr.signal.switch_times:
            if a < s - d < b:
                pts.append(s - d)
        return sorted(set(pts))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


def _pi_sweep(ctx: PredictionContext, t: float, x_t, w: WSignal, targets: Sequence[float]):
    """Integrate the target-system predictor forward over ``[t - D, t]``.

    Returns ``Pi`` at each requested ``theta`` (sorted input not required).
    """
    d = ctx.plant.delay
    targets = np.asarray(targets, dtype=float)
    tol = GRID_SNAP * w.traj.h
    if np.any(targets < t - d - tol) or np.any(targets > t + tol):
        raise DomainError(f"theta outside [{t - d}, {t}]")
    k = ctx.K
    pieces = ctx.intervals(t)
    order = np.argsort(targets)
    out = np.empty((targets.size, np.size(x_t)))
    ti = 0
    pi = np.asarray(x_t, dtype=float).copy()
    for lo, hi, m in pieces:
        mode = ctx.plant.modes[m]
        hmat = mode.A + mode.B @ k
        bvec = mode.B[:, 0]
        a, b = t - d + lo, t - d + hi
        pts = set(w.breakpoints(a, b))
        pts.update(float(v) for v in targets if a < v < b)
        pts = sorted(pts)
        while ti < targets.size and targets[order[ti]] <= a + tol:
            out[order[ti]] = pi
            ti += 1
        for p, q in zip(pts[:-1], pts[1:]):
            length = q - p
            if length <= 0:
                continue
            nodes = p + 0.5 * length * (_GL_X + 1.0)
            acc = np.zeros_like(pi)
            for s, wt in zip(nodes, _GL_W):
                acc += wt * (expm_cached(hmat, q - s) @ bvec) * w(s)
            pi = expm_cached(hmat, length) @ pi + 0.5 * length * acc
            while ti < targets.size and targets[order[ti]] <= q + tol:
                out[order[ti]] = pi
                ti += 1
    while ti < targets.size:
        out[order[ti]] = pi
        ti += 1
    return out


def inverse_pi(ctx: PredictionContext, t: float, theta: float, x_t, w: WSignal) -> np.ndarray:
    """``Pi(theta)`` for ``theta`` in ``[t - D, t]``.

    Each constant-mode piece starts from the value reached at the end of the
    previous one, beginning with ``Pi(t - D) = X(t)``.
    """
    return _pi_sweep(ctx, t, x_t, w, [theta])[0]


def reconstruct_input(ctx: PredictionContext, t: float, x_t, w: WSignal,
                      thetas: Sequence[float]) -> np.ndarray:
    """``U(theta) = W(theta) + K_bar Pi(theta)`` at each requested instant."""
    pis = _pi_sweep(ctx, t, x_t, w, thetas)
    return np.array([w(th) for th in thetas]) + pis @ ctx.K[0]
