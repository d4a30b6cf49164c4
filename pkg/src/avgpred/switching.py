"""Right-continuous piecewise-constant switching signals with a dwell time."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class SwitchingSignal:
    """Mode selector ``sigma`` on ``[0, horizon]``.

    ``modes[0]`` is active on ``[0, switch_times[0])`` and ``modes[i]`` on
    ``[switch_times[i-1], switch_times[i])``. At a switch instant the
    post-switch mode is returned.

    Parameters
    ----------
    switch_times : sequence of float
        Strictly increasing instants in ``(0, horizon)``.
    modes : sequence of int
        One entry more than ``switch_times``. Repeated consecutive modes are
        merged (a switch to the same mode is not a switch).
    dwell_time : float
        Minimum gap between consecutive switches.
    horizon : float
        Right end of the definition interval.
    allow_early_first_switch : bool
        Permit a first switch before ``dwell_time``. Only meant for
        hand-written signals.
    num_modes : int, optional
        Size of the mode set, used to validate indices.
    """

    switch_times: tuple[float, ...]
    modes: tuple[int, ...]
    dwell_time: float
    horizon: float
    allow_early_first_switch: bool = False
    num_modes: int | None = field(default=None, compare=False)

    def __post_init__(self):
        times = [float(s) for s in self.switch_times]
        modes = [int(m) for m in self.modes]
        if len(modes) != len(times) + 1:
            raise ValueError("modes must have exactly one more entry than switch_times")
        if not (self.dwell_time > 0 and math.isfinite(self.dwell_time)):
            raise ValueError(f"dwell_time must be positive, got {self.dwell_time}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive, got {self.horizon}")

        # drop switches that do not change the mode
        kept_t, kept_m = [], [modes[0]]
        for s, m in zip(times, modes[1:]):
            if m != kept_m[-1]:
                kept_t.append(s)
                kept_m.append(m)
        times, modes = kept_t, kept_m

        for m in modes:
            if m < 0 or (self.num_modes is not None and m >= self.num_modes):
                raise ValueError(f"mode index {m} out of range")
        if times:
            if times[0] <= 0 or times[-1] >= self.horizon:
                raise ValueError("switch times must lie strictly inside (0, horizon)")
            if times[0] < self.dwell_time and not self.allow_early_first_switch:
                raise ValueError(
                    f"first switch at {times[0]} precedes the dwell time {self.dwell_time}"
                )
            gaps = np.diff(times)
            if gaps.size and gaps.min() < self.dwell_time:
                raise ValueError(
                    f"switch gap {gaps.min()} is shorter than dwell time {self.dwell_time}"
                )
        object.__setattr__(self, "switch_times", tuple(times))
        object.__setattr__(self, "modes", tuple(modes))

    @property
    def initial_mode(self) -> int:
        return self.modes[0]

    def _check(self, t: float) -> None:
        if not (0.0 <= t <= self.horizon):
            raise DomainError(f"t={t} outside the signal domain [0, {self.horizon}]")

    def mode_at(self, t: float) -> int:
        self._check(t)
        return self.modes[bisect.bisect_right(self.switch_times, t)]

    def switches_in(self, t0: float, t1: float) -> list[tuple[float, int, int]]:
        """Switch events ``(s, pre_mode, post_mode)`` with ``t0 < s <= t1``."""
        if t1 < t0:
            raise DomainError(f"inverted interval ({t0}, {t1})")
        self._check(t0)
        self._check(t1)
        lo = bisect.bisect_right(self.switch_times, t0)
        hi = bisect.bisect_right(self.switch_times, t1)
        return [
            (self.switch_times[i], self.modes[i], self.modes[i + 1]) for i in range(lo, hi)
        ]

    def covers(self, t0: float, t1: float) -> bool:
        return 0.0 <= t0 <= t1 <= self.horizon

    def to_dict(self) -> dict:
        return {
            "initial_mode": self.initial_mode,
            "switch_times": list(self.switch_times),
            "modes": list(self.modes),
            "dwell_time": self.dwell_time,
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, d: dict, *, num_modes: int | None = None) -> "SwitchingSignal":
        switch_times = list(d.get("switch_times", []))
        modes = list(d.get("modes", []))
        if "initial_mode" in d and len(modes) == len(switch_times):
            modes = [d["initial_mode"], *modes]
        if not modes:
            modes = [d.get("initial_mode", 0)]
        return cls(
            switch_times=tuple(switch_times),
            modes=tuple(modes),
            dwell_time=float(d["dwell_time"]),
            horizon=float(d["horizon"]),
            allow_early_first_switch=bool(d.get("allow_early_first_switch", False)),
            num_modes=num_modes,
        )


def _at_least(prev: float, s: float, gap: float) -> float:
    # float addition can land a hair below prev + gap
    while s - prev < gap:
        s = float(np.nextafter(s, math.inf))
    return s


def generate_random(
    num_modes: int,
    dwell_time: float,
    horizon: float,
    seed: int,
    mean_extra_dwell: float = 0.5,
    initial_mode: int | None = None,
) -> SwitchingSignal:
    """Seeded random signal with gaps ``dwell_time + Exponential(mean_extra_dwell)``.

    The next mode is drawn uniformly among the modes other than the current one.
    """
    if num_modes < 1:
        raise ValueError("num_modes must be >= 1")
    rng = np.random.default_rng(seed)
    mode = int(rng.integers(num_modes)) if initial_mode is None else int(initial_mode)
    modes, times = [mode], []
    if num_modes > 1:
        s = 0.0
        while True:
            gap = dwell_time + (rng.exponential(mean_extra_dwell) if mean_extra_dwell > 0 else 0.0)
            s = _at_least(s, s + gap, dwell_time)
            if s >= horizon:
                break
            step = int(rng.integers(1, num_modes))
            mode = (mode + step) % num_modes
            times.append(s)
            modes.append(mode)
    return SwitchingSignal(tuple(times), tuple(modes), dwell_time, horizon, num_modes=num_modes)


def periodic(
    num_modes: int, period: float, horizon: float, dwell_time: float | None = None
) -> SwitchingSignal:
    """Round-robin ``0, 1, ..., l, 0, ...`` switching every ``period`` seconds."""
    dwell_time = period if dwell_time is None else dwell_time
    if period < dwell_time:
        raise ValueError(f"period {period} is shorter than dwell time {dwell_time}")
    times, modes = [], [0]
    if num_modes > 1:
        k, prev = 1, 0.0
        while k * period < horizon:
            s = _at_least(prev, k * period, dwell_time)
            if s >= horizon:
                break
            times.append(s)
            modes.append(k % num_modes)
            prev = s
            k += 1
    return SwitchingSignal(tuple(times), tuple(modes), dwell_time, horizon, num_modes=num_modes)


def constant(mode: int, horizon: float, dwell_time: float = 1.0) -> SwitchingSignal:
    return SwitchingSignal((), (mode,), dwell_time, horizon)
