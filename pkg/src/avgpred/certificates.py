"""Stability certificate constants and trajectory monitors.

All norms are spectral norms (see ``matops.NORM_LABEL``). Two readings of
ambiguous notation are fixed here and reported in every certificate:

* ``K_bar^2`` in the norm-equivalence constants is ``|K_bar|^2``;
* ``|P B|`` in the functional's comparison bounds is ``|P| M_B``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError
from .matops import NORM_LABEL, solve_lyapunov, spectral_norm
from .plant import SwitchedPlant, Trajectory
from .predictor import AverageSystem, w_along

INTERPRETATIONS = (
    "K_bar^2 in nu_1/nu_2 read as |K_bar|^2 (spectral norm of the gain row)",
    "|PB| in mu_1/mu_2 read as |P|*M_B, matching b(eps)",
    "rho computed as printed, sqrt(2*mu1*nu1*nu2/mu2); rho_alt = sqrt(2*(mu2/mu1)*nu1*nu2) also reported",
)


@dataclass(frozen=True)
class BoundParams:
    delay: float
    dwell_time: float
    M_A: float
    M_B: float
    M_H: float = 0.0

    @property
    def switch_bound(self) -> int:
        """Maximum number of switches inside one delay window, ``ceil(D / tau_d)``."""
        return math.ceil(self.delay / self.dwell_time - 1e-12)


def epsilon(plant: SwitchedPlant, avg: AverageSystem) -> float:
    """Largest spectral-norm distance of any mode from the average pair."""
    return max(
        max(spectral_norm(m.A - avg.A), spectral_norm(m.B - avg.B)) for m in plant.modes
    )


def bound_params(plant: SwitchedPlant, avg: AverageSystem, dwell_time: float) -> BoundParams:
    m_a = max([spectral_norm(avg.A)] + [spectral_norm(m.A) for m in plant.modes])
    m_b = max([spectral_norm(avg.B)] + [spectral_norm(m.B) for m in plant.modes])
    m_h = max([spectral_norm(avg.closed_loop)]
              + [spectral_norm(m.A + m.B @ avg.K) for m in plant.modes])
    return BoundParams(plant.delay, float(dwell_time), m_a, m_b, m_h)


def delta1(eps: float, p: BoundParams) -> float:
    d = p.delay
    return eps * (p.switch_bound + 1) * d * math.exp(d * (p.M_A + eps))


def delta2(eps: float, p: BoundParams) -> float:
    d = p.delay
    inner = math.exp(eps * d) * d * p.M_B * (1.0 + math.exp(p.M_A * d) * (p.switch_bound + 1))
    return eps * math.exp(p.M_A * d) * (inner + 1.0)


def lambda_of(eps: float, p: BoundParams) -> float:
    """Gain of the predictor-mismatch bound; zero at zero and strictly increasing."""
    return max(delta1(eps, p), delta2(eps, p))


def nu_constants(plant: SwitchedPlant, avg: AverageSystem, delay: float | None = None,
                 dwell_time: float = 1.0) -> tuple[float, float]:
    """Norm-equivalence constants between ``(X, U)`` and ``(X, W)``."""
    d = plant.delay if delay is None else float(delay)
    p = bound_params(plant, avg, dwell_time)
    return _nu(spectral_norm(avg.K), d, p.M_H, p.M_B), _nu(spectral_norm(avg.K), d, p.M_A, p.M_B)


def _nu(k_norm: float, d: float, m: float, m_b: float) -> float:
    k2 = k_norm**2
    grow = math.exp(2.0 * m * d)
    return 2.0 * max(2.0 * k2 * d * grow, 1.0 + 2.0 * k2 * d**2 * grow * m_b**2)


def _bisect(f, target: float, lo: float, hi: float, rtol: float = 1e-12) -> float:
    """Smallest-bracket root of increasing ``f(x) = target`` on ``[lo, hi]``."""
    for _ in range(4000):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def invert_increasing(f, target: float, hi: float = 1.0) -> float:
    """Solve ``f(x) = target`` for an unbounded increasing ``f`` with ``f(0) = 0``."""
    if target <= 0:
        return 0.0
    if math.isinf(target):
        return math.inf
    while f(hi) < target:
        hi *= 2.0
        if hi > 1e300:
            return math.inf
    return _bisect(f, target, 0.0, hi)


@dataclass
class _Core:
    """Quantities that do not depend on ``eps``."""

    P: np.ndarray
    Q: np.ndarray
    P_norm: float
    K_norm: float
    lam_min_Q: float
    lam_min_P: float
    lam_max_P: float
    params: BoundParams
    nu1: float
    nu2: float

    @property
    def feasibility_limit(self) -> float:
        return self.lam_min_Q / (2.0 * self.P_norm * (1.0 + self.K_norm))

    def margin(self, eps: float) -> float:
        return self.lam_min_Q - 2.0 * eps * self.P_norm * (1.0 + self.K_norm)

    def b_of(self, eps: float) -> float:
        m = self.margin(eps)
        if m <= 0:
            raise DomainError(
                f"eps={eps} outside Lyapunov feasibility (limit {self.feasibility_limit})"
            )
        return 2.0 * (self.P_norm * self.params.M_B) ** 2 / m

    def alpha_of(self, eps: float) -> float:
        m = self.margin(eps)
        if m <= 0:
            return math.inf
        lam = lambda_of(eps, self.params)
        d = self.params.delay
        num = 4.0 * (self.P_norm * self.params.M_B) ** 2 * math.exp(d) * self.K_norm**2 * (d * self.nu1 + 1.0)
        return eps * self.P_norm * (1.0 + self.K_norm) + lam**2 * num / m

    def lambda_target(self) -> float:
        d = self.params.delay
        denom = self.K_norm * math.sqrt(2.0 * math.exp(d) * d * self.nu1)
        return math.inf if denom == 0 else 1.0 / denom


def _core(plant: SwitchedPlant, avg: AverageSystem, dwell_time: float, q=None) -> _Core:
    avg.check()
    n = plant.state_dim
    q = np.eye(n) if q is None else np.asarray(q, dtype=float)
    p = solve_lyapunov(avg.closed_loop, q)
    params = bound_params(plant, avg, dwell_time)
    k_norm = spectral_norm(avg.K)
    d = plant.delay
    eig_p = np.linalg.eigvalsh(p)
    return _Core(
        P=p, Q=q, P_norm=spectral_norm(p), K_norm=k_norm,
        lam_min_Q=float(np.linalg.eigvalsh(q).min()),
        lam_min_P=float(eig_p.min()), lam_max_P=float(eig_p.max()),
        params=params,
        nu1=_nu(k_norm, d, params.M_H, params.M_B),
        nu2=_nu(k_norm, d, params.M_A, params.M_B),
    )


@dataclass(frozen=True)
class EpsilonStar:
    value: float
    active: str
    branches: dict
    P: np.ndarray
    Q: np.ndarray
    diagnostics: tuple = ()

    def __float__(self) -> float:
        return self.value


def _epsilon_star(core: _Core) -> EpsilonStar:
    feas = core.feasibility_limit
    target_alpha = core.lam_min_Q / 2.0
    diags = []
    if core.alpha_of(0.0) >= target_alpha:
        diags.append("alpha branch: empty bisection bracket, branch ignored")
        alpha_branch = math.inf
    else:
        alpha_branch = _bisect(core.alpha_of, target_alpha, 0.0, feas)
    lam_branch = invert_increasing(lambda e: lambda_of(e, core.params), core.lambda_target())
    branches = {"feasibility": feas, "alpha": alpha_branch, "lambda": lam_branch}
    active = min(branches, key=branches.get)
    return EpsilonStar(branches[active], active, branches, core.P, core.Q, tuple(diags))


def epsilon_star(avg: AverageSystem, plant: SwitchedPlant, delay: float | None = None,
                 dwell_time: float = 1.0, q=None) -> EpsilonStar:
    """Certified bound on ``eps``: minimum of the feasibility, alpha and lambda branches.

    Raises ``PreconditionError`` if the average pair is not controllable or
    ``A_bar + B_bar K_bar`` is not Hurwitz.
    """
    if delay is not None and delay != plant.delay:
        plant = plant.with_delay(delay)
    return _epsilon_star(_core(plant, avg, dwell_time, q))


@dataclass
class Certificate:
    epsilon: float
    epsilon_star: float
    active_branch: str
    branches: dict
    P: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    delay: float
    dwell_time: float
    M_A: float
    M_B: float
    M_H: float
    K_norm: float
    P_norm: float
    lam_min_Q: float
    delta1: float
    delta2: float
    lambda_of_eps: float
    b_of_eps: float
    alpha_of_eps: float
    nu1: float
    nu2: float
    mu: float
    mu1: float
    mu2: float
    kappa: float
    rho: float
    rho_alt: float
    xi: float
    stable: bool
    norm_label: str = NORM_LABEL
    interpretations: tuple = INTERPRETATIONS
    diagnostics: tuple = ()
    _params: BoundParams | None = field(default=None, repr=False, compare=False)

    def lam(self, eps: float | None = None) -> float:
        return lambda_of(self.epsilon if eps is None else eps, self._params)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("_params")
        d["P"] = self.P.tolist()
        d["Q"] = self.Q.tolist()
        d["K"] = self.K.tolist()
        d["interpretations"] = list(self.interpretations)
        d["diagnostics"] = list(self.diagnostics)
        return _finite_or_none(d)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as f:
                f.write(text + "\n")
        return text


def _finite_or_none(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_none(v) for v in obj]
    return obj


def certify(plant: SwitchedPlant, avg: AverageSystem, dwell_time: float, q=None,
            eps: float | None = None) -> Certificate:
    """Evaluate every constant of the stability certificate.

    Constants that only exist inside the feasibility region (``b``, ``alpha``,
    ``mu``, ...) are NaN outside it.
    """
    core = _core(plant, avg, dwell_time, q)
    es = _epsilon_star(core)
    eps = epsilon(plant, avg) if eps is None else float(eps)
    p = core.params
    d = p.delay
    lam = lambda_of(eps, p)
    nan = math.nan
    if core.margin(eps) > 0:
        b = core.b_of(eps)
        alpha = core.alpha_of(eps)
        mu = min(1.0 - 2.0 * math.exp(d) * core.K_norm**2 * lam**2 * d * core.nu1,
                 (0.5 * core.lam_min_Q - alpha) / core.lam_max_P)
        mu1 = min(core.lam_min_P, b)
        mu2 = max(core.lam_max_P, b * math.exp(d))
        kappa = mu2 / mu1
        rho = math.sqrt(2.0 * mu1 * core.nu1 * core.nu2 / mu2)
        rho_alt = math.sqrt(2.0 * (mu2 / mu1) * core.nu1 * core.nu2)
        xi = mu / 2.0
    else:
        b = alpha = mu = mu1 = mu2 = kappa = rho = rho_alt = xi = nan
    return Certificate(
        epsilon=eps, epsilon_star=es.value, active_branch=es.active, branches=es.branches,
        P=core.P, Q=core.Q, K=avg.K, delay=d, dwell_time=p.dwell_time,
        M_A=p.M_A, M_B=p.M_B, M_H=p.M_H, K_norm=core.K_norm, P_norm=core.P_norm,
        lam_min_Q=core.lam_min_Q,
        delta1=delta1(eps, p), delta2=delta2(eps, p), lambda_of_eps=lam,
        b_of_eps=b, alpha_of_eps=alpha, nu1=core.nu1, nu2=core.nu2,
        mu=mu, mu1=mu1, mu2=mu2, kappa=kappa, rho=rho, rho_alt=rho_alt, xi=xi,
        stable=bool(eps < es.value), diagnostics=es.diagnostics, _params=p,
    )


# ---------------------------------------------------------------------------
# monitors along trajectories


def lyapunov_along(traj: Trajectory, cert: Certificate, w_samples=None) -> np.ndarray:
    """Lyapunov functional at every grid instant with a full ``W`` window.

    ``w_samples`` are ``W`` on the grid ``-D, -D + h, ...`` (``w_along``
    output by default). Entries with ``t > T - D`` are NaN.
    """
    core_margin = cert.lam_min_Q - 2.0 * cert.epsilon * cert.P_norm * (1.0 + cert.K_norm)
    if core_margin <= 0:
        raise DomainError(f"eps={cert.epsilon} outside Lyapunov feasibility")
    b = 2.0 * (cert.P_norm * cert.M_B) ** 2 / core_margin
    if w_samples is None:
        _, w_samples = w_along(traj, cert.K)
    w2 = np.asarray(w_samples, dtype=float) ** 2
    h, n_d = traj.h, traj.n_delay
    kernel = np.exp(h * np.arange(n_d + 1))
    kernel[0] *= 0.5
    kernel[-1] *= 0.5
    integral = h * np.correlate(w2, kernel, mode="valid")
    count = traj.times.size
    v = np.full(count, np.nan)
    m = min(integral.size, count)
    xs = traj.states[:m]
    v[:m] = np.einsum("ij,jk,ik->i", xs, cert.P, xs) + b * integral[:m]
    return v


@dataclass
class BoundCheck:
    W_abs: np.ndarray
    bound: np.ndarray
    max_ratio: float
    violations: int


def mismatch_bound_along(traj: Trajectory, cert: Certificate, k=None) -> BoundCheck:
    """Both sides of ``|W(t)| <= |K_bar| lambda(eps) (|X(t)| + int |U|)`` per grid instant.

    Instants without a full prediction window (``t > T - D``) are NaN.
    """
    k = cert.K if k is None else np.asarray(k, dtype=float)
    _, w = w_along(traj, k)
    n_d = traj.n_delay
    count = traj.times.size
    usable = max(count - n_d, 0)
    w_abs = np.full(count, np.nan)
    bound = np.full(count, np.nan)
    w_abs[:usable] = np.abs(w[n_d:n_d + usable])
    left, right = traj.history.cells()
    same = left * right >= 0
    cell_abs = traj.h * np.where(
        same, 0.5 * (np.abs(left) + np.abs(right)),
        (left**2 + right**2) / (2 * np.maximum(np.abs(left) + np.abs(right), 1e-300)),
    )
    csum = np.concatenate([[0.0], np.cumsum(cell_abs)])
    int_abs = csum[n_d:n_d + usable] - csum[:usable]
    lam = lambda_of(cert.epsilon, cert._params)
    bound[:usable] = cert.K_norm * lam * (np.linalg.norm(traj.states[:usable], axis=1) + int_abs)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(bound[:usable] > 0, w_abs[:usable] / bound[:usable],
                         np.where(w_abs[:usable] > 0, np.inf, 0.0))
    max_ratio = float(ratio.max()) if usable else 0.0
    return BoundCheck(w_abs, bound, max_ratio, int(np.sum(ratio > 1.0)))


def decay_measure(traj: Trajectory) -> np.ndarray:
    """``|X(t)| + sqrt(int_{t-D}^{t} U^2)`` at every grid instant."""
    left, right = traj.history.cells()
    cell_sq = traj.h * (left**2 + left * right + right**2) / 3.0
    csum = np.concatenate([[0.0], np.cumsum(cell_sq)])
    n_d = traj.n_delay
    count = traj.times.size
    sq = csum[n_d:n_d + count] - csum[:count]
    return np.linalg.norm(traj.states, axis=1) + np.sqrt(np.maximum(sq, 0.0))


def decay_fit(traj: Trajectory, delay: float | None = None) -> tuple[float, float]:
    """Least-squares exponential fit over the second half of the horizon.

    Returns ``(rho_hat, xi_hat)`` where the fitted envelope is
    ``rho_hat * y(0) * exp(-xi_hat t)``; ``xi_hat > 0`` means contraction.
    """
    d = traj.delay if delay is None else float(delay)
    if traj.horizon < 5 * d - 1e-9:
        raise DomainError(f"horizon {traj.horizon} shorter than 5 D = {5 * d}")
    y = np.maximum(decay_measure(traj), 1e-300)
    half = traj.times.size // 2
    t = traj.times[half:]
    slope, intercept = np.polyfit(t, np.log(y[half:]), 1)
    y0 = y[0]
    return float(math.exp(intercept) / y0), float(-slope)
