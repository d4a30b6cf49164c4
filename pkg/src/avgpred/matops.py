"""Small dense matrix numerics.

Everything downstream works with plain ``numpy`` float arrays. The helpers
here validate shapes, and provide the handful of matrix functions the
predictor and certificate code needs: the matrix exponential, the induced
2-norm, a Kronecker-form Lyapunov solver, Ackermann pole placement and a
Hurwitz test.

The matrix norm used throughout the package is the spectral norm
(largest singular value); certificate outputs carry ``NORM_LABEL`` so the
choice stays visible.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionError, PreconditionError

NORM_LABEL = "spectral"

CONTROLLABILITY_RTOL = 1e-9
HURWITZ_MARGIN = 1e-9


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a finite 2-D float array.

    1-D input is treated as a single row.
    """
    a = np.array(m, dtype=float)
    if a.ndim == 1:
        a = a[np.newaxis, :]
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def as_square(m, name: str = "matrix") -> np.ndarray:
    a = as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def expm(m, t: float = 1.0) -> np.ndarray:
    """Matrix exponential ``e^{M t}``.

    Backed by scipy's scaling-and-squaring Pade implementation.
    """
    a = as_square(m)
    t = float(t)
    if not np.isfinite(t) or t < 0:
        raise ValueError(f"t must be finite and non-negative, got {t}")
    return scipy.linalg.expm(a * t)


def spectral_norm(m) -> float:
    """Induced 2-norm, i.e. the largest singular value."""
    return float(np.linalg.norm(as_matrix(m), 2))


def is_hurwitz(m, margin: float = HURWITZ_MARGIN) -> bool:
    a = as_square(m)
    return bool(np.max(np.linalg.eigvals(a).real) < -margin)


def _check_spd(q: np.ndarray) -> None:
    if not np.allclose(q, q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(q).max())):
        raise ValueError("Q must be symmetric")
    if np.min(np.linalg.eigvalsh(q)) <= 0:
        raise ValueError("Q must be positive definite")


def solve_lyapunov(h, q) -> np.ndarray:
    """Solve ``H^T P + P H = -Q`` for symmetric positive-definite ``P``.

    The equation is vectorized as ``(I kron H^T + H^T kron I) vec(P) = -vec(Q)``
    and solved directly; the state dimensions in this package are tiny.

    Raises
    ------
    PreconditionError
        If ``H`` is not Hurwitz (uncontracted dynamics).
    ValueError
        If ``Q`` is not symmetric positive definite.
    """
    h = as_square(h, "H")
    q = as_square(q, "Q")
    if h.shape != q.shape:
        raise DimensionError(f"H {h.shape} and Q {q.shape} differ in size")
    if not is_hurwitz(h):
        raise PreconditionError("uncontracted dynamics: closed-loop matrix is not Hurwitz")
    _check_spd(q)
    n = h.shape[0]
    eye = np.eye(n)
    # column-major vec: vec(H^T P) = (I kron H^T) vec(P), vec(P H) = (H^T kron I) vec(P)
    lhs = np.kron(eye, h.T) + np.kron(h.T, eye)
    vec_p = np.linalg.solve(lhs, -q.reshape(-1, order="F"))
    p = vec_p.reshape((n, n), order="F")
    return 0.5 * (p + p.T)


def controllability_matrix(a, b) -> np.ndarray:
    a = as_square(a, "A")
    b = as_matrix(b, "B")
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"B has {b.shape[0]} rows, A is {a.shape[0]}x{a.shape[0]}")
    blocks = [b]
    for _ in range(a.shape[0] - 1):
        blocks.append(a @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(a, b, rtol: float = CONTROLLABILITY_RTOL) -> bool:
    sv = np.linalg.svd(controllability_matrix(a, b), compute_uv=False)
    return bool(sv[-1] > rtol * sv[0]) if sv[0] > 0 else False


def place_poles_single_input(a, b, poles) -> np.ndarray:
    """Row gain ``K`` with ``eig(A + B K)`` equal to ``poles`` (Ackermann).

    Note the sign: the closed loop is ``A + B K``, matching ``u = K x``.
    """
    a = as_square(a, "A")
    b = as_matrix(b, "B")
    n = a.shape[0]
    if b.shape != (n, 1):
        raise DimensionError(f"B must be {n}x1 for single-input placement, got {b.shape}")
    poles = np.asarray(poles, dtype=complex).ravel()
    if poles.size != n:
        raise ValueError(f"need {n} poles, got {poles.size}")
    if not np.allclose(np.sort_complex(poles), np.sort_complex(poles.conj()), atol=1e-12):
        raise ValueError("poles must be closed under complex conjugation")
    if not is_controllable(a, b):
        raise PreconditionError("pair (A,B) not controllable")

    coeffs = np.poly(poles).real
    phi = np.zeros_like(a)
    for c in coeffs:
        phi = phi @ a + c * np.eye(n)
    ctrb = controllability_matrix(a, b)
    last_row = np.linalg.solve(ctrb.T, np.eye(n)[:, -1])
    return -(last_row @ phi)[np.newaxis, :]
