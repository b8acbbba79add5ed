"""Lanczos-exponential propagation ``exp(-i t H) v`` for Hermitian ``H``.

``H`` may be a dense array, a sparse matrix or any callable ``v -> H v``.
Long intervals are split into substeps; each substep is accepted when the
a-posteriori Krylov error estimate falls below the local tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from ..exceptions import StepControlFailure

KRYLOV_DIM = 20
KRYLOV_TOL = 1e-12
MIN_STEP = 1e-12
BREAKDOWN = 1e-13


@dataclass
class KrylovStats:
    substeps: int = 0
    rejected: int = 0
    matvecs: int = 0
    max_error: float = 0.0


def as_matvec(h):
    if callable(h) and not hasattr(h, "shape"):
        return h
    return lambda v: h @ v


def _lanczos(matvec, v, m):
    """Orthonormal Krylov basis and tridiagonal projection (full reorthogonalization)."""
    n = v.size
    m = min(m, n)
    q = np.zeros((m + 1, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    beta0 = np.linalg.norm(v)
    q[0] = v / beta0
    k = m
    for j in range(m):
        w = matvec(q[j])
        alpha[j] = np.vdot(q[j], w).real
        w = w - alpha[j] * q[j] - (beta[j - 1] * q[j - 1] if j else 0.0)
        w -= q[: j + 1].T @ (q[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        if beta[j] < BREAKDOWN * max(1.0, abs(alpha[j])):
            k = j + 1
            beta[j] = 0.0
            break
        q[j + 1] = w / beta[j]
    t = np.diag(alpha[:k]) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
    return q[:k], t, beta[k - 1], beta0, k


def krylov_step(matvec, v, dt, m=KRYLOV_DIM):
    """One Krylov step; returns (new vector, error estimate, Krylov size)."""
    q, t, b_last, b0, k = _lanczos(matvec, v, m)
    e = expm(-1j * dt * t)[:, 0]
    err = b0 * abs(b_last) * abs(e[-1]) * abs(dt) if b_last else 0.0
    return b0 * (q.T @ e), float(err), k


def krylov_expm_multiply(h, v, t, m=KRYLOV_DIM, tol=KRYLOV_TOL, min_step=MIN_STEP, stats=None):
    """Return ``exp(-i t H) v`` with adaptive substeps.

    ``tol`` bounds the accumulated error estimate over the interval.
    """
    matvec = as_matvec(h)
    stats = stats if stats is not None else KrylovStats()
    v = np.asarray(v, dtype=complex)
    if t == 0 or not np.any(v):
        return v.copy()
    total = abs(t)
    sign = np.sign(t)
    done = 0.0
    step = total
    while done < total * (1 - 1e-15):
        step = min(step, total - done)
        w, err, k = krylov_step(matvec, v, sign * step, m)
        stats.matvecs += k
        if err <= tol * step / total or k < m:
            v = w
            done += step
            stats.substeps += 1
            stats.max_error = max(stats.max_error, err)
            if err < 0.1 * tol * step / total:
                step *= 1.5
            continue
        stats.rejected += 1
        step *= 0.5
        if step < min_step:
            raise StepControlFailure(
                f"Krylov error {err:.3e} above tolerance at step {step:.3e} (dimension {m})"
            )
    return v
