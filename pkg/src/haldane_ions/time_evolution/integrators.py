"""Schrodinger-equation integrators over a time grid.

``evolve_state`` takes a Hamiltonian provider ``t -> H(t)`` (dense, sparse
or a callable matvec) in angular units, i.e. the propagator is
``exp(-i t H)``. Two methods:

* ``"krylov"`` treats H as constant over each grid interval (exact for
  time-independent segments; H is sampled at the interval midpoint).
* ``"cf4"`` is the fourth-order commutator-free Magnus scheme with two
  Gauss-Legendre nodes and two Krylov exponentials per substep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InvalidParams
from .krylov import KRYLOV_DIM, KRYLOV_TOL, KrylovStats, as_matvec, krylov_expm_multiply

NORM_TOL = 1e-8

_C1 = 0.5 - np.sqrt(3) / 6
_C2 = 0.5 + np.sqrt(3) / 6
_A1 = (3 - 2 * np.sqrt(3)) / 12
_A2 = (3 + 2 * np.sqrt(3)) / 12


@dataclass
class Trajectory:
    """Time grid with recorded observables, norms and optional snapshots."""

    times: np.ndarray
    observables: dict
    norms: np.ndarray
    states: list | None = None
    meta: dict = field(default_factory=dict)

    @property
    def norm_drift(self):
        return float(np.max(np.abs(self.norms - 1.0))) if self.norms.size else 0.0

    @property
    def final_state(self):
        return None if not self.states else self.states[-1]

    def columns(self):
        return ["time"] + list(self.observables)

    def rows(self):
        cols = [self.times] + [np.asarray(v) for v in self.observables.values()]
        return [list(map(float, r)) for r in zip(*cols)]

    def to_dict(self):
        return {
            "times": self.times.tolist(),
            "observables": {k: np.asarray(v).tolist() for k, v in self.observables.items()},
            "norm_drift": self.norm_drift,
            "meta": self.meta,
        }


def _combine(h1, h2, a, b):
    """Matvec for a*H(t1) + b*H(t2)."""
    m1, m2 = as_matvec(h1), as_matvec(h2)
    return lambda v: a * m1(v) + b * m2(v)


def cf4_step(provider, psi, t, dt, m=KRYLOV_DIM, tol=KRYLOV_TOL, stats=None):
    """One commutator-free fourth-order Magnus step from t to t + dt."""
    h1 = provider(t + _C1 * dt)
    h2 = provider(t + _C2 * dt)
    psi = krylov_expm_multiply(_combine(h1, h2, _A2, _A1), psi, dt, m, tol, stats=stats)
    return krylov_expm_multiply(_combine(h1, h2, _A1, _A2), psi, dt, m, tol, stats=stats)


def evolve_state(
    provider,
    psi0,
    grid,
    method="krylov",
    max_step=None,
    observables=None,
    keep_states=False,
    krylov_dim=KRYLOV_DIM,
    tol=KRYLOV_TOL,
    step_limit=None,
):
    """Integrate ``i d/dt psi = H(t) psi`` and sample on ``grid``.

    ``observables`` maps names to ``f(psi, t) -> float``. ``max_step``
    bounds the substep of the ``cf4`` method (default: grid spacing);
    ``step_limit(t)`` can tighten it further where H is stiff (the
    smallest value at the interval ends and midpoint is used).
    """
    if not callable(provider) or hasattr(provider, "shape"):
        const = provider
        provider = lambda t: const  # noqa: E731
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) < 0) and np.any(np.diff(grid) > 0):
        raise InvalidParams("grid must be a 1-D monotonic array")
    if method not in ("krylov", "cf4"):
        raise InvalidParams(f"unknown method {method!r}")
    psi = np.array(psi0, dtype=complex).reshape(-1)
    n0 = np.linalg.norm(psi)
    if abs(n0 - 1.0) > NORM_TOL:
        raise InvalidParams(f"psi0 must be normalized (norm {n0:.12g})")
    observables = observables or {}
    stats = KrylovStats()
    rec = {k: [] for k in observables}
    norms, states = [], []

    def record(p, t):
        norms.append(np.linalg.norm(p))
        for k, f in observables.items():
            rec[k].append(f(p, t))
        if keep_states:
            states.append(p.copy())

    record(psi, grid[0])
    for t0, t1 in zip(grid[:-1], grid[1:]):
        span = t1 - t0
        if span == 0:
            record(psi, t1)
            continue
        if method == "krylov":
            psi = krylov_expm_multiply(provider(0.5 * (t0 + t1)), psi, span, krylov_dim, tol, stats=stats)
        else:
            cap = max_step or abs(span)
            if step_limit is not None:
                cap = min(cap, *(step_limit(t) for t in (t0, 0.5 * (t0 + t1), t1)))
            n_sub = max(1, int(np.ceil(abs(span) / cap - 1e-9)))
            dt = span / n_sub
            for k in range(n_sub):
                psi = cf4_step(provider, psi, t0 + k * dt, dt, krylov_dim, tol, stats)
        record(psi, t1)
    meta = {
        "method": method,
        "krylov_dim": krylov_dim,
        "tolerance": tol,
        "substeps": stats.substeps,
        "rejected": stats.rejected,
        "matvecs": stats.matvecs,
    }
    return Trajectory(
        grid.copy(),
        {k: np.asarray(v) for k, v in rec.items()},
        np.asarray(norms),
        states if keep_states else None,
        meta,
    )
