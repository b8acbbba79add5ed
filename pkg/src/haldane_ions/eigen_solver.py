"""Lowest eigenpairs of sparse Hermitian Hamiltonians.

The iterative route is a block Lanczos iteration with full
reorthogonalization and thick restarts that keep a wide block of the lowest
Ritz vectors. The start block comes from a seeded generator, so repeated calls are
bit-reproducible. ``dense_eigenpairs`` is the LAPACK oracle used in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import ConvergenceFailure, InvalidParams
from .spin_model import HamiltonianOperator, SpinModelParams, build_hamiltonian

DEFAULT_SEED = 20_240_917
RESIDUAL_TOL = 1e-10
DEGENERACY_TOL = 1e-10
CLUSTER_THRESHOLD = 1e-3


@dataclass(frozen=True)
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (dim, k), columns
    residuals: np.ndarray
    sector: str = "full"
    iterations: int = 0
    degenerate_blocks: tuple = ()
    basis: object = None

    @property
    def ground_state(self):
        return self.eigenvectors[:, 0]

    def full_vector(self, k=0):
        """Eigenvector ``k`` lifted to the full 3^N space."""
        v = self.eigenvectors[:, k]
        return self.basis.embed(v) if self.basis is not None else v

    def header(self):
        return {
            "eigenvalues": [float(e) for e in self.eigenvalues],
            "residuals": [float(r) for r in self.residuals],
            "sector": self.sector,
            "iterations": int(self.iterations),
            "degenerate_blocks": [list(b) for b in self.degenerate_blocks],
            "dimension": int(self.eigenvectors.shape[0]),
        }


def _as_operator(h, sector=None):
    if isinstance(h, SpinModelParams):
        h = build_hamiltonian(h, total_sz=sector)
    if isinstance(h, HamiltonianOperator):
        return h.matrix, h.basis
    if sp.issparse(h) or isinstance(h, np.ndarray):
        return h, None
    raise InvalidParams(f"unsupported operator type {type(h).__name__}")


def degenerate_blocks(values, tol=DEGENERACY_TOL):
    blocks, start = [], 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > tol:
            if i - start > 1:
                blocks.append(tuple(range(start, i)))
            start = i
    return tuple(blocks)


def dense_eigenpairs(h, k=None, sector=None):
    """Exact diagonalization of the dense matrix (small systems only)."""
    mat, basis = _as_operator(h, sector)
    dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat)
    w, v = np.linalg.eigh(dense)
    k = len(w) if k is None else k
    res = np.linalg.norm(dense @ v[:, :k] - v[:, :k] * w[:k], axis=0)
    tag = basis.tag if basis is not None else "full"
    return EigenResult(w[:k], v[:, :k], res, tag, 0, degenerate_blocks(w[:k]), basis)


def _orthonormalize(w, q_blocks, scale):
    for _ in range(2):
        for q in q_blocks:
            w = w - q @ (q.conj().T @ w)
    u, s, _ = np.linalg.svd(w, full_matrices=False)
    keep = s > 1e-10 * max(scale, 1.0)
    return u[:, keep]


def lowest_eigenpairs(
    h,
    k=1,
    sector=None,
    tol=RESIDUAL_TOL,
    block_size=None,
    max_basis=240,
    max_restarts=60,
    seed=DEFAULT_SEED,
):
    """Return the ``k`` lowest eigenpairs by restarted block Lanczos.

    Raises ConvergenceFailure (carrying the best residuals) when the
    restart budget runs out.
    """
    mat, basis = _as_operator(h, sector)
    dim = mat.shape[0]
    if k < 1 or k > dim:
        raise InvalidParams(f"k must satisfy 1 <= k <= {dim}, got {k}")
    dtype = np.result_type(mat.dtype, np.float64)
    # two guard vectors so a restart never splits a degenerate pair at the k-th level
    b = min(dim, block_size or k + 2)
    max_basis = min(dim, max(max_basis, 4 * b))
    rng = np.random.default_rng(seed)
    start = rng.standard_normal((dim, b)).astype(dtype)
    scale = float(abs(mat).sum(axis=1).max()) if dim else 1.0
    tag = basis.tag if basis is not None else "full"

    total_iter = 0
    for _restart in range(max_restarts + 1):
        q_blocks = [_orthonormalize(start, [], 1.0)]
        hq_blocks = [mat @ q_blocks[0]]
        m = q_blocks[0].shape[1]
        while True:
            total_iter += 1
            exhausted = False
            if m < max_basis:
                w = _orthonormalize(hq_blocks[-1][:, :b], q_blocks, scale)
                if w.shape[1] == 0:
                    exhausted = True
                else:
                    w = w[:, : max_basis - m]
                    q_blocks.append(w)
                    hq_blocks.append(mat @ w)
                    m += w.shape[1]
            full_basis = m >= max_basis or exhausted
            if not (full_basis or total_iter % 4 == 0):
                continue
            q = np.hstack(q_blocks)
            hq = np.hstack(hq_blocks)
            t = q.conj().T @ hq
            t = 0.5 * (t + t.conj().T)
            theta, y = np.linalg.eigh(t)
            kk = min(k, len(theta))
            x = q @ y[:, :kk]
            r = np.linalg.norm(hq @ y[:, :kk] - x * theta[:kk], axis=0)
            if kk == k and np.all(r < tol):
                x = x / np.linalg.norm(x, axis=0)
                vals = theta[:k]
                return EigenResult(vals, x, r, tag, total_iter, degenerate_blocks(vals), basis)
            if full_basis:
                # thick restart: keep a wide Ritz block, expand from the lowest b residuals
                nb = min(len(theta), max(b, max_basis // 4))
                start = q @ y[:, :nb]
                break
    raise ConvergenceFailure(
        f"Lanczos did not reach residual {tol:g} after {max_restarts} restarts", residuals=r
    )


@dataclass(frozen=True)
class GapResult:
    e0: float
    e1: float
    gap: float
    bulk_gap: float
    multiplet_size: int
    ground_sector: int
    levels: tuple  # (energy, total_sz) ascending
    cluster_threshold: float = CLUSTER_THRESHOLD
    notes: tuple = field(default_factory=tuple)

    def to_dict(self):
        return {
            "e0": self.e0,
            "e1": self.e1,
            "gap": self.gap,
            "bulk_gap": self.bulk_gap,
            "multiplet_size": self.multiplet_size,
            "ground_sector": self.ground_sector,
            "cluster_threshold": self.cluster_threshold,
            "levels": [[e, s] for e, s in self.levels],
            "notes": list(self.notes),
        }


def energy_gap(params, sectors=(0, 1, -1, 2, -2), k_per_sector=3, cluster_threshold=CLUSTER_THRESHOLD, **solver_kw):
    """Ground energy, first excitation and bulk gap over several S_z sectors.

    ``sectors="all"`` scans every sector. The bulk gap skips the low
    multiplet: levels chained to E0 by spacings below ``cluster_threshold``.
    """
    n = params.n_sites
    if sectors == "all":
        sectors = range(-n, n + 1)
    levels = []
    for s in sectors:
        if abs(s) > n:
            continue
        h = build_hamiltonian(params, total_sz=s)
        kk = min(k_per_sector, h.dim)
        res = lowest_eigenpairs(h, kk, **solver_kw) if h.dim > 1 else dense_eigenpairs(h)
        levels.extend((float(e), int(s)) for e in res.eigenvalues)
    levels.sort()
    e0 = levels[0][0]
    e1 = levels[1][0] if len(levels) > 1 else float("nan")
    size = 1
    while size < len(levels) and levels[size][0] - levels[size - 1][0] < cluster_threshold:
        size += 1
    bulk = levels[size][0] - e0 if size < len(levels) else float("nan")
    notes = (
        f"bulk gap excludes a {size}-level multiplet chained by spacings < {cluster_threshold:g} J",
    )
    return GapResult(e0, e1, e1 - e0, bulk, size, levels[0][1], tuple(levels), cluster_threshold, notes)


def ground_state(params, sector=0, **solver_kw):
    """Lowest eigenpair inside one S_z sector (default total S_z = 0)."""
    return lowest_eigenpairs(build_hamiltonian(params, total_sz=sector), 1, **solver_kw)
