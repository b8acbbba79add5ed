"""Spin-1 chains: operators, S_z sectors, Hamiltonian assembly, dressed basis.

Basis convention: site-major tensor product with site 0 the most significant
digit, local order ``(+1, 0, -1)``. A product state ``|m_0, ..., m_{N-1}>``
has index ``sum_i d_i 3**(N-1-i)`` with ``d = 1 - m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.linalg import expm

from .exceptions import DimensionBudgetExceeded, DimensionMismatch, InvalidParams

LOCAL_M = np.array([1, 0, -1])
BASIS_TAG = "site-major;local=(+1,0,-1)"
MAX_FULL_SITES = 12

_R2 = np.sqrt(2.0)


def spin1_operators():
    """Return a dict with Sx, Sy, Sz, Sz2, Sp, Sm, I (complex 3x3)."""
    sp_ = np.array([[0, _R2, 0], [0, 0, _R2], [0, 0, 0]], dtype=complex)
    sm = sp_.conj().T
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    sx = (sp_ + sm) / 2
    sy = (sp_ - sm) / 2j
    return {"Sx": sx, "Sy": sy, "Sz": sz, "Sz2": sz @ sz, "Sp": sp_, "Sm": sm, "I": np.eye(3, dtype=complex)}


# columns are |u>, |D>, |d> written in the bare (|1>, |0>, |-1>) basis
DRESSED_VECTORS = np.array(
    [
        [0.5, -1 / _R2, 0.5],
        [1 / _R2, 0.0, -1 / _R2],
        [0.5, 1 / _R2, 0.5],
    ],
    dtype=complex,
)


def theta_rotation(theta):
    """exp(-i theta S_x): maps S_z eigenvectors onto S_{z,theta} = cos S_z - sin S_y."""
    return expm(-1j * theta * spin1_operators()["Sx"])


def dressed_unitary(theta=0.0):
    """Site-local map from (theta-rotated) dressed coefficients to bare ones."""
    return DRESSED_VECTORS @ theta_rotation(theta)


@dataclass(frozen=True)
class SpinModelParams:
    """Parameters of the spin-1 XXZ chain with single-ion anisotropy.

    Energies are in units of ``j_scale`` (the nearest-neighbour XY strength,
    MHz); ``couplings`` holds J_ij / j_scale. ``couplings=None`` means a
    uniform nearest-neighbour chain with J = 1.
    """

    n_sites: int
    lam: float = 1.0
    d_coeff: float = 0.0
    h_staggered: float = 0.0
    boundary: str = "open"
    interaction_range: str = "full"
    couplings: np.ndarray | None = None
    j_scale: float = 1.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 2:
            raise InvalidParams(f"n_sites must be an integer >= 2, got {self.n_sites}")
        if self.boundary not in ("open", "periodic"):
            raise InvalidParams(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")
        if self.interaction_range not in ("full", "nearest"):
            raise InvalidParams("interaction_range must be 'full' or 'nearest'")
        if self.couplings is not None:
            j = np.array(self.couplings, dtype=float)
            if j.shape != (self.n_sites, self.n_sites):
                raise InvalidParams("couplings must be an n_sites x n_sites matrix")
            if not np.allclose(j, j.T, atol=1e-12):
                raise InvalidParams("couplings must be symmetric")
            j.setflags(write=False)
            object.__setattr__(self, "couplings", j)

    def replace(self, **kw):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return SpinModelParams(**d)

    def bonds(self):
        """List of (i, j, J_ij) with i < j after range truncation."""
        n = self.n_sites
        out = []
        if self.couplings is None:
            for i in range(n - 1):
                out.append((i, i + 1, 1.0))
            if self.boundary == "periodic" and n > 2:
                out.append((0, n - 1, 1.0))
            return out
        j = self.couplings
        for i in range(n):
            for k in range(i + 1, n):
                nearest = k == i + 1 or (self.boundary == "periodic" and n > 2 and (i, k) == (0, n - 1))
                if self.interaction_range == "nearest" and not nearest:
                    continue
                if j[i, k] != 0.0:
                    out.append((i, k, float(j[i, k])))
        return out

    def to_dict(self):
        return {
            "n_sites": self.n_sites,
            "lam": self.lam,
            "d_coeff": self.d_coeff,
            "h_staggered": self.h_staggered,
            "boundary": self.boundary,
            "interaction_range": self.interaction_range,
            "couplings": None if self.couplings is None else self.couplings.tolist(),
            "j_scale": self.j_scale,
        }


@dataclass(frozen=True)
class SectorBasis:
    n_sites: int
    total_sz: int | None
    states: np.ndarray  # sorted indices into the 3^N space

    @property
    def dim(self):
        return len(self.states)

    def index_of(self, full_index):
        """Positions of full-space indices inside the sector (-1 if absent)."""
        full_index = np.asarray(full_index)
        pos = np.searchsorted(self.states, full_index)
        pos = np.clip(pos, 0, self.dim - 1)
        return np.where(self.states[pos] == full_index, pos, -1)

    def embed(self, vec):
        """Lift a sector vector into the full 3^N space."""
        vec = np.asarray(vec)
        out = np.zeros(3**self.n_sites, dtype=vec.dtype)
        out[self.states] = vec
        return out

    def restrict(self, full_vec):
        return np.asarray(full_vec)[self.states]

    @property
    def tag(self):
        return "full" if self.total_sz is None else f"Sz={self.total_sz}"


def _check_budget(n_sites, max_sites):
    if n_sites > max_sites:
        raise DimensionBudgetExceeded(
            f"3^{n_sites} exceeds the configured budget of {max_sites} sites"
        )


@lru_cache(maxsize=32)
def _digits(n_sites):
    idx = np.arange(3**n_sites)
    pw = 3 ** np.arange(n_sites - 1, -1, -1)
    d = (idx[:, None] // pw[None, :]) % 3
    d.setflags(write=False)
    return d


def site_magnetizations(n_sites):
    """(3^N, N) int array of m_i for every product state."""
    return 1 - _digits(n_sites)


def sector_basis(n_sites, total_sz=None, max_sites=MAX_FULL_SITES):
    """Product states with sum_i m_i == total_sz, in increasing index order."""
    _check_budget(n_sites, max_sites)
    if total_sz is None:
        return SectorBasis(n_sites, None, np.arange(3**n_sites))
    if abs(total_sz) > n_sites:
        raise InvalidParams(f"|total_sz| = {abs(total_sz)} exceeds n_sites = {n_sites}")
    m = site_magnetizations(n_sites).sum(axis=1)
    return SectorBasis(n_sites, int(total_sz), np.flatnonzero(m == total_sz))


@dataclass(frozen=True)
class HamiltonianOperator:
    matrix: sp.csr_matrix
    basis: SectorBasis
    terms: tuple  # (name, coefficient, sites) descriptors
    params: SpinModelParams | None = None

    @property
    def dim(self):
        return self.matrix.shape[0]

    def descriptor(self):
        return {
            "dimension": int(self.dim),
            "basis": BASIS_TAG,
            "sector": self.basis.tag,
            "terms": [{"name": n, "coefficient": c, "sites": list(s)} for n, c, s in self.terms],
        }

    def __matmul__(self, vec):
        return self.matrix @ vec


def _assemble(n_sites, basis, diag, rows, cols, vals):
    d = basis.dim
    r = np.concatenate([np.arange(d)] + rows)
    c = np.concatenate([np.arange(d)] + cols)
    v = np.concatenate([diag] + vals)
    mat = sp.coo_matrix((v, (r, c)), shape=(d, d)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def build_hamiltonian(params, total_sz=None, max_sites=MAX_FULL_SITES):
    """Sparse H = sum_{i<j} J_ij (XX + YY + lam ZZ) + D sum Sz^2 - h sum (-1)^i Sz.

    Works in the full space (``total_sz=None``) or one total-S_z sector. All
    entries are real, so the matrix is stored as float64.
    """
    if not isinstance(params, SpinModelParams):
        raise InvalidParams("params must be SpinModelParams")
    n = params.n_sites
    _check_budget(n, max_sites)
    basis = sector_basis(n, total_sz, max_sites)
    mags = site_magnetizations(n)[basis.states]
    pw = 3 ** np.arange(n - 1, -1, -1)

    diag = np.zeros(basis.dim)
    rows, cols, vals = [], [], []
    terms = []
    for i, j, jij in params.bonds():
        mi, mj = mags[:, i], mags[:, j]
        if params.lam != 0.0:
            diag += jij * params.lam * mi * mj
        # (S+_i S-_j + S-_i S+_j) / 2 has matrix element 1 for allowed flips
        for di, dj in ((1, -1), (-1, 1)):
            ok = (mi + di <= 1) & (mi + di >= -1) & (mj + dj <= 1) & (mj + dj >= -1)
            src = np.flatnonzero(ok)
            tgt_full = basis.states[src] - di * pw[i] - dj * pw[j]
            tgt = basis.index_of(tgt_full)
            rows.append(tgt)
            cols.append(src)
            vals.append(np.full(src.size, jij))
        terms.append(("XXZ", jij, (i, j)))
    if params.d_coeff != 0.0:
        diag += params.d_coeff * np.sum(mags**2, axis=1)
        terms.append(("Sz2", params.d_coeff, tuple(range(n))))
    if params.h_staggered != 0.0:
        diag += staggered_diagonal(params.h_staggered, n)[basis.states]
        terms.append(("staggered", params.h_staggered, tuple(range(n))))
    terms.append(("lambda", params.lam, ()))
    mat = _assemble(n, basis, diag, rows, cols, vals)
    return HamiltonianOperator(mat, basis, tuple(terms), params)


def staggered_diagonal(h, n_sites):
    """Diagonal of -h sum_i (-1)^i S_z^i over the full 3^N space."""
    signs = (-1.0) ** np.arange(n_sites)
    return -h * site_magnetizations(n_sites) @ signs


def staggered_field_term(h, n_sites, total_sz=None):
    """H_pert = -h sum_i (-1)^i S_z^i as a diagonal sparse operator."""
    basis = sector_basis(n_sites, total_sz)
    diag = staggered_diagonal(h, n_sites)[basis.states]
    mat = sp.diags(diag, format="csr")
    return HamiltonianOperator(mat, basis, (("staggered", h, tuple(range(n_sites))),))


def total_sz_operator(n_sites, total_sz=None):
    basis = sector_basis(n_sites, total_sz)
    m = site_magnetizations(n_sites)[basis.states].sum(axis=1).astype(float)
    return sp.diags(m, format="csr")


def local_operator(op, site, n_sites):
    """Dense/sparse kron embedding of a 3x3 operator (full space, small N)."""
    out = sp.identity(1, dtype=complex, format="csr")
    for k in range(n_sites):
        out = sp.kron(out, sp.csr_matrix(op) if k == site else sp.identity(3, dtype=complex), format="csr")
    return out


def apply_local(psi, op, site, n_sites):
    """Apply a single-site 3x3 operator to a full-space state vector."""
    t = np.asarray(psi).reshape((3,) * n_sites)
    t = np.tensordot(op, t, axes=([1], [site]))
    return np.moveaxis(t, 0, site).reshape(-1)


def apply_product(psi, ops, n_sites):
    """Apply a product of single-site operators ``{site: op}``."""
    out = np.asarray(psi, dtype=complex)
    for site, op in sorted(ops.items()):
        out = apply_local(out, op, site, n_sites)
    return out


def _n_sites_from_dim(dim):
    n = int(round(np.log(dim) / np.log(3)))
    if 3**n != dim:
        raise DimensionMismatch(f"dimension {dim} is not a power of 3")
    return n


def dressed_transform(obj, direction="bare_to_dressed", theta=0.0):
    """Change a state vector or operator between bare and dressed bases.

    ``obj`` lives in a 3^k space. The site-local unitary ``U = V R(theta)``
    maps dressed coefficients to bare ones, so bare->dressed applies U^dagger.
    """
    obj = np.asarray(obj, dtype=complex)
    if direction not in ("bare_to_dressed", "dressed_to_bare"):
        raise ValueError(f"unknown direction {direction!r}")
    u = dressed_unitary(theta)
    local = u.conj().T if direction == "bare_to_dressed" else u
    if obj.ndim == 1:
        n = _n_sites_from_dim(obj.size)
        out = obj
        for s in range(n):
            out = apply_local(out, local, s, n)
        return out
    if obj.ndim == 2 and obj.shape[0] == obj.shape[1]:
        n = _n_sites_from_dim(obj.shape[0])
        full = np.ones((1, 1), dtype=complex)
        for _ in range(n):
            full = np.kron(full, local)
        return full @ obj @ full.conj().T
    raise DimensionMismatch(f"cannot transform object of shape {obj.shape}")


def product_state(ms):
    """Full-space vector of the product state |m_0, m_1, ...>."""
    n = len(ms)
    idx = sum((1 - m) * 3 ** (n - 1 - i) for i, m in enumerate(ms))
    v = np.zeros(3**n, dtype=complex)
    v[idx] = 1.0
    return v
