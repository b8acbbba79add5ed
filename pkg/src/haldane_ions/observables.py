"""Ground-state diagnostics: correlations, string order, entanglement, noise checks.

States are full-space vectors in the spin_model basis convention. Sector
vectors must be lifted first (``SectorBasis.embed`` or
``EigenResult.full_vector``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.optimize import least_squares, nnls
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_1d, check_state, check_xy_1d
from .exceptions import InsufficientData
from .spin_model import DRESSED_VECTORS, apply_local, site_magnetizations, spin1_operators

_OPS = spin1_operators()
AXIS_OPS = {"x": _OPS["Sx"], "y": _OPS["Sy"], "z": _OPS["Sz"]}
SPECTRUM_TOL = 1e-2
SCHMIDT_FLOOR = 1e-8
ZERO_FLOOR = 1e-13


def _axis_op(axis):
    try:
        return AXIS_OPS[axis]
    except KeyError:
        raise ValueError(f"axis must be one of x, y, z; got {axis!r}") from None


@dataclass(frozen=True)
class CorrelationReport:
    axis: str
    matrix: np.ndarray
    separations: np.ndarray
    values: np.ndarray  # mean |C_ij| over the pairs at each separation
    pairs: dict
    fit: dict | None = None

    def to_dict(self):
        return {
            "axis": self.axis,
            "matrix": self.matrix.tolist(),
            "separations": self.separations.tolist(),
            "values": self.values.tolist(),
            "pairs": {str(k): [list(p) for p in v] for k, v in self.pairs.items()},
            "fit": self.fit,
        }


def correlation_function(psi, axis="z", trim=0):
    """Connected correlations C_ij = <S_i S_j> - <S_i><S_j> along ``axis``.

    ``values[r]`` averages |C_ij| over pairs at separation r that stay
    ``trim`` sites away from both chain ends.
    """
    psi, n = check_state(psi)
    op = _axis_op(axis)
    if axis == "z":
        prob = np.abs(psi) ** 2
        m = site_magnetizations(n).astype(float)
        mean = prob @ m
        two = (m * prob[:, None]).T @ m
    else:
        phis = np.array([apply_local(psi, op, i, n) for i in range(n)])
        two = (phis.conj() @ phis.T).real
        mean = np.array([np.vdot(psi, phis[i]).real for i in range(n)])
    c = two - np.outer(mean, mean)
    c = 0.5 * (c + c.T)
    seps, vals, pairs = [], [], {}
    for r in range(1, n):
        ps = [(i, i + r) for i in range(trim, n - trim - r)]
        if not ps:
            continue
        seps.append(r)
        vals.append(float(np.mean([abs(c[i, j]) for i, j in ps])))
        pairs[r] = ps
    return CorrelationReport(axis, c, np.array(seps, dtype=float), np.array(vals), pairs)


class CorrelationDecayFit(RegressorMixin, BaseEstimator):
    """Fit ``A exp(-r/xi) + B r^-a`` with A, B >= 0.

    The amplitudes enter linearly and are eliminated by non-negative least
    squares for each trial ``(xi, a)`` (variable projection); the outer
    problem starts from a fixed grid of ``(xi, a)`` guesses, so the fit is
    deterministic. Residuals are relative (weighted by 1/|C|).
    """

    def __init__(self, xi_grid=(0.5, 1.0, 2.0, 4.0, 8.0), a_grid=(1.0, 2.0, 3.0, 4.0), degenerate_ratio=1e-6):
        self.xi_grid = xi_grid
        self.a_grid = a_grid
        self.degenerate_ratio = degenerate_ratio

    @staticmethod
    def _design(r, log_xi, a):
        return np.column_stack([np.exp(-r / np.exp(log_xi)), r ** (-a)])

    def _amplitudes(self, r, y, w, p):
        m = self._design(r, *p) * w[:, None]
        coef, _ = nnls(m, y * w)
        return coef, m @ coef - y * w

    def fit(self, X, y):
        r, c = check_xy_1d(X, y, min_samples=4)
        check_positive_1d(r, "separations")
        if np.unique(r).size < 4:
            raise InsufficientData("correlation fit needs at least 4 distinct separations")
        c = np.abs(c)
        w = 1.0 / np.maximum(c, 1e-300)
        best = None
        for xi0 in self.xi_grid:
            for a0 in self.a_grid:
                sol = least_squares(
                    lambda p: self._amplitudes(r, c, w, p)[1],
                    x0=[np.log(xi0), a0],
                    bounds=([np.log(1e-3), 0.0], [np.log(1e4), 20.0]),
                    xtol=1e-15,
                    ftol=1e-15,
                    gtol=1e-15,
                    max_nfev=2000,
                )
                if best is None or sol.cost < best.cost - 1e-300:
                    best = sol
        coef, resid = self._amplitudes(r, c, w, best.x)
        self.amplitude_exp_ = float(coef[0])
        self.xi_ = float(np.exp(best.x[0]))
        self.amplitude_pow_ = float(coef[1])
        self.power_ = float(best.x[1])
        self.residual_ = float(np.sqrt(np.mean(resid**2)))
        big = max(self.amplitude_exp_, self.amplitude_pow_)
        self.degenerate_ = bool(min(self.amplitude_exp_, self.amplitude_pow_) <= self.degenerate_ratio * big)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "xi_")
        r = np.asarray(X, dtype=float).reshape(-1)
        return self.amplitude_exp_ * np.exp(-r / self.xi_) + self.amplitude_pow_ * r ** (-self.power_)

    def summary(self):
        check_is_fitted(self, "xi_")
        return {
            "A": self.amplitude_exp_,
            "xi": self.xi_,
            "B": self.amplitude_pow_,
            "a": self.power_,
            "residual": self.residual_,
            "degenerate": self.degenerate_,
        }


def correlation_fit(report, **kw):
    """Fit the separation profile of a CorrelationReport; returns (A, xi, B, a, residual)."""
    r, v = report.separations, report.values
    # values at round-off level would dominate the 1/|C| weights
    keep = v > ZERO_FLOOR * (v.max() if v.size else 0.0)
    est = CorrelationDecayFit(**kw).fit(r[keep], v[keep])
    return est.amplitude_exp_, est.xi_, est.amplitude_pow_, est.power_, est.residual_, est


@dataclass(frozen=True)
class StringOrderValue:
    axis: str
    i: int
    j: int
    expectation: complex

    @property
    def value(self):
        return float(self.expectation.real)

    @property
    def imag_residual(self):
        return float(abs(self.expectation.imag))

    def to_dict(self):
        return {"axis": self.axis, "i": self.i, "j": self.j, "value": self.value, "imag": float(self.expectation.imag)}


def string_order(psi, axis, i, j):
    """<-S_i exp(i pi sum_{l=i+1}^{j-1} S_l) S_j> along ``axis``."""
    psi, n = check_state(psi)
    if not (0 <= i < j < n) or j - i < 2:
        raise IndexError(f"need 0 <= i < j < {n} with j - i >= 2, got ({i}, {j})")
    op = _axis_op(axis)
    string = expm(1j * np.pi * op)
    phi = apply_local(psi, op, j, n)
    for l in range(i + 1, j):
        phi = apply_local(phi, string, l, n)
    phi = apply_local(phi, op, i, n)
    return StringOrderValue(axis, i, j, complex(-np.vdot(psi, phi)))


def bulk_endpoints(n_sites, boundary="open"):
    """Widest string-order pair that avoids the edge spins of an open chain."""
    if boundary == "periodic":
        return 0, n_sites // 2
    if n_sites >= 5:
        return 1, n_sites - 2
    return 0, n_sites - 1


@dataclass(frozen=True)
class EntanglementReport:
    cut: int
    spectrum: np.ndarray
    entropy: float
    multiplets: tuple
    all_even: bool
    tolerance: float
    floor: float = SCHMIDT_FLOOR
    log_base: str = "e"

    def to_dict(self):
        return {
            "cut": self.cut,
            "spectrum": self.spectrum.tolist(),
            "entropy": self.entropy,
            "multiplets": list(self.multiplets),
            "all_even": self.all_even,
            "tolerance": self.tolerance,
            "floor": self.floor,
            "log_base": self.log_base,
        }


def _check_cut(n, cut):
    if not 1 <= cut <= n - 1:
        raise IndexError(f"cut must satisfy 1 <= cut <= {n - 1}, got {cut}")


def reduced_density_matrix(psi, cut, keep="left"):
    psi, n = check_state(psi)
    _check_cut(n, cut)
    m = psi.reshape(3**cut, 3 ** (n - cut))
    return m @ m.conj().T if keep == "left" else m.T @ m.conj()


def group_multiplets(values, tol):
    """Group descending values; a new group starts when the relative drop exceeds ``tol``."""
    sizes = []
    for k, v in enumerate(values):
        if k and (values[k - 1] - v) <= tol * values[k - 1]:
            sizes[-1] += 1
        else:
            sizes.append(1)
    return tuple(sizes)


def entanglement_spectrum(psi, cut, tol=SPECTRUM_TOL, floor=SCHMIDT_FLOOR):
    """Schmidt spectrum across ``cut`` with a degeneracy verdict."""
    psi, n = check_state(psi)
    _check_cut(n, cut)
    s = np.linalg.svd(psi.reshape(3**cut, 3 ** (n - cut)), compute_uv=False)
    p = np.sort(s**2)[::-1]
    nz = p[p > 1e-300]
    entropy = float(max(0.0, -np.sum(nz * np.log(nz))))
    mult = group_multiplets(p[p > floor], tol)
    return EntanglementReport(cut, p, entropy, mult, all(m % 2 == 0 for m in mult), tol, floor)


def entanglement_entropy(psi, cut):
    """Von Neumann entropy (natural log) of the block left of ``cut``."""
    return entanglement_spectrum(psi, cut).entropy


def staggered_magnetization(psi):
    """sqrt(<(sum_i (-1)^i S_z^i)^2>) / N."""
    psi, n = check_state(psi)
    stag = site_magnetizations(n) @ ((-1.0) ** np.arange(n))
    return float(np.sqrt(np.abs(psi) ** 2 @ stag**2) / n)


@dataclass(frozen=True)
class RobustnessReport:
    dressed_fz: dict
    sz_action_norm: float | None = None
    sz_expectation: float | None = None
    fz_expectation: float | None = None
    inside_dfs: bool | None = None
    tolerance: float = 1e-10
    notes: tuple = field(default_factory=tuple)

    def to_dict(self):
        return {
            "dressed_fz": self.dressed_fz,
            "sz_action_norm": self.sz_action_norm,
            "sz_expectation": self.sz_expectation,
            "fz_expectation": self.fz_expectation,
            "inside_dfs": self.inside_dfs,
            "tolerance": self.tolerance,
        }


def robustness_check(psi=None, tol=1e-10):
    """First-order noise diagnostics.

    <s|F_z|s> for each dressed state s in {u, D, d}, plus, for a chain state
    written in the dressed basis, the action of the Rabi-noise generator
    sum_i F_x^i (= total S_z) and the first-order shift of sum_i F_z^i.
    """
    fz_bare = np.diag([1.0, 0.0, -1.0])
    fz_dressed = DRESSED_VECTORS.conj().T @ fz_bare @ DRESSED_VECTORS
    diag = {label: float(fz_dressed[k, k].real) for k, label in enumerate(("u", "D", "d"))}
    if psi is None:
        return RobustnessReport(diag, tolerance=tol)
    psi, n = check_state(psi)
    m_tot = site_magnetizations(n).sum(axis=1)
    sz_psi = m_tot * psi
    fz_exp = sum(np.vdot(psi, apply_local(psi, fz_dressed, i, n)) for i in range(n))
    norm = float(np.linalg.norm(sz_psi))
    inside = norm < tol and abs(fz_exp) < tol
    return RobustnessReport(
        diag,
        norm,
        float(np.vdot(psi, sz_psi).real),
        float(fz_exp.real),
        bool(inside),
        tol,
    )
