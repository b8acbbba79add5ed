"""Equilibrium positions and normal modes of a linear ion crystal.

All user-facing frequencies are ordinary frequencies in MHz. Internally the
axial problem is solved in dimensionless form: lengths in units of
``ell = (e^2 / (4 pi eps0 m omega_x^2))**(1/3)`` and frequencies in units of
the axial trap frequency, so the axial potential reads
``sum_i u_i^2 / 2 + sum_{i<j} 1 / |u_i - u_j|``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import constants as const

from .exceptions import InvalidConfig, NonConvergence, UnstableConfiguration

AXES = ("x", "y", "z")
AMU = const.physical_constants["atomic mass constant"][0]
MU_B = const.physical_constants["Bohr magneton"][0]
HBAR = const.hbar

LAMB_DICKE_WARN = 0.1


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class IonSpecies:
    """Ion mass (kg), charge (C) and Lande g-factor.

    The default is a 171 u singly charged hyperfine-qubit ion with ``g = 1``.
    """

    mass: float = 171 * AMU
    charge: float = const.e
    lande_g: float = 1.0
    hyperfine_splitting: float | None = None

    def __post_init__(self):
        if not self.mass > 0:
            raise InvalidConfig("IonSpecies.mass must be > 0")
        if not self.charge > 0:
            raise InvalidConfig("IonSpecies.charge must be > 0")

    @property
    def bohr_magneton(self):
        return MU_B


@dataclass(frozen=True)
class TrapConfig:
    """Linear Paul trap: ion count and secular frequencies in MHz.

    ``omega_x`` is the axial frequency, ``omega_y``/``omega_z`` radial.
    """

    n_ions: int
    omega_x: float
    omega_y: float
    omega_z: float | None = None
    species: IonSpecies = field(default_factory=IonSpecies)

    def __post_init__(self):
        if self.omega_z is None:
            object.__setattr__(self, "omega_z", self.omega_y)
        if int(self.n_ions) != self.n_ions or self.n_ions < 1:
            raise InvalidConfig(f"n_ions must be a positive integer, got {self.n_ions}")
        for name in ("omega_x", "omega_y", "omega_z"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be > 0")

    def frequency(self, axis):
        return {"x": self.omega_x, "y": self.omega_y, "z": self.omega_z}[axis]

    @property
    def length_scale(self):
        """Coulomb length scale ell in meters."""
        sp = self.species
        w = 2 * np.pi * self.omega_x * 1e6
        return (sp.charge**2 / (4 * np.pi * const.epsilon_0 * sp.mass * w**2)) ** (1 / 3)


@dataclass(frozen=True)
class IonLattice:
    positions: np.ndarray  # meters
    positions_dimless: np.ndarray
    length_scale: float
    residual: float
    iterations: int

    @property
    def n_ions(self):
        return len(self.positions)


@dataclass(frozen=True)
class ModeSet:
    """Normal modes per axis.

    ``frequencies[axis][n]`` in MHz and ``mode_matrix[axis][i, n]`` with
    orthonormal columns. Mode 0 is always the center-of-mass mode: axial
    modes ascend in frequency, radial modes descend.
    """

    frequencies: dict
    mode_matrix: dict
    n_ions: int

    def to_dict(self):
        return {
            "n_ions": self.n_ions,
            "frequencies_mhz": {a: [float(v) for v in self.frequencies[a]] for a in AXES},
            "mode_matrix": {a: self.mode_matrix[a].tolist() for a in AXES},
        }

    def rows(self):
        """One (axis, index, frequency_mhz) row per mode."""
        return [(a, n, float(f)) for a in AXES for n, f in enumerate(self.frequencies[a])]


@dataclass(frozen=True)
class EtaMatrix:
    eta: dict  # axis -> (n_ions, n_modes)
    gradient: dict  # axis -> T/m
    warnings: tuple = ()

    def max_abs(self):
        return max(float(np.max(np.abs(e))) if e.size else 0.0 for e in self.eta.values())


def _pair_terms(u):
    d = u[:, None] - u[None, :]
    np.fill_diagonal(d, np.inf)
    return d


def axial_gradient(u):
    d = _pair_terms(u)
    return u - np.sum(np.sign(d) / d**2, axis=1)


def axial_potential(u):
    iu = np.triu_indices(len(u), 1)
    d = np.abs(u[:, None] - u[None, :])[iu]
    return 0.5 * np.sum(u**2) + np.sum(1.0 / d)


def axial_hessian(u):
    """Dimensionless axial Hessian; eigenvalues are (nu / omega_x)^2."""
    inv3 = 1.0 / np.abs(_pair_terms(u)) ** 3
    h = -2.0 * inv3
    np.fill_diagonal(h, 1.0 + 2.0 * inv3.sum(axis=1))
    return h


def radial_hessian(u, ratio):
    """Dimensionless radial Hessian for trap-frequency ratio omega_r / omega_x."""
    inv3 = 1.0 / np.abs(_pair_terms(u)) ** 3
    h = inv3.copy()
    np.fill_diagonal(h, ratio**2 - inv3.sum(axis=1))
    return h


def equilibrium_positions(trap, tol=1e-13, max_iter=10_000):
    """Relax the axial chain with a damped Newton iteration."""
    if not isinstance(trap, TrapConfig):
        raise InvalidConfig("trap must be a TrapConfig")
    n = trap.n_ions
    ell = trap.length_scale
    if n == 1:
        u = np.zeros(1)
        return IonLattice(_frozen(u * ell), _frozen(u), ell, 0.0, 0)

    half = 1.2 * np.sqrt(n)
    u = np.linspace(-half, half, n)
    energy = axial_potential(u)
    for it in range(1, max_iter + 1):
        g = axial_gradient(u)
        step = np.linalg.solve(axial_hessian(u), -g)
        t = 1.0
        while t > 1e-12:
            trial = u + t * step
            if np.all(np.diff(trial) > 0):
                e_trial = axial_potential(trial)
                if e_trial <= energy + 1e-15 * abs(energy):
                    break
            t *= 0.5
        u = 0.5 * (trial - trial[::-1])  # keep mirror symmetry exact
        energy = axial_potential(u)
        res = np.linalg.norm(axial_gradient(u))
        if res < tol:
            break
    else:
        raise NonConvergence(f"equilibrium solver did not converge in {max_iter} iterations")
    return IonLattice(_frozen(u * ell), _frozen(u), ell, float(res), it)


def _fix_signs(vecs):
    for k in range(vecs.shape[1]):
        col = vecs[:, k]
        idx = np.flatnonzero(np.abs(col) > 1e-6)
        if idx.size and col[idx[0]] < 0:
            vecs[:, k] = -col
    return vecs


def normal_modes(trap, lattice):
    """Diagonalize the harmonic Hessian along each axis."""
    u = np.asarray(lattice.positions_dimless, dtype=float)
    if len(u) != trap.n_ions:
        raise InvalidConfig("lattice does not match trap.n_ions")
    freqs, mats = {}, {}
    for axis in AXES:
        if axis == "x":
            h = axial_hessian(u) if len(u) > 1 else np.ones((1, 1))
        else:
            ratio = trap.frequency(axis) / trap.omega_x
            h = radial_hessian(u, ratio) if len(u) > 1 else np.full((1, 1), ratio**2)
        w, v = np.linalg.eigh(h)
        if np.any(w <= 0):
            raise UnstableConfiguration(
                f"non-positive Hessian eigenvalue {w.min():.3e} along axis {axis!r} "
                "(linear chain unstable, zigzag transition)",
                axis=axis,
            )
        order = np.argsort(w) if axis == "x" else np.argsort(-w)
        freqs[axis] = _frozen(np.sqrt(w[order]) * trap.omega_x)
        mats[axis] = _frozen(_fix_signs(v[:, order].copy()))
    return ModeSet(freqs, mats, trap.n_ions)


def lamb_dicke_matrix(modes, gradient, species=None, warn_threshold=LAMB_DICKE_WARN):
    """Effective Lamb-Dicke parameters from a static field gradient.

    ``gradient`` is dB_z/d(alpha) in T/m, either a scalar (applied along the
    axial direction) or a mapping ``{axis: value}``. Per ion and mode,
    ``eta = g mu_B grad M_in sqrt(hbar / (2 m nu)) / (hbar nu)`` with
    ``nu`` angular.
    """
    species = species or IonSpecies()
    if np.isscalar(gradient):
        grads = {"x": float(gradient), "y": 0.0, "z": 0.0}
    else:
        grads = {a: float(gradient.get(a, 0.0)) for a in AXES}
        unknown = set(gradient) - set(AXES)
        if unknown:
            raise InvalidConfig(f"unknown gradient axes {sorted(unknown)}")
    if any(g < 0 for g in grads.values()):
        raise InvalidConfig("gradient must be >= 0")

    eta, notes = {}, []
    for axis in AXES:
        nu = 2 * np.pi * np.asarray(modes.frequencies[axis]) * 1e6
        zpf = np.sqrt(HBAR / (2 * species.mass * nu))
        scale = species.lande_g * MU_B * grads[axis] * zpf / (HBAR * nu)
        e = np.asarray(modes.mode_matrix[axis]) * scale[None, :]
        eta[axis] = _frozen(e)
        peak = float(np.max(np.abs(e))) if e.size else 0.0
        if peak >= warn_threshold:
            msg = f"Lamb-Dicke regime violated on axis {axis}: max|eta| = {peak:.3g}"
            notes.append(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return EtaMatrix(eta, grads, tuple(notes))


def gradient_for_eta(modes, target, axis="x", species=None):
    """Gradient (T/m) that makes max|eta| along ``axis`` equal ``target``."""
    unit = lamb_dicke_matrix(modes, {axis: 1.0}, species, warn_threshold=np.inf)
    peak = float(np.max(np.abs(unit.eta[axis])))
    return target / peak


def single_mode_setup(nu, etas, axis="x"):
    """ModeSet and EtaMatrix with one shared mode ``nu`` (MHz) and given per-ion eta."""
    etas = np.asarray(etas, dtype=float)
    n = etas.size
    freqs = {a: _frozen([nu] if a == axis else []) for a in AXES}
    norm = np.linalg.norm(etas)
    col = etas / norm if norm else np.full(n, 1 / np.sqrt(n))
    mats = {a: _frozen(col[:, None] if a == axis else np.zeros((n, 0))) for a in AXES}
    eta = {a: _frozen(etas[:, None] if a == axis else np.zeros((n, 0))) for a in AXES}
    return ModeSet(freqs, mats, n), EtaMatrix(eta, {a: float("nan") for a in AXES})
