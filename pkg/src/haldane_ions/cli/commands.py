"""Subcommand implementations.

Each ``cmd_*`` takes a validated RunConfig and returns ``(payload, tables,
blobs, flags)``: a JSON-able payload, CSV tables ``{name: (header, rows)}``,
binary state dumps ``{name: (array, sector_tag, extra)}`` and boolean
validity flags for the envelope.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy.constants as const

from .. import lattice_modes as lm
from ..coupling_engine import (
    DriveParams,
    effective_coupling_matrix,
    effective_model_params,
    power_law_fit,
    residual_coupling,
    validate_hierarchy,
)
from ..eigen_solver import energy_gap, ground_state
from ..exceptions import InsufficientData
from ..observables import (
    bulk_endpoints,
    correlation_fit,
    correlation_function,
    entanglement_spectrum,
    robustness_check,
    staggered_magnetization,
    string_order,
)
from ..spin_model import SpinModelParams
from ..time_evolution.full_model import FullModelParams, two_ion_full_model
from ..time_evolution.sweep import Schedule, Segment, adiabatic_sweep, detour_schedule


def _species(cfg):
    s = cfg.trap.species
    return lm.IonSpecies(mass=s.mass_u * lm.AMU, charge=s.charge_e * const.e, lande_g=s.lande_g)


def _trap(cfg):
    t = cfg.trap
    return lm.TrapConfig(t.n_ions, t.omega_x, t.omega_y, t.omega_z, _species(cfg))


def _drive(cfg, gradient=0.0):
    d = cfg.drive
    kw = dict(omega_prime=d.omega_prime, theta=d.theta, gradient=gradient)
    if d.omega_r is not None:
        return DriveParams(d.omega_rabi, omega_r=d.omega_r, delta_r=d.delta_r, **kw)
    return DriveParams.from_stark_shift(d.omega_rabi, d.d_prime, d.stark_detuning_ratio, **kw)


def _model(cfg, **kw):
    m = cfg.model
    p = SpinModelParams(
        m.n_sites,
        lam=m.lam,
        d_coeff=m.d_coeff,
        h_staggered=m.h_staggered,
        boundary=m.boundary,
        interaction_range=m.interaction_range,
    )
    return p.replace(**kw) if kw else p


def cmd_modes(cfg):
    trap = _trap(cfg)
    lat = lm.equilibrium_positions(trap)
    modes = lm.normal_modes(trap, lat)
    payload = {
        "positions_m": lat.positions,
        "positions_dimensionless": lat.positions_dimless,
        "length_scale_m": lat.length_scale,
        "force_residual": lat.residual,
        "modes": modes.to_dict(),
    }
    # a z axis left unset duplicates y, so it is only listed when given explicitly
    axes = ("x", "y") if cfg.trap.omega_z is None else ("x", "y", "z")
    rows = [r for r in modes.rows() if r[0] in axes]
    payload["axes_listed"] = list(axes)
    tables = {"modes": (["axis", "index", "frequency_mhz"], rows)}
    return payload, tables, {}, {"equilibrium_converged": lat.residual < 1e-10}


def _coupling_inputs(cfg):
    c = cfg.coupling
    notes = []
    if c.source == "single_mode":
        modes, eta = lm.single_mode_setup(c.single_mode.nu, c.single_mode.eta, c.axis)
        return modes, eta, None, float("nan"), notes
    trap = _trap(cfg)
    lat = lm.equilibrium_positions(trap)
    modes = lm.normal_modes(trap, lat)
    if c.gradient is not None:
        grad = c.gradient
    else:
        grad = lm.gradient_for_eta(modes, c.eta_max, c.axis, trap.species) if c.eta_max else 0.0
        notes.append(f"gradient {grad:.6g} T/m chosen so that max|eta| = {c.eta_max} on axis {c.axis}")
    eta = lm.lamb_dicke_matrix(modes, {c.axis: grad}, trap.species)
    return modes, eta, lat, grad, notes + list(eta.warnings)


def cmd_couplings(cfg):
    c = cfg.coupling
    modes, eta, lat, grad, notes = _coupling_inputs(cfg)
    drive = _drive(cfg, 0.0 if math.isnan(grad) else grad)
    coupling = effective_coupling_matrix(modes, eta, drive.omega_rabi, c.guard, polaron_shift=c.polaron_shift)
    residual_coupling(modes, eta, drive.omega_rabi, c.guard)
    params = effective_model_params(coupling, drive, c.boundary, c.interaction_range)
    report = validate_hierarchy(drive, modes, eta, c.pass_ratio, c.fail_ratio)
    fit = None
    if lat is not None and coupling.n_ions >= 4 and np.any(coupling.j_eff):
        alpha, resid, _ = power_law_fit(coupling, lat)
        fit = {"exponent": alpha, "residual": resid}
    payload = {
        "drive": drive.to_dict(),
        "gradient_t_per_m": None if math.isnan(grad) else grad,
        "coupling": coupling.to_dict(),
        "model": params.to_dict(),
        "mapping": params.metadata,
        "hierarchy": report.to_dict(),
        "hierarchy_text": report.to_text(),
        "power_law": fit,
        "notes": notes,
    }
    n = coupling.n_ions
    rows = [(i, j, coupling.j_eff[i, j]) for i in range(n) for j in range(i + 1, n)]
    tables = {
        "couplings": (["i", "j", "j_eff_mhz"], rows),
        "hierarchy": (
            ["condition", "left", "right", "ratio", "status"],
            [(e.name, e.left, e.right, e.ratio, e.status) for e in report.entries],
        ),
    }
    return payload, tables, {}, {"hierarchy_ok": report.ok}


def cmd_dynamics(cfg):
    d = cfg.dynamics
    dr = cfg.drive
    p = FullModelParams(
        eta=tuple(map(tuple, d.eta)),
        nu=tuple(d.nu),
        omega_rabi=dr.omega_rabi,
        omega_prime=dr.omega_prime,
        theta=dr.theta,
        d_prime=dr.d_prime,
        stark_detuning_ratio=dr.stark_detuning_ratio,
        omega_r=dr.omega_r,
        delta_r=dr.delta_r,
        n_max=d.n_max,
        initial=d.initial,
        frame=d.frame,
        trick=d.trick,
        full_level_structure=d.full_level_structure,
        duration=d.duration,
        samples=d.samples,
        steps_per_cycle=d.steps_per_cycle,
        step_tol=d.step_tol,
        truncation_tol=d.truncation_tol,
        check_truncation=d.check_truncation,
    )
    res = two_ion_full_model(p, strict=d.strict)
    full, eff = res.trajectory, res.effective
    keys = [k for k in full.observables if k in eff.observables]
    header = ["time_us"] + [f"full_{k}" for k in keys] + [f"eff_{k}" for k in keys]
    rows = [
        [t] + [full.observables[k][i] for k in keys] + [eff.observables[k][i] for k in keys]
        for i, t in enumerate(full.times)
    ]
    payload = res.to_dict()
    payload["params"] = p.to_dict()
    flags = {"truncation_converged": res.converged, "hierarchy_ok": res.hierarchy.ok}
    return payload, {"dynamics": (header, rows)}, {}, flags


def _ground(cfg, params):
    o = cfg.observe
    solver = dict(tol=o.solver_tol, seed=cfg.seed)
    gap = energy_gap(params, tuple(o.sectors), cluster_threshold=o.cluster_threshold, **solver)
    res = ground_state(params, o.sector, **solver)
    return gap, res


def _diagnostics(cfg, params, psi):
    o = cfg.observe
    n = params.n_sites
    cut = o.cut if o.cut is not None else n // 2
    i, j = bulk_endpoints(n, params.boundary)
    out = {"string_order": {}, "correlations": {}, "fits": {}, "notes": []}
    for ax in o.axes:
        out["string_order"][ax] = string_order(psi, ax, i, j).to_dict()
        rep = correlation_function(psi, ax, o.correlation_trim)
        out["correlations"][ax] = rep.to_dict()
        if o.fit_correlations:
            try:
                _, _, _, _, _, est = correlation_fit(rep)
                out["fits"][ax] = est.summary()
            except InsufficientData as exc:
                out["fits"][ax] = None
                out["notes"].append(f"axis {ax}: {exc}")
    ent = entanglement_spectrum(psi, cut, o.spectrum_tol, o.schmidt_floor)
    out["entanglement"] = ent.to_dict()
    out["entropy_by_cut"] = [entanglement_spectrum(psi, c).entropy for c in range(1, n)]
    out["staggered_magnetization"] = staggered_magnetization(psi)
    out["robustness"] = robustness_check(psi).to_dict()
    return out


def cmd_ground(cfg, diagnostics=False):
    params = _model(cfg)
    gap, res = _ground(cfg, params)
    psi = res.full_vector(0)
    payload = {
        "model": params.to_dict(),
        "gap": gap.to_dict(),
        "ground": res.header(),
    }
    flags = {"residuals_ok": bool(np.all(res.residuals < 1e-9))}
    tables = {"levels": (["energy", "total_sz"], [list(x) for x in gap.levels])}
    if diagnostics:
        diag = _diagnostics(cfg, params, psi)
        payload["observables"] = diag
        z = diag["correlations"].get("z")
        if z is not None:
            tables["correlations_z"] = (
                ["i"] + [f"c{j}" for j in range(params.n_sites)],
                [[i] + row for i, row in enumerate(z["matrix"])],
            )
        tables["entanglement"] = (["index", "schmidt_value"], list(enumerate(diag["entanglement"]["spectrum"])))
        flags["all_even_multiplets"] = diag["entanglement"]["all_even"]
    blobs = {}
    if cfg.observe.save_state:
        blobs["ground_state"] = (res.eigenvectors[:, 0], res.sector, {"eigen": res.header()})
    return payload, tables, blobs, flags


def cmd_observe(cfg):
    return cmd_ground(cfg, diagnostics=True)


def _schedule(cfg):
    s = cfg.sweep
    if s.segments:
        segs = tuple(Segment(**seg.model_dump()) for seg in s.segments)
        return Schedule(s.total_time, s.d_start, segs, kind="custom")
    return detour_schedule(s.total_time, s.d_target, s.h_max, s.d_start, tuple(s.d_turn), tuple(s.fractions))


def cmd_sweep(cfg):
    s = cfg.sweep
    base = SpinModelParams(s.n_sites, lam=s.lam, boundary=s.boundary)
    sched = _schedule(cfg)
    kw = dict(gap_samples=s.gap_samples, max_step=s.max_step, stiff_product=s.stiff_product)
    runs = {"detour": adiabatic_sweep(sched, base, **kw)}
    if s.compare_direct and sched.kind != "custom":
        runs["direct"] = adiabatic_sweep(sched.direct(), base, **kw)
    if s.doubling and s.total_time > 0:
        runs["doubled"] = adiabatic_sweep(sched.with_time(2 * s.total_time), base, **kw)
    payload = {name: r.to_dict() for name, r in runs.items()}
    summary = [(name, r.schedule.total_time, r.final_fidelity, r.min_gap, r.quench_fidelity) for name, r in runs.items()]
    payload["summary"] = [dict(zip(("path", "total_time", "final_fidelity", "min_gap", "quench"), row)) for row in summary]
    tables = {"sweep_summary": (["path", "total_time", "final_fidelity", "min_gap", "quench_fidelity"], summary)}
    for name, r in runs.items():
        tables[f"sweep_{name}"] = (r.trajectory.columns(), r.trajectory.rows())
    drift = max(r.trajectory.norm_drift for r in runs.values())
    return payload, tables, {}, {"norm_ok": drift < 1e-8}


# scan workers must be importable top-level functions for process pools
def _scan_point(job):
    idx, lam, d, cfg_dict = job
    from .config import RunConfig

    cfg = RunConfig.model_validate(cfg_dict)
    params = _model(cfg, lam=lam, d_coeff=d)
    gap, res = _ground(cfg, params)
    psi = res.full_vector(0)
    i, j = bulk_endpoints(params.n_sites, params.boundary)
    cut = cfg.observe.cut if cfg.observe.cut is not None else params.n_sites // 2
    return {
        "index": idx,
        "lam": lam,
        "d_coeff": d,
        "gap": gap.gap,
        "string_order_z": string_order(psi, "z", i, j).value,
        "staggered_magnetization": staggered_magnetization(psi),
        "entropy": entanglement_spectrum(psi, cut, cfg.observe.spectrum_tol, cfg.observe.schmidt_floor).entropy,
    }


SCAN_COLUMNS = ["index", "lam", "d_coeff", "gap", "string_order_z", "staggered_magnetization", "entropy"]


def cmd_scan(cfg, workers=1):
    lams = cfg.scan.lam.points()
    ds = cfg.scan.d_coeff.points()
    cfg_dict = cfg.resolved()
    jobs = [(k, lam, d, cfg_dict) for k, (lam, d) in enumerate((a, b) for a in lams for b in ds)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_scan_point, jobs))
    else:
        results = [_scan_point(j) for j in jobs]
    results.sort(key=lambda r: r["index"])
    payload = {
        "grid": {"lam": lams, "d_coeff": ds},
        "points": results,
        "notes": ["raw indicators only; no phase labels are assigned"],
    }
    rows = [[r[c] for c in SCAN_COLUMNS] for r in results]
    return payload, {"scan": (SCAN_COLUMNS, rows)}, {}, {}


COMMANDS = {
    "modes": cmd_modes,
    "couplings": cmd_couplings,
    "dynamics": cmd_dynamics,
    "ground": cmd_ground,
    "observe": cmd_observe,
    "sweep": cmd_sweep,
    "scan": cmd_scan,
}
