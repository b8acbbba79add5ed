"""Run-configuration schema.

A run file is YAML (or JSON) with one section per stage. Unknown keys are
rejected everywhere; every default is materialized into the resolved
config that is embedded in each output envelope.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..coupling_engine import FAIL_RATIO, PASS_RATIO, RESONANCE_GUARD
from ..eigen_solver import CLUSTER_THRESHOLD, DEFAULT_SEED, RESIDUAL_TOL
from ..exceptions import InvalidConfig
from ..observables import SCHMIDT_FLOOR, SPECTRUM_TOL
from ..time_evolution.full_model import STEP_TOL, STEPS_PER_CYCLE, TRUNCATION_TOL
from ..time_evolution.sweep import FIXTURE, GAP_SAMPLES, MAX_STEP, STIFF_PRODUCT


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpeciesSection(_Strict):
    mass_u: float = Field(171.0, gt=0)
    charge_e: float = Field(1.0, gt=0)
    lande_g: float = 1.0


class TrapSection(_Strict):
    n_ions: int = Field(10, ge=1)
    omega_x: float = Field(1.0, gt=0, description="axial frequency, MHz")
    omega_y: float = Field(10.0, gt=0)
    omega_z: Optional[float] = Field(None, gt=0)
    species: SpeciesSection = SpeciesSection()


class DriveSection(_Strict):
    omega_rabi: float = Field(6 * math.sqrt(2) * 4.0, ge=0)
    omega_prime: float = Field(2.4, ge=0)
    theta: float = Field(1.47, ge=0, le=math.pi)
    d_prime: float = -0.0185
    stark_detuning_ratio: float = Field(10.0, gt=0)
    omega_r: Optional[float] = Field(None, ge=0)
    delta_r: Optional[float] = None

    @model_validator(mode="after")
    def _pair(self):
        if (self.omega_r is None) != (self.delta_r is None):
            raise ValueError("give both omega_r and delta_r, or neither")
        return self


class SingleModeSection(_Strict):
    nu: float = Field(4.0, gt=0)
    eta: list[float] = [0.03, 0.03]


class CouplingSection(_Strict):
    source: Literal["trap", "single_mode"] = "trap"
    axis: Literal["x", "y", "z"] = "x"
    eta_max: Optional[float] = Field(0.03, ge=0)
    gradient: Optional[float] = Field(None, ge=0, description="T/m; overrides eta_max")
    single_mode: SingleModeSection = SingleModeSection()
    guard: float = Field(RESONANCE_GUARD, ge=0)
    pass_ratio: float = Field(PASS_RATIO, gt=0)
    fail_ratio: float = Field(FAIL_RATIO, gt=0)
    polaron_shift: bool = False
    boundary: Literal["open", "periodic"] = "open"
    interaction_range: Literal["full", "nearest"] = "full"


class ModelSection(_Strict):
    n_sites: int = Field(8, ge=2)
    lam: float = 1.0
    d_coeff: float = 0.0
    h_staggered: float = 0.0
    boundary: Literal["open", "periodic"] = "open"
    interaction_range: Literal["full", "nearest"] = "nearest"


class ObserveSection(_Strict):
    sector: int = 0
    sectors: list[int] = [0, 1, -1, 2, -2]
    cluster_threshold: float = Field(CLUSTER_THRESHOLD, gt=0)
    solver_tol: float = Field(RESIDUAL_TOL, gt=0)
    spectrum_tol: float = Field(SPECTRUM_TOL, gt=0)
    schmidt_floor: float = Field(SCHMIDT_FLOOR, gt=0)
    cut: Optional[int] = None
    axes: list[Literal["x", "y", "z"]] = ["z"]
    correlation_trim: int = Field(0, ge=0)
    fit_correlations: bool = True
    save_state: bool = True


class DynamicsSection(_Strict):
    eta: list[list[float]] = [[0.03], [0.03]]
    nu: list[float] = [4.0]
    n_max: int = Field(3, ge=1)
    initial: str = "uD"
    frame: Literal["polaron", "hyperfine"] = "polaron"
    trick: Literal["rotating", "tones"] = "rotating"
    full_level_structure: bool = False
    duration: Optional[float] = Field(None, gt=0)
    samples: int = Field(400, ge=2)
    steps_per_cycle: int = Field(STEPS_PER_CYCLE, ge=1)
    step_tol: float = Field(STEP_TOL, gt=0)
    truncation_tol: float = Field(TRUNCATION_TOL, gt=0)
    check_truncation: bool = True
    strict: bool = False


class SegmentSection(_Strict):
    fraction: float = Field(gt=0)
    d_end: float
    h_end: float = 0.0
    lam_end: Optional[float] = None
    shape: Literal["smoothstep", "linear"] = "smoothstep"


class SweepSection(_Strict):
    n_sites: int = Field(FIXTURE["n_sites"], ge=2)
    lam: float = FIXTURE["lam"]
    boundary: Literal["open", "periodic"] = FIXTURE["boundary"]
    total_time: float = Field(FIXTURE["total_time"], ge=0)
    d_start: float = FIXTURE["d_start"]
    d_target: float = FIXTURE["d_target"]
    h_max: float = FIXTURE["h_max"]
    d_turn: tuple[float, float] = FIXTURE["d_turn"]
    fractions: tuple[float, float, float] = FIXTURE["fractions"]
    segments: Optional[list[SegmentSection]] = None
    gap_samples: int = Field(GAP_SAMPLES, ge=1)
    max_step: float = Field(MAX_STEP, gt=0)
    stiff_product: float = Field(STIFF_PRODUCT, gt=0)
    compare_direct: bool = True
    doubling: bool = False


class AxisGrid(_Strict):
    start: Optional[float] = None
    stop: Optional[float] = None
    num: int = Field(5, ge=1)
    values: Optional[list[float]] = None

    @model_validator(mode="after")
    def _given(self):
        if self.values is None and (self.start is None or self.stop is None):
            raise ValueError("give either values or start/stop/num")
        return self

    def points(self):
        if self.values is not None:
            return [float(v) for v in self.values]
        if self.num == 1:
            return [float(self.start)]
        step = (self.stop - self.start) / (self.num - 1)
        return [float(self.start + k * step) for k in range(self.num)]


class ScanSection(_Strict):
    lam: AxisGrid = AxisGrid(start=0.0, stop=2.0, num=5)
    d_coeff: AxisGrid = AxisGrid(start=-1.0, stop=3.0, num=5)


class RunConfig(_Strict):
    seed: int = Field(DEFAULT_SEED, ge=0, lt=2**64)
    trap: TrapSection = TrapSection()
    drive: DriveSection = DriveSection()
    coupling: CouplingSection = CouplingSection()
    model: ModelSection = ModelSection()
    observe: ObserveSection = ObserveSection()
    dynamics: DynamicsSection = DynamicsSection()
    sweep: SweepSection = SweepSection()
    scan: ScanSection = ScanSection()

    @field_validator("seed", mode="before")
    @classmethod
    def _seed_int(cls, v):
        if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
            raise ValueError("seed must be an integer")
        return v

    def resolved(self):
        return self.model_dump(mode="json")


def load_config(path=None, overrides=None):
    """Parse a YAML/JSON file (or nothing) into a validated RunConfig."""
    data = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise InvalidConfig(f"config file not found: {p}")
        text = p.read_text(encoding="utf-8")
        try:
            data = json.loads(text) if p.suffix.lower() == ".json" else yaml.safe_load(text)
        except (json.JSONDecodeError, yaml.YAMLError) as exc:
            raise InvalidConfig(f"{p}: cannot parse config ({exc})") from None
        data = data or {}
        if not isinstance(data, dict):
            raise InvalidConfig(f"{p}: top level must be a mapping")
    if overrides:
        data = {**data, **overrides}
    return RunConfig.model_validate(data)


def format_validation_error(exc):
    """One line per problem: dotted path to the bad key plus the message."""
    lines = []
    for e in exc.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "\n".join(lines)
