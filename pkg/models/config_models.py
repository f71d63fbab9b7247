"""
Pydantic models for experiment configuration
Every model rejects unknown keys so typos fail loudly
"""

import math
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

__all__ = [
    'ExperimentKind', 'NearMode', 'StrictModel', 'FieldSource', 'LatticeSpec',
    'QuasimomentumSpec', 'BandsSpec', 'RelativeBoundSpec', 'ThomasSpec', 'CoverSpec',
    'GaugeSpec', 'MatrixGaugeSpec', 'OutputSpec', 'ExperimentConfig',
]

UNIT_TOL = 1e-12


class ExperimentKind(str, Enum):
    BANDS = "bands"
    THOMAS = "thomas"
    COVER = "cover"
    GAUGE = "gauge"
    MATRIX_GAUGE = "matrix-gauge"


class NearMode(str, Enum):
    DIRECT = "near-direct"
    MODEL = "near-model"


class StrictModel(BaseModel):
    model_config = ConfigDict(extra='forbid')


class FieldSource(StrictModel):
    preset: Optional[str] = Field(None, description="Preset name from config/presets.json")
    params: Dict[str, Any] = Field(default_factory=dict, description="Preset parameters")
    literal: Optional[str] = Field(None, description="Inline field literal")
    file: Optional[str] = Field(None, description="Path to a field literal file")
    smoothness: Optional[float] = Field(None, description="Declared Sobolev exponent s")
    name: Optional[str] = Field(None, max_length=100, description="Identifier used in reports")

    @model_validator(mode='after')
    def exactly_one_source(self):
        given = [key for key in ('preset', 'literal', 'file') if getattr(self, key) is not None]
        if len(given) != 1:
            raise ValueError(f"give exactly one of preset, literal, file (got {given or 'none'})")
        return self


class LatticeSpec(StrictModel):
    d: int = Field(..., ge=1, le=3, description="Torus dimension")
    N: int = Field(..., ge=1, le=128, description="Box cutoff max|m_i| <= N")


class QuasimomentumSpec(StrictModel):
    e: Optional[List[float]] = Field(None, description="Unit direction; defaults to (1, 0, ..., 0)")
    beta: float = Field(0.5, description="Real offset β")
    rho: List[float] = Field(default_factory=list, description="Ascending heights ρ")
    k_points: int = Field(33, ge=1, le=257, description="Brillouin grid points per axis")

    @field_validator('e')
    @classmethod
    def validate_unit(cls, v):
        if v is not None:
            length = math.sqrt(sum(x * x for x in v))
            if not v or abs(length - 1.0) > UNIT_TOL:
                raise ValueError(f"|e| must be 1 within {UNIT_TOL}, got {length!r}")
        return v

    @field_validator('rho')
    @classmethod
    def validate_rho(cls, v):
        if any(r <= 0 for r in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("ρ values must be positive and strictly ascending")
        return v

    def direction(self, d: int) -> List[float]:
        return list(self.e) if self.e is not None else [1.0] + [0.0] * (d - 1)


class BandsSpec(StrictModel):
    count: int = Field(5, ge=1, description="Number of lowest bands B")
    flat_tol: float = Field(1e-3, gt=0, description="Flat-band tolerance")
    relative_tol: bool = Field(True, description="Scale the tolerance by the band magnitude")
    gauge_chi: Optional[FieldSource] = Field(None, description="Real scalar χ for a gauge-invariance rerun")


class RelativeBoundSpec(StrictModel):
    eps: List[float] = Field(default_factory=lambda: [0.0, 0.1, 1.0], description="ε grid")
    trials: int = Field(64, ge=1, description="Sampled polynomials")


class ThomasSpec(StrictModel):
    sigma_floor: float = Field(1e-6, ge=0, description="Floor for σ_min(HΛ^-1)")
    method: str = Field("auto", pattern="^(auto|dense-svd|shift-invert)$")
    estimate_samples: int = Field(16, ge=0, description="Samples for the full estimate check")
    estimate_fraction: float = Field(0.25, gt=0, description="Fraction of the fitted Ĉ to check")
    relative_bound: Optional[RelativeBoundSpec] = None


class CoverSpec(StrictModel):
    delta: float = Field(0.5, gt=0, lt=1, description="Patch diameter exponent δ")
    thickness: float = Field(1.0, ge=0, description="Zero-set slab thickness")
    neumann_order: int = Field(2, ge=0, description="Neumann order for far patches")
    near_mode: NearMode = Field(NearMode.DIRECT, description="Local inverse on near patches")


class GaugeSpec(StrictModel):
    g: FieldSource
    tol: float = Field(1e-8, gt=0, description="Residual tolerance")
    split_M: Optional[int] = Field(None, ge=0, description="Gauge only modes 0 < |m| <= M")
    plane_bound: Optional[int] = Field(None, ge=1, description="Plane search bound L when d > 2")


class MatrixGaugeSpec(StrictModel):
    G: FieldSource
    maxiter: int = Field(200, ge=1)
    tol: float = Field(1e-12, gt=0)
    damping: float = Field(1.0, gt=0, le=1)
    obstruction_tol: float = Field(1e-9, gt=0)


class OutputSpec(StrictModel):
    dir: Optional[str] = Field(None, description="Output directory (CLI --out overrides)")
    dump_operator: bool = Field(False, description="Write the first assembled operator as a dump")


class ExperimentConfig(StrictModel):
    experiment: ExperimentKind
    lattice: LatticeSpec
    A: Optional[FieldSource] = None
    V: Optional[FieldSource] = None
    quasimomentum: QuasimomentumSpec = Field(default_factory=QuasimomentumSpec)
    bands: BandsSpec = Field(default_factory=BandsSpec)
    thomas: ThomasSpec = Field(default_factory=ThomasSpec)
    cover: CoverSpec = Field(default_factory=CoverSpec)
    gauge: Optional[GaugeSpec] = None
    matrix_gauge: Optional[MatrixGaugeSpec] = None
    output: OutputSpec = Field(default_factory=OutputSpec)
    seed: int = Field(0, ge=0, description="Seed for every randomized step")
    workers: Optional[int] = Field(None, ge=1, description="Worker threads (default BLOCH_WORKERS)")

    @model_validator(mode='after')
    def sections_for_kind(self):
        kind = self.experiment
        if kind in (ExperimentKind.THOMAS, ExperimentKind.COVER) and not self.quasimomentum.rho:
            raise ValueError(f"{kind.value} experiments need quasimomentum.rho")
        if kind == ExperimentKind.GAUGE and self.gauge is None:
            raise ValueError("gauge experiments need a gauge section")
        if kind == ExperimentKind.MATRIX_GAUGE and self.matrix_gauge is None:
            raise ValueError("matrix-gauge experiments need a matrix_gauge section")
        if self.quasimomentum.e is not None and len(self.quasimomentum.e) != self.lattice.d:
            raise ValueError(f"quasimomentum.e has {len(self.quasimomentum.e)} entries, d={self.lattice.d}")
        return self
