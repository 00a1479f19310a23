"""Scan configuration: TOML sections validated by pydantic.

Lengths are meters, angles radians, the mechanical frequency rad/s.  Every
key is optional; the defaults reproduce the 9 cm / 10 cm cavity with a
50 nm membrane.  Example::

    [cavity]
    length = 0.09
    mirror_radius = 0.10
    wavelength = 1064e-9

    [membrane]
    thickness = 50e-9
    n_r = 2.1
    alpha_x = -0.21e-3
    alpha_y = 0.15e-3
    shift = 0.5e-3           # scan window center, measured from the waist

    [membrane.z0]            # offsets from ``shift``
    min = -266e-9
    max = 266e-9
    steps = 1001

    [basis]
    orders = [0, 2, 4]       # transverse order of each family
    offsets = [0, -1, -2]    # longitudinal index relative to l

    [mechanics]
    mass = 34e-12
    omega_m = 2.3876104e6
    theta = 1.0

    [analysis]
    crossings = true
    points = ["extremum", "max_slope", "crossing"]

    [output]
    directory = "results"
    formats = ["csv"]

    [sweep]                  # optional: repeat the scan per alpha_x
    alpha_x = [-0.4e-3, 0.0, 0.4e-3]
"""
from __future__ import annotations

import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError, model_validator

from cavity_perturb.config import FIT_WINDOW_FRACTION, MAX_HERMITE_ORDER, MAX_REFINEMENT_DEPTH, OVERLAP_THRESHOLD
from cavity_perturb.coupling import CouplingContext
from cavity_perturb.exceptions import ConfigError
from cavity_perturb.modes import CavityGeometry
from cavity_perturb.overlap import MembraneState


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CavitySection(_Section):
    length: PositiveFloat = 0.09
    mirror_radius: PositiveFloat = 0.10
    wavelength: PositiveFloat = 1064e-9

    @model_validator(mode="after")
    def _check_stability(self) -> CavitySection:
        g = 1.0 - self.length / self.mirror_radius
        if not 0.0 < g * g < 1.0:
            raise ValueError(f"unstable cavity: g = 1 - L/R = {g:.6g}, stability needs 0 < g^2 < 1")
        self.geometry().longitudinal_index  # DomainError when the wavelength does not fit
        return self

    def geometry(self) -> CavityGeometry:
        return CavityGeometry(length=self.length, mirror_radius=self.mirror_radius, wavelength=self.wavelength)


class Z0Range(_Section):
    min: float = -266e-9
    max: float = 266e-9
    steps: int = Field(default=1001, ge=2)

    @model_validator(mode="after")
    def _check_range(self) -> Z0Range:
        if not self.max > self.min:
            raise ValueError(f"z0 range is empty: min={self.min!r} >= max={self.max!r}")
        return self


class MembraneSection(_Section):
    thickness: PositiveFloat = 50e-9
    n_r: float = Field(default=2.1, ge=1.0)
    n_i: float = Field(default=1e-6, ge=0.0)
    alpha_x: float = 0.0
    alpha_y: float = 0.0
    shift: float = 0.0
    z0: Z0Range = Z0Range()

    def state(self, alpha_x: float | None = None) -> MembraneState:
        return MembraneState(
            thickness=self.thickness,
            n_r=self.n_r,
            n_i=self.n_i,
            z0=self.shift,
            alpha_x=self.alpha_x if alpha_x is None else alpha_x,
            alpha_y=self.alpha_y,
        )


class BasisSection(_Section):
    orders: list[int] = Field(default_factory=lambda: [0, 2, 4], min_length=1)
    offsets: list[int] | None = None

    @model_validator(mode="after")
    def _check_families(self) -> BasisSection:
        if any(order < 0 for order in self.orders):
            raise ValueError("family orders must be non-negative")
        if max(self.orders) > MAX_HERMITE_ORDER:
            raise ValueError(f"family order {max(self.orders)} exceeds the supported maximum {MAX_HERMITE_ORDER}")
        if len(set(self.orders)) != len(self.orders):
            raise ValueError("family orders must be distinct")
        if self.offsets is not None and len(self.offsets) != len(self.orders):
            raise ValueError(f"{len(self.orders)} orders but {len(self.offsets)} offsets")
        return self


class MechanicsSection(_Section):
    mass: PositiveFloat = 34e-12
    omega_m: PositiveFloat = 2.0 * math.pi * 380e3
    theta: float = Field(default=1.0, ge=0.0, le=1.0)

    def context(self) -> CouplingContext:
        return CouplingContext(mass=self.mass, omega_m=self.omega_m, theta=self.theta)


class AnalysisSection(_Section):
    crossings: bool = True
    fit_half_width: PositiveFloat | None = None  # default 0.02 wavelength
    refinement_depth: int = Field(default=MAX_REFINEMENT_DEPTH, ge=0)
    overlap_threshold: float = Field(default=OVERLAP_THRESHOLD, gt=0.0, lt=1.0)
    min_gap: float = Field(default=0.0, ge=0.0)  # Hz
    points: list[Literal["extremum", "max_slope", "crossing"]] = Field(
        default_factory=lambda: ["extremum", "max_slope", "crossing"]
    )


class OutputSection(_Section):
    directory: str = "results"
    formats: list[Literal["csv", "prometheus"]] = Field(default_factory=lambda: ["csv"])


class SweepSection(_Section):
    alpha_x: list[float] = Field(min_length=1)


class ScanConfig(_Section):
    cavity: CavitySection = CavitySection()
    membrane: MembraneSection = MembraneSection()
    basis: BasisSection = BasisSection()
    mechanics: MechanicsSection = MechanicsSection()
    analysis: AnalysisSection = AnalysisSection()
    output: OutputSection = OutputSection()
    sweep: SweepSection | None = None

    @model_validator(mode="after")
    def _check_longitudinal_indices(self) -> ScanConfig:
        l = self.cavity.geometry().longitudinal_index
        offsets = self.basis.offsets or [-(order // 2) for order in self.basis.orders]
        for order, offset in zip(self.basis.orders, offsets):
            if l + offset < 1:
                raise ConfigError(
                    f"family of order {order} lands on longitudinal index {l + offset}, needs >= 1 (l = {l})",
                    field="basis.offsets",
                )
        return self

    @property
    def fit_half_width(self) -> float:
        if self.analysis.fit_half_width is not None:
            return self.analysis.fit_half_width
        return FIT_WINDOW_FRACTION * self.cavity.wavelength


def _field_path(error: dict) -> str:
    return ".".join(str(part) for part in error["loc"]) or "config"


def parse_config(text: str) -> ScanConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc
    try:
        return ScanConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigError(first["msg"], field=_field_path(first)) from exc
