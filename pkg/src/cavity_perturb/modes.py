"""Hermite-Gauss modes of the empty symmetric cavity.

Wavenumbers follow k = (pi/L) [l + (m+n+1) arccos(g)/pi]; the fields are the
standing-wave Gaussian beams normalized to one over the cavity volume.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator
from scipy.constants import c as SPEED_OF_LIGHT

from cavity_perturb.config import MAX_HERMITE_ORDER
from cavity_perturb.exceptions import DomainError, UnsupportedOrderError


class ModeIndex(BaseModel):
    """Collective index (l, m, n) of one Hermite-Gauss mode."""

    model_config = ConfigDict(frozen=True)

    l: int = Field(ge=1)
    m: int = Field(ge=0)
    n: int = Field(ge=0)

    @property
    def order(self) -> int:
        return self.m + self.n

    def swapped(self) -> ModeIndex:
        return ModeIndex(l=self.l, m=self.n, n=self.m)

    def label(self, reference_l: int | None = None) -> str:
        if reference_l is None:
            return f"TEM{self.m}{self.n},{self.l}"
        offset = self.l - reference_l
        return f"TEM{self.m}{self.n},p" if offset == 0 else f"TEM{self.m}{self.n},p{offset:+d}"

    def __str__(self) -> str:
        return self.label()


class CavityGeometry(BaseModel):
    """Symmetric two-mirror cavity; all lengths in meters."""

    model_config = ConfigDict(frozen=True)

    length: PositiveFloat = 0.09
    mirror_radius: PositiveFloat = 0.10
    wavelength: PositiveFloat = 1064e-9

    @model_validator(mode="after")
    def _check_stability(self) -> CavityGeometry:
        g = 1.0 - self.length / self.mirror_radius
        if not 0.0 < g * g < 1.0:
            raise ValueError(f"unstable cavity: g = 1 - L/R = {g:.6g}, stability needs 0 < g^2 < 1")
        return self

    @property
    def g(self) -> float:
        return 1.0 - self.length / self.mirror_radius

    @property
    def gouy_angle(self) -> float:
        """arccos(g): one-way Gouy phase per unit transverse order."""
        return math.acos(self.g)

    @property
    def rayleigh_range(self) -> float:
        g = self.g
        return 0.5 * self.length * math.sqrt((1.0 + g) / (1.0 - g))

    @property
    def longitudinal_index(self) -> int:
        """Integer l putting the (l, 0, 0) wavenumber closest to 2 pi / wavelength."""
        l = round(2.0 * self.length / self.wavelength - self.gouy_angle / math.pi)
        if l < 1:
            raise DomainError(f"wavelength {self.wavelength!r} m is too long for cavity length {self.length!r} m")
        return l

    @property
    def reference_mode(self) -> ModeIndex:
        return ModeIndex(l=self.longitudinal_index, m=0, n=0)

    @property
    def reference_wavenumber(self) -> float:
        return mode_wavenumber(self.reference_mode, self)

    @property
    def reference_frequency(self) -> float:
        """Frequency (Hz) of the unperturbed reference TEM00 mode."""
        return SPEED_OF_LIGHT * self.reference_wavenumber / (2.0 * math.pi)

    def waist(self, mode: ModeIndex) -> float:
        return math.sqrt(2.0 * self.rayleigh_range / mode_wavenumber(mode, self))

    def beam_radius(self, mode: ModeIndex, z: ArrayLike) -> np.ndarray:
        zeta = np.asarray(z, dtype=float) / self.rayleigh_range
        return self.waist(mode) * np.sqrt(1.0 + zeta * zeta)


def hermite_polynomial(m: int, x: ArrayLike, max_order: int = MAX_HERMITE_ORDER):
    """Physicists' H_m(x) by the three-term recurrence."""
    if m < 0:
        raise ValueError(f"Hermite order must be non-negative, got {m}")
    if m > max_order:
        raise UnsupportedOrderError(f"Hermite order {m} exceeds the supported maximum {max_order}")
    x = np.asarray(x, dtype=float)
    previous = np.ones_like(x)
    if m == 0:
        return previous if previous.ndim else float(previous)
    current = 2.0 * x
    for k in range(1, m):
        previous, current = current, 2.0 * x * current - 2.0 * k * previous
    return current if current.ndim else float(current)


def mode_wavenumber(mode: ModeIndex, geom: CavityGeometry) -> float:
    return (math.pi * mode.l + (mode.order + 1) * geom.gouy_angle) / geom.length


def wavenumber_difference(a: ModeIndex, b: ModeIndex, geom: CavityGeometry) -> float:
    """k_a - k_b without subtracting two large wavenumbers."""
    return (math.pi * (a.l - b.l) + (a.order - b.order) * geom.gouy_angle) / geom.length


@dataclass(frozen=True)
class ModeField:
    """phi^(s) = rho exp(-s i theta) for one mode; s = +1 or -1."""

    mode: ModeIndex
    geom: CavityGeometry
    s: int = 1

    def __post_init__(self):
        if self.s not in (1, -1):
            raise ValueError(f"conjugation flag must be +1 or -1, got {self.s}")

    def _check_inside(self, z: np.ndarray) -> None:
        if np.any(np.abs(z) > 0.5 * self.geom.length * (1.0 + 1e-12)):
            raise DomainError(f"point outside the cavity |z| <= {0.5 * self.geom.length!r} m")

    def amplitude(self, x: ArrayLike, y: ArrayLike, z: ArrayLike) -> np.ndarray:
        x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
        self._check_inside(z)
        mode = self.mode
        w = self.geom.beam_radius(mode, z)
        norm = w * math.sqrt(
            math.pi * 2.0 ** (mode.m + mode.n - 1) * math.factorial(mode.m) * math.factorial(mode.n) * self.geom.length
        )
        hx = hermite_polynomial(mode.m, math.sqrt(2.0) * x / w)
        hy = hermite_polynomial(mode.n, math.sqrt(2.0) * y / w)
        return hx * hy * np.exp(-(x * x + y * y) / (w * w)) / norm

    def phase(self, x: ArrayLike, y: ArrayLike, z: ArrayLike) -> np.ndarray:
        x, y, z = (np.asarray(v, dtype=float) for v in (x, y, z))
        self._check_inside(z)
        mode = self.mode
        z_r = self.geom.rayleigh_range
        w = self.geom.beam_radius(mode, z)
        return (
            mode_wavenumber(mode, self.geom) * z
            - (mode.order + 1) * np.arctan(z / z_r)
            + (x * x + y * y) / (w * w) * z / z_r
            + (mode.l - 1) * math.pi / 2.0
        )

    def __call__(self, x: ArrayLike, y: ArrayLike, z: ArrayLike) -> np.ndarray:
        return self.amplitude(x, y, z) * np.exp(-1j * self.s * self.phase(x, y, z))


def mode_field(mode: ModeIndex, s: int, point: tuple[ArrayLike, ArrayLike, ArrayLike], geom: CavityGeometry):
    """Evaluate phi^(s) of ``mode`` at ``point``; arrays broadcast."""
    value = ModeField(mode, geom, s)(*point)
    return complex(value) if np.ndim(value) == 0 else value
