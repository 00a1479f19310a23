"""Membrane perturbation matrix elements V_ij(z0, alpha_x, alpha_y).

The closed form expands the slab overlap integral to first order in the
axial offset zeta0 = z0/z_R and in the tilts; the transverse integrals reduce
to products of

    J(m, n, c, q, delta) = int dx exp(-x^2) (x - ic)^q H_m[sqrt(1+delta)(x - ic)] H_n[sqrt(1-delta)(x - ic)]

which are read off a generating function as truncated bivariate series.
The ``*_quadrature`` functions integrate the defining expressions directly
and are only used to check the closed forms.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator
from scipy.integrate import IntegrationWarning, dblquad, quad

from cavity_perturb.config import MAX_HERMITE_ORDER, MAX_MOMENT_ORDER, TILT_WARNING_THRESHOLD
from cavity_perturb.exceptions import CapabilityError, DomainError, OracleError
from cavity_perturb.logger import get_logger
from cavity_perturb.modes import CavityGeometry, ModeField, ModeIndex, mode_wavenumber, wavenumber_difference
from cavity_perturb.series import BivariateSeries

logger = get_logger("cavity_perturb.overlap")


class MembraneState(BaseModel):
    """Dielectric slab of thickness L_d centered at z0 and tilted by (alpha_x, alpha_y)."""

    model_config = ConfigDict(frozen=True)

    thickness: PositiveFloat = 50e-9
    n_r: float = Field(default=2.1, ge=1.0)
    n_i: float = Field(default=1e-6, ge=0.0)
    z0: float = 0.0
    alpha_x: float = 0.0
    alpha_y: float = 0.0

    @model_validator(mode="after")
    def _warn_large_tilt(self) -> MembraneState:
        if self.alpha_eff > TILT_WARNING_THRESHOLD:
            logger.warning(
                "membrane tilt %.3g rad exceeds the perturbative threshold %.3g rad",
                self.alpha_eff,
                TILT_WARNING_THRESHOLD,
            )
        return self

    @property
    def alpha_eff(self) -> float:
        return math.hypot(self.alpha_x, self.alpha_y)

    @property
    def corrected_thickness(self) -> float:
        return self.thickness / math.cos(self.alpha_eff)

    def zeta0(self, geom: CavityGeometry) -> float:
        return self.z0 / geom.rayleigh_range

    def at(self, z0: float) -> MembraneState:
        return self.model_copy(update={"z0": float(z0)})

    def swapped_tilts(self) -> MembraneState:
        return self.model_copy(update={"alpha_x": self.alpha_y, "alpha_y": self.alpha_x})


@dataclass(frozen=True)
class JValue:
    """J = real - i * imag."""

    real: float
    imag: float

    @property
    def value(self) -> complex:
        return complex(self.real, -self.imag)


def _check_j_domain(m: int, n: int, q: int, delta: float) -> None:
    if min(m, n, q) < 0:
        raise DomainError(f"J orders must be non-negative, got m={m}, n={n}, q={q}")
    if m > MAX_HERMITE_ORDER or n > MAX_HERMITE_ORDER:
        raise CapabilityError(f"Hermite orders ({m}, {n}) exceed the supported maximum {MAX_HERMITE_ORDER}")
    if q > MAX_MOMENT_ORDER:
        raise CapabilityError(f"moment order {q} exceeds the supported maximum {MAX_MOMENT_ORDER}")
    if not abs(delta) < 1.0:
        raise CapabilityError(f"|delta| must be below 1, got {delta!r}")


def _moment_polynomial(k: int, f_powers: list[BivariateSeries]) -> BivariateSeries:
    # S_k(f) = sum_j C(k, 2j) Gamma(j + 1/2) f^(k - 2j)
    ans = 0.0 * f_powers[0]
    for j in range(k // 2 + 1):
        ans = ans + math.comb(k, 2 * j) * math.gamma(j + 0.5) * f_powers[k - 2 * j]
    return ans


@lru_cache(maxsize=65536)
def _j_coefficients(m: int, n: int, c: float, q: int, delta: float) -> tuple[float, float]:
    shape = (m + 1, n + 1)
    a1, a2 = math.sqrt(1.0 + delta), math.sqrt(1.0 - delta)
    f = BivariateSeries.linear(a1, a2, shape)

    # g = exp(-t1^2 - t2^2 + f^2), expanded without the cancelling squares
    exponent = np.zeros(shape)
    if m >= 2:
        exponent[2, 0] = delta
    if n >= 2:
        exponent[0, 2] = -delta
    if m >= 1 and n >= 1:
        exponent[1, 1] = 2.0 * a1 * a2
    g = BivariateSeries(exponent).exp()

    phase = 2.0 * c * f
    cos_phase, sin_phase = phase.cos(), phase.sin()

    f_powers = [f**k for k in range(q + 1)]
    even = 0.0 * f
    for k in range(q // 2 + 1):
        even = even + (-1) ** k * math.comb(q, 2 * k) * c ** (2 * k) * _moment_polynomial(q - 2 * k, f_powers)
    odd = 0.0 * f
    for k in range((q - 1) // 2 + 1):
        odd = odd + (-1) ** k * math.comb(q, 2 * k + 1) * c ** (2 * k + 1) * _moment_polynomial(q - 2 * k - 1, f_powers)

    j_real = g * (cos_phase * even - sin_phase * odd)
    j_imag = g * (sin_phase * even + cos_phase * odd)
    return float(j_real.derivative_at_origin(m, n)), float(j_imag.derivative_at_origin(m, n))


def j_integral(m: int, n: int, c: float, q: int, delta: float) -> JValue:
    _check_j_domain(m, n, q, delta)
    return JValue(*_j_coefficients(int(m), int(n), float(c), int(q), float(delta)))


def j_integral_quadrature(m: int, n: int, c: float, q: int, delta: float, epsrel: float = 1e-10) -> JValue:
    _check_j_domain(m, n, q, delta)
    hm = np.zeros(m + 1)
    hm[m] = 1.0
    hn = np.zeros(n + 1)
    hn[n] = 1.0
    a1, a2 = math.sqrt(1.0 + delta), math.sqrt(1.0 - delta)

    def integrand(x: float) -> complex:
        shifted = x - 1j * c
        return (
            math.exp(-x * x)
            * shifted**q
            * np.polynomial.hermite.hermval(a1 * shifted, hm)
            * np.polynomial.hermite.hermval(a2 * shifted, hn)
        )

    scale = math.sqrt(math.pi) * math.sqrt(2.0**m * math.factorial(m) * 2.0**n * math.factorial(n)) * (1.0 + abs(c)) ** (m + n + q)
    parts = []
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        for part in (lambda x: integrand(x).real, lambda x: integrand(x).imag):
            try:
                value, _ = quad(part, -8.0, 8.0, epsabs=1e-14 * scale, epsrel=epsrel, limit=400)
            except IntegrationWarning as exc:
                raise OracleError(f"J quadrature did not converge for (m={m}, n={n}, c={c}, q={q}, delta={delta})") from exc
            parts.append(value)
    # J = J^R - i J^I
    return JValue(real=parts[0], imag=-parts[1])


@dataclass(frozen=True)
class PairContext:
    """Per-pair scalings: delta_k = (k_i - k_j)/(k_i + k_j), kappa+- = (k_i +- k_j) z_R / 2."""

    mode_i: ModeIndex
    mode_j: ModeIndex
    delta_k: float
    kappa_plus: float
    kappa_minus: float

    @classmethod
    def build(cls, i: ModeIndex, j: ModeIndex, geom: CavityGeometry) -> PairContext:
        k_sum = mode_wavenumber(i, geom) + mode_wavenumber(j, geom)
        k_diff = wavenumber_difference(i, j, geom)
        z_r = geom.rayleigh_range
        return cls(
            mode_i=i,
            mode_j=j,
            delta_k=k_diff / k_sum,
            kappa_plus=0.5 * k_sum * z_r,
            kappa_minus=0.5 * k_diff * z_r,
        )

    def big_k(self, s: int) -> float:
        i, j = self.mode_i, self.mode_j
        if s == 1:
            return self.kappa_plus - (0.5 * (i.m + j.m) + 0.5 * (i.n + j.n) + 1.0)
        return self.kappa_minus - (0.5 * (i.m - j.m) + 0.5 * (i.n - j.n))

    def delta_big_k(self, s: int) -> float:
        return 1.0 if s == 1 else self.delta_k

    def scaled_tilts(self, alpha_x: float, alpha_y: float) -> tuple[float, float]:
        root = math.sqrt(self.kappa_plus)
        return alpha_x / root, alpha_y / root

    def ell_phase(self, s: int) -> float:
        """pi * ell^(s) reduced modulo 2 pi; 2 ell is an integer."""
        two_ell = (self.mode_i.l - 1) + s * (self.mode_j.l - 1)
        return (two_ell % 4) * math.pi / 2.0

    def phase(self, s: int, zeta0: float) -> float:
        return 2.0 * self.big_k(s) * zeta0 + self.ell_phase(s)

    @property
    def prefactor(self) -> float:
        i, j = self.mode_i, self.mode_j
        product = math.factorial(i.m) * math.factorial(j.m) * math.factorial(i.n) * math.factorial(j.n)
        return 1.0 / (math.pi * math.sqrt(2.0 ** (i.m + j.m + i.n + j.n) * product))


def gamma_coefficient(pair: PairContext, s: int, q: int, p: int, alpha_x: float, alpha_y: float) -> complex:
    big_k = pair.big_k(s)
    ax, ay = pair.scaled_tilts(alpha_x, alpha_y)
    jx = j_integral(pair.mode_i.m, pair.mode_j.m, big_k * ax, q, pair.delta_k)
    jy = j_integral(pair.mode_i.n, pair.mode_j.n, big_k * ay, p, pair.delta_k)
    return jx.value * jy.value


@dataclass(frozen=True)
class ElementTerms:
    """z0-independent part of Re I^(s)_ij.

    Re I = envelope * [cos x2 (cos_coeff + cos_slope zeta0) + sin x2 (sin_coeff - sin_slope zeta0)],
    x2 = 2 big_k zeta0 + ell_phase.
    """

    envelope: float
    big_k: float
    ell_phase: float
    cos_coeff: float
    cos_slope: float
    sin_coeff: float
    sin_slope: float

    def real_part(self, zeta0):
        x2 = 2.0 * self.big_k * zeta0 + self.ell_phase
        return self.envelope * (
            np.cos(x2) * (self.cos_coeff + self.cos_slope * zeta0)
            + np.sin(x2) * (self.sin_coeff - self.sin_slope * zeta0)
        )


def element_terms(pair: PairContext, s: int, mem: MembraneState, geom: CavityGeometry) -> ElementTerms:
    big_k = pair.big_k(s)
    delta_big_k = pair.delta_big_k(s)
    ax, ay = pair.scaled_tilts(mem.alpha_x, mem.alpha_y)
    t = mem.corrected_thickness
    envelope = (
        pair.prefactor
        * (t / geom.length)
        * np.sinc(big_k * t / geom.rayleigh_range / math.pi)
        * math.exp(-big_k * big_k * (ax * ax + ay * ay))
    )

    def gamma(q: int, p: int) -> complex:
        return gamma_coefficient(pair, s, q, p, mem.alpha_x, mem.alpha_y)

    g00 = gamma(0, 0)
    g_zeta = gamma(0, 2) + gamma(2, 0)
    g_x = gamma(1, 2) + gamma(3, 0)
    g_y = gamma(2, 1) + gamma(0, 3)
    return ElementTerms(
        envelope=float(envelope),
        big_k=big_k,
        ell_phase=pair.ell_phase(s),
        cos_coeff=g00.real + delta_big_k * (g_x.imag * ax + g_y.imag * ay),
        cos_slope=delta_big_k * g_zeta.imag,
        sin_coeff=g00.imag - delta_big_k * (g_x.real * ax + g_y.real * ay),
        sin_slope=delta_big_k * g_zeta.real,
    )


def matrix_element(i: ModeIndex, j: ModeIndex, mem: MembraneState, geom: CavityGeometry) -> float:
    pair = PairContext.build(i, j, geom)
    zeta0 = mem.zeta0(geom)
    total = sum(element_terms(pair, s, mem, geom).real_part(zeta0) for s in (1, -1))
    return float((mem.n_r**2 - 1.0) * total)


class OverlapTable:
    """Closed-form coefficients for every pair of a basis at a fixed membrane template.

    Only z0 changes along a scan, so ``values(z0)`` costs a handful of
    vectorized trig evaluations per point.
    """

    _FIELDS = ("envelope", "big_k", "ell_phase", "cos_coeff", "cos_slope", "sin_coeff", "sin_slope")

    def __init__(self, modes: tuple[ModeIndex, ...], mem: MembraneState, geom: CavityGeometry):
        if not modes:
            raise DomainError("basis must contain at least one mode")
        self.modes = tuple(modes)
        self.geom = geom
        self.index_contrast = mem.n_r**2 - 1.0
        size = len(self.modes)
        arrays = {name: np.zeros((2, size, size)) for name in self._FIELDS}
        for a in range(size):
            for b in range(a, size):
                pair = PairContext.build(self.modes[a], self.modes[b], geom)
                for slot, s in enumerate((1, -1)):
                    terms = element_terms(pair, s, mem, geom)
                    for name in self._FIELDS:
                        value = getattr(terms, name)
                        arrays[name][slot, a, b] = value
                        arrays[name][slot, b, a] = value
        for name, value in arrays.items():
            value.setflags(write=False)
            setattr(self, name, value)

    def values(self, z0: float) -> np.ndarray:
        zeta0 = z0 / self.geom.rayleigh_range
        x2 = 2.0 * self.big_k * zeta0 + self.ell_phase
        terms = self.envelope * (
            np.cos(x2) * (self.cos_coeff + self.cos_slope * zeta0)
            + np.sin(x2) * (self.sin_coeff - self.sin_slope * zeta0)
        )
        v = self.index_contrast * terms.sum(axis=0)
        # upper triangle is authoritative
        return np.triu(v) + np.triu(v, 1).T


def overlap_table(modes: tuple[ModeIndex, ...], mem: MembraneState, geom: CavityGeometry) -> OverlapTable:
    """Shared table keyed on the membrane template with z0 stripped."""
    return _cached_table(tuple(modes), mem.at(0.0), geom)


@lru_cache(maxsize=32)
def _cached_table(modes: tuple[ModeIndex, ...], mem: MembraneState, geom: CavityGeometry) -> OverlapTable:
    return OverlapTable(modes, mem, geom)


def matrix_element_quadrature(
    i: ModeIndex,
    j: ModeIndex,
    mem: MembraneState,
    geom: CavityGeometry,
    epsrel: float = 1e-6,
    z_nodes: int = 32,
) -> float:
    """V_ij by direct integration over the tilted slab."""
    if max(i.m, i.n, j.m, j.n) > 4:
        raise CapabilityError("the quadrature oracle is limited to m, n <= 4")
    field_i = ModeField(i, geom, 1)
    field_j = ModeField(j, geom, 1)
    nodes, weights = np.polynomial.legendre.leggauss(z_nodes)
    half = 0.5 * mem.corrected_thickness
    scale = max(geom.beam_radius(i, mem.z0), geom.beam_radius(j, mem.z0))

    def integrand(v: float, u: float) -> float:
        x, y = u * scale, v * scale
        z = mem.z0 + mem.alpha_x * x + mem.alpha_y * y + half * nodes
        product = 2.0 * field_i(x, y, z).real * field_j(x, y, z).real
        return half * float(np.dot(weights, product)) * scale * scale

    typical = mem.corrected_thickness / geom.length
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, _ = dblquad(integrand, -6.0, 6.0, -6.0, 6.0, epsabs=1e-3 * epsrel * typical, epsrel=epsrel)
        except IntegrationWarning as exc:
            raise OracleError(f"matrix element quadrature did not converge for {i} / {j}") from exc
    return (mem.n_r**2 - 1.0) * value
