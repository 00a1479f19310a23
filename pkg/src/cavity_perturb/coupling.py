"""Optomechanical observables read off the frequency-shift branches.

Slopes and curvatures come from local quartic least-squares fits; avoided
crossings are local minima of the gap between two branches that exchange
character.  G0 = |d omega / d z0| x0 Theta and G2 = (d^2 omega / d z0^2) x0^2.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat
from scipy.constants import hbar
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from cavity_perturb.branches import Branch
from cavity_perturb.config import (
    CROSSING_GAP_FRACTION,
    CROSSING_WINDOW_FACTOR,
    MIN_FIT_SAMPLES,
    MODE_CONTENT_THRESHOLD,
    PAIRING_OVERLAP,
    RESAMPLE_POINTS,
)
from cavity_perturb.exceptions import DomainError, EstimationError
from cavity_perturb.logger import get_logger
from cavity_perturb.metrics import CROSSINGS_FOUND

logger = get_logger("cavity_perturb.coupling")

# (branch, z0 samples) -> shifts of that branch at the samples, Hz
Sampler = Callable[[Branch, np.ndarray], np.ndarray]
# (z_start, z0, vector a at z_start, vector b at z_start) -> |shift_a - shift_b| at z0, Hz
GapFunction = Callable[[float, float, np.ndarray, np.ndarray], float]

DEFAULT_HALF_WIDTH = 0.02 * 1064e-9


@dataclass(frozen=True)
class DerivativeEstimate:
    slope: float  # Hz/m
    curvature: float  # Hz/m^2
    residual: float  # rms fit residual, Hz
    samples: int


def derivative_estimates(
    branch: Branch,
    z0: float,
    half_width: float = DEFAULT_HALF_WIDTH,
    *,
    sampler: Sampler | None = None,
    min_samples: int = MIN_FIT_SAMPLES,
    degree: int = 4,
) -> DerivativeEstimate:
    """Slope and curvature of ``branch`` at ``z0`` from a quartic fit over z0 +- half_width."""
    if half_width <= 0.0:
        raise EstimationError("fit half-width must be positive", z0=z0)
    inside = np.abs(branch.z0 - z0) <= half_width * (1.0 + 1e-12)
    z, values = branch.z0[inside], branch.shifts[inside]
    if len(z) < min_samples:
        if sampler is None:
            raise EstimationError(f"only {len(z)} samples within +-{half_width!r} m, need {min_samples}", z0=z0)
        z = np.linspace(z0 - half_width, z0 + half_width, max(RESAMPLE_POINTS, min_samples))
        values = np.asarray(sampler(branch, z), dtype=float)
    fit = Polynomial.fit(z - z0, values, deg=min(degree, len(z) - 1))
    residual = float(np.sqrt(np.mean((fit(z - z0) - values) ** 2)))
    return DerivativeEstimate(
        slope=float(fit.deriv(1)(0.0)),
        curvature=float(fit.deriv(2)(0.0)),
        residual=residual,
        samples=len(z),
    )


@dataclass(frozen=True)
class AvoidedCrossing:
    """Minimum of the gap between two branches that exchange character.

    ``modes`` lists the basis indices carrying at least MODE_CONTENT_THRESHOLD of
    the pair's population at the minimum, largest first; ``families`` the
    unperturbed multiplets holding at least that much of it.  ``window`` is the fit
    half-width used for the curvatures, m.
    """

    z0: float
    gap: float  # Hz
    upper_branch: int
    lower_branch: int
    upper_curvature: float  # Hz/m^2
    lower_curvature: float
    modes: tuple[int, ...]
    window: float = DEFAULT_HALF_WIDTH
    families: tuple[int, ...] = ()


def _local_minima(values: np.ndarray) -> list[int]:
    return [k for k in range(1, len(values) - 1) if values[k] <= values[k - 1] and values[k] < values[k + 1]]


def _bracket_edge(gap: np.ndarray, k: int, step: int, factor: float = 2.0) -> int:
    """Walk away from the minimum until the gap doubles or turns over."""
    edge = k
    while 0 <= edge + step < len(gap):
        edge += step
        if gap[edge] >= factor * gap[k]:
            break
        following = edge + step
        if 0 <= following < len(gap) and gap[following] < gap[edge]:
            break
    return edge


def _separated(branches: Sequence[Branch], a: int, b: int, span: slice) -> bool:
    """True when some other branch stays strictly between a and b over the whole span."""
    low = np.minimum(branches[a].shifts[span], branches[b].shifts[span])
    high = np.maximum(branches[a].shifts[span], branches[b].shifts[span])
    for c, branch in enumerate(branches):
        if c in (a, b):
            continue
        values = branch.shifts[span]
        if np.all((values > low) & (values < high)):
            return True
    return False


def _slope_scale(difference: np.ndarray, z: np.ndarray, left: int, right: int) -> float:
    if right - left < 2:
        return 0.0
    span = slice(left, right + 1)
    return 0.5 * float(np.max(np.abs(np.gradient(difference[span], z[span]))))


def pair_content(first: Branch, second: Branch, k: int) -> np.ndarray:
    """Population of each basis index summed over the two branches at sample k."""
    return first.weights()[k] + second.weights()[k]


def detect_avoided_crossings(
    branches: Sequence[Branch],
    *,
    families: Sequence[int] | None = None,
    family_shifts: Sequence[float] | None = None,
    resolution: float | None = None,
    gap_function: GapFunction | None = None,
    sampler: Sampler | None = None,
    min_gap: float = 0.0,
    half_width: float = DEFAULT_HALF_WIDTH,
) -> list[AvoidedCrossing]:
    """Local minima of |nu_a - nu_b| where two neighbouring branches swap eigenvector character.

    A candidate is dropped when another branch stays between the pair across
    the bracket, when both branches come from one unperturbed multiplet
    (``families`` maps basis index to family), when the gap is not small next
    to the bare spacing of the two families (``family_shifts``, Hz), and when
    the gap is below what a grid of step ``resolution`` can show.
    """
    if len(branches) < 2:
        return []
    z = branches[0].z0
    for branch in branches[1:]:
        if len(branch.z0) != len(z) or not np.array_equal(branch.z0, z):
            raise DomainError("branches must share one z0 grid")
    if len(z) < 3:
        return []
    family_index = None if families is None else np.asarray(families, dtype=int)

    crossings = []
    for a in range(len(branches)):
        for b in range(a + 1, len(branches)):
            first, second = branches[a], branches[b]
            difference = first.shifts - second.shifts
            gap = np.abs(difference)
            for k in _local_minima(gap):
                if difference[k - 1] * difference[k + 1] <= 0.0:
                    continue  # sign change: a true crossing
                left, right = _bracket_edge(gap, k, -1), _bracket_edge(gap, k, 1)
                if _separated(branches, a, b, slice(left, right + 1)):
                    continue
                metric = first.metric
                keep = abs(first.vectors[left] @ (metric * first.vectors[right]))
                swap = abs(first.vectors[left] @ (metric * second.vectors[right]))
                if swap <= keep:
                    continue
                content = pair_content(first, second, k)
                involved: tuple[int, ...] = ()
                if family_index is not None:
                    per_family = np.bincount(family_index, weights=content)
                    involved = tuple(int(f) for f in np.nonzero(per_family >= MODE_CONTENT_THRESHOLD)[0])
                    if len(involved) < 2:
                        continue
                slope_scale = _slope_scale(difference, z, left, right)
                crossing = _refine_crossing(
                    first, second, k, slope_scale, content, involved, gap_function, sampler, half_width
                )
                if crossing.gap < min_gap:
                    continue
                if family_shifts is not None and len(involved) == 2:
                    spacing = abs(family_shifts[involved[1]] - family_shifts[involved[0]])
                    if crossing.gap >= CROSSING_GAP_FRACTION * spacing:
                        logger.debug("dropping %r Hz minimum at z0=%r: not small next to %r Hz", crossing.gap, crossing.z0, spacing)
                        continue
                if resolution is not None and crossing.gap < 2.0 * slope_scale * resolution:
                    logger.debug("dropping %r Hz minimum at z0=%r: below grid resolution", crossing.gap, crossing.z0)
                    continue
                crossings.append(crossing)
                CROSSINGS_FOUND.inc()
    crossings.sort(key=lambda c: (c.z0, c.upper_branch, c.lower_branch))
    logger.debug("detected %d avoided crossings", len(crossings))
    return crossings


def _refine_crossing(
    first: Branch,
    second: Branch,
    k: int,
    slope_scale: float,
    content: np.ndarray,
    involved: tuple[int, ...],
    gap_function: GapFunction | None,
    sampler: Sampler | None,
    half_width: float,
) -> AvoidedCrossing:
    z = first.z0
    step = 0.5 * (z[k + 1] - z[k - 1])
    difference = first.shifts - second.shifts

    if gap_function is not None:
        ref_a, ref_b = first.vectors[k], second.vectors[k]

        def objective(u: float) -> float:
            return gap_function(z[k], z[k] + u * step, ref_a, ref_b)
    else:
        lo, hi = max(0, k - 3), min(len(z), k + 4)
        spline = CubicSpline(z[lo:hi], difference[lo:hi])

        def objective(u: float) -> float:
            return abs(float(spline(z[k] + u * step)))

    # golden section in units of the grid step
    u_left, u_right = (z[k - 1] - z[k]) / step, (z[k + 1] - z[k]) / step
    try:
        result = minimize_scalar(objective, bracket=(u_left, 0.0, u_right), method="golden", tol=1e-10)
    except ValueError:
        result = minimize_scalar(objective, bounds=(u_left, u_right), method="bounded", options={"xatol": 1e-10})
    u = float(np.clip(result.x, u_left, u_right))
    z_star, gap = z[k] + u * step, float(objective(u))

    # gap(z) ~ sqrt(gap^2 + (2 s dz)^2): curvature lives within |dz| ~ gap / (2 s)
    window = half_width
    if slope_scale > 0.0 and gap > 0.0:
        window = min(half_width, CROSSING_WINDOW_FACTOR * 0.5 * gap / slope_scale)
    curvatures = []
    for branch in (first, second):
        try:
            curvatures.append(derivative_estimates(branch, z_star, window, sampler=sampler).curvature)
        except EstimationError as exc:
            logger.debug("no curvature for branch %d at z0=%r: %s", branch.branch_id, z_star, exc)
            curvatures.append(math.nan)

    value_a = float(np.interp(z_star, z, first.shifts))
    value_b = float(np.interp(z_star, z, second.shifts))
    upper, lower = (first, second) if value_a >= value_b else (second, first)
    order = np.argsort(-content, kind="stable")
    modes = tuple(int(i) for i in order if content[i] >= MODE_CONTENT_THRESHOLD)
    logger.debug("avoided crossing z0=%r gap=%r Hz between branches %d and %d", z_star, gap, first.branch_id, second.branch_id)
    return AvoidedCrossing(
        z0=float(z_star),
        gap=gap,
        upper_branch=upper.branch_id,
        lower_branch=lower.branch_id,
        upper_curvature=curvatures[0] if upper is first else curvatures[1],
        lower_curvature=curvatures[1] if upper is first else curvatures[0],
        modes=modes,
        window=window,
        families=involved,
    )


def _pair_frame(crossing: AvoidedCrossing, branches: Sequence[Branch]) -> tuple[np.ndarray, np.ndarray]:
    upper, lower = branches[crossing.upper_branch], branches[crossing.lower_branch]
    k = upper.nearest(crossing.z0)
    return np.column_stack([upper.vectors[k], lower.vectors[k]]), upper.metric


def group_by_pairing(
    crossings: Sequence[AvoidedCrossing], branches: Sequence[Branch], min_overlap: float = PAIRING_OVERLAP
) -> list[list[AvoidedCrossing]]:
    """Group crossings that couple the same two unperturbed states.

    The two branches of a crossing span one plane of coefficient space however
    strongly they are mixed; crossings share a pairing when both principal
    overlaps of their planes reach ``min_overlap``.
    """
    groups: list[tuple[np.ndarray, list[AvoidedCrossing]]] = []
    for crossing in crossings:
        frame, metric = _pair_frame(crossing, branches)
        for reference, members in groups:
            overlaps = np.linalg.svd(reference.T @ (metric[:, None] * frame), compute_uv=False)
            if float(np.min(overlaps)) >= min_overlap:
                members.append(crossing)
                break
        else:
            groups.append((frame, [crossing]))
    return [members for _, members in groups]


class CouplingContext(BaseModel):
    """Mechanical mode: effective mass (kg), angular frequency (rad/s), transverse overlap Theta."""

    model_config = ConfigDict(frozen=True)

    mass: PositiveFloat = 34e-12
    omega_m: PositiveFloat = 2.0 * math.pi * 380e3
    theta: float = Field(default=1.0, ge=0.0, le=1.0)

    @property
    def x0(self) -> float:
        return zero_point_width(self.mass, self.omega_m)


def zero_point_width(mass: float, omega_m: float) -> float:
    if mass <= 0.0 or omega_m <= 0.0:
        raise DomainError("mass and mechanical frequency must be positive")
    return math.sqrt(hbar / (mass * omega_m))


def linear_coupling(slope: float, ctx: CouplingContext) -> float:
    """G0 (rad/s) from d omega / d z0 (rad/s/m)."""
    return abs(slope) * ctx.x0 * ctx.theta


def quadratic_coupling(curvature: float, ctx: CouplingContext) -> float:
    """G2 (rad/s) from d^2 omega / d z0^2 (rad/s/m^2); keeps the curvature sign."""
    return curvature * ctx.x0**2


@dataclass(frozen=True)
class CouplingReport:
    location: str  # "extremum", "max_slope" or "crossing"
    z0: float
    branch_id: int
    slope: float  # d omega / d z0, rad/s/m
    curvature: float  # d^2 omega / d z0^2, rad/s/m^2
    g0: float  # rad/s
    g2: float  # rad/s

    @property
    def g0_over_2pi(self) -> float:
        return self.g0 / (2.0 * math.pi)

    @property
    def g2_over_2pi(self) -> float:
        return self.g2 / (2.0 * math.pi)


def coupling_report(location: str, z0: float, branch_id: int, estimate: DerivativeEstimate, ctx: CouplingContext) -> CouplingReport:
    slope = 2.0 * math.pi * estimate.slope
    curvature = 2.0 * math.pi * estimate.curvature
    return CouplingReport(
        location=location,
        z0=z0,
        branch_id=branch_id,
        slope=slope,
        curvature=curvature,
        g0=linear_coupling(slope, ctx),
        g2=quadratic_coupling(curvature, ctx),
    )


def membrane_reflectivity(n_r: float, n_i: float, thickness: float, wavelength: float) -> float:
    """Intensity reflectivity of a lossless dielectric slab at normal incidence."""
    if n_r < 1.0:
        raise DomainError(f"refractive index must be >= 1, got {n_r!r}")
    delta = 2.0 * math.pi * n_r * thickness / wavelength
    sin_d, cos_d = math.sin(delta), math.cos(delta)
    numerator = ((n_r * n_r - 1.0) * sin_d) ** 2
    return numerator / ((2.0 * n_r * cos_d) ** 2 + ((n_r * n_r + 1.0) * sin_d) ** 2)


def calibrate_index(reflectivity: float, thickness: float, wavelength: float, upper: float = 4.0) -> float:
    """Smallest n_r >= 1 whose slab reflectivity equals ``reflectivity``."""
    if not 0.0 <= reflectivity < 1.0:
        raise DomainError(f"reflectivity must lie in [0, 1), got {reflectivity!r}")
    if reflectivity == 0.0:
        return 1.0
    grid = np.linspace(1.0, upper, 301)
    values = np.array([membrane_reflectivity(n, 0.0, thickness, wavelength) for n in grid]) - reflectivity
    crossings = np.nonzero(np.diff(np.sign(values)) > 0)[0]
    if len(crossings) == 0:
        raise DomainError(f"no index in [1, {upper}] reaches reflectivity {reflectivity!r}")
    k = int(crossings[0])
    return brentq(lambda n: membrane_reflectivity(n, 0.0, thickness, wavelength) - reflectivity, grid[k], grid[k + 1], xtol=1e-14)


def max_linear_coupling(nu0: float, reflectivity: float, length: float) -> float:
    """Largest |d nu / d z0| = 2 nu0 sqrt(R) / L, Hz/m."""
    if not 0.0 <= reflectivity <= 1.0:
        raise DomainError(f"reflectivity must lie in [0, 1], got {reflectivity!r}")
    return 2.0 * nu0 * math.sqrt(reflectivity) / length
