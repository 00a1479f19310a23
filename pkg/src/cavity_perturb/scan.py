"""Scan orchestration: solve every z0, continue the branches, find crossings, read off couplings."""
from __future__ import annotations

import asyncio
import math
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from cavity_perturb import __version__
from cavity_perturb.branches import Branch, track_branches
from cavity_perturb.config import resolve_threads
from cavity_perturb.coupling import (
    AvoidedCrossing,
    CouplingContext,
    CouplingReport,
    DerivativeEstimate,
    GapFunction,
    Sampler,
    coupling_report,
    derivative_estimates,
    detect_avoided_crossings,
)
from cavity_perturb.exceptions import ConfigError, EstimationError, NumericalError
from cavity_perturb.logger import get_logger
from cavity_perturb.metrics import IN_FLIGHT, POINTS_FAILED
from cavity_perturb.scan_config import ScanConfig
from cavity_perturb.spectrum import ModeBasis, SpectrumPoint, SpectrumSolver

logger = get_logger("cavity_perturb.scan")


@dataclass(frozen=True)
class SweepRow:
    """Strongest singlet-triplet crossing of one tilt-sweep scan; NaN when none was found."""

    alpha_x: float
    z0: float  # relative to membrane.shift, m
    gap: float  # Hz
    upper_curvature: float  # Hz/m^2
    lower_curvature: float


@dataclass(frozen=True)
class ScanResult:
    basis: ModeBasis
    shift: float
    branches: list[Branch]
    crossings: list[AvoidedCrossing]
    couplings: list[CouplingReport]
    provenance: dict = field(default_factory=dict)
    sweep: list[SweepRow] | None = None

    @property
    def labels(self) -> list[str]:
        return self.basis.labels()

    @property
    def refinements(self) -> int:
        return int(self.provenance.get("refinements", 0))


def build_basis(cfg: ScanConfig) -> ModeBasis:
    offsets = tuple(cfg.basis.offsets) if cfg.basis.offsets is not None else None
    return ModeBasis.from_orders(cfg.cavity.geometry(), tuple(cfg.basis.orders), offsets)


def scan_grid(cfg: ScanConfig) -> np.ndarray:
    """Absolute membrane positions of the scan, m."""
    window = cfg.membrane.z0
    return cfg.membrane.shift + np.linspace(window.min, window.max, window.steps)


async def _solve_points(solver: SpectrumSolver, grid: np.ndarray, threads: int) -> list[SpectrumPoint]:
    loop = asyncio.get_running_loop()
    sem = asyncio.Semaphore(threads)
    with ThreadPoolExecutor(max_workers=threads, thread_name_prefix="cavity-scan") as pool:

        async def solve(z0: float) -> SpectrumPoint:
            async with sem:
                IN_FLIGHT.inc()
                try:
                    return await loop.run_in_executor(pool, solver.point, z0)
                except NumericalError as exc:
                    POINTS_FAILED.inc()
                    if exc.z0 is None:
                        raise NumericalError(str(exc), z0=z0) from exc
                    raise
                finally:
                    IN_FLIGHT.dec()

        return list(await asyncio.gather(*(solve(float(z0)) for z0 in grid)))


def continuation_functions(solver: SpectrumSolver) -> tuple[Sampler, GapFunction]:
    """Resampling and exact-gap callbacks that march eigenstates from the stored branch samples."""

    def sampler(branch: Branch, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        order = np.argsort(z)
        k = branch.nearest(float(np.median(z)))
        start, vector = float(branch.z0[k]), branch.vectors[k]
        center = int(np.searchsorted(z[order], start))
        values = np.empty(len(z))
        # walk outward from the stored sample in both directions
        for indices in (order[center:], order[:center][::-1]):
            position, reference = start, vector
            for i in indices:
                shifts, vectors = solver.march(position, reference, float(z[i]))
                values[i] = shifts[0]
                position, reference = float(z[i]), vectors[:, 0]
        return values

    def gap_function(z_start: float, z0: float, ref_a: np.ndarray, ref_b: np.ndarray) -> float:
        shifts, _ = solver.march(z_start, np.column_stack([ref_a, ref_b]), z0)
        return abs(float(shifts[0] - shifts[1]))

    return sampler, gap_function


def _near_crossing(branch: Branch, z0: float, crossings: Sequence[AvoidedCrossing], half_width: float) -> bool:
    return any(
        branch.branch_id in (c.upper_branch, c.lower_branch) and abs(c.z0 - z0) <= half_width for c in crossings
    )


def _refined_extremum(branch: Branch, k: int, half_width: float, sampler: Sampler) -> tuple[float, DerivativeEstimate]:
    # Newton steps on the fitted slope; the grid extremum is only good to half a step
    z0 = float(branch.z0[k])
    step = float(np.max(np.diff(branch.z0[max(0, k - 1) : k + 2])))
    estimate = derivative_estimates(branch, z0, half_width, sampler=sampler)
    for _ in range(3):
        if estimate.curvature == 0.0:
            break
        move = -estimate.slope / estimate.curvature
        if abs(move) > step:
            break
        z0 += move
        estimate = derivative_estimates(branch, z0, half_width, sampler=sampler)
    return z0, estimate


def branch_reports(
    branch: Branch,
    ctx: CouplingContext,
    *,
    locations: list[str],
    half_width: float,
    sampler: Sampler,
    crossings: Sequence[AvoidedCrossing] = (),
) -> list[CouplingReport]:
    """Coupling reports at the extrema and the steepest point of one branch."""
    reports = []
    values = branch.shifts
    if "extremum" in locations and len(branch) >= 3:
        steps = np.diff(values)
        for k in np.nonzero(steps[:-1] * steps[1:] < 0.0)[0] + 1:
            if _near_crossing(branch, float(branch.z0[k]), crossings, half_width):
                continue
            try:
                z0, estimate = _refined_extremum(branch, int(k), half_width, sampler)
            except EstimationError as exc:
                logger.debug("skipping extremum of branch %d: %s", branch.branch_id, exc)
                continue
            reports.append(coupling_report("extremum", z0, branch.branch_id, estimate, ctx))
    if "max_slope" in locations and len(branch) >= 3:
        slope = np.gradient(values, branch.z0)
        k = int(np.argmax(np.abs(slope[1:-1]))) + 1
        try:
            estimate = derivative_estimates(branch, float(branch.z0[k]), half_width, sampler=sampler)
            reports.append(coupling_report("max_slope", float(branch.z0[k]), branch.branch_id, estimate, ctx))
        except EstimationError as exc:
            logger.debug("skipping max slope of branch %d: %s", branch.branch_id, exc)
    return reports


def crossing_reports(
    branches: list[Branch], crossings: list[AvoidedCrossing], ctx: CouplingContext, sampler: Sampler
) -> list[CouplingReport]:
    reports = []
    for crossing in crossings:
        for branch_id in (crossing.upper_branch, crossing.lower_branch):
            try:
                estimate = derivative_estimates(branches[branch_id], crossing.z0, crossing.window, sampler=sampler)
            except EstimationError as exc:
                logger.debug("skipping crossing report for branch %d: %s", branch_id, exc)
                continue
            reports.append(coupling_report("crossing", crossing.z0, branch_id, estimate, ctx))
    return reports


def run_scan(cfg: ScanConfig, threads: int | None = None, *, alpha_x: float | None = None) -> ScanResult:
    threads = resolve_threads(threads)
    geom = cfg.cavity.geometry()
    basis = build_basis(cfg)
    membrane = cfg.membrane.state(alpha_x)
    solver = SpectrumSolver(basis, membrane, geom)
    grid = scan_grid(cfg)
    logger.info(
        "scan start: %d positions, %d modes, l=%d, alpha_x=%r, threads=%d",
        len(grid), basis.size, geom.longitudinal_index, membrane.alpha_x, threads,
    )
    started_at = datetime.now(timezone.utc).isoformat()
    started = time.perf_counter()

    points = asyncio.run(_solve_points(solver, grid, threads))
    analysis = cfg.analysis
    branches = track_branches(
        points,
        refine=solver.point,
        overlap_threshold=analysis.overlap_threshold,
        max_depth=analysis.refinement_depth,
    )
    sampler, gap_function = continuation_functions(solver)
    half_width = cfg.fit_half_width
    crossings = []
    if analysis.crossings:
        window = cfg.membrane.z0
        crossings = detect_avoided_crossings(
            branches,
            families=basis.family_index,
            family_shifts=basis.family_shifts,
            resolution=(window.max - window.min) / (window.steps - 1),
            gap_function=gap_function,
            sampler=sampler,
            min_gap=analysis.min_gap,
            half_width=half_width,
        )

    ctx = cfg.mechanics.context()
    couplings = []
    for branch in branches:
        couplings.extend(
            branch_reports(branch, ctx, locations=analysis.points, half_width=half_width, sampler=sampler, crossings=crossings)
        )
    if "crossing" in analysis.points:
        couplings.extend(crossing_reports(branches, crossings, ctx, sampler))

    elapsed = time.perf_counter() - started
    provenance = {
        "version": __version__,
        "started_at": started_at,
        "elapsed_s": elapsed,
        "threads": threads,
        "steps": len(grid),
        "refinements": len(branches[0]) - len(grid) if branches else 0,
        "longitudinal_index": geom.longitudinal_index,
        "reference_frequency_Hz": basis.reference_frequency,
        "shift_m": cfg.membrane.shift,
        "alpha_x": membrane.alpha_x,
        "modes": basis.labels(),
        "config": cfg.model_dump(mode="json"),
    }
    logger.info(
        "scan finished in %.3f s: %d branches, %d crossings, %d coupling reports",
        elapsed, len(branches), len(crossings), len(couplings),
    )
    return ScanResult(
        basis=basis,
        shift=cfg.membrane.shift,
        branches=branches,
        crossings=crossings,
        couplings=couplings,
        provenance=provenance,
    )


def singlet_triplet_crossings(result: ScanResult) -> list[AvoidedCrossing]:
    """Crossings between the first two families, widest gap first."""
    selected = [crossing for crossing in result.crossings if crossing.families == (0, 1)]
    return sorted(selected, key=lambda c: c.gap, reverse=True)


def run_tilt_sweep(cfg: ScanConfig, threads: int | None = None) -> list[SweepRow]:
    """Repeat the scan per ``[sweep] alpha_x`` and keep the strongest singlet-triplet crossing."""
    if cfg.sweep is None:
        raise ConfigError("tilt sweep needs a [sweep] section with alpha_x values", field="sweep")
    rows = []
    for alpha_x in cfg.sweep.alpha_x:
        result = run_scan(cfg, threads, alpha_x=alpha_x)
        found = singlet_triplet_crossings(result)
        if not found:
            logger.warning("no singlet-triplet crossing at alpha_x=%r", alpha_x)
            rows.append(SweepRow(alpha_x, math.nan, math.nan, math.nan, math.nan))
            continue
        best = found[0]
        rows.append(SweepRow(alpha_x, best.z0 - cfg.membrane.shift, best.gap, best.upper_curvature, best.lower_curvature))
    return rows


def run(cfg: ScanConfig, threads: int | None = None) -> ScanResult:
    """The configured scan, plus the tilt sweep when ``[sweep]`` is present."""
    result = run_scan(cfg, threads)
    if cfg.sweep is not None:
        result = replace(result, sweep=run_tilt_sweep(cfg, threads))
    return result
