"""Continuation of eigenvalue branches across a sorted z0 grid.

Consecutive points are matched by maximal |c_prev . B . c_next| with a
linear-sum assignment; degenerate clusters are first rotated onto the previous
vectors so an arbitrary basis inside a degenerate subspace does not look like
a swap.  Points where the match is ambiguous are bisected with ``refine``.
"""
from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from cavity_perturb.config import AMBIGUITY_MARGIN, DEGENERACY_TOLERANCE, MAX_REFINEMENT_DEPTH, OVERLAP_THRESHOLD
from cavity_perturb.exceptions import BranchTrackingError
from cavity_perturb.logger import get_logger
from cavity_perturb.metrics import REFINEMENTS
from cavity_perturb.spectrum import SpectrumPoint, overlap_matrix

logger = get_logger("cavity_perturb.branches")

Refiner = Callable[[float], SpectrumPoint]


@dataclass(frozen=True)
class Branch:
    """One continued eigenvalue curve; ``vectors[k]`` is the coefficient vector at ``z0[k]``."""

    branch_id: int
    z0: np.ndarray
    shifts: np.ndarray
    vectors: np.ndarray
    metric: np.ndarray = field(repr=False)

    @property
    def dominant(self) -> np.ndarray:
        """Basis index of the largest |c_j| at each sample."""
        return np.argmax(np.abs(self.vectors), axis=1)

    def weights(self) -> np.ndarray:
        """B-weighted populations eta_j c_j^2, one row per sample."""
        return self.metric[None, :] * self.vectors**2

    def nearest(self, z0: float) -> int:
        return int(np.argmin(np.abs(self.z0 - z0)))

    def __len__(self) -> int:
        return len(self.z0)


@dataclass
class _Matched:
    point: SpectrumPoint
    order: np.ndarray
    vectors: np.ndarray

    @property
    def shifts(self) -> np.ndarray:
        return self.point.shifts[self.order]


def _degenerate_clusters(offsets: np.ndarray, tolerance: float) -> list[np.ndarray]:
    order = np.argsort(offsets)
    scale = max(float(np.max(np.abs(offsets))), 1e-300)
    clusters, current = [], [order[0]]
    for a, b in zip(order[:-1], order[1:]):
        if offsets[b] - offsets[a] <= tolerance * scale:
            current.append(b)
        else:
            clusters.append(np.array(current))
            current = [b]
    clusters.append(np.array(current))
    return [c for c in clusters if len(c) > 1]


def _align_clusters(previous: np.ndarray, point: SpectrumPoint) -> np.ndarray:
    vectors = point.vectors.copy()
    for cluster in _degenerate_clusters(point.offsets, DEGENERACY_TOLERANCE):
        sub = overlap_matrix(previous, vectors[:, cluster], point.metric)
        rows = np.argsort(np.sum(sub**2, axis=1))[-len(cluster):]
        # orthogonal Procrustes: rotate the cluster onto the best-matching previous vectors
        u, _, vt = np.linalg.svd(sub[rows].T)
        vectors[:, cluster] = vectors[:, cluster] @ (u @ vt)
    return vectors


def _match(previous: _Matched, point: SpectrumPoint, threshold: float, margin: float) -> tuple[_Matched, bool]:
    vectors = _align_clusters(previous.vectors, point)
    overlaps = overlap_matrix(previous.vectors, vectors, point.metric)
    magnitude = np.abs(overlaps)
    rows, cols = linear_sum_assignment(magnitude, maximize=True)
    order = cols[np.argsort(rows)]
    assigned = magnitude[np.arange(len(order)), order]

    ambiguous = bool(np.any(assigned < threshold))
    if len(order) > 1:
        masked = magnitude.copy()
        masked[np.arange(len(order)), order] = -np.inf
        runner_up = np.max(masked, axis=1)
        ambiguous = ambiguous or bool(np.any(assigned - runner_up < margin))

    matched = vectors[:, order]
    signs = np.sign(overlaps[np.arange(len(order)), order])
    signs[signs == 0.0] = 1.0
    return _Matched(point=point, order=order, vectors=matched * signs[None, :]), ambiguous


def track_branches(
    points: Sequence[SpectrumPoint],
    refine: Refiner | None = None,
    *,
    overlap_threshold: float = OVERLAP_THRESHOLD,
    ambiguity_margin: float = AMBIGUITY_MARGIN,
    max_depth: int = MAX_REFINEMENT_DEPTH,
) -> list[Branch]:
    """Link per-z0 spectra into branches; branch k starts on the k-th eigenvalue of the first point."""
    if not points:
        return []
    z = np.array([p.z0 for p in points])
    if np.any(np.diff(z) <= 0.0):
        raise ValueError("spectrum points must be sorted by strictly increasing z0")

    def advance(previous: _Matched, point: SpectrumPoint, depth: int) -> list[_Matched]:
        matched, ambiguous = _match(previous, point, overlap_threshold, ambiguity_margin)
        if not ambiguous:
            return [matched]
        interval = (previous.point.z0, point.z0)
        if refine is None or depth >= max_depth:
            raise BranchTrackingError(interval)
        middle = refine(0.5 * (interval[0] + interval[1]))
        REFINEMENTS.inc()
        logger.debug("refining branch continuation at z0=%r (depth %d)", middle.z0, depth + 1)
        left = advance(previous, middle, depth + 1)
        return left + advance(left[-1], point, depth + 1)

    first = points[0]
    chain = [_Matched(point=first, order=np.arange(first.size), vectors=first.vectors.copy())]
    for point in points[1:]:
        chain.extend(advance(chain[-1], point, 0))

    z_all = np.array([m.point.z0 for m in chain])
    shifts = np.array([m.shifts for m in chain])
    vectors = np.array([m.vectors for m in chain])
    metric = first.metric
    return [
        Branch(branch_id=k, z0=z_all, shifts=shifts[:, k].copy(), vectors=vectors[:, :, k].copy(), metric=metric)
        for k in range(first.size)
    ]
