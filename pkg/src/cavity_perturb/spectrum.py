"""Generalized eigenproblem (I + V) c = lambda B c and its closed-form special cases.

B is diagonal with B_ii = eta_f = k_f^2 / k_1^2 for the family of mode i;
lambda = 1 + mu and the cavity frequency is nu_ref * lambda^(-1/2).  All
solves work with mu and with 1 - eta computed from wavenumber differences,
so megahertz shifts on a 10^14 Hz carrier keep full precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.constants import c as SPEED_OF_LIGHT
from scipy.optimize import linear_sum_assignment

from cavity_perturb.config import CONTINUATION_OVERLAP, MAX_CONTINUATION_HALVINGS, RESIDUAL_TOLERANCE
from cavity_perturb.exceptions import DomainError, EigenSolverError, UnphysicalEigenvalueError
from cavity_perturb.logger import get_logger
from cavity_perturb.metrics import POINTS_SOLVED, SOLVE_TIME
from cavity_perturb.modes import CavityGeometry, ModeIndex, mode_wavenumber, wavenumber_difference
from cavity_perturb.overlap import MembraneState, overlap_table

logger = get_logger("cavity_perturb.spectrum")


@dataclass(frozen=True)
class ModeFamily:
    order: int
    longitudinal: int
    modes: tuple[ModeIndex, ...]

    @classmethod
    def build(cls, order: int, longitudinal: int) -> ModeFamily:
        modes = tuple(ModeIndex(l=longitudinal, m=order - k, n=k) for k in range(order + 1))
        return cls(order=order, longitudinal=longitudinal, modes=modes)


@dataclass(frozen=True)
class ModeBasis:
    """Ordered degenerate families; the first family is the frequency reference."""

    geom: CavityGeometry
    families: tuple[ModeFamily, ...]

    def __post_init__(self):
        if not self.families:
            raise DomainError("basis must contain at least one family")

    @classmethod
    def from_orders(
        cls,
        geom: CavityGeometry,
        orders: tuple[int, ...] = (0, 2, 4),
        offsets: tuple[int, ...] | None = None,
    ) -> ModeBasis:
        """Families of transverse order N at longitudinal index l + offset (default -N // 2)."""
        if offsets is None:
            offsets = tuple(-(order // 2) for order in orders)
        if len(offsets) != len(orders):
            raise DomainError(f"got {len(orders)} family orders but {len(offsets)} longitudinal offsets")
        l = geom.longitudinal_index
        return cls(geom, tuple(ModeFamily.build(order, l + offset) for order, offset in zip(orders, offsets)))

    @property
    def modes(self) -> tuple[ModeIndex, ...]:
        return tuple(mode for family in self.families for mode in family.modes)

    @property
    def size(self) -> int:
        return len(self.modes)

    @property
    def reference_mode(self) -> ModeIndex:
        return self.families[0].modes[0]

    @property
    def reference_wavenumber(self) -> float:
        return mode_wavenumber(self.reference_mode, self.geom)

    @property
    def reference_frequency(self) -> float:
        return SPEED_OF_LIGHT * self.reference_wavenumber / (2.0 * math.pi)

    @property
    def eta(self) -> np.ndarray:
        k1 = self.reference_wavenumber
        return np.array([(mode_wavenumber(mode, self.geom) / k1) ** 2 for mode in self.modes])

    @property
    def one_minus_eta(self) -> np.ndarray:
        ref = self.reference_mode
        k1 = self.reference_wavenumber
        values = []
        for mode in self.modes:
            diff = wavenumber_difference(ref, mode, self.geom)
            values.append(diff * (2.0 * k1 - diff) / (k1 * k1))
        return np.array(values)

    def family_of(self, index: int) -> int:
        return int(self.family_index[index])

    @property
    def family_index(self) -> np.ndarray:
        """Family number of every basis index."""
        return np.repeat(np.arange(len(self.families)), [len(family.modes) for family in self.families])

    @property
    def family_shifts(self) -> np.ndarray:
        """Empty-cavity frequency of each family relative to the reference, Hz."""
        starts = np.cumsum([0] + [len(family.modes) for family in self.families[:-1]])
        offsets = self.one_minus_eta[starts] / self.eta[starts]
        return shifts_from_offsets(offsets, self.reference_frequency)

    def labels(self) -> list[str]:
        l_ref = self.reference_mode.l
        return [mode.label(l_ref) for mode in self.modes]


@dataclass(frozen=True)
class PerturbationSystem:
    """A = I + V, B = diag(eta); ``one_minus_eta`` is carried separately for precision."""

    v: np.ndarray
    eta: np.ndarray
    one_minus_eta: np.ndarray
    basis: ModeBasis | None = None

    @classmethod
    def from_matrices(cls, a: np.ndarray, eta: np.ndarray) -> PerturbationSystem:
        a = np.asarray(a, dtype=float)
        eta = np.asarray(eta, dtype=float)
        return cls(v=a - np.eye(len(eta)), eta=eta, one_minus_eta=1.0 - eta)

    @property
    def size(self) -> int:
        return len(self.eta)

    @property
    def a(self) -> np.ndarray:
        return np.eye(self.size) + self.v

    @property
    def b(self) -> np.ndarray:
        return np.diag(self.eta)

    def shifted_matrix(self, mu: float = 0.0) -> np.ndarray:
        """A - (1 + mu) B, assembled from V and 1 - eta."""
        return self.v + np.diag(self.one_minus_eta - mu * self.eta)


def build_system(basis: ModeBasis, mem: MembraneState, geom: CavityGeometry) -> PerturbationSystem:
    table = overlap_table(basis.modes, mem, geom)
    return PerturbationSystem(v=table.values(mem.z0), eta=basis.eta, one_minus_eta=basis.one_minus_eta, basis=basis)


@dataclass(frozen=True)
class EigenSolution:
    """Eigenpairs sorted by descending lambda; ``vectors[:, k]`` belongs to ``values[k]``."""

    values: np.ndarray
    offsets: np.ndarray
    vectors: np.ndarray
    residual: float = 0.0

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        for k in range(len(self.values)):
            yield float(self.values[k]), self.vectors[:, k]


def _check_system(sys: PerturbationSystem) -> None:
    if np.any(sys.eta <= 0.0):
        raise DomainError("metric B must be positive")
    if not np.allclose(sys.v, sys.v.T, rtol=0.0, atol=1e-14 * max(1.0, float(np.max(np.abs(sys.v))))):
        raise DomainError("perturbation matrix must be symmetric")


def solve_eigenvalues(sys: PerturbationSystem) -> EigenSolution:
    _check_system(sys)
    scale = 1.0 / np.sqrt(sys.eta)
    reduced = scale[:, None] * sys.v * scale[None, :]
    reduced[np.diag_indices_from(reduced)] += sys.one_minus_eta / sys.eta
    try:
        mu, y = scipy.linalg.eigh(reduced)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(f"symmetric eigensolve failed: {exc}") from exc
    order = np.argsort(mu)[::-1]
    mu = mu[order]
    vectors = scale[:, None] * y[:, order]

    norm_a = max(1.0, float(np.linalg.norm(sys.v, 2)))
    residuals = sys.v @ vectors + sys.one_minus_eta[:, None] * vectors - (sys.eta[:, None] * vectors) * mu[None, :]
    residual = float(np.max(np.linalg.norm(residuals, axis=0))) if len(mu) else 0.0
    gram = vectors.T @ (sys.eta[:, None] * vectors)
    orthonormality = float(np.max(np.abs(gram - np.eye(len(mu))))) if len(mu) else 0.0
    if residual > RESIDUAL_TOLERANCE * norm_a or orthonormality > RESIDUAL_TOLERANCE:
        raise EigenSolverError(
            f"eigenpairs fail acceptance (B-orthonormality error {orthonormality:.3e})", residual=residual / norm_a
        )
    return EigenSolution(values=1.0 + mu, offsets=mu, vectors=vectors, residual=residual / norm_a)


def _negative_inertia(matrix: np.ndarray) -> int:
    _, d, _ = scipy.linalg.ldl(matrix)
    return int(np.count_nonzero(np.linalg.eigvalsh(d) < 0.0))


def bisect_eigenvalues(sys: PerturbationSystem, tol: float = 1e-15) -> np.ndarray:
    """Eigenvalues from sign changes of det(A - lambda B), by inertia counting.

    Counting negative pivots of A - lambda B instead of watching the sign of
    the determinant keeps degenerate roots.  Returns lambda, descending.
    """
    _check_system(sys)
    scale = 1.0 / np.sqrt(sys.eta)
    reduced = scale[:, None] * sys.v * scale[None, :] + np.diag(sys.one_minus_eta / sys.eta)
    radius = np.sum(np.abs(reduced), axis=1) - np.abs(np.diag(reduced))
    lo = float(np.min(np.diag(reduced) - radius)) - tol
    hi = float(np.max(np.diag(reduced) + radius)) + tol
    width = max(hi - lo, tol)

    offsets = []
    for k in range(sys.size):
        a, b = lo, hi
        while b - a > tol * max(1.0, width):
            mid = 0.5 * (a + b)
            if mid in (a, b):
                break
            if _negative_inertia(sys.shifted_matrix(mid)) > k:
                b = mid
            else:
                a = mid
        offsets.append(0.5 * (a + b))
    return 1.0 + np.array(offsets)[::-1]


def shifts_from_offsets(offsets: np.ndarray, reference_frequency: float) -> np.ndarray:
    offsets = np.asarray(offsets, dtype=float)
    if np.any(offsets <= -1.0):
        raise UnphysicalEigenvalueError("eigenvalue lambda <= 0 has no physical frequency")
    return reference_frequency * np.expm1(-0.5 * np.log1p(offsets))


def frequency_shifts(eigenvalues, geom: CavityGeometry, basis: ModeBasis | None = None) -> np.ndarray:
    """delta_nu = nu_ref (lambda^(-1/2) - 1), in Hz."""
    values = np.asarray(eigenvalues, dtype=float)
    if np.any(values <= 0.0):
        raise UnphysicalEigenvalueError(f"eigenvalues must be positive, got min {float(np.min(values))!r}")
    nu_ref = basis.reference_frequency if basis is not None else geom.reference_frequency
    return nu_ref * np.expm1(-0.5 * np.log(values))


@dataclass(frozen=True)
class CubicSolution:
    coefficients: tuple[float, float, float, float]
    roots: np.ndarray
    decoupled: float


def singlet_triplet_cubic(v: np.ndarray, eta: float) -> CubicSolution:
    """Four-mode system ordered (00, 20, 11, 02) with TEM11 decoupled.

    The coefficients are the determinant expansion of the (00, 20, 02) block
    with W_ii = 1 + V_ii; they reduce to the symmetric textbook form when
    V_14 = V_12.  Roots come from the same cubic written in mu = lambda - 1.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (4, 4):
        raise DomainError(f"expected a 4x4 perturbation matrix, got {v.shape}")
    coupling_scale = max(float(np.max(np.abs(v))), 1e-300)
    if max(abs(v[0, 2]), abs(v[1, 2]), abs(v[2, 3])) > 1e-12 * coupling_scale:
        logger.warning("TEM11 row is coupled; the cubic treats it as decoupled")

    v12, v14, v24 = v[0, 1], v[0, 3], v[1, 3]
    w11, w22, w44 = 1.0 + v[0, 0], 1.0 + v[1, 1], 1.0 + v[3, 3]
    a0 = eta * eta
    a1 = -eta * (eta * w11 + w22 + w44)
    a2 = eta * w11 * w22 + eta * w11 * w44 + w22 * w44 - eta * v12**2 - eta * v14**2 - v24**2
    a3 = w11 * (v24**2 - w22 * w44) + v12**2 * w44 - 2.0 * v12 * v14 * v24 + v14**2 * w22

    e = 1.0 - eta
    p1, p2, p4 = v[0, 0], v[1, 1] + e, v[3, 3] + e
    b1 = -(eta * eta * p1 + eta * (p2 + p4))
    b2 = eta * p1 * (p2 + p4) + p2 * p4 - v24**2 - eta * v12**2 - eta * v14**2
    b3 = -(p1 * p2 * p4 - p1 * v24**2 - v12**2 * p4 + 2.0 * v12 * v14 * v24 - v14**2 * p2)
    s = max(abs(p1), abs(p2), abs(p4), abs(v12), abs(v14), abs(v24))
    if s == 0.0:
        mu = np.zeros(3)
    else:
        x = np.roots([a0, b1 / s, b2 / s**2, b3 / s**3])
        mu = np.sort(x.real)[::-1] * s
    return CubicSolution(
        coefficients=(float(a0), float(a1), float(a2), float(a3)),
        roots=1.0 + mu,
        decoupled=float((1.0 + v[2, 2]) / eta),
    )


def aligned_eigenvalues(v: np.ndarray, eta: float) -> np.ndarray:
    """Aligned membrane: only V_12 = V_14 couples; returns (lambda_1, lambda_2, lambda_3, lambda_4)."""
    v = np.asarray(v, dtype=float)
    w11 = 1.0 + v[0, 0]
    w22_eta = (1.0 + v[1, 1]) / eta
    root = math.sqrt(8.0 * v[0, 1] ** 2 / eta + (w11 - w22_eta) ** 2)
    return np.array([w22_eta, w22_eta, 0.5 * (w11 + w22_eta + root), 0.5 * (w11 + w22_eta - root)])


@dataclass(frozen=True)
class SpectrumPoint:
    """Solved spectrum at one membrane position; columns of ``vectors`` follow ``eigenvalues``."""

    z0: float
    eigenvalues: np.ndarray
    offsets: np.ndarray
    shifts: np.ndarray
    vectors: np.ndarray
    metric: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.eigenvalues)


def overlap_matrix(previous: np.ndarray, current: np.ndarray, metric: np.ndarray) -> np.ndarray:
    """Signed B-weighted overlaps previous[:, a] . B . current[:, b]."""
    return previous.T @ (metric[:, None] * current)


class SpectrumSolver:
    """Point solves for a fixed basis and membrane template; only z0 varies."""

    def __init__(self, basis: ModeBasis, mem: MembraneState, geom: CavityGeometry):
        self.basis = basis
        self.geom = geom
        self.membrane = mem
        self.table = overlap_table(basis.modes, mem, geom)
        self.eta = basis.eta
        self.one_minus_eta = basis.one_minus_eta
        self.reference_frequency = basis.reference_frequency

    def system(self, z0: float) -> PerturbationSystem:
        return PerturbationSystem(v=self.table.values(z0), eta=self.eta, one_minus_eta=self.one_minus_eta, basis=self.basis)

    def point(self, z0: float) -> SpectrumPoint:
        with SOLVE_TIME.time():
            try:
                solution = solve_eigenvalues(self.system(z0))
            except EigenSolverError as exc:
                raise EigenSolverError(str(exc), z0=z0) from exc
            shifts = shifts_from_offsets(solution.offsets, self.reference_frequency)
        POINTS_SOLVED.inc()
        return SpectrumPoint(
            z0=float(z0),
            eigenvalues=solution.values,
            offsets=solution.offsets,
            shifts=shifts,
            vectors=solution.vectors,
            metric=self.eta,
        )

    def follow(self, z0: float, references: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Shifts and vectors at z0 of the eigenstates best matching ``references`` (N x k)."""
        point = self.point(z0)
        overlaps = np.abs(overlap_matrix(references, point.vectors, self.eta))
        rows, cols = linear_sum_assignment(overlaps, maximize=True)
        chosen = cols[np.argsort(rows)]
        vectors = point.vectors[:, chosen]
        signs = np.sign(np.sum(references * (self.eta[:, None] * vectors), axis=0))
        signs[signs == 0.0] = 1.0
        return point.shifts[chosen], vectors * signs[None, :]

    def march(
        self,
        z_start: float,
        references: np.ndarray,
        z_end: float,
        *,
        min_overlap: float = CONTINUATION_OVERLAP,
        max_halvings: int = MAX_CONTINUATION_HALVINGS,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Carry eigenstates known at ``z_start`` continuously to ``z_end``.

        The step is halved while any state keeps less than ``min_overlap`` of
        its predecessor, so a gap narrower than |z_end - z_start| is not jumped.
        """
        references = np.asarray(references, dtype=float)
        if references.ndim == 1:
            references = references[:, None]
        t, dt, halvings = 0.0, 1.0, 0
        shifts = np.empty(0)
        while t < 1.0:
            t_next = min(1.0, t + dt)
            z = z_end if t_next >= 1.0 else z_start + t_next * (z_end - z_start)
            candidate, vectors = self.follow(z, references)
            overlap = float(np.min(np.abs(np.sum(references * (self.eta[:, None] * vectors), axis=0))))
            if overlap < min_overlap and halvings < max_halvings:
                dt *= 0.5
                halvings += 1
                continue
            t, references, shifts = t_next, vectors, candidate
            dt *= 2.0
        if halvings >= max_halvings:
            logger.debug("continuation %r -> %r used all %d step halvings", z_start, z_end, max_halvings)
        return shifts, references
