import math

import numpy as np
import pytest
import scipy.linalg
from scipy.constants import c as SPEED_OF_LIGHT

from cavity_perturb.exceptions import DomainError, UnphysicalEigenvalueError
from cavity_perturb.modes import wavenumber_difference
from cavity_perturb.overlap import MembraneState
from cavity_perturb.spectrum import (
    ModeBasis,
    PerturbationSystem,
    SpectrumSolver,
    aligned_eigenvalues,
    bisect_eigenvalues,
    build_system,
    frequency_shifts,
    shifts_from_offsets,
    singlet_triplet_cubic,
    solve_eigenvalues,
)

TILTED = MembraneState(z0=5e-4, alpha_x=-0.21e-3, alpha_y=0.15e-3)


def _empty_system(basis: ModeBasis) -> PerturbationSystem:
    return PerturbationSystem(v=np.zeros((basis.size, basis.size)), eta=basis.eta, one_minus_eta=basis.one_minus_eta, basis=basis)


def test_basis_layout(basis):
    assert basis.size == 9
    assert basis.labels()[:5] == ["TEM00,p", "TEM20,p-1", "TEM11,p-1", "TEM02,p-1", "TEM40,p-2"]
    assert [basis.family_of(i) for i in range(9)] == [0, 1, 1, 1, 2, 2, 2, 2, 2]
    with pytest.raises(IndexError):
        basis.family_of(9)
    with pytest.raises(DomainError):
        ModeBasis.from_orders(basis.geom, (0, 2), (0,))


def test_family_index_and_bare_spacing(basis):
    np.testing.assert_array_equal(basis.family_index, [0, 1, 1, 1, 2, 2, 2, 2, 2])
    shifts = basis.family_shifts
    assert shifts[0] == 0.0
    # one Gouy step below the next longitudinal order: FSR (2 arccos(g) / pi - 1)
    fsr = SPEED_OF_LIGHT / (2.0 * basis.geom.length)
    g = 1.0 - basis.geom.length / basis.geom.mirror_radius
    expected = fsr * (2.0 * math.acos(g) / math.pi - 1.0)
    assert shifts[1] == pytest.approx(expected, rel=1e-6)
    assert shifts[2] == pytest.approx(2.0 * expected, rel=1e-6)


def test_metric_below_one_for_lower_families(basis):
    eta = basis.eta
    assert eta[0] == 1.0
    assert np.all(eta[1:] < 1.0)
    np.testing.assert_allclose(basis.one_minus_eta, 1.0 - eta, rtol=0, atol=1e-15)


def test_two_mode_closed_form():
    sys = PerturbationSystem.from_matrices([[1.0 + 1e-4, 1e-3], [1e-3, 1.0 - 1e-4]], [1.0, 1.0])
    solution = solve_eigenvalues(sys)
    root = math.sqrt(1e-6 + 1e-8)
    np.testing.assert_allclose(solution.values, [1.0 + root, 1.0 - root], rtol=1e-12)
    assert solution.residual <= 1e-10


def test_unperturbed_spectrum(four_mode_basis):
    solution = solve_eigenvalues(_empty_system(four_mode_basis))
    eta = four_mode_basis.eta[1]
    np.testing.assert_allclose(solution.values, [1.0 / eta] * 3 + [1.0], rtol=1e-12)


def test_vectors_are_metric_orthonormal(basis, geom):
    sys = build_system(basis, TILTED, geom)
    solution = solve_eigenvalues(sys)
    gram = solution.vectors.T @ (sys.eta[:, None] * solution.vectors)
    np.testing.assert_allclose(gram, np.eye(basis.size), atol=1e-10)
    for value, vector in solution:
        np.testing.assert_allclose(sys.a @ vector, value * (sys.b @ vector), atol=1e-10)


def test_rejects_invalid_systems():
    with pytest.raises(DomainError):
        solve_eigenvalues(PerturbationSystem.from_matrices(np.eye(2), [1.0, 0.0]))
    with pytest.raises(DomainError):
        solve_eigenvalues(PerturbationSystem.from_matrices([[1.0, 1e-3], [0.0, 1.0]], [1.0, 1.0]))


def test_aligned_closed_form(four_mode_basis, geom):
    eta = four_mode_basis.eta[1]
    for z0 in (0.0, 1.3e-7, -2.2e-7, 4e-4):
        sys = build_system(four_mode_basis, MembraneState(z0=z0), geom)
        solution = solve_eigenvalues(sys)
        expected = np.sort(aligned_eigenvalues(sys.v, eta))[::-1]
        np.testing.assert_allclose(solution.values, expected, rtol=1e-12)


def test_aligned_degenerate_pair_persists(four_mode_basis, geom):
    for z0 in np.linspace(-266e-9, 266e-9, 7):
        solution = solve_eigenvalues(build_system(four_mode_basis, MembraneState(z0=z0), geom))
        spread = np.max(np.abs(solution.offsets))
        assert np.min(np.abs(np.diff(solution.offsets))) <= 1e-9 * spread


def test_cubic_unperturbed_coefficients():
    eta = 0.97
    cubic = singlet_triplet_cubic(np.zeros((4, 4)), eta)
    np.testing.assert_allclose(cubic.coefficients, (eta**2, -eta * (eta + 2.0), 2.0 * eta + 1.0, -1.0), rtol=1e-15)
    np.testing.assert_allclose(cubic.roots, [1.0 / eta, 1.0 / eta, 1.0], rtol=1e-12)
    assert cubic.decoupled == pytest.approx(1.0 / eta, rel=1e-15)


def _random_decoupled(seed: int, size: float = 0.1) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.uniform(-size, size, (4, 4))
    v = 0.5 * (v + v.T)
    v[2, [0, 1, 3]] = 0.0
    v[[0, 1, 3], 2] = 0.0
    return v


@pytest.mark.parametrize("seed", range(5))
def test_cubic_is_the_block_determinant(seed):
    eta = 0.9
    v = _random_decoupled(seed)
    block = [0, 1, 3]
    w = (np.eye(4) + v)[np.ix_(block, block)]
    b = np.diag([1.0, eta, eta])
    cubic = singlet_triplet_cubic(v, eta)
    for lam in (0.5, 1.7, 2.3):
        assert np.polyval(cubic.coefficients, lam) == pytest.approx(-np.linalg.det(w - lam * b), rel=1e-10, abs=1e-12)
    expected = np.sort(scipy.linalg.eigh(w, b, eigvals_only=True))[::-1]
    np.testing.assert_allclose(cubic.roots, expected, rtol=1e-10)
    assert cubic.decoupled == pytest.approx((1.0 + v[2, 2]) / eta)


def _factored_coefficients(v: np.ndarray, eta: float) -> tuple[float, float]:
    """a2, a3 written with V_14 folded into the V_12 terms."""
    v12, v14, v24 = v[0, 1], v[0, 3], v[1, 3]
    w11, w22, w44 = 1.0 + v[0, 0], 1.0 + v[1, 1], 1.0 + v[3, 3]
    a2 = -eta * v12 * (v12 + v14) - v24**2 + eta * w11 * w22 + w44 * (eta * w11 + w22)
    a3 = v12**2 * (w44 - v24) + v14 * v12 * (w22 - v24) + w11 * (v24**2 - w22 * w44)
    return a2, a3


def test_cubic_coefficients_follow_the_determinant_when_v14_differs():
    eta = 0.9
    v = _random_decoupled(7)
    v[0, 1] = v[1, 0] = 0.08
    v[0, 3] = v[3, 0] = 0.04
    cubic = singlet_triplet_cubic(v, eta)
    factored = _factored_coefficients(v, eta)
    assert abs(cubic.coefficients[2] - factored[0]) > 1e-6
    assert abs(cubic.coefficients[3] - factored[1]) > 1e-6
    # both forms agree once V_14 = V_12
    v[0, 3] = v[3, 0] = v[0, 1]
    cubic = singlet_triplet_cubic(v, eta)
    np.testing.assert_allclose(cubic.coefficients[2:], _factored_coefficients(v, eta), rtol=1e-12)


def test_cubic_matches_solver_for_x_tilt(four_mode_basis, geom):
    sys = build_system(four_mode_basis, MembraneState(z0=5e-4, alpha_x=-0.21e-3), geom)
    solution = solve_eigenvalues(sys)
    cubic = singlet_triplet_cubic(sys.v, four_mode_basis.eta[1])
    combined = np.sort(np.append(cubic.roots, cubic.decoupled))[::-1]
    np.testing.assert_allclose(combined, solution.values, rtol=1e-10)
    np.testing.assert_allclose(combined - 1.0, solution.offsets, rtol=0, atol=1e-6 * np.max(np.abs(solution.offsets)))


def _random_membrane(rng: np.random.Generator, alpha_x: float = 0.0) -> MembraneState:
    return MembraneState(
        thickness=rng.uniform(20e-9, 200e-9),
        n_r=rng.uniform(1.5, 2.5),
        z0=rng.uniform(-1e-3, 1e-3),
        alpha_x=alpha_x,
    )


def test_aligned_closed_form_random_membranes(four_mode_basis, geom):
    rng = np.random.default_rng(20)
    eta = four_mode_basis.eta[1]
    for _ in range(100):
        mem = _random_membrane(rng)
        sys = build_system(four_mode_basis, mem, geom)
        expected = np.sort(aligned_eigenvalues(sys.v, eta))[::-1]
        np.testing.assert_allclose(solve_eigenvalues(sys).values, expected, rtol=1e-10, err_msg=repr(mem))


def test_cubic_matches_solver_random_x_tilts(four_mode_basis, geom):
    rng = np.random.default_rng(21)
    eta = four_mode_basis.eta[1]
    for _ in range(100):
        mem = _random_membrane(rng, alpha_x=rng.uniform(-1e-3, 1e-3))
        sys = build_system(four_mode_basis, mem, geom)
        cubic = singlet_triplet_cubic(sys.v, eta)
        combined = np.sort(np.append(cubic.roots, cubic.decoupled))[::-1]
        np.testing.assert_allclose(combined, solve_eigenvalues(sys).values, rtol=1e-10, err_msg=repr(mem))


def test_bisection_matches_eigh(basis, geom):
    sys = build_system(basis, TILTED, geom)
    solution = solve_eigenvalues(sys)
    bisected = bisect_eigenvalues(sys)
    np.testing.assert_allclose(bisected, solution.values, rtol=1e-9)
    np.testing.assert_allclose(bisected - 1.0, solution.offsets, rtol=0, atol=1e-6 * np.max(np.abs(solution.offsets)))


def test_bisection_keeps_degenerate_roots(four_mode_basis):
    sys = _empty_system(four_mode_basis)
    bisected = bisect_eigenvalues(sys)
    offset = four_mode_basis.one_minus_eta[1] / four_mode_basis.eta[1]
    np.testing.assert_allclose(bisected - 1.0, [offset] * 3 + [0.0], rtol=0, atol=1e-13)


def test_frequency_shift_conversion(geom):
    nu = geom.reference_frequency
    assert frequency_shifts([1.0], geom)[0] == 0.0
    assert frequency_shifts([1.0 + 1e-8], geom)[0] == pytest.approx(-0.5e-8 * nu, rel=1e-6)
    assert shifts_from_offsets([1e-8], nu)[0] == pytest.approx(-0.5e-8 * nu, rel=1e-6)
    with pytest.raises(UnphysicalEigenvalueError):
        frequency_shifts([1.0, -0.2], geom)
    with pytest.raises(UnphysicalEigenvalueError):
        shifts_from_offsets([-1.0], nu)


def test_triplet_spacing_of_empty_cavity(four_mode_basis, geom, singlet, triplet):
    solver = SpectrumSolver(four_mode_basis, MembraneState(n_r=1.0), geom)
    shifts = np.sort(solver.point(0.0).shifts)
    expected = SPEED_OF_LIGHT * wavenumber_difference(triplet[0], singlet, geom) / (2.0 * math.pi)
    np.testing.assert_allclose(shifts[:3], [expected] * 3, rtol=1e-9)
    assert abs(shifts[3]) <= 1e-3


def test_tilt_exchange_leaves_spectrum(basis, geom):
    mem = MembraneState(z0=2e-4, alpha_x=0.4e-3, alpha_y=-0.1e-3)
    a = solve_eigenvalues(build_system(basis, mem, geom)).offsets
    b = solve_eigenvalues(build_system(basis, mem.swapped_tilts(), geom)).offsets
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9 * np.max(np.abs(a)))


def test_point_matches_direct_solve(basis, geom):
    solver = SpectrumSolver(basis, TILTED, geom)
    point = solver.point(TILTED.z0 + 1e-8)
    direct = solve_eigenvalues(build_system(basis, TILTED.at(TILTED.z0 + 1e-8), geom))
    np.testing.assert_allclose(point.offsets, direct.offsets, rtol=0, atol=1e-12 * np.max(np.abs(direct.offsets)))
    np.testing.assert_allclose(point.shifts, shifts_from_offsets(direct.offsets, basis.reference_frequency), rtol=1e-9)
    np.testing.assert_array_equal(point.metric, basis.eta)


def test_march_lands_on_the_target_spectrum(basis, geom):
    solver = SpectrumSolver(basis, TILTED, geom)
    start = solver.point(TILTED.z0)
    z_end = TILTED.z0 + 120e-9
    shifts, vectors = solver.march(start.z0, start.vectors, z_end)
    target = solver.point(z_end)
    np.testing.assert_allclose(np.sort(shifts), np.sort(target.shifts), rtol=1e-12)
    gram = vectors.T @ (basis.eta[:, None] * vectors)
    np.testing.assert_allclose(gram, np.eye(basis.size), atol=1e-10)


def test_march_to_the_same_point(basis, geom):
    solver = SpectrumSolver(basis, TILTED, geom)
    start = solver.point(TILTED.z0)
    shifts, vectors = solver.march(start.z0, start.vectors[:, 2], start.z0)
    assert shifts[0] == start.shifts[2]
    np.testing.assert_allclose(vectors[:, 0], start.vectors[:, 2])
