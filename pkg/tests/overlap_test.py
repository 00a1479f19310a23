import itertools
import math

import numpy as np
import pytest

from cavity_perturb.exceptions import CapabilityError, DomainError
from cavity_perturb.modes import ModeIndex
from cavity_perturb.overlap import (
    MembraneState,
    OverlapTable,
    PairContext,
    gamma_coefficient,
    j_integral,
    j_integral_quadrature,
    matrix_element,
    matrix_element_quadrature,
    overlap_table,
)

SQRT_PI = math.sqrt(math.pi)


def _basis_modes(l):
    return [ModeIndex(l=l - order // 2, m=m, n=order - m) for order in (0, 2, 4) for m in range(order, -1, -1)]


def _matrix(modes, mem, geom):
    return np.array([[matrix_element(a, b, mem, geom) for b in modes] for a in modes])


@pytest.mark.parametrize("c, delta", [(0.0, 0.0), (1.3, 0.004), (-0.7, -0.01)])
def test_j_gaussian_moment(c, delta):
    value = j_integral(0, 0, c, 0, delta)
    assert value.real == pytest.approx(SQRT_PI, rel=1e-14)
    assert value.imag == 0.0


def test_j_odd_hermite_vanishes():
    value = j_integral(1, 0, 0.0, 0, 0.003)
    assert value.real == 0.0
    assert value.imag == 0.0


@pytest.mark.parametrize("c", [0.5, -1.2])
def test_j_first_moment(c):
    value = j_integral(0, 0, c, 1, 0.002)
    assert value.real == pytest.approx(0.0, abs=1e-15)
    assert value.imag == pytest.approx(c * SQRT_PI, rel=1e-14)
    # J = J^R - i J^I
    assert value.value == pytest.approx(complex(0.0, -c * SQRT_PI), rel=1e-14)


@pytest.mark.parametrize("delta", [0.0, 0.006, -0.009])
def test_j_first_hermite_pair(delta):
    value = j_integral(1, 1, 0.0, 0, delta)
    assert value.real == pytest.approx(2.0 * SQRT_PI * math.sqrt(1.0 - delta * delta), rel=1e-14)


@pytest.mark.parametrize("args", [(2, 0, 0.0, 0, 0.005), (3, 1, 0.4, 2, 0.003), (4, 2, -1.1, 3, -0.008)])
def test_j_matches_quadrature(args):
    m, n, c, q, _ = args
    closed = j_integral(*args)
    numeric = j_integral_quadrature(*args)
    scale = SQRT_PI * math.sqrt(2.0**m * math.factorial(m) * 2.0**n * math.factorial(n)) * (1.0 + abs(c)) ** (m + n + q)
    for a, b in ((closed.real, numeric.real), (closed.imag, numeric.imag)):
        assert abs(a - b) <= max(1e-8 * abs(b), 1e-12 * scale)


@pytest.mark.slow
def test_j_quadrature_grid():
    for m, n, q, c, delta in itertools.product((0, 1, 3, 6), (0, 2, 5, 6), (0, 1, 2, 3), (0.0, 0.7, -2.0), (0.0, 0.01, -0.004)):
        closed = j_integral(m, n, c, q, delta)
        numeric = j_integral_quadrature(m, n, c, q, delta)
        scale = SQRT_PI * math.sqrt(2.0**m * math.factorial(m) * 2.0**n * math.factorial(n)) * (1.0 + abs(c)) ** (m + n + q)
        for a, b in ((closed.real, numeric.real), (closed.imag, numeric.imag)):
            assert abs(a - b) <= max(1e-8 * abs(b), 1e-12 * scale), (m, n, q, c, delta)


def test_j_domain_checks():
    with pytest.raises(DomainError):
        j_integral(-1, 0, 0.0, 0, 0.0)
    with pytest.raises(CapabilityError):
        j_integral(13, 0, 0.0, 0, 0.0)
    with pytest.raises(CapabilityError):
        j_integral(0, 0, 0.0, 5, 0.0)
    with pytest.raises(CapabilityError):
        j_integral(0, 0, 0.0, 0, 1.0)


def test_gamma_of_fundamental_pair(geom, singlet):
    pair = PairContext.build(singlet, singlet, geom)
    assert gamma_coefficient(pair, 1, 0, 0, 0.0, 0.0) == pytest.approx(math.pi, rel=1e-14)
    assert gamma_coefficient(pair, -1, 0, 0, 0.0, 0.0) == pytest.approx(math.pi, rel=1e-14)


@pytest.mark.parametrize("s", [1, -1])
def test_gamma_singlet_triplet_matches_quadrature(geom, singlet, triplet, s):
    pair = PairContext.build(singlet, triplet[0], geom)
    alpha_x, alpha_y = 2e-4, 0.0
    big_k = pair.big_k(s)
    ax, ay = pair.scaled_tilts(alpha_x, alpha_y)
    expected = (
        j_integral_quadrature(0, 2, big_k * ax, 0, pair.delta_k).value
        * j_integral_quadrature(0, 0, big_k * ay, 0, pair.delta_k).value
    )
    assert gamma_coefficient(pair, s, 0, 0, alpha_x, alpha_y) == pytest.approx(expected, rel=1e-8, abs=1e-12)


def test_pair_scalings(geom, singlet, triplet):
    pair = PairContext.build(singlet, triplet[0], geom)
    swapped = PairContext.build(triplet[0], singlet, geom)
    assert swapped.delta_k == -pair.delta_k
    assert swapped.kappa_minus == -pair.kappa_minus
    assert swapped.big_k(-1) == -pair.big_k(-1)
    assert swapped.big_k(1) == pair.big_k(1)
    # adjacent longitudinal orders sit half a period apart in the standing wave
    singlet_phase = PairContext.build(singlet, singlet, geom).ell_phase(1)
    triplet_phase = PairContext.build(triplet[0], triplet[2], geom).ell_phase(1)
    assert (triplet_phase - singlet_phase) % (2.0 * math.pi) == pytest.approx(math.pi)


def test_matrix_symmetric(geom, l):
    modes = _basis_modes(l)
    mem = MembraneState(z0=0.01 * geom.rayleigh_range, alpha_x=0.5e-3, alpha_y=0.2e-3)
    v = _matrix(modes, mem, geom)
    scale = np.max(np.abs(v))
    assert scale > 0.0
    np.testing.assert_allclose(v, v.T, rtol=0, atol=1e-12 * scale)


def test_table_matches_elements(geom, l):
    modes = tuple(_basis_modes(l))
    mem = MembraneState(z0=3e-4, alpha_x=-0.21e-3, alpha_y=0.15e-3)
    v = _matrix(modes, mem, geom)
    table = OverlapTable(modes, mem.at(0.0), geom)
    np.testing.assert_allclose(table.values(mem.z0), v, rtol=0, atol=1e-12 * np.max(np.abs(v)))


def test_table_is_cached_per_template(geom, l):
    modes = tuple(_basis_modes(l))
    mem = MembraneState(alpha_x=1e-4)
    assert overlap_table(modes, mem.at(1e-3), geom) is overlap_table(modes, mem.at(-2e-3), geom)
    assert overlap_table(modes, mem, geom) is not overlap_table(modes, mem.swapped_tilts(), geom)


def test_selection_rules_aligned_at_waist(geom, l):
    modes = [ModeIndex(l=l - (m + n) // 2, m=m, n=n) for m in range(4) for n in range(4) if m + n <= 4]
    mem = MembraneState()
    v = _matrix(modes, mem, geom)
    scale = np.max(np.abs(v))
    for a, b in itertools.product(range(len(modes)), repeat=2):
        i, j = modes[a], modes[b]
        if (i.m + j.m) % 2 or (i.n + j.n) % 2:
            assert abs(v[a, b]) <= 1e-12 * scale, (i, j)


def test_no_y_tilt_decouples_odd_y_modes(geom, singlet, triplet):
    mem = MembraneState(z0=4e-4, alpha_x=0.6e-3, alpha_y=0.0)
    assert matrix_element(singlet, triplet[1], mem, geom) == 0.0
    assert matrix_element(triplet[0], triplet[1], mem, geom) == 0.0
    assert matrix_element(singlet, triplet[0], mem, geom) != 0.0


def test_index_matched_membrane_is_invisible(geom, l):
    modes = _basis_modes(l)
    mem = MembraneState(n_r=1.0, z0=2e-4, alpha_x=3e-4)
    assert not np.any(_matrix(modes, mem, geom))


def test_axis_exchange(geom, l):
    modes = _basis_modes(l)
    mem = MembraneState(z0=-4e-4, alpha_x=0.3e-3, alpha_y=-0.1e-3)
    swapped = mem.swapped_tilts()
    for i, j in itertools.product(modes, repeat=2):
        assert matrix_element(i.swapped(), j.swapped(), swapped, geom) == pytest.approx(
            matrix_element(i, j, mem, geom), rel=1e-13, abs=1e-25
        )


def test_periodic_in_membrane_position(geom, singlet):
    k1 = geom.reference_wavenumber
    z0 = 1e-4
    period = math.pi / k1
    mem = MembraneState(z0=z0)
    samples = [matrix_element(singlet, singlet, mem.at(z0 + period * u), geom) for u in np.linspace(0.0, 1.0, 65)]
    amplitude = max(abs(value) for value in samples)
    assert abs(samples[-1] - samples[0]) <= 1e-3 * amplitude


def test_diagonal_oscillates_about_mean(geom, singlet):
    # time-averaged coupling (n^2 - 1) L_d / L plus a standing-wave term of the same size
    mem = MembraneState()
    mean = (mem.n_r**2 - 1.0) * mem.thickness / geom.length
    period = math.pi / geom.reference_wavenumber
    samples = np.array([matrix_element(singlet, singlet, mem.at(period * u), geom) for u in np.linspace(0.0, 1.0, 64, endpoint=False)])
    assert np.mean(samples) == pytest.approx(mean, rel=1e-3)
    assert np.ptp(samples) == pytest.approx(2.0 * mean, rel=0.1)


@pytest.mark.slow
def test_quadrature_oracle_tilted(geom, singlet, triplet, l):
    mem = MembraneState(z0=1e-4, alpha_x=-0.21e-3, alpha_y=0.15e-3)
    scale = abs(matrix_element(singlet, singlet, mem, geom))
    quintuplet = ModeIndex(l=l - 2, m=2, n=2)
    for i, j in [(singlet, singlet), (singlet, triplet[0]), (singlet, triplet[1]), (triplet[0], quintuplet)]:
        closed = matrix_element(i, j, mem, geom)
        numeric = matrix_element_quadrature(i, j, mem, geom)
        assert abs(closed - numeric) <= 1e-4 * scale, (i, j)


@pytest.mark.slow
def test_quadrature_oracle_every_pair_of_the_basis(geom, l):
    mem = MembraneState(z0=1e-3 * geom.rayleigh_range, alpha_x=0.8e-3, alpha_y=-0.6e-3)
    modes = _basis_modes(l)
    scale = abs(matrix_element(modes[0], modes[0], mem, geom))
    for a, b in itertools.combinations_with_replacement(range(len(modes)), 2):
        closed = matrix_element(modes[a], modes[b], mem, geom)
        numeric = matrix_element_quadrature(modes[a], modes[b], mem, geom)
        assert abs(closed - numeric) <= 1e-4 * max(abs(numeric), 1e-3 * scale), (modes[a], modes[b], closed, numeric)


@pytest.mark.slow
def test_closed_form_error_is_second_order(geom, singlet):
    pair = PairContext.build(singlet, singlet, geom)
    big_k, ell = pair.big_k(1), pair.ell_phase(1)
    zetas, errors = [], []
    for target in (2e-3, 1e-2, 4e-2):
        # put the standing-wave phase on a multiple of 2 pi so only the envelope error remains
        turns = round((2.0 * big_k * target + ell) / (2.0 * math.pi))
        zeta = (2.0 * math.pi * turns - ell) / (2.0 * big_k)
        mem = MembraneState(z0=zeta * geom.rayleigh_range)
        numeric = matrix_element_quadrature(singlet, singlet, mem, geom, epsrel=1e-10)
        closed = matrix_element(singlet, singlet, mem, geom)
        zetas.append(zeta)
        errors.append(abs(closed - numeric) / abs(numeric))
    exponent = np.polyfit(np.log(zetas), np.log(errors), 1)[0]
    assert exponent == pytest.approx(2.0, abs=0.3)
