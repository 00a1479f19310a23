import numpy as np
import pytest

from cavity_perturb.exceptions import ConfigError
from cavity_perturb.scan import build_basis, run, run_tilt_sweep, scan_grid, singlet_triplet_crossings
from cavity_perturb.scan_config import parse_config
from cavity_perturb.spectrum import SpectrumSolver

ALIGNED_FOUR_MODES = """
[membrane.z0]
min = -266e-9
max = 266e-9
steps = 201

[basis]
orders = [0, 2]

[analysis]
crossings = false
points = ["max_slope"]
"""


@pytest.fixture(scope="module")
def cfg():
    return parse_config(ALIGNED_FOUR_MODES)


@pytest.fixture(scope="module")
def result(cfg):
    return run(cfg, threads=4)


def test_scan_grid(cfg):
    grid = scan_grid(cfg)
    assert len(grid) == 201
    assert grid[0] == pytest.approx(-266e-9)
    assert build_basis(cfg).labels() == ["TEM00,p", "TEM20,p-1", "TEM11,p-1", "TEM02,p-1"]


def test_branches_cover_the_grid(cfg, result):
    assert len(result.branches) == 4
    lengths = {len(branch) for branch in result.branches}
    assert lengths == {201 + result.refinements}
    z0 = result.branches[0].z0
    assert np.all(np.diff(z0) > 0.0)
    assert np.isin(scan_grid(cfg), z0).all()
    assert result.provenance["steps"] == 201
    assert result.provenance["modes"] == result.labels


def test_max_slope_reports(result):
    reports = [r for r in result.couplings if r.location == "max_slope"]
    assert {r.branch_id for r in reports} <= {0, 1, 2, 3}
    assert reports
    assert all(np.isfinite(r.g0) for r in reports)


def test_thread_count_does_not_change_results(cfg, result):
    single = run(cfg, threads=1)
    assert single.refinements == result.refinements
    for a, b in zip(single.branches, result.branches):
        np.testing.assert_array_equal(a.z0, b.z0)
        np.testing.assert_allclose(a.shifts, b.shifts, rtol=1e-12, atol=1e-6)
        np.testing.assert_allclose(np.abs(a.vectors), np.abs(b.vectors), atol=1e-12)


def test_spectrum_repeats_every_half_wavelength(cfg):
    # the scan window spans exactly lambda/2
    solver = SpectrumSolver(build_basis(cfg), cfg.membrane.state(), cfg.cavity.geometry())
    grid = scan_grid(cfg)
    first = np.sort(solver.point(float(grid[0])).shifts)
    last = np.sort(solver.point(float(grid[-1])).shifts)
    middle = np.sort(solver.point(float(grid[len(grid) // 2])).shifts)
    scale = np.max(np.abs(first - middle))
    assert scale > 0.0
    np.testing.assert_allclose(first, last, atol=1e-3 * scale)


def test_no_crossings_without_detection(result):
    assert result.crossings == []
    assert singlet_triplet_crossings(result) == []
    assert result.sweep is None


def test_tilt_sweep_needs_a_sweep_section(cfg):
    with pytest.raises(ConfigError, match="sweep"):
        run_tilt_sweep(cfg)
