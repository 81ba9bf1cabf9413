import numpy as np
import pytest

from fk_saddle import (OracleGrid2D, bottleneck_minimax_2d,
                       cross_check_mountain_pass, run_property_suite)
from fk_saddle.verify import CrossCheckReport

from helper_models import flipped, shifted_classical

REFERENCE_D21 = 0.0625


def test_bottleneck_constant_landscape():
    grid = OracleGrid2D(resolution=101, values=np.full((101, 101), 0.7))
    assert bottleneck_minimax_2d(grid) == 0.7


def test_bottleneck_unavoidable_ridge():
    values = np.zeros((101, 101))
    values[50, :] = 3.5  # a ridge at a = 1/2 crossing the whole square
    grid = OracleGrid2D(resolution=101, values=values)
    assert bottleneck_minimax_2d(grid) == 3.5


def test_bottleneck_on_reduced_landscape(classical, gap):
    grid = OracleGrid2D.build(classical, gap, 401)
    assert bottleneck_minimax_2d(grid) == pytest.approx(REFERENCE_D21, abs=1e-4)


def test_oracle_monotone_under_refinement(classical, gap):
    coarse = OracleGrid2D.build(classical, gap, 101)
    fine = OracleGrid2D.build(classical, gap, 201)
    v_coarse = bottleneck_minimax_2d(coarse)
    v_fine = bottleneck_minimax_2d(fine)
    slack = max(np.max(np.abs(np.diff(coarse.values, axis=0))),
                np.max(np.abs(np.diff(coarse.values, axis=1))))
    assert v_fine <= v_coarse + slack


def test_oracle_resolution_guard(classical, gap):
    with pytest.raises(Exception):
        OracleGrid2D.build(classical, gap, 50)


def test_grid_max_location(classical, gap):
    grid = OracleGrid2D.build(classical, gap, 401)
    vmax, at = grid.grid_max()
    assert vmax == pytest.approx(2.0, abs=1e-6)
    assert at == (0.5, 0.5)


@pytest.fixture(scope="module")
def suite(classical, params):
    return run_property_suite(classical, (2, 1), seed=7, trials=50,
                              params=params)


def test_suite_all_pass(suite):
    assert suite, "empty report"
    for r in suite:
        assert r.passed, "%s failed: %s" % (r.name, r.detail)


def test_suite_covers_every_property(suite):
    names = {r.name for r in suite}
    assert names == {"submodularity", "gradient-fd", "flow-comparison",
                     "strong-comparison", "energy-decrease", "box-invariance",
                     "clip-decrease", "endpoint-fixity", "scaling"}


def test_suite_zero_trials(classical, params):
    assert run_property_suite(classical, (2, 1), seed=7, trials=0,
                              params=params) == []


def test_suite_deterministic(classical, params):
    a = run_property_suite(classical, (2, 1), seed=11, trials=20, params=params)
    b = run_property_suite(classical, (2, 1), seed=11, trials=20, params=params)
    assert [(r.name, r.worst_margin, r.passed, r.detail) for r in a] == \
           [(r.name, r.worst_margin, r.passed, r.detail) for r in b]


def test_suite_detects_sign_flip(params):
    # flipping one bond's coupling breaks the comparison principle; the test
    # battery must have the power to see it
    reports = run_property_suite(flipped(), (2, 1), seed=7, trials=50,
                                 params=params)
    comparison = next(r for r in reports if r.name == "flow-comparison")
    assert not comparison.passed


def test_cross_check_threefold(classical, gap, params):
    cc = cross_check_mountain_pass(classical, gap, resolutions=(401,),
                                   params=params)
    assert isinstance(cc, CrossCheckReport)
    assert cc.agree
    assert max(cc.deltas.values()) <= 1e-3
    assert cc.grid_max == pytest.approx(2.0, abs=1e-6)
    assert cc.grid_max_at == (0.5, 0.5)


def test_energy_offset_invariance(classical, gap, params):
    # adding a constant to the site energy shifts every level by
    # prod(p) * constant and leaves the barrier unchanged
    from fk_saddle import build_initial_path, mountain_pass
    from fk_saddle.periodic import find_gap_pair

    offset = 0.37
    pot2 = shifted_classical(offset=offset)
    gap2 = find_gap_pair(pot2, (1, 1), seed=3, params=params)
    path = build_initial_path("chi", 65, 2, gap, (2, 1))
    base = mountain_pass(classical, gap, path, params)
    path2 = build_initial_path("chi", 65, 2, gap2, (2, 1))
    res2 = mountain_pass(pot2, gap2, path2, params)
    assert res2.value == pytest.approx(base.value + 2 * offset, abs=1e-9)
    assert res2.c_ref == pytest.approx(base.c_ref + 2 * offset, abs=1e-9)
    assert res2.barrier == pytest.approx(base.barrier, abs=1e-9)
