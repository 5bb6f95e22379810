from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dispconvex.errors import NoCrossing, NotMonotone
from dispconvex.profile import (
    Grid,
    MonotoneFlag,
    Profile,
    ProfileClass,
    QuantileView,
    classify,
    constant_profile,
    crossing,
    increasing_rearrangement,
    logistic_profile,
    pin,
    pin_in_place,
    profile_from_quantiles,
    quantile_view,
    read_profile_csv,
    resample,
    smoothed_step,
    step_profile,
    sup_distance,
    translate,
    truncate,
    write_profile_csv,
)


def dipped(grid, pm):
    v = smoothed_step(grid, pm, 0.8).values.copy()
    bump = (grid.z > 1.0) & (grid.z < 2.0)
    v[bump] -= 0.3 * pm
    return Profile(grid, v, 0.0, pm)


def test_grid_default():
    g = Grid.default()
    assert g.n == 2001
    assert g.h == pytest.approx(0.01)
    assert g.cells_per_unit == 100
    assert g.z[0] == -10 and g.z[-1] == 10


def test_profile_rejects_wrong_shape(grid):
    with pytest.raises(ValueError):
        Profile(grid, np.zeros(3))


def test_profile_rejects_false_flag(grid, pm36):
    with pytest.raises(ValueError):
        Profile(grid, dipped(grid, pm36).values, 0.0, pm36, MonotoneFlag.INCREASING)


def test_profile_values_immutable(grid, pm36):
    pr = smoothed_step(grid, pm36)
    with pytest.raises(ValueError):
        pr.values[0] = 1.0


def test_profile_evaluates_tails(grid, pm36):
    pr = smoothed_step(grid, pm36)
    assert pr(-50.0) == 0.0
    assert pr(50.0) == pm36


def test_classify_step(grid, pm36):
    assert classify(step_profile(grid, pm36), pm36) is ProfileClass.S_PRIME


def test_classify_logistic(grid, pm36):
    assert classify(logistic_profile(grid, pm36, width=0.5), pm36) is ProfileClass.S_DPRIME_0


def test_classify_unpinned(grid, pm36):
    assert classify(logistic_profile(grid, pm36, center=1.0, width=0.5), pm36) is ProfileClass.S_DPRIME


def test_classify_dip(grid, pm36):
    assert classify(dipped(grid, pm36), pm36) is ProfileClass.S


def test_classify_invalid(grid, pm36):
    assert classify(constant_profile(grid, 0.2), pm36) is ProfileClass.INVALID
    wide = logistic_profile(grid, pm36, width=3.0)
    assert classify(wide, pm36) is ProfileClass.INVALID


def test_truncate_identity_below(grid, pm36):
    pr = smoothed_step(grid, pm36)
    assert np.array_equal(truncate(pr, pm36).values, pr.values)


def test_truncate_constant(grid, pm36):
    out = truncate(constant_profile(grid, 1.2 * pm36), pm36)
    assert np.all(out.values == pm36)
    assert out.left_tail == out.right_tail == pm36


def test_rearrangement_identity_on_monotone(grid, pm36):
    pr = smoothed_step(grid, pm36)
    assert np.array_equal(increasing_rearrangement(pr).values, pr.values)


def test_rearrangement_sorts_dip(grid, pm36):
    pr = dipped(grid, pm36)
    out = increasing_rearrangement(pr)
    assert out.is_increasing
    assert np.array_equal(np.sort(out.values), np.sort(pr.values))


def test_pin_already_pinned(grid, pm36):
    pr = smoothed_step(grid, pm36)
    assert crossing(pr, 0.5 * pm36) == pytest.approx(0.0, abs=1e-12)
    assert pin(pr, pm36).grid.z_min == pytest.approx(grid.z_min, abs=1e-12)


def test_pin_undoes_translation(grid, pm36):
    pr = smoothed_step(grid, pm36)
    back = pin(translate(pr, 3.7), pm36)
    assert crossing(back, 0.5 * pm36) == pytest.approx(0.0, abs=1e-12)
    assert sup_distance(back, pr) < 1e-12


def test_pin_step_uses_jump_midpoint(grid, pm36):
    pr = pin(step_profile(grid, pm36, at=1.0), pm36)
    assert pr(-0.5 * grid.h - 1e-9) == 0.0 or pr(-grid.h) == 0.0
    assert pr(grid.h) == pm36
    assert pr(0.0) == pytest.approx(0.5 * pm36)


def test_pin_in_place_keeps_window(grid, pm36):
    pr = pin_in_place(logistic_profile(grid, pm36, center=0.37, width=0.6), pm36)
    assert pr.grid == grid
    assert pr(0.0) == pytest.approx(0.5 * pm36, abs=1e-6)


def test_crossing_errors(grid, pm36):
    with pytest.raises(NotMonotone):
        crossing(dipped(grid, pm36), 0.1)
    with pytest.raises(NoCrossing):
        crossing(smoothed_step(grid, pm36), 2.0)


def test_quantile_of_logistic_at_pin(grid, pm36):
    qv = quantile_view(logistic_profile(grid, pm36, width=0.7), m=2000)
    k = np.searchsorted(qv.p_levels, 0.5 * pm36)
    # midpoint levels straddle p_map/2
    assert 0.5 * (qv.z_of_p[k - 1] + qv.z_of_p[k]) == pytest.approx(0.0, abs=grid.h)


def test_quantile_of_step(grid, pm36):
    qv = quantile_view(step_profile(grid, pm36), m=100)
    assert np.all(qv.z_of_p == 0.0)


def test_quantile_needs_monotone(grid, pm36):
    with pytest.raises(NotMonotone):
        quantile_view(dipped(grid, pm36))


def test_quantile_round_trip(grid, pm36):
    m = 2000
    pr = logistic_profile(grid, pm36, width=0.7)
    back = profile_from_quantiles(quantile_view(pr, m), grid)
    assert sup_distance(pr, back) < 2 * (grid.h + pm36 / m)


def test_profile_from_step_quantiles(grid, pm36):
    qv = QuantileView(np.linspace(0.05, 0.95, 10) * pm36, np.full(10, 2.0), pm36)
    out = profile_from_quantiles(qv, grid)
    assert np.all(out.values[grid.z < 2.0] == 0.0)
    assert np.all(out.values[grid.z >= 2.0] == pm36)


def test_resample_and_translate(grid, pm36):
    pr = smoothed_step(grid, pm36)
    shifted = translate(pr, 0.5)
    assert shifted(0.5) == pytest.approx(pr(0.0))
    fine = resample(pr, Grid(-5, 5, 2001))
    assert fine(0.123) == pytest.approx(pr(0.123), abs=1e-5)


def test_csv_round_trip(tmp_path, grid, pm36):
    pr = logistic_profile(grid, pm36, width=0.6)
    path = tmp_path / "p.csv"
    write_profile_csv(pr, path)
    back = read_profile_csv(path)
    assert np.array_equal(back.values, pr.values)
    assert back.right_tail == pr.right_tail
    assert back.grid.n == grid.n
    assert back.monotone_flag is pr.monotone_flag


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=5, max_size=60))
def test_rearrangement_is_equimeasurable(vals):
    g = Grid(0.0, 1.0, len(vals))
    pr = Profile(g, vals, 0.0, 1.0)
    out = increasing_rearrangement(pr)
    assert out.is_increasing
    assert np.array_equal(np.sort(pr.values), out.values)
    assert np.array_equal(increasing_rearrangement(out).values, out.values)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.0, 2.0), min_size=5, max_size=60), st.floats(0.1, 1.5))
def test_truncate_properties(vals, cap):
    g = Grid(0.0, 1.0, len(vals))
    out = truncate(Profile(g, vals, 0.0, cap), cap)
    assert np.all(out.values <= cap)
    assert np.array_equal(truncate(out, cap).values, out.values)
