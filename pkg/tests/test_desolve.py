from __future__ import annotations

import numpy as np
import pytest

from dispconvex.desolve import (
    SolveConfig,
    continuum_de_solve,
    default_start,
    discrete_de_solve,
    flat_spot_check,
    mass_check,
    tightness_bound,
)
from dispconvex.ensemble import Ensemble, uncoupled_de_fixed_points
from dispconvex.potential import CoupledSystem, de_residual, directional_derivative, x_from_p
from dispconvex.profile import Profile, logistic_profile, pin, smoothed_step, sup_distance
from dispconvex.verify import random_direction, random_s_dprime_0


@pytest.fixture(scope="module")
def solution(ens36, pm36, grid):
    res = continuum_de_solve(ens36, default_start(pm36, grid), SolveConfig(), pm36)
    assert res.converged
    return res


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(tol=0.0)
    with pytest.raises(ValueError):
        SolveConfig(damping=1.5)
    with pytest.raises(ValueError):
        SolveConfig(max_iters=0)


def test_discrete_zero_is_fixed():
    sys = CoupledSystem(Ensemble(3, 6, 0.45), 20, 3)
    res = discrete_de_solve(sys, np.zeros(sys.size))
    assert res.converged and res.iterations == 1
    assert np.all(res.profile_or_vector == 0.0)


def test_discrete_below_threshold_decodes():
    sys = CoupledSystem(Ensemble(3, 6, 0.45), 100, 3)
    res = discrete_de_solve(sys, np.ones(sys.size), SolveConfig(max_iters=100000, tol=1e-12))
    assert res.converged
    assert np.max(res.profile_or_vector) < 1e-6
    assert res.potential_trace[-1] == pytest.approx(0.0, abs=1e-10)


def test_discrete_above_threshold_plateau():
    ens = Ensemble(3, 6, 0.49)
    sys = CoupledSystem(ens, 100, 3)
    x = discrete_de_solve(sys, np.ones(sys.size), SolveConfig(max_iters=100000, tol=1e-12)).profile_or_vector
    plateau = x_from_p(uncoupled_de_fixed_points(ens)[-1], 6)
    assert x[sys.L] == pytest.approx(plateau, abs=1e-6)
    assert x[0] < 0.1
    assert np.all(np.diff(x) >= -1e-12)


def test_discrete_shape_checks():
    sys = CoupledSystem(Ensemble(3, 6, 0.45), 5, 2)
    with pytest.raises(ValueError):
        discrete_de_solve(sys, np.zeros(3))
    with pytest.raises(ValueError):
        discrete_de_solve(sys, np.full(sys.size, 1.5))


def test_continuum_converges(solution):
    assert solution.de_residual < 10 * SolveConfig().tol
    assert solution.final_residual <= SolveConfig().tol
    assert solution.summary()["converged"] is True


def test_continuum_potential_decreases(solution):
    assert solution.potential_trace[-1] <= solution.potential_trace[0]


def test_continuum_is_pinned(solution, pm36):
    pr = solution.profile_or_vector
    assert pr(0.0) == pytest.approx(0.5 * pm36, abs=1e-9)


def test_restart_from_solution(ens36, pm36, solution):
    res = continuum_de_solve(ens36, solution.profile_or_vector, SolveConfig(), pm36)
    assert res.iterations <= 1
    assert res.final_residual <= SolveConfig().tol


def test_residual_below_tolerance(ens36, solution):
    assert de_residual(ens36, solution.profile_or_vector).sup_norm < 1e-8


def test_stationary_in_random_directions(ens36, solution):
    rng = np.random.default_rng(5)
    pr = solution.profile_or_vector
    for _ in range(10):
        assert abs(directional_derivative(ens36, pr, random_direction(rng, pr.grid))) < 1e-6


def test_unique_from_two_starts(ens36, pm36, grid, solution):
    other = random_s_dprime_0(np.random.default_rng(9), grid, pm36)
    res = continuum_de_solve(ens36, other, SolveConfig(), pm36)
    assert res.converged
    assert sup_distance(pin(res.profile_or_vector, pm36), pin(solution.profile_or_vector, pm36)) < 1e-3


def test_nonconvergence_reported(ens36, pm36, grid):
    res = continuum_de_solve(ens36, smoothed_step(grid, pm36, 0.5), SolveConfig(max_iters=1), pm36)
    assert not res.converged
    assert res.iterations == 1


def test_flat_spots_none_for_logistic(grid, pm36):
    assert flat_spot_check(logistic_profile(grid, pm36, width=0.6), 1e-9, pm36) == []


def test_flat_spot_detected(grid, pm36):
    z = grid.z
    v = np.where(z < 1, 0.5 * pm36 * np.exp(np.minimum(z - 1, 0) * 3), 0.5 * pm36)
    v = np.where(z > 2, 0.5 * pm36 + 0.5 * pm36 * (1 - np.exp(-(z - 2) * 3)), v)
    pr = Profile(grid, v, 0.0, pm36)
    spots = flat_spot_check(pr, 1e-9, pm36)
    assert len(spots) == 1
    a, b = spots[0]
    assert a == pytest.approx(1.0, abs=2 * grid.h)
    assert b == pytest.approx(2.0, abs=2 * grid.h)


def test_flat_spots_none_for_solution(solution, pm36):
    assert flat_spot_check(solution.profile_or_vector, 1e-9, pm36) == []


def test_tightness_bound_shrinks_with_delta(ens36, pm36):
    bounds = [tightness_bound(ens36, pm36, d) for d in (0.1, 0.2, 0.4)]
    assert all(b > 0 for b in bounds)
    assert bounds == sorted(bounds, reverse=True)
    with pytest.raises(ValueError):
        tightness_bound(ens36, pm36, 1.5)


@pytest.mark.parametrize("delta", [0.1, 0.5])
def test_mass_check_on_solution(ens36, pm36, solution, delta):
    m = tightness_bound(ens36, pm36, delta)
    assert np.isfinite(m) and m > 0
    assert mass_check(solution.profile_or_vector, pm36, delta, m)
