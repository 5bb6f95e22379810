"""Fixed-point solvers for coupled density evolution.

The discrete solver iterates the windowed FP map of the coupled chain.  The
continuum solver iterates the explicit form of the continuum DE equation

    p(z) = 1 - (1 - eps int_0^1 dv (int_0^1 du p(z+u-v))^(l-1))^(r-1)

with the same quadrature as :mod:`dispconvex.potential`, so its fixed points
are exactly the stationary points of the discrete functional there.  Both
updates are damped Jacobi sweeps; the continuum one re-pins each sweep to
remove the neutral translation direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import Ensemble, single_potential
from .potential import (
    CoupledSystem,
    check_tails,
    continuum_potential,
    de_residual,
    de_rhs,
    discrete_fp_map,
    discrete_potential,
)
from .profile import Grid, Profile, pin_in_place, smoothed_step


@dataclass(frozen=True)
class SolveConfig:
    max_iters: int = 20000
    tol: float = 1e-10
    damping: float = 0.5
    pin_each_iter: bool = True

    def __post_init__(self):
        if not self.tol > 0.0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(eq=False)
class SolveResult:
    profile_or_vector: Profile | np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    potential_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    de_residual: float = float("nan")

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "converged": self.converged,
            "de_residual": self.de_residual,
            "final_potential": float(self.potential_trace[-1]) if self.potential_trace.size else None,
        }


def discrete_de_solve(sys: CoupledSystem, x0, cfg: SolveConfig = SolveConfig()) -> SolveResult:
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (sys.size,):
        raise ValueError(f"expected {sys.size} values, got shape {x.shape}")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("x0 must lie in [0, 1]")
    trace = [discrete_potential(sys, x)]
    change = float("inf")
    it = 0
    while it < cfg.max_iters:
        new = (1.0 - cfg.damping) * x + cfg.damping * discrete_fp_map(sys, x)
        change = float(np.max(np.abs(new - x)))
        x = new
        it += 1
        trace.append(discrete_potential(sys, x))
        if change <= cfg.tol:
            break
    fp = float(np.max(np.abs(discrete_fp_map(sys, x) - x)))
    return SolveResult(x, it, change, change <= cfg.tol, np.array(trace), fp)


def continuum_fp_map(ens: Ensemble, pr: Profile) -> np.ndarray:
    """G(p) = 1 - (1 - RHS)^(r-1) at the nodes."""
    return 1.0 - (1.0 - de_rhs(ens, pr)) ** (ens.r - 1)


def default_start(p_map: float, grid: Grid | None = None) -> Profile:
    return smoothed_step(grid or Grid.default(), p_map, width=1.0)


def continuum_de_solve(ens: Ensemble, p0: Profile, cfg: SolveConfig = SolveConfig(),
                       p_map: float | None = None) -> SolveResult:
    """Damped fixed-point iteration for the continuum DE equation.

    The iterate keeps the tails of ``p0`` (normally 0 and p_map).  With
    ``pin_each_iter`` every sweep is followed by an in-place re-pin, which
    makes the front stay at z = 0.  The reported ``final_residual`` is the
    sup-norm change of the last sweep; ``de_residual`` is the independent
    sup-norm of the DE residual of the returned profile.
    """
    if p_map is None:
        p_map = p0.right_tail
    check_tails(p0, p_map)
    pr = p0
    if cfg.pin_each_iter:
        pr = pin_in_place(pr, p_map)
    trace = [continuum_potential(ens, pr).w_total]
    change = float("inf")
    it = 0
    while it < cfg.max_iters:
        g = continuum_fp_map(ens, pr)
        new = (1.0 - cfg.damping) * pr.values + cfg.damping * g
        nxt = Profile(pr.grid, new, pr.left_tail, pr.right_tail)
        if cfg.pin_each_iter:
            nxt = pin_in_place(nxt, p_map)
        change = float(np.max(np.abs(nxt.values - pr.values)))
        pr = nxt
        it += 1
        trace.append(continuum_potential(ens, pr).w_total)
        if change <= cfg.tol:
            break
    return SolveResult(pr, it, change, change <= cfg.tol, np.array(trace), de_residual(ens, pr).sup_norm)


def flat_spot_check(pr: Profile, tol: float, p_map: float | None = None) -> list[tuple[float, float]]:
    """Maximal intervals longer than 2h on which the profile is numerically flat.

    A cell counts as flat when its difference quotient is below ``tol``; only
    runs whose node values all sit in (tol, p_map - tol) are reported, so the
    approach to the tails is not mistaken for a flat spot.
    """
    if not pr.is_increasing:
        raise ValueError("flat_spot_check needs an increasing profile")
    if p_map is None:
        p_map = pr.right_tail
    v = pr.values
    h = pr.grid.h
    z = pr.grid.z
    inside = (v > tol) & (v < p_map - tol)
    flat = (np.diff(v) / h < tol) & inside[:-1] & inside[1:]
    out = []
    i = 0
    n = flat.size
    while i < n:
        if not flat[i]:
            i += 1
            continue
        j = i
        while j < n and flat[j]:
            j += 1
        a, b = float(z[i]), float(z[j])
        if b - a > 2.0 * h + 1e-12:
            out.append((a, b))
        i = j
    return out


def tightness_constant(ens: Ensemble, p_map: float, delta: float, n: int = 10001) -> float:
    """C = min of W_s(p) / (p_map^2 delta^2 / 4) over [delta p_map/2, p_map - delta p_map/2]."""
    p = np.linspace(0.5 * delta * p_map, p_map - 0.5 * delta * p_map, n)
    return float(np.min(single_potential(ens, p)) / (p_map**2 * delta**2 / 4.0))


def tightness_bound(ens: Ensemble, p_map: float, delta: float) -> float:
    """M_delta = 2 eps (l-1) p_map^(l-2) / (l (l+1) C delta^2)."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    c = tightness_constant(ens, p_map, delta)
    if c <= 0.0:
        raise ValueError(f"quadratic lower-bound constant is not positive ({c!r})")
    l = ens.l
    return 2.0 * ens.epsilon * (l - 1) * p_map ** (l - 2) / (l * (l + 1) * c * delta**2)


def mass_check(pr: Profile, p_map: float, delta: float, m: float) -> bool:
    """p(M) - p(-M) > (1 - delta) p_map."""
    return pr(m) - pr(-m) > (1.0 - delta) * p_map
