"""Displacement interpolation of increasing profiles and convexity probes.

An increasing profile with tails 0 and p_map is a scaled cdf, and its
quantile function z(p) = inf{z : p(z) > p} is the inverse.  The displacement
interpolant between p0 and p1 is the profile whose quantile function is
(1 - lam) z0(p) + lam z1(p).

Two constructions are used.

* Both endpoints strictly increasing: each quantile function is the monotone
  cubic (PCHIP) interpolant through the node pairs (p_i, z_i), and p_lam at an
  output node x solves (1 - lam) Z0(p) + lam Z1(p) = x by bisection.  The
  interpolant is smooth in lam, so W(lam) carries no grid-alignment jitter,
  and it returns the endpoint values exactly at lam = 0 and 1.
* Otherwise (flat pieces): quantiles are taken at the ``m`` midpoint levels
  together with every node value of both endpoints.  Between consecutive
  levels both quantile functions are linear in p, so the interpolant of two
  piecewise-linear profiles is exact before sampling.  Flats are kept by
  tracking both one-sided quantiles inf{p(z) >= c} and inf{p(z) > c}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .ensemble import Ensemble
from .errors import DivergenceError, NotMonotone
from .potential import check_tails, continuum_potential, de_residual, PotentialBreakdown
from .profile import (
    DEFAULT_LEVELS,
    Grid,
    MonotoneFlag,
    Profile,
    ProfileClass,
    classify,
    increasing_rearrangement,
    pin,
    quantile_levels,
)

DEFAULT_LAMBDAS = np.linspace(0.0, 1.0, 21)
P_MAP_TOL = 1e-12
GRID_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class InterpolationPath:
    p0: Profile
    p1: Profile
    m: int = DEFAULT_LEVELS
    lambdas: np.ndarray = field(default_factory=lambda: DEFAULT_LAMBDAS.copy())

    def __post_init__(self):
        for name, pr in (("p0", self.p0), ("p1", self.p1)):
            if not pr.is_increasing:
                raise NotMonotone(f"{name} is not increasing")
        if abs(self.p0.right_tail - self.p1.right_tail) > P_MAP_TOL:
            raise ValueError("endpoints have different right tails (p_map)")
        if abs(self.p0.left_tail) > P_MAP_TOL or abs(self.p1.left_tail) > P_MAP_TOL:
            raise ValueError("endpoints must have left tail 0")
        if abs(self.p0.grid.h - self.p1.grid.h) > GRID_TOL:
            raise ValueError("endpoints must share the grid spacing")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        lam = np.asarray(self.lambdas, dtype=float)
        if np.any(lam < 0.0) or np.any(lam > 1.0):
            raise ValueError("lambdas must lie in [0, 1]")
        object.__setattr__(self, "lambdas", lam)

    @property
    def p_map(self) -> float:
        return self.p0.right_tail

    @property
    def pinned(self) -> bool:
        return all(classify(p, self.p_map) is ProfileClass.S_DPRIME_0 for p in (self.p0, self.p1))


def _monotone_values(pr: Profile) -> np.ndarray:
    return np.maximum.accumulate(pr.values)


def _quantiles(pr: Profile, levels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(inf{z : p(z) >= c}, inf{z : p(z) > c}) for levels 0 < c < p_map."""
    v = _monotone_values(pr)
    z = pr.grid.z
    h = pr.grid.h
    n = v.size

    def side(which):
        j = np.searchsorted(v, levels, side=which)
        inner = np.clip(j, 1, n - 1)
        lo, hi = v[inner - 1], v[inner]
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(hi > lo, (levels - lo) / (hi - lo), 0.0)
        out = z[inner - 1] + frac * h
        out = np.where(hi == levels, z[inner], out)
        out = np.where(lo == levels, z[inner - 1], out) if which == "right" else out
        out = np.where(j == 0, z[0], out)
        # Levels above the last node value are reached only past the window.
        return np.where(j >= n, z[-1] + h, out)

    zl = side("left")
    zr = side("right")
    return zl, np.maximum(zl, zr)


def _levels(path: InterpolationPath) -> np.ndarray:
    pm = path.p_map
    extra = np.concatenate((path.p0.values, path.p1.values))
    extra = extra[(extra > 0.0) & (extra < pm)]
    return np.unique(np.concatenate((quantile_levels(pm, path.m), extra)))


def interpolated_quantiles(path: InterpolationPath, lam: float, levels=None) -> np.ndarray:
    """z_lam(p) = (1 - lam) z0(p) + lam z1(p) at the given (default: midpoint) levels."""
    if levels is None:
        levels = quantile_levels(path.p_map, path.m)
    z0 = quantile_view_at(path.p0, levels)
    z1 = quantile_view_at(path.p1, levels)
    return (1.0 - lam) * z0 + lam * z1


def quantile_view_at(pr: Profile, levels) -> np.ndarray:
    return _quantiles(pr, np.asarray(levels, dtype=float))[1]


def _output_grid(path: InterpolationPath, lam: float) -> Grid:
    g0, g1 = path.p0.grid, path.p1.grid
    lo = (1.0 - lam) * g0.z_min + lam * g1.z_min
    if g0.n == g1.n:
        hi = (1.0 - lam) * g0.z_max + lam * g1.z_max
        return Grid(lo, hi, g0.n)
    n = max(g0.n, g1.n)
    return Grid(lo, lo + (n - 1) * g0.h, n)


def _sample_cdf(zs: np.ndarray, cs: np.ndarray, z: np.ndarray, p_map: float) -> np.ndarray:
    """Right-continuous piecewise-linear cdf through the points (zs, cs), 0 before and p_map after."""
    j = np.searchsorted(zs, z, side="right")
    inner = np.clip(j, 1, zs.size - 1)
    z0, z1 = zs[inner - 1], zs[inner]
    c0, c1 = cs[inner - 1], cs[inner]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(z1 > z0, (z - z0) / (z1 - z0), 0.0)
    out = c0 + frac * (c1 - c0)
    out = np.where(j == 0, 0.0, out)
    return np.where(j >= zs.size, p_map, out)


BISECT_STEPS = 60


def _is_strict(pr: Profile, p_map: float) -> bool:
    v = pr.values
    return pr.monotone_flag is MonotoneFlag.STRICTLY_INCREASING and v[0] >= 0.0 and v[-1] <= p_map


def _smooth_quantile(pr: Profile, p_map: float) -> PchipInterpolator:
    v, z, h = pr.values, pr.grid.z, pr.grid.h
    ps, zs = [v], [z]
    if v[0] > 0.0:
        ps.insert(0, [0.0])
        zs.insert(0, [z[0] - h])
    if v[-1] < p_map:
        ps.append([p_map])
        zs.append([z[-1] + h])
    return PchipInterpolator(np.concatenate(ps), np.concatenate(zs), extrapolate=False)


def _interpolate_smooth(path: InterpolationPath, lam: float, grid: Grid) -> np.ndarray:
    pm = path.p_map
    q0 = _smooth_quantile(path.p0, pm)
    q1 = _smooth_quantile(path.p1, pm)

    def zl(c):
        return (1.0 - lam) * q0(c) + lam * q1(c)

    x = grid.z
    lo = np.zeros_like(x)
    hi = np.full_like(x, pm)
    below = x < zl(0.0)
    above = x >= zl(pm)
    # Invariant: zl(lo) <= x < zl(hi) on the bracketed nodes.
    for _ in range(BISECT_STEPS):
        mid = 0.5 * (lo + hi)
        right = zl(mid) <= x
        lo = np.where(right, mid, lo)
        hi = np.where(right, hi, mid)
    out = np.where(below, 0.0, np.where(above, pm, lo))
    return np.maximum.accumulate(out)


def displacement_interpolate(path: InterpolationPath, lam: float) -> Profile:
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    pm = path.p_map
    grid = _output_grid(path, lam)
    if _is_strict(path.p0, pm) and _is_strict(path.p1, pm):
        out = Profile(grid, _interpolate_smooth(path, lam, grid), 0.0, pm)
        return pin(out, pm) if path.pinned else out
    levels = _levels(path)
    l0, r0 = _quantiles(path.p0, levels)
    l1, r1 = _quantiles(path.p1, levels)
    zl = (1.0 - lam) * l0 + lam * l1
    zr = (1.0 - lam) * r0 + lam * r1
    zs = np.maximum.accumulate(np.column_stack((zl, zr)).ravel())
    cs = np.repeat(levels, 2)
    values = np.maximum.accumulate(_sample_cdf(zs, cs, grid.z, pm))
    out = Profile(grid, values, 0.0, pm)
    if path.pinned:
        out = pin(out, pm)
    return out


# ---------------------------------------------------------------------------
# convexity probes


@dataclass(frozen=True, eq=False)
class ConvexityReport:
    lambdas: np.ndarray
    w_single: np.ndarray
    w_int: np.ndarray
    w_total: np.ndarray
    second_differences: np.ndarray
    min_second_difference: float
    single_linearity_defect: float

    @property
    def values(self) -> np.ndarray:
        return np.column_stack((self.lambdas, self.w_total))

    def chord_excess(self) -> float:
        """max over lambda of W(lam) - [(1-lam) W(0) + lam W(1)]."""
        lam = self.lambdas
        chord = (1.0 - lam) * self.w_total[0] + lam * self.w_total[-1]
        return float(np.max(self.w_total - chord))

    def summary(self) -> dict:
        return {
            "min_second_difference": self.min_second_difference,
            "single_linearity_defect": self.single_linearity_defect,
            "chord_excess": self.chord_excess(),
        }

    def to_csv(self, path) -> None:
        rows = ["lambda,w_single,w_int,w_total"]
        for row in zip(self.lambdas, self.w_single, self.w_int, self.w_total):
            rows.append(",".join(f"{x:.17g}" for x in row))
        with open(path, "w") as fh:
            fh.write("\n".join(rows) + "\n")


def _chord_defect(lam, w) -> float:
    chord = (1.0 - lam) * w[0] + lam * w[-1]
    return float(np.max(np.abs(w - chord)))


def convexity_probe(ens: Ensemble, path: InterpolationPath, p_map: float | None = None,
                    map_fn=map) -> ConvexityReport:
    """W along the path at ``path.lambdas`` (assumed uniform for the second differences)."""
    if p_map is None:
        p_map = path.p_map
    lam = path.lambdas

    def evaluate(t):
        return continuum_potential(ens, displacement_interpolate(path, t), p_map)

    parts = list(map_fn(evaluate, lam))
    ws = np.array([b.w_single for b in parts])
    wi = np.array([b.w_int for b in parts])
    wt = np.array([b.w_total for b in parts])
    d2 = wt[:-2] - 2.0 * wt[1:-1] + wt[2:]
    return ConvexityReport(
        lam, ws, wi, wt, d2,
        float(d2.min()) if d2.size else float("nan"),
        _chord_defect(lam, ws),
    )


def noise_floor(ens: Ensemble, pr: Profile, p_map: float | None = None, lambdas=None, m: int = DEFAULT_LEVELS) -> float:
    """Largest |second difference| of W along the constant path from ``pr`` to itself."""
    lam = DEFAULT_LAMBDAS if lambdas is None else lambdas
    rep = convexity_probe(ens, InterpolationPath(pr, pr, m, lam), p_map)
    return float(np.max(np.abs(rep.second_differences)))


# ---------------------------------------------------------------------------
# descent


DIVERGENCE_TOL = 1e-6


def displacement_descent(ens: Ensemble, start: Profile, steps: int, step_size: float,
                         p_map: float | None = None) -> tuple[Profile, PotentialBreakdown, np.ndarray]:
    """Residual descent kept inside the pinned increasing class.

    Each step moves the node values against the DE residual, clamps them to
    [0, p_map], sorts them if the move broke monotonicity and pins the result
    by a grid shift.  Returns the final profile, its potential and the trace
    of W.

    Raises
    ------
    DivergenceError
        If W increases by more than 1e-6 on two consecutive steps.
    """
    if p_map is None:
        p_map = start.right_tail
    check_tails(start, p_map)
    pr = pin(start, p_map)
    w = continuum_potential(ens, pr, p_map)
    trace = [w.w_total]
    rises = 0
    for _ in range(steps):
        r = de_residual(ens, pr).values
        vals = np.clip(pr.values - step_size * r, 0.0, p_map)
        nxt = Profile(pr.grid, vals, pr.left_tail, pr.right_tail)
        if not nxt.is_increasing:
            nxt = increasing_rearrangement(nxt)
        nxt = pin(nxt, p_map)
        w_new = continuum_potential(ens, nxt, p_map)
        rises = rises + 1 if w_new.w_total > trace[-1] + DIVERGENCE_TOL else 0
        if rises >= 2:
            raise DivergenceError("potential increased on two consecutive descent steps")
        pr, w = nxt, w_new
        trace.append(w.w_total)
    return pr, w, np.array(trace)
