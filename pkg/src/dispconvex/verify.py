"""Random profile generators and the property batteries behind ``verify``.

Every battery draws from its own ``numpy.random.Generator`` (PCG64) seeded
with ``[seed, battery_index]``, so a battery's outcome does not depend on
which other batteries ran before it.
"""

from __future__ import annotations

import time
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit

from .desolve import SolveConfig, continuum_de_solve, default_start, flat_spot_check
from .ensemble import Ensemble, ThresholdResult, map_threshold
from .kernel import (
    KernelPoint,
    kernel_closed_l2,
    kernel_closed_l3,
    kernel_convexity_scan,
    kernel_exact,
    kernel_hessian,
    kernel_quadrature,
    random_sector_points,
    analytic_hessian_l3,
)
from .potential import continuum_limit_check, continuum_potential, directional_derivative
from .profile import (
    Grid,
    Profile,
    increasing_rearrangement,
    pin,
    smoothed_step,
    sup_distance,
    translate,
    truncate,
)
from .transport import InterpolationPath, convexity_probe, noise_floor

# ---------------------------------------------------------------------------
# generators


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def random_s_prime(rng: np.random.Generator, grid: Grid, p_map: float) -> Profile:
    """Increasing profile built from 1-3 smoothstep ramps; may contain flats."""
    k = int(rng.integers(1, 4))
    weights = rng.dirichlet(np.ones(k))
    centers = rng.uniform(-4.0, 4.0, k)
    half = rng.uniform(0.5, 2.5, k)
    z = grid.z[:, None]
    vals = p_map * np.sum(weights * _smoothstep((z - centers + half) / (2.0 * half)), axis=1)
    return Profile(grid, np.minimum(vals, p_map), 0.0, p_map)


def _logistic_mixture(rng: np.random.Generator, p_map: float):
    k = int(rng.integers(1, 4))
    weights = rng.dirichlet(np.ones(k))
    # Centers within 1/2 of each other's crossing and widths in [0.55, 0.65]
    # keep the window edges within 1e-6 of the tails while the edge
    # increments stay above the 1e-12 tie threshold.
    centers = rng.uniform(-0.5, 0.5, k)
    widths = rng.uniform(0.55, 0.65, k)

    def f(z):
        z = np.asarray(z, dtype=float)[..., None]
        return p_map * np.sum(weights * expit((z - centers) / widths), axis=-1)

    return f


def random_s_dprime_0(rng: np.random.Generator, grid: Grid, p_map: float) -> Profile:
    """Strictly increasing logistic mixture, translated so that p(0) = p_map/2."""
    f = _logistic_mixture(rng, p_map)
    c = brentq(lambda t: float(f(t)) - 0.5 * p_map, -20.0, 20.0, xtol=1e-15)
    return Profile(grid, f(grid.z + c), 0.0, p_map)


def random_general(rng: np.random.Generator, grid: Grid, p_map: float, allow_excess: bool = False) -> Profile:
    """Non-monotone profile: an increasing base plus 1-4 Gaussian bumps, clipped.

    Values are clipped to [0, p_map], or to [0, 1] when ``allow_excess``.
    """
    base = random_s_prime(rng, grid, p_map).values
    k = int(rng.integers(1, 5))
    amp = rng.uniform(-0.4, 0.4, k) * p_map
    if allow_excess:
        amp = np.abs(amp) + 0.05 * p_map
    centers = rng.uniform(-5.0, 5.0, k)
    widths = rng.uniform(0.2, 1.0, k)
    z = grid.z[:, None]
    vals = base + np.sum(amp * np.exp(-0.5 * ((z - centers) / widths) ** 2), axis=1)
    vals = np.clip(vals, 0.0, 1.0 if allow_excess else p_map)
    return Profile(grid, vals, 0.0, p_map)


def random_valid(rng: np.random.Generator, grid: Grid, p_map: float) -> Profile:
    kind = int(rng.integers(3))
    if kind == 0:
        return random_s_prime(rng, grid, p_map)
    if kind == 1:
        return random_s_dprime_0(rng, grid, p_map)
    return random_general(rng, grid, p_map)


def random_direction(rng: np.random.Generator, grid: Grid, half_width: float = 6.0) -> np.ndarray:
    """Smooth direction that vanishes outside [-half_width, half_width]."""
    z = grid.z
    k = int(rng.integers(1, 4))
    out = np.zeros_like(z)
    for _ in range(k):
        c = rng.uniform(-3.0, 3.0)
        s = rng.uniform(0.3, 1.5)
        out += rng.normal() * np.exp(-0.5 * ((z - c) / s) ** 2)
    window = _smoothstep((z + half_width) / 1.0) * _smoothstep((half_width - z) / 1.0)
    return out * window


# ---------------------------------------------------------------------------
# property records


@dataclass
class PropertyResult:
    name: str
    passed: bool
    trials: int
    worst: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.name}: trials={self.trials} worst={self.worst:.6g} {self.detail}".rstrip()

    def as_dict(self, timing: bool = False) -> dict:
        d = {"name": self.name, "passed": self.passed, "trials": self.trials, "worst": self.worst,
             "detail": self.detail}
        if timing:
            d["seconds"] = self.seconds
        return d


@dataclass
class Context:
    threshold: ThresholdResult
    grid: Grid = field(default_factory=Grid.default)

    @property
    def ens(self) -> Ensemble:
        return self.threshold.ensemble()

    @property
    def p_map(self) -> float:
        return self.threshold.p_map


def _timed(fn):
    def run(ctx, rng, **kw):
        t0 = time.perf_counter()
        res = fn(ctx, rng, **kw)
        res.seconds = time.perf_counter() - t0
        return res

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


# ---------------------------------------------------------------------------
# batteries


@_timed
def check_lower_bound(ctx: Context, rng, trials: int = 200, tol: float = 1e-8) -> PropertyResult:
    """W_int >= -eps p_map^l/(2l) and W >= the same bound."""
    ens, pm = ctx.ens, ctx.p_map
    bound = -ens.epsilon * pm**ens.l / (2 * ens.l)
    worst = np.inf
    for _ in range(trials):
        w = continuum_potential(ens, random_valid(rng, ctx.grid, pm), pm)
        worst = min(worst, w.w_int - bound, w.w_total - bound)
    return PropertyResult("lower_bound", worst >= -tol, trials, float(worst), f"bound={bound:.12g}")


@_timed
def check_truncation(ctx: Context, rng, trials: int = 200, tol: float = 1e-8) -> PropertyResult:
    """W[min(p, p_map)] <= W[p]; strictly when an excess of at least 1e-6 covers more than one cell."""
    ens, pm = ctx.ens, ctx.p_map
    worst = -np.inf
    strict_ok = True
    for _ in range(trials):
        pr = random_general(rng, ctx.grid, pm, allow_excess=True)
        diff = continuum_potential(ens, truncate(pr, pm), pm).w_total - continuum_potential(ens, pr, pm).w_total
        worst = max(worst, diff)
        # Excess at rounding level cannot produce a resolvable decrease.
        if np.count_nonzero(pr.values > pm + 1e-6) > 1 and not diff < 0.0:
            strict_ok = False
    return PropertyResult("truncation", worst <= tol and strict_ok, trials, float(worst),
                          "" if strict_ok else "no strict decrease on a wide excess set")


@_timed
def check_rearrangement(ctx: Context, rng, trials: int = 200, tol: float = 1e-8) -> PropertyResult:
    """W[p*] <= W[p] for the increasing rearrangement p*."""
    ens, pm = ctx.ens, ctx.p_map
    worst = -np.inf
    for _ in range(trials):
        pr = random_general(rng, ctx.grid, pm)
        diff = (continuum_potential(ens, increasing_rearrangement(pr), pm).w_total
                - continuum_potential(ens, pr, pm).w_total)
        worst = max(worst, diff)
    return PropertyResult("rearrangement", worst <= tol, trials, float(worst))


@_timed
def check_translation(ctx: Context, rng, trials: int = 50, tol: float = 2e-6) -> PropertyResult:
    """W is unchanged by grid-aligned shifts of the profile."""
    ens, pm = ctx.ens, ctx.p_map
    worst = 0.0
    for _ in range(trials):
        pr = random_valid(rng, ctx.grid, pm)
        tau = int(rng.integers(-300, 301)) * ctx.grid.h
        a = continuum_potential(ens, pr, pm).w_total
        b = continuum_potential(ens, translate(pr, tau), pm).w_total
        worst = max(worst, abs(a - b))
    return PropertyResult("translation_invariance", worst <= tol, trials, float(worst))


def min_concavity_gap(d, dp, u, t) -> Fraction:
    """lhs - rhs of the min-concavity inequality in exact rational arithmetic."""
    d, dp, u = ([Fraction(float(x)) for x in a] for a in (d, dp, u))
    t = Fraction(float(t))
    lhs = min((1 - t) * a + t * b + c for a, b, c in zip(d, dp, u))
    rhs = (1 - t) * min(a + c for a, c in zip(d, u)) + t * min(b + c for b, c in zip(dp, u))
    return lhs - rhs


@_timed
def check_min_concavity(ctx: Context, rng, trials: int = 500) -> PropertyResult:
    """min_i((1-t)d_i + t d'_i + u_i) >= (1-t) min_i(d_i + u_i) + t min_i(d'_i + u_i), exactly."""
    worst = None
    for _ in range(trials):
        l = int(rng.integers(2, 5))
        d = np.concatenate(([0.0], rng.uniform(0.0, 2.0, l - 1)))
        dp = np.concatenate(([0.0], rng.uniform(0.0, 2.0, l - 1)))
        gap = min_concavity_gap(d, dp, rng.random(l), rng.random())
        worst = gap if worst is None else min(worst, gap)
    return PropertyResult("min_concavity", worst >= 0, trials, float(worst))


@_timed
def check_chords(ctx: Context, rng, trials: int = 20, tol: float = 1e-5) -> PropertyResult:
    """Random increasing pairs: W_single linear and W convex along displacement paths."""
    ens, pm = ctx.ens, ctx.p_map
    worst_lin = 0.0
    worst_d2 = np.inf
    worst_chord = -np.inf
    for _ in range(trials):
        a = random_s_prime(rng, ctx.grid, pm)
        b = random_s_prime(rng, ctx.grid, pm)
        rep = convexity_probe(ens, InterpolationPath(a, b), pm)
        worst_lin = max(worst_lin, rep.single_linearity_defect)
        worst_d2 = min(worst_d2, rep.min_second_difference)
        worst_chord = max(worst_chord, rep.chord_excess())
    ok = worst_lin < tol and worst_d2 >= -tol and worst_chord <= tol
    return PropertyResult("chord", ok, trials, float(worst_d2),
                          f"linearity={worst_lin:.3g} chord_excess={worst_chord:.3g}")


@_timed
def check_strict_convexity(ctx: Context, rng, trials: int = 10) -> PropertyResult:
    """Distinct pinned pairs: min second difference > 3 x identical-endpoint noise floor."""
    ens, pm = ctx.ens, ctx.p_map
    margin = np.inf
    for _ in range(trials):
        a = random_s_dprime_0(rng, ctx.grid, pm)
        b = random_s_dprime_0(rng, ctx.grid, pm)
        floor = max(noise_floor(ens, a, pm), noise_floor(ens, b, pm))
        rep = convexity_probe(ens, InterpolationPath(a, b), pm)
        margin = min(margin, rep.min_second_difference - 3.0 * floor)
    return PropertyResult("strict_convexity", margin > 0.0, trials, float(margin))


def solve_from(ctx: Context, start: Profile, cfg: SolveConfig = SolveConfig()):
    return continuum_de_solve(ctx.ens, start, cfg, ctx.p_map)


@_timed
def check_uniqueness(ctx: Context, rng, starts: int = 5, directions: int = 20, tol: float = 1e-3,
                     stat_tol: float = 1e-6) -> PropertyResult:
    """Solves from several pinned starts agree, have no flat spots and are stationary."""
    pm = ctx.p_map
    inits = [default_start(pm, ctx.grid)] + [random_s_dprime_0(rng, ctx.grid, pm) for _ in range(starts - 1)]
    sols = []
    for p0 in inits:
        res = solve_from(ctx, p0)
        if not res.converged:
            return PropertyResult("uniqueness", False, starts, float("inf"), "solver did not converge")
        sols.append(pin(res.profile_or_vector, pm))
    spread = max(sup_distance(sols[0], s) for s in sols[1:]) if len(sols) > 1 else 0.0
    flats = sum(len(flat_spot_check(s, 1e-9, pm)) for s in sols)
    dd = max(abs(directional_derivative(ctx.ens, sols[0], random_direction(rng, sols[0].grid)))
             for _ in range(directions))
    ok = spread <= tol and flats == 0 and dd < stat_tol
    return PropertyResult("uniqueness", ok, starts, float(spread), f"flat_spots={flats} max_dW={dd:.3g}")


@_timed
def check_flat_spots(ctx: Context, rng) -> PropertyResult:
    """A converged DE solution has no flat interval."""
    res = solve_from(ctx, default_start(ctx.p_map, ctx.grid))
    flats = flat_spot_check(res.profile_or_vector, 1e-9, ctx.p_map)
    return PropertyResult("flat_spots", res.converged and not flats, 1, float(len(flats)))


@_timed
def check_continuum_limit(ctx: Context, rng, w_list=(8, 16, 32, 64), L: int = 640, tol: float = 5e-3) -> PropertyResult:
    pr = smoothed_step(ctx.grid, ctx.p_map, 1.0)
    cont = continuum_potential(ctx.ens, pr, ctx.p_map).w_total
    gaps = [abs(v - cont) for _, v in continuum_limit_check(ctx.ens, pr, w_list, L)]
    ok = all(b < a for a, b in zip(gaps, gaps[1:])) and gaps[-1] < tol
    return PropertyResult("continuum_limit", ok, len(gaps), float(gaps[-1]),
                          "gaps=" + ",".join(f"{g:.3g}" for g in gaps))


@_timed
def check_kernel_closed_forms(ctx: Context, rng, trials: int = 100, tol: float = 1e-6) -> PropertyResult:
    worst = 0.0
    for d in rng.uniform(0.0, 1.5, trials):
        worst = max(worst, abs(kernel_closed_l2(d) - kernel_quadrature(KernelPoint(2, [d]))))
    for d in random_sector_points(3, trials, rng, upper=1.2):
        worst = max(worst, abs(kernel_closed_l3(*d) - kernel_quadrature(KernelPoint(3, d))))
    flat = all(kernel_closed_l2(d) == -0.5 for d in (1.0, 1.5, 3.0))
    return PropertyResult("kernel_closed_forms", worst <= tol and flat, 2 * trials, float(worst))


def _interior_l3(rng, n, margin=0.05):
    pts = []
    while len(pts) < n:
        d = np.sort(rng.uniform(margin, 1.0 - margin, 2))
        if d[1] - d[0] > margin:
            pts.append(d)
    return pts


@_timed
def check_kernel_hessians(ctx: Context, rng, trials: int = 50, tol: float = 1e-4,
                          map_fn=map) -> PropertyResult:
    worst_origin = np.inf
    for l in (2, 3, 4):
        worst_origin = min(worst_origin, kernel_hessian(KernelPoint(l, np.full(l - 1, 1e-3))).min_eigenvalue)
    worst_match = 0.0
    for d in _interior_l3(rng, trials):
        num = kernel_hessian(KernelPoint(3, d)).matrix
        worst_match = max(worst_match, float(np.max(np.abs(num - analytic_hessian_l3(*d)))))
    scan = kernel_convexity_scan(3, 21, upper=1.0, map_fn=map_fn)
    ok = worst_origin > 0.0 and worst_match <= tol and scan.global_min >= -1e-4
    return PropertyResult("kernel_hessians", ok, trials, float(worst_match),
                          f"origin_min_eig={worst_origin:.4g} scan_min={scan.global_min:.3g}")


@_timed
def check_kernel_structure(ctx: Context, rng, trials: int = 30, tol: float = 1e-6) -> PropertyResult:
    """Monotone in each distance, constant past 1, symmetric under relabeling."""
    worst = 0.0
    ok = True
    for _ in range(trials):
        l = int(rng.integers(2, 5))
        d = np.sort(rng.uniform(0.0, 1.5, l - 1))
        i = int(rng.integers(l - 1))
        bumped = d.copy()
        bumped[i] += rng.uniform(0.0, 0.5)
        if kernel_exact(bumped) > kernel_exact(d) + 1e-15:
            ok = False
        worst = max(worst, abs(kernel_exact(d) - kernel_exact(np.minimum(d, 1.0))))
        # Relabel the points; distances are re-derived from the leading point
        # and passed in the permuted (unsorted) order.
        x = rng.permutation(np.concatenate(([0.0], -d)))
        lead = int(np.argmax(x))
        worst = max(worst, abs(kernel_exact(x[lead] - np.delete(x, lead)) - kernel_exact(d)))
    return PropertyResult("kernel_structure", ok and worst <= tol, trials, float(worst))


LEMMA_BATTERIES = (
    check_truncation,
    check_rearrangement,
    check_lower_bound,
    check_translation,
    check_chords,
    check_min_concavity,
    check_flat_spots,
)

ALL_BATTERIES = LEMMA_BATTERIES + (
    check_strict_convexity,
    check_uniqueness,
    check_continuum_limit,
    check_kernel_closed_forms,
    check_kernel_hessians,
    check_kernel_structure,
)


def run_suite(suite: str = "lemmas", seed: int = 42, l: int = 3, r: int = 6, map_fn=map) -> list[PropertyResult]:
    if suite == "lemmas":
        batteries = LEMMA_BATTERIES
    elif suite == "all":
        batteries = ALL_BATTERIES
    else:
        raise ValueError(f"unknown suite {suite!r}")
    ctx = Context(map_threshold(l, r))
    out = []
    for idx, fn in enumerate(batteries):
        rng = np.random.default_rng([seed, idx])
        kw = {"map_fn": map_fn} if fn is check_kernel_hessians else {}
        out.append(fn(ctx, rng, **kw))
    return out
