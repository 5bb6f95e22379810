"""Discretized profiles p(z) on a uniform grid.

A profile stores its values at the grid nodes; between nodes it is read by
linear interpolation and outside the window it equals the declared constant
tails.  Increasing profiles double as (scaled) cdfs whose total mass is the
right tail, which is what the quantile view and displacement interpolation
rely on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import NoCrossing, NotMonotone

TIE_TOL = 1e-12
TAIL_TOL = 1e-6

DEFAULT_HALF_WIDTH = 10.0
DEFAULT_SPACING = 0.01
DEFAULT_LEVELS = 2000


class MonotoneFlag(str, enum.Enum):
    GENERAL = "general"
    INCREASING = "increasing"
    STRICTLY_INCREASING = "strictly_increasing"


class ProfileClass(str, enum.Enum):
    S = "S"
    S_PRIME = "S_prime"
    S_DPRIME = "S_dprime"
    S_DPRIME_0 = "S_dprime_0"
    INVALID = "invalid"


@dataclass(frozen=True)
class Grid:
    z_min: float
    z_max: float
    n: int

    def __post_init__(self):
        if not self.z_min < self.z_max:
            raise ValueError("grid needs z_min < z_max")
        if self.n < 2:
            raise ValueError("grid needs at least two points")

    @classmethod
    def default(cls, half_width: float = DEFAULT_HALF_WIDTH, h: float = DEFAULT_SPACING) -> "Grid":
        n = int(round(2 * half_width / h)) + 1
        return cls(-half_width, half_width, n)

    @cached_property
    def z(self) -> np.ndarray:
        z = np.linspace(self.z_min, self.z_max, self.n)
        z.flags.writeable = False
        return z

    @property
    def h(self) -> float:
        return (self.z_max - self.z_min) / (self.n - 1)

    @property
    def cells_per_unit(self) -> int:
        """Number of grid cells in a unit length; the unit integrals need it to be an integer."""
        k = int(round(1.0 / self.h))
        if k < 1 or abs(k * self.h - 1.0) > 1e-6:
            raise ValueError(f"grid spacing {self.h!r} does not divide 1")
        return k

    def shifted(self, tau: float) -> "Grid":
        return Grid(self.z_min + tau, self.z_max + tau, self.n)

    def covering(self, other: "Grid") -> "Grid":
        """Grid with this spacing whose window contains both windows."""
        h = self.h
        lo = min(self.z_min, other.z_min)
        hi = max(self.z_max, other.z_max)
        n = int(np.ceil((hi - lo) / h - 1e-9)) + 1
        return Grid(lo, lo + (n - 1) * h, n)


def infer_flag(values: np.ndarray) -> MonotoneFlag:
    if values.size < 2:
        return MonotoneFlag.STRICTLY_INCREASING
    d = np.diff(values)
    if np.all(d >= TIE_TOL):
        return MonotoneFlag.STRICTLY_INCREASING
    if np.all(d > -TIE_TOL):
        return MonotoneFlag.INCREASING
    return MonotoneFlag.GENERAL


@dataclass(frozen=True, eq=False)
class Profile:
    grid: Grid
    values: np.ndarray
    left_tail: float = 0.0
    right_tail: float = 0.0
    monotone_flag: MonotoneFlag | None = field(default=None)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("profile values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "left_tail", float(self.left_tail))
        object.__setattr__(self, "right_tail", float(self.right_tail))
        actual = infer_flag(v)
        flag = self.monotone_flag
        if flag is None:
            flag = actual
        flag = MonotoneFlag(flag)
        rank = {MonotoneFlag.GENERAL: 0, MonotoneFlag.INCREASING: 1, MonotoneFlag.STRICTLY_INCREASING: 2}
        if rank[flag] > rank[actual]:
            raise ValueError(f"values are not {flag.value} (they are {actual.value})")
        object.__setattr__(self, "monotone_flag", flag)

    @property
    def z(self) -> np.ndarray:
        return self.grid.z

    @property
    def is_increasing(self) -> bool:
        return self.monotone_flag is not MonotoneFlag.GENERAL

    def __call__(self, z):
        """Evaluate by linear interpolation with constant tails."""
        out = np.interp(z, self.grid.z, self.values, left=self.left_tail, right=self.right_tail)
        return float(out) if np.ndim(out) == 0 else out

    def with_values(self, values, flag=None) -> "Profile":
        return Profile(self.grid, values, self.left_tail, self.right_tail, flag)

    def boundary_mismatch(self) -> float:
        return max(abs(self.values[0] - self.left_tail), abs(self.values[-1] - self.right_tail))


# ---------------------------------------------------------------------------
# constructors


def step_profile(grid: Grid, p_map: float, at: float = 0.0) -> Profile:
    """0 for z <= at, p_map for z > at."""
    values = np.where(grid.z > at, p_map, 0.0)
    return Profile(grid, values, 0.0, p_map)


def logistic_profile(grid: Grid, p_map: float, center: float = 0.0, width: float = 1.0) -> Profile:
    values = p_map * expit((grid.z - center) / width)
    return Profile(grid, values, 0.0, p_map)


def smoothed_step(grid: Grid, p_map: float, width: float = 1.0, center: float = 0.0) -> Profile:
    """p_map/2 (1 + tanh((z - center)/width)); pinned at ``center``."""
    values = 0.5 * p_map * (1.0 + np.tanh((grid.z - center) / width))
    return Profile(grid, values, 0.0, p_map)


def constant_profile(grid: Grid, value: float) -> Profile:
    return Profile(grid, np.full(grid.n, value), value, value)


# ---------------------------------------------------------------------------
# operations


def translate(pr: Profile, tau: float) -> Profile:
    """p(. - tau): the same values on a grid shifted by ``tau``."""
    return Profile(pr.grid.shifted(tau), pr.values, pr.left_tail, pr.right_tail, pr.monotone_flag)


def resample(pr: Profile, grid: Grid) -> Profile:
    return Profile(grid, pr(grid.z), pr.left_tail, pr.right_tail)


def sup_distance(a: Profile, b: Profile) -> float:
    """Sup-norm distance of two profiles, compared on the union of their nodes."""
    z = np.union1d(a.grid.z, b.grid.z)
    return float(np.max(np.abs(a(z) - b(z))))


def classify(pr: Profile, p_map: float, tol: float = 1e-9) -> ProfileClass:
    """Finest profile space the discretized profile belongs to.

    Tails must be 0 and ``p_map`` and the window boundary values must be
    within ``TAIL_TOL`` of them.  Decay rates such as z p(z) -> 0 cannot be
    checked on a finite window and are not.
    """
    v = pr.values
    if np.any(v < 0.0):
        return ProfileClass.INVALID
    if abs(pr.left_tail) > tol or abs(pr.right_tail - p_map) > tol:
        return ProfileClass.INVALID
    if pr.boundary_mismatch() > TAIL_TOL:
        return ProfileClass.INVALID
    flag = infer_flag(v)
    if flag is MonotoneFlag.GENERAL:
        return ProfileClass.S
    if flag is MonotoneFlag.INCREASING:
        return ProfileClass.S_PRIME
    if pr.grid.z_min <= 0.0 <= pr.grid.z_max and abs(pr(0.0) - 0.5 * p_map) <= tol:
        return ProfileClass.S_DPRIME_0
    return ProfileClass.S_DPRIME


def truncate(pr: Profile, p_map: float) -> Profile:
    """Pointwise min with p_map."""
    return Profile(
        pr.grid,
        np.minimum(pr.values, p_map),
        min(pr.left_tail, p_map),
        min(pr.right_tail, p_map),
    )


def increasing_rearrangement(pr: Profile) -> Profile:
    """Increasing rearrangement: sort the grid values.

    On a uniform grid with tails 0 (left) and p_map (right) this is the
    discrete layer-cake rearrangement: every level set keeps its measure and
    is pushed to a half-line.
    """
    return Profile(pr.grid, np.sort(pr.values), pr.left_tail, pr.right_tail)


def crossing(pr: Profile, level: float) -> float:
    """Left-most z where the linearly interpolated increasing profile reaches ``level``."""
    if not pr.is_increasing:
        raise NotMonotone("crossing needs an increasing profile")
    v = np.maximum.accumulate(pr.values)
    j = int(np.searchsorted(v, level, side="left"))
    if j >= v.size:
        raise NoCrossing(f"profile never reaches {level!r} inside its window")
    z = pr.grid.z
    if j == 0:
        if pr.left_tail >= level:
            raise NoCrossing(f"profile is already at {level!r} in its left tail")
        return float(z[0])
    frac = (level - v[j - 1]) / (v[j] - v[j - 1])
    return float(z[j - 1] + frac * pr.grid.h)


def pin(pr: Profile, p_map: float) -> Profile:
    """Translate so that the interpolated crossing of p_map/2 sits at z = 0."""
    c = crossing(pr, 0.5 * p_map)
    return translate(pr, -c)


def pin_in_place(pr: Profile, p_map: float) -> Profile:
    """Pin by resampling onto the profile's own grid (the window stays put)."""
    c = crossing(pr, 0.5 * p_map)
    if c == 0.0:
        return pr
    return Profile(pr.grid, pr(pr.grid.z + c), pr.left_tail, pr.right_tail)


# ---------------------------------------------------------------------------
# quantile view


@dataclass(frozen=True, eq=False)
class QuantileView:
    p_levels: np.ndarray
    z_of_p: np.ndarray
    p_map: float

    @property
    def m(self) -> int:
        return self.p_levels.size


def quantile_levels(p_map: float, m: int) -> np.ndarray:
    return (np.arange(m) + 0.5) * (p_map / m)


def quantile_view(pr: Profile, m: int = DEFAULT_LEVELS) -> QuantileView:
    """z(p) = inf{z : p(z) > p} sampled at the midpoint levels (k + 1/2) p_map / m.

    The nodal values are read left-continuously, p(z) = v[j+1] on
    (z[j], z[j+1]], so a level first exceeded at node j maps to z[j-1] and a
    jump between two nodes maps every level it spans to the lower node.
    """
    if not pr.is_increasing:
        raise NotMonotone("quantile view needs an increasing profile")
    p_map = pr.right_tail
    levels = quantile_levels(p_map, m)
    v = np.maximum.accumulate(pr.values)
    z = pr.grid.z
    j = np.searchsorted(v, levels, side="right")
    zq = z[np.clip(j - 1, 0, v.size - 1)]
    return QuantileView(levels, zq, p_map)


def profile_from_quantiles(qv: QuantileView, grid: Grid, p_map: float | None = None) -> Profile:
    """p(z) = inf{p : z(p) > z}, with z(p) linear between the sampled levels.

    The quantile function is extended linearly by half a level spacing to the
    end levels 0 and p_map.
    """
    if p_map is None:
        p_map = qv.p_map
    zq = np.maximum.accumulate(np.asarray(qv.z_of_p, dtype=float))
    if zq.size >= 2:
        z_lo = zq[0] - 0.5 * (zq[1] - zq[0])
        z_hi = zq[-1] + 0.5 * (zq[-1] - zq[-2])
    else:
        z_lo = z_hi = zq[0]
    z_ext = np.concatenate(([z_lo], zq, [z_hi]))
    p_ext = np.concatenate(([0.0], qv.p_levels, [p_map]))
    z = grid.z
    j = np.searchsorted(z_ext, z, side="right")
    inner = np.clip(j, 1, z_ext.size - 1)
    dz = z_ext[inner] - z_ext[inner - 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(dz > 0.0, (z - z_ext[inner - 1]) / dz, 1.0)
    p = p_ext[inner - 1] + frac * (p_ext[inner] - p_ext[inner - 1])
    p = np.where(j == 0, 0.0, p)
    p = np.where(j >= z_ext.size, p_map, p)
    return Profile(grid, np.maximum.accumulate(p), 0.0, p_map)


# ---------------------------------------------------------------------------
# file format


def write_profile_csv(pr: Profile, path) -> None:
    """CSV ``z,p`` with tails in ``#`` header lines; 17 significant digits."""
    lines = [
        f"# left_tail={pr.left_tail:.17g}",
        f"# right_tail={pr.right_tail:.17g}",
        f"# monotone={pr.monotone_flag.value}",
        "z,p",
    ]
    lines += [f"{z:.17g},{p:.17g}" for z, p in zip(pr.grid.z, pr.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_profile_csv(path) -> Profile:
    meta = {}
    zs, ps = [], []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key.strip()] = val.strip()
            continue
        if line.replace(" ", "") == "z,p":
            continue
        a, b = line.split(",")
        zs.append(float(a))
        ps.append(float(b))
    if len(zs) < 2:
        raise ValueError(f"{path}: a profile needs at least two rows")
    zs = np.array(zs)
    grid = Grid(zs[0], zs[-1], zs.size)
    if not np.allclose(grid.z, zs, rtol=0.0, atol=1e-9 * max(1.0, grid.h)):
        raise ValueError(f"{path}: z column is not a uniform grid")
    left = float(meta.get("left_tail", ps[0]))
    right = float(meta.get("right_tail", ps[-1]))
    flag = meta.get("monotone")
    return Profile(grid, np.array(ps), left, right, MonotoneFlag(flag) if flag else None)
