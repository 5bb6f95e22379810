"""The l-point interaction kernel V(d_12, ..., d_1l).

For uniform noise u on [0,1]^l the kernel is the average

    V(d) = int V_u(d) du,    V_u(d) = -min_i (d_1i + u_i),   d_11 = 0.

Two independent evaluators are provided.  :func:`kernel_quadrature` is a
tensor midpoint rule (with the u_1 axis done in closed form) and serves as
the brute-force oracle.  :func:`kernel_exact` writes E[min] as an integral of
the survival function, a piecewise polynomial in t, and integrates it with
Gauss-Legendre on each piece, so it is exact to rounding.  Finite-difference
Hessians use the exact evaluator because rounding-level noise is needed for
second differences at step 1e-3.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import prod

import numpy as np

from .errors import SectorViolation

QUAD_TOL = 1e-7
QUAD_START = 64
QUAD_MAX_POINTS = 2**26
QUAD_CHUNK = 2**21
MC_SAMPLES = 10**7
MAX_TENSOR_L = 6
FD_STEP = 1e-3


@dataclass(frozen=True, eq=False)
class KernelPoint:
    l: int
    d: np.ndarray

    def __post_init__(self):
        d = np.atleast_1d(np.asarray(self.d, dtype=float))
        if self.l < 2:
            raise ValueError("l must be >= 2")
        if d.shape != (self.l - 1,):
            raise ValueError(f"l={self.l} needs {self.l - 1} distances, got {d.size}")
        if np.any(d < 0.0):
            raise SectorViolation("distances must be non-negative")
        if np.any(np.diff(d) < 0.0):
            raise SectorViolation(f"distances must be sorted ascending, got {d.tolist()}")
        d.flags.writeable = False
        object.__setattr__(self, "d", d)

    @classmethod
    def origin(cls, l: int) -> "KernelPoint":
        return cls(l, np.zeros(l - 1))


@dataclass(frozen=True, eq=False)
class HessianReport:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    min_eigenvalue: float

    @classmethod
    def from_matrix(cls, h: np.ndarray) -> "HessianReport":
        h = np.asarray(h, dtype=float)
        eig = np.sort(np.linalg.eigvalsh(0.5 * (h + h.T)))
        return cls(h, eig, float(eig[0]))


def kernel_vu(point: KernelPoint, u) -> float:
    u = np.asarray(u, dtype=float)
    if u.shape != (point.l,):
        raise ValueError(f"u must have {point.l} entries")
    if np.any(u < 0.0) or np.any(u > 1.0):
        raise ValueError("u must lie in [0, 1]^l")
    return -float(np.min(np.concatenate(([0.0], point.d)) + u))


# ---------------------------------------------------------------------------
# brute-force oracle


def _mean_min_with_uniform(m: np.ndarray) -> np.ndarray:
    """int_0^1 min(u, m) du, elementwise."""
    inner = m - 0.5 * m * m
    return np.where(m <= 0.0, m, np.where(m >= 1.0, 0.5, inner))


def _midpoint_value(d: np.ndarray, n: int) -> float:
    """Midpoint rule with n points per axis on u_2..u_l; u_1 integrated exactly."""
    dim = d.size
    nodes = (np.arange(n) + 0.5) / n
    total = n**dim
    acc = 0.0
    rows = max(1, QUAD_CHUNK // n)
    # Walk the lattice as (outer index, last axis) blocks to cap memory.
    outer = n ** (dim - 1)
    for start in range(0, outer, rows):
        idx = np.arange(start, min(start + rows, outer))
        m = np.full((idx.size, n), np.inf)
        rem = idx.copy()
        for axis in range(dim - 1):
            coord = nodes[rem % n]
            rem //= n
            m = np.minimum(m, (d[axis] + coord)[:, None])
        m = np.minimum(m, d[-1] + nodes[None, :])
        acc += float(np.sum(_mean_min_with_uniform(m)))
    return -acc / total


def _monte_carlo(d: np.ndarray, samples: int, seed: int) -> tuple[float, float]:
    rng = np.random.default_rng(seed)
    acc = acc2 = 0.0
    done = 0
    while done < samples:
        k = min(QUAD_CHUNK, samples - done)
        u = rng.random((k, d.size))
        v = -_mean_min_with_uniform(np.min(d + u, axis=1))
        acc += float(v.sum())
        acc2 += float((v * v).sum())
        done += k
    mean = acc / samples
    var = max(acc2 / samples - mean * mean, 0.0)
    return mean, float(np.sqrt(var / samples))


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    n_sub: int
    change: float
    converged: bool
    std_error: float = 0.0


def kernel_quadrature_detail(point: KernelPoint, n_sub: int | None = None, tol: float = QUAD_TOL,
                             seed: int = 0) -> QuadratureResult:
    """Quadrature oracle with its convergence record.

    With ``n_sub`` given a single midpoint evaluation is returned.  Otherwise
    n_sub doubles from 64 until two successive values differ by less than
    ``tol`` or the lattice would exceed ``QUAD_MAX_POINTS`` points.  For
    l > 6 the integral is estimated by Monte Carlo with 1e7 samples.
    """
    d = point.d
    if point.l > MAX_TENSOR_L:
        value, se = _monte_carlo(d, MC_SAMPLES, seed)
        return QuadratureResult(value, 0, float("nan"), False, se)
    if n_sub is not None:
        if n_sub < 2:
            raise ValueError("n_sub must be >= 2")
        return QuadratureResult(_midpoint_value(d, n_sub), n_sub, float("nan"), False)
    n = QUAD_START
    prev = _midpoint_value(d, n)
    change = float("nan")
    while True:
        if (2 * n) ** d.size > QUAD_MAX_POINTS:
            return QuadratureResult(prev, n, change, False)
        n *= 2
        cur = _midpoint_value(d, n)
        change = abs(cur - prev)
        if change < tol:
            return QuadratureResult(cur, n, change, True)
        prev = cur


def kernel_quadrature(point: KernelPoint, n_sub: int | None = None) -> float:
    return kernel_quadrature_detail(point, n_sub).value


# ---------------------------------------------------------------------------
# exact evaluation


def _gauss_legendre(deg: int):
    x, w = np.polynomial.legendre.leggauss(deg // 2 + 1)
    return x, w


def kernel_exact(d) -> float:
    """V(d) for any real distances d_12..d_1l (no sector restriction).

    E[min_i(d_i + u_i)] = lo + int_lo^{lo+1} prod_i clamp(1 + d_i - t, 0, 1) dt
    with lo = min_i d_i (d_1 = 0 included).
    """
    dd = np.concatenate(([0.0], np.asarray(d, dtype=float).ravel()))
    lo = float(dd.min())
    hi = lo + 1.0
    cuts = np.concatenate((dd, dd + 1.0))
    cuts = np.unique(np.clip(cuts, lo, hi))
    cuts = np.unique(np.concatenate(([lo, hi], cuts)))
    x, w = _gauss_legendre(dd.size)
    a, b = cuts[:-1], cuts[1:]
    t = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * x[None, :]
    surv = np.prod(np.clip(1.0 + dd[None, None, :] - t[:, :, None], 0.0, 1.0), axis=2)
    integral = float(np.sum(0.5 * (b - a) * (surv @ w)))
    return -(lo + integral)


# ---------------------------------------------------------------------------
# closed forms


def kernel_closed_l2(d12: float) -> float:
    if d12 < 0.0:
        raise SectorViolation("d12 must be non-negative")
    if d12 >= 1.0:
        return -0.5
    return -0.5 + (1.0 - d12) ** 3 / 6.0


def kernel_closed_l3(d12: float, d13: float) -> float:
    if d12 < 0.0 or d12 > d13:
        raise SectorViolation(f"need 0 <= d12 <= d13, got ({d12}, {d13})")
    if d13 >= 1.0:
        return kernel_closed_l2(d12)
    return (
        -0.5
        + (1.0 - d12) ** 3 / 6.0
        + (1.0 - d13) ** 4 / 12.0
        + d12 * (1.0 - d13) ** 3 / 6.0
    )


def kernel_general(point: KernelPoint) -> float:
    """Literal double-sum expression for general l, plus the constant -1/2.

    Terms use (1 - d_1m) clamped at 0, and the subset sum over S in
    {2..m-1} of prod d_1n, which equals prod (1 + d_1n).  The constant makes
    the value -1/2 once every distance is >= 1.  This reproduces the oracle
    for l = 2 only; see :func:`kernel_general_discrepancy`.
    """
    l = point.l
    d = np.concatenate(([0.0, 0.0], point.d))  # d[i] is d_1i for i >= 2
    total = -0.5
    for k in range(2, l + 1):
        for m in range(k, l + 1):
            e = m - k + 3
            base = max(1.0 - d[m], 0.0)
            subset_sum = prod(1.0 + d[n] for n in range(2, m))
            total += base**e / (e * (e - 1)) * subset_sum
    return total


@dataclass(frozen=True, eq=False)
class DiscrepancyReport:
    l: int
    points: np.ndarray
    general: np.ndarray
    oracle: np.ndarray

    @property
    def deltas(self) -> np.ndarray:
        return self.general - self.oracle

    @property
    def max_abs_delta(self) -> float:
        return float(np.max(np.abs(self.deltas))) if self.deltas.size else 0.0

    def agrees(self, tol: float = 1e-6) -> bool:
        return self.max_abs_delta <= tol


def kernel_general_discrepancy(l: int, points) -> DiscrepancyReport:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    gen = np.array([kernel_general(KernelPoint(l, p)) for p in pts])
    ora = np.array([kernel_exact(p) for p in pts])
    return DiscrepancyReport(l, pts, gen, ora)


def random_sector_points(l: int, n: int, rng: np.random.Generator, upper: float = 1.0) -> np.ndarray:
    return np.sort(rng.uniform(0.0, upper, size=(n, l - 1)), axis=1)


# ---------------------------------------------------------------------------
# Hessians


def analytic_hessian_l3(d12: float, d13: float) -> np.ndarray:
    if not 0.0 <= d12 <= d13 < 1.0:
        raise ValueError("analytic l=3 Hessian needs 0 <= d12 <= d13 < 1")
    off = -0.5 * (d13 - 1.0) ** 2
    return np.array([[1.0 - d12, off], [off, -(d13 - 1.0) * (1.0 + d12 - d13)]])


def analytic_eigenvalues_l3(d12: float, d13: float) -> np.ndarray:
    """Closed-form eigenvalues of :func:`analytic_hessian_l3`, ascending."""
    h = analytic_hessian_l3(d12, d13)
    tr = h[0, 0] + h[1, 1]
    disc = (h[0, 0] - h[1, 1]) ** 2 + 4.0 * h[0, 1] ** 2
    root = np.sqrt(disc)
    return np.array([0.5 * (tr - root), 0.5 * (tr + root)])


def numeric_hessian(f, d, step: float = FD_STEP) -> np.ndarray:
    """Central second differences of ``f`` at ``d``."""
    d = np.asarray(d, dtype=float)
    n = d.size
    eye = np.eye(n) * step
    f0 = f(d)
    h = np.empty((n, n))
    for i in range(n):
        h[i, i] = (f(d + eye[i]) - 2.0 * f0 + f(d - eye[i])) / step**2
        for j in range(i + 1, n):
            v = (
                f(d + eye[i] + eye[j])
                - f(d + eye[i] - eye[j])
                - f(d - eye[i] + eye[j])
                + f(d - eye[i] - eye[j])
            ) / (4.0 * step**2)
            h[i, j] = h[j, i] = v
    return h


def kernel_hessian(point: KernelPoint, mode: str = "numeric", step: float = FD_STEP) -> HessianReport:
    if mode == "analytic_l3":
        if point.l != 3:
            raise ValueError("analytic_l3 mode needs l = 3")
        return HessianReport.from_matrix(analytic_hessian_l3(*point.d))
    if mode == "numeric":
        return HessianReport.from_matrix(numeric_hessian(kernel_exact, point.d, step))
    raise ValueError(f"unknown Hessian mode {mode!r}")


def origin_hessian(l: int) -> np.ndarray:
    """H_ii = 1, H_ij = -1/(l-1): the Hessian at d = 0."""
    n = l - 1
    return (1.0 + 1.0 / n) * np.eye(n) - np.ones((n, n)) / n


# ---------------------------------------------------------------------------
# sector scan


@dataclass(frozen=True, eq=False)
class ScanReport:
    l: int
    points: np.ndarray
    min_eigenvalues: np.ndarray
    floor: float

    @property
    def global_min(self) -> float:
        return float(self.min_eigenvalues.min())

    @property
    def argmin(self) -> np.ndarray:
        return self.points[int(np.argmin(self.min_eigenvalues))]

    @property
    def strictly_positive(self) -> np.ndarray:
        """Mask of lattice points whose min eigenvalue exceeds the floor."""
        return self.min_eigenvalues > self.floor

    def min_within(self, upper: float) -> float:
        mask = np.all(self.points <= upper + 1e-12, axis=1)
        return float(self.min_eigenvalues[mask].min())

    def to_csv(self, path) -> None:
        header = ",".join(f"d1{i}" for i in range(2, self.l + 1)) + ",min_eig"
        rows = [header]
        for p, e in zip(self.points, self.min_eigenvalues):
            rows.append(",".join(f"{x:.17g}" for x in (*p, e)))
        with open(path, "w") as fh:
            fh.write("\n".join(rows) + "\n")


def sector_lattice(l: int, n_grid: int, upper: float) -> np.ndarray:
    axis = np.linspace(0.0, upper, n_grid)
    pts = [axis[list(c)] for c in itertools.combinations_with_replacement(range(n_grid), l - 1)]
    return np.array(pts)


def kernel_convexity_scan(l: int, n_grid: int, upper: float = 1.5, floor: float = 1e-6,
                          step: float = FD_STEP, map_fn=map) -> ScanReport:
    """Min Hessian eigenvalue on the sorted lattice {0 <= d_12 <= ... <= d_1l <= upper}.

    ``map_fn`` lets a caller supply an ordered parallel map.
    """
    if l not in (2, 3, 4):
        raise ValueError("the scan supports l in {2, 3, 4}")
    if n_grid < 5:
        raise ValueError("n_grid must be >= 5")
    pts = sector_lattice(l, n_grid, upper)
    eigs = np.array(list(map_fn(lambda p: kernel_hessian(KernelPoint(l, p), "numeric", step).min_eigenvalue, pts)))
    return ScanReport(l, pts, eigs, floor)
