"""Uncoupled (l, r)-regular ensemble on the BEC: single-system potential and MAP threshold.

The single-system potential as a function of the check-node erasure
probability ``p`` is

    W_s(p) = (1 - 1/r) (1 - p)^(r/(r-1)) - (1 - p) + 1/r - (eps/l) p^l

and its stationary points are the fixed points of uncoupled density
evolution.  At the MAP threshold the potential has two minima of equal
height zero, at ``p = 0`` and ``p = p_map``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .errors import NoNontrivialRoot

SCAN_STEP = 1e-4
ROOT_XTOL = 1e-12


@dataclass(frozen=True)
class Ensemble:
    l: int
    r: int
    epsilon: float

    def __post_init__(self):
        if int(self.l) != self.l or self.l < 2:
            raise ValueError(f"l must be an integer >= 2, got {self.l}")
        if int(self.r) != self.r or self.r < 2:
            raise ValueError(f"r must be an integer >= 2, got {self.r}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")

    def with_epsilon(self, epsilon: float) -> "Ensemble":
        return Ensemble(self.l, self.r, epsilon)


@dataclass(frozen=True)
class ThresholdResult:
    l: int
    r: int
    epsilon_map: float
    p_map: float
    residual: float
    potential_residual: float
    derivative_residual: float

    def ensemble(self) -> Ensemble:
        return Ensemble(self.l, self.r, self.epsilon_map)


def _check_domain(p):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0) or np.any(~np.isfinite(p)):
        raise ValueError("p must lie in [0, 1]")
    return p


def _ws(l, r, eps, p):
    q = 1.0 - p
    # q**(r/(r-1)) is 0 at q == 0 by continuity; numpy already returns 0.0 there.
    return (1.0 - 1.0 / r) * q ** (r / (r - 1.0)) - q + 1.0 / r - (eps / l) * p**l


def _dws(l, r, eps, p):
    return 1.0 - (1.0 - p) ** (1.0 / (r - 1.0)) - eps * p ** (l - 1)


def single_potential(ens: Ensemble, p):
    """Single-system potential W_s(p); accepts scalars or arrays in [0, 1]."""
    p = _check_domain(p)
    out = _ws(ens.l, ens.r, ens.epsilon, p)
    return float(out) if out.ndim == 0 else out


def single_potential_deriv(ens: Ensemble, p):
    """dW_s/dp = 1 - (1-p)^(1/(r-1)) - eps p^(l-1)."""
    p = _check_domain(p)
    out = _dws(ens.l, ens.r, ens.epsilon, p)
    return float(out) if out.ndim == 0 else out


def _sign_change_roots(f, lo=0.0, hi=1.0, step=SCAN_STEP, include_lo=False):
    """All roots of ``f`` on (lo, hi] found by a dense sign-change scan plus bisection."""
    n = int(round((hi - lo) / step))
    ps = np.linspace(lo, hi, n + 1)
    vals = f(ps)
    start = 0 if include_lo else 1
    roots = []
    for i in range(start, n + 1):
        if vals[i] == 0.0:
            roots.append(float(ps[i]))
        elif i < n and vals[i] * vals[i + 1] < 0.0:
            roots.append(bisect(f, ps[i], ps[i + 1], xtol=ROOT_XTOL))
    return roots


def uncoupled_de_fixed_points(ens: Ensemble) -> list[float]:
    """Sorted stationary points of W_s in [0, 1]; the first one is always 0."""
    f = lambda p: _dws(ens.l, ens.r, ens.epsilon, p)
    roots = [r for r in _sign_change_roots(f) if r > 0.0]
    return [0.0] + sorted(roots)


def _largest_minimum(l, r, eps):
    """Largest stationary point of W_s with W_s' changing sign from - to +, or None."""
    f = lambda p: _dws(l, r, eps, p)
    n = int(round(1.0 / SCAN_STEP))
    ps = np.linspace(0.0, 1.0, n + 1)
    vals = f(ps)
    # W_s'(1) = 1 - eps > 0, so the last downward crossing (scanning from the right)
    # is a local minimum of W_s.
    neg = np.nonzero(vals[1:] < 0.0)[0]
    if neg.size == 0:
        return None
    i = neg[-1] + 1
    return bisect(f, ps[i], ps[i + 1], xtol=ROOT_XTOL)


def map_threshold(l: int, r: int) -> ThresholdResult:
    """MAP threshold by nested bisection.

    The inner solve locates the largest local minimum ``p*(eps)`` of W_s; the
    outer solve bisects ``eps`` on the sign of ``W_s(p*(eps))``, which is
    decreasing in ``eps``.  At the root both ``W_s`` and ``W_s'`` vanish.

    Raises
    ------
    NoNontrivialRoot
        For cycle codes (l = 2), where p_map = 0, or when no bracket exists.
    """
    if l == 2:
        raise NoNontrivialRoot("cycle codes (l=2) have p_map = 0; no nontrivial MAP point")
    Ensemble(l, r, 0.5)  # validates degrees

    def outer(eps):
        p = _largest_minimum(l, r, eps)
        if p is None:
            return 1.0
        return _ws(l, r, eps, p)

    lo, hi = 1e-6, 1.0 - 1e-12
    if not (outer(lo) > 0.0 and outer(hi) < 0.0):
        raise NoNontrivialRoot(f"could not bracket the MAP threshold for (l, r) = ({l}, {r})")
    eps = bisect(outer, lo, hi, xtol=ROOT_XTOL, maxiter=200)
    p = _largest_minimum(l, r, eps)
    if p is None:
        raise NoNontrivialRoot("inner solve lost the nontrivial minimum at the threshold")
    res_w = abs(_ws(l, r, eps, p))
    res_d = abs(_dws(l, r, eps, p))
    return ThresholdResult(l, r, eps, p, max(res_w, res_d), res_w, res_d)
