"""Coupled potential functionals and the density-evolution residual.

Continuum functional on a profile ``p`` (check-node erasure probability):

    W[p]      = W_single[p] + W_int[p]
    W_single  = int W_s(p(z)) dz
    W_int     = (eps/l) int { p(z)^l - (int_0^1 p(z+u) du)^l } dz

Discretization.  The z-integrals are node sums with spacing ``h`` (the
window edges continue into the constant tails, so no half weights there), and
the unit averages ``int_0^1 du`` are composite trapezoid sums over the
``K = 1/h`` cells of a unit interval.  The grid is padded by ``K`` tail nodes
on each side, which makes the interaction integrand exactly zero outside the
padded range.  With these choices the gradient of the discrete functional
with respect to the node values is exactly ``h`` times the DE residual
returned by :func:`de_residual`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import Ensemble, single_potential
from .errors import TailMismatch
from .profile import TAIL_TOL, Profile


@dataclass(frozen=True)
class CoupledSystem:
    ens: Ensemble
    L: int
    w: int

    def __post_init__(self):
        if self.L < 1 or self.w < 1:
            raise ValueError("L and w must be >= 1")

    @property
    def size(self) -> int:
        return 2 * self.L + 1


@dataclass(frozen=True)
class PotentialBreakdown:
    w_single: float
    w_int: float
    w_total: float

    def as_dict(self) -> dict:
        return {"w_single": self.w_single, "w_int": self.w_int, "w_total": self.w_total}


@dataclass(frozen=True, eq=False)
class Residual:
    values: np.ndarray
    sup_norm: float
    l2_norm: float


def x_from_p(p, r: int):
    """Variable-node erasure x from check-node erasure p = 1 - (1-x)^(r-1)."""
    return 1.0 - (1.0 - np.asarray(p, dtype=float)) ** (1.0 / (r - 1.0))


def p_from_x(x, r: int):
    return 1.0 - (1.0 - np.asarray(x, dtype=float)) ** (r - 1)


# ---------------------------------------------------------------------------
# discrete coupled chain


def _window_average_p(x: np.ndarray, r: int, w: int, left_pad: int) -> np.ndarray:
    """P_j = (1/w) sum_{u<w} (1 - (1 - x_{j+u})^(r-1)) for j = -L-left_pad .. L.

    Positions left of -L read x = 0, positions right of L are clamped to x_L.
    """
    ext = np.concatenate((np.zeros(left_pad), x, np.full(w - 1, x[-1])))
    q = 1.0 - (1.0 - ext) ** (r - 1)
    c = np.concatenate(([0.0], np.cumsum(q)))
    return (c[w:] - c[:-w]) / w


def discrete_potential(sys: CoupledSystem, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (sys.size,):
        raise ValueError(f"expected {sys.size} values, got shape {x.shape}")
    l, r, eps = sys.ens.l, sys.ens.r, sys.ens.epsilon
    w = sys.w
    single = -x * (1.0 - x) ** (r - 1) + 1.0 / r - (1.0 - x) ** r / r
    avg = _window_average_p(x, r, w, 0)
    return float(np.sum(single - (eps / l) * avg**l) / w)


def discrete_fp_map(sys: CoupledSystem, x: np.ndarray) -> np.ndarray:
    """x_z <- (eps/w) sum_{k<w} (P_{z-k})^(l-1), the fixed-point map of coupled DE."""
    l, eps, w = sys.ens.l, sys.ens.epsilon, sys.w
    avg = _window_average_p(x, sys.ens.r, w, w - 1)
    c = np.concatenate(([0.0], np.cumsum(avg ** (l - 1))))
    return eps * (c[w:] - c[:-w]) / w


# ---------------------------------------------------------------------------
# continuum functional


def _trapezoid_weights(k: int) -> np.ndarray:
    wts = np.ones(k + 1)
    wts[0] = wts[-1] = 0.5
    return wts


def _padded(values: np.ndarray, left: float, right: float, k: int) -> np.ndarray:
    return np.concatenate((np.full(k, left), values, np.full(k, right)))


def _unit_average(e: np.ndarray, k: int, h: float) -> np.ndarray:
    """A_j = h sum_k w_k e_{j+k}: trapezoid value of int_0^1 e(z_j + u) du."""
    return h * np.convolve(e, _trapezoid_weights(k), mode="valid")


def check_tails(pr: Profile, p_map: float | None = None) -> None:
    mismatch = pr.boundary_mismatch()
    if mismatch > TAIL_TOL:
        raise TailMismatch(f"boundary values differ from the tails by {mismatch:.3g}")
    if p_map is not None:
        for name, tail in (("left", pr.left_tail), ("right", pr.right_tail)):
            if min(abs(tail), abs(tail - p_map)) > 1e-9:
                raise TailMismatch(f"{name} tail {tail!r} is neither 0 nor p_map")


def continuum_potential(ens: Ensemble, pr: Profile, p_map: float | None = None) -> PotentialBreakdown:
    """W_single, W_int and their sum for a profile.

    Tail regions contribute nothing: the interaction integrand vanishes where
    the profile is locally constant and W_s vanishes at 0 and p_map when
    ``eps = eps_map``.  Away from the threshold only the window is integrated.

    Raises
    ------
    TailMismatch
        If the window boundary values are further than 1e-6 from the tails,
        or (when ``p_map`` is given) a tail is neither 0 nor ``p_map``.
    """
    check_tails(pr, p_map)
    l, eps = ens.l, ens.epsilon
    h = pr.grid.h
    k = pr.grid.cells_per_unit
    v = pr.values
    w_single = h * float(np.sum(single_potential(ens, v)))
    e = _padded(v, pr.left_tail, pr.right_tail, k)
    a = _unit_average(e, k, h)
    w_int = (eps / l) * h * float(np.sum(e[: a.size] ** l - a**l))
    return PotentialBreakdown(w_single, w_int, w_single + w_int)


def de_residual(ens: Ensemble, pr: Profile) -> Residual:
    """r(z) = 1 - (1-p)^(1/(r-1)) - eps int_0^1 dv (int_0^1 du p(z+u-v))^(l-1) at the nodes."""
    l, r, eps = ens.l, ens.r, ens.epsilon
    h = pr.grid.h
    k = pr.grid.cells_per_unit
    v = pr.values
    e = _padded(v, pr.left_tail, pr.right_tail, k)
    a = _unit_average(e, k, h)
    b = _unit_average(a ** (l - 1), k, h)
    res = 1.0 - (1.0 - v) ** (1.0 / (r - 1.0)) - eps * b
    return Residual(res, float(np.max(np.abs(res))), float(np.sqrt(h * np.sum(res**2))))


def de_rhs(ens: Ensemble, pr: Profile) -> np.ndarray:
    """eps int_0^1 dv (int_0^1 du p(z+u-v))^(l-1) at the nodes."""
    h = pr.grid.h
    k = pr.grid.cells_per_unit
    e = _padded(pr.values, pr.left_tail, pr.right_tail, k)
    a = _unit_average(e, k, h)
    return ens.epsilon * _unit_average(a ** (ens.l - 1), k, h)


def directional_derivative(ens: Ensemble, pr: Profile, nu) -> float:
    """dW[p][nu], the linearization of the discrete functional along ``nu``.

    Computed in forward mode (perturb, then integrate); pairing ``nu`` with
    :func:`de_residual` gives the same number through the adjoint route.
    """
    nu = np.asarray(getattr(nu, "values", nu), dtype=float)
    if nu.shape != pr.values.shape:
        raise ValueError(f"direction has shape {nu.shape}, profile has {pr.values.shape}")
    if max(abs(nu[0]), abs(nu[-1])) >= 1e-6:
        raise ValueError("direction must decay at both window edges")
    l, r, eps = ens.l, ens.r, ens.epsilon
    h = pr.grid.h
    k = pr.grid.cells_per_unit
    v = pr.values
    dws = 1.0 - (1.0 - v) ** (1.0 / (r - 1.0)) - eps * v ** (l - 1)
    d_single = h * float(np.dot(dws, nu))
    e = _padded(v, pr.left_tail, pr.right_tail, k)
    de = _padded(nu, 0.0, 0.0, k)
    a = _unit_average(e, k, h)
    da = _unit_average(de, k, h)
    n = a.size
    d_int = eps * h * float(np.dot(e[:n] ** (l - 1), de[:n]) - np.dot(a ** (l - 1), da))
    return d_single + d_int


def continuum_limit_check(ens: Ensemble, pr: Profile, w_list, L: int) -> list[tuple[int, float]]:
    """Discrete potential of the profile sampled at spacing 1/w, for each w.

    Position ``z`` of the chain reads ``x_z = x(p(z/w))``; as w grows the
    discrete sum is a Riemann sum of the continuum functional.
    """
    w_list = [int(w) for w in w_list]
    reach = L / max(w_list)
    if pr.grid.z_min > -reach + 1e-12 or pr.grid.z_max < reach - 1e-12:
        raise ValueError(
            f"profile window [{pr.grid.z_min}, {pr.grid.z_max}] does not cover [-{reach}, {reach}]"
        )
    idx = np.arange(-L, L + 1)
    out = []
    for w in w_list:
        x = x_from_p(pr(idx / w), ens.r)
        out.append((w, discrete_potential(CoupledSystem(ens, L, w), x)))
    return out
