"""Command-line interface.

Every command prints one JSON RunRecord on stdout and writes its artifacts
to files named from ``--out-prefix``.  Exit codes: 0 success, 1 property
failure, 2 bad input, 3 non-convergence, 4 internal consistency violation.
"""

from __future__ import annotations

import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import click
import numpy as np

from . import __version__
from .desolve import SolveConfig, continuum_de_solve, default_start, discrete_de_solve
from .ensemble import map_threshold
from .errors import DispConvexError, NoNontrivialRoot, NotMonotone, SectorViolation, TailMismatch
from .kernel import (
    KernelPoint,
    kernel_closed_l2,
    kernel_closed_l3,
    kernel_convexity_scan,
    kernel_exact,
    kernel_general,
    kernel_hessian,
    kernel_quadrature_detail,
)
from .potential import CoupledSystem, continuum_potential, de_residual, discrete_potential
from .profile import Grid, read_profile_csv, write_profile_csv
from .transport import InterpolationPath, convexity_probe, noise_floor
from .verify import run_suite

EXIT_OK = 0
EXIT_PROPERTY = 1
EXIT_INPUT = 2
EXIT_NONCONVERGED = 3
EXIT_CONSISTENCY = 4

THREADS_ENV = "DISPCONVEX_THREADS"


class CommandExit(Exception):
    def __init__(self, code: int, message: str = ""):
        super().__init__(message)
        self.code = code
        self.message = message


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_trace_csv(path, trace) -> None:
    rows = ["iter,w_total"] + [f"{i},{w:.17g}" for i, w in enumerate(trace)]
    Path(path).write_text("\n".join(rows) + "\n")


def _thread_count(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else 1
    return max(1, threads)


@contextmanager
def ordered_map(threads: int):
    """Yield a map function whose results come back in input order."""
    if threads <= 1:
        yield map
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield pool.map


@contextmanager
def run_record(command: str, params: dict):
    """Collect outputs, time the command and emit the RunRecord even on failure."""
    outputs: dict = {}
    t0 = time.perf_counter()
    code = EXIT_OK
    message = ""
    try:
        yield outputs
    except CommandExit as exc:
        code, message = exc.code, exc.message
    except (NoNontrivialRoot, SectorViolation, NotMonotone, TailMismatch, ValueError, OSError) as exc:
        code, message = EXIT_INPUT, f"{type(exc).__name__}: {exc}"
    except DispConvexError as exc:
        code, message = EXIT_CONSISTENCY, f"{type(exc).__name__}: {exc}"
    record = {
        "command": command,
        "params": params,
        "outputs": outputs,
        "exit_code": code,
        "wall_time_ms": int(round(1000 * (time.perf_counter() - t0))),
        "tool_version": __version__,
    }
    if message:
        record["error"] = message
        click.echo(message, err=True)
    click.echo(json.dumps(_jsonable(record), sort_keys=True))
    sys.exit(code)


def _prefix_path(prefix: str | None, suffix: str) -> Path | None:
    if not prefix:
        return None
    p = Path(f"{prefix}{suffix}")
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


threads_option = click.option(
    "--threads", type=int, default=None,
    help=f"Worker threads (default: ${THREADS_ENV} or 1).",
)


@click.group()
@click.version_option(__version__)
def main():
    """Displacement-convexity toolkit for spatially coupled LDPC potentials."""


@main.command()
@click.option("--l", "l", type=int, required=True, help="Variable-node degree.")
@click.option("--r", "r", type=int, required=True, help="Check-node degree.")
@click.option("--out-prefix", default=None, help="Write PREFIX_threshold.json.")
def threshold(l, r, out_prefix):
    """MAP threshold eps_MAP and p_MAP of the (l, r) ensemble."""
    params = {"l": l, "r": r, "out_prefix": out_prefix}
    with run_record("threshold", params) as out:
        res = map_threshold(l, r)
        out.update(
            epsilon_map=res.epsilon_map,
            p_map=res.p_map,
            residual=res.residual,
            potential_residual=res.potential_residual,
            derivative_residual=res.derivative_residual,
        )
        path = _prefix_path(out_prefix, "_threshold.json")
        if path:
            write_json(path, out)


@main.command("de-run")
@click.option("--l", "l", type=int, required=True)
@click.option("--r", "r", type=int, required=True)
@click.option("--mode", type=click.Choice(["continuum", "discrete"]), default="continuum", show_default=True)
@click.option("--epsilon", type=float, default=None, help="Channel parameter (default: eps_MAP).")
@click.option("--max-iters", type=int, default=20000, show_default=True)
@click.option("--tol", type=float, default=1e-10, show_default=True)
@click.option("--damping", type=float, default=0.5, show_default=True)
@click.option("--pin/--no-pin", "pin_each_iter", default=True, show_default=True,
              help="Re-pin the continuum iterate every sweep.")
@click.option("--L", "L", type=int, default=100, show_default=True, help="Discrete half-length.")
@click.option("--w", "w", type=int, default=3, show_default=True, help="Discrete coupling window.")
@click.option("--init", type=click.Choice(["ones", "zeros"]), default="ones", show_default=True,
              help="Discrete start vector.")
@click.option("--profile-in", type=click.Path(dir_okay=False), default=None,
              help="Continuum start profile (default: pinned tanh step).")
@click.option("--half-width", type=float, default=10.0, show_default=True)
@click.option("--spacing", type=float, default=0.01, show_default=True)
@click.option("--out-prefix", default=None,
              help="Write PREFIX_profile.csv, PREFIX_summary.json and PREFIX_trace.csv.")
def de_run(l, r, mode, epsilon, max_iters, tol, damping, pin_each_iter, L, w, init, profile_in,
           half_width, spacing, out_prefix):
    """Run the discrete or continuum DE fixed-point solver."""
    params = {
        "l": l, "r": r, "mode": mode, "epsilon": epsilon, "max_iters": max_iters, "tol": tol,
        "damping": damping, "pin": pin_each_iter, "L": L, "w": w, "init": init,
        "profile_in": profile_in, "half_width": half_width, "spacing": spacing, "out_prefix": out_prefix,
    }
    with run_record("de-run", params) as out:
        th = map_threshold(l, r)
        ens = th.ensemble() if epsilon is None else th.ensemble().with_epsilon(epsilon)
        cfg = SolveConfig(max_iters=max_iters, tol=tol, damping=damping, pin_each_iter=pin_each_iter)
        out["epsilon"] = ens.epsilon
        out["p_map"] = th.p_map
        if mode == "continuum":
            if profile_in:
                p0 = read_profile_csv(profile_in)
            else:
                p0 = default_start(th.p_map, Grid.default(half_width, spacing))
            res = continuum_de_solve(ens, p0, cfg, th.p_map)
            pr = res.profile_or_vector
            out.update(res.summary())
            out["potential"] = continuum_potential(ens, pr).as_dict()
            out["sup_residual"] = de_residual(ens, pr).sup_norm
            path = _prefix_path(out_prefix, "_profile.csv")
            if path:
                write_profile_csv(pr, path)
        else:
            system = CoupledSystem(ens, L, w)
            x0 = np.ones(system.size) if init == "ones" else np.zeros(system.size)
            res = discrete_de_solve(system, x0, cfg)
            x = res.profile_or_vector
            out.update(res.summary())
            out["fp_residual"] = out.pop("de_residual")
            out["interior_max"] = float(np.max(x))
            out["potential"] = discrete_potential(system, x)
            path = _prefix_path(out_prefix, "_vector.csv")
            if path:
                rows = ["z,x"] + [f"{z},{v:.17g}" for z, v in zip(range(-L, L + 1), x)]
                path.write_text("\n".join(rows) + "\n")
        summary = _prefix_path(out_prefix, "_summary.json")
        if summary:
            write_json(summary, {"params": params, "outputs": out})
        trace = _prefix_path(out_prefix, "_trace.csv")
        if trace:
            write_trace_csv(trace, res.potential_trace)
        if not res.converged:
            raise CommandExit(EXIT_NONCONVERGED, f"no convergence after {res.iterations} iterations")


@main.command()
@click.argument("profile_a", type=click.Path(dir_okay=False))
@click.argument("profile_b", type=click.Path(dir_okay=False))
@click.option("--l", "l", type=int, required=True)
@click.option("--r", "r", type=int, required=True)
@click.option("--m", "m", type=int, default=2000, show_default=True, help="Quantile levels.")
@click.option("--n-lambda", type=int, default=21, show_default=True)
@click.option("--tol", type=float, default=1e-5, show_default=True, help="Chord tolerance.")
@click.option("--out-prefix", default=None, help="Write PREFIX_convexity.csv and PREFIX_convexity.json.")
@threads_option
def convexity(profile_a, profile_b, l, r, m, n_lambda, tol, out_prefix, threads):
    """Probe W along the displacement path between two increasing profiles."""
    threads = _thread_count(threads)
    params = {"profile_a": profile_a, "profile_b": profile_b, "l": l, "r": r, "m": m,
              "n_lambda": n_lambda, "tol": tol, "out_prefix": out_prefix, "threads": threads}
    with run_record("convexity", params) as out:
        th = map_threshold(l, r)
        ens = th.ensemble()
        a, b = read_profile_csv(profile_a), read_profile_csv(profile_b)
        for name, pr in (("profile_a", a), ("profile_b", b)):
            if not pr.is_increasing:
                raise CommandExit(EXIT_INPUT, f"{name} is not increasing")
            if abs(pr.right_tail - th.p_map) > 1e-9:
                raise CommandExit(EXIT_INPUT, f"{name} right tail {pr.right_tail!r} differs from p_map {th.p_map!r}")
        path = InterpolationPath(a, b, m, np.linspace(0.0, 1.0, n_lambda))
        with ordered_map(threads) as pmap:
            rep = convexity_probe(ens, path, th.p_map, map_fn=pmap)
        out.update(rep.summary())
        out["noise_floor"] = noise_floor(ens, a, th.p_map, path.lambdas, m)
        out["w_total"] = rep.w_total
        csv = _prefix_path(out_prefix, "_convexity.csv")
        if csv:
            rep.to_csv(csv)
        js = _prefix_path(out_prefix, "_convexity.json")
        if js:
            write_json(js, {k: out[k] for k in ("min_second_difference", "single_linearity_defect",
                                                 "chord_excess", "noise_floor")})
        if rep.chord_excess() > tol or rep.min_second_difference < -tol:
            raise CommandExit(EXIT_CONSISTENCY, "chord inequality violated beyond tolerance")


@main.command()
@click.option("--l", "l", type=int, required=True)
@click.option("--point", "point_mode", is_flag=True, help="Evaluate V at the distances given as arguments.")
@click.option("--hessian", "hessian_flag", is_flag=True, help="Hessian at the distances given as arguments.")
@click.option("--scan", "scan_n", type=int, default=None, help="Eigenvalue scan with N points per axis.")
@click.option("--upper", type=float, default=1.5, show_default=True, help="Scan sector bound.")
@click.option("--hessian-mode", "hessian_kind", type=click.Choice(["numeric", "analytic_l3"]),
              default="numeric", show_default=True)
@click.option("--out-prefix", default=None, help="Write PREFIX_scan.csv in scan mode.")
@threads_option
@click.argument("distances", nargs=-1, type=float)
def kernel(l, point_mode, hessian_flag, scan_n, upper, hessian_kind, out_prefix, threads, distances):
    """Evaluate the interaction kernel, its Hessian, or scan its convexity.

    Distances d_12 <= ... <= d_1l follow the options, e.g. ``kernel --l 3 --point 0.2 0.5``.
    """
    threads = _thread_count(threads)
    params = {"l": l, "point": point_mode, "hessian": hessian_flag, "scan": scan_n, "upper": upper,
              "hessian_mode": hessian_kind, "out_prefix": out_prefix, "threads": threads,
              "distances": list(distances)}
    with run_record("kernel", params) as out:
        if sum([point_mode, hessian_flag, scan_n is not None]) != 1:
            raise CommandExit(EXIT_INPUT, "choose exactly one of --point, --hessian, --scan")
        if scan_n is not None:
            with ordered_map(threads) as pmap:
                rep = kernel_convexity_scan(l, scan_n, upper=upper, map_fn=pmap)
            out.update(global_min_eigenvalue=rep.global_min, argmin=rep.argmin,
                       min_eigenvalue_unit_sector=rep.min_within(1.0), points=len(rep.points),
                       strictly_positive_points=int(rep.strictly_positive.sum()))
            csv = _prefix_path(out_prefix, "_scan.csv")
            if csv:
                rep.to_csv(csv)
            return
        pt = KernelPoint(l, list(distances))
        if hessian_flag:
            rep = kernel_hessian(pt, hessian_kind)
            out.update(matrix=rep.matrix, eigenvalues=rep.eigenvalues, min_eigenvalue=rep.min_eigenvalue)
            return
        quad = kernel_quadrature_detail(pt)
        exact = kernel_exact(pt.d)
        out.update(oracle=quad.value, oracle_n_sub=quad.n_sub, oracle_converged=quad.converged,
                   oracle_std_error=quad.std_error, exact=exact, delta_exact=exact - quad.value)
        if l in (2, 3):
            closed = kernel_closed_l2(pt.d[0]) if l == 2 else kernel_closed_l3(*pt.d)
            out.update(closed=closed, delta_closed=closed - quad.value)
        general = kernel_general(pt)
        out.update(general=general, delta_general=general - quad.value)


@main.command()
@click.option("--suite", type=click.Choice(["lemmas", "all"]), default="lemmas", show_default=True)
@click.option("--seed", type=int, default=42, show_default=True, help="PCG64 seed.")
@click.option("--l", "l", type=int, default=3, show_default=True)
@click.option("--r", "r", type=int, default=6, show_default=True)
@click.option("--out-prefix", default=None, help="Write PREFIX_verify.json and PREFIX_verify.txt.")
@threads_option
def verify(suite, seed, l, r, out_prefix, threads):
    """Run the property batteries; exit 1 if any property fails."""
    threads = _thread_count(threads)
    params = {"suite": suite, "seed": seed, "l": l, "r": r, "out_prefix": out_prefix, "threads": threads}
    with run_record("verify", params) as out:
        with ordered_map(threads) as pmap:
            results = run_suite(suite, seed, l, r, map_fn=pmap)
        lines = [res.line() for res in results]
        for line in lines:
            click.echo(line, err=True)
        out["properties"] = [res.as_dict() for res in results]
        out["seconds"] = {res.name: round(res.seconds, 3) for res in results}
        failing = [res.name for res in results if not res.passed]
        out["failing"] = failing
        txt = _prefix_path(out_prefix, "_verify.txt")
        if txt:
            txt.write_text("\n".join(lines) + "\n")
        js = _prefix_path(out_prefix, "_verify.json")
        if js:
            write_json(js, {"suite": suite, "seed": seed, "properties": out["properties"]})
        if failing:
            raise CommandExit(EXIT_PROPERTY, "failing properties: " + ", ".join(failing))
