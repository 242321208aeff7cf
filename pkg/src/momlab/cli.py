"""Command-line front end: ``python -m momlab <command> [options]``.

Every command writes CSV files into the output directory (``--out``, else the
``MOMLAB_OUT`` environment variable, else ``./momlab_out``) and prints a short
summary. Options may also come from a flat ``key = value`` file given with
``--config``; flags on the command line take precedence.

Exit codes: 0 success, 1 input error, 2 solver non-convergence,
3 failure of a probe's numerical machinery.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import io as mio
from .convexlab import Potential, gradient, strong_convexity_modulus
from .errors import ClassMembershipError, MomlabError, NonConvergenceError
from .functionals import (bl_deficit, bl_triple, dist_to_bl_optimizers, duality_gap,
                          indicator, j_functional, pl_deficit)
from .grid import Field, Grid
from .momsolve import (caffarelli_exponents, compact_stability, p_moment_bound_check,
                       regularity_probe, regularization_path, solve_moment_measure)

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_INPUT", "EXIT_NONCONVERGENCE", "EXIT_PROBE"]

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGENCE = 2
EXIT_PROBE = 3

log = logging.getLogger("momlab")


class UsageError(MomlabError):
    """Bad command-line or configuration input."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# option parsing helpers


def parse_grid(text: str) -> Grid:
    """``lo,hi,n`` -> 1D grid."""
    parts = [p.strip() for p in str(text).split(",")]
    if len(parts) != 3:
        raise UsageError(f"grid must be 'lo,hi,n', got {text!r}")
    try:
        return Grid(float(parts[0]), float(parts[1]), int(parts[2]))
    except ValueError:
        raise UsageError(f"grid must be 'lo,hi,n', got {text!r}") from None


def parse_range(text: str, log_spaced: bool = True) -> list[float]:
    """``lo:hi:n`` (log-spaced from hi down to lo) or a comma-separated list."""
    text = str(text).strip()
    try:
        if ":" in text:
            lo, hi, n = text.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
            if n < 1 or lo <= 0 or hi <= 0:
                raise ValueError
            if n == 1:
                return [hi]
            vals = np.geomspace(hi, lo, n) if log_spaced else np.linspace(hi, lo, n)
            return [float(v) for v in vals]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"range must be 'lo:hi:n' with positive bounds or a list, got {text!r}") from None


_SAFE_NAMES = {
    name: getattr(np, name)
    for name in ("exp", "log", "sqrt", "abs", "sin", "cos", "tan", "tanh", "sinh", "cosh",
                 "arctan", "where", "minimum", "maximum", "sign", "pi", "inf", "log1p")
}


def field_argument(text: str, grid: Optional[Grid]) -> Field:
    """A field from a CSV path, or a numpy expression in ``x`` evaluated on ``grid``.

    Expressions may use ``ind(a, b)`` for the indicator of ``[a, b]``; a bare
    function name such as ``sin`` is applied to ``x``.
    """
    path = Path(text)
    if path.suffix.lower() == ".csv" or path.is_file():
        return mio.read_field(path)
    if grid is None:
        raise UsageError(f"--grid is required to evaluate the expression {text!r}")
    x = grid.x
    names = dict(_SAFE_NAMES, x=x, np=np, ind=lambda a, b: indicator(grid, a, b).values)
    try:
        val = eval(text, {"__builtins__": {}}, names)  # noqa: S307 - restricted namespace
        if callable(val):
            val = val(x)
        return Field(grid, np.broadcast_to(np.asarray(val, dtype=float), grid.shape))
    except MomlabError:
        raise
    except Exception as err:
        raise UsageError(f"cannot evaluate expression {text!r}: {err}") from None


def potential_argument(text: str, grid: Optional[Grid]) -> Potential:
    f = field_argument(text, grid)
    return Potential(Field(f.grid, f.values))


# ---------------------------------------------------------------------------
# command schemas


@dataclass(frozen=True)
class Opt:
    dest: str
    type: Callable
    default: object = None
    help: str = ""
    required: bool = False


GRID = Opt("grid", str, None, "grid as lo,hi,n")
SOLVER = [
    Opt("damping", float, 0.5, "relaxation factor in (0, 1]"),
    Opt("tol", float, 1e-6, "residual tolerance"),
    Opt("max_iter", int, 2000, "iteration cap"),
]

COMMANDS: dict[str, tuple[str, list[Opt]]] = {
    "solve": ("solve for a moment-measure representation", [
        Opt("mu", str, None, "target measure file", True),
        Opt("alpha", float, 0.0, "quadratic regularization"),
        Opt("grid", str, None, "grid as lo,hi,n", True), *SOLVER]),
    "bl-deficit": ("Brascamp-Lieb deficit of f under exp(-phi)", [
        Opt("phi", str, None, "potential: CSV file or expression in x", True),
        Opt("f", str, None, "test function: CSV file or expression in x", True), GRID]),
    "bl-stability": ("deficit and distance along f = phi' + eps g", [
        Opt("phi", str, None, "potential: CSV file or expression in x", True),
        Opt("g", str, None, "perturbation direction", True),
        Opt("eps", str, "1e-3:1e-1:9", "eps range lo:hi:n (log-spaced) or list"),
        GRID, Opt("svg", str, "no", "also write an SVG line chart (yes/no)")]),
    "pl-deficit": ("Prekopa-Leindler deficit of a triple", [
        Opt("f", str, None, "f (or the test function with --phi)"),
        Opt("g", str, None, "g"),
        Opt("h", str, None, "h"),
        Opt("s", float, 0.5, "interpolation parameter in (0, 1)"),
        Opt("phi", str, None, "potential for the near-equality triple"),
        Opt("delta", float, None, "perturbation size for the near-equality triple"),
        GRID]),
    "duality": ("J + E for a solved or given pair", [
        Opt("mu", str, None, "target measure file", True),
        Opt("alpha", float, 0.0, "quadratic regularization"),
        Opt("phi", str, None, "target-side potential file (default: solve)"),
        Opt("rho", str, None, "density file (default: Gibbs of the conjugate)"),
        GRID, *SOLVER]),
    "reg-path": ("distance of rho_alpha to translates of rho_0", [
        Opt("mu", str, None, "target measure file", True),
        Opt("alphas", str, "1e-3:1e-1:5", "alpha range lo:hi:n (log-spaced) or list"),
        Opt("grid", str, None, "grid as lo,hi,n", True), *SOLVER,
        Opt("svg", str, "no", "also write an SVG line chart (yes/no)")]),
    "probe-regularity": ("strong convexity of the solved potential for mu = exp(-V)", [
        Opt("V", str, None, "log-density V: CSV file or expression in x", True),
        Opt("Lambda", float, None, "upper curvature bound of V", True),
        GRID, Opt("k", int, 20, "number of Caffarelli partial sums"),
        Opt("kmax", int, 5, "largest moment order 2k"),
        Opt("lam", float, None, "convexity for the moment recursion (default: measured)"),
        *SOLVER]),
    "caffarelli-exponents": ("partial sums S_k of the exponent recursion", [
        Opt("k", int, 20, "number of terms")]),
    "compact-stability": ("Gibbs stability against W1 of two targets", [
        Opt("mu", str, None, "first measure file", True),
        Opt("nu", str, None, "second measure file", True),
        Opt("grid", str, None, "grid as lo,hi,n", True), SOLVER[0],
        Opt("tol", float, 1e-5, "residual tolerance"), SOLVER[2]]),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="momlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, (desc, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=desc, description=desc)
        p.add_argument("--config", default=None, help="flat key = value file")
        p.add_argument("--out", default=None, help="output directory")
        for o in opts:
            flag = "--" + o.dest.replace("_", "-")
            p.add_argument(flag, dest=o.dest, default=None, help=o.help)
    return parser


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise UsageError(f"cannot read config {path}: {err.strerror}") from None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{i}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge config file and flags, validate keys and convert types."""
    _, opts = COMMANDS[args.command]
    schema = {o.dest: o for o in opts}
    cfg = read_config(args.config) if args.config else {}
    unknown = set(cfg) - set(schema) - {"out"}
    if unknown:
        raise UsageError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    values = {}
    for dest, o in schema.items():
        raw = getattr(args, dest)
        if raw is None:
            raw = cfg.get(dest)
        if raw is None:
            if o.required:
                raise UsageError(f"missing required option --{dest.replace('_', '-')}")
            values[dest] = o.default
            continue
        try:
            values[dest] = o.type(raw)
        except ValueError:
            raise UsageError(f"invalid value {raw!r} for --{dest.replace('_', '-')}") from None
    out = args.out or cfg.get("out") or os.environ.get("MOMLAB_OUT") or "momlab_out"
    values["out"] = Path(out)
    return values


def _grid_opt(o):
    return parse_grid(o["grid"]) if o.get("grid") else None


def _solver_opts(o):
    return {"damping": o["damping"], "tol": o["tol"], "max_iter": o["max_iter"]}


def _emit(**pairs):
    for k, v in pairs.items():
        print(f"{k} = {v:.10g}" if isinstance(v, float) else f"{k} = {v}")


def _svg_chart(path, xs, ys, xlabel, ylabel):
    """Minimal log-log polyline chart."""
    lx, ly = np.log10(xs), np.log10(np.maximum(ys, 1e-300))
    w, h, m = 480, 320, 40

    def sx(v):
        span = np.ptp(lx) or 1.0
        return m + (v - lx.min()) / span * (w - 2 * m)

    def sy(v):
        span = np.ptp(ly) or 1.0
        return h - m - (v - ly.min()) / span * (h - 2 * m)

    pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(lx, ly))
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">'
           f'<rect width="{w}" height="{h}" fill="white"/>'
           f'<polyline points="{pts}" fill="none" stroke="black"/>'
           f'<text x="{w / 2}" y="{h - 8}" text-anchor="middle">log10 {xlabel}</text>'
           f'<text x="12" y="{h / 2}" transform="rotate(-90 12 {h / 2})" '
           f'text-anchor="middle">log10 {ylabel}</text></svg>\n')
    mio.atomic_write(path, svg)


# ---------------------------------------------------------------------------
# commands


def cmd_solve(o) -> int:
    mu = mio.read_measure(o["mu"])
    grid = parse_grid(o["grid"])
    rep = solve_moment_measure(mu, o["alpha"], grid, **_solver_opts(o))
    out = o["out"]
    mio.write_table(out / "solve_report.csv",
                    ["alpha", "iterations", "residual", "j_value", "e_value", "gap",
                     "converged", "m2_rho"],
                    [[rep.alpha, rep.iterations, rep.residual, rep.j_value, rep.e_value,
                      rep.gap, rep.converged, rep.m2_rho]],
                    [f"momlab solve; residual is a W1 upper bound in units of x; tol={o['tol']}",
                     f"grid={o['grid']}"])
    mio.write_field(out / "psi.csv", rep.psi)
    mio.write_field(out / "phi.csv", rep.phi)
    mio.write_measure(out / "rho.csv", rep.rho)
    mio.write_table(out / "trace.csv", ["iteration", "residual"],
                    [[i + 1, r] for i, r in enumerate(rep.trace)])
    _emit(residual=rep.residual, iterations=rep.iterations, gap=rep.gap,
          converged=rep.converged)
    return EXIT_OK if rep.converged else EXIT_NONCONVERGENCE


def cmd_bl_deficit(o) -> int:
    grid = _grid_opt(o)
    phi = potential_argument(o["phi"], grid)
    f = field_argument(o["f"], phi.grid)
    rep = bl_deficit(f, phi)
    mio.write_table(o["out"] / "bl_deficit.csv", list(rep._fields), [list(rep)],
                    [f"momlab bl-deficit; dimensionless; tol={rep.tol:.3g}"])
    _emit(deficit=rep.deficit, dirichlet_term=rep.dirichlet_term,
          variance_term=rep.variance_term)
    return EXIT_OK


def _loglog_slope(x, y):
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def cmd_bl_stability(o) -> int:
    grid = _grid_opt(o)
    phi = potential_argument(o["phi"], grid)
    g = field_argument(o["g"], phi.grid)
    dphi = gradient(phi).values
    # the exact optimizer phi' carries an O(h^2) discretization deficit
    floor = bl_deficit(Field(phi.grid, dphi), phi).deficit
    rows = []
    for eps in sorted(parse_range(o["eps"])):
        f = Field(phi.grid, dphi + eps * g.values)
        rep = bl_deficit(f, phi)
        dist, a = dist_to_bl_optimizers(f, phi)
        rows.append([eps, rep.deficit, dist, a])
    arr = np.array(rows, dtype=float)
    ok = (arr[:, 1] > 0) & (arr[:, 2] > 0)
    slope = _loglog_slope(arr[:, 1], arr[:, 2])
    corrected = _loglog_slope(arr[:, 1] - floor, arr[:, 2])
    const = float(np.max(arr[ok, 2] / np.sqrt(arr[ok, 1]))) if ok.any() else math.nan
    mio.write_table(o["out"] / "bl_stability.csv", ["eps", "deficit", "distance", "a"], rows,
                    ["momlab bl-stability; distance in L1(rho_phi)",
                     f"slope = {slope:.6g}; max distance/sqrt(deficit) = {const:.6g}",
                     f"floor = {floor:.6g} (deficit of phi'); corrected_slope = {corrected:.6g}"])
    if o["svg"].lower() in ("yes", "true", "1") and ok.sum() >= 2:
        _svg_chart(o["out"] / "bl_stability.svg", arr[ok, 1], arr[ok, 2], "deficit", "distance")
    _emit(slope=slope, constant=const, floor=floor, corrected_slope=corrected)
    return EXIT_OK


def cmd_pl_deficit(o) -> int:
    grid = _grid_opt(o)
    out = o["out"]
    if o["phi"] is not None:
        if o["f"] is None or o["delta"] is None:
            raise UsageError("the near-equality triple needs --phi, --f and --delta")
        phi = potential_argument(o["phi"], grid)
        f = field_argument(o["f"], phi.grid)
        delta = o["delta"]
        u, v, w = bl_triple(f, phi, delta)
        eps = pl_deficit(u, v, w, 0.5, check=False)
        predicted = 0.5 * delta**2 * bl_deficit(f, phi).deficit
        mio.write_table(out / "pl_deficit.csv", ["delta", "epsilon", "predicted"],
                        [[delta, eps, predicted]],
                        ["momlab pl-deficit; near-equality triple; predicted = delta^2/2 * BL deficit"])
        _emit(epsilon=eps, predicted=predicted)
        return EXIT_OK
    if None in (o["f"], o["g"], o["h"]):
        raise UsageError("pl-deficit needs --f, --g and --h (or --phi, --f, --delta)")
    f = field_argument(o["f"], grid)
    g = field_argument(o["g"], grid)
    h = field_argument(o["h"], grid)
    eps = pl_deficit(f, g, h, o["s"])
    mio.write_table(out / "pl_deficit.csv", ["s", "epsilon"], [[o["s"], eps]],
                    ["momlab pl-deficit; dimensionless"])
    _emit(epsilon=eps)
    return EXIT_OK


def cmd_duality(o) -> int:
    mu = mio.read_measure(o["mu"])
    out = o["out"]
    if o["phi"] is not None:
        phi = mio.read_potential(o["phi"])
        rho = mio.read_measure(o["rho"]) if o["rho"] else None
        xgrid = _grid_opt(o)
        j = j_functional(phi, mu, o["alpha"], xgrid)
        gap = duality_gap(phi, rho, mu, o["alpha"], xgrid)
        e = gap - j
    else:
        grid = _grid_opt(o)
        if grid is None:
            raise UsageError("duality needs --grid when no --phi is given")
        rep = solve_moment_measure(mu, o["alpha"], grid, **_solver_opts(o))
        if not rep.converged:
            raise NonConvergenceError("solver did not converge", rep.trace)
        j, e, gap = rep.j_value, rep.e_value, rep.gap
    mio.write_table(out / "duality.csv", ["alpha", "j_value", "e_value", "gap"],
                    [[o["alpha"], j, e, gap]], ["momlab duality; nats"])
    _emit(j_value=j, e_value=e, gap=gap)
    return EXIT_OK


def cmd_reg_path(o) -> int:
    mu = mio.read_measure(o["mu"])
    grid = parse_grid(o["grid"])
    fit = regularization_path(mu, parse_range(o["alphas"]), grid, **_solver_opts(o))
    mio.write_table(o["out"] / "reg_path.csv", ["alpha", "distance"], fit.samples,
                    ["momlab reg-path; distance = L1 modulo translations",
                     f"slope = {fit.slope:.6g}; intercept = {fit.intercept:.6g}; r2 = {fit.r2:.6g}; "
                     f"constant = {fit.constant:.6g}; bound_holds = {fit.bound_holds}"])
    if o["svg"].lower() in ("yes", "true", "1") and fit.defined:
        a = np.array(fit.samples)
        _svg_chart(o["out"] / "reg_path.svg", a[:, 0], a[:, 1], "alpha", "distance")
    _emit(slope=fit.slope, constant=fit.constant, bound_holds=fit.bound_holds)
    return EXIT_OK


def cmd_probe_regularity(o) -> int:
    grid = _grid_opt(o)
    V = field_argument(o["V"], grid)
    out = o["out"]
    try:
        probe = regularity_probe(V, o["Lambda"], **_solver_opts(o))
    except ClassMembershipError:
        raise
    except (MomlabError, ArithmeticError) as err:
        print(f"probe failed: {err}", file=sys.stderr)
        return EXIT_PROBE
    mio.write_table(out / "regularity.csv",
                    ["modulus", "cube_root_threshold", "inverse_threshold",
                     "passes_cube_root", "passes_inverse", "residual"],
                    [[probe.modulus, probe.cube_root_threshold, probe.inverse_threshold,
                      probe.passes_cube_root, probe.passes_inverse, probe.residual]],
                    [f"momlab probe-regularity; Lambda={o['Lambda']}; informational"])
    rows = caffarelli_exponents(o["k"])
    mio.write_table(out / "caffarelli.csv", ["k", "S_k", "alpha_exponent"],
                    [[i + 1, s, e] for i, (s, e) in enumerate(rows)])
    moment_rows = []
    lam = o["lam"]
    try:
        rep = solve_moment_measure(_gibbs_of(V), 0.0, V.grid,
                                   compute_functionals=False, **_solver_opts(o))
        psi = _charged_part(rep.psi, rep.rho)
        if lam is None:
            lam = strong_convexity_modulus(psi)
        if lam > 0:
            moment_rows = p_moment_bound_check(psi, lam, o["kmax"])
    except MomlabError as err:
        print(f"moment recursion skipped: {err}", file=sys.stderr)
    lam = math.nan if lam is None else lam
    mio.write_table(out / "p_moments.csv", ["k", "V_2k", "bound", "holds"], moment_rows,
                    [f"momlab probe-regularity; lambda={lam:.6g}"])
    status = "pass" if probe.passes_cube_root else "fail"
    _emit(modulus=probe.modulus, cube_root_threshold=probe.cube_root_threshold,
          inverse_threshold=probe.inverse_threshold, cube_root_check=status)
    return EXIT_OK


def _charged_part(psi, rho, rel=1e-12):
    """Restrict ``psi`` to the nodes where ``rho`` exceeds ``rel`` times its peak.

    Beyond that the solved potential is fixed only up to round-off in the
    cumulative masses, and carries no moment weight anyway.
    """
    vals = rho.values
    idx = np.nonzero(vals > rel * vals.max())[0]
    i0, i1 = int(idx[0]), int(idx[-1])
    x = psi.grid.x
    sub = Grid(x[i0], x[i1], i1 - i0 + 1)
    return Potential(Field(sub, psi.values[i0:i1 + 1]))


def _gibbs_of(V):
    from .measures import gibbs

    return gibbs(V)


def cmd_caffarelli(o) -> int:
    rows = caffarelli_exponents(o["k"])
    mio.write_table(o["out"] / "caffarelli.csv", ["k", "S_k", "alpha_exponent"],
                    [[i + 1, s, e] for i, (s, e) in enumerate(rows)],
                    ["momlab caffarelli-exponents; S_k = (1 - (-1/2)^k)/3"])
    for i, (s, e) in enumerate(rows, start=1):
        print(f"{i},{s!r},{e!r}")
    return EXIT_OK


def cmd_compact_stability(o) -> int:
    mu = mio.read_measure(o["mu"])
    nu = mio.read_measure(o["nu"])
    grid = parse_grid(o["grid"])
    res = compact_stability(mu, nu, grid, **_solver_opts(o))
    mio.write_table(o["out"] / "compact_stability.csv",
                    ["l1_mod_translation", "shift", "w1", "ratio", "potential_distance"],
                    [[res.l1_mod_translation, res.shift, res.w1, res.ratio,
                      res.potential_distance]],
                    ["momlab compact-stability; ratio = l1 / sqrt(W1)"])
    _emit(l1_mod_translation=res.l1_mod_translation, w1=res.w1, ratio=res.ratio)
    return EXIT_OK


HANDLERS = {
    "solve": cmd_solve,
    "bl-deficit": cmd_bl_deficit,
    "bl-stability": cmd_bl_stability,
    "pl-deficit": cmd_pl_deficit,
    "duality": cmd_duality,
    "reg-path": cmd_reg_path,
    "probe-regularity": cmd_probe_regularity,
    "caffarelli-exponents": cmd_caffarelli,
    "compact-stability": cmd_compact_stability,
}


def _glue_values(argv: list[str]) -> list[str]:
    """Turn ``--opt value`` into ``--opt=value`` so values such as ``-8,8,401`` survive."""
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if (tok.startswith("--") and "=" not in tok and tok not in _FLAGS
                and i + 1 < len(argv) and not argv[i + 1].startswith("--")):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


_FLAGS = {"--verbose", "--help"}


def main(argv=None) -> int:
    parser = build_parser()
    argv = _glue_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_INPUT
    try:
        opts = resolve_options(args)
        return HANDLERS[args.command](opts)
    except NonConvergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (MomlabError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
