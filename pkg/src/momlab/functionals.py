"""Variational functionals of moment measures and the deficits they control.

* ``J(phi) = log int exp(-(phi* + alpha|x|^2/2)) - int phi dmu`` and its dual
  ``E(rho) = H(rho) + T(rho, mu) + alpha/2 M2(rho)``;
* the Brascamp-Lieb deficit and the distance to its optimizer family
  ``a*phi' + b``;
* the Prekopa condition, the Prekopa-Leindler deficit and the near-equality
  triple built from a sup-convolution;
* first and second variations of ``J`` and the second-order Taylor identity
  along a segment of potentials.

Conjugates are computed with the parabolic refinement of
:func:`momlab.convexlab.conjugate_map`, which makes the discrete ``J`` a
smooth function of the potential values.
"""

from __future__ import annotations

import logging
import math
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .convexlab import (ConjugateMap, Potential, check_concave, conjugate_map,
                        gradient, second_derivative, sup_convolution_fdelta)
from .errors import (ConcavityError, DomainError, ParameterError, PreconditionError,
                     UnsupportedDimensionError)
from .grid import Field, Grid, integrate
from .measures import AtomicMeasure, Density, Measure, entropy, gibbs, moments
from .transport import max_correlation

__all__ = [
    "DeficitReport",
    "VariationReport",
    "BackboneReport",
    "Violation",
    "conjugate",
    "j_functional",
    "e_functional",
    "duality_gap",
    "bl_deficit",
    "dist_to_bl_optimizers",
    "indicator",
    "prekopa_condition_check",
    "pl_deficit",
    "bl_triple",
    "variation_first",
    "variation_second",
    "variation_report",
    "backbone_gap",
    "grid_tolerance",
]

log = logging.getLogger(__name__)

GRAD_TOL = 1e-10


def grid_tolerance(grid: Grid) -> float:
    """Default assertion tolerance ``10 h + 1e-8`` (largest spacing)."""
    return 10 * max(grid.h) + 1e-8


class DeficitReport(NamedTuple):
    """A deficit with the two terms it is the difference of."""

    deficit: float
    dirichlet_term: float
    variance_term: float
    clamp_warnings: int = 0
    tol: float = 0.0


class VariationReport(NamedTuple):
    """Analytic first/second variations of ``J`` with finite-difference checks."""

    first: float
    second: float
    fd_first: float
    fd_second: float
    tol: float = 0.0


class BackboneReport(NamedTuple):
    """Both sides of ``J(phi) - J(bar) = -int_0^1 (1-t) deficit(t) dt``.

    ``best_lambda`` is the node in ``(0, 1/2)`` where the L1 distance of the
    perturbation to affine functions (under the interpolated moment measure)
    is smallest, reported as ``best_distance``.
    """

    lhs: float
    rhs: float
    best_lambda: float
    best_distance: float
    first_variation: float


class Violation(NamedTuple):
    """Worst pair for the Prekopa condition ``f(x)^s g(y)^(1-s) <= h(sx+(1-s)y)``."""

    x: object
    y: object
    lhs: float
    rhs: float
    amount: float


# ---------------------------------------------------------------------------
# J, E and duality


def _field(phi) -> Field:
    return phi.field if isinstance(phi, Potential) else phi


def conjugate(phi, xgrid: Optional[Grid] = None) -> tuple[Potential, ConjugateMap]:
    """Refined conjugate of a 1D potential on ``xgrid`` (default: its own grid).

    The parabolic refinement switches off at the edge of the box, which can
    leave second differences slightly negative there; the result is
    certified convex up to a tolerance of one grid step (relative).
    """
    f = _field(phi)
    if f.grid.dim != 1:
        raise UnsupportedDimensionError("the functionals are evaluated in 1D")
    xgrid = f.grid if xgrid is None else xgrid
    cm = conjugate_map(f, xgrid, refine=True)
    tol = max(1e-6, xgrid.h[0])
    return Potential(Field(xgrid, cm.values, {"argmax": cm.location}), tol), cm


def _values_at(f: Field, pts) -> np.ndarray:
    """Linear interpolation that keeps ``+inf`` only where it is actually reached."""
    x = f.grid.x
    h = f.grid.h[0]
    pts = np.asarray(pts, dtype=float)
    slack = 1e-12 * max(1.0, abs(x[0]), abs(x[-1]))
    if pts.size and (pts.min() < x[0] - slack or pts.max() > x[-1] + slack):
        raise DomainError("points lie outside the potential's grid box")
    t = np.clip((pts - x[0]) / h, 0, x.size - 1)
    i = np.clip(np.floor(t).astype(int), 0, x.size - 2)
    s = t - i
    v0, v1 = f.values[i], f.values[i + 1]
    with np.errstate(invalid="ignore"):
        out = np.where(s == 0, v0, np.where(s == 1, v1, (1 - s) * v0 + s * v1))
    return np.where(np.isnan(out), np.inf, out)


def _against(f: Field, mu: Measure) -> float:
    """``int f dmu`` for a 1D field and a density or atoms."""
    if isinstance(mu, AtomicMeasure):
        vals = _values_at(f, mu.locations)
        if not np.isfinite(vals).all():
            raise DomainError("the measure charges points where the potential is +inf")
        return float(np.dot(mu.weights, vals))
    if mu.grid == f.grid:
        vals = f.values
    else:
        vals = _values_at(f, mu.grid.x)
    charged = mu.values > 0
    if not np.isfinite(vals[charged]).all():
        raise DomainError("the measure charges points where the potential is +inf")
    return integrate(Field(mu.grid, np.where(charged, vals, 0.0) * mu.values))


def _log_partition(phi_star: Field, alpha: float) -> float:
    return gibbs(phi_star, alpha).field.meta["log_z"]


def j_functional(phi, mu: Measure, alpha: float = 0.0, xgrid: Optional[Grid] = None) -> float:
    """``J(phi) = log int exp(-(phi* + alpha|x|^2/2)) dx - int phi dmu``.

    ``phi`` lives on the target side (where ``mu`` lives); its conjugate is
    evaluated on ``xgrid``, which defaults to the grid of ``phi``.
    """
    if alpha < 0:
        raise ParameterError("alpha must be nonnegative")
    star, _ = conjugate(phi, xgrid)
    return _log_partition(star.field, alpha) - _against(_field(phi), mu)


def e_functional(rho: Density, mu: Measure, alpha: float = 0.0) -> float:
    """``E(rho) = int rho log rho + T(rho, mu) + alpha/2 M2(rho)``."""
    return entropy(rho) + max_correlation(rho, mu) + 0.5 * alpha * moments(rho, 2)


def duality_gap(phi, rho: Optional[Density], mu: Measure, alpha: float = 0.0,
                xgrid: Optional[Grid] = None) -> float:
    """``J(phi) + E(rho)``; nonnegative, and zero at an optimal pair.

    ``rho`` defaults to the Gibbs density of the conjugate of ``phi``.
    """
    if rho is None:
        star, _ = conjugate(phi, xgrid)
        rho = gibbs(star, alpha)
    return j_functional(phi, mu, alpha, xgrid) + e_functional(rho, mu, alpha)


# ---------------------------------------------------------------------------
# Brascamp-Lieb


def _dirichlet_density(grads, hess, grad_tol):
    """``<H^{-1} g, g>`` per node with the zero-curvature convention."""
    if len(grads) == 1:
        g = grads[0]
        c = hess
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(c > 0, g**2 / np.where(c > 0, c, 1.0), 0.0)
        zero = ~(c > 0)
        return np.where(zero & (np.abs(g) >= grad_tol), np.inf, q)
    gx, gy = grads
    (hxx, hxy), (_, hyy) = hess
    det = hxx * hyy - hxy**2
    scale = np.maximum(np.abs(hxx) + np.abs(hyy), 1e-300)
    ok = det > 1e-14 * scale**2
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (hyy * gx**2 - 2 * hxy * gx * gy + hxx * gy**2) / np.where(ok, det, 1.0)
    q = np.where(ok, q, 0.0)
    small = np.hypot(gx, gy) < grad_tol
    return np.where(~ok & ~small, np.inf, q)


def bl_deficit(f: Field, phi: Potential, alpha: float = 0.0,
               grad_tol: float = GRAD_TOL) -> DeficitReport:
    """Brascamp-Lieb deficit ``int <(D^2 phi)^{-1} grad f, grad f> drho - Var_rho(f)``.

    ``rho`` is ``gibbs(phi, alpha)``. Gradients are central differences and
    the Hessian is clamped at zero; where it vanishes a node contributes 0 if
    ``|grad f| < grad_tol`` and ``+inf`` otherwise.
    """
    f = _field(f)
    rho = gibbs(phi, alpha)
    r = rho.values
    charged = r > 0
    if not np.isfinite(f.values[charged]).all():
        raise DomainError("f must be finite where the Gibbs density is positive")
    fv = np.where(charged, f.values, 0.0)
    ff = Field(f.grid, fv)
    if f.grid.dim == 1:
        grads = (gradient(ff).values,)
        d2 = second_derivative(phi)
        hess, clamped = d2.values, d2.meta["clamped"]
    else:
        grads = tuple(g.values for g in gradient(ff))
        hs = second_derivative(phi)
        hess = tuple(tuple(c.values for c in row) for row in hs)
        clamped = hs[0][0].meta["clamped"]
    q = _dirichlet_density(grads, hess, grad_tol)
    q = np.where(charged, q, 0.0)
    if np.isinf(q).any():
        dirichlet = math.inf
    else:
        dirichlet = integrate(Field(f.grid, q * r))
    mean = integrate(Field(f.grid, fv * r))
    variance = integrate(Field(f.grid, (fv - mean) ** 2 * r))
    deficit = dirichlet - variance
    return DeficitReport(deficit, dirichlet, variance, clamped, grid_tolerance(f.grid))


def _bracket_convex(obj, center, width):
    """Double ``width`` until ``[center - width, center + width]`` brackets the minimum."""
    f0 = obj(center)
    for _ in range(200):
        lo, hi = center - width, center + width
        if obj(lo) >= f0 and obj(hi) >= f0:
            return lo, hi
        width *= 2
    raise PreconditionError("could not bracket the minimum")


def dist_to_bl_optimizers(f: Field, phi: Potential) -> tuple[float, float]:
    """``min over a of || f - a phi' - E f ||_{L1(rho_phi)}`` and its argmin ``a`` (1D)."""
    f = _field(f)
    if f.grid.dim != 1:
        raise UnsupportedDimensionError("dist_to_bl_optimizers is 1D only")
    rho = gibbs(phi)
    r = rho.values
    charged = r > 0
    fv = np.where(charged, f.values, 0.0)
    dphi = np.where(charged, gradient(phi).values, 0.0)
    b = integrate(Field(f.grid, fv * r))

    def objective(a):
        return integrate(Field(f.grid, np.abs(fv - a * dphi - b) * r))

    # least-squares slope as the starting point
    m = integrate(Field(f.grid, dphi * r))
    var = integrate(Field(f.grid, (dphi - m) ** 2 * r))
    a0 = integrate(Field(f.grid, (fv - b) * (dphi - m) * r)) / var if var > 0 else 0.0
    lo, hi = _bracket_convex(objective, a0, 1e-3 * max(1.0, abs(a0)))
    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, abs(a0))})
    best_a, best = float(res.x), float(res.fun)
    base = objective(a0)
    if base < best:
        best_a, best = a0, base
    return best, best_a


# ---------------------------------------------------------------------------
# Prekopa-Leindler


def indicator(grid: Grid, lo, hi) -> Field:
    """Indicator of ``[lo, hi]`` (a box in 2D) with value 1/2 on edge nodes.

    The half values make the trapezoid integral equal to the exact volume
    when the edges fall on nodes.
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    out = np.ones(grid.shape)
    for c, a, b, h in zip(grid.mesh(), lo, hi, grid.h):
        eps = 1e-9 * h
        inside = (c > a - eps) & (c < b + eps)
        edge = inside & ((np.abs(c - a) <= eps) | (np.abs(c - b) <= eps))
        out = out * np.where(edge, 0.5, inside.astype(float))
    return Field(grid, out)


def _sample(field: Field, pts) -> np.ndarray:
    """Interpolate a nonnegative field, zero outside its box (pts shape (..., dim))."""
    g = field.grid
    if g.dim == 1:
        return np.interp(pts[..., 0], g.x, field.values, left=0.0, right=0.0)
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator(g.axes, field.values, bounds_error=False, fill_value=0.0)
    return interp(pts)


def prekopa_condition_check(f: Field, g: Field, h: Field, s: float,
                            tol: Optional[float] = None, chunk: int = 1 << 22
                            ) -> tuple[bool, Violation]:
    """Check ``f(x)^s g(y)^(1-s) <= h(sx + (1-s)y) + tol`` over all node pairs.

    ``h`` is interpolated (zero outside its box). The default tolerance is
    ``10 h + 1e-8`` for the coarsest of the three grids. Returns whether the
    condition holds and the most violated pair.
    """
    if not 0 < s < 1:
        raise ParameterError("s must lie in (0, 1)")
    for fld in (f, g, h):
        if not np.isfinite(fld.values).all() or fld.values.min() < 0:
            raise DomainError("f, g, h must be finite and nonnegative")
    if tol is None:
        tol = max(grid_tolerance(fld.grid) for fld in (f, g, h))
    px = np.stack([c.ravel() for c in f.grid.mesh()], -1)
    py = np.stack([c.ravel() for c in g.grid.mesh()], -1)
    fx = f.values.ravel() ** s
    gy = g.values.ravel() ** (1 - s)
    # only pairs with a positive left side can violate
    ix = np.nonzero(fx > 0)[0]
    iy = np.nonzero(gy > 0)[0]
    worst = Violation(None, None, 0.0, 0.0, -math.inf)
    rows = max(1, chunk // max(1, iy.size))
    for start in range(0, ix.size, rows):
        sel = ix[start:start + rows]
        z = s * px[sel, None, :] + (1 - s) * py[None, iy, :]
        lhs = fx[sel, None] * gy[None, iy]
        rhs = _sample(h, z)
        excess = lhs - rhs
        k = np.unravel_index(int(np.argmax(excess)), excess.shape)
        if excess[k] > worst.amount:
            xs, ys = px[sel[k[0]]], py[iy[k[1]]]
            worst = Violation(_pt(xs), _pt(ys), float(lhs[k]), float(rhs[k]), float(excess[k]))
    if worst.x is None:
        return True, Violation(None, None, 0.0, 0.0, 0.0)
    return bool(worst.amount <= tol), worst


def _pt(p):
    return float(p[0]) if p.size == 1 else tuple(float(c) for c in p)


def pl_deficit(f: Field, g: Field, h: Field, s: float, check: bool = True,
               tol: Optional[float] = None) -> float:
    """``int h / ((int f)^s (int g)^(1-s)) - 1`` for a triple meeting the Prekopa condition."""
    if check:
        ok, worst = prekopa_condition_check(f, g, h, s, tol)
        if not ok:
            raise PreconditionError(
                f"Prekopa condition fails at x={worst.x}, y={worst.y} by {worst.amount:.3e}")
    i_f, i_g, i_h = integrate(f), integrate(g), integrate(h)
    if not (i_f > 0 and i_g > 0):
        raise DomainError("f and g must have positive integrals")
    return i_h / (i_f**s * i_g ** (1 - s)) - 1.0


def _largest_admissible_delta(f: Field, phi: Potential, delta: float, tol: float) -> float:
    def ok(d):
        try:
            check_concave(np.where(phi.field.finite, 2 * d * f.values - phi.values, np.inf), tol)
            return True
        except ConcavityError:
            return False

    lo, hi = 0.0, delta
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def bl_triple(f: Field, phi: Potential, delta: float, verify: bool = False,
              concavity_tol: float = 1e-9) -> tuple[Field, Field, Field]:
    """Near-equality Prekopa-Leindler triple ``(u, v, w)`` for ``s = 1/2``.

    With ``phi`` shifted so that ``int e^{-phi} = 1``:
    ``u = e^{2 delta f - phi}``, ``v = e^{-phi}``, ``w = e^{f_delta - phi}``,
    where ``f_delta`` is the sup-convolution. With ``verify`` the Prekopa
    condition is checked by brute force.

    Raises
    ------
    ConcavityError
        If ``2 delta f - phi`` is not concave; ``delta0`` holds the largest
        admissible value found by bisection.
    """
    f = _field(f)
    log_z = gibbs(phi).field.meta["log_z"]
    pn = Potential(phi.field + log_z, phi.convexity_tol)
    try:
        fd = sup_convolution_fdelta(f, pn, delta, concavity_tol=concavity_tol)
    except ConcavityError as err:
        d0 = _largest_admissible_delta(f, pn, delta, concavity_tol)
        raise ConcavityError(
            f"2*delta*f - phi is not concave for delta={delta}; largest admissible "
            f"delta is about {d0:.6g}", node=err.node, violation=err.violation,
            delta0=d0) from None
    fin = pn.field.finite
    p = np.where(fin, pn.values, 0.0)
    fv = np.where(fin, f.values, 0.0)
    u = Field(f.grid, np.where(fin, np.exp(2 * delta * fv - p), 0.0))
    v = Field(f.grid, np.where(fin, np.exp(-p), 0.0))
    w = Field(f.grid, np.where(fin, np.exp(fd.values - p), 0.0))
    if verify:
        ok, worst = prekopa_condition_check(u, v, w, 0.5)
        if not ok:
            raise PreconditionError(f"triple violates the Prekopa condition: {worst}")
    return u, v, w


# ---------------------------------------------------------------------------
# variations of J


def _compose(v: Field, cm: ConjugateMap) -> np.ndarray:
    """``v`` at the refined maximizers: quadratic Lagrange interpolation."""
    vals = v.values
    i = cm.index
    h = v.grid.h[0]
    s = cm.offset / h
    inner = (i > 0) & (i < vals.size - 1) & (s != 0)
    out = vals[i].astype(float).copy()
    ii, ss = i[inner], s[inner]
    out[inner] = (0.5 * ss * (ss - 1) * vals[ii - 1] + (1 - ss**2) * vals[ii]
                  + 0.5 * ss * (ss + 1) * vals[ii + 1])
    return out


def variation_first(phi, v: Field, mu: Measure, alpha: float = 0.0,
                    xgrid: Optional[Grid] = None) -> float:
    """``d/dt J(phi + t v)`` at ``t = 0``: ``int v d(mu_{phi*, alpha} - mu)``.

    The moment-measure integral is ``int v(grad phi*(x)) drho(x)`` with
    ``rho = gibbs(phi*, alpha)``.
    """
    star, cm = conjugate(phi, xgrid)
    rho = gibbs(star, alpha)
    w = _compose(v, cm)
    return integrate(Field(rho.grid, w * rho.values)) - _against(v, mu)


def variation_second(phi, v: Field, alpha: float = 0.0,
                     xgrid: Optional[Grid] = None) -> float:
    """``d^2/dt^2 J(phi + t v)`` at ``t = 0``: ``Var(w) - int (phi*'')^{-1} w'^2 drho``.

    Here ``w = v o grad phi*`` and ``rho = gibbs(phi*, alpha)``; this equals
    minus the Brascamp-Lieb deficit of ``w`` under that Gibbs measure.
    """
    star, cm = conjugate(phi, xgrid)
    w = Field(star.grid, _compose(v, cm))
    return -bl_deficit(w, star, alpha).deficit


def _shifted(phi, v: Field, t: float) -> Potential:
    return Potential(_field(phi) + t * v.values, 1e-6)


def variation_report(phi, v: Field, mu: Measure, alpha: float = 0.0,
                     xgrid: Optional[Grid] = None, t1: float = 1e-4,
                     t2: float = 1e-3) -> VariationReport:
    """Analytic variations next to centered finite differences of ``J``."""
    def J(t):
        return j_functional(_shifted(phi, v, t), mu, alpha, xgrid)

    j0 = J(0.0)
    fd1 = (J(t1) - J(-t1)) / (2 * t1)
    fd2 = (J(t2) - 2 * j0 + J(-t2)) / t2**2
    return VariationReport(variation_first(phi, v, mu, alpha, xgrid),
                           variation_second(phi, v, alpha, xgrid), fd1, fd2,
                           grid_tolerance(_field(phi).grid))


def _l1_affine_distance(values, slopes, weights, grid):
    """``min over (a, b) of int |values - a*slopes - b| weights`` (weighted median in b)."""
    h = grid.h[0]
    tw = np.full(values.size, h)
    tw[0] = tw[-1] = h / 2
    wts = weights * tw

    def objective(a):
        r = values - a * slopes
        order = np.argsort(r, kind="stable")
        cum = np.cumsum(wts[order])
        b = r[order][min(int(np.searchsorted(cum, 0.5 * cum[-1])), r.size - 1)]
        return float(np.dot(np.abs(r - b), wts))

    lo, hi = _bracket_convex(objective, 0.0, 1e-3)
    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-10})
    return float(min(res.fun, objective(0.0)))


def backbone_gap(phi_bar, phi, mu: Measure, t_nodes: int = 16,
                 xgrid: Optional[Grid] = None) -> BackboneReport:
    """Second-order Taylor identity of ``J`` along ``phi_t = bar + t (phi - bar)``.

    ``lhs = J(phi) - J(bar)``; ``rhs = -int_0^1 (1-t) deficit(v o grad phi_t*) dt``
    by Gauss-Legendre quadrature, with the conjugate re-solved at every node.
    The first variation at ``bar`` (zero at an optimum) is reported separately.
    """
    if t_nodes < 1:
        raise ParameterError("t_nodes must be positive")
    pb, pf = _field(phi_bar), _field(phi)
    v = pf - pb.values
    lhs = j_functional(phi, mu, 0.0, xgrid) - j_functional(phi_bar, mu, 0.0, xgrid)
    nodes, weights = np.polynomial.legendre.leggauss(t_nodes)
    ts = 0.5 * (nodes + 1)
    ws = 0.5 * weights
    total = 0.0
    best = (math.nan, math.inf)
    for t, wq in zip(ts, ws):
        pt = Potential(pb + t * v.values, 1e-6)
        star, cm = conjugate(pt, xgrid)
        w = _compose(v, cm)
        total += wq * (1 - t) * bl_deficit(Field(star.grid, w), star).deficit
        if 0 < t < 0.5:
            rho = gibbs(star)
            dist = _l1_affine_distance(w, cm.location, rho.values, star.grid)
            if dist < best[1]:
                best = (float(t), dist)
    first = variation_first(phi_bar, v, mu, 0.0, xgrid)
    return BackboneReport(float(lhs), float(-total), best[0], best[1], float(first))
