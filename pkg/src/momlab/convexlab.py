"""Discrete convex analysis on uniform grids.

Legendre conjugates, convex envelopes, finite-difference derivatives, the
strong-convexity modulus, and the sup-convolution used to linearize the
Prekopa-Leindler inequality around a log-concave density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConcavityError, DomainError, UnsupportedDimensionError
from .grid import Field, Grid

__all__ = [
    "Potential",
    "legendre_transform",
    "conjugate_map",
    "dual_grid",
    "convexify",
    "gradient",
    "second_derivative",
    "sup_convolution_fdelta",
    "strong_convexity_modulus",
    "check_concave",
]

DEFAULT_CONVEXITY_TOL = 1e-9


def _line_second_differences(values):
    """Second differences of a 1D/2D array along axes and (in 2D) both diagonals.

    Yields ``(d2, center_index_tuple_array)`` pairs where only triples with
    three finite entries are kept.
    """
    v = values
    if v.ndim == 1:
        a, b, c = v[:-2], v[1:-1], v[2:]
        ok = np.isfinite(a) & np.isfinite(b) & np.isfinite(c)
        idx = np.nonzero(ok)[0] + 1
        yield (a + c - 2 * b)[ok], (idx,)
        return
    stencils = [
        (v[:-2, :], v[1:-1, :], v[2:, :], (1, 0)),
        (v[:, :-2], v[:, 1:-1], v[:, 2:], (0, 1)),
        (v[:-2, :-2], v[1:-1, 1:-1], v[2:, 2:], (1, 1)),
        (v[:-2, 2:], v[1:-1, 1:-1], v[2:, :-2], (1, 1)),
    ]
    for a, b, c, off in stencils:
        ok = np.isfinite(a) & np.isfinite(b) & np.isfinite(c)
        ii, jj = np.nonzero(ok)
        yield (a + c - 2 * b)[ok], (ii + off[0], jj + off[1])


def _scale(values):
    fin = values[np.isfinite(values)]
    return max(1.0, float(np.max(np.abs(fin)))) if fin.size else 1.0


def _contiguous(mask):
    idx = np.nonzero(mask)[0]
    return idx.size == 0 or idx[-1] - idx[0] + 1 == idx.size


@dataclass(frozen=True, eq=False)
class Potential:
    """A field certified convex on its effective domain.

    Convexity is checked through second differences along grid lines (and both
    diagonals in 2D), which must be at least ``-convexity_tol`` times the
    magnitude of the finite values.
    """

    field: Field
    convexity_tol: float = DEFAULT_CONVEXITY_TOL

    def __post_init__(self):
        vals = self.field.values
        tol = self.convexity_tol * _scale(vals)
        for d2, where in _line_second_differences(vals):
            if d2.size and d2.min() < -tol:
                k = int(np.argmin(d2))
                node = tuple(int(w[k]) for w in where)
                raise DomainError(
                    f"not convex: second difference {d2[k]:.3e} at node {node}")
        fin = np.isfinite(vals)
        if vals.ndim == 1:
            if not _contiguous(fin):
                raise DomainError("effective domain is not an interval")
        else:
            rows_ok = all(_contiguous(r) for r in fin)
            cols_ok = all(_contiguous(c) for c in fin.T)
            if not (rows_ok and cols_ok):
                raise DomainError("effective domain is not grid-convex")

    @classmethod
    def from_function(cls, grid: Grid, func, convexity_tol: float = DEFAULT_CONVEXITY_TOL):
        return cls(grid.field(func), convexity_tol)

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def __add__(self, other):
        if isinstance(other, Potential):
            other = other.field
        return Potential(self.field + other, self.convexity_tol)


def _as_field(f):
    return f.field if isinstance(f, Potential) else f


# ---------------------------------------------------------------------------
# Legendre transform


def _lower_hull(x, f):
    """Indices of the lower convex hull of the points ``(x[i], f[i])``, x sorted."""
    hull = []
    for i in range(len(x)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            # drop i1 when it lies on or above the chord i0 -> i
            cross = (x[i1] - x[i0]) * (f[i] - f[i0]) - (f[i1] - f[i0]) * (x[i] - x[i0])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull, dtype=int)


class _Conj1D(NamedTuple):
    values: np.ndarray
    index: np.ndarray
    offset: np.ndarray  # sub-grid shift of the maximizer (0 without refinement)


def _conjugate_1d(x, f, y, refine=False):
    """max_i y*x_i - f_i for every y, via the lower hull and a slope search."""
    fin = np.nonzero(np.isfinite(f))[0]
    if fin.size == 0:
        return _Conj1D(np.full(y.shape, -np.inf), np.zeros(y.shape, int), np.zeros(y.shape))
    xf, ff = x[fin], f[fin]
    hull = _lower_hull(xf, ff)
    hx, hf = xf[hull], ff[hull]
    slopes = np.diff(hf) / np.diff(hx)
    k = np.searchsorted(slopes, y, side="left")
    values = y * hx[k] - hf[k]
    index = fin[hull[k]]
    offset = np.zeros_like(values)
    if refine and x.size >= 3:
        h = x[1] - x[0]
        i = index
        inner = (i > 0) & (i < x.size - 1)
        inner[inner] &= np.isfinite(f[i[inner] - 1]) & np.isfinite(f[i[inner] + 1])
        ii = i[inner]
        yy = y[inner]
        curv = f[ii + 1] - 2 * f[ii] + f[ii - 1]
        lin = 2 * h * yy - (f[ii + 1] - f[ii - 1])
        good = curv > 1e-14 * np.maximum(1.0, np.abs(f[ii]))
        # a parabola is a poor model across a kink: require the neighbouring
        # curvatures to agree within a factor of 4
        c_all = np.full(x.size, np.nan)
        with np.errstate(invalid="ignore"):
            c_all[1:-1] = f[2:] - 2 * f[1:-1] + f[:-2]
        for nb in (ii - 1, ii + 1):
            c_nb = c_all[nb]
            with np.errstate(invalid="ignore"):
                bad = np.isfinite(c_nb) & ((c_nb < curv / 4) | (c_nb > 4 * curv))
            good &= ~bad
        tau = np.zeros_like(yy)
        gain = np.zeros_like(yy)
        tau[good] = h * lin[good] / (2 * curv[good])
        tau = np.clip(tau, -h, h)
        gain[good] = lin[good] ** 2 / (8 * curv[good])
        gain = np.where(np.abs(tau) < h, gain, 0.0)
        tau = np.where(np.abs(tau) < h, tau, 0.0)
        values[inner] += gain
        offset[inner] = tau
    return _Conj1D(values, index, offset)


class ConjugateMap(NamedTuple):
    """Conjugate values together with the maximizer of ``<x, y> - phi(x)``.

    ``location`` is the maximizer (the discrete gradient of the conjugate),
    ``index`` the grid node it was found at and ``offset`` the sub-grid shift
    applied by the parabolic refinement.
    """

    values: np.ndarray
    location: np.ndarray
    index: np.ndarray
    offset: np.ndarray


def conjugate_map(phi, dual: Grid, refine: bool = False) -> ConjugateMap:
    """Discrete conjugate of ``phi`` on ``dual`` together with its maximizers (1D).

    With ``refine`` the maximum over nodes is corrected by the vertex of the
    parabola through the maximizing node and its two neighbours. This is exact
    for quadratic potentials and makes the conjugate depend smoothly on the
    potential values, which finite-difference checks rely on.
    """
    f = _as_field(phi)
    if f.grid.dim != 1 or dual.dim != 1:
        raise UnsupportedDimensionError("conjugate_map is 1D only")
    x = f.grid.x
    res = _conjugate_1d(x, f.values, dual.x, refine=refine)
    if not np.isfinite(res.values).all():
        raise DomainError("potential has an empty effective domain")
    return ConjugateMap(res.values, x[res.index] + res.offset, res.index, res.offset)


def legendre_transform(phi, dual: Optional[Grid] = None, refine: bool = False) -> Potential:
    """Discrete Legendre conjugate ``phi*(y) = max_x <x, y> - phi(x)`` on ``dual``.

    In 1D the maximum is found on the lower convex hull by a slope search; in
    2D the separable maximum is taken axis by axis. ``dual`` defaults to
    :func:`dual_grid`.
    """
    f = _as_field(phi)
    if not f.finite.any():
        raise DomainError("potential has an empty effective domain")
    dual = dual_grid(phi) if dual is None else dual
    if dual.dim != f.grid.dim:
        raise DomainError("dual grid dimension differs from the potential's")
    if f.grid.dim == 1:
        cm = conjugate_map(f, dual, refine=refine)
        out = Field(dual, cm.values, {"argmax": cm.location})
        tol = DEFAULT_CONVEXITY_TOL if not refine else max(1e-6, dual.h[0])
        return Potential(out, tol)
    if refine:
        raise UnsupportedDimensionError("refined conjugates are 1D only")
    (x1, x2), (y1, y2) = f.grid.axes, dual.axes
    vals = f.values
    # inner[i, j] = max_{x2} x2*y2_j - phi(x1_i, x2)
    inner = np.empty((x1.size, y2.size))
    for i in range(x1.size):
        inner[i] = _conjugate_1d(x2, vals[i], y2).values
    neg = np.where(np.isfinite(inner), -inner, np.inf)
    out = np.empty((y1.size, y2.size))
    for j in range(y2.size):
        out[:, j] = _conjugate_1d(x1, neg[:, j], y1).values
    return Potential(Field(dual, out), DEFAULT_CONVEXITY_TOL)


def dual_grid(phi, n=None, pad: float = 0.05) -> Grid:
    """Grid covering the range of the gradient of ``phi``, padded by ``pad``."""
    f = _as_field(phi)
    grads = gradient(phi)
    if f.grid.dim == 1:
        grads = (grads,)
    lo, hi = [], []
    for g in grads:
        vals = g.values[np.isfinite(g.values)]
        a, b = float(vals.min()), float(vals.max())
        width = b - a
        if width <= 1e-12 * max(1.0, abs(a), abs(b)):
            width = max(1.0, abs(a))
        lo.append(a - pad * width)
        hi.append(b + pad * width)
    n = f.grid.n if n is None else n
    if f.grid.dim == 1:
        return Grid(lo[0], hi[0], n if np.ndim(n) == 0 else n[0])
    return Grid(lo, hi, n)


def convexify(f: Field) -> Potential:
    """Convex envelope of ``f`` restricted to the grid (its biconjugate).

    In 1D the envelope is the lower convex hull interpolated at the nodes; in
    2D it is the double discrete conjugate over a dual grid of slopes.
    """
    f = _as_field(f)
    vals = f.values
    if not np.isfinite(vals).any():
        raise DomainError("field is +inf everywhere")
    if f.grid.dim == 1:
        x = f.grid.x
        fin = np.nonzero(np.isfinite(vals))[0]
        hull = fin[_lower_hull(x[fin], vals[fin])]
        out = np.full_like(vals, np.inf)
        span = slice(fin[0], fin[-1] + 1)
        out[span] = np.interp(x[span], x[hull], vals[hull])
        out = np.minimum(out, vals)
        return Potential(Field(f.grid, out))
    dual_lo, dual_hi = [], []
    for axis, h in enumerate(f.grid.h):
        d = np.diff(vals, axis=axis) / h
        d = d[np.isfinite(d)]
        a, b = (float(d.min()), float(d.max())) if d.size else (-1.0, 1.0)
        if b - a < 1e-12:
            a, b = a - 1.0, b + 1.0
        dual_lo.append(a)
        dual_hi.append(b)
    dual = Grid(dual_lo, dual_hi, f.grid.n)
    star = legendre_transform(Field(f.grid, vals), dual)
    back = legendre_transform(star, f.grid).values
    out = np.minimum(back, vals)
    return Potential(Field(f.grid, out))


# ---------------------------------------------------------------------------
# derivatives


def gradient(phi):
    """Central-difference gradient; one-sided at the boundary of the domain.

    Returns a :class:`Field` in 1D and a tuple of two fields in 2D. Nodes
    outside the effective domain get ``+inf``; the boolean mask of nodes that
    used one-sided differences is stored in ``meta["one_sided"]``.
    """
    f = _as_field(phi)
    vals = f.values
    fin = np.isfinite(vals)
    if f.grid.dim == 1:
        out = np.full_like(vals, np.inf)
        one_sided = np.zeros(vals.shape, bool)
        idx = np.nonzero(fin)[0]
        if idx.size >= 2:
            span = slice(idx[0], idx[-1] + 1)
            out[span] = np.gradient(vals[span], f.grid.h[0])
            one_sided[idx[0]] = one_sided[idx[-1]] = True
        elif idx.size == 1:
            out[idx] = 0.0
        return Field(f.grid, out, {"one_sided": one_sided})
    comps = []
    for axis, h in enumerate(f.grid.h):
        safe = np.where(fin, vals, 0.0)
        g = np.gradient(safe, h, axis=axis)
        fwd = np.roll(fin, -1, axis=axis)
        bwd = np.roll(fin, 1, axis=axis)
        edge = _edge_mask(vals.shape, axis, 0) | _edge_mask(vals.shape, axis, -1)
        interior_ok = fwd & bwd & ~edge
        one_sided = fin & ~interior_ok
        # one-sided fallback where a neighbour is outside the domain
        fwd_d = (np.roll(safe, -1, axis=axis) - safe) / h
        bwd_d = (safe - np.roll(safe, 1, axis=axis)) / h
        use_fwd = one_sided & fwd & ~_edge_mask(vals.shape, axis, -1)
        use_bwd = one_sided & ~use_fwd & bwd & ~_edge_mask(vals.shape, axis, 0)
        g = np.where(use_fwd, fwd_d, g)
        g = np.where(use_bwd, bwd_d, g)
        g = np.where(fin, g, np.inf)
        comps.append(Field(f.grid, g, {"one_sided": one_sided}))
    return tuple(comps)


def _edge_mask(shape, axis, position):
    m = np.zeros(shape, bool)
    sl = [slice(None)] * len(shape)
    sl[axis] = position
    m[tuple(sl)] = True
    return m


def _second_diff_1d(vals, h):
    out = np.full_like(vals, np.inf)
    fin = np.isfinite(vals)
    idx = np.nonzero(fin)[0]
    if idx.size < 3:
        out[fin] = 0.0
        return out
    a, b = idx[0], idx[-1]
    seg = vals[a:b + 1]
    d2 = np.empty_like(seg)
    d2[1:-1] = (seg[2:] - 2 * seg[1:-1] + seg[:-2]) / h**2
    d2[0], d2[-1] = d2[1], d2[-2]
    out[a:b + 1] = d2
    return out


def second_derivative(phi, convexity_tol: Optional[float] = None):
    """Central second differences with negative values clamped to zero.

    The number of nodes whose raw value fell below ``-convexity_tol`` is
    stored in ``meta["clamped"]``. In 2D the result is the per-node Hessian as
    a nested tuple ``((fxx, fxy), (fxy, fyy))`` whose eigenvalues are clamped.
    """
    tol = (phi.convexity_tol if isinstance(phi, Potential) else DEFAULT_CONVEXITY_TOL) \
        if convexity_tol is None else convexity_tol
    f = _as_field(phi)
    vals = f.values
    if f.grid.dim == 1:
        d2 = _second_diff_1d(vals, f.grid.h[0])
        fin = np.isfinite(d2)
        clamped = int(np.count_nonzero(d2[fin] < -tol))
        d2 = np.where(fin & (d2 < 0), 0.0, d2)
        return Field(f.grid, d2, {"clamped": clamped})
    hx, hy = f.grid.h
    fin = np.isfinite(vals)
    safe = np.where(fin, vals, 0.0)
    fxx = np.apply_along_axis(_second_diff_1d, 0, safe, hx)
    fyy = np.apply_along_axis(_second_diff_1d, 1, safe, hy)
    fxy = np.gradient(np.gradient(safe, hx, axis=0), hy, axis=1)
    hess = np.stack([np.stack([fxx, fxy], -1), np.stack([fxy, fyy], -1)], -2)
    w, v = np.linalg.eigh(hess)
    clamped = int(np.count_nonzero((w < -tol).any(axis=-1) & fin))
    w = np.maximum(w, 0.0)
    hess = np.einsum("...ik,...k,...jk->...ij", v, w, v)
    parts = []
    for i in range(2):
        row = []
        for j in range(2):
            comp = np.where(fin, hess[..., i, j], np.inf if i == j else 0.0)
            row.append(Field(f.grid, comp, {"clamped": clamped}))
        parts.append(tuple(row))
    return tuple(parts)


def strong_convexity_modulus(phi: Potential, margin: float = 0.1) -> float:
    """Smallest second derivative of a 1D potential away from the box edges."""
    f = _as_field(phi)
    if f.grid.dim != 1:
        raise UnsupportedDimensionError("strong_convexity_modulus is 1D only")
    n = f.grid.n[0]
    cut = int(math.ceil(margin * (n - 1)))
    d2 = second_derivative(phi).values
    window = d2[cut:n - cut]
    window = window[np.isfinite(window)]
    if cut >= n - cut or window.size == 0:
        raise DomainError("strong-convexity window is empty")
    return float(window.min())


# ---------------------------------------------------------------------------
# sup-convolution


def check_concave(g, tol: float = 1e-9):
    """Raise :class:`ConcavityError` unless ``g`` is concave along grid lines.

    ``g`` is a Field or an array; ``+inf`` entries are ignored.
    """
    vals = g.values if isinstance(g, Field) else np.asarray(g, dtype=float)
    scale = _scale(vals)
    worst, node = 0.0, None
    for d2, where in _line_second_differences(vals):
        if d2.size:
            k = int(np.argmax(d2))
            if d2[k] > worst:
                worst, node = float(d2[k]), tuple(int(w[k]) for w in where)
    if worst > tol * scale:
        raise ConcavityError(
            f"function is not concave: second difference {worst:.3e} at node {node}",
            node=node, violation=worst)


def _golden_max(func, lo, hi, iters=60):
    """Vectorized golden-section search for the max of ``func`` on ``[lo, hi]``."""
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo.copy(), hi.copy()
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(iters):
        left = fc > fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - invphi * (b - a)
        new_d = a + invphi * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        fc_next = np.where(left, np.nan, fd)
        fd_next = np.where(left, fc, np.nan)
        need_c = np.isnan(fc_next)
        need_d = np.isnan(fd_next)
        if need_c.any():
            fc_next = np.where(need_c, func(c_next), fc_next)
        if need_d.any():
            fd_next = np.where(need_d, func(d_next), fd_next)
        c, d, fc, fd = c_next, d_next, fc_next, fd_next
    s = (a + b) / 2
    return s, func(s)


def sup_convolution_fdelta(f: Field, phi: Potential, delta: float,
                           window: bool = False, refine: bool = True,
                           concavity_tol: float = 1e-9) -> Field:
    """Sup-convolution ``max_h delta*f(z+h) - [phi(z+h)/2 + phi(z-h)/2 - phi(z)]``.

    The maximum is searched exhaustively over grid offsets ``h`` keeping
    ``z +- h`` on the grid. In 1D, ``refine`` then polishes ``h`` off the grid
    with cubic-spline models of ``f`` and ``phi`` (only ever increasing the
    value). ``window`` restricts the search to
    ``|h| <= 10 * delta * Lip(f) / modulus(phi)``.

    Raises
    ------
    ConcavityError
        If ``2*delta*f - phi`` is not concave.
    """
    f = _as_field(f)
    pf = _as_field(phi)
    if f.grid != pf.grid:
        raise DomainError("f and phi must share a grid")
    if not np.isfinite(f.values[pf.finite]).all():
        raise DomainError("f must be finite on the domain of phi")
    fvals = np.where(pf.finite, f.values, 0.0)
    # off-domain nodes are +inf and drop out of the finite-triple scan
    check_concave(np.where(pf.finite, 2 * delta * fvals - pf.values, np.inf),
                  tol=concavity_tol)
    if delta == 0:
        return Field(f.grid, np.zeros(f.grid.shape))
    grid = f.grid
    p = pf.values
    dim = grid.dim
    kmax = [(m - 1) // 2 for m in grid.n]
    if window:
        lip = max(float(np.max(np.abs(g.values[np.isfinite(g.values)])))
                  for g in ((gradient(f),) if dim == 1 else gradient(f)))
        if dim == 1:
            mod = max(strong_convexity_modulus(phi, margin=0.0), 1e-12)
        else:
            hess = second_derivative(phi)
            mod = max(float(np.min(np.minimum(hess[0][0].values, hess[1][1].values))), 1e-12)
        radius = 10 * abs(delta) * lip / mod
        kmax = [min(k, int(math.ceil(radius / h)) + 1) for k, h in zip(kmax, grid.h)]
    fin = np.isfinite(p)
    best = np.where(fin, delta * fvals, 0.0)
    if dim == 1:
        best_k = np.zeros(grid.n[0], int)
        n = grid.n[0]
        for k in range(1, kmax[0] + 1):
            mid = slice(k, n - k)
            bracket = 0.5 * (p[2 * k:] + p[:n - 2 * k]) - p[mid]
            for sgn, fsl in ((1, fvals[2 * k:]), (-1, fvals[:n - 2 * k])):
                cand = delta * fsl - bracket
                cand = np.where(np.isfinite(cand), cand, -np.inf)
                better = cand > best[mid]
                if better.any():
                    best[mid] = np.where(better, cand, best[mid])
                    best_k[mid] = np.where(better, sgn * k, best_k[mid])
        if refine and fin.all():
            best = _refine_1d(grid, fvals, p, delta, best, best_k)
        out = np.where(fin, best, delta * fvals)
        return Field(grid, out, {"offset_index": best_k})
    n1, n2 = grid.n
    for k1 in range(-kmax[0], kmax[0] + 1):
        for k2 in range(-kmax[1], kmax[1] + 1):
            if k1 == 0 and k2 == 0:
                continue
            a1, b1 = abs(k1), n1 - abs(k1)
            a2, b2 = abs(k2), n2 - abs(k2)
            if a1 >= b1 or a2 >= b2:
                continue
            zs = (slice(a1, b1), slice(a2, b2))
            plus = (slice(a1 + k1, b1 + k1), slice(a2 + k2, b2 + k2))
            minus = (slice(a1 - k1, b1 - k1), slice(a2 - k2, b2 - k2))
            cand = delta * fvals[plus] - (0.5 * (p[plus] + p[minus]) - p[zs])
            cand = np.where(np.isfinite(cand), cand, -np.inf)
            best[zs] = np.maximum(best[zs], cand)
    out = np.where(fin, best, delta * fvals)
    return Field(grid, out)


def _refine_1d(grid, fvals, p, delta, best, best_k):
    x = grid.x
    h = grid.h[0]
    fs = CubicSpline(x, fvals)
    ps = CubicSpline(x, p)
    lo_lim = x - x[0]
    hi_lim = x[-1] - x
    reach = np.minimum(lo_lim, hi_lim)
    s_lo = np.clip((best_k - 1) * h, -reach, reach)
    s_hi = np.clip((best_k + 1) * h, -reach, reach)

    def objective(s):
        return delta * fs(x + s) - (0.5 * ps(x + s) + 0.5 * ps(x - s) - p)

    s, val = _golden_max(objective, s_lo, s_hi)
    return np.maximum(best, np.where(np.isfinite(val), val, -np.inf))
