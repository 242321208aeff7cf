"""Probability measures on grids: densities, atomic measures and their statistics.

Also hosts the Gibbs normalization ``e^{-phi}/Z``, the moment-measure
pushforward through the gradient of a potential, and L1 distances
(plain and modulo translations).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .convexlab import Potential
from .errors import DomainError, NormalizationError, UnsupportedDimensionError
from .grid import Field, Grid, integrate

__all__ = [
    "Density",
    "AtomicMeasure",
    "Measure",
    "gibbs",
    "moment_measure",
    "moments",
    "entropy",
    "barycenter",
    "center",
    "theta",
    "l1_distance",
    "l1_dist_mod_translation",
    "TranslationFit",
    "PLATEAU_TOL",
]

log = logging.getLogger(__name__)

#: Slope variation below which consecutive cells count as one gradient plateau.
PLATEAU_TOL = 1e-6
#: Minimal number of cells in a plateau that emits an atom.
PLATEAU_MIN_CELLS = 3


@dataclass(frozen=True, eq=False)
class Density:
    """Nonnegative field with unit trapezoid mass."""

    field: Field
    mass_tol: float = 1e-6

    def __post_init__(self):
        vals = self.field.values
        if not np.isfinite(vals).all():
            raise DomainError("density values must be finite")
        if vals.min() < 0:
            raise DomainError("density values must be nonnegative")
        mass = integrate(self.field)
        if abs(mass - 1.0) > self.mass_tol:
            raise NormalizationError(f"density has mass {mass:.9g}, expected 1")

    @classmethod
    def normalized(cls, f: Field, mass_tol: float = 1e-6) -> "Density":
        """Rescale a nonnegative field to unit mass."""
        if not np.isfinite(f.values).all() or f.values.min() < 0:
            raise DomainError("need finite nonnegative values")
        mass = integrate(f)
        if not mass > 0:
            raise NormalizationError("field has zero mass")
        return cls(Field(f.grid, f.values / mass), mass_tol)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "Density":
        return cls.normalized(grid.field(func))

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def dim(self) -> int:
        return self.grid.dim


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite weighted sum of point masses at distinct locations.

    ``locations`` has shape ``(k,)`` in 1D or ``(k, 2)`` in 2D.
    """

    locations: np.ndarray
    weights: np.ndarray
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        loc = np.array(self.locations, dtype=float)
        w = np.array(self.weights, dtype=float).ravel()
        if loc.ndim == 2 and loc.shape[1] == 1:
            loc = loc[:, 0]
        if loc.ndim not in (1, 2) or loc.shape[0] != w.size or w.size == 0:
            raise DomainError("locations and weights must be nonempty and aligned")
        if loc.ndim == 2 and loc.shape[1] != 2:
            raise UnsupportedDimensionError("atoms must be 1D or 2D points")
        if not (np.isfinite(loc).all() and np.isfinite(w).all()):
            raise DomainError("atoms must be finite")
        if (w <= 0).any():
            raise DomainError("atom weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise NormalizationError(f"atom weights sum to {w.sum():.15g}, expected 1")
        n_unique = np.unique(loc, axis=0).shape[0]
        if n_unique != w.size:
            raise DomainError("atom locations must be distinct")
        if loc.ndim == 1:
            order = np.argsort(loc, kind="stable")
            loc, w = loc[order], w[order]
        loc.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)

    @classmethod
    def merged(cls, locations, weights) -> "AtomicMeasure":
        """Build a measure, summing the weights of repeated locations."""
        loc = np.asarray(locations, dtype=float)
        w = np.asarray(weights, dtype=float)
        if loc.ndim == 1:
            uniq, inv = np.unique(loc, return_inverse=True)
        else:
            uniq, inv = np.unique(loc, axis=0, return_inverse=True)
        summed = np.bincount(inv.ravel(), weights=w)
        summed = summed / summed.sum()
        return cls(uniq, summed)

    @classmethod
    def dirac(cls, point) -> "AtomicMeasure":
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return cls(p if p.size == 1 else p[None, :], [1.0])

    @property
    def dim(self) -> int:
        return 1 if self.locations.ndim == 1 else 2


Measure = Union[Density, AtomicMeasure]


# ---------------------------------------------------------------------------
# Gibbs measures and pushforwards


def gibbs(phi, alpha: float = 0.0) -> Density:
    """Normalized Gibbs density ``exp(-(phi + alpha*|x|^2/2)) / Z``.

    ``meta`` of the returned field records ``log_z`` and ``z``.
    """
    if alpha < 0:
        raise DomainError("alpha must be nonnegative")
    f = phi.field if isinstance(phi, Potential) else phi
    energy = f.values + 0.5 * alpha * f.grid.sq_norm()
    fin = np.isfinite(energy)
    shift = float(energy[fin].min())
    weight = np.where(fin, np.exp(-(np.where(fin, energy, shift) - shift)), 0.0)
    mass = integrate(Field(f.grid, weight))
    if not (mass > 0 and math.isfinite(mass)):
        raise NormalizationError(f"Gibbs weight has mass {mass}")
    log_z = math.log(mass) - shift
    meta = {"log_z": log_z, "z": math.exp(log_z) if log_z < 700 else math.inf}
    return Density(Field(f.grid, weight / mass, meta))


def _plateaus(slopes, tol=PLATEAU_TOL, min_cells=PLATEAU_MIN_CELLS):
    """Label maximal runs of cells whose slopes stay within ``tol`` of the run start.

    Returns an integer label per cell (-1 outside runs of ``min_cells`` cells).
    """
    labels = np.full(slopes.size, -1)
    start, k = 0, 0
    n = slopes.size
    while start < n:
        end = start + 1
        ref = slopes[start]
        while end < n and abs(slopes[end] - ref) < tol:
            end += 1
        if end - start >= min_cells:
            labels[start:end] = k
            k += 1
        start = end
    return labels


def cell_pushforward(psi, alpha: float = 0.0):
    """Cell masses of ``gibbs(psi, alpha)`` and the slopes they are pushed to (1D).

    Returns ``(masses, slopes, rho)``. Half-cells touching the edge of the
    effective domain are attached to the nearest finite slope.
    """
    f = psi.field if isinstance(psi, Potential) else psi
    rho = gibbs(f, alpha)
    h = f.grid.h[0]
    r = rho.values
    vals = f.values
    masses = 0.5 * h * (r[:-1] + r[1:])
    slopes = np.diff(vals) / h
    ok = np.isfinite(slopes)
    if not ok.any():
        raise DomainError("potential is finite on a single node")
    idx = np.nonzero(ok)[0]
    if not ok.all():
        # a cell with one +inf end carries half a trapezoid of mass
        near = idx[np.clip(np.searchsorted(idx, np.arange(slopes.size)), 0, idx.size - 1)]
        slopes = np.where(ok, slopes, slopes[near])
    return masses, slopes, rho


def moment_measure(psi, alpha: float = 0.0, dual: Grid | None = None) -> Measure:
    """Pushforward of ``gibbs(psi, alpha)`` through the gradient of ``psi`` (1D).

    Every grid cell carries its trapezoid mass to the cell slope of ``psi``.
    When all cells lie on slope plateaus of at least three cells, the result
    is an :class:`AtomicMeasure` with one atom per plateau. Otherwise masses
    are split linearly between the two bracketing nodes of a dual grid (the
    slope range padded by 5%, unless ``dual`` is given).
    """
    f = psi.field if isinstance(psi, Potential) else psi
    if f.grid.dim != 1:
        raise UnsupportedDimensionError("moment_measure is 1D only")
    masses, slopes, _ = cell_pushforward(f, alpha)
    labels = _plateaus(slopes)
    carrying = masses > 0
    if (labels[carrying] >= 0).all():
        locs, wts = [], []
        for k in range(labels.max() + 1):
            sel = (labels == k) & carrying
            if sel.any():
                wts.append(masses[sel].sum())
                locs.append(np.average(slopes[sel], weights=masses[sel]))
        wts = np.asarray(wts) / np.sum(wts)
        return AtomicMeasure.merged(locs, wts)
    if dual is None:
        a, b = float(slopes.min()), float(slopes.max())
        pad = 0.05 * max(b - a, 1e-12)
        dual = Grid(a - pad, b + pad, f.grid.n[0])
    return Density.normalized(_deposit(dual, slopes, masses), mass_tol=1e-6)


def _deposit(dual: Grid, points, masses) -> Field:
    """Linear deposition of point masses onto the nodes of a 1D grid."""
    x = dual.x
    h = dual.h[0]
    if points.min() < x[0] - 1e-12 * h or points.max() > x[-1] + 1e-12 * h:
        raise DomainError("deposited points leave the dual grid")
    t = np.clip((points - x[0]) / h, 0.0, x.size - 1)
    i = np.clip(np.floor(t).astype(int), 0, x.size - 2)
    s = t - i
    node_mass = np.bincount(i, weights=masses * (1 - s), minlength=x.size)
    node_mass += np.bincount(i + 1, weights=masses * s, minlength=x.size)
    # trapezoid weights turn node masses into density values
    w = np.full(x.size, h)
    w[0] = w[-1] = h / 2
    return Field(dual, node_mass / w)


# ---------------------------------------------------------------------------
# statistics


def _norm(grid: Grid) -> np.ndarray:
    return np.sqrt(grid.sq_norm())


def moments(mu: Measure, p: float) -> float:
    """``M_p = int |x|^p dmu``."""
    if p < 0:
        raise DomainError("p must be nonnegative")
    if isinstance(mu, AtomicMeasure):
        r = np.abs(mu.locations) if mu.dim == 1 else np.linalg.norm(mu.locations, axis=1)
        return float(np.dot(mu.weights, r**p))
    return integrate(Field(mu.grid, _norm(mu.grid) ** p * mu.values))


def entropy(rho: Density) -> float:
    """``int rho log rho`` with ``0 log 0 = 0``."""
    r = rho.values
    safe = np.where(r > 0, r, 1.0)
    return integrate(Field(rho.grid, r * np.log(safe)))


def barycenter(mu: Measure):
    """Mean position; a float in 1D and a length-2 array in 2D."""
    if isinstance(mu, AtomicMeasure):
        b = np.average(mu.locations, axis=0, weights=mu.weights)
        return float(b) if mu.dim == 1 else b
    comps = [integrate(Field(mu.grid, c * mu.values)) for c in mu.grid.mesh()]
    return comps[0] if mu.dim == 1 else np.asarray(comps)


def center(mu: Measure) -> Measure:
    """Translate ``mu`` so that its barycenter is the origin."""
    b = barycenter(mu)
    if isinstance(mu, AtomicMeasure):
        return AtomicMeasure(mu.locations - b, mu.weights)
    grid = mu.grid.shifted(-np.atleast_1d(b))
    return Density(Field(grid, mu.values), mu.mass_tol)


def theta(mu: Measure) -> float:
    """``inf over unit directions t of int |<t, y>| dmu(y)``.

    In 2D the infimum is scanned over 720 directions of the half circle and
    polished by a bounded scalar search around the best one.
    """
    if mu.dim == 1:
        return moments(mu, 1.0)
    if isinstance(mu, AtomicMeasure):
        pts, w = mu.locations, mu.weights

        def objective(t):
            return float(np.dot(w, np.abs(np.cos(t) * pts[:, 0] + np.sin(t) * pts[:, 1])))
    else:
        X, Y = mu.grid.mesh()

        def objective(t):
            return integrate(Field(mu.grid, np.abs(np.cos(t) * X + np.sin(t) * Y) * mu.values))
    angles = np.arange(720) * math.pi / 720
    vals = np.array([objective(t) for t in angles])
    k = int(np.argmin(vals))
    step = math.pi / 720
    res = minimize_scalar(objective, bounds=(angles[k] - step, angles[k] + step),
                          method="bounded", options={"xatol": 1e-12})
    return float(min(vals[k], res.fun))


# ---------------------------------------------------------------------------
# L1 distances


def _segment_abs_integral(u0, u1, length):
    """Exact integral of ``|u|`` for ``u`` linear from ``u0`` to ``u1``."""
    same = u0 * u1 >= 0
    a0, a1 = np.abs(u0), np.abs(u1)
    denom = np.where(same, 1.0, a0 + a1)
    cross = length * (u0**2 + u1**2) / (2 * denom)
    return np.where(same, 0.5 * length * (a0 + a1), cross)


def _limits(rho: Density, left, right):
    """Values of a box-supported piecewise-linear density just inside ``[left, right]``."""
    x = rho.grid.x
    a, b = x[0], x[-1]
    inside = (left >= a) & (right <= b)
    v0 = np.where(inside, np.interp(left, x, rho.values), 0.0)
    v1 = np.where(inside, np.interp(right, x, rho.values), 0.0)
    return v0, v1


def _l1_exact_1d(mu: Density, nu: Density) -> float:
    pts = np.union1d(mu.grid.x, nu.grid.x)
    left, right = pts[:-1], pts[1:]
    m0, m1 = _limits(mu, left, right)
    n0, n1 = _limits(nu, left, right)
    return float(_segment_abs_integral(m0 - n0, m1 - n1, right - left).sum())


def _resample_2d(rho: Density, axes) -> np.ndarray:
    from scipy.interpolate import RegularGridInterpolator

    interp = RegularGridInterpolator(rho.grid.axes, rho.values, bounds_error=False,
                                     fill_value=0.0)
    X, Y = np.meshgrid(*axes, indexing="ij")
    return interp(np.stack([X, Y], -1))


def l1_distance(mu: Density, nu: Density) -> float:
    """``int |mu - nu|`` with each density extended by zero outside its box.

    In 1D both densities are treated as piecewise linear on their own grids and
    the integral is exact over the merged breakpoints. In 2D both are
    resampled bilinearly to the finer spacing on the union box.
    """
    if mu.dim != nu.dim:
        raise DomainError("densities of different dimension")
    for a0, a1, b0, b1 in zip(mu.grid.lo, mu.grid.hi, nu.grid.lo, nu.grid.hi):
        if a1 < b0 or b1 < a0:
            raise DomainError("grid boxes do not intersect")
    if mu.dim == 1:
        return _l1_exact_1d(mu, nu)
    axes = []
    for i in range(2):
        lo = min(mu.grid.lo[i], nu.grid.lo[i])
        hi = max(mu.grid.hi[i], nu.grid.hi[i])
        h = min(mu.grid.h[i], nu.grid.h[i])
        axes.append(np.linspace(lo, hi, int(math.ceil((hi - lo) / h - 1e-9)) + 1))
    diff = np.abs(_resample_2d(mu, axes) - _resample_2d(nu, axes))
    return float(np.trapezoid(np.trapezoid(diff, axes[1], axis=1), axes[0]))


class TranslationFit(NamedTuple):
    """Result of :func:`l1_dist_mod_translation`."""

    distance: float
    shift: float
    at_bound: bool


def l1_dist_mod_translation(rho: Density, rho_bar: Density,
                            max_shift: float | None = None) -> TranslationFit:
    """``min over x0 of || rho - rho_bar(. + x0) ||_1`` (1D).

    The shift is restricted to ``|x0| <= max_shift`` (default 10% of the width
    of ``rho``'s box), scanned at the grid step of ``rho_bar`` and refined by
    a bounded scalar search. ``at_bound`` reports an optimum on the boundary.
    """
    if rho.dim != 1 or rho_bar.dim != 1:
        raise UnsupportedDimensionError("l1_dist_mod_translation is 1D only")
    bound = 0.1 * (rho.grid.hi[0] - rho.grid.lo[0]) if max_shift is None else max_shift
    h = rho_bar.grid.h[0]

    def dist(x0):
        shifted = Density(Field(rho_bar.grid.shifted(-x0), rho_bar.values), rho_bar.mass_tol)
        try:
            return l1_distance(rho, shifted)
        except DomainError:
            return 2.0

    m = int(math.floor(bound / h))
    scan = np.arange(-m, m + 1) * h
    if scan.size == 0 or scan[-1] < bound:
        scan = np.concatenate([[-bound], scan, [bound]]) if bound > 0 else np.zeros(1)
    vals = np.array([dist(x0) for x0 in scan])
    k = int(np.argmin(np.round(vals, 15) + 1e-15 * np.abs(scan)))
    best_x, best_d = float(scan[k]), float(vals[k])
    lo = max(-bound, best_x - h)
    hi = min(bound, best_x + h)
    if hi > lo:
        res = minimize_scalar(dist, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10 * max(1.0, bound)})
        if res.fun < best_d:
            best_x, best_d = float(res.x), float(res.fun)
    at_bound = bound > 0 and abs(best_x) >= bound - 1e-9 * max(1.0, bound)
    if at_bound:
        log.warning("translation optimum %.6g hits the shift bound %.6g", best_x, bound)
    return TranslationFit(best_d, best_x, bool(at_bound))
