"""Uniform tensor grids in one and two dimensions, and fields living on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.integrate import trapezoid

from .errors import DomainError, ParameterError, RangeError

__all__ = ["Grid", "Field", "integrate", "interp", "interp_many", "MAX_NODES"]

#: Default cap on the total number of nodes of a grid.
MAX_NODES = 10**7

Point = Union[float, Sequence[float], np.ndarray]


def _as_tuple(value, dtype):
    if np.ndim(value) == 0:
        return (dtype(value),)
    return tuple(dtype(v) for v in value)


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the box ``[lo, hi]`` with ``n`` nodes per axis.

    Scalars build a 1D grid, length-2 sequences a 2D tensor grid.

    Examples
    --------
    >>> g = Grid(0.0, 1.0, 11)
    >>> g.h
    (0.1,)
    """

    lo: tuple
    hi: tuple
    n: tuple
    max_nodes: int = field(default=MAX_NODES, compare=False, repr=False)

    def __init__(self, lo, hi, n, max_nodes: int = MAX_NODES):
        lo_t = _as_tuple(lo, float)
        hi_t = _as_tuple(hi, float)
        n_t = _as_tuple(n, int)
        if not (len(lo_t) == len(hi_t) == len(n_t)):
            raise ParameterError("lo, hi and n must have the same length")
        if len(lo_t) not in (1, 2):
            raise ParameterError(f"only dimensions 1 and 2 are supported, got {len(lo_t)}")
        for a, b, m in zip(lo_t, hi_t, n_t):
            if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
                raise ParameterError(f"need finite lo < hi per axis, got [{a}, {b}]")
            if m < 3:
                raise ParameterError(f"need at least 3 nodes per axis, got {m}")
        if int(np.prod(n_t)) > max_nodes:
            raise ParameterError(f"{int(np.prod(n_t))} nodes exceeds the cap of {max_nodes}")
        object.__setattr__(self, "lo", lo_t)
        object.__setattr__(self, "hi", hi_t)
        object.__setattr__(self, "n", n_t)
        object.__setattr__(self, "max_nodes", int(max_nodes))

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    @property
    def h(self) -> tuple:
        return tuple((b - a) / (m - 1) for a, b, m in zip(self.lo, self.hi, self.n))

    @property
    def axes(self) -> tuple:
        return tuple(np.linspace(a, b, m) for a, b, m in zip(self.lo, self.hi, self.n))

    @property
    def x(self) -> np.ndarray:
        """Node coordinates of a 1D grid."""
        if self.dim != 1:
            raise DomainError("Grid.x is only defined for 1D grids; use mesh()")
        return self.axes[0]

    def mesh(self) -> tuple:
        """Coordinate arrays of shape ``self.shape`` (``indexing='ij'``)."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def sq_norm(self) -> np.ndarray:
        """``|x|^2`` evaluated at every node."""
        return sum(c**2 for c in self.mesh())

    def contains(self, point: Point, tol: float = 0.0) -> bool:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if p.shape != (self.dim,):
            return False
        return all(a - tol <= c <= b + tol for a, b, c in zip(self.lo, self.hi, p))

    def shifted(self, offset: Point) -> "Grid":
        """Same grid translated by ``offset``."""
        off = np.broadcast_to(np.asarray(offset, dtype=float), (self.dim,))
        lo = tuple(a + o for a, o in zip(self.lo, off))
        hi = tuple(b + o for b, o in zip(self.hi, off))
        return Grid(lo if self.dim > 1 else lo[0], hi if self.dim > 1 else hi[0],
                    self.n if self.dim > 1 else self.n[0], self.max_nodes)

    def field(self, func: Callable) -> "Field":
        """Sample ``func`` at the nodes (``func(x)`` in 1D, ``func(x, y)`` in 2D)."""
        if self.dim == 1:
            values = func(self.x)
        else:
            values = func(*self.mesh())
        return Field(self, np.broadcast_to(np.asarray(values, dtype=float), self.shape))

    def constant(self, value: float) -> "Field":
        return Field(self, np.full(self.shape, float(value)))


@dataclass(frozen=True, eq=False)
class Field:
    """Real values on the nodes of a grid; ``+inf`` marks nodes outside the domain.

    The value array is copied and made read-only on construction.
    """

    grid: Grid
    values: np.ndarray
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != self.grid.shape:
            raise DomainError(f"values of shape {vals.shape} do not match grid {self.grid.shape}")
        if np.isnan(vals).any():
            raise DomainError("field values contain NaN")
        if np.isneginf(vals).any():
            raise DomainError("field values contain -inf")
        if not np.isfinite(vals).any():
            raise DomainError("field has no finite value")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def finite(self) -> np.ndarray:
        """Boolean mask of the effective domain."""
        return np.isfinite(self.values)

    def with_values(self, values, **meta) -> "Field":
        return Field(self.grid, values, meta)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other, self.grid))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other, self.grid))

    def __mul__(self, other):
        return self.with_values(self.values * _vals(other, self.grid))

    __rmul__ = __mul__

    def __neg__(self):
        # -inf is forbidden, so negation is only defined on finite fields
        if not self.finite.all():
            raise DomainError("cannot negate a field with +inf nodes")
        return self.with_values(-self.values)


def _vals(other, grid):
    if isinstance(other, Field):
        if other.grid != grid:
            raise DomainError("fields live on different grids")
        return other.values
    return np.asarray(other, dtype=float)


def integrate(f: Field) -> float:
    """Trapezoid-rule integral of ``f`` over its grid box.

    ``+inf`` nodes are not allowed; exponentiate first so they become zero.
    """
    vals = f.values
    if not np.isfinite(vals).all():
        raise DomainError("integrate requires a finite field; exponentiate before integrating")
    out = vals
    for axis_h in reversed(f.grid.h):
        out = trapezoid(out, dx=axis_h, axis=-1)
    result = float(out)
    if not np.isfinite(result):
        raise RangeError("integral overflowed")
    return result


def interp(f: Field, x: Point) -> float:
    """Piecewise-linear (1D) or bilinear (2D) interpolation of ``f`` at ``x``."""
    g = f.grid
    if not g.contains(x, tol=1e-12 * max(1.0, *map(abs, g.lo + g.hi))):
        raise DomainError(f"point {x} lies outside the grid box")
    p = np.atleast_1d(np.asarray(x, dtype=float))
    idx, wts = [], []
    for a, h, m, c in zip(g.lo, g.h, g.n, p):
        t = (c - a) / h
        i = int(np.clip(np.floor(t), 0, m - 2))
        s = float(np.clip(t - i, 0.0, 1.0))
        idx.append(i)
        wts.append(s)
    if g.dim == 1:
        i, s = idx[0], wts[0]
        lo_v, hi_v = f.values[i], f.values[i + 1]
        if s == 0.0:
            return float(lo_v)
        if s == 1.0:
            return float(hi_v)
        return float((1 - s) * lo_v + s * hi_v)
    (i, j), (s, t) = idx, wts
    total = 0.0
    for di, wi in ((0, 1 - s), (1, s)):
        for dj, wj in ((0, 1 - t), (1, t)):
            w = wi * wj
            if w != 0.0:
                total += w * f.values[i + di, j + dj]
    return float(total)


def interp_many(f: Field, x) -> np.ndarray:
    """Vectorized 1D interpolation; points outside the box raise ``DomainError``."""
    if f.grid.dim != 1:
        raise DomainError("interp_many is 1D only")
    x = np.asarray(x, dtype=float)
    a, b = f.grid.lo[0], f.grid.hi[0]
    slack = 1e-12 * max(1.0, abs(a), abs(b))
    if x.size and (x.min() < a - slack or x.max() > b + slack):
        raise DomainError("points outside the grid box")
    return np.interp(x, f.grid.x, f.values)
