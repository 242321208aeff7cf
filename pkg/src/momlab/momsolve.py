"""One-dimensional moment-measure solver and the experiments built on it.

The solver looks for a convex ``psi`` whose (regularized) Gibbs density
``rho = exp(-(psi + alpha x^2/2)) / Z`` is pushed onto the target ``mu`` by
``psi'``. It iterates a damped monotone rearrangement on the cell slopes of
``psi``: every grid cell is sent to the target quantile of the mass to its
midpoint, and the slopes move part of the way towards those values.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .convexlab import (Potential, convexify, legendre_transform, second_derivative,
                        strong_convexity_modulus)
from .errors import (ClassMembershipError, DegenerateTargetError, DomainError,
                     NonConvergenceError, ParameterError, PreconditionError,
                     UnsupportedDimensionError)
from .functionals import e_functional, j_functional
from .grid import Field, Grid, integrate
from .measures import (Density, Measure, barycenter, gibbs, l1_dist_mod_translation,
                       moments, theta)
from .transport import quantile_function

__all__ = [
    "SolveReport",
    "RateFit",
    "solve_moment_measure",
    "regularization_path",
    "caffarelli_exponents",
    "regularity_probe",
    "RegularityProbe",
    "p_moment_bound_check",
    "compact_stability",
    "CompactStability",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SolveReport:
    """Outcome of :func:`solve_moment_measure`.

    ``residual`` is ``sum_i m_i |psi'_i - T_i|`` over grid cells, the transport
    cost of the coupling that sends each cell to its target quantile; it bounds
    ``W1`` between the moment measure of ``psi`` and ``mu`` from above.
    ``phi`` is the conjugate of ``psi`` on a grid covering its slopes, and
    ``m2_rho`` the second moment of ``rho``.
    """

    psi: Potential
    rho: Density
    alpha: float
    iterations: int
    residual: float
    j_value: float
    e_value: float
    gap: float
    converged: bool
    phi: Potential
    m2_rho: float
    trace: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class RateFit:
    """Log-log fit of ``dist(alpha)`` along a regularization path.

    ``slope`` is NaN (and ``defined`` False) when fewer than two samples exist.
    ``constant`` is ``dist / alpha^{1/2}`` at the largest alpha and
    ``bound_holds`` whether every sample obeys ``dist <= 4 constant alpha^{1/2}``.
    """

    samples: list
    slope: float
    intercept: float
    r2: float
    constant: float
    bound_holds: bool
    defined: bool


# ---------------------------------------------------------------------------
# solver


def _gauge(psi_vals, x, alpha, h):
    """Shift ``psi`` so that ``int exp(-(psi + alpha x^2/2)) = 1``; returns (psi, rho)."""
    energy = psi_vals + 0.5 * alpha * x**2
    m = energy.min()
    w = np.exp(-(energy - m))
    z = h * (w.sum() - 0.5 * (w[0] + w[-1]))
    shift = math.log(z) - m
    return psi_vals + shift, w / z


def _cells(rho, h):
    masses = 0.5 * h * (rho[:-1] + rho[1:])
    total = masses.sum()
    masses = masses / total
    cum = np.concatenate([[0.0], np.cumsum(masses)])
    return masses, cum[:-1] + 0.5 * masses


def _conjugate_grid(slopes, n, support=None):
    """Grid for the conjugate covering the slopes and the target support.

    The ends of the support sit exactly on nodes, so the conjugate is sampled
    at atoms of the target rather than interpolated across its kinks there.
    """
    smin, smax = float(slopes.min()), float(slopes.max())
    if support is None or not support[1] - support[0] > 1e-9:
        a, b = min(smin, *(support or (smin,))), max(smax, *(support or (smax,)))
        pad = 0.05 * max(b - a, 1e-6)
        return Grid(a - pad, b + pad, n)
    a, b = support
    pad_nodes = max(1, int(round(0.05 * (n - 1))))
    k = max(2, n - 1 - 2 * pad_nodes)
    h = (b - a) / k
    m_lo = max(pad_nodes, int(math.ceil((a - smin) / h)) + 1)
    m_hi = max(pad_nodes, int(math.ceil((smax - b) / h)) + 1)
    return Grid(a - m_lo * h, b + m_hi * h, k + m_lo + m_hi + 1)


def solve_moment_measure(mu: Measure, alpha: float, grid: Grid, damping: float = 0.5,
                         tol: float = 1e-6, max_iter: int = 2000,
                         compute_functionals: bool = True) -> SolveReport:
    """Moment-measure (``alpha = 0``) or regularized representation of a 1D ``mu``.

    Starting from ``psi = x^2/2``, each step computes ``rho = gibbs(psi, alpha)``,
    sends cell ``i`` to ``T_i = F_mu^{-1}(F_rho(mid_i))`` and updates the cell
    slopes ``psi' <- (1 - damping) psi' + damping T``. Slopes stay sorted, so
    ``psi`` stays convex. The additive constant makes the Gibbs weight a
    probability density; for ``alpha = 0`` the result is translated so that
    ``rho`` is centered.

    Raises
    ------
    DegenerateTargetError
        ``alpha == 0`` and ``mu`` is a point mass (``theta(mu) = 0``).
    NonConvergenceError
        The residual grew for 50 consecutive iterations.
    """
    if grid.dim != 1 or mu.dim != 1:
        raise UnsupportedDimensionError("the solver is 1D only")
    if alpha < 0:
        raise ParameterError("alpha must be nonnegative")
    if not 0 < damping <= 1:
        raise ParameterError("damping must lie in (0, 1]")
    h = grid.h[0]
    bc = barycenter(mu)
    if alpha == 0 and theta(mu) <= 1e-12:
        raise DegenerateTargetError(
            "target is a point mass: no moment-measure representation exists")
    if abs(bc) > 2 * h:
        raise PreconditionError(f"target barycenter {bc:.3e} is not within 2h of 0")
    q = quantile_function(mu)
    if q.q0.min() <= grid.lo[0] or q.q1.max() >= grid.hi[0]:
        log.info("target support reaches beyond the grid box; slopes are not clipped")

    x = grid.x
    slopes = 0.5 * (x[:-1] + x[1:])
    trace: list[float] = []
    growth = 0
    converged = False
    prev_j = -math.inf
    it = 0
    for it in range(1, max_iter + 1):
        psi = np.concatenate([[0.0], np.cumsum(slopes) * h]) + 0.5 * x[0] ** 2
        psi, rho = _gauge(psi, x, alpha, h)
        masses, mids = _cells(rho, h)
        target = q(mids)
        residual = float(np.dot(masses, np.abs(slopes - target)))
        trace.append(residual)
        if residual <= tol:
            converged = True
            break
        if len(trace) > 1 and residual > trace[-2]:
            growth += 1
            if growth >= 50:
                raise NonConvergenceError(
                    f"residual grew for 50 consecutive iterations (now {residual:.3e})", trace)
        else:
            growth = 0
        slopes = (1 - damping) * slopes + damping * target
        slopes = np.maximum.accumulate(slopes)  # guard against rounding
        if compute_functionals and it % 25 == 0:
            jv = _j_of_slopes(slopes, x, h, alpha, mu)
            if jv < prev_j - 10 * tol:
                log.warning("J decreased by %.3e at iteration %d", prev_j - jv, it)
            prev_j = jv

    psi = np.concatenate([[0.0], np.cumsum(slopes) * h]) + 0.5 * x[0] ** 2
    psi, rho = _gauge(psi, x, alpha, h)
    psi_field = convexify(Field(grid, psi))
    psi_vals = psi_field.values
    out_grid = grid
    if alpha == 0:
        b = float(integrate(Field(grid, x * rho)))
        if abs(b) > 2 * h:
            # re-register on the translated grid so that rho is centered
            out_grid = grid.shifted(-b)
    psi_pot = Potential(Field(out_grid, psi_vals))
    rho_d = gibbs(psi_pot, alpha)
    phi_grid = _conjugate_grid(slopes, grid.n[0], (float(q.q0.min()), float(q.q1.max())))
    phi = legendre_transform(psi_pot, phi_grid, refine=True)
    j_val = e_val = gap = math.nan
    if compute_functionals:
        j_val, e_val, gap = _functionals(phi, rho_d, mu, alpha, out_grid)
    if not converged:
        log.warning("solver stopped after %d iterations with residual %.3e", it, trace[-1])
    return SolveReport(psi_pot, rho_d, alpha, it, trace[-1], j_val, e_val, gap, converged,
                       phi, moments(rho_d, 2), trace)


def _functionals(phi, rho, mu, alpha, xgrid):
    j_val = j_functional(phi, mu, alpha, xgrid)
    e_val = e_functional(rho, mu, alpha)
    return j_val, e_val, j_val + e_val


def _j_of_slopes(slopes, x, h, alpha, mu):
    """Cheap J monitor: ``-log Z`` of the gauge-free psi plus ``int psi* dmu``."""
    psi = np.concatenate([[0.0], np.cumsum(slopes) * h])
    grid = Grid(x[0], x[-1], x.size)
    pot = Field(grid, psi)
    q = quantile_function(mu)
    phi_grid = _conjugate_grid(slopes, x.size, (float(q.q0.min()), float(q.q1.max())))
    try:
        phi = legendre_transform(pot, phi_grid, refine=True)
        return j_functional(phi, mu, alpha, grid)
    except (DomainError, ArithmeticError):
        return -math.inf


# ---------------------------------------------------------------------------
# regularization path


def regularization_path(mu: Measure, alphas: Sequence[float], grid: Grid,
                        alpha_floor: float = 1e-4, **solver_opts) -> RateFit:
    """Distance of ``rho_alpha`` to the translates of ``rho_0`` along ``alphas``.

    Each sample is ``(alpha, l1_dist_mod_translation(rho_alpha, rho_0))``. The
    slope and intercept come from a least-squares line in log-log scale.
    """
    alphas = [float(a) for a in alphas]
    if not alphas:
        raise ParameterError("need at least one alpha")
    if any(a < alpha_floor for a in alphas):
        raise ParameterError(f"alphas below the resolution floor {alpha_floor}")
    if any(b >= a for a, b in zip(alphas, alphas[1:])):
        alphas = sorted(set(alphas), reverse=True)
    opts = {"compute_functionals": False, **solver_opts}
    base = solve_moment_measure(mu, 0.0, grid, **opts)
    samples = []
    for a in alphas:
        rep = solve_moment_measure(mu, a, grid, **opts)
        samples.append((a, l1_dist_mod_translation(rep.rho, base.rho).distance))
    la = np.log([s[0] for s in samples])
    ld = np.log([max(s[1], 1e-300) for s in samples])
    c_hat = samples[0][1] / math.sqrt(samples[0][0])
    holds = all(d <= 4 * c_hat * math.sqrt(a) + 1e-15 for a, d in samples)
    if len(samples) < 2:
        return RateFit(samples, math.nan, math.nan, math.nan, c_hat, holds, False)
    slope, intercept = np.polyfit(la, ld, 1)
    pred = slope * la + intercept
    ss_res = float(np.sum((ld - pred) ** 2))
    ss_tot = float(np.sum((ld - ld.mean()) ** 2))
    r2 = 1 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(samples, float(slope), float(intercept), r2, c_hat, holds, True)


# ---------------------------------------------------------------------------
# regularity


def caffarelli_exponents(k: int) -> list[tuple[float, float]]:
    """Partial sums ``S_j = sum_{i<=j} (-1)^{i+1} / 2^i`` with the exponents ``1/2^j``.

    Returns ``[(S_1, 1/2), ..., (S_k, 1/2^k)]``; ``S_j = (1 - (-1/2)^j) / 3``.
    """
    if k < 1:
        raise ParameterError("k must be at least 1")
    out = []
    s = 0.0
    for i in range(1, k + 1):
        s += (-1) ** (i + 1) / 2.0**i
        out.append((s, 1 / 2.0**i))
    return out


@dataclass(frozen=True)
class RegularityProbe:
    """Measured strong-convexity modulus of the solved potential and two thresholds."""

    modulus: float
    cube_root_threshold: float
    inverse_threshold: float
    passes_cube_root: bool
    passes_inverse: bool
    residual: float


def regularity_probe(V, Lambda: float, grid: Optional[Grid] = None,
                     window: float = 0.8, curvature_tol: float = 1e-6,
                     **solver_opts) -> RegularityProbe:
    """Solve for the moment-measure potential of ``mu = gibbs(V)`` and measure its convexity.

    ``V`` is a Field or Potential; only ``V'' <= Lambda`` is required, not
    convexity.

    The smallest second derivative of the solved potential ``psi`` over the
    central ``window`` of the mass of ``rho = gibbs(psi)`` is compared against
    ``Lambda^{-1/3}`` and ``Lambda^{-1}``.

    Raises
    ------
    ClassMembershipError
        If ``V'' > Lambda`` somewhere on the support window.
    """
    vf = V.field if isinstance(V, Potential) else V
    if vf.grid.dim != 1 or not vf.finite.all():
        raise DomainError("V must be a finite 1D field")
    x = vf.grid.x
    d2 = np.empty_like(x)
    d2[1:-1] = (vf.values[2:] - 2 * vf.values[1:-1] + vf.values[:-2]) / vf.grid.h[0] ** 2
    d2[0], d2[-1] = d2[1], d2[-2]
    n = d2.size
    cut = int(math.ceil(0.1 * (n - 1)))
    inner = d2[cut:n - cut]
    if inner.max() > Lambda + curvature_tol:
        raise ClassMembershipError(
            f"max curvature {inner.max():.6g} exceeds Lambda={Lambda}")
    mu = gibbs(vf)
    grid = vf.grid if grid is None else grid
    rep = solve_moment_measure(mu, 0.0, grid, **{"compute_functionals": False, **solver_opts})
    # the Gibbs-side potential psi carries the regularity; read its curvature
    # over the central part of rho's mass
    psi_d2 = second_derivative(rep.psi).values
    xs = rep.psi.grid.x
    rq = quantile_function(rep.rho)
    sel = (xs >= rq((1 - window) / 2)) & (xs <= rq((1 + window) / 2))
    modulus = float(np.min(psi_d2[sel]))
    c1 = Lambda ** (-1 / 3)
    c2 = 1 / Lambda
    return RegularityProbe(modulus, c1, c2, modulus >= c1 - 1e-3, modulus >= c2 - 1e-3,
                           rep.residual)


def p_moment_bound_check(psi: Potential, lam: float, k_max: int,
                         rel_tol: float = 1e-6) -> list[tuple[int, float, float, bool]]:
    """Moments ``V(2k) = int |x - x*|^{2k} e^{-psi}`` against the recursion bound (1D).

    ``psi`` is shifted so that ``V(0) = 1`` and ``x*`` is its minimizer, located
    on the grid and refined by the vertex of the parabola through the three
    nearest nodes. Rows are ``(k, V(2k), (2k-1)/lam * V(2k-2), holds)``.

    Raises
    ------
    PreconditionError
        If the strong-convexity modulus of ``psi`` (away from a 10% margin at
        each end of the box) is below ``lam``.
    """
    if psi.grid.dim != 1:
        raise UnsupportedDimensionError("p_moment_bound_check is 1D only")
    if k_max < 0:
        raise ParameterError("k_max must be nonnegative")
    mod = strong_convexity_modulus(psi)
    if mod < lam * (1 - 1e-6):
        raise PreconditionError(f"modulus {mod:.6g} is below lambda={lam}")
    rho = gibbs(psi)
    x = psi.grid.x
    vals = psi.values
    i = int(np.argmin(vals))
    x_star = x[i]
    if 0 < i < x.size - 1:
        c = vals[i + 1] - 2 * vals[i] + vals[i - 1]
        if c > 0:
            x_star += 0.5 * psi.grid.h[0] * (vals[i - 1] - vals[i + 1]) / c
    d = 1
    rows = []
    prev = 1.0
    for k in range(1, k_max + 1):
        vk = integrate(Field(psi.grid, np.abs(x - x_star) ** (2 * k) * rho.values))
        bound = (d + 2 * k - 2) / lam * prev
        rows.append((k, vk, bound, vk <= bound * (1 + rel_tol) + 1e-12))
        prev = vk
    return rows


def gaussian_moment_bound(k: int, lam: float, d: int = 1) -> float:
    """Closed form ``lam^{-k} 2^k Gamma(d/2 + k) / Gamma(d/2)`` of the iterated bound."""
    return math.exp(-k * math.log(lam) + k * math.log(2) + gammaln(d / 2 + k) - gammaln(d / 2))


# ---------------------------------------------------------------------------
# compact-domain stability


@dataclass(frozen=True)
class CompactStability:
    """Stability of solved Gibbs densities against the Wasserstein distance of targets."""

    l1_mod_translation: float
    shift: float
    w1: float
    ratio: float
    potential_distance: float


def compact_stability(mu: Measure, nu: Measure, grid: Grid, **solver_opts) -> CompactStability:
    """Solve both targets and compare ``||rho_mu - rho_nu(. + x0)||_1`` with ``W1(mu, nu)``.

    ``potential_distance`` is the L1(``mu``) distance between the two target
    side potentials modulo affine functions, a surrogate for the distance to
    the set of optimal potentials. The residual tolerance defaults to
    ``1e-5``: for compactly supported targets the unregularized iteration
    drifts slowly along translations once the residual is near ``1e-6``.
    """
    from .transport import wasserstein_1d

    opts = {"compute_functionals": False, "tol": 1e-5, **solver_opts}
    a = solve_moment_measure(mu, 0.0, grid, **opts)
    b = solve_moment_measure(nu, 0.0, grid, **opts)
    fit = l1_dist_mod_translation(a.rho, b.rho)
    w1 = wasserstein_1d(mu, nu, 1)
    ratio = fit.distance / math.sqrt(w1) if w1 > 0 else math.inf
    pot = _potential_gap(a.phi, b.phi, mu)
    return CompactStability(fit.distance, fit.shift, w1, ratio, pot)


def _potential_gap(phi_a: Potential, phi_b: Potential, mu: Measure) -> float:
    lo = max(phi_a.grid.lo[0], phi_b.grid.lo[0])
    hi = min(phi_a.grid.hi[0], phi_b.grid.hi[0])
    if not lo < hi:
        return math.nan
    y = np.linspace(lo, hi, 2001)
    diff = np.interp(y, phi_a.grid.x, phi_a.values) - np.interp(y, phi_b.grid.x, phi_b.values)
    if isinstance(mu, Density):
        w = np.interp(y, mu.grid.x, mu.values, left=0.0, right=0.0)
    else:
        w = np.ones_like(y)
    w = w / np.trapezoid(w, y) if np.trapezoid(w, y) > 0 else np.full_like(y, 1 / (hi - lo))
    A = np.stack([y, np.ones_like(y)], 1)
    coef, *_ = np.linalg.lstsq(A * np.sqrt(w)[:, None], diff * np.sqrt(w), rcond=None)
    return float(np.trapezoid(np.abs(diff - A @ coef) * w, y))
