"""Large-n limit energies on measure pairs.

Three scaling regimes ship, matching how the interaction length compares to
the system and particle spacings:

* ``FixedAlpha(alpha)``: nonlocal double integrals of alpha v(alpha (x-y))
  and alpha w(alpha (x-y)).  On empirical pairs this reduces exactly to the
  discrete energy (diagonal excluded); on densities it is evaluated with
  tensor Gauss panels, with the logarithmic diagonal singularity of v handled
  by a reduction to 1-D graded integrals on the diagonal cells.
* ``Intermediate``: local Dirichlet-type energy (int v) * int (rho+^2 +
  rho-^2) + (int w) * int 2 rho+ rho-, exact for piecewise densities.
* ``Scaling(alpha)``: int psi(rho+(x), rho-(x)) dx through a tabulated cell
  energy density.

Every regime adds the loading term gamma^2 [int x dmu+ + int (1-x) dmu-].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from . import potentials
from .cell import PsiTable
from .energy import Configuration, ModelParams, energy
from .measures import DensityMeasure, EmpiricalMeasure, MeasurePair


@dataclass(frozen=True)
class FixedAlpha:
    alpha: float

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class Intermediate:
    pass


@dataclass(frozen=True)
class Scaling:
    alpha: float

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")


LimitRegime = FixedAlpha | Intermediate | Scaling

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(16)


def _loading_term(pair: MeasurePair, gamma: float) -> float:
    if gamma == 0.0:
        return 0.0

    def first_moment(mu, flip: bool) -> float:
        if isinstance(mu, EmpiricalMeasure):
            xs = 1.0 - mu.atoms if flip else mu.atoms
            return mu.weight * float(np.sum(xs))
        mids = 0.5 * (mu.breakpoints[1:] + mu.breakpoints[:-1])
        xs = 1.0 - mids if flip else mids
        return float(np.sum(mu.cell_masses * xs))

    return gamma**2 * (first_moment(pair.plus, False)
                       + first_moment(pair.minus, True))


def _panel_integral(kernel, ax, bx, ay, by) -> float:
    """16x16 tensor Gauss panel of kernel(x - y) over [ax,bx] x [ay,by]."""
    hx, hy = 0.5 * (bx - ax), 0.5 * (by - ay)
    if hx <= 0.0 or hy <= 0.0:
        return 0.0
    xs = 0.5 * (ax + bx) + hx * _GAUSS_X
    ys = 0.5 * (ay + by) + hy * _GAUSS_X
    vals = kernel(xs[:, None] - ys[None, :])
    return hx * hy * float(_GAUSS_W @ vals @ _GAUSS_W)


def _diagonal_cell_integral(kernel, a, b) -> float:
    """Integral of kernel(x - y) over the square [a,b]^2 via the distance
    reduction 2 int_0^L (L - u) kernel(u) du with a log-graded first panel."""
    L = b - a
    if L <= 0.0:
        return 0.0

    def f(u):
        return (L - u) * kernel(u)

    total, _ = quad(f, 0.0, L, epsabs=1e-12, epsrel=1e-10, limit=200,
                    points=[L * 1e-8, L * 1e-4, L * 1e-2])
    return 2.0 * total


def _double_integral_density(kernel, rho_a: DensityMeasure,
                             rho_b: DensityMeasure, singular: bool) -> float:
    """iint kernel(x - y) rho_a(x) rho_b(y) dx dy on piecewise densities."""
    edges = np.unique(np.concatenate([rho_a.breakpoints, rho_b.breakpoints,
                                      [0.0, 1.0]]))
    va = np.asarray([rho_a.values[min(np.searchsorted(rho_a.breakpoints, e,
                                                      side="right") - 1,
                                      rho_a.values.size - 1)]
                     if rho_a.breakpoints[0] <= e < rho_a.breakpoints[-1] else 0.0
                     for e in edges[:-1]])
    vb = np.asarray([rho_b.values[min(np.searchsorted(rho_b.breakpoints, e,
                                                      side="right") - 1,
                                      rho_b.values.size - 1)]
                     if rho_b.breakpoints[0] <= e < rho_b.breakpoints[-1] else 0.0
                     for e in edges[:-1]])
    total = 0.0
    k = edges.size - 1
    for i in range(k):
        for j in range(k):
            ca, cb = va[i], vb[j]
            if ca == 0.0 or cb == 0.0:
                continue
            if singular and i == j:
                cell = _diagonal_cell_integral(kernel, edges[i], edges[i + 1])
            elif singular and abs(i - j) == 1:
                # corner-touching cells: grade panels toward the shared corner
                cell = _graded_adjacent_integral(kernel, edges, i, j)
            else:
                cell = _panel_integral(kernel, edges[i], edges[i + 1],
                                       edges[j], edges[j + 1])
            total += ca * cb * cell
    return total


def _graded_adjacent_integral(kernel, edges, i, j) -> float:
    """Cells sharing one corner with the diagonal: geometric x-strips toward
    the shared corner keep the Gauss panels clear of the kernel singularity."""
    ax, bx = edges[i], edges[i + 1]
    ay, by = edges[j], edges[j + 1]
    total = 0.0
    if j == i + 1:          # corner at (bx, ay), x approaches from the left
        widths = np.geomspace((bx - ax) * 1e-7, bx - ax, 12)
        lo = ax
        for wdt in reversed(widths[:-1]):
            total += _panel_integral(kernel, lo, bx - wdt, ay, by)
            lo = bx - wdt
        total += _panel_integral(kernel, lo, bx, ay, by)
    else:                   # corner at (ax, by), x approaches from the right
        widths = np.geomspace((bx - ax) * 1e-7, bx - ax, 12)
        hi = bx
        for wdt in reversed(widths[:-1]):
            total += _panel_integral(kernel, ax + wdt, hi, ay, by)
            hi = ax + wdt
        total += _panel_integral(kernel, ax, hi, ay, by)
    return total


def _interaction_fixed_alpha(pair: MeasurePair, alpha: float, a: float) -> float:
    def kv(r):
        return alpha * potentials.v(alpha * r)

    def kw(r):
        return alpha * potentials.w(alpha * r, a)

    plus, minus = pair.plus, pair.minus
    same = 0.0
    for mu in (plus, minus):
        if mu.total_mass == 0.0:
            continue
        same += 0.5 * _double_integral_density(kv, mu, mu, singular=True)
    cross = 0.0
    if plus.total_mass > 0.0 and minus.total_mass > 0.0:
        cross = _double_integral_density(kw, plus, minus, singular=False)
    return same + cross


def limit_energy(pair: MeasurePair, regime: LimitRegime, gamma: float = 0.0,
                 a: float = 1.0, psi: PsiTable | None = None) -> float:
    """Limit energy of a measure pair in the requested scaling regime.

    Density-only regimes return +inf on empirical input (atoms carry no
    square-integrable density).  The scaling regime requires a tabulated
    psi covering the density range.
    """
    empirical = (isinstance(pair.plus, EmpiricalMeasure)
                 or isinstance(pair.minus, EmpiricalMeasure))
    if isinstance(regime, FixedAlpha):
        if empirical:
            if not (isinstance(pair.plus, EmpiricalMeasure)
                    and isinstance(pair.minus, EmpiricalMeasure)):
                raise ValueError("mixed empirical/density pairs are not supported")
            c = Configuration(pair.plus.atoms, pair.minus.atoms)
            p = ModelParams(c.n_plus, c.n_minus, regime.alpha, gamma, a)
            return energy(c, p)
        return (_interaction_fixed_alpha(pair, regime.alpha, a)
                + _loading_term(pair, gamma))
    if isinstance(regime, Intermediate):
        if empirical:
            return math.inf
        intv = potentials.integral_0_inf("V")
        intw = potentials.integral_0_inf("W", a)
        edges = np.unique(np.concatenate([pair.plus.breakpoints,
                                          pair.minus.breakpoints, [0.0, 1.0]]))
        mids = 0.5 * (edges[1:] + edges[:-1])
        widths = np.diff(edges)
        rp = np.asarray([_density_at(pair.plus, xm) for xm in mids])
        rm = np.asarray([_density_at(pair.minus, xm) for xm in mids])
        val = (intv * float(np.sum(widths * (rp**2 + rm**2)))
               + intw * float(np.sum(widths * 2.0 * rp * rm)))
        return val + _loading_term(pair, gamma)
    if isinstance(regime, Scaling):
        if empirical:
            return math.inf
        if psi is None:
            raise ValueError("the scaling regime needs a tabulated cell density")
        edges = np.unique(np.concatenate([pair.plus.breakpoints,
                                          pair.minus.breakpoints, [0.0, 1.0]]))
        mids = 0.5 * (edges[1:] + edges[:-1])
        widths = np.diff(edges)
        total = 0.0
        for xm, wdt in zip(mids, widths):
            if wdt <= 0.0:
                continue
            total += wdt * psi.interpolate(_density_at(pair.plus, xm),
                                           _density_at(pair.minus, xm))
        return total + _loading_term(pair, gamma)
    raise TypeError(f"unknown regime {regime!r}")


def _density_at(mu: DensityMeasure, x: float) -> float:
    idx = np.searchsorted(mu.breakpoints, x, side="right") - 1
    if idx < 0 or idx >= mu.values.size:
        return 0.0
    return float(mu.values[idx])


def energy_along_mixing_curve(t: float, psi: PsiTable) -> float:
    """(1 - t) psi(1, 0) + t psi(1/2, 1/2); strictly decreasing in t."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    psep = psi.interpolate(1.0, 0.0)
    pmix = psi.interpolate(0.5, 0.5)
    return (1.0 - t) * psep + t * pmix


def slope_lower_bound_at_sep(psi: PsiTable, t_list) -> list[float]:
    """Difference quotients [E(rho_0) - E(rho_t)] / bW(rho_0, rho_t).

    With the closed-form distance bW = (t/2) sqrt(t/3) these grow like
    t^{-1/2}, witnessing the unbounded descent slope at the separated state.
    """
    drop = psi.interpolate(1.0, 0.0) - psi.interpolate(0.5, 0.5)
    out = []
    for t in t_list:
        t = float(t)
        if not 0.0 < t <= 0.25:
            raise ValueError("quotient parameters must lie in (0, 1/4]")
        dist = 0.5 * math.sqrt(t / 3.0) * t
        out.append(drop * t / dist)
    return out
