"""Measures on [0, 1] and the two-species transport metric.

A measure is either empirical (equal-weight atoms) or a piecewise-constant
density.  The quadratic Wasserstein distance between probability measures is
computed exactly from quantile functions: both quantiles are piecewise affine
in the mass coordinate, so the squared distance is a sum of closed-form
segment integrals (no sampling).  The two-species metric combines per-species
distances with a mass-mismatch penalty:

    bW^2(mu, nu) = (s+ ^ i+) W^2(mu+/s+, nu+/i+) + |s+ - i+|
                 + (s- ^ i-) W^2(mu-/s-, nu-/i-) + |s- - i-|,

with the W^2 term dropped for a species whose mass vanishes on either side.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .energy import Configuration

_MASS_TOL = 1e-12


class MeasureOnUnit:
    """Common interface: total mass, and unit-mass quantile segments."""

    total_mass: float

    def quantile_segments(self) -> np.ndarray:
        """Rows (s0, s1, x0, x1): on s in [s0, s1] the normalized quantile is
        the affine map s -> x0 + (x1 - x0) (s - s0) / (s1 - s0)."""
        raise NotImplementedError

    def quantile(self, s):
        """Normalized quantile function evaluated at mass coordinates ``s``."""
        segs = self.quantile_segments()
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        s0, s1, x0, x1 = segs.T
        idx = np.clip(np.searchsorted(s1, s, side="left"), 0, len(segs) - 1)
        a0, a1, b0, b1 = s0[idx], s1[idx], x0[idx], x1[idx]
        with np.errstate(invalid="ignore"):
            frac = np.where(a1 > a0, (s - a0) / np.where(a1 > a0, a1 - a0, 1.0), 1.0)
        out = b0 + (b1 - b0) * np.clip(frac, 0.0, 1.0)
        return out if out.ndim else float(out)

    def cdf(self, x):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_dict(d: dict) -> "MeasureOnUnit":
        if d["representation"] == "empirical":
            return EmpiricalMeasure(np.asarray(d["atoms"], dtype=float),
                                    float(d["weight"]))
        if d["representation"] == "piecewise_density":
            return DensityMeasure(np.asarray(d["breakpoints"], dtype=float),
                                  np.asarray(d["values"], dtype=float))
        raise ValueError(f"unknown measure representation {d['representation']!r}")


@dataclass(frozen=True)
class EmpiricalMeasure(MeasureOnUnit):
    """Equal-weight atoms at sorted positions in [0, 1]."""

    atoms: np.ndarray
    weight: float

    def __post_init__(self):
        atoms = np.sort(np.asarray(self.atoms, dtype=float))
        if atoms.size and (atoms[0] < -1e-12 or atoms[-1] > 1.0 + 1e-12):
            raise ValueError("atoms must lie in [0, 1]")
        atoms = np.clip(atoms, 0.0, 1.0)
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        if self.weight < 0.0:
            raise ValueError("atom weight must be non-negative")

    @property
    def total_mass(self) -> float:
        return self.weight * self.atoms.size

    def quantile_segments(self) -> np.ndarray:
        m = self.atoms.size
        if m == 0 or self.total_mass == 0.0:
            raise ValueError("cannot form the quantile of a zero-mass measure")
        # mass interval ((i-1)/m, i/m] maps to atom i (right-closed convention)
        s = np.arange(m + 1, dtype=float) / m
        return np.column_stack([s[:-1], s[1:], self.atoms, self.atoms])

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.searchsorted(self.atoms, x, side="right") / max(self.atoms.size, 1)
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"representation": "empirical",
                "atoms": [float(a) for a in self.atoms],
                "weight": self.weight,
                "total_mass": self.total_mass}


@dataclass(frozen=True)
class DensityMeasure(MeasureOnUnit):
    """Piecewise-constant density: values[k] on (breakpoints[k], breakpoints[k+1])."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.ndim != 1 or vals.ndim != 1 or bp.size != vals.size + 1:
            raise ValueError("need len(breakpoints) == len(values) + 1")
        if np.any(np.diff(bp) < 0.0):
            raise ValueError("breakpoints must be non-decreasing")
        if bp[0] < -1e-12 or bp[-1] > 1.0 + 1e-12:
            raise ValueError("breakpoints must lie in [0, 1]")
        if np.any(vals < 0.0):
            raise ValueError("density values must be non-negative")
        bp = np.clip(bp, 0.0, 1.0)
        bp.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @property
    def cell_masses(self) -> np.ndarray:
        return np.diff(self.breakpoints) * self.values

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.cell_masses))

    def quantile_segments(self) -> np.ndarray:
        tot = self.total_mass
        if tot <= 0.0:
            raise ValueError("cannot form the quantile of a zero-mass measure")
        masses = self.cell_masses / tot
        segs = []
        s = 0.0
        for k, mk in enumerate(masses):
            if mk <= 0.0:
                continue
            segs.append((s, s + mk, self.breakpoints[k], self.breakpoints[k + 1]))
            s += mk
        segs[-1] = (segs[-1][0], 1.0, segs[-1][2], segs[-1][3])
        return np.asarray(segs, dtype=float)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.cell_masses)])
        idx = np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1,
                      0, self.values.size - 1)
        out = cum[idx] + self.values[idx] * (x - self.breakpoints[idx])
        out = np.clip(out, 0.0, cum[-1])
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"representation": "piecewise_density",
                "breakpoints": [float(b) for b in self.breakpoints],
                "values": [float(v) for v in self.values],
                "total_mass": self.total_mass}


@dataclass(frozen=True)
class MeasurePair:
    """Positive/negative species measures with combined unit mass."""

    plus: MeasureOnUnit
    minus: MeasureOnUnit

    def __post_init__(self):
        tot = self.plus.total_mass + self.minus.total_mass
        if abs(tot - 1.0) > 1e-9:
            raise ValueError(f"species masses must sum to 1, got {tot}")

    def to_dict(self) -> dict:
        return {"plus": self.plus.to_dict(), "minus": self.minus.to_dict()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @staticmethod
    def from_json(text: str) -> "MeasurePair":
        d = json.loads(text)
        return MeasurePair(MeasureOnUnit.from_dict(d["plus"]),
                           MeasureOnUnit.from_dict(d["minus"]))


def from_configuration(c: Configuration) -> MeasurePair:
    """Empirical pair with atoms at the wall positions, weight 1/n each."""
    n = c.n
    if n < 1:
        raise ValueError("need at least one particle")
    return MeasurePair(EmpiricalMeasure(c.positions_plus, 1.0 / n),
                       EmpiricalMeasure(c.positions_minus, 1.0 / n))


def _w2_squared(mu: MeasureOnUnit, nu: MeasureOnUnit) -> float:
    """Exact integral of (Q_mu - Q_nu)^2 over the merged mass partition."""
    sa = mu.quantile_segments()
    sb = nu.quantile_segments()
    knots = np.unique(np.concatenate([sa[:, 0], sa[:, 1], sb[:, 0], sb[:, 1]]))
    knots = knots[(knots > 0.0) & (knots < 1.0)]
    edges = np.concatenate([[0.0], knots, [1.0]])

    def affine_on(segs, lo):
        # segment containing [lo, hi); right-closed intervals make the left
        # edge the deciding point
        idx = np.searchsorted(segs[:, 1], lo, side="right")
        idx = min(idx, len(segs) - 1)
        s0, s1, x0, x1 = segs[idx]
        if s1 > s0:
            slope = (x1 - x0) / (s1 - s0)
        else:
            slope = 0.0
        return x0 - slope * s0, slope

    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        pa, qa = affine_on(sa, lo)
        pb, qb = affine_on(sb, lo)
        dp, dq = pa - pb, qa - qb
        # integral of (dp + dq s)^2 over [lo, hi]
        total += (dp * dp * (hi - lo)
                  + dp * dq * (hi * hi - lo * lo)
                  + dq * dq * (hi**3 - lo**3) / 3.0)
    return max(total, 0.0)


def wasserstein2(mu: MeasureOnUnit, nu: MeasureOnUnit) -> float:
    """Quadratic Wasserstein distance between probability measures on [0, 1]."""
    if abs(mu.total_mass - 1.0) > _MASS_TOL or abs(nu.total_mass - 1.0) > _MASS_TOL:
        raise ValueError("wasserstein2 requires unit-mass measures; use big_w "
                         "for general species masses")
    return math.sqrt(_w2_squared(mu, nu))


def _normalized(mu: MeasureOnUnit) -> MeasureOnUnit:
    mass = mu.total_mass
    if isinstance(mu, EmpiricalMeasure):
        return EmpiricalMeasure(mu.atoms, mu.weight / mass)
    return DensityMeasure(mu.breakpoints, mu.values / mass)


def big_w(pa: MeasurePair, pb: MeasurePair) -> float:
    """Two-species transport distance with mass-mismatch penalty."""
    total = 0.0
    for mu, nu in ((pa.plus, pb.plus), (pa.minus, pb.minus)):
        s, i = mu.total_mass, nu.total_mass
        total += abs(s - i)
        if min(s, i) > 0.0:
            total += min(s, i) * _w2_squared(_normalized(mu), _normalized(nu))
    return math.sqrt(total)


def mixing_curve(t: float) -> MeasurePair:
    """Interpolating pair between the separated (t=0) and mixed (t=1) states.

    The positive density is 1 on (0, (1-t)/2), 1/2 on the symmetric middle
    band, 0 beyond; the negative density is its mirror complement.  Species
    masses are (1/2, 1/2) for every t.
    """
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"curve parameter must lie in [0, 1], got {t}")
    lo, hi = 0.5 * (1.0 - t), 0.5 * (1.0 + t)
    bp = np.array([0.0, lo, hi, 1.0])
    plus = DensityMeasure(bp, np.array([1.0, 0.5, 0.0]))
    minus = DensityMeasure(bp, np.array([0.0, 0.5, 1.0]))
    return MeasurePair(plus, minus)


def rho_sep() -> MeasurePair:
    """Separated continuum state: species blocks on (0, 1/2) and (1/2, 1)."""
    return mixing_curve(0.0)


def rho_mix() -> MeasurePair:
    """Mixed continuum state: both species uniform with density 1/2."""
    return mixing_curve(1.0)


def mixing_distance(t: float, s: float) -> float:
    """Closed-form bW between mixing-curve states, 0 <= s <= t <= 1."""
    if not 0.0 <= s <= t <= 1.0:
        raise ValueError("need 0 <= s <= t <= 1")
    return 0.5 * math.sqrt((t + 2.0 * s) / 3.0) * (t - s)
