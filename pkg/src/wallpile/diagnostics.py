"""Separation and mixing diagnostics for pile-up states.

These are the post-processing statistics of the long-time study: the scaled
inter-species gap, the scaled minimum same-sign spacing away from the
barriers, interleaving-pattern classifiers, Wasserstein decay rates between
resolutions, the piecewise-constant discrete density, and the lattice-sum
criterion certifying fully separated local minimisers.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass

import numpy as np

from . import potentials
from .energy import Configuration, ModelParams

ENDPOINT_TOL = 1e-9


def d_plus_minus(c: Configuration, p: ModelParams) -> float:
    """Scaled gap alpha_n (x_1^- - x_{n+}^+); positive iff species separate."""
    if c.n_plus < 1 or c.n_minus < 1:
        raise ValueError("both species must be populated")
    return float(p.alpha_n * (c.positions_minus[0] - c.positions_plus[-1]))


def d_bar_half(c: Configuration, species: str, n: int | None = None) -> float:
    """n times the minimum consecutive gap over the first half of a species.

    The first half of the index range sits away from that species' outer
    barrier for the negative walls, which is the side free of boundary-layer
    compression; values near 1 mean the spacing matches the uniform 1/n grid.
    """
    pos = c.positions_plus if species == "plus" else c.positions_minus
    if species not in ("plus", "minus"):
        raise ValueError(f"species must be 'plus' or 'minus', got {species!r}")
    if pos.size < 2:
        raise ValueError("need at least two walls of the requested species")
    if n is None:
        n = c.n
    gaps = np.diff(pos)
    half = max(1, pos.size // 2)
    return float(n * gaps[:half].min())


def is_fully_separated(c: Configuration, tol: float = ENDPOINT_TOL) -> bool:
    """0 = x_1^+ < ... < x_{n+}^+ < x_1^- < ... < x_{n-}^- = 1 (pinned ends)."""
    xp, xm = c.positions_plus, c.positions_minus
    if xp.size == 0 or xm.size == 0:
        return False
    if xp[0] > tol or xm[-1] < 1.0 - tol:
        return False
    if np.any(np.diff(xp) <= 0.0) or np.any(np.diff(xm) <= 0.0):
        return False
    return bool(xp[-1] < xm[0])


def is_completely_mixed(c: Configuration, tol: float = ENDPOINT_TOL) -> bool:
    """Strictly alternating chain +,-,+,-,... pinned at both barriers."""
    xp, xm = c.positions_plus, c.positions_minus
    if xp.size != xm.size or xp.size == 0:
        return False
    if xp[0] > tol or xm[-1] < 1.0 - tol:
        return False
    # chain x_1^+ <= x_1^- < x_2^+ < x_2^- < ... < x_k^+ <= x_k^-; only the
    # barrier-adjacent pairs may tie
    if not (xp[0] <= xm[0] and xp[-1] <= xm[-1]):
        return False
    if np.any(xm[:-1] >= xp[1:]):
        return False
    if xp.size > 2 and np.any(xp[1:-1] >= xm[1:-1]):
        return False
    return True


def cross_inversion_count(c: Configuration) -> int:
    """Number of opposite-species pairs out of the separated order.

    Counts pairs (i, j) with x_i^+ > x_j^-; the equispaced separated start
    has none, one adjacent swap makes exactly one, complete mixing with k
    walls per species makes k(k-1)/2.
    """
    xp, xm = c.positions_plus, c.positions_minus
    return int(np.sum(np.searchsorted(xm, xp, side="left")))


def decay_rate(dist_n: float, dist_2n: float) -> float:
    """Dyadic decay exponent (log dist_n - log dist_2n) / log 2."""
    if dist_n <= 0.0 or dist_2n <= 0.0:
        raise ValueError("decay_rate needs positive distances")
    return float((np.log(dist_n) - np.log(dist_2n)) / np.log(2.0))


def discrete_density(c: Configuration) -> dict[str, np.ndarray]:
    """Midpoint samples of the piecewise-constant discrete density per species.

    For each species returns rows (midpoint, 1 / (n gap)) over consecutive
    same-species gaps; a zero gap yields an inf sample.
    """
    out = {}
    n = c.n
    for name, pos in (("plus", c.positions_plus), ("minus", c.positions_minus)):
        if pos.size < 2:
            raise ValueError(f"need at least two {name} walls")
        gaps = np.diff(pos)
        mids = 0.5 * (pos[1:] + pos[:-1])
        with np.errstate(divide="ignore"):
            dens = 1.0 / (n * gaps)
        out[name] = np.column_stack([mids, dens])
    return out


def separation_criterion(alpha: float, d_bar: float, a: float) -> float:
    """Signed margin sum_k |v'(alpha d_bar k)| - |w'(r*, a)|.

    A negative value certifies that the total same-sign pull on the first
    negative wall (half-lattice sum at spacing alpha*d_bar) cannot balance
    the strongest opposite-sign push, so the fully separated minimiser
    criterion holds at that spacing.
    """
    x = alpha * d_bar
    if x <= 0.0:
        raise ValueError("alpha * d_bar must be positive")
    pull = potentials.abs_v_prime_eff(x)
    push = abs(potentials.w_prime(potentials.r_star(a), a))
    return float(pull - push)


@dataclass
class RunStats:
    """Classification and statistics of one long-time run."""

    n: int
    alpha_n: float
    a: float
    gamma_n: float
    t_final: float
    d_plus_minus: float
    d_bar_plus: float
    d_bar_minus: float
    q: float | None
    separated: bool
    mixed: bool
    cross_inversions: int
    rtol: float
    atol: float

    def provenance_hash(self) -> str:
        key = (f"{self.n},{self.alpha_n!r},{self.a!r},{self.gamma_n!r},"
               f"{self.rtol!r},{self.atol!r}")
        return hashlib.sha256(key.encode()).hexdigest()[:16]


def compute_run_stats(c: Configuration, p: ModelParams, t_final: float,
                      rtol: float, atol: float, q: float | None = None) -> RunStats:
    sep = is_fully_separated(c)
    mix = is_completely_mixed(c)
    assert not (sep and mix) or min(c.n_plus, c.n_minus) < 2
    return RunStats(
        n=p.n, alpha_n=p.alpha_n, a=p.a, gamma_n=p.gamma_n, t_final=t_final,
        d_plus_minus=d_plus_minus(c, p),
        d_bar_plus=d_bar_half(c, "plus"),
        d_bar_minus=d_bar_half(c, "minus"),
        q=q, separated=sep, mixed=mix,
        cross_inversions=cross_inversion_count(c),
        rtol=rtol, atol=atol,
    )


RUN_STATS_COLUMNS = [
    "n", "alpha_n", "a", "gamma_n", "t_final", "d_plus_minus",
    "d_bar_plus", "d_bar_minus", "q", "separated", "mixed",
    "cross_inversions", "rtol", "atol", "provenance",
]


def run_stats_csv(rows: list[RunStats]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RUN_STATS_COLUMNS)
    for r in rows:
        writer.writerow([
            r.n, format(r.alpha_n, ".17g"), format(r.a, ".17g"),
            format(r.gamma_n, ".17g"), format(r.t_final, ".17g"),
            format(r.d_plus_minus, ".17g"), format(r.d_bar_plus, ".17g"),
            format(r.d_bar_minus, ".17g"),
            "" if r.q is None else format(r.q, ".17g"),
            int(r.separated), int(r.mixed), r.cross_inversions,
            format(r.rtol, ".17g"), format(r.atol, ".17g"),
            r.provenance_hash(),
        ])
    return buf.getvalue()
