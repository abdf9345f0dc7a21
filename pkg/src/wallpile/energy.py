"""Particle configurations and the discrete two-species pile-up energy.

A configuration holds the sorted positions of the positive and negative walls
in [0, 1].  The energy couples same-sign pairs through ``v`` and opposite-sign
pairs through ``w(., a)``, plus an affine loading term that pushes positive
walls to the left barrier and negative walls to the right one:

    E = (1/n^2) sum_{same-sign pairs} alpha v(alpha dx)
      + (1/n^2) sum_{cross pairs}     alpha w(alpha dx, a)
      + gamma^2/n [ sum_i x_i^+ + sum_i (1 - x_i^-) ].

The gradient flow in :mod:`wallpile.flow` integrates dx/dt = -n grad E.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import potentials

# Same-sign gaps below GAP_INF make the energy +inf (collision); gradients
# refuse to evaluate below GAP_SINGULAR.
GAP_INF = 1e-15
GAP_SINGULAR = 1e-12


class SingularConfigurationError(ValueError):
    """Raised when a gradient is requested at a same-sign near-collision."""


@dataclass(frozen=True)
class Configuration:
    """Sorted positions of the positive and negative walls in [0, 1]."""

    positions_plus: np.ndarray
    positions_minus: np.ndarray

    def __post_init__(self):
        for name in ("positions_plus", "positions_minus"):
            arr = np.sort(np.asarray(getattr(self, name), dtype=float))
            if arr.size and (arr[0] < -1e-12 or arr[-1] > 1.0 + 1e-12):
                raise ValueError(f"{name} must lie in [0, 1]")
            arr = np.clip(arr, 0.0, 1.0)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_plus(self) -> int:
        return self.positions_plus.size

    @property
    def n_minus(self) -> int:
        return self.positions_minus.size

    @property
    def n(self) -> int:
        return self.n_plus + self.n_minus

    def merged(self) -> tuple[np.ndarray, np.ndarray]:
        """Positions and sign labels in merged non-decreasing order.

        Ties between species are broken positive-first (stable), so the
        (x, b) description round-trips losslessly.
        """
        x = np.concatenate([self.positions_plus, self.positions_minus])
        b = np.concatenate(
            [np.ones(self.n_plus, dtype=int), -np.ones(self.n_minus, dtype=int)]
        )
        order = np.argsort(x, kind="stable")
        return x[order], b[order]

    @classmethod
    def from_merged(cls, x: np.ndarray, b: np.ndarray) -> "Configuration":
        x = np.asarray(x, dtype=float)
        b = np.asarray(b)
        return cls(x[b > 0], x[b < 0])

    def reflected(self) -> "Configuration":
        """The barrier-swap image: x -> 1 - x with species exchanged."""
        return Configuration(1.0 - self.positions_minus[::-1],
                             1.0 - self.positions_plus[::-1])

    def to_csv(self) -> str:
        """Rows (species, position) sorted by position, 17 significant digits."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["species", "position"])
        x, b = self.merged()
        for bi, xi in zip(b, x):
            writer.writerow([f"{bi:+d}", format(xi, ".17g")])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Configuration":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != ["species", "position"]:
            raise ValueError(f"unexpected configuration CSV header: {header}")
        plus, minus = [], []
        for row in reader:
            if not row:
                continue
            (plus if int(row[0]) > 0 else minus).append(float(row[1]))
        return cls(np.array(plus), np.array(minus))


@dataclass(frozen=True)
class ModelParams:
    """Counts, interaction scale alpha_n, loading gamma_n, and phase shift a."""

    n_plus: int
    n_minus: int
    alpha_n: float
    gamma_n: float = 0.0
    a: float = 1.0

    def __post_init__(self):
        if self.n_plus < 0 or self.n_minus < 0 or self.n < 1:
            raise ValueError("need at least one particle")
        if self.alpha_n <= 0.0:
            raise ValueError(f"alpha_n must be positive, got {self.alpha_n}")
        if self.gamma_n < 0.0:
            raise ValueError(f"gamma_n must be non-negative, got {self.gamma_n}")
        if not -1.0 <= self.a <= 1.0:
            raise ValueError(f"phase shift a must lie in [-1, 1], got {self.a}")

    @property
    def n(self) -> int:
        return self.n_plus + self.n_minus

    def matches(self, c: Configuration) -> None:
        if (c.n_plus, c.n_minus) != (self.n_plus, self.n_minus):
            raise ValueError(
                f"configuration has counts ({c.n_plus}, {c.n_minus}), "
                f"params expect ({self.n_plus}, {self.n_minus})"
            )


def _pair_tables(x: np.ndarray, b: np.ndarray, alpha: float):
    """Scaled pair distances and the same-sign mask, diagonal excluded."""
    d = x[:, None] - x[None, :]
    same = (b[:, None] * b[None, :]) > 0
    np.fill_diagonal(same, False)
    return alpha * d, same


def energy(c: Configuration, p: ModelParams) -> float:
    """Total energy; +inf iff two same-sign walls (nearly) coincide.

    Pairwise terms are combined with exact compensated summation, so the
    result does not depend on the order the pairs are visited.
    """
    p.matches(c)
    n = p.n
    x, b = c.merged()
    r, same = _pair_tables(x, b, p.alpha_n)
    absr = np.abs(r)
    if np.any(absr[same] < p.alpha_n * GAP_INF):
        return math.inf
    iu = np.triu_indices(n, 1)
    ru, sameu = r[iu], same[iu]
    terms = np.where(sameu, potentials.v(np.where(sameu, ru, 1.0)),
                     potentials.w(np.where(sameu, 1.0, ru), p.a))
    pieces = [(p.alpha_n / n**2) * float(t) for t in terms]
    if p.gamma_n != 0.0:
        g2 = p.gamma_n**2 / n
        pieces.extend(g2 * float(xi) for xi in c.positions_plus)
        pieces.extend(g2 * (1.0 - float(xi)) for xi in c.positions_minus)
    return math.fsum(pieces)


def energy_merged(x: np.ndarray, b: np.ndarray, p: ModelParams) -> float:
    """Fast numpy-summed energy on merged coordinates (flow hot path)."""
    n = p.n
    r, same = _pair_tables(x, b, p.alpha_n)
    absr = np.abs(r)
    if np.any(absr[same] < p.alpha_n * GAP_INF):
        return math.inf
    safe = np.where(same, r, 1.0)
    vv = potentials.v(safe)
    ww = potentials.w(np.where(same, 1.0, r), p.a)
    np.fill_diagonal(ww, 0.0)
    total = 0.5 * float(np.sum(np.where(same, vv, ww)))
    ext = 0.0
    if p.gamma_n != 0.0:
        ext = p.gamma_n**2 / n * float(np.sum(np.where(b > 0, x, 1.0 - x)))
    return (p.alpha_n / n**2) * total + ext


def grad_merged(x: np.ndarray, b: np.ndarray, p: ModelParams,
                check: bool = True) -> np.ndarray:
    """Gradient of the energy on merged coordinates."""
    n = p.n
    r, same = _pair_tables(x, b, p.alpha_n)
    if check and np.any(np.abs(r[same]) < p.alpha_n * GAP_SINGULAR):
        raise SingularConfigurationError("same-sign walls about to collide")
    forces = np.where(same,
                      potentials.v_prime(np.where(same, r, 1.0)),
                      potentials.w_prime(np.where(same, 1.0, r), p.a))
    np.fill_diagonal(forces, 0.0)
    g = (p.alpha_n**2 / n**2) * forces.sum(axis=1)
    if p.gamma_n != 0.0:
        g = g + (p.gamma_n**2 / n) * np.where(b > 0, 1.0, -1.0)
    return g


def grad(c: Configuration, p: ModelParams) -> np.ndarray:
    """Energy gradient in the merged ordering of ``c``."""
    p.matches(c)
    x, b = c.merged()
    return grad_merged(x, b, p)


def hessian_merged(x: np.ndarray, b: np.ndarray, p: ModelParams) -> np.ndarray:
    """Hessian of the energy on merged coordinates (dense, symmetric)."""
    n = p.n
    r, same = _pair_tables(x, b, p.alpha_n)
    curv = np.where(same,
                    potentials.v_second(np.where(same, r, 1.0)),
                    potentials.w_second(np.where(same, 1.0, r), p.a))
    np.fill_diagonal(curv, 0.0)
    h = -(p.alpha_n**3 / n**2) * curv
    np.fill_diagonal(h, (p.alpha_n**3 / n**2) * curv.sum(axis=1))
    return h


def quadratic_comparator_hessian(n: int, alpha_n: float) -> np.ndarray:
    """Hessian of the quadratic comparator: (2 alpha^3 / n^2)(n I - 1 x 1).

    Its spectrum is {2 alpha^3 / n with multiplicity n-1, 0}; it bounds the
    convexity defect the pairwise potentials can introduce.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    eye = np.eye(n)
    ones = np.ones((n, n))
    return (2.0 * alpha_n**3 / n**2) * (n * eye - ones)


def boundary_derivative(c: Configuration, p: ModelParams) -> float:
    """Derivative of the energy in the position of the leftmost negative wall.

    Defined for fully separated configurations; a negative value certifies
    that the separation constraint is inactive at a local minimiser (moving
    the first negative wall left would lower the energy).
    """
    p.matches(c)
    if c.n_plus < 1 or c.n_minus < 1:
        raise ValueError("both species must be populated")
    xm = c.positions_minus
    xp = c.positions_plus
    if xm[0] <= xp[-1]:
        raise ValueError("configuration is not fully separated")
    al, n = p.alpha_n, p.n
    v_part = np.sum(-potentials.v_prime(al * (xm[1:] - xm[0]))) if c.n_minus > 1 else 0.0
    w_part = np.sum(-potentials.w_prime(al * (xm[0] - xp), p.a))
    return float((al**2 / n**2) * (v_part - w_part))


@dataclass
class SeparatedMinimizerResult:
    """Local minimiser of the energy over the separated feasible set."""

    config: Configuration
    interior: bool
    boundary_derivative: float
    projected_grad_norm: float
    iterations: int
    margin: float = field(default=0.0)

    @property
    def certified(self) -> bool:
        """True when both local-minimiser certificates hold."""
        return self.interior and self.boundary_derivative < 0.0


def separated_initial_guess(p: ModelParams, gap_min: float = 0.0) -> Configuration:
    """Equispaced species blocks with the outer barrier walls pinned.

    The blocks leave an inter-species gap of max(1/n, 1.05 gap_min) around
    the midpoint, so the guess is feasible whenever the feasible set is.
    """
    n = p.n
    gap = max(1.0 / n, 1.05 * gap_min)
    xp = np.linspace(0.0, 0.5 * (1.0 - gap), p.n_plus)
    xm = np.linspace(0.5 * (1.0 + gap), 1.0, p.n_minus)
    return Configuration(xp, xm)


def find_separated_minimizer(p: ModelParams, margin: float | None = None,
                             tol: float = 1e-11,
                             max_iter: int = 200) -> SeparatedMinimizerResult:
    """Minimise the energy over the fully separated feasible set.

    The set pins x_1^+ = 0 and x_{n^-}^- = 1, keeps each species ordered, and
    keeps the scaled inter-species gap alpha (x_1^- - x_{n^+}^+) at least
    r* + margin.  The energy is strictly convex there, so a damped Newton
    iteration with feasibility backtracking converges; the result reports
    whether the gap constraint stayed inactive (interior) and the sign of the
    boundary derivative.
    """
    if p.gamma_n != 0.0:
        raise ValueError("the separated minimiser search requires gamma_n = 0")
    if p.n_plus < 2 or p.n_minus < 2:
        raise ValueError("need at least two walls per species")
    rs = potentials.r_star(p.a)
    if margin is None:
        margin = 1e-3 * rs
    gap_min = (rs + margin) / p.alpha_n
    if gap_min >= 0.98:
        raise ValueError(
            f"feasible set empty: alpha_n = {p.alpha_n} admits no separated "
            f"state with scaled gap above r* = {rs:.4f}"
        )

    c = separated_initial_guess(p, gap_min)
    x = np.concatenate([c.positions_plus, c.positions_minus])
    b = np.concatenate([np.ones(p.n_plus, dtype=int),
                        -np.ones(p.n_minus, dtype=int)])
    free = np.ones(p.n, dtype=bool)
    free[0] = False            # x_1^+ pinned at 0
    free[-1] = False           # x_{n^-}^- pinned at 1
    i_gap_hi = p.n_plus        # index of x_1^-
    i_gap_lo = p.n_plus - 1    # index of x_{n^+}^+

    def feasible(y: np.ndarray) -> bool:
        if y[i_gap_hi] - y[i_gap_lo] < gap_min - 1e-15:
            return False
        if np.any(np.diff(y[: p.n_plus]) <= 0.0):
            return False
        if np.any(np.diff(y[p.n_plus:]) <= 0.0):
            return False
        return bool(y[1] > 0.0 and y[-2] < 1.0)

    fval = energy_merged(x, b, p)
    it = 0
    for it in range(1, max_iter + 1):
        g = grad_merged(x, b, p)
        if np.max(np.abs(g[free])) <= tol:
            break
        h = hessian_merged(x, b, p)[np.ix_(free, free)]
        try:
            step_free = np.linalg.solve(h, -g[free])
        except np.linalg.LinAlgError:
            step_free = -g[free]
        step = np.zeros_like(x)
        step[free] = step_free
        t = 1.0
        slope = float(g[free] @ step_free)
        if slope >= 0.0:
            step[free] = -g[free]
            slope = -float(g[free] @ g[free])
        moved = False
        for _ in range(60):
            y = x + t * step
            if feasible(y):
                fy = energy_merged(y, b, p)
                if fy <= fval + 1e-4 * t * slope:
                    x, fval, moved = y, fy, True
                    break
            t *= 0.5
        if not moved:
            break

    g = grad_merged(x, b, p)
    gap = x[i_gap_hi] - x[i_gap_lo]
    interior = bool(gap > gap_min + 1e-12)
    z = g[free].copy()
    if not interior:
        # KKT-project out the component pushing the gap constraint tighter
        nrm = np.zeros_like(x)
        nrm[i_gap_hi], nrm[i_gap_lo] = 1.0, -1.0
        vfree = nrm[free]
        mu = max(0.0, -float(z @ vfree) / float(vfree @ vfree))
        z = z + mu * vfree
    pg = float(np.max(np.abs(z)))
    cfg = Configuration(x[b > 0], x[b < 0])
    bdry = boundary_derivative(cfg, p)
    return SeparatedMinimizerResult(
        config=cfg,
        interior=interior,
        boundary_derivative=bdry,
        projected_grad_norm=pg,
        iterations=it,
        margin=margin,
    )
