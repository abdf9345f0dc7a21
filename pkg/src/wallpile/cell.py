"""Cell problem defining the large-scale interaction energy density.

For densities (sigma+, sigma-) and a cell size m, place floor(sigma m) walls
of each sign in [0, 1] and minimise

    (1/m) sum_{i<j} alpha V_ij(alpha m (y_i - y_j)),      V_ij = v or w(., a)

over per-species ordered positions; the clamped minimum (never below 0) is
psi_m, and psi is its m -> infinity limit.  Because the potentials are even
and relabelling within a species leaves the sum unchanged, the ordering
constraint is vacuous: we minimise over the full box [0, 1]^n with a
projected quasi-Newton method (L-BFGS-B plus a free-coordinate Newton
polish), restarted from structured and random species interleavings.  Cross
interactions are non-convex, so different interleavings are genuinely
different local minima; the multi-start is a heuristic and the gradient norm
of the best start is reported alongside every value.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import potentials

# floor(sigma m) with a snap so sigma*m within 1e-12 of an integer lands on it
_FLOOR_SNAP = 1e-12

_GRAD_TOL = 1e-9


def snapped_count(sigma: float, m: float) -> int:
    if sigma < 0.0:
        raise ValueError("densities must be non-negative")
    x = sigma * m
    k = math.floor(x + _FLOOR_SNAP)
    return int(max(k, 0))


@dataclass(frozen=True)
class CellSpec:
    sigma_plus: float
    sigma_minus: float
    m: float
    alpha: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        if self.sigma_plus < 0.0 or self.sigma_minus < 0.0:
            raise ValueError("densities must be non-negative")
        if self.m <= 0.0:
            raise ValueError("cell size m must be positive")
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if not -1.0 < self.a <= 1.0:
            raise ValueError("phase shift a must lie in (-1, 1]")

    @property
    def n_plus(self) -> int:
        return snapped_count(self.sigma_plus, self.m)

    @property
    def n_minus(self) -> int:
        return snapped_count(self.sigma_minus, self.m)

    @property
    def n(self) -> int:
        return self.n_plus + self.n_minus


@dataclass
class PsiSample:
    """One evaluated cell minimum with its optimiser certificates."""

    value: float
    grad_norm: float
    best_start: int
    skipped_starts: int
    spec: CellSpec


def _cell_energy_grad(y: np.ndarray, b: np.ndarray, spec: CellSpec):
    """Cell energy and gradient; same-sign near-coincidences are regularised
    to a huge-but-finite barrier so line searches can back out of them."""
    al, m, a = spec.alpha, spec.m, spec.a
    d = y[:, None] - y[None, :]
    same = (b[:, None] * b[None, :]) > 0
    np.fill_diagonal(same, False)
    r = al * m * d
    tiny = same & (np.abs(r) < 1e-13)
    if np.any(tiny):
        r = np.where(tiny, np.where(r >= 0.0, 1e-13, -1e-13), r)
    vv = potentials.v(np.where(same, r, 1.0))
    ww = potentials.w(np.where(same, 1.0, r), a)
    np.fill_diagonal(ww, 0.0)
    e = 0.5 * (al / m) * float(np.sum(np.where(same, vv, ww)))
    fv = potentials.v_prime(np.where(same, r, 1.0))
    fw = potentials.w_prime(np.where(same, 1.0, r), a)
    np.fill_diagonal(fw, 0.0)
    g = (al * al) * np.where(same, fv, fw).sum(axis=1)
    return e, g


def _interleaving_starts(n_plus: int, n_minus: int, starts: int, seed: int):
    """Initial (positions, labels) lists: separated, alternating, random."""
    n = n_plus + n_minus
    rng = np.random.default_rng(seed)
    base = (np.arange(1, n + 1) - 0.5) / n
    out = []
    # fully separated: all plus left of all minus
    lab = np.concatenate([np.ones(n_plus, dtype=int), -np.ones(n_minus, dtype=int)])
    out.append((base.copy(), lab))
    # alternating as evenly as possible
    lab_alt = np.empty(n, dtype=int)
    hi, lo = (1, -1) if n_plus >= n_minus else (-1, 1)
    k_hi, k_lo = max(n_plus, n_minus), min(n_plus, n_minus)
    pos_hi = np.linspace(0, n - 1, k_hi).round().astype(int)
    mask = np.zeros(n, dtype=bool)
    mask[pos_hi] = True
    # adjust collisions from rounding
    while mask.sum() != k_hi:
        mask[np.flatnonzero(~mask)[0]] = True
    lab_alt[mask] = hi
    lab_alt[~mask] = lo
    out.append((base.copy(), lab_alt))
    while len(out) < starts:
        lab_r = np.concatenate([np.ones(n_plus, dtype=int),
                                -np.ones(n_minus, dtype=int)])
        rng.shuffle(lab_r)
        jitter = (rng.random(n) - 0.5) / (2.0 * n)
        out.append((np.clip(base + jitter, 0.0, 1.0), lab_r))
    return out[:starts]


def _newton_polish(y, b, spec, max_iter=25):
    """Drive the projected gradient norm down on the L-BFGS-B result."""
    e, g = _cell_energy_grad(y, b, spec)
    al, m = spec.alpha, spec.m
    for _ in range(max_iter):
        at_lo = (y <= 0.0) & (g > 0.0)
        at_hi = (y >= 1.0) & (g < 0.0)
        free = ~(at_lo | at_hi)
        pg = g.copy()
        pg[~free] = 0.0
        if float(np.abs(pg).max()) <= 0.1 * _GRAD_TOL or not np.any(free):
            break
        d = y[:, None] - y[None, :]
        same = (b[:, None] * b[None, :]) > 0
        np.fill_diagonal(same, False)
        r = al * m * d
        cv = potentials.v_second(np.where(same, r, 1.0))
        cw = potentials.w_second(np.where(same, 1.0, r), spec.a)
        np.fill_diagonal(cw, 0.0)
        curv = np.where(same, cv, cw)
        h = -(al**3 * m) * curv
        np.fill_diagonal(h, (al**3 * m) * curv.sum(axis=1))
        hff = h[np.ix_(free, free)]
        try:
            step = np.linalg.solve(hff + 1e-12 * np.eye(hff.shape[0]), -g[free])
        except np.linalg.LinAlgError:
            break
        t = 1.0
        improved = False
        for _ in range(30):
            y_try = y.copy()
            y_try[free] = np.clip(y[free] + t * step, 0.0, 1.0)
            e_try, g_try = _cell_energy_grad(y_try, b, spec)
            if np.isfinite(e_try) and e_try <= e + 1e-15:
                y, e, g = y_try, e_try, g_try
                improved = True
                break
            t *= 0.25
        if not improved:
            break
    at_lo = (y <= 0.0) & (g > 0.0)
    at_hi = (y >= 1.0) & (g < 0.0)
    pg = g.copy()
    pg[at_lo | at_hi] = 0.0
    return y, e, float(np.abs(pg).max())


def psi_m(spec: CellSpec, starts: int = 16, seed: int = 0) -> PsiSample:
    """Clamped multi-start minimum of the cell energy (deterministic in seed)."""
    if starts < 1:
        raise ValueError("need at least one start")
    n_plus, n_minus = spec.n_plus, spec.n_minus
    if n_plus + n_minus <= 1:
        return PsiSample(0.0, 0.0, -1, 0, spec)
    best = (math.inf, math.inf, -1)  # energy, grad norm, start id
    skipped = 0
    for sid, (y0, b) in enumerate(_interleaving_starts(n_plus, n_minus,
                                                       starts, seed)):
        res = minimize(
            lambda y: _cell_energy_grad(y, b, spec),
            y0,
            jac=True,
            method="L-BFGS-B",
            bounds=[(0.0, 1.0)] * len(y0),
            options=dict(maxiter=2000, ftol=1e-18, gtol=1e-11, maxls=60),
        )
        if not np.all(np.isfinite(res.x)):
            skipped += 1
            continue
        y, e, pg = _newton_polish(res.x, b, spec)
        if not math.isfinite(e):
            skipped += 1
            continue
        if e < best[0] - 1e-15 or (abs(e - best[0]) <= 1e-15 and pg < best[1]):
            best = (e, pg, sid)
    if not math.isfinite(best[0]):
        raise RuntimeError("all cell-problem starts failed")
    return PsiSample(max(0.0, best[0]), best[1], best[2], skipped, spec)


@dataclass
class PsiEstimate:
    """psi_m samples over increasing m with a last-value estimate.

    No extrapolation is attempted: the limit exists but its rate is unknown,
    so the estimate is the largest-m sample and the uncertainty is the spread
    of the last three samples.
    """

    estimate: float
    uncertainty: float
    samples: list[PsiSample] = field(default_factory=list)


def psi_limit(sigma_plus: float, sigma_minus: float, m_list,
              starts: int = 16, seed: int = 0, alpha: float = 1.0,
              a: float = 1.0) -> PsiEstimate:
    m_list = sorted(float(m) for m in m_list)
    if len(m_list) < 3:
        raise ValueError("need at least three cell sizes")
    samples = [psi_m(CellSpec(sigma_plus, sigma_minus, m, alpha, a), starts, seed)
               for m in m_list]
    tail = [s.value for s in samples[-3:]]
    return PsiEstimate(estimate=samples[-1].value,
                       uncertainty=max(tail) - min(tail),
                       samples=samples)


@dataclass
class PsiTable:
    """Tabulated cell energy density on a (sigma+, sigma-) grid."""

    sigma_plus_grid: np.ndarray
    sigma_minus_grid: np.ndarray
    estimates: np.ndarray          # shape (len(sp), len(sm))
    uncertainties: np.ndarray
    samples: dict = field(default_factory=dict)   # (i, j) -> list[PsiSample]
    alpha: float = 1.0

    def covers(self, sp: float, sm: float) -> bool:
        return (self.sigma_plus_grid[0] - 1e-12 <= sp <= self.sigma_plus_grid[-1] + 1e-12
                and self.sigma_minus_grid[0] - 1e-12 <= sm <= self.sigma_minus_grid[-1] + 1e-12)

    def interpolate(self, sp: float, sm: float) -> float:
        """Bilinear interpolation; raises outside the tabulated square."""
        if not self.covers(sp, sm):
            raise ValueError(
                f"({sp}, {sm}) is outside the tabulated density range")
        gp, gm = self.sigma_plus_grid, self.sigma_minus_grid
        i = int(np.clip(np.searchsorted(gp, sp) - 1, 0, len(gp) - 2))
        j = int(np.clip(np.searchsorted(gm, sm) - 1, 0, len(gm) - 2))
        tp = 0.0 if gp[i + 1] == gp[i] else (sp - gp[i]) / (gp[i + 1] - gp[i])
        tm = 0.0 if gm[j + 1] == gm[j] else (sm - gm[j]) / (gm[j + 1] - gm[j])
        tp, tm = np.clip(tp, 0.0, 1.0), np.clip(tm, 0.0, 1.0)
        z = self.estimates
        return float((1 - tp) * (1 - tm) * z[i, j] + tp * (1 - tm) * z[i + 1, j]
                     + (1 - tp) * tm * z[i, j + 1] + tp * tm * z[i + 1, j + 1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["sigma_plus", "sigma_minus", "m", "psi_m",
                         "grad_norm", "start_id_of_best"])
        for (i, j), samples in sorted(self.samples.items()):
            for s in samples:
                writer.writerow([
                    format(self.sigma_plus_grid[i], ".17g"),
                    format(self.sigma_minus_grid[j], ".17g"),
                    format(s.spec.m, ".17g"),
                    format(s.value, ".17g"),
                    format(s.grad_norm, ".17g"),
                    s.best_start,
                ])
        return buf.getvalue()


def build_psi_table(sigma_plus_grid, sigma_minus_grid, m_list,
                    starts: int = 16, seed: int = 0,
                    alpha: float = 1.0, a: float = 1.0) -> PsiTable:
    """Tabulate psi on the grid; grid points are independent minimisations."""
    gp = np.asarray(sorted(float(s) for s in sigma_plus_grid))
    gm = np.asarray(sorted(float(s) for s in sigma_minus_grid))
    est = np.zeros((gp.size, gm.size))
    unc = np.zeros_like(est)
    samples = {}
    for i, sp in enumerate(gp):
        for j, sm in enumerate(gm):
            res = psi_limit(sp, sm, m_list, starts=starts, seed=seed,
                            alpha=alpha, a=a)
            est[i, j] = res.estimate
            unc[i, j] = res.uncertainty
            samples[(i, j)] = res.samples
    return PsiTable(gp, gm, est, unc, samples, alpha)
