"""Numerical audit of the wall-potential family.

Every check here verifies a theorem-backed fact about v and w(., a), so a
failure indicates an implementation bug rather than an open question: Fourier
positivity of w (through a closed-form transform of 1/(cosh 2r + a) and
direct oscillatory quadrature), strict convexity of v - w on (0, inf), the
pointwise ordering 0 < w(., 0) <= w(., a) < w(., b) <= w(., 1) < v, and the
exponential tail rates.  Results are collected in a report with the worst
margin per check.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import potentials

_IDENTITY_TOL = 1e-8


@dataclass
class AuditCheck:
    name: str
    grid: str
    margin: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "grid": self.grid, "margin": self.margin,
                "passed": self.passed, "details": self.details}


@dataclass
class AuditReport:
    checks: list[AuditCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> str:
        return json.dumps({"passed": self.passed,
                           "checks": [c.to_dict() for c in self.checks]},
                          indent=2)

    def to_text(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"[{status}] {c.name:<40s} worst margin {c.margin: .3e}"
                         f"  ({c.grid})")
        lines.append(f"audit: {'all checks passed' if self.passed else 'FAILURES'}"
                     f" ({len(self.checks)} checks)")
        return "\n".join(lines)


def fourier_transform_w(a: float, omega: float) -> float:
    """F w(., a) under F f(w) = int f(x) e^{-2 pi i x w} dx (even cosine form).

    Oscillatory quadrature on (0, TAIL_CUTOFF); the dropped tail is below
    int_R^inf w ~ e^{-2R} ~ 1e-26.
    """
    if omega == 0.0:
        return 2.0 * potentials.integral_0_inf("W", a)
    val, _err = quad(lambda r: potentials.w(r, a), 0.0, potentials.TAIL_CUTOFF,
                     weight="cos", wvar=2.0 * math.pi * omega,
                     epsabs=1e-13, epsrel=1e-12, limit=400)
    return 2.0 * val


def fourier_transform_sech_family(a: float, omega: float) -> float:
    """Numerical F(1 / (cosh 2r + a)) for the closed-form cross-check."""
    val, _err = quad(lambda r: 1.0 / (math.cosh(2.0 * r) + a), 0.0,
                     potentials.TAIL_CUTOFF, weight="cos",
                     wvar=2.0 * math.pi * omega,
                     epsabs=1e-13, epsrel=1e-12, limit=400)
    return 2.0 * val


def sech_family_closed_form(a: float, omega: float) -> float:
    """pi / sqrt(1 - a^2) * sinh(pi arccos(a) w) / sinh(pi^2 w), |a| < 1."""
    if not -1.0 < a < 1.0:
        raise ValueError("closed form valid for |a| < 1")
    if omega == 0.0:
        return math.pi * math.acos(a) / (math.pi**2 * math.sqrt(1.0 - a * a))
    num = math.sinh(math.pi * math.acos(a) * omega)
    den = math.sinh(math.pi**2 * omega)
    return math.pi / math.sqrt(1.0 - a * a) * num / den


def gaussian_convention_margin() -> float:
    """Residual of F(exp(-pi x^2))(w) = exp(-pi w^2) at w = 1/2.

    Pins down the transform convention; a constant-factor mismatch would
    show up here long before it could corrupt the positivity margins.
    """
    val, _ = quad(lambda x: math.exp(-math.pi * x * x), 0.0, 10.0,
                  weight="cos", wvar=math.pi, epsabs=1e-14, limit=200)
    return abs(2.0 * val - math.exp(-math.pi * 0.25))


def check_fourier_positivity(a: float, omega_grid) -> list[AuditCheck]:
    """Positivity of F w(., a) on the grid plus transform cross-checks."""
    omega_grid = np.asarray(sorted(float(w) for w in omega_grid))
    if np.any(omega_grid <= 0.0) or np.any(omega_grid > 20.0):
        raise ValueError("frequency grid must lie in (0, 20]")
    grid_desc = (f"{omega_grid.size} frequencies in "
                 f"[{omega_grid[0]:.3g}, {omega_grid[-1]:.3g}]")
    checks = []

    conv = gaussian_convention_margin()
    checks.append(AuditCheck(
        name="fourier_convention_gaussian",
        grid="omega = 1/2",
        margin=conv,
        passed=conv < 1e-12,
    ))

    vals = np.array([fourier_transform_w(a, w) for w in omega_grid])
    margin = float(vals.min())
    checks.append(AuditCheck(
        name=f"fourier_positivity_a={a:g}",
        grid=grid_desc,
        margin=margin,
        passed=bool(margin > 0.0),
        details={"min_at_omega": float(omega_grid[int(np.argmin(vals))])},
    ))

    if a < 1.0:
        sub = omega_grid[omega_grid <= 3.0]
        resid = max(abs(fourier_transform_sech_family(a, w)
                        - sech_family_closed_form(a, w)) for w in sub)
        checks.append(AuditCheck(
            name=f"fourier_closed_form_a={a:g}",
            grid=f"{sub.size} frequencies <= 3",
            margin=float(resid),
            passed=bool(resid <= _IDENTITY_TOL),
        ))
    else:
        # w(r, 1) = 2 w(r/2, 0), hence F w(., 1)(omega) = 4 F w(., 0)(2 omega)
        sub = omega_grid[omega_grid <= 2.0]
        resid = max(abs(fourier_transform_w(1.0, w)
                        - 4.0 * fourier_transform_w(0.0, 2.0 * w)) for w in sub)
        checks.append(AuditCheck(
            name="fourier_dilation_a1_vs_a0",
            grid=f"{sub.size} frequencies <= 2",
            margin=float(resid),
            passed=bool(resid <= _IDENTITY_TOL),
        ))
    return checks


def check_convexity_v_minus_w(a: float, r_grid) -> AuditCheck:
    """v'' - w''(., a) > 0 on the grid (strict convexity of the difference)."""
    r_grid = np.asarray(sorted(float(r) for r in r_grid))
    if np.any(r_grid <= 0.0) or np.any(r_grid > 15.0):
        raise ValueError("convexity grid must lie in (0, 15]")
    diff = potentials.v_second(r_grid) - potentials.w_second(r_grid, a)
    margin = float(diff.min())
    return AuditCheck(
        name=f"convexity_v_minus_w_a={a:g}",
        grid=f"{r_grid.size} radii in ({r_grid[0]:.3g}, {r_grid[-1]:.3g}]",
        margin=margin,
        passed=bool(margin > 0.0),
        details={"min_at_r": float(r_grid[int(np.argmin(diff))])},
    )


def check_ordering_and_decay(a_list, r_grid) -> list[AuditCheck]:
    """Pointwise ordering chain, evenness, tail decay rate, and asymptotics."""
    a_list = sorted(float(a) for a in a_list)
    r_grid = np.asarray(sorted(float(r) for r in r_grid))
    checks = []

    # chain 0 < w(., a_1) <= ... <= w(., a_k) < v pointwise
    margin = math.inf
    prev = None
    for a in a_list:
        vals = potentials.w(r_grid, a)
        margin = min(margin, float(vals.min()))
        if prev is not None:
            margin = min(margin, float((vals - prev).min()))
        prev = vals
    margin = min(margin, float((potentials.v(r_grid) - prev).min()))
    checks.append(AuditCheck(
        name="ordering_chain_w_increasing_below_v",
        grid=f"a in {a_list}, {r_grid.size} radii",
        margin=margin,
        passed=bool(margin > 0.0),
    ))

    # evenness to machine accuracy
    even = 0.0
    for a in a_list:
        even = max(even, float(np.max(np.abs(potentials.w(r_grid, a)
                                             - potentials.w(-r_grid, a)))))
    even = max(even, float(np.max(np.abs(potentials.v(r_grid)
                                         - potentials.v(-r_grid)))))
    checks.append(AuditCheck(
        name="evenness",
        grid=f"{r_grid.size} radii",
        margin=even,
        passed=bool(even <= 1e-14),
    ))

    # tail decay of w on [5, 15]: fit log w = c + p log r - q r, so the
    # polynomial prefactor (w ~ 2 a r e^{-2r} for a > 0) does not bias the
    # exponential rate q; a bare log-linear fit would report ~1.896 for a=1
    tail = np.linspace(5.0, 15.0, 60)
    design = np.column_stack([np.ones_like(tail), np.log(tail), -tail])
    worst_rate = math.inf
    for a in a_list:
        with np.errstate(divide="ignore"):
            logs = np.log(potentials.w(tail, a))
        coef, *_ = np.linalg.lstsq(design, logs, rcond=None)
        worst_rate = min(worst_rate, float(coef[2]))
    checks.append(AuditCheck(
        name="tail_decay_rate_w",
        grid="60 radii in [5, 15]",
        margin=worst_rate - 1.9,
        passed=bool(worst_rate >= 1.9),
        details={"fitted_rate": worst_rate},
    ))

    # large-r behaviour of v: the leading term is (2r + 1) e^{-2r} and the
    # remainder is O(r e^{-4r}) plus a few ulps of v itself (the bare
    # 2r e^{-2r} term is good only to a relative 1/(2r))
    rr = np.linspace(5.0, 20.0, 40)
    vv = potentials.v(rr)
    lead = (2.0 * rr + 1.0) * np.exp(-2.0 * rr)
    allowance = 3.0 * rr * np.exp(-4.0 * rr) + 8.0 * np.finfo(float).eps * vv
    slack = float(np.min(allowance - np.abs(vv - lead)))
    checks.append(AuditCheck(
        name="asymptotics_v_remainder",
        grid="40 radii in [5, 20]",
        margin=slack,
        passed=bool(slack >= 0.0),
        details={
            "leading_relative_error_bare_2r_times_2r": float(np.max(np.abs(
                vv / (2.0 * rr * np.exp(-2.0 * rr)) - 1.0) * 2.0 * rr)),
        },
    ))
    return checks


def run_audit(a_values=(0.0, 0.25, 0.5, 0.75, 1.0),
              n_frequencies: int = 50) -> AuditReport:
    """Full audit at the default grids used by the acceptance suite."""
    report = AuditReport()
    omegas = np.geomspace(0.05, 2.0, n_frequencies)
    for a in a_values:
        report.checks.extend(check_fourier_positivity(a, omegas))
    r_grid = np.linspace(0.05, 15.0, 120)
    for a in a_values:
        report.checks.append(check_convexity_v_minus_w(a, r_grid))
    report.checks.extend(check_ordering_and_decay(a_values, np.linspace(0.1, 10.0, 50)))
    return report
