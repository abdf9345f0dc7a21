"""Wall interaction potentials and derived quantities.

Same-sign walls repel through ``v``; opposite-sign walls interact through the
phase-shift family ``w(., a)`` with ``a`` in [-1, 1].  All evaluators accept
scalars or numpy arrays and switch to cancellation-free exponential forms for
large arguments, so that values and derivatives stay accurate over the whole
real line (the tails decay like ``exp(-2|r|)``).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

# All evaluators use exponentially rearranged forms in q = exp(-2|r|): the
# textbook hyperbolic expressions lose all relative accuracy beyond r ~ 15
# (v(r) is a difference of two O(r) terms agreeing to e^{-2r}), while the
# q-forms are sums of non-negative well-conditioned terms for every r.

# Upper cut for integrals on (0, inf); the dropped tail is below 2(R+1)e^{-2R}.
TAIL_CUTOFF = 30.0

# Truncation rule for lattice sums: keep k <= ceil(EFF_LOG_TOL / x) terms so
# the dropped tail (dominated by e^{-kx}) is below 1e-14.
_EFF_LOG_TOL = 14.0 * math.log(10.0)


def _as_array(r):
    arr = np.asarray(r, dtype=float)
    return arr, arr.ndim == 0


def _check_phase_shift(a: float) -> float:
    a = float(a)
    if not -1.0 <= a <= 1.0:
        raise ValueError(f"phase-shift parameter must lie in [-1, 1], got {a}")
    return a


def v(r):
    """Same-sign wall potential r*coth(r) - log|2 sinh(r)|, with v(0) = +inf.

    Evaluated as 2r q/(1-q) - log1p(-q) with q = e^{-2|r|}: both terms are
    non-negative, so the relative error stays at a few ulps over the whole
    line (the textbook form cancels to garbage beyond |r| ~ 18).
    """
    arr, scalar = _as_array(r)
    absr = np.abs(arr)
    q = np.exp(-2.0 * absr)
    em = -np.expm1(-2.0 * absr)          # 1 - q, accurate near 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 2.0 * absr * q / em - np.log1p(-q)
    out = np.where(absr == 0.0, np.inf, out)
    return float(out) if scalar else out


def v_prime(r):
    """d/dr of v: -r / sinh(r)^2 = -4 r q / (1-q)^2.  Raises at r = 0."""
    arr, scalar = _as_array(r)
    absr = np.abs(arr)
    if np.any(absr == 0.0):
        raise ValueError("v_prime is undefined at r = 0")
    q = np.exp(-2.0 * absr)
    em = -np.expm1(-2.0 * absr)
    out = -4.0 * absr * q / (em * em)
    out = np.sign(arr) * out
    return float(out) if scalar else out


def v_second(r):
    """d^2/dr^2 of v: (2 r coth r - 1) / sinh(r)^2."""
    arr, scalar = _as_array(r)
    absr = np.abs(arr)
    if np.any(absr == 0.0):
        raise ValueError("v_second is undefined at r = 0")
    q = np.exp(-2.0 * absr)
    em = -np.expm1(-2.0 * absr)
    out = (2.0 * absr * (1.0 + q) / em - 1.0) * 4.0 * q / (em * em)
    return float(out) if scalar else out


def w(r, a):
    """Opposite-sign wall potential of phase-shift parameter ``a``.

    w(r, a) = log(2 (cosh 2r + a)) / 2 - r sinh(2r) / (cosh 2r + a).
    Finite everywhere for a > -1; w(., -1) = -v(.) (opposite force).
    """
    a = _check_phase_shift(a)
    arr, scalar = _as_array(r)
    if a == -1.0:
        out = -np.asarray(v(arr))
        return float(out) if scalar else out
    absr = np.abs(arr)
    e2 = np.exp(-2.0 * absr)
    e4 = e2 * e2
    q = e4 + 2.0 * a * e2
    # w = log1p(q)/2 + r (q + e^{-4r}) / (1 + q); both terms >= 0
    out = 0.5 * np.log1p(q) + absr * (q + e4) / (1.0 + q)
    return float(out) if scalar else out


def w_prime(r, a):
    """d/dr of w: -2 r (1 + a cosh 2r) / (cosh 2r + a)^2."""
    a = _check_phase_shift(a)
    arr, scalar = _as_array(r)
    if a == -1.0:
        out = -np.asarray(v_prime(arr))
        return float(out) if scalar else out
    absr = np.abs(arr)
    e2 = np.exp(-2.0 * absr)
    e4 = e2 * e2
    q = e4 + 2.0 * a * e2
    out = -2.0 * absr * (4.0 * e4 + 2.0 * a * e2 * (1.0 + e4)) / (1.0 + q) ** 2
    out = np.sign(arr) * out
    return float(out) if scalar else out


def w_second(r, a):
    """d^2/dr^2 of w.

    4 r sinh(2r) (a cosh 2r + 2 - a^2) / (cosh 2r + a)^3
    - 2 (1 + a cosh 2r) / (cosh 2r + a)^2.
    """
    a = _check_phase_shift(a)
    arr, scalar = _as_array(r)
    if a == -1.0:
        out = -np.asarray(v_second(arr))
        return float(out) if scalar else out
    absr = np.abs(arr)
    e2 = np.exp(-2.0 * absr)
    e4 = e2 * e2
    q = e4 + 2.0 * a * e2
    t1 = (
        16.0 * absr * e2 * (1.0 - e4)
        * (0.5 * a * (1.0 + e4) + (2.0 - a * a) * e2)
        / (1.0 + q) ** 3
    )
    t2 = (8.0 * e4 + 4.0 * a * e2 * (1.0 + e4)) / (1.0 + q) ** 2
    out = t1 - t2
    return float(out) if scalar else out


def f_eff(f, x: float) -> float:
    """Half-lattice sum sum_{k>=1} f(k x) truncated once e^{-Kx} <= 1e-14.

    ``f`` must decay at least like e^{-r} for the truncation rule to bound the
    dropped tail; the shipped wall potentials decay like e^{-2r}.
    """
    x = float(x)
    if x <= 0.0:
        raise ValueError(f"lattice spacing must be positive, got {x}")
    kmax = max(5, int(math.ceil(_EFF_LOG_TOL / x)))
    terms = f(x * np.arange(1, kmax + 1, dtype=float))
    return float(np.sum(terms))


def v_eff(x: float) -> float:
    """sum_{k>=1} v(k x); interaction with an equispaced half-lattice."""
    return f_eff(v, x)


def w_eff(x: float, a) -> float:
    """sum_{k>=1} w(k x, a)."""
    a = _check_phase_shift(a)
    return f_eff(lambda r: w(r, a), x)


def abs_v_prime_eff(x: float) -> float:
    """sum_{k>=1} |v'(k x)|; the same-sign force exerted by a half-lattice."""
    return f_eff(lambda r: np.abs(v_prime(r)), x)


def r_star(a) -> float:
    """Location of the maximum of |w'(., a)| on (0, inf).

    Golden-section bracketing followed by a Newton polish on d/dr |w'|;
    absolute tolerance 1e-10 in r.  For a = 1 the stationarity condition is
    2 r tanh r = 1.
    """
    a = _check_phase_shift(a)
    if a < 0.0:
        raise ValueError("r_star is defined for the repelling regime a in [0, 1]")

    def neg_abs_wp(r):
        return -abs(w_prime(r, a))

    # |w'| vanishes at 0 and at infinity and has a single interior maximum,
    # so a golden-section search on (0, 5] brackets it.
    lo, hi = 1e-8, 5.0
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = neg_abs_wp(c), neg_abs_wp(d)
    for _ in range(120):
        if hi - lo < 1e-12:
            break
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = neg_abs_wp(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = neg_abs_wp(d)
    r = 0.5 * (lo + hi)
    # polish: w''(r*) = 0 at the inflection where |w'| is maximal
    for _ in range(60):
        f1 = w_second(r, a)
        h = max(1e-7, 1e-7 * r)
        f1p = (w_second(r + h, a) - w_second(r - h, a)) / (2.0 * h)
        if f1p == 0.0:
            break
        step = f1 / f1p
        r_new = r - step
        if not (0.0 < r_new < 10.0):
            break
        r = r_new
        if abs(step) < 1e-13:
            break
    assert 0.0 < r < 5.0 and abs(w_second(r, a)) < 1e-8, "maximiser bracket lost"
    return float(r)


def integral_0_inf(which: str, a=None) -> float:
    """Integral of v or w(., a) over (0, inf), absolute error <= 1e-10.

    Adaptive quadrature on (0, TAIL_CUTOFF] with extra panel points grading
    into the logarithmic singularity of v at 0; the dropped exponential tail
    beyond the cutoff is below 2 (R+1) e^{-2R} ~ 1e-25.
    """
    if which == "V":
        fun = v
        # graded panel edges resolve the -log r behaviour near 0
        pts = [1e-12, 1e-9, 1e-6, 1e-3, 0.1, 1.0, 5.0, 15.0]
    elif which == "W":
        a = _check_phase_shift(1.0 if a is None else a)
        if a < 0.0:
            raise ValueError("integral of w requires a in [0, 1]")
        fun = lambda r: w(r, a)  # noqa: E731
        pts = [0.5, 2.0, 5.0, 15.0]
    else:
        raise ValueError(f"unknown potential tag {which!r}; expected 'V' or 'W'")
    total = 0.0
    edges = [0.0] + pts + [TAIL_CUTOFF]
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _err = quad(fun, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += val
    return total


def convexity_shift(a, r_max: float, num: int = 4001) -> float:
    """Lower bound min(v'', w'') sampled on (0, r_max]; negative for a in [0,1].

    This is the pairwise-potential convexity defect that controls the
    quadratic comparator of the discrete energy.
    """
    a = _check_phase_shift(a)
    grid = np.linspace(r_max / num, r_max, num)
    lam = min(float(np.min(v_second(grid))), float(np.min(w_second(grid, a))))
    return min(lam, 0.0)


def solve_w1_stationarity() -> float:
    """Root of 2 r tanh r = 1, the a = 1 stationarity condition for r_star."""
    return brentq(lambda r: 2.0 * r * math.tanh(r) - 1.0, 0.1, 2.0, xtol=1e-14)
