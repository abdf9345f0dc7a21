"""Long-time integration of the wall pile-up gradient flow dx/dt = -n grad E.

The default integrator is an adaptive implicit trapezoid rule (A-stable) with
an analytic Jacobian, chosen because step sizes must grow to ~1e9 near the
pile-up equilibria to reach the quoted end time 1e10.  Barrier constraints are
handled with an active set: walls pressed against 0 or 1 are pinned for the
step, everything else is solved implicitly and clipped back to [0, 1].  Local
error is estimated by step doubling; steps that would cross same-sign walls
are rejected and retried smaller.

An explicit embedded Runge-Kutta 5(4) pair ships as a cross-check method for
short horizons (t <= 1e2); it shares the projection and ordering safeguards.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .energy import Configuration, ModelParams, energy_merged, grad_merged, hessian_merged

_METHODS = ("implicit_trapezoid", "explicit_embedded")


class StepSizeUnderflowError(RuntimeError):
    """The controller could not find an acceptable step above the dt floor."""


@dataclass(frozen=True)
class IntegratorOptions:
    rtol: float = 1e-8
    atol: float = 1e-10
    t_end: float = 1e10
    method: str = "implicit_trapezoid"
    max_steps: int = 2_000_000
    sample_times: tuple[float, ...] = ()

    def __post_init__(self):
        if self.rtol <= 0.0 or self.atol <= 0.0:
            raise ValueError("rtol and atol must be positive")
        if self.t_end <= 0.0:
            raise ValueError("t_end must be positive")
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        object.__setattr__(self, "sample_times",
                           tuple(sorted(float(t) for t in self.sample_times)))


@dataclass(frozen=True)
class FlowState:
    t: float
    config: Configuration


@dataclass
class Trajectory:
    params: ModelParams
    options: IntegratorOptions
    times: list[float]
    states: list[Configuration]
    stats: dict = field(default_factory=dict)
    complete: bool = True

    @property
    def final(self) -> FlowState:
        return FlowState(self.times[-1], self.states[-1])

    def to_csv(self) -> str:
        """One row per (sample_time, species, index, position)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", "species", "index", "position"])
        for t, c in zip(self.times, self.states):
            for i, xi in enumerate(c.positions_plus):
                writer.writerow([format(t, ".17g"), "+1", i + 1, format(xi, ".17g")])
            for i, xi in enumerate(c.positions_minus):
                writer.writerow([format(t, ".17g"), "-1", i + 1, format(xi, ".17g")])
        return buf.getvalue()

    def metadata(self) -> dict:
        return {
            "params": {
                "n_plus": self.params.n_plus,
                "n_minus": self.params.n_minus,
                "alpha_n": self.params.alpha_n,
                "gamma_n": self.params.gamma_n,
                "a": self.params.a,
            },
            "options": {
                "rtol": self.options.rtol,
                "atol": self.options.atol,
                "t_end": self.options.t_end,
                "method": self.options.method,
                "max_steps": self.options.max_steps,
            },
            "stats": self.stats,
            "complete": self.complete,
        }

    def metadata_json(self) -> str:
        return json.dumps(self.metadata(), indent=2, sort_keys=True)


def initial_condition_equispaced(n: int) -> Configuration:
    """Fully separated equispaced start: x_i^+ = (i-1)/n, x_i^- = 1/2 + i/n."""
    if n % 2 != 0 or n < 2:
        raise ValueError(f"n must be even and >= 2, got {n}")
    i = np.arange(1, n // 2 + 1, dtype=float)
    return Configuration((i - 1.0) / n, 0.5 + i / n)


def geometric_time_grid(t_lo: float = 1e-4, t_hi: float = 1e10,
                        per_decade: int = 15) -> tuple[float, ...]:
    """Log-uniform sample times, ``per_decade`` points per decade."""
    decades = math.log10(t_hi / t_lo)
    num = int(round(decades * per_decade)) + 1
    return tuple(np.logspace(math.log10(t_lo), math.log10(t_hi), num))


def _species_ordered(x: np.ndarray, b: np.ndarray) -> bool:
    return bool(np.all(np.diff(x[b > 0]) >= 0.0)
                and np.all(np.diff(x[b < 0]) >= 0.0))


class _TrapezoidStepper:
    """Projected implicit trapezoid with step doubling and Jacobian reuse."""

    kappa = 0.05          # Newton stop: scaled update below kappa
    max_newton = 10
    growth_cap = 5.0
    shrink_floor = 0.2
    deadband = (0.92, 1.25)   # keep h (and factorizations) inside this band

    def __init__(self, x, b, p: ModelParams, opts: IntegratorOptions):
        self.x = x.copy()
        self.b = b
        self.p = p
        self.opts = opts
        self.t = 0.0
        self.stats = dict(n_accepted=0, n_rejected=0, n_newton=0, n_jac=0,
                          n_lu=0, n_force=0, reject_newton=0, reject_error=0,
                          reject_order=0, reject_energy=0)
        self.f = self._force(self.x)
        self.jac = None
        self.jac_version = 0
        self.jac_fresh = False
        self.lu_cache: dict = {}
        self.active = np.zeros(len(x), dtype=bool)
        self.energy_now = energy_merged(self.x, self.b, p)
        scale = opts.atol + opts.rtol * float(np.abs(self.x).max())
        fmax = float(np.abs(self.f).max()) + 1e-300
        self.h = min(1e-8, 1e-2 * scale / fmax, opts.t_end)

    # -- model plumbing ---------------------------------------------------
    def _force(self, x) -> np.ndarray:
        self.stats["n_force"] += 1
        d = x[:, None] - x[None, :]
        same = (self.b[:, None] * self.b[None, :]) > 0
        np.fill_diagonal(same, False)
        if np.any(np.abs(d[same]) < 1e-14):
            return np.full_like(x, np.nan)
        g = grad_merged(x, self.b, self.p, check=False)
        return -self.p.n * g

    def _refresh_jacobian(self, x) -> None:
        h = hessian_merged(x, self.b, self.p)
        self.jac = -self.p.n * h
        self.jac_version += 1
        self.jac_fresh = True
        self.lu_cache.clear()
        self.stats["n_jac"] += 1

    def _get_lu(self, h: float, free_key: bytes, free: np.ndarray):
        key = (self.jac_version, h, free_key)
        if key not in self.lu_cache:
            jff = self.jac[np.ix_(free, free)]
            self.stats["n_lu"] += 1
            self.lu_cache[key] = lu_factor(np.eye(free.sum()) - 0.5 * h * jff)
            if len(self.lu_cache) > 8:
                oldest = next(iter(self.lu_cache))
                del self.lu_cache[oldest]
        return self.lu_cache[key]

    # -- implicit solve ---------------------------------------------------
    def _solve(self, x_from, h, f_from, act, free, free_key):
        """Solve y = x + (h/2)(f(x) + f(y)) on the free coordinates."""
        atol, rtol = self.opts.atol, self.opts.rtol
        # Large-step predictor: an Euler guess h*f can hurl walls across each
        # other near equilibrium; fall back to y0 = x so Newton heads for the
        # equilibrium instead.
        jump = h * float(np.abs(f_from).max())
        if jump < 0.05:
            y = np.clip(x_from + h * f_from, 0.0, 1.0)
            y[act] = x_from[act]
        else:
            y = x_from.copy()
        for attempt in range(2):
            lu = self._get_lu(h, free_key, free)
            gnorm_prev = math.inf
            converged = False
            for _ in range(self.max_newton):
                fy = self._force(y)
                if not np.all(np.isfinite(fy)):
                    break
                g = y - x_from - 0.5 * h * (f_from + fy)
                gf = g[free]
                gnorm = float(np.abs(gf).max())
                dy = lu_solve(lu, -gf)
                self.stats["n_newton"] += 1
                # damp updates that increase the residual (stale Jacobian or
                # out-of-basin iterate)
                if gnorm > 2.0 * gnorm_prev:
                    break
                gnorm_prev = min(gnorm_prev, gnorm)
                y[free] += dy
                sc = atol + rtol * np.abs(y[free])
                if float(np.max(np.abs(dy) / sc)) < self.kappa:
                    converged = True
                    break
            if converged:
                return np.clip(y, 0.0, 1.0)
            if self.jac_fresh:
                return None
            self._refresh_jacobian(x_from)
            jump = h * float(np.abs(f_from).max())
            if jump < 0.05:
                y = np.clip(x_from + h * f_from, 0.0, 1.0)
                y[act] = x_from[act]
            else:
                y = x_from.copy()
        return None

    # -- one controller iteration -----------------------------------------
    def attempt_step(self, h: float):
        """Try one step of size h; returns (accepted, new_h, err_ratio)."""
        x, f = self.x, self.f
        act = ((x <= 0.0) & (f < 0.0)) | ((x >= 1.0) & (f > 0.0))
        free = ~act
        free_key = free.tobytes()
        if self.jac is None:
            self._refresh_jacobian(x)

        y_full = self._solve(x, h, f, act, free, free_key)
        y_half = y_mid = None
        if y_full is not None:
            y_mid = self._solve(x, 0.5 * h, f, act, free, free_key)
            if y_mid is not None:
                f_mid = self._force(y_mid)
                if np.all(np.isfinite(f_mid)):
                    y_half = self._solve(y_mid, 0.5 * h, f_mid, act, free, free_key)
        if y_half is None:
            self.stats["reject_newton"] += 1
            if not self.jac_fresh:
                self._refresh_jacobian(x)
            return False, 0.25 * h, None

        err = np.abs(y_half - y_full) / 3.0
        sc = self.opts.atol + self.opts.rtol * np.abs(y_half)
        ratio = float(np.max(err / sc))
        if ratio > 1.0:
            self.stats["reject_error"] += 1
            return False, h * max(self.shrink_floor,
                                  min(0.7, 0.9 * ratio ** (-1.0 / 3.0))), ratio
        if not (_species_ordered(y_half, self.b) and _species_ordered(y_mid, self.b)):
            self.stats["reject_order"] += 1
            return False, 0.25 * h, ratio
        e_new = energy_merged(y_half, self.b, self.p)
        if e_new > self.energy_now + 10.0 * self.opts.atol:
            self.stats["reject_energy"] += 1
            return False, 0.5 * h, ratio

        self.x = y_half
        self.t += h
        self.f = self._force(self.x)
        self.energy_now = e_new
        self.jac_fresh = False
        self.stats["n_accepted"] += 1
        if ratio > 0.0:
            fac = min(self.growth_cap, max(self.shrink_floor,
                                           0.9 * ratio ** (-1.0 / 3.0)))
        else:
            fac = self.growth_cap
        if self.deadband[0] <= fac <= self.deadband[1]:
            fac = 1.0
        return True, h * fac, ratio


def _integrate_trapezoid(x, b, p, opts, record, grad_stop=None):
    stepper = _TrapezoidStepper(x, b, p, opts)
    samples = [t for t in opts.sample_times if 0.0 < t <= opts.t_end]
    if record is not None and (not samples or samples[0] > 0.0):
        record(0.0, stepper.x)
    next_i = 0
    stop_reason = "t_end"
    last_recorded = 0.0 if record is not None else None
    while stepper.t < opts.t_end:
        if stepper.stats["n_accepted"] + stepper.stats["n_rejected"] >= opts.max_steps:
            stop_reason = "max_steps"
            break
        h = min(stepper.h, opts.t_end - stepper.t)
        if next_i < len(samples):
            h = min(h, samples[next_i] - stepper.t)
        capped = h < stepper.h * (1.0 - 1e-12)
        if h <= 2.25e-16 * max(stepper.t, 1e-30):
            raise StepSizeUnderflowError(
                f"step size underflow at t = {stepper.t:.3e}")
        ok, h_new, _ratio = stepper.attempt_step(h)
        if not ok:
            stepper.stats["n_rejected"] += 1
            stepper.h = max(h_new, 1e-300)
        elif not capped:
            # landing on a sample time says nothing about the error at the
            # controller's recommended step, so keep it in that case
            stepper.h = max(h_new, 1e-300)
        if ok:
            while (next_i < len(samples)
                   and stepper.t >= samples[next_i] * (1.0 - 1e-12)):
                if record is not None:
                    record(samples[next_i], stepper.x)
                    last_recorded = samples[next_i]
                next_i += 1
            if grad_stop is not None and grad_stop(stepper):
                stop_reason = "gradient"
                break
    if record is not None and stepper.t > last_recorded * (1.0 + 1e-12):
        record(stepper.t, stepper.x)
    return stepper, stop_reason


# Dormand-Prince 5(4) tableau for the explicit cross-check path.
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_DP_B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
          187 / 2100, 1 / 40)


def _integrate_rk45(x, b, p, opts, record):
    if opts.t_end > 1e2 + 1e-9:
        raise ValueError("the explicit cross-check method is limited to t_end <= 1e2")

    def force(y):
        return -p.n * grad_merged(y, b, p, check=False)

    stats = dict(n_accepted=0, n_rejected=0, n_force=0)
    t = 0.0
    f = force(x)
    stats["n_force"] += 1
    scale = opts.atol + opts.rtol * float(np.abs(x).max())
    h = min(1e-8, 1e-2 * scale / (float(np.abs(f).max()) + 1e-300), opts.t_end)
    samples = [s for s in opts.sample_times if 0.0 < s <= opts.t_end]
    if record is not None and (not samples or samples[0] > 0.0):
        record(0.0, x)
    next_i = 0
    while t < opts.t_end:
        if stats["n_accepted"] + stats["n_rejected"] >= opts.max_steps:
            break
        hh = min(h, opts.t_end - t)
        if next_i < len(samples):
            hh = min(hh, samples[next_i] - t)
        if hh <= 2.25e-16 * max(t, 1e-30):
            raise StepSizeUnderflowError(f"step size underflow at t = {t:.3e}")
        k = [f]
        bad = False
        for row in _DP_A[1:]:
            y = x + hh * sum(c * ki for c, ki in zip(row, k))
            fy = force(np.clip(y, 0.0, 1.0))
            stats["n_force"] += 1
            if not np.all(np.isfinite(fy)):
                bad = True
                break
            k.append(fy)
        if not bad:
            y5 = np.clip(x + hh * sum(c * ki for c, ki in zip(_DP_B5, k)), 0.0, 1.0)
            y4 = np.clip(x + hh * sum(c * ki for c, ki in zip(_DP_B4, k)), 0.0, 1.0)
            err = np.abs(y5 - y4)
            sc = opts.atol + opts.rtol * np.abs(y5)
            ratio = float(np.max(err / sc))
        if bad or ratio > 1.0 or not _species_ordered(y5, b):
            stats["n_rejected"] += 1
            h = hh * (0.25 if bad else max(0.2, min(0.7, 0.9 * ratio ** -0.2)))
            continue
        x, t = y5, t + hh
        f = force(x)
        stats["n_force"] += 1
        stats["n_accepted"] += 1
        h = hh * min(5.0, max(0.2, 0.9 * ratio ** -0.2 if ratio > 0 else 5.0))
        while next_i < len(samples) and t >= samples[next_i] * (1 - 1e-12):
            if record is not None:
                record(samples[next_i], x)
            next_i += 1
    if record is not None and (not samples or samples[-1] < opts.t_end * (1 - 1e-12)):
        record(t, x)
    return x, t, stats


def integrate(c0: Configuration, p: ModelParams,
              opts: IntegratorOptions | None = None) -> Trajectory:
    """Integrate the gradient flow from ``c0`` and record sampled states."""
    opts = opts or IntegratorOptions()
    p.matches(c0)
    x = np.concatenate([c0.positions_plus, c0.positions_minus])
    b = np.concatenate([np.ones(p.n_plus, dtype=int), -np.ones(p.n_minus, dtype=int)])
    times: list[float] = []
    states: list[Configuration] = []

    def record(t, xv):
        times.append(float(t))
        states.append(Configuration(xv[b > 0], xv[b < 0]))

    if opts.method == "explicit_embedded":
        _xf, t_reached, stats = _integrate_rk45(x, b, p, opts, record)
        complete = t_reached >= opts.t_end * (1 - 1e-12)
    else:
        stepper, reason = _integrate_trapezoid(x, b, p, opts, record)
        stats = stepper.stats
        complete = reason == "t_end" and stepper.t >= opts.t_end * (1 - 1e-12)
    return Trajectory(params=p, options=opts, times=times, states=states,
                      stats=stats, complete=complete)


def projected_gradient_norm(x: np.ndarray, b: np.ndarray, p: ModelParams) -> float:
    """Max-norm of the flow velocity with barrier-pinned components removed.

    At the barriers the raw force points outward forever; the projected norm
    is the quantity that vanishes at a constrained equilibrium.
    """
    f = -p.n * grad_merged(x, b, p, check=False)
    f = f.copy()
    f[(x <= 0.0) & (f < 0.0)] = 0.0
    f[(x >= 1.0) & (f > 0.0)] = 0.0
    return float(np.abs(f).max())


def run_to_equilibrium(c0: Configuration, p: ModelParams,
                       grad_tol: float = 1e-12,
                       opts: IntegratorOptions | None = None
                       ) -> tuple[FlowState, str]:
    """Integrate until the projected flow speed drops below ``grad_tol``.

    Returns the final state together with the stopping reason, one of
    ``"gradient"`` or ``"t_end"``.  The check uses n*grad E with outward
    barrier components projected out, since those never vanish at a pile-up.
    """
    opts = opts or IntegratorOptions()
    p.matches(c0)
    x = np.concatenate([c0.positions_plus, c0.positions_minus])
    b = np.concatenate([np.ones(p.n_plus, dtype=int), -np.ones(p.n_minus, dtype=int)])
    if projected_gradient_norm(x, b, p) <= grad_tol:
        return FlowState(0.0, c0), "gradient"

    def grad_stop(stepper) -> bool:
        ff = stepper.f.copy()
        ff[(stepper.x <= 0.0) & (ff < 0.0)] = 0.0
        ff[(stepper.x >= 1.0) & (ff > 0.0)] = 0.0
        return float(np.abs(ff).max()) <= grad_tol

    stepper, reason = _integrate_trapezoid(x, b, p, opts, None, grad_stop=grad_stop)
    cfg = Configuration(stepper.x[b > 0], stepper.x[b < 0])
    return FlowState(stepper.t, cfg), ("gradient" if reason == "gradient" else "t_end")
