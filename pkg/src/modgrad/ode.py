"""Adaptive Runge-Kutta integration of x' = P(t) grad f(x) with Lyapunov tracing.

Dormand-Prince 5(4) embedded pair with PI step-size control and the FSAL
property; dense output between accepted steps is 4th-order (cubic) Hermite
interpolation from the stored endpoint derivatives.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import OutsideDomainError, EvalDomainError

__all__ = [
    "SimOptions",
    "Status",
    "Trajectory",
    "LyapunovTrace",
    "simulate",
    "lyapunov_trace",
]

# Butcher tableau, Dormand & Prince (1980)
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = tuple(
    np.array(row)
    for row in (
        (),
        (1 / 5,),
        (3 / 40, 9 / 40),
        (44 / 45, -56 / 15, 32 / 9),
        (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
        (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
        (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
    )
)
# 5th-order weights equal the last A row (FSAL); error weights are b5 - b4
_E = np.array(
    (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_RHS_FLOOR = 1e-10  # |rhs| must drop below this for convergence detection
# Inside the convergence radius the error is measured against the distance
# to the target instead of |x|.  With the usual rel_tol*|x| scale the
# controller can pin the step size where the method's stability function
# equals one, freezing the transient above the |rhs| floor forever.
_NEAR_TARGET_REL = 1e-2


class Status(enum.Enum):
    REACHED_END = "ReachedEnd"
    CONVERGED = "Converged"
    LEFT_DOMAIN = "LeftDomain"
    STEP_FAILURE = "StepFailure"


@dataclass(frozen=True)
class SimOptions:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    h_init: float | None = None
    h_min: float = 1e-12
    h_max: float | None = None  # default (t_end - t0) / 10
    convergence_radius: float | None = None
    convergence_target: tuple | None = None
    max_steps: int = 1_000_000


@dataclass
class Trajectory:
    """Accepted samples of a single solution, with stored derivatives so
    any interior time can be interpolated."""

    t0: float
    status: Status
    times: np.ndarray          # strictly increasing accepted times
    states: np.ndarray         # shape (len(times), n)
    derivs: np.ndarray         # rhs at each accepted sample
    converged_at: float | None = None
    exit_point: np.ndarray | None = None
    detail: str = ""

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def final_time(self):
        return float(self.times[-1])

    def sample_at(self, t):
        """Cubic Hermite interpolation between the bracketing accepted steps."""
        t = float(t)
        ts = self.times
        if t < ts[0] or t > ts[-1]:
            raise ValueError(f"time {t} outside trajectory range [{ts[0]}, {ts[-1]}]")
        k = int(np.searchsorted(ts, t, side="right") - 1)
        if k >= len(ts) - 1:
            return self.states[-1].copy()
        h = ts[k + 1] - ts[k]
        s = (t - ts[k]) / h
        x0, x1 = self.states[k], self.states[k + 1]
        f0, f1 = self.derivs[k], self.derivs[k + 1]
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * x0 + h10 * h * f0 + h01 * x1 + h11 * h * f1

    def checkpoints(self, times=(10.0, 1e2, 1e3, 1e4)):
        """States at exponentially spaced times that fall inside the run;
        the finite-horizon stand-in for 'what happens as t grows'."""
        out = []
        for t in times:
            if self.times[0] <= t <= self.times[-1]:
                out.append((t, self.sample_at(t)))
        return out


def _error_norm(err, x_old, x_new, rel_tol, abs_tol):
    scale = abs_tol + rel_tol * np.maximum(np.abs(x_old), np.abs(x_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(rhs, t0, x0, f0, t_end, rel_tol, abs_tol):
    """Hairer's starting-step heuristic, clipped to the span."""
    scale = abs_tol + rel_tol * np.abs(x0)
    d0 = float(np.sqrt(np.mean((x0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean((f0 / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, t_end - t0)
    x1 = x0 + h0 * f0
    try:
        f1 = rhs(t0 + h0, x1)
    except (OutsideDomainError, EvalDomainError):
        return max(1e-6, h0 * 1e-3)
    d2 = float(np.sqrt(np.mean(((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, t_end - t0)


def simulate(system, x0, t0, t_end, opts=None):
    """Integrate the system from x(t0) = x0 up to t_end.

    Stops early with CONVERGED when the state is within
    ``convergence_radius`` of ``convergence_target`` and |rhs| has dropped
    below 1e-10 (proximity alone is not convergence: Example-2.1-style
    trajectories stall near, but never at, the equilibrium).  Leaving the
    domain stops with LEFT_DOMAIN; a step size forced below h_min stops
    with STEP_FAILURE.
    """
    opts = opts or SimOptions()
    t0 = float(t0)
    t_end = float(t_end)
    if not (0.0 <= t0 < t_end):
        raise ValueError("need 0 <= t0 < t_end")
    x0 = np.asarray(x0, dtype=float)
    if not system.field.inside(x0):
        raise OutsideDomainError(f"x0 {x0.tolist()} is outside the domain")

    h_max = opts.h_max if opts.h_max is not None else (t_end - t0) / 10.0
    target = None
    if opts.convergence_target is not None:
        target = np.asarray(opts.convergence_target, dtype=float)
        if opts.convergence_radius is None:
            raise ValueError("convergence_target requires convergence_radius")

    rhs = system.rhs
    times = [t0]
    states = [x0.copy()]
    f_now = np.asarray(rhs(t0, x0), dtype=float)
    derivs = [f_now.copy()]

    def finish(status, **kw):
        return Trajectory(
            t0=t0,
            status=status,
            times=np.array(times),
            states=np.array(states),
            derivs=np.array(derivs),
            **kw,
        )

    def converged(x, f):
        return (
            target is not None
            and np.linalg.norm(x - target) < opts.convergence_radius
            and np.linalg.norm(f) < _RHS_FLOOR
        )

    if converged(x0, f_now):
        return finish(Status.CONVERGED, converged_at=t0)

    t = t0
    x = x0.copy()
    h = opts.h_init if opts.h_init is not None else _initial_step(
        rhs, t0, x0, f_now, t_end, opts.rel_tol, opts.abs_tol
    )
    h = min(max(h, opts.h_min), h_max, t_end - t0)
    err_prev = 1e-4
    k = np.empty((7, x0.size))
    rejected_at_hmin = 0

    for _ in range(opts.max_steps):
        h = min(h, t_end - t)
        k[0] = f_now
        try:
            for i in range(1, 7):
                xi = x + h * (_A[i] @ k[:i])
                k[i] = rhs(t + _C[i] * h, xi)
        except (OutsideDomainError, EvalDomainError):
            # a stage left D: the step straddles the boundary
            return finish(Status.LEFT_DOMAIN, exit_point=xi.copy(),
                          detail=f"stage evaluation left the domain near t={t + h:.6g}")
        x_new = xi  # 7th stage point is the 5th-order solution (FSAL)
        err_vec = h * (_E @ k)
        if target is not None:
            amp = max(
                float(np.linalg.norm(x - target)),
                float(np.linalg.norm(x_new - target)),
            )
            if amp < opts.convergence_radius:
                scale = opts.abs_tol + _NEAR_TARGET_REL * amp
                err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
            else:
                err = _error_norm(err_vec, x, x_new, opts.rel_tol, opts.abs_tol)
        else:
            err = _error_norm(err_vec, x, x_new, opts.rel_tol, opts.abs_tol)

        if err <= 1.0:
            # accept
            t_new = t + h
            f_new = k[6]
            times.append(t_new)
            states.append(x_new.copy())
            derivs.append(f_new.copy())
            if not system.field.inside(x_new):
                return finish(Status.LEFT_DOMAIN, exit_point=x_new.copy(),
                              detail=f"accepted state left the domain at t={t_new:.6g}")
            if converged(x_new, f_new):
                return finish(Status.CONVERGED, converged_at=t_new)
            if t_new >= t_end:
                return finish(Status.REACHED_END)
            # PI controller (Gustafsson): react to this error and the last one
            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = _SAFETY * err ** -0.17 * err_prev ** 0.04
                factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            err_prev = max(err, 1e-4)
            t = t_new
            x = x_new.copy()
            f_now = f_new.copy()
            h = min(max(h * factor, opts.h_min), h_max)
            rejected_at_hmin = 0
        else:
            # reject
            if h <= opts.h_min * (1.0 + 1e-12):
                rejected_at_hmin += 1
                if rejected_at_hmin >= 3:
                    return finish(Status.STEP_FAILURE,
                                  detail=f"step size pinned at h_min={opts.h_min:g} "
                                         f"with error {err:.3g} at t={t:.6g}")
            factor = max(0.1, _SAFETY * err ** -0.2)
            h = max(h * factor, opts.h_min)

    return finish(Status.STEP_FAILURE, detail="max_steps exhausted")


@dataclass(frozen=True)
class LyapunovTrace:
    """Per-sample Lyapunov data for V(x) = M - f(x) along a trajectory.

    Columns: t, V_x, V'_x, lambda_1(P(t)), |grad f|^2.  V'_x comes from the
    formula -(P(t) grad f) . grad f, not from differencing, so the bound
    V'_x <= -lambda_1 |grad f|^2 is checkable row by row.
    """

    anchor: tuple
    anchor_value: float
    rows: np.ndarray  # shape (m, 5)

    def max_bound_violation(self):
        """max over rows of V'_x - (-lambda_1 |grad f|^2); <= 0 is ideal."""
        return float(np.max(self.rows[:, 2] + self.rows[:, 3] * self.rows[:, 4]))

    def max_increase(self):
        """max over consecutive samples of V(t_{k+1}) - V(t_k)."""
        if len(self.rows) < 2:
            return 0.0
        return float(np.max(np.diff(self.rows[:, 1])))


def lyapunov_trace(system, traj, anchor):
    """Lyapunov trace of *traj* for the candidate equilibrium *anchor*."""
    anchor = np.asarray(anchor, dtype=float)
    m_value = system.field.eval(anchor)
    rows = np.empty((len(traj.times), 5))
    for i, (t, x) in enumerate(zip(traj.times, traj.states)):
        g = system.field.grad(x)
        p = system.matrix.value(t)
        rows[i, 0] = t
        rows[i, 1] = m_value - system.field.eval(x)
        rows[i, 2] = -float((p @ g) @ g)
        rows[i, 3] = linalg.eigen_smallest(p)
        rows[i, 4] = float(g @ g)
    return LyapunovTrace(anchor=tuple(anchor.tolist()), anchor_value=m_value, rows=rows)
