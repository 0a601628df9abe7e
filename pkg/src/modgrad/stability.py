"""Stability certification for equilibria of the modified-gradient system.

``ec_check`` grades the eigenvalue condition (divergence of the integral of
the smallest eigenvalue of P(t)) from finite-horizon evidence; ``certify``
assembles the hypothesis checks for one equilibrium and emits the strongest
supported conclusion.  Verdicts are graded, never boolean: an improper
integral cannot be decided from samples, only witnessed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import linalg, ode
from .equilibria import (
    Classification,
    CriticalPoint,
    IsolationKind,
    IsolationVerdict,
    _shell_points,
    isolation_probe,
)
from .errors import OutsideDomainError

__all__ = [
    "EcKind",
    "EcVerdict",
    "Conclusion",
    "StabilityReport",
    "CertifyOptions",
    "ec_check",
    "certify",
]


class EcKind(enum.Enum):
    DIVERGENT_LIKELY = "DivergentLikely"
    CONVERGENT_LIKELY = "ConvergentLikely"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class EcVerdict:
    kind: EcKind
    horizon_integral: float  # integral of lambda_1 over [0, T], clipped at 0
    horizon: float
    tail_exponent: float | None  # fitted p in lambda_1 ~ C t^-p over [T/10, T]
    evidence: str
    clipped_negative: bool = False


class Conclusion(enum.Enum):
    UNIFORMLY_ASYMPTOTICALLY_STABLE = "UniformlyAsymptoticallyStable"
    UNIFORMLY_STABLE = "UniformlyStable"
    NO_CERTIFICATE = "NoCertificate"


# fitted-exponent dead band around the harmonic borderline p = 1
_P_BAND = 0.05
# tail growth of the integral counted as "still growing" (fraction of I(T))
_GROWTH_FRACTION = 0.05
# per-doubling increment ratio above which the tail looks non-summable
_INCREMENT_RATIO = 0.9


def ec_check(matrix, horizon=1e4, quad_tol=2e-5):
    """Grade the eigenvalue condition from the finite horizon [0, T].

    Computes I(T) = integral of max(lambda_1(P(t)), 0), fits the tail decay
    exponent p on [T/10, T], and compares the integral's growth over the
    last doubling against the previous one.  Divergence is called on p
    clearly below 1 or on non-vanishing growth (harmonic decay adds ln 2
    per doubling forever); convergence on p clearly above 1 with a decaying
    or negligible tail.
    """
    horizon = float(horizon)
    if horizon < 100.0:
        raise ValueError("horizon must be >= 100")

    clipped = False

    def integrand(t):
        nonlocal clipped
        lam = matrix.smallest_eigenvalue(t)
        if lam < 0.0:
            clipped = True
            return 0.0
        return lam

    quarters = [0.0, horizon / 4.0, horizon / 2.0, horizon]
    segs = [
        linalg.integrate_adaptive(integrand, a, b, quad_tol / 3.0)
        for a, b in zip(quarters[:-1], quarters[1:])
    ]
    i_quarter = segs[0]
    i_half = segs[0] + segs[1]
    i_full = sum(segs)

    # least-squares fit of log lambda_1 vs log t over the last decade
    ts = np.geomspace(horizon / 10.0, horizon, 64)
    lams = np.array([max(matrix.smallest_eigenvalue(t), 0.0) for t in ts])
    if np.all(lams > 0.0):
        slope, _ = np.polyfit(np.log(ts), np.log(lams), 1)
        p_fit = -float(slope)
    else:
        p_fit = None

    tail = i_full - i_half
    prev_tail = i_half - i_quarter
    growth = tail / i_full if i_full > 0.0 else 0.0
    ratio = tail / prev_tail if prev_tail > 10.0 * quad_tol else None
    noise_floor = 10.0 * quad_tol

    note = (
        f"I(T)={i_full:.6g} at T={horizon:.3g}; I(T)-I(T/2)={tail:.3g} "
        f"({100 * growth:.2f}% of I(T))"
    )
    if p_fit is not None:
        note += f"; fitted tail exponent p={p_fit:.4f}"
    if ratio is not None:
        note += f"; per-doubling increment ratio {ratio:.3f}"
    if clipped:
        note += "; negative lambda_1 samples clipped to 0"

    if i_full <= noise_floor:
        kind = EcKind.CONVERGENT_LIKELY
        note += "; integral negligible at this horizon"
    elif p_fit is not None and p_fit <= 1.0 - _P_BAND:
        kind = EcKind.DIVERGENT_LIKELY
        note += "; decay slower than harmonic"
    elif p_fit is not None and p_fit >= 1.0 + _P_BAND:
        if tail <= noise_floor or growth < _GROWTH_FRACTION or (
            ratio is not None and ratio < _INCREMENT_RATIO
        ):
            kind = EcKind.CONVERGENT_LIKELY
            note += "; decay faster than harmonic with settling tail"
        else:
            kind = EcKind.INCONCLUSIVE
    else:
        # dead band around p = 1: decide on integral growth alone
        if tail > noise_floor and (
            growth >= _GROWTH_FRACTION
            or (ratio is not None and ratio >= _INCREMENT_RATIO)
        ):
            kind = EcKind.DIVERGENT_LIKELY
            note += "; integral still growing at the horizon"
        else:
            kind = EcKind.INCONCLUSIVE

    return EcVerdict(
        kind=kind,
        horizon_integral=i_full,
        horizon=horizon,
        tail_exponent=p_fit,
        evidence=note,
        clipped_negative=clipped,
    )


@dataclass(frozen=True)
class CertifyOptions:
    shell_radius: float | None = None       # local-max probe; default auto
    isolation_shells: tuple | None = None   # default: 3 shells under shell_radius
    grad_floor: float = 1e-8
    samples_per_shell: int = 32
    ec_horizon: float = 1e4
    quad_tol: float = 2e-5
    descent_trajectories: int = 8
    descent_t_end: float = 10.0
    descent_radius_scale: float = 0.5       # start shell, relative to shell_radius
    sim: ode.SimOptions = dc_field(default_factory=ode.SimOptions)


@dataclass(frozen=True)
class DescentSummary:
    trajectories: int
    max_v_increase: float
    max_bound_violation: float
    statuses: tuple

    @property
    def monotone(self):
        return self.max_v_increase <= 1e-7

    @property
    def bound_holds(self):
        return self.max_bound_violation <= 1e-10


@dataclass(frozen=True)
class StabilityReport:
    equilibrium: CriticalPoint
    h1_pass: bool
    h1_note: str
    h2: IsolationVerdict
    h3: EcVerdict
    conclusion: Conclusion
    descent: DescentSummary | None


def _auto_shell_radius(field, point):
    fit = field.box.clip_radius(point)
    # local probes: small relative to the box, strictly inside it
    return min(0.05 * min(hi - lo for lo, hi in field.box.bounds), 0.5 * fit)


def _confirm_local_max(field, point, radius):
    """f strictly smaller at 32 probe points on shells r and r/4.

    Catches flat-topped maxima the Hessian misses, and rejects saddles even
    when their spectrum was misread.
    """
    f0 = field.eval(point)
    worst = -math.inf
    for r in (radius, radius / 4.0):
        for sample in _shell_points(np.asarray(point, float), r, 32, field.dimension):
            if not field.inside(sample):
                return False, "probe shell exits the domain"
            gap = field.eval(sample) - f0
            worst = max(worst, gap)
            if gap >= 0.0:
                return False, (
                    f"f({[round(v, 6) for v in sample.tolist()]}) >= f(x̄) "
                    f"on shell r={r:g}"
                )
    return True, f"f strictly smaller on shells r={radius:g} and r={radius / 4:g} " \
                 f"(worst gap {worst:.3g})"


def certify(system, point, opts=None, critical_points=None):
    """Assemble the H1-H3 verdicts for *point* and conclude.

    H1: classified isolated local max plus a two-shell probe that f is
    strictly smaller nearby.  H2: isolation probe; any *other* known
    critical point within the probe shells also defeats isolation (Newton
    lands on critical manifolds, so the found list is extra evidence).
    H3: the eigenvalue-condition grade.  Failed sub-checks downgrade the
    conclusion; they are results, not errors.
    """
    opts = opts or CertifyOptions()
    fld = system.field
    x = np.asarray(point.location if isinstance(point, CriticalPoint) else point,
                   dtype=float)
    if not isinstance(point, CriticalPoint):
        raise TypeError("certify expects a CriticalPoint from find_critical_points")

    radius = opts.shell_radius if opts.shell_radius is not None \
        else _auto_shell_radius(fld, x)
    on_boundary = radius <= 0.0

    # H1: spectrum says max, and shells confirm
    h1_class = point.classification is Classification.ISOLATED_LOCAL_MAX
    if h1_class and on_boundary:
        h1_pass = False
        h1_note = "anchor sits on the domain boundary; no interior probe shell fits"
    elif h1_class:
        h1_pass, h1_note = _confirm_local_max(fld, x, radius)
        if not h1_pass:
            h1_note = f"shell confirmation failed: {h1_note}"
    else:
        h1_pass = False
        h1_note = f"classification is {point.classification.value}, not a local max"

    # H2: shell probe, plus the found critical list as witnesses
    shells = opts.isolation_shells
    if shells is None:
        shells = (radius, radius / 4.0, radius / 16.0)
    if on_boundary and opts.isolation_shells is None:
        h2 = IsolationVerdict(
            kind=IsolationKind.INCONCLUSIVE,
            min_grad_norm=math.inf,
            witness=None,
            shells=(),
        )
    else:
        try:
            h2 = isolation_probe(fld, x, shells, opts.samples_per_shell, opts.grad_floor)
        except OutsideDomainError:
            # the requested shells do not fit around this point; degrade,
            # do not error (failed sub-checks are results, not crashes)
            h2 = IsolationVerdict(
                kind=IsolationKind.INCONCLUSIVE,
                min_grad_norm=math.inf,
                witness=None,
                shells=tuple(shells),
            )
    if h2.kind is not IsolationKind.NOT_ISOLATED and critical_points:
        for other in critical_points:
            d = float(np.linalg.norm(other.as_array() - x))
            if 0.0 < d <= max(shells):
                h2 = IsolationVerdict(
                    kind=IsolationKind.NOT_ISOLATED,
                    min_grad_norm=0.0,
                    witness=other.location,
                    shells=tuple(shells),
                )
                break

    # H3: eigenvalue condition
    h3 = ec_check(system.matrix, opts.ec_horizon, opts.quad_tol)

    # descent spot checks: 8 trajectories from a start shell around x̄
    descent = None
    if opts.descent_trajectories > 0 and not on_boundary:
        starts = _shell_points(
            x, opts.descent_radius_scale * radius,
            max(opts.descent_trajectories, 8), fld.dimension,
        )[: opts.descent_trajectories]
        max_inc = 0.0
        max_violation = -math.inf
        statuses = []
        sim_opts = ode.SimOptions(
            rel_tol=opts.sim.rel_tol,
            abs_tol=opts.sim.abs_tol,
            h_min=opts.sim.h_min,
            h_max=opts.sim.h_max,
            convergence_target=tuple(x.tolist()),
            convergence_radius=1e-8,
        )
        for start in starts:
            traj = ode.simulate(system, start, 0.0, opts.descent_t_end, sim_opts)
            trace = ode.lyapunov_trace(system, traj, x)
            max_inc = max(max_inc, trace.max_increase())
            max_violation = max(max_violation, trace.max_bound_violation())
            statuses.append(traj.status.value)
        descent = DescentSummary(
            trajectories=len(starts),
            max_v_increase=max_inc,
            max_bound_violation=max_violation,
            statuses=tuple(statuses),
        )

    if h1_pass and h2.kind is IsolationKind.ISOLATED_EVIDENCE \
            and h3.kind is EcKind.DIVERGENT_LIKELY:
        conclusion = Conclusion.UNIFORMLY_ASYMPTOTICALLY_STABLE
    elif h1_pass:
        conclusion = Conclusion.UNIFORMLY_STABLE
    else:
        conclusion = Conclusion.NO_CERTIFICATE

    return StabilityReport(
        equilibrium=point,
        h1_pass=h1_pass,
        h1_note=h1_note,
        h2=h2,
        h3=h3,
        conclusion=conclusion,
        descent=descent,
    )
