"""Basin-of-attraction estimates: grid components, hypothesis checks, verification.

The component E anchored at an equilibrium x̄ is the face-connected flood
fill, from the anchor cell, of cells whose center satisfies c < f < M with
M = f(x̄) (the anchor cell itself is exempt, since f(x̄) = M).  Face
connectivity under-approximates the true component: it never leaks through
a saddle pinch, which keeps the basin guarantee sound.
"""

from __future__ import annotations

import math
import os
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import ode
from .errors import NumericFailure, OutsideDomainError

__all__ = [
    "GridComponent",
    "HypothesisVerdict",
    "HypothesesReport",
    "BasinVerification",
    "extract_component",
    "check_hypotheses",
    "verify_basin",
    "verify_basin_sampled",
    "sample_region",
    "suggest_cut_level",
    "thread_count",
]

MAX_GRID_DIMENSION = 4


def thread_count():
    """Parallelism cap from MODGRAD_THREADS (0 or unset = auto)."""
    raw = os.environ.get("MODGRAD_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        return os.cpu_count() or 1
    return n


@dataclass(frozen=True)
class GridComponent:
    box_lo: tuple
    box_hi: tuple
    resolution: tuple
    mask: np.ndarray           # bool, shape = resolution
    values: np.ndarray         # f at cell centers (NaN outside domain)
    c: float
    m_value: float             # M = f(anchor)
    anchor: tuple
    anchor_cell: tuple
    boundary_cells: tuple      # indices of masked cells with an exposed face

    @property
    def dimension(self):
        return len(self.resolution)

    @property
    def cell_widths(self):
        return tuple(
            (hi - lo) / r
            for lo, hi, r in zip(self.box_lo, self.box_hi, self.resolution)
        )

    @property
    def cell_volume(self):
        v = 1.0
        for w in self.cell_widths:
            v *= w
        return v

    @property
    def masked_area(self):
        return float(self.mask.sum()) * self.cell_volume

    def cell_center(self, idx):
        return np.array(
            [
                lo + (i + 0.5) * w
                for lo, w, i in zip(self.box_lo, self.cell_widths, idx)
            ]
        )

    def cell_of(self, point):
        idx = []
        for v, lo, w, r in zip(point, self.box_lo, self.cell_widths, self.resolution):
            i = int(math.floor((v - lo) / w))
            idx.append(min(max(i, 0), r - 1))
        return tuple(idx)

    def contains_point(self, point):
        """True when *point* falls in a masked cell."""
        if not all(
            lo <= v <= hi for v, lo, hi in zip(point, self.box_lo, self.box_hi)
        ):
            return False
        return bool(self.mask[self.cell_of(point)])

    def masked_centers(self):
        idxs = np.argwhere(self.mask)
        lo = np.array(self.box_lo)
        w = np.array(self.cell_widths)
        return lo + (idxs + 0.5) * w


def extract_component(field, anchor, c, resolution):
    """Flood-fill the component of {c < f < M} (anchor exempt) around x̄."""
    n = field.dimension
    if n > MAX_GRID_DIMENSION:
        raise ValueError(
            f"grid extraction supports dimension <= {MAX_GRID_DIMENSION}; "
            "use rejection-sampled verification for higher dimensions"
        )
    anchor = np.asarray(anchor, dtype=float)
    if not field.inside(anchor):
        raise OutsideDomainError(f"anchor {anchor.tolist()} is outside the domain")
    if np.isscalar(resolution) or isinstance(resolution, int):
        resolution = (int(resolution),) * n
    resolution = tuple(int(r) for r in resolution)
    if len(resolution) != n or any(r < 32 for r in resolution):
        raise ValueError("resolution must be >= 32 cells per axis")
    m_value = float(field.eval(anchor))
    c = float(c)
    if c >= m_value:
        raise ValueError(f"c must be below f(anchor) = {m_value:g}, got {c:g}")

    lo = np.array(field.box.lo)
    hi = np.array(field.box.hi)
    widths = (hi - lo) / np.array(resolution)
    axes = [
        lo[d] + (np.arange(resolution[d]) + 0.5) * widths[d] for d in range(n)
    ]
    grids = np.meshgrid(*axes, indexing="ij")
    values = field.eval_grid(grids)
    with np.errstate(invalid="ignore"):
        predicate = (values > c) & (values < m_value)

    anchor_cell = tuple(
        min(max(int(math.floor((anchor[d] - lo[d]) / widths[d])), 0), resolution[d] - 1)
        for d in range(n)
    )
    predicate[anchor_cell] = True  # the anchor is in O by definition

    mask = np.zeros_like(predicate)
    queue = deque([anchor_cell])
    mask[anchor_cell] = True
    while queue:
        cell = queue.popleft()
        for d in range(n):
            for step in (-1, 1):
                nb = list(cell)
                nb[d] += step
                if nb[d] < 0 or nb[d] >= resolution[d]:
                    continue
                nb = tuple(nb)
                if predicate[nb] and not mask[nb]:
                    mask[nb] = True
                    queue.append(nb)

    # boundary cells: masked with an unmasked or out-of-box face neighbor
    padded = np.pad(mask, 1, constant_values=False)
    core = tuple(slice(1, -1) for _ in range(n))
    exposed = np.zeros_like(mask)
    for d in range(n):
        for step in (-1, 1):
            sl = list(core)
            sl[d] = slice(1 + step, padded.shape[d] - 1 + step)
            exposed |= mask & ~padded[tuple(sl)]
    boundary = [tuple(int(v) for v in cell) for cell in np.argwhere(exposed)]

    return GridComponent(
        box_lo=tuple(lo.tolist()),
        box_hi=tuple(hi.tolist()),
        resolution=resolution,
        mask=mask,
        values=values,
        c=c,
        m_value=m_value,
        anchor=tuple(anchor.tolist()),
        anchor_cell=anchor_cell,
        boundary_cells=tuple(boundary),
    )


@dataclass(frozen=True)
class HypothesisVerdict:
    name: str
    passed: bool
    witnesses: tuple
    note: str


@dataclass(frozen=True)
class HypothesesReport:
    h4: HypothesisVerdict
    h5: HypothesisVerdict
    h6: HypothesisVerdict

    @property
    def all_pass(self):
        return self.h4.passed and self.h5.passed and self.h6.passed


def _fval(field, x):
    try:
        return field.eval(x)
    except OutsideDomainError:
        return math.nan


def _bisect_crossing(field, inside_pt, outside_pt, level, steps=40):
    """Locate f = level on the segment [inside_pt, outside_pt] by bisection."""
    a = np.asarray(inside_pt, dtype=float)
    b = np.asarray(outside_pt, dtype=float)
    sign_a = _fval(field, a) - level
    for _ in range(steps):
        mid = 0.5 * (a + b)
        fm = _fval(field, mid)
        if math.isnan(fm) or (fm - level) * sign_a < 0.0:
            b = mid
        else:
            a = mid
    mid = 0.5 * (a + b)
    return mid, _fval(field, mid)


def _lipschitz_estimate(field, component, sample_cap=256):
    """Max |grad f| over a sample of boundary cell centers."""
    cells = component.boundary_cells
    stride = max(1, len(cells) // sample_cap)
    worst = 0.0
    for cell in cells[::stride]:
        center = component.cell_center(cell)
        if field.inside(center):
            worst = max(worst, float(np.linalg.norm(field.grad(center))))
    return worst


def check_hypotheses(component, field, critical_points, tol_boundary=None):
    """Grid-scale H4-H6 checks with witnesses.

    H4: no masked cell touches the box wall or an outside-domain cell.
    H5: the refined boundary crossing of every exposed face sits on f = c;
    faces whose crossing instead lands on f = M are violations (that is the
    Example-3.1 c=20 failure mode).  H6: no critical point from the list,
    other than the anchor, falls in a masked cell.
    """
    n = component.dimension
    res = component.resolution
    mask = component.mask
    values = component.values
    c = component.c
    m_value = component.m_value

    cell_diag = math.sqrt(sum(w * w for w in component.cell_widths))
    if tol_boundary is None:
        tol_boundary = 2.0 * _lipschitz_estimate(field, component) * cell_diag

    # H4 --------------------------------------------------------------
    h4_witnesses = []
    for cell in component.boundary_cells:
        at_wall = any(cell[d] == 0 or cell[d] == res[d] - 1 for d in range(n))
        touches_nan = False
        for d in range(n):
            for step in (-1, 1):
                nb = list(cell)
                nb[d] += step
                if 0 <= nb[d] < res[d] and np.isnan(values[tuple(nb)]):
                    touches_nan = True
        if at_wall or touches_nan:
            h4_witnesses.append(tuple(component.cell_center(cell).tolist()))
    h4 = HypothesisVerdict(
        name="H4",
        passed=not h4_witnesses,
        witnesses=tuple(h4_witnesses[:16]),
        note=(
            "component stays clear of the box walls"
            if not h4_witnesses
            else f"{len(h4_witnesses)} boundary cells touch the domain wall"
        ),
    )

    # H5 --------------------------------------------------------------
    h5_witnesses = []
    checked = 0
    worst_residual = 0.0
    for cell in component.boundary_cells:
        center = component.cell_center(cell)
        for d in range(n):
            for step in (-1, 1):
                nb = list(cell)
                nb[d] += step
                if nb[d] < 0 or nb[d] >= res[d]:
                    continue  # wall contact is H4's business
                nb = tuple(nb)
                if mask[nb]:
                    continue
                f_nb = values[nb]
                nb_center = component.cell_center(nb)
                if np.isnan(f_nb):
                    continue  # outside the domain; H4 already flags it
                checked += 1
                if f_nb >= m_value:
                    # boundary runs into the f = M level set, not f = c
                    crossing, f_at = _bisect_crossing(field, center, nb_center, m_value)
                    h5_witnesses.append(
                        (tuple(crossing.tolist()), f_at, "crossing hits f = M")
                    )
                elif f_nb <= c:
                    crossing, f_at = _bisect_crossing(field, center, nb_center, c)
                    residual = abs(f_at - c)
                    worst_residual = max(worst_residual, residual)
                    if residual > tol_boundary:
                        h5_witnesses.append(
                            (tuple(crossing.tolist()), f_at, "refined |f - c| above tolerance")
                        )
                else:
                    # neighbor satisfies the predicate but was never reached:
                    # two lobes of O meet at grid scale; no f = c crossing exists
                    h5_witnesses.append(
                        (tuple(nb_center.tolist()), float(f_nb), "component pinch at grid scale")
                    )
    h5 = HypothesisVerdict(
        name="H5",
        passed=not h5_witnesses,
        witnesses=tuple(h5_witnesses[:16]),
        note=(
            f"{checked} boundary faces refined; worst |f - c| = {worst_residual:.3g} "
            f"(tolerance {tol_boundary:.3g})"
            if not h5_witnesses
            else f"{len(h5_witnesses)} boundary faces do not sit on f = c"
        ),
    )

    # H6 --------------------------------------------------------------
    anchor = np.asarray(component.anchor)
    h6_witnesses = []
    for cp in critical_points:
        loc = cp.as_array()
        if float(np.linalg.norm(loc - anchor)) <= 1e-9:
            continue
        if component.contains_point(loc):
            h6_witnesses.append(cp.location)
    h6 = HypothesisVerdict(
        name="H6",
        passed=not h6_witnesses,
        witnesses=tuple(h6_witnesses),
        note=(
            "no other critical point inside the component"
            if not h6_witnesses
            else f"critical points inside the component: {h6_witnesses}"
        ),
    )

    return HypothesesReport(h4=h4, h5=h5, h6=h6)


@dataclass(frozen=True)
class BasinVerification:
    sample_count: int
    converged_count: int
    failures: tuple  # (start point, status string, final state)
    note: str

    @property
    def all_converged(self):
        return self.converged_count == self.sample_count


def _simulate_sample(system, start, anchor, t_end, converge_radius, sim_opts):
    opts = ode.SimOptions(
        rel_tol=sim_opts.rel_tol,
        abs_tol=sim_opts.abs_tol,
        h_min=sim_opts.h_min,
        h_max=sim_opts.h_max,
        convergence_target=tuple(anchor),
        convergence_radius=converge_radius,
    )
    return ode.simulate(system, start, 0.0, t_end, opts)


def verify_basin(system, component, sample_count=100, t_end=50.0,
                 converge_radius=1e-3, seed=0, sim_opts=None):
    """Simulate starts sampled from masked cell interiors; count convergence.

    Sampling is deterministic in *seed* and per-sample, so batches can run
    in any order (or in parallel up to the MODGRAD_THREADS cap) with
    identical results.
    """
    sim_opts = sim_opts or ode.SimOptions()
    masked = np.argwhere(component.mask)
    if len(masked) == 0:
        raise ValueError("component has no masked cells")
    anchor = np.asarray(component.anchor)
    lo = np.array(component.box_lo)
    widths = np.array(component.cell_widths)

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBA51]))
    picks = rng.integers(0, len(masked), size=int(sample_count))
    starts = []
    for k, pick in enumerate(picks):
        sub_rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(k)]))
        jitter = sub_rng.uniform(0.1, 0.9, size=component.dimension)
        starts.append(lo + (masked[pick] + jitter) * widths)

    workers = min(thread_count(), len(starts))
    results = [None] * len(starts)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(
                    _simulate_sample, system, s, anchor, t_end, converge_radius, sim_opts
                ): i
                for i, s in enumerate(starts)
            }
            for fut, i in futures.items():
                results[i] = fut.result()
    else:
        for i, s in enumerate(starts):
            results[i] = _simulate_sample(
                system, s, anchor, t_end, converge_radius, sim_opts
            )

    converged = 0
    failures = []
    for start, traj in zip(starts, results):
        if traj.status is ode.Status.CONVERGED:
            converged += 1
        else:
            failures.append(
                (
                    tuple(start.tolist()),
                    traj.status.value,
                    tuple(traj.final_state.tolist()),
                )
            )
    note = (
        f"{converged}/{len(starts)} trajectories converged to the anchor "
        f"within {converge_radius:g} by t = {t_end:g} (seed {seed}); "
        "convergence at this tolerance is evidence, not proof, of basin membership"
    )
    return BasinVerification(
        sample_count=len(starts),
        converged_count=converged,
        failures=tuple(failures),
        note=note,
    )


def sample_region(field, anchor, c, count, seed=0, max_tries=200_000):
    """Rejection-sample starts satisfying c < f < M near the anchor.

    Fallback for dimensions beyond grid reach: draws from balls of growing
    radius around the anchor and keeps points inside D with c < f < M.
    Near the anchor the predicate set coincides with the component E, but
    connectivity is NOT checked here; that is what the grid path is for.
    """
    anchor = np.asarray(anchor, dtype=float)
    m_value = float(field.eval(anchor))
    if c >= m_value:
        raise ValueError(f"c must be below f(anchor) = {m_value:g}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5A3]))
    r_max = field.box.clip_radius(anchor)
    samples = []
    tries = 0
    radius = 0.05 * r_max
    while len(samples) < count and tries < max_tries:
        tries += 1
        direction = rng.standard_normal(field.dimension)
        direction /= np.linalg.norm(direction)
        x = anchor + radius * rng.uniform(0.0, 1.0) ** (1.0 / field.dimension) * direction
        if field.inside(x) and c < field.eval(x) < m_value:
            samples.append(x)
        if tries % 2000 == 0 and radius < r_max:
            radius = min(2.0 * radius, r_max)
    if len(samples) < count:
        raise NumericFailure(
            f"rejection sampling found only {len(samples)}/{count} starts",
            partial=samples,
        )
    return samples


def verify_basin_sampled(system, anchor, c, sample_count=100, t_end=50.0,
                         converge_radius=1e-3, seed=0, sim_opts=None):
    """verify_basin without a grid component (any dimension).

    Starts come from rejection sampling of the predicate c < f < M near the
    anchor; everything else matches verify_basin.
    """
    sim_opts = sim_opts or ode.SimOptions()
    anchor = np.asarray(anchor, dtype=float)
    starts = sample_region(system.field, anchor, c, sample_count, seed)
    converged = 0
    failures = []
    for start in starts:
        traj = _simulate_sample(system, start, anchor, t_end, converge_radius, sim_opts)
        if traj.status is ode.Status.CONVERGED:
            converged += 1
        else:
            failures.append(
                (tuple(start.tolist()), traj.status.value,
                 tuple(traj.final_state.tolist()))
            )
    note = (
        f"{converged}/{len(starts)} rejection-sampled starts converged within "
        f"{converge_radius:g} by t = {t_end:g} (seed {seed}); starts were drawn "
        "from the predicate set near the anchor without a connectivity check"
    )
    return BasinVerification(
        sample_count=len(starts),
        converged_count=converged,
        failures=tuple(failures),
        note=note,
    )


def suggest_cut_level(critical_points, anchor_point, margin=0.02):
    """Heuristic c: slightly above the largest other critical value below M.

    Labeled heuristic: the certification takes c as given; this only proposes a
    starting point from the found critical values.
    """
    anchor = np.asarray(anchor_point.location)
    m_value = anchor_point.value
    below = [
        cp.value
        for cp in critical_points
        if float(np.linalg.norm(cp.as_array() - anchor)) > 1e-9 and cp.value < m_value
    ]
    if not below:
        return m_value - 1.0, "no other critical value below M; defaulted to M - 1"
    base = max(below)
    c = base + margin * (m_value - base)
    return c, (
        f"slightly above the largest other critical value {base:g} below M = {m_value:g}"
    )
