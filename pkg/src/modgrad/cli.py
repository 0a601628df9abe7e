"""Command-line front end.

Subcommands: analyze, simulate, basin, ec, gallery {list, run <id>}.
A single JSON config describes the system (f, P, box) and per-module
options; unknown keys are rejected so typos cannot silently fall back to
defaults.  Exit codes: 0 completed, 2 config/input error, 3 numeric
failure.  All emitted files are byte-deterministic for a given config and
seed (floats are formatted with 17 significant digits).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, fields as dc_fields

import numpy as np

from . import basin as basin_mod
from . import equilibria, gallery, ode, stability
from .errors import EvalDomainError, NumericFailure, OutsideDomainError, ParseError
from .expr import parse as parse_expr
from .field import Box, ExpressionField, MatrixPath, System, validate_h0

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


# -- deterministic serialization --------------------------------------------


def _fmt_float(x):
    if math.isnan(x):
        return "null"
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def _json_text(obj, indent=0):
    pad = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = [_json_text(v, indent + 1) for v in obj]
        if not items:
            return "[]"
        inner = ",\n".join("  " * (indent + 1) + s for s in items)
        return "[\n" + inner + "\n" + pad + "]"
    if isinstance(obj, dict):
        items = [
            "  " * (indent + 1) + json.dumps(str(k)) + ": " + _json_text(v, indent + 1)
            for k, v in obj.items()
        ]
        if not items:
            return "{}"
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(_json_text(obj))
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format(float(v), ".17g") for v in row) + "\n")


def _write_pgm(path, mask):
    """P5 mask image for n = 2: 255 inside the component, 0 outside.

    Rows run from the top of the image, so the x2 axis points up and x1
    right, matching the usual plot orientation.
    """
    if mask.ndim != 2:
        raise ValueError("PGM export needs a 2-d mask")
    img = (mask.T[::-1, :] * np.uint8(255)).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def _boundary_segments(component):
    """Cell-edge segments between masked and unmasked cells (n = 2)."""
    mask = component.mask
    lo = component.box_lo
    wx, wy = component.cell_widths
    segs = []
    nx, ny = mask.shape
    for i in range(nx):
        for j in range(ny):
            if not mask[i, j]:
                continue
            x0 = lo[0] + i * wx
            y0 = lo[1] + j * wy
            if i == 0 or not mask[i - 1, j]:
                segs.append((x0, y0, x0, y0 + wy))
            if i == nx - 1 or not mask[i + 1, j]:
                segs.append((x0 + wx, y0, x0 + wx, y0 + wy))
            if j == 0 or not mask[i, j - 1]:
                segs.append((x0, y0, x0 + wx, y0))
            if j == ny - 1 or not mask[i, j + 1]:
                segs.append((x0, y0 + wy, x0 + wx, y0 + wy))
    return segs


def _write_svg(path, component, critical_points):
    """Minimal standalone overlay: mask outline, anchor, critical points."""
    lo = component.box_lo
    hi = component.box_hi
    width = 800.0
    scale = width / (hi[0] - lo[0])
    height = (hi[1] - lo[1]) * scale

    def sx(x):
        return (x - lo[0]) * scale

    def sy(y):
        return (hi[1] - y) * scale

    def f(v):
        return format(v, ".6g")

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {f(width)} {f(height)}">',
        f'<rect x="0" y="0" width="{f(width)}" height="{f(height)}" '
        'fill="white" stroke="black" stroke-width="1"/>',
    ]
    path_bits = []
    for x0, y0, x1, y1 in _boundary_segments(component):
        path_bits.append(
            f"M {f(sx(x0))} {f(sy(y0))} L {f(sx(x1))} {f(sy(y1))}"
        )
    parts.append(
        '<path d="' + " ".join(path_bits) + '" stroke="#1060c0" '
        'stroke-width="1" fill="none"/>'
    )
    for cp in critical_points:
        x, y = cp.location[0], cp.location[1]
        parts.append(
            f'<circle cx="{f(sx(x))}" cy="{f(sy(y))}" r="5" fill="none" '
            'stroke="#c03030" stroke-width="1.5"/>'
        )
    ax, ay = component.anchor[0], component.anchor[1]
    parts.append(
        f'<circle cx="{f(sx(ax))}" cy="{f(sy(ay))}" r="4" fill="#108030"/>'
    )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")


# -- configuration -----------------------------------------------------------


@dataclass
class Options:
    psd_tol: float = 1e-10
    h0_sample_max: float = 1e4
    grid_per_axis: int = 20
    newton_tol: float = 1e-10
    max_newton_iters: int = 50
    grad_floor: float = 1e-8
    shell_radius: float | None = None
    isolation_shells: list | None = None
    samples_per_shell: int = 32
    ec_horizon: float = 1e4
    quad_tol: float = 2e-5
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    h_min: float = 1e-12
    h_max: float | None = None
    descent_trajectories: int = 8
    descent_t_end: float = 10.0
    basin_samples: int = 100
    basin_t_end: float = 50.0
    converge_radius: float = 1e-3
    tol_boundary: float | None = None
    seed: int = 0


class ConfigError(ValueError):
    pass


@dataclass
class AnalysisConfig:
    system: System
    options: Options
    output_dir: str
    gallery_id: str | None
    gallery_entry: object | None

    @property
    def sim_options(self):
        return ode.SimOptions(
            rel_tol=self.options.rel_tol,
            abs_tol=self.options.abs_tol,
            h_min=self.options.h_min,
            h_max=self.options.h_max,
        )


_TOP_KEYS = {"dimension", "f", "P", "box", "options", "output_dir"}


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    opt_raw = raw.get("options", {})
    if not isinstance(opt_raw, dict):
        raise ConfigError("'options' must be an object")
    known = {f.name for f in dc_fields(Options)}
    unknown = set(opt_raw) - known
    if unknown:
        raise ConfigError(f"unknown option keys: {sorted(unknown)}")
    options = Options(**opt_raw)

    f_spec = raw.get("f")
    if f_spec is None:
        raise ConfigError("config must declare 'f'")

    gallery_id = None
    entry = None
    if isinstance(f_spec, dict):
        unknown = set(f_spec) - {"gallery", "depth"}
        if unknown:
            raise ConfigError(f"unknown keys in 'f': {sorted(unknown)}")
        gallery_id = f_spec.get("gallery")
        if gallery_id not in gallery.GALLERY_IDS:
            raise ConfigError(
                f"unknown gallery id {gallery_id!r}; known: {', '.join(gallery.GALLERY_IDS)}"
            )
        matrix = None
        if "P" in raw and raw["P"] is not None:
            matrix = _build_matrix(raw["P"], dimension=2)
        try:
            entry = gallery.build(gallery_id, depth=f_spec.get("depth", 20), matrix=matrix)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        system = entry.system
        if "dimension" in raw and int(raw["dimension"]) != system.dimension:
            raise ConfigError("declared dimension does not match the gallery entry")
        if "box" in raw:
            raise ConfigError("gallery entries fix their own box")
    else:
        if "dimension" not in raw:
            raise ConfigError("config must declare 'dimension' for an expression field")
        dimension = int(raw["dimension"])
        if "box" not in raw:
            raise ConfigError("config must declare 'box'")
        box_raw = raw["box"]
        if (
            not isinstance(box_raw, list)
            or len(box_raw) != dimension
            or any(not isinstance(b, list) or len(b) != 2 for b in box_raw)
        ):
            raise ConfigError("'box' must be a list of per-axis [lo, hi] pairs")
        try:
            box = Box(tuple(b[0] for b in box_raw), tuple(b[1] for b in box_raw))
            expression = parse_expr(str(f_spec), dimension)
            matrix = _build_matrix(raw.get("P", "identity"), dimension)
            system = System(ExpressionField(expression, box), matrix)
        except (ParseError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    return AnalysisConfig(
        system=system,
        options=options,
        output_dir=raw.get("output_dir", "out"),
        gallery_id=gallery_id,
        gallery_entry=entry,
    )


def _build_matrix(p_spec, dimension):
    if p_spec == "identity":
        return MatrixPath.identity(dimension)
    if not isinstance(p_spec, list):
        raise ConfigError("'P' must be \"identity\" or a matrix of expressions in t")
    try:
        return MatrixPath([[str(e) for e in row] for row in p_spec])
    except (ParseError, ValueError) as exc:
        raise ConfigError(f"invalid matrix path: {exc}") from None


# -- report shaping ----------------------------------------------------------


def _critical_point_dict(cp):
    return {
        "location": list(cp.location),
        "classification": cp.classification.value,
        "hessian_spectrum": list(cp.hessian_spectrum),
        "grad_norm": cp.grad_norm,
        "value": cp.value,
    }


def _stability_report_dict(rep):
    return {
        "equilibrium": _critical_point_dict(rep.equilibrium),
        "h1": {"pass": rep.h1_pass, "note": rep.h1_note},
        "h2": {
            "kind": rep.h2.kind.value,
            "min_grad_norm": rep.h2.min_grad_norm,
            "witness": list(rep.h2.witness) if rep.h2.witness else None,
            "shells": list(rep.h2.shells),
        },
        "h3": _ec_dict(rep.h3),
        "conclusion": rep.conclusion.value,
        "descent": None
        if rep.descent is None
        else {
            "trajectories": rep.descent.trajectories,
            "max_v_increase": rep.descent.max_v_increase,
            "max_bound_violation": rep.descent.max_bound_violation,
            "statuses": list(rep.descent.statuses),
        },
    }


def _ec_dict(v):
    return {
        "kind": v.kind.value,
        "horizon_integral": v.horizon_integral,
        "horizon": v.horizon,
        "tail_exponent": v.tail_exponent,
        "evidence": v.evidence,
        "clipped_negative": v.clipped_negative,
    }


# -- subcommands -------------------------------------------------------------


def _say(args, *message):
    if not args.quiet:
        print(*message)


def _outdir(args, config):
    out = args.out or config.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def cmd_analyze(args):
    config = load_config(args.config)
    out = _outdir(args, config)
    opts = config.options

    h0 = validate_h0(
        config.system,
        sample_times=None,
        psd_tol=opts.psd_tol,
    )
    if not h0.passed:
        print(
            f"H0 FAILED: min lambda_1 = {h0.min_lambda1:.6g} < -{opts.psd_tol:g} "
            f"at t = {h0.worst_time():.6g}; P(t) is not positive semi-definite",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    _say(args, f"H0: pass (min lambda_1 = {h0.min_lambda1:.3g} over {len(h0.samples)} samples)")

    points, diags = equilibria.find_critical_points(
        config.system.field,
        grid_per_axis=opts.grid_per_axis,
        newton_tol=opts.newton_tol,
        max_newton_iters=opts.max_newton_iters,
    )
    _say(args, f"critical points: {len(points)} "
               f"(from {diags.seeds} seeds, {diags.converged} converged)")

    cert_opts = stability.CertifyOptions(
        shell_radius=opts.shell_radius,
        isolation_shells=None if opts.isolation_shells is None
        else tuple(opts.isolation_shells),
        grad_floor=opts.grad_floor,
        samples_per_shell=opts.samples_per_shell,
        ec_horizon=opts.ec_horizon,
        quad_tol=opts.quad_tol,
        descent_trajectories=opts.descent_trajectories,
        descent_t_end=opts.descent_t_end,
        sim=config.sim_options,
    )
    reports = []
    for point in points:
        rep = stability.certify(config.system, point, cert_opts, critical_points=points)
        reports.append(rep)
        loc = ", ".join(format(v, ".10g") for v in point.location)
        _say(
            args,
            f"({loc}): {point.classification.value:18s} h1={'pass' if rep.h1_pass else 'fail'} "
            f"h2={rep.h2.kind.value} h3={rep.h3.kind.value} -> {rep.conclusion.value}",
        )

    _write_json(os.path.join(out, "report.json"),
                [_stability_report_dict(r) for r in reports])
    _say(args, f"wrote {os.path.join(out, 'report.json')}")
    return EXIT_OK


def cmd_simulate(args):
    config = load_config(args.config)
    out = _outdir(args, config)
    x0 = _parse_vector(args.x0, config.system.dimension, "--x0")
    target = None
    if args.target is not None:
        target = _parse_vector(args.target, config.system.dimension, "--target")

    sim = config.sim_options
    opts = ode.SimOptions(
        rel_tol=sim.rel_tol,
        abs_tol=sim.abs_tol,
        h_min=sim.h_min,
        h_max=args.h_max if args.h_max is not None else sim.h_max,
        convergence_target=None if target is None else tuple(target),
        convergence_radius=args.radius if target is not None else None,
    )
    traj = ode.simulate(config.system, x0, args.t0, args.t_end, opts)

    n = config.system.dimension
    _write_csv(
        os.path.join(out, "trajectory.csv"),
        ["t"] + [f"x{i + 1}" for i in range(n)],
        (np.column_stack([traj.times, traj.states])),
    )
    anchor = target if target is not None else x0
    trace = ode.lyapunov_trace(config.system, traj, anchor)
    _write_csv(
        os.path.join(out, "lyapunov.csv"),
        ["t", "V", "Vdot", "lambda1", "gradnorm2"],
        trace.rows,
    )
    state_txt = ", ".join(format(v, ".10g") for v in traj.final_state)
    _say(args, f"status: {traj.status.value}"
               + (f" at t = {traj.converged_at:.6g}" if traj.converged_at is not None else ""))
    _say(args, f"final state at t = {traj.final_time:.6g}: ({state_txt})")
    for t, x in traj.checkpoints():
        _say(args, f"  checkpoint t = {t:g}: ("
             + ", ".join(format(v, ".10g") for v in x) + ")")
    if traj.status is ode.Status.STEP_FAILURE:
        print(f"integration failed: {traj.detail}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_basin(args):
    config = load_config(args.config)
    out = _outdir(args, config)
    opts = config.options
    anchor = _parse_vector(args.anchor, config.system.dimension, "--anchor")
    fld = config.system.field

    try:
        m_value = fld.eval(anchor)
    except OutsideDomainError as exc:
        print(f"anchor error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.c >= m_value:
        print(
            f"c must be below f(anchor) = {m_value:.6g}, got c = {args.c:.6g}",
            file=sys.stderr,
        )
        return EXIT_CONFIG

    component = basin_mod.extract_component(fld, anchor, args.c, args.resolution)
    _say(args, f"component: {int(component.mask.sum())} cells, "
               f"area {component.masked_area:.6g}, M = {component.m_value:.6g}")

    points, _ = equilibria.find_critical_points(
        fld, opts.grid_per_axis, opts.newton_tol, opts.max_newton_iters
    )
    hyp = basin_mod.check_hypotheses(component, fld, points, opts.tol_boundary)
    for h in (hyp.h4, hyp.h5, hyp.h6):
        _say(args, f"{h.name}: {'pass' if h.passed else 'FAIL'} -- {h.note}")

    seed = args.seed if args.seed is not None else opts.seed
    verification = basin_mod.verify_basin(
        config.system,
        component,
        sample_count=opts.basin_samples,
        t_end=opts.basin_t_end,
        converge_radius=opts.converge_radius,
        seed=seed,
        sim_opts=config.sim_options,
    )
    _say(args, verification.note)

    if component.dimension == 2:
        _write_pgm(os.path.join(out, "mask.pgm"), component.mask)
        _write_csv(
            os.path.join(out, "boundary.csv"),
            ["x1_a", "x2_a", "x1_b", "x2_b"],
            _boundary_segments(component),
        )
        _write_svg(os.path.join(out, "basin.svg"), component, points)
    _write_csv(
        os.path.join(out, "cells.csv"),
        [f"x{i + 1}" for i in range(component.dimension)],
        component.masked_centers(),
    )
    _write_json(
        os.path.join(out, "hypotheses.json"),
        {
            "c": component.c,
            "M": component.m_value,
            "anchor": list(component.anchor),
            "resolution": list(component.resolution),
            "masked_cells": int(component.mask.sum()),
            "masked_area": component.masked_area,
            "hypotheses": {
                h.name.lower(): {
                    "pass": h.passed,
                    "witnesses": [list(w) if isinstance(w, (list, tuple)) else w
                                  for w in h.witnesses],
                    "note": h.note,
                }
                for h in (hyp.h4, hyp.h5, hyp.h6)
            },
        },
    )
    _write_json(
        os.path.join(out, "verification.json"),
        {
            "sample_count": verification.sample_count,
            "converged_count": verification.converged_count,
            "seed": seed,
            "failures": [
                {"start": list(s), "status": st, "final": list(fin)}
                for s, st, fin in verification.failures
            ],
            "note": verification.note,
        },
    )
    _say(args, f"wrote mask/cells/hypotheses/verification to {out}")
    return EXIT_OK


def cmd_ec(args):
    config = load_config(args.config)
    out = _outdir(args, config)
    verdict = stability.ec_check(
        config.system.matrix, args.horizon, config.options.quad_tol
    )
    _say(args, f"EC verdict: {verdict.kind.value}")
    _say(args, f"  I(T) = {verdict.horizon_integral:.8g} at T = {verdict.horizon:g}")
    if verdict.tail_exponent is not None:
        _say(args, f"  fitted tail exponent p = {verdict.tail_exponent:.4f}")
    _say(args, f"  {verdict.evidence}")
    _write_json(os.path.join(out, "ec.json"), _ec_dict(verdict))
    return EXIT_OK


def cmd_gallery(args):
    if args.action == "list":
        for gid in gallery.GALLERY_IDS:
            entry = gallery.build(gid)
            first = entry.notes.split(";")[0]
            print(f"{gid}: {first}")
        return EXIT_OK
    entry = gallery.build(args.id)
    entry.self_test()
    print(f"{entry.id}: oracle self-test passed")
    print(entry.notes)
    return EXIT_OK


def _parse_vector(text, dimension, flag):
    try:
        values = [float(v) for v in str(text).replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise ConfigError(f"{flag} must be comma-separated numbers") from None
    if len(values) != dimension:
        raise ConfigError(f"{flag} must have {dimension} components")
    return np.array(values)


def _add_common(parser, needs_config=True):
    if needs_config:
        parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="modgrad",
        description="Stability and basin analysis for x' = P(t) grad f(x)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="H0 check, find equilibria, certify each")
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="integrate one trajectory, write CSVs")
    _add_common(p)
    p.add_argument("--x0", required=True, help="initial state, comma separated")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t-end", type=float, required=True, dest="t_end")
    p.add_argument("--target", default=None,
                   help="convergence target (also anchors the Lyapunov trace)")
    p.add_argument("--radius", type=float, default=1e-6,
                   help="convergence radius around --target")
    p.add_argument("--h-max", type=float, default=None, dest="h_max")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("basin", help="extract a component, check H4-H6, verify")
    _add_common(p)
    p.add_argument("--anchor", required=True, help="equilibrium, comma separated")
    p.add_argument("--c", type=float, required=True, help="cut level c < f(anchor)")
    p.add_argument("--resolution", type=int, default=512, help="cells per axis")
    p.set_defaults(func=cmd_basin)

    p = sub.add_parser("ec", help="grade the eigenvalue condition for P(t)")
    _add_common(p)
    p.add_argument("--horizon", type=float, default=1e4)
    p.set_defaults(func=cmd_ec)

    p = sub.add_parser("gallery", help="list or run the built-in examples")
    galsub = p.add_subparsers(dest="action", required=True)
    pl = galsub.add_parser("list", help="list gallery ids")
    pl.set_defaults(func=cmd_gallery, action="list")
    pr = galsub.add_parser("run", help="run a gallery entry's oracle self-test")
    pr.add_argument("id", choices=gallery.GALLERY_IDS)
    pr.set_defaults(func=cmd_gallery, action="run")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "quiet"):
        args.quiet = False
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, OutsideDomainError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, EvalDomainError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
