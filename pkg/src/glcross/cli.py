"""Command line driver.

Subcommands: field, partition, prescribe, compare, render.  Every run writes
into ``--out`` (default ``glcross_out``) together with a ``manifest.json``
holding the configuration echo and SHA-256 digests of the outputs.  Wall
clock timings go to ``timings.json`` so that the hashed artifacts are
byte-identical between runs with the same inputs and seed.

Exit codes: 0 success, 1 input error, 2 non-convergence, 3 partition failure
(tracing error, region violations, or a failed comparison).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import crossfield as cf
from . import domains, fem, gl
from . import layout as lay
from . import trace as tr
from .mesh import MeshError, TriMesh, assign_boundary_condition, detect_corners, effective_degree
from .mesh import load_corner_overrides, load_mesh

log = logging.getLogger("glcross")

EXIT_OK, EXIT_INPUT, EXIT_NOCONV, EXIT_PARTITION = 0, 1, 2, 3


class InputError(Exception):
    pass


# -- inputs -------------------------------------------------------------------------


def read_mesh(source, fmt=None):
    """A mesh file, or ``builtin:NAME[:h]`` for one of the bundled domains."""
    if source.startswith("builtin:"):
        parts = source.split(":")
        name = parts[1]
        if name not in domains.DOMAINS:
            raise InputError(f"unknown builtin domain {name!r}; choose from {sorted(domains.DOMAINS)}")
        h = float(parts[2]) if len(parts) > 2 else 0.1
        return domains.DOMAINS[name](h)
    try:
        return load_mesh(source, fmt)
    except MeshError as exc:
        raise InputError(str(exc)) from exc


def setup_boundary(mesh, corners_path=None):
    overrides = load_corner_overrides(corners_path) if corners_path else None
    corners = detect_corners(mesh, overrides=overrides)
    mesh = mesh.with_corners(corners)
    corners = detect_corners(mesh, overrides=overrides)
    return mesh, corners, assign_boundary_condition(mesh, corners), overrides or {}


def field_document(rep, overrides=None):
    doc = {"mesh": {"vertices": rep.mesh.vertices.tolist(), "triangles": rep.mesh.triangles.tolist()}}
    doc.update(rep.to_json())
    doc["corner_overrides"] = {str(k): int(v) for k, v in sorted((overrides or {}).items())}
    return doc


def read_field(path):
    """Mesh, corners, boundary data and field from a field JSON written by ``field``."""
    try:
        doc = json.loads(Path(path).read_text())
        mesh = TriMesh(doc["mesh"]["vertices"], doc["mesh"]["triangles"])
        overrides = {int(k): int(v) for k, v in doc.get("corner_overrides", {}).items()}
        corners = detect_corners(mesh, overrides=overrides or None)
        mesh = mesh.with_corners(corners)
        corners = detect_corners(mesh, overrides=overrides or None)
        rep = gl.RepresentationField.from_json(mesh, doc)
    except (OSError, ValueError, KeyError, TypeError, MeshError) as exc:
        raise InputError(f"cannot read field file {path}: {exc}") from exc
    return mesh, corners, assign_boundary_condition(mesh, corners), rep, overrides


# -- outputs --------------------------------------------------------------------------


class Outputs:
    def __init__(self, out, command, config):
        self.dir = Path(out)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.config = config
        self.files = {}
        self.timings = {}

    def json(self, name, data):
        text = json.dumps(data, indent=1, sort_keys=True) + "\n"
        self.text(name, text)

    def text(self, name, text):
        p = self.dir / name
        p.write_text(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()

    def svg(self, name, writer):
        p = self.dir / name
        writer(p)
        self.files[name] = hashlib.sha256(p.read_bytes()).hexdigest()

    def timed(self, phase):
        outputs = self

        class _T:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                outputs.timings[phase] = round(time.perf_counter() - self.t, 6)

        return _T()

    def finish(self, exit_code):
        manifest = {"command": self.command, "config": self.config, "version": __version__,
                    "exit_code": exit_code, "files": dict(sorted(self.files.items()))}
        (self.dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        (self.dir / "timings.json").write_text(json.dumps(self.timings, indent=1, sort_keys=True) + "\n")
        return exit_code


def singularity_report(sings):
    return [
        {"face": int(s.face_id), "x": s.location[0], "y": s.location[1], "rep_degree": int(s.rep_degree),
         "index": str(s.cross_index), "theta0": s.theta0, "exit_directions": list(s.exit_directions),
         "faces": [int(f) for f in s.faces]}
        for s in sings
    ]


def _config(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}


# -- pipeline pieces --------------------------------------------------------------------


def compute_field(mesh, bc, args):
    params = gl.MBOParams(args.tau_scale, args.delta, args.max_iter)
    init = gl.random_init(mesh, bc, args.seed) if args.init == "random" else None
    return gl.mbo_minimize(mesh, bc, params, init=init)


def trace_params(mesh, args):
    step = args.step * mesh.mean_edge_length if args.step is not None else None
    return tr.TraceParams(step=step, snap_radius=args.snap_tol)


def run_partition(out, mesh, corners, rep, args, extra=None):
    """Detect, trace, partition, build and validate; write layout, report and SVG."""
    params = trace_params(mesh, args)
    with out.timed("singularities"):
        sings = cf.detect_singularities(rep)
    with out.timed("trace"):
        S, P, L = tr.trace_separatrices(rep, sings, corners, params)
    report = {"singularities": singularity_report(sings), "n_S": len(S), "n_P": len(P), "n_L": len(L)}
    lhs, rhs, ok = cf.poincare_hopf_check(sings, corners, mesh)
    report["poincare_hopf"] = {"indices": str(lhs), "euler": str(rhs), "ok": ok}
    if extra:
        report.update(extra)
    try:
        with out.timed("partition"):
            result = tr.partition(rep, S, P, L, params)
    except tr.PartitionError as exc:
        report["error"] = str(exc)
        out.json("report.json", report)
        print(f"partition failed: {exc}", file=sys.stderr)
        return EXIT_PARTITION
    with out.timed("layout"):
        layout = lay.build_layout(mesh, result, corners, sings, rep=rep)
        check = lay.validate_regions(layout, rep)
    report["t_junctions"] = len(result.t_junctions)
    report["regions"] = check.to_json()
    out.json("layout.json", layout.to_json())
    out.json("report.json", report)
    svg = args.svg or "layout.svg"
    out.svg(svg, lambda p: lay.export_svg(mesh, rep, layout, p, {"separatrices": S + P, "singularities": sings}))
    print(f"{len(sings)} singularities, {len(layout.faces)} regions {check.counts}, "
          f"{len(result.t_junctions)} T-junctions, {len(check.violations)} violations")
    for v in check.violations:
        print("  " + v)
    return EXIT_OK if check.ok else EXIT_PARTITION


# -- subcommands ----------------------------------------------------------------------


def cmd_field(args):
    mesh = read_mesh(args.mesh, args.format)
    mesh, corners, bc, overrides = setup_boundary(mesh, args.corners)
    out = Outputs(args.out, "field", _config(args))
    with out.timed("mbo"):
        res = compute_field(mesh, bc, args)
    sings = cf.detect_singularities(res.field)
    out.json("field.json", field_document(res.field, overrides))
    out.json("singularities.json", singularity_report(sings))
    rows = ["iteration,change,dirichlet_energy"] + [f"{k},{d!r},{e!r}" for k, d, e in res.trace]
    out.text("convergence.csv", "\n".join(rows) + "\n")
    lhs, rhs, ok = cf.poincare_hopf_check(sings, corners, mesh)
    print(f"MBO: {res.iterations} iterations, converged={res.converged}; "
          f"{len(sings)} singularities {[str(s.cross_index) for s in sings]}; index sum {lhs} = {rhs}: {ok}")
    return out.finish(EXIT_OK if res.converged else EXIT_NOCONV)


def cmd_partition(args):
    out = Outputs(args.out, "partition", _config(args))
    if args.input.endswith(".json"):
        mesh, corners, bc, rep, _ = read_field(args.input)
    elif args.input.startswith("builtin:limit_cycle"):
        parts = args.input.split(":")
        mesh, values = domains.limit_cycle_example(float(parts[2]) if len(parts) > 2 else 0.06)
        corners = []
        rep = gl.RepresentationField(mesh, values)
        out.json("field.json", field_document(rep))
    else:
        mesh = read_mesh(args.input, args.format)
        mesh, corners, bc, overrides = setup_boundary(mesh, args.corners)
        with out.timed("mbo"):
            res = compute_field(mesh, bc, args)
        if not res.converged:
            print("MBO did not converge", file=sys.stderr)
            return out.finish(EXIT_NOCONV)
        rep = res.field
        out.json("field.json", field_document(rep, overrides))
    return out.finish(run_partition(out, mesh, corners, rep, args))


def cmd_prescribe(args):
    mesh = read_mesh(args.mesh, args.format)
    mesh, corners, bc, overrides = setup_boundary(mesh, args.corners)
    try:
        config = gl.SingularityConfig.load(args.config)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot read singularity config {args.config}: {exc}") from exc
    boundary = effective_degree(mesh, bc)
    if config.total_degree != boundary:
        print(f"degree mismatch: prescribed total {config.total_degree}, boundary degree {boundary}",
              file=sys.stderr)
        return EXIT_INPUT
    out = Outputs(args.out, "prescribe", _config(args))
    try:
        rep = gl.canonical_harmonic_map(mesh, bc, config, hole_turns=args.hole_turns)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    out.json("field.json", field_document(rep, overrides))
    return out.finish(run_partition(out, mesh, corners, rep, args, {"prescribed": config.dump()}))


def _pair(a, b):
    """Greedy nearest pairing of two singularity lists by degree."""
    pairs, left = [], list(range(len(b)))
    for i, s in enumerate(a):
        cand = [j for j in left if b[j].rep_degree == s.rep_degree]
        if not cand:
            return None
        j = min(cand, key=lambda j: math.dist(s.location, b[j].location))
        left.remove(j)
        pairs.append((i, j, math.dist(s.location, b[j].location)))
    return pairs if not left else None


def cmd_compare(args):
    mesh = read_mesh(args.mesh, args.format)
    mesh, corners, bc, _ = setup_boundary(mesh, args.corners)
    out = Outputs(args.out, "compare", _config(args))
    K, M = fem.assemble_p1(mesh)
    init = gl.random_init(mesh, bc, args.seed) if args.init == "random" else gl.harmonic_init(mesh, bc, K)
    with out.timed("mbo"):
        mbo = gl.mbo_minimize(mesh, bc, gl.MBOParams(args.tau_scale, args.delta, args.max_iter), init=init, K=K, M=M)
    with out.timed("direct"):
        direct = gl.direct_minimize_gl(mesh, bc, args.eps, init=init,
                                       step_params=gl.StepParams(delta=args.delta), K=K, M=M)
    rows = []
    sets = {}
    for name, res in (("mbo", mbo), ("direct", direct)):
        sings = cf.detect_singularities(res.field, with_directions=False)
        sets[name] = sings
        rows.append({"method": name, "iterations": res.iterations, "converged": res.converged,
                     "dirichlet_energy": fem.dirichlet_energy(K, res.field.values),
                     "singularities": sorted(int(s.rep_degree) for s in sings)})
    h = mesh.mean_edge_length
    pairs = _pair(sets["mbo"], sets["direct"])
    distances = None if pairs is None else [
        {"mbo": i, "direct": j, "distance": d, "edge_lengths": d / h} for i, j, d in pairs]
    match = pairs is not None and all(d <= 5 * h for _, _, d in pairs)
    out.json("compare.json", {"methods": rows, "pairs": distances, "match": match, "mean_edge": h})
    print(f"{'method':8s} {'iter':>6s} {'time[s]':>8s} {'energy':>12s}  singularities")
    for r in rows:
        t = out.timings.get(r["method"], float("nan"))
        print(f"{r['method']:8s} {r['iterations']:6d} {t:8.3f} {r['dirichlet_energy']:12.6f}  {r['singularities']}")
    if distances:
        worst = max(p["edge_lengths"] for p in distances)
        print(f"max paired distance: {worst:.3f} mean edge lengths")
    if not (mbo.converged and direct.converged):
        return out.finish(EXIT_NOCONV)
    return out.finish(EXIT_OK if match else EXIT_PARTITION)


def cmd_render(args):
    mesh, corners, bc, rep, _ = read_field(args.field)
    out = Outputs(args.out, "render", _config(args))
    sings = cf.detect_singularities(rep)
    layout = lay.import_layout(args.layout) if args.layout else None
    seps = []
    if args.separatrices:
        S, P, _ = tr.trace_separatrices(rep, sings, corners, trace_params(mesh, args))
        seps = S + P
    out.svg(args.svg or "render.svg", lambda p: lay.export_svg(
        mesh, rep, layout, p, {"mesh": args.show_mesh, "separatrices": seps, "singularities": sings}))
    return out.finish(EXIT_OK)


# -- argument parsing ---------------------------------------------------------------------


def _positive(kind):
    def conv(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return conv


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=["off", "obj"], help="mesh file format (default: from suffix)")
    common.add_argument("--tau-scale", type=_positive(float), default=1.0, help="tau = tau_scale / lambda1")
    common.add_argument("--delta", type=_positive(float), default=1e-4, help="MBO stopping tolerance")
    common.add_argument("--max-iter", type=_positive(int), default=500)
    common.add_argument("--eps", type=_positive(float), default=None, help="GL length scale for compare")
    common.add_argument("--snap-tol", type=_positive(float), default=None, help="snap radius (domain units)")
    common.add_argument("--step", type=_positive(float), default=None, help="tracing step / mean edge length")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--init", choices=["harmonic", "random"], default="harmonic")
    common.add_argument("--corners", help="corner override file: 'vertex_id quarters' per line")
    common.add_argument("--out", default="glcross_out", help="output directory")
    common.add_argument("--svg", help="SVG file name inside the output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="glcross", description="Ginzburg-Landau cross fields and quad layouts")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("field", parents=[common], help="MBO representation field and singularity report")
    s.add_argument("mesh", help="OFF/OBJ file or builtin:NAME[:h]")
    s.set_defaults(func=cmd_field)

    s = sub.add_parser("partition", parents=[common], help="quad layout from a field file or a mesh")
    s.add_argument("input", help="field JSON, OFF/OBJ file, builtin:NAME[:h] or builtin:limit_cycle[:h]")
    s.set_defaults(func=cmd_partition)

    s = sub.add_parser("prescribe", parents=[common], help="canonical harmonic map for given singularities")
    s.add_argument("mesh")
    s.add_argument("config", help="JSON list of {x, y, degree}")
    s.add_argument("--hole-turns", type=int, nargs="*", default=None, help="extra phase turns per hole")
    s.set_defaults(func=cmd_prescribe)

    s = sub.add_parser("compare", parents=[common], help="MBO against direct minimisation")
    s.add_argument("mesh")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("render", parents=[common], help="SVG of a field, its separatrices and a layout")
    s.add_argument("field", help="field JSON")
    s.add_argument("--layout", help="layout JSON to overlay")
    s.add_argument("--separatrices", action="store_true", help="trace and draw separatrices")
    s.add_argument("--show-mesh", action="store_true")
    s.set_defaults(func=cmd_render)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (MeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except tr.PartitionError as exc:
        print(f"partition failed: {exc}", file=sys.stderr)
        return EXIT_PARTITION


if __name__ == "__main__":
    sys.exit(main())
