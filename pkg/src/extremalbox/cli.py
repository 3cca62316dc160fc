"""Command-line front end.

Every command writes deterministic JSON (sorted keys) and, next to each
output file, a ``<output>.manifest.json`` run manifest.  Without ``--out``
the result goes to stdout and the manifest to stderr.

Exit codes: 0 ok, 1 parse or validation error, 2 solver did not converge,
3 undetermined verdict (search cap hit), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .analysis import UNDETERMINED, check_necessary, check_schramm, check_tip, verify_extremality_chain
from .boxcore import BoxError, DiscreteBox, Metric, parse_rational, validate_box
from .cubetile import (
    CubeTiling,
    GeneratorParams,
    RealizationError,
    contact_graph,
    generate_tiling,
    realize_square_tiling,
    render_svg,
    validate_tiling,
)
from .elsolver import ConvergenceError, PathCapExceeded, SolverOptions, solve

log = logging.getLogger("extremalbox")

EXIT_OK, EXIT_INVALID, EXIT_CONVERGENCE, EXIT_UNDETERMINED, EXIT_IO = range(5)


class CliError(Exception):
    def __init__(self, msg: str, code: int, detail: dict | None = None):
        super().__init__(msg)
        self.code = code
        self.detail = detail


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _read_json(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}", EXIT_IO) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if exc.lineno <= len(text.splitlines()) else ""
        raise CliError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line}", EXIT_INVALID) from exc


def _load(path: str, kind: str):
    obj = _read_json(path)
    try:
        if kind == "auto":
            kind = "tiling" if isinstance(obj, dict) and "cubes" in obj else "box"
        if kind == "tiling":
            return CubeTiling.from_dict(obj)
        if kind == "metric":
            # a solver result file carries its metric under "metric"
            if isinstance(obj, dict) and "extremalLength" in obj:
                obj = obj.get("metric")
            return Metric.from_dict(obj)
        return DiscreteBox.from_dict(obj)
    except BoxError as exc:
        raise CliError(f"{path}: {exc}", EXIT_INVALID) from exc


def _valid_box(box: DiscreteBox, path: str) -> DiscreteBox:
    rep = validate_box(box)
    if not rep.ok:
        raise CliError(f"{path}: invalid box: " + "; ".join(rep.violations), EXIT_INVALID, rep.to_dict())
    return box


class _Run:
    """Collects inputs/outputs of one invocation and writes the manifest."""

    def __init__(self, args: argparse.Namespace, argv: list):
        self.args = args
        self.argv = argv
        self.inputs: list = []
        self.outputs: list = []
        self.start = time.perf_counter()

    def emit(self, text: str, out: str | None) -> None:
        if out is None:
            sys.stdout.write(text)
            return
        try:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            Path(out).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise CliError(f"{out}: {exc.strerror or exc}", EXIT_IO) from exc
        self.outputs.append(out)

    def manifest(self) -> dict:
        a = self.args
        tol = {k: getattr(a, k) for k in ("eps", "tol", "tol_abs", "max_paths", "max_iter") if getattr(a, k, None) is not None}
        return {
            "command": ["extremalbox", *self.argv],
            "inputs": self.inputs,
            "outputs": self.outputs,
            "seed": getattr(a, "seed", None),
            "tolerances": tol,
            "version": __version__,
            "wallClockSeconds": round(time.perf_counter() - self.start, 6),
        }

    def finish(self) -> None:
        text = _dump(self.manifest())
        if not self.outputs:
            sys.stderr.write(text)
            return
        for out in self.outputs:
            try:
                Path(out + ".manifest.json").write_text(text, encoding="utf-8")
            except OSError as exc:
                raise CliError(f"{out}.manifest.json: {exc.strerror or exc}", EXIT_IO) from exc


def _solver_opts(a) -> SolverOptions:
    return SolverOptions(eps=a.eps, max_iter=a.max_iter, max_paths=a.max_paths, seed=a.seed)


def _outputs_for(a, cmd: str) -> list:
    """One output path per input: ``--out`` itself for one input, a directory otherwise."""
    if len(a.inputs) == 1:
        return [a.out]
    if a.out is None:
        raise CliError("several inputs need --out DIR", EXIT_IO)
    return [str(Path(a.out) / f"{Path(p).stem}.{cmd}.json") for p in a.inputs]


def _map(fn, items: list, jobs: int) -> list:
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# -- solve --------------------------------------------------------------------


def _solve_one(job):
    path, a = job
    box = _valid_box(_load(path, "box"), path)
    try:
        res = solve(box, a.mode, opts=_solver_opts(a))
    except ConvergenceError as exc:
        raise CliError(f"{path}: {exc}", EXIT_CONVERGENCE, {"residuals": exc.residuals}) from exc
    except PathCapExceeded as exc:
        raise CliError(f"{path}: {exc}", EXIT_UNDETERMINED) from exc
    return _dump(res.to_dict()), EXIT_OK


def cmd_solve(a, run: _Run) -> int:
    return _per_input(a, run, "solve", _solve_one)


def _per_input(a, run: _Run, cmd: str, fn) -> int:
    outs = _outputs_for(a, cmd)
    run.inputs.extend(a.inputs)
    results = _map(_guarded, [(fn, (p, a)) for p in a.inputs], a.jobs)
    code = EXIT_OK
    for path, out, (text, rc, err) in zip(a.inputs, outs, results):
        if err is not None:
            msg, rc, detail = err
            sys.stderr.write(f"error: {msg}\n")
            if detail:
                sys.stderr.write(_dump(detail))
        else:
            run.emit(text, out)
        code = max(code, rc)
    return code


def _guarded(job):
    fn, arg = job
    try:
        text, rc = fn(arg)
        return text, rc, None
    except CliError as exc:
        return None, exc.code, (str(exc), exc.code, exc.detail)


# -- generate / extract -------------------------------------------------------


def _parse_k(text: str):
    parts = [int(x) for x in text.split(",")]
    return parts[0] if len(parts) == 1 else tuple(parts)


def cmd_generate(a, run: _Run) -> int:
    q_min, q_max = (a.refine_q, a.refine_q) if a.refine_q else (2, 3)
    params = GeneratorParams(
        n=a.n, k=a.k, depth=a.depth, q_min=q_min, q_max=q_max, glue_p=a.glue_p, boxes=a.boxes, seed=a.seed
    )
    try:
        t = generate_tiling(params)
    except BoxError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc
    run.emit(_dump(t.to_dict()), a.out)
    return EXIT_OK


def cmd_extract(a, run: _Run) -> int:
    t = _load(a.tiling, "tiling")
    run.inputs.append(a.tiling)
    _valid_tiling(t, a.tiling)
    box, s = contact_graph(t, a.contact_mode)
    run.emit(_dump(box.to_dict()), a.out)
    metric_out = a.metric_out
    if metric_out is None and a.out is not None:
        metric_out = str(Path(a.out).with_suffix("")) + ".metric.json"
    if metric_out is not None:
        run.emit(_dump(s.to_dict()), metric_out)
    return EXIT_OK


def _valid_tiling(t: CubeTiling, path: str, tol: float = 0.0) -> None:
    rep = validate_tiling(t, tol)
    if not rep.ok:
        raise CliError(f"{path}: invalid tiling: " + "; ".join(rep.violations), EXIT_INVALID, rep.to_dict())


# -- check ----------------------------------------------------------------------


def _check_one(job):
    path, a = job
    target = _load(path, "auto")
    opts = _solver_opts(a)
    if isinstance(target, CubeTiling):
        _valid_tiling(target, path)
        box, m = contact_graph(target, a.contact_mode, with_faces=a.necessary)
    else:
        box = _valid_box(target, path)
        if a.metric is not None:
            m = _load(a.metric, "metric")
        elif a.tip or a.schramm:
            try:
                m = solve(box, a.mode, opts=opts).metric
            except ConvergenceError as exc:
                raise CliError(f"{path}: {exc}", EXIT_CONVERGENCE, {"residuals": exc.residuals}) from exc
        else:
            m = None
    reports = []
    try:
        if a.tip:
            axes = [a.axis] if a.axis else range(2, box.n + 1)
            reports += [check_tip(box, m, i, cap=a.max_paths) for i in axes]
        if a.schramm:
            reports.append(check_schramm(box, m, cap=a.max_paths))
        if a.necessary:
            reports.append(check_necessary(target, opts, rtol=a.tol, mode=a.contact_mode))
        if a.chain:
            if not isinstance(target, CubeTiling):
                raise CliError(f"{path}: --chain needs a tiling file", EXIT_INVALID)
            reports.append(verify_extremality_chain(target, a.contact_mode, opts, rtol=a.tol))
    except BoxError as exc:
        raise CliError(f"{path}: {exc}", EXIT_INVALID) from exc
    except ConvergenceError as exc:
        raise CliError(f"{path}: {exc}", EXIT_CONVERGENCE, {"residuals": exc.residuals}) from exc
    rc = EXIT_UNDETERMINED if any(r.verdict == UNDETERMINED for r in reports) else EXIT_OK
    return _dump({"reports": [r.to_dict() for r in reports]}), rc


def cmd_check(a, run: _Run) -> int:
    if not (a.tip or a.schramm or a.necessary or a.chain):
        raise CliError("choose at least one of --tip, --schramm, --necessary, --chain", EXIT_INVALID)
    if a.metric is not None:
        run.inputs.append(a.metric)
    return _per_input(a, run, "check", _check_one)


# -- realize2d / render / validate -----------------------------------------------


def cmd_realize2d(a, run: _Run) -> int:
    box = _valid_box(_load(a.box, "box"), a.box)
    m = _load(a.metric, "metric")
    run.inputs += [a.box, a.metric]
    try:
        t = realize_square_tiling(box, m, tol=a.tol_abs)
    except RealizationError as exc:
        raise CliError(f"realization failed: {exc}", EXIT_INVALID, exc.report.to_dict()) from exc
    except BoxError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc
    run.emit(_dump(t.to_dict()), a.out)
    return EXIT_OK


def _parse_slice(text: str):
    axis, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected axis=value, got {text!r}")
    try:
        return int(axis), parse_rational(value)
    except (ValueError, BoxError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def cmd_render(a, run: _Run) -> int:
    t = _load(a.tiling, "tiling")
    run.inputs.append(a.tiling)
    try:
        svg = render_svg(t, dict(a.slice) if a.slice else None, scale=a.scale)
    except BoxError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc
    run.emit(svg, a.out)
    return EXIT_OK


def cmd_validate(a, run: _Run) -> int:
    target = _load(a.file, "auto")
    run.inputs.append(a.file)
    rep = validate_tiling(target, a.tol_abs or 0.0) if isinstance(target, CubeTiling) else validate_box(target)
    run.emit(_dump(rep.to_dict()), a.out)
    return EXIT_OK if rep.ok else EXIT_INVALID


# -- argument parsing ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="extremalbox", description="Discrete extremal length of boxes and cube tilings.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress to stderr")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, solver=True):
        p.add_argument("--out", help="output file (directory for several inputs); stdout if omitted")
        p.add_argument("--seed", type=int, default=0)
        if solver:
            p.add_argument("--eps", type=float, default=1e-8, help="solver feasibility tolerance")
            p.add_argument("--max-iter", type=int, default=5000, help="constraint-generation rounds")
            p.add_argument("--max-paths", type=int, default=100000, help="enumeration / search cap")
            p.add_argument("--mode", choices=["cutting-plane", "brute-force"], default="cutting-plane")
            p.add_argument("--jobs", type=int, default=1, help="parallel workers across input files")

    p = sub.add_parser("solve", help="extremal metric and extremal length of a box")
    p.add_argument("inputs", nargs="+", metavar="BOX")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("generate", help="seeded random cube tiling")
    common(p, solver=False)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--k", type=_parse_k, default=2, help="grid factor, or comma list per axis")
    p.add_argument("--depth", type=int, default=1)
    p.add_argument("--glue-p", type=float, default=0.5)
    p.add_argument("--refine-q", type=int, default=None, help="fixed refinement factor (default: 2 or 3)")
    p.add_argument("--boxes", type=int, default=3, help="sub-boxes drawn per level")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("extract", help="contact box and exact tiling metric of a tiling")
    p.add_argument("tiling")
    common(p, solver=False)
    p.add_argument("--contact-mode", choices=["full", "facet"], default="full")
    p.add_argument("--metric-out", help="metric file (default: <out stem>.metric.json)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("check", help="triple intersection, Schramm, necessary conditions, extremality chain")
    p.add_argument("inputs", nargs="+", metavar="FILE", help="box or tiling files")
    common(p)
    p.add_argument("--metric", help="metric for box inputs (default: solver metric)")
    p.add_argument("--tip", action="store_true")
    p.add_argument("--axis", type=int, default=None, help="restrict --tip to one axis")
    p.add_argument("--schramm", action="store_true")
    p.add_argument("--necessary", action="store_true")
    p.add_argument("--chain", action="store_true")
    p.add_argument("--tol", type=float, default=1e-5, help="relative tolerance for extremal-length comparisons")
    p.add_argument("--contact-mode", choices=["full", "facet"], default="full")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("realize2d", help="square tiling from a 2D box and an extremal metric")
    p.add_argument("box")
    p.add_argument("metric")
    common(p, solver=False)
    p.add_argument("--tol", dest="tol_abs", type=float, default=None, help="absolute validation tolerance")
    p.set_defaults(func=cmd_realize2d)

    p = sub.add_parser("render", help="SVG of a 2D tiling or a 2D slice of a higher one")
    p.add_argument("tiling")
    common(p, solver=False)
    p.add_argument("--slice", type=_parse_slice, action="append", metavar="AXIS=VALUE")
    p.add_argument("--scale", type=float, default=100.0)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("validate", help="validate a box or tiling file")
    p.add_argument("file")
    common(p, solver=False)
    p.add_argument("--tol", dest="tol_abs", type=float, default=None, help="tolerance for float tilings")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv: list | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    run = _Run(args, argv)
    try:
        code = args.func(args, run)
        run.finish()
        return code
    except CliError as exc:
        sys.stderr.write(f"error: {exc}\n")
        if exc.detail:
            sys.stderr.write(_dump(exc.detail))
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
