"""Cube tilings of geometric boxes.

Coordinates are listed in axis order: ``corner[0]`` is the coordinate along
axis 1, the top/bottom axis.  In two dimensions axis 1 is vertical.
Generated and extracted tilings use :class:`~fractions.Fraction` throughout;
only realizer output carries floats.
"""

from __future__ import annotations

import itertools
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

import numpy as np

from .boxcore import (
    BoxError,
    DiscreteBox,
    GeometricBox,
    Metric,
    ValidationReport,
    _check_keys,
    format_rational,
    parse_rational,
    validate_box,
)
from .elsolver import shortest_paths


class RealizationError(RuntimeError):
    def __init__(self, msg, report: ValidationReport, tiling=None):
        super().__init__(msg)
        self.report = report
        self.tiling = tiling


@dataclass(frozen=True)
class Cube:
    id: str
    corner: tuple
    side: object

    @property
    def hi(self) -> tuple:
        return tuple(c + self.side for c in self.corner)


@dataclass(frozen=True)
class CubeTiling:
    box: GeometricBox
    cubes: tuple

    @property
    def n(self) -> int:
        return self.box.n

    @property
    def dims(self) -> tuple:
        return self.box.dims

    @property
    def exact(self) -> bool:
        vals = itertools.chain(self.dims, (c.side for c in self.cubes), (x for c in self.cubes for x in c.corner))
        return all(isinstance(x, Rational) for x in vals)

    def by_id(self) -> dict:
        return {c.id: c for c in self.cubes}

    def sides(self) -> list:
        return [c.side for c in self.cubes]

    def metric(self) -> Metric:
        """Tiling metric: each cube's side length."""
        return Metric({c.id: c.side for c in self.cubes}, exact=self.exact)

    def scaled(self, c) -> "CubeTiling":
        return CubeTiling(
            GeometricBox(tuple(h * c for h in self.dims)),
            tuple(Cube(q.id, tuple(x * c for x in q.corner), q.side * c) for q in self.cubes),
        )

    def to_dict(self) -> dict:
        fmt = format_rational if self.exact else float
        return {
            "n": self.n,
            "dims": [fmt(h) for h in self.dims],
            "cubes": [{"id": c.id, "corner": [fmt(x) for x in c.corner], "side": fmt(c.side)} for c in self.cubes],
        }

    @classmethod
    def from_dict(cls, obj) -> "CubeTiling":
        _check_keys(obj, {"n", "dims", "cubes"}, "tiling")
        for key in ("n", "dims", "cubes"):
            if key not in obj:
                raise BoxError(f"tiling: missing key {key!r}")

        def num(x):
            return parse_rational(x) if isinstance(x, (str, int)) and not isinstance(x, bool) else float(x)

        n = obj["n"]
        dims = tuple(num(h) for h in obj["dims"])
        if len(dims) != n:
            raise BoxError(f"tiling: expected {n} dims, got {len(dims)}")
        cubes = []
        for c in obj["cubes"]:
            _check_keys(c, {"id", "corner", "side"}, "tiling.cubes")
            corner = tuple(num(x) for x in c["corner"])
            if len(corner) != n:
                raise BoxError(f"tiling: cube {c.get('id')!r} corner has wrong dimension")
            cubes.append(Cube(str(c["id"]), corner, num(c["side"])))
        if len({c.id for c in cubes}) != len(cubes):
            raise BoxError("tiling: duplicate cube ids")
        return cls(GeometricBox(dims), tuple(cubes))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "CubeTiling":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise BoxError(f"line {exc.lineno}: {exc.msg}") from exc


def _int_frame(t: CubeTiling):
    """Scale exact coordinates to integers: (lo, hi, dims) as int arrays."""
    vals = list(t.dims) + [c.side for c in t.cubes] + [x for c in t.cubes for x in c.corner]
    den = 1
    for v in vals:
        den = den * Fraction(v).denominator // math.gcd(den, Fraction(v).denominator)
    big = max((abs(Fraction(v)) * den for v in vals), default=1) * 2
    dtype = np.int64 if big < 2**62 else object
    lo = np.array([[int(x * den) for x in c.corner] for c in t.cubes], dtype=dtype).reshape(len(t.cubes), t.n)
    side = np.array([int(c.side * den) for c in t.cubes], dtype=dtype)
    hi = lo + side[:, None]
    dims = np.array([int(h * den) for h in t.dims], dtype=dtype)
    return lo, hi, dims


def _float_frame(t: CubeTiling):
    lo = np.array([[float(x) for x in c.corner] for c in t.cubes]).reshape(len(t.cubes), t.n)
    side = np.array([float(c.side) for c in t.cubes])
    return lo, lo + side[:, None], np.array([float(h) for h in t.dims])


# -- construction ---------------------------------------------------------------


def _renumber(dims, cubes) -> CubeTiling:
    ordered = sorted(cubes, key=lambda c: (c[0], c[1]))
    return CubeTiling(GeometricBox(tuple(dims)), tuple(Cube(f"c{k}", corner, side) for k, (corner, side) in enumerate(ordered)))


def grid_tiling(k, n: int | None = None, cell=Fraction(1)) -> CubeTiling:
    """``k_1 x ... x k_n`` grid of congruent cubes of side ``cell``."""
    ks = (k,) * n if isinstance(k, int) else tuple(k)
    cell = Fraction(cell)
    cubes = [(tuple(cell * j for j in idx), cell) for idx in itertools.product(*(range(a) for a in ks))]
    return _renumber([cell * a for a in ks], cubes)


def refine_cube(t: CubeTiling, cube_id: str, q: int) -> CubeTiling:
    """Replace one cube by its ``q**n`` congruent subcubes, ids ``<id>.<j>``."""
    if q < 2:
        raise BoxError("refinement factor must be at least 2")
    out = []
    for c in t.cubes:
        if c.id != cube_id:
            out.append(c)
            continue
        s = Fraction(c.side) / q
        for j, idx in enumerate(itertools.product(range(q), repeat=t.n)):
            out.append(Cube(f"{c.id}.{j}", tuple(x + s * a for x, a in zip(c.corner, idx)), s))
    if len(out) == len(t.cubes):
        raise BoxError(f"no cube with id {cube_id!r}")
    return CubeTiling(t.box, tuple(out))


@dataclass
class GeneratorParams:
    """Parameters of :func:`generate_tiling`; out-of-range values are clamped.

    ``k`` is the top-level grid factor, an int or one factor per axis.
    ``boxes`` bounds the number of sub-box draws per grid.
    """

    n: int = 2
    k: object = 2
    depth: int = 1
    q_min: int = 2
    q_max: int = 3
    glue_p: float = 0.5
    boxes: int = 3
    seed: int = 0

    def clamped(self) -> "GeneratorParams":
        n = max(1, int(self.n))
        ks = (self.k,) * n if isinstance(self.k, int) else tuple(self.k)
        if len(ks) != n:
            ks = (ks[0],) * n
        ks = tuple(max(2, int(a)) for a in ks)
        q_min = max(2, int(self.q_min))
        return GeneratorParams(
            n=n,
            k=ks,
            depth=max(0, int(self.depth)),
            q_min=q_min,
            q_max=max(q_min, int(self.q_max)),
            glue_p=min(1.0, max(0.0, float(self.glue_p))),
            boxes=max(0, int(self.boxes)),
            seed=int(self.seed),
        )


def generate_tiling(params: GeneratorParams) -> CubeTiling:
    """Seeded random cube tiling built by gridding, gluing and regridding.

    The box ``[0,k_1] x ... x [0,k_n]`` is cut into unit cells.  A few
    disjoint cell-aligned sub-boxes are drawn; each is either glued into a
    single cube (if cubical, with probability ``glue_p``) or regridded with a
    factor ``q`` and treated the same way one level down.  Leftover cells are
    emitted as cubes.  Glued cubes are kept strictly smaller than every box
    side, so no cube touches two opposite faces.
    """
    p = params.clamped()
    rng = random.Random(p.seed)
    dims = [Fraction(a) for a in p.k]
    hmin = min(dims)
    cubes = []
    _fill(tuple(Fraction(0) for _ in dims), p.k, Fraction(1), 0, rng, p, hmin, cubes)
    return _renumber(dims, cubes)


def _fill(origin, counts, cell, level, rng, p, hmin, out):
    n = len(counts)
    free = np.ones(counts, dtype=bool)
    for _ in range(rng.randint(0, p.boxes)):
        if rng.random() < 0.5:
            s = rng.randint(1, min(counts))
            size = (s,) * n
        else:
            size = tuple(rng.randint(1, a) for a in counts)
        pos = tuple(rng.randint(0, a - s) for a, s in zip(counts, size))
        region = tuple(slice(a, a + s) for a, s in zip(pos, size))
        if not free[region].all():
            continue
        corner = tuple(o + cell * a for o, a in zip(origin, pos))
        cubical = len(set(size)) == 1
        if cubical and size[0] > 1 and cell * size[0] < hmin and rng.random() < p.glue_p:
            out.append((corner, cell * size[0]))
        elif level < p.depth:
            q = rng.randint(p.q_min, p.q_max)
            _fill(corner, tuple(s * q for s in size), cell / q, level + 1, rng, p, hmin, out)
        else:
            continue
        free[region] = False
    for idx in zip(*np.nonzero(free)):
        out.append((tuple(o + cell * int(a) for o, a in zip(origin, idx)), cell))


# -- validation -------------------------------------------------------------------


def validate_tiling(t: CubeTiling, tol: float = 0.0) -> ValidationReport:
    """Containment, pairwise interior disjointness and total volume.

    Exact tilings are checked exactly and ``tol`` is ignored.  Float tilings
    treat overlaps up to ``tol`` (a length) as contacts and allow a volume
    error of ``tol`` times the total facet measure.
    """
    report = ValidationReport()
    v = report.violations
    if not t.cubes:
        v.append("tiling has no cubes")
        return report
    exact = t.exact
    if exact:
        lo, hi, dims = _int_frame(t)
        tol = 0
    else:
        lo, hi, dims = _float_frame(t)
    ids = [c.id for c in t.cubes]
    if len(set(ids)) != len(ids):
        v.append("duplicate cube ids")
    for k, c in enumerate(t.cubes):
        if c.side <= 0:
            v.append(f"cube {c.id} has nonpositive side")
        if np.any(lo[k] < -tol) or np.any(hi[k] > dims + tol):
            v.append(f"cube {c.id} is not contained in the box")
    overlaps = []
    for a in range(len(t.cubes)):
        inter = np.minimum(hi[a], hi[a + 1 :]) - np.maximum(lo[a], lo[a + 1 :])
        bad = np.nonzero(np.all(inter > tol, axis=1))[0]
        for b in bad:
            overlaps.append((ids[a], ids[a + 1 + int(b)]))
    if overlaps:
        v.append(f"{len(overlaps)} overlapping pairs, e.g. {overlaps[0][0]} and {overlaps[0][1]}")
        report.details["overlaps"] = [list(p) for p in overlaps[:20]]
    n = t.n
    total = sum((c.side**n for c in t.cubes), Fraction(0) if exact else 0.0)
    deficit = t.box.volume - total
    report.details["volumeDeficit"] = format_rational(deficit) if exact else float(deficit)
    slack = 0 if exact else tol * sum(n * float(c.side) ** (n - 1) for c in t.cubes)
    if abs(deficit) > slack:
        v.append(f"volume mismatch: box {t.box.volume}, cubes {total}, deficit {deficit}")
    return report


# -- contact graph --------------------------------------------------------------------


CONTACT_MODES = ("full", "facet")


def _contacts(lo, hi, mode: str) -> list:
    edges = []
    for a in range(len(lo)):
        inter = np.minimum(hi[a], hi[a + 1 :]) - np.maximum(lo[a], lo[a + 1 :])
        touching = np.all(inter >= 0, axis=1)
        if mode == "facet":
            touching &= np.sum(inter == 0, axis=1) == 1
        edges.extend((a, a + 1 + int(b)) for b in np.nonzero(touching)[0])
    return edges


def contact_graph(t: CubeTiling, mode: str = "full", with_faces: bool = True):
    """Contact box and tiling metric of an exact tiling.

    ``full`` joins cubes whose closed cubes intersect; ``facet`` only those
    sharing an ``(n-1)``-dimensional piece of boundary.  Face ``i`` pos/neg are
    the cubes touching coordinate ``h_i`` / 0.  With ``with_faces`` the
    nested face boxes come from the induced face tilings, recursively.
    """
    if mode not in CONTACT_MODES:
        raise BoxError(f"contact mode must be one of {CONTACT_MODES}")
    if not t.exact:
        raise BoxError("contact graphs are extracted from exact tilings only")
    lo, hi, dims = _int_frame(t)
    ids = [c.id for c in t.cubes]
    for k, c in enumerate(t.cubes):
        span = np.nonzero((lo[k] == 0) & (hi[k] == dims))[0]
        if len(span):
            raise BoxError(f"cube {c.id} spans the full extent of axis {int(span[0]) + 1}; opposite faces would meet")
    edges = [(ids[a], ids[b]) for a, b in _contacts(lo, hi, mode)]
    faces = []
    for i in range(t.n):
        pos = [ids[k] for k in range(len(ids)) if hi[k][i] == dims[i]]
        neg = [ids[k] for k in range(len(ids)) if lo[k][i] == 0]
        faces.append((pos, neg))
    nested = None
    if with_faces and t.n >= 2:
        nested = []
        for i in range(1, t.n + 1):
            nested.append(
                tuple(contact_graph(face_tiling(t, i, side), mode, with_faces)[0] for side in ("pos", "neg"))
            )
    box = DiscreteBox.build(t.n, ids, edges, faces, nested)
    return box, t.metric()


def face_tiling(t: CubeTiling, i: int, side: str = "pos") -> CubeTiling:
    """The ``(n-1)``-dimensional tiling induced on facet ``i`` (coordinate ``h_i`` or 0)."""
    if t.n < 2:
        raise BoxError("face tilings need n >= 2")
    if not 1 <= i <= t.n:
        raise BoxError(f"axis {i} out of range 1..{t.n}")
    if side not in ("pos", "neg"):
        raise BoxError("side must be 'pos' or 'neg'")
    j = i - 1
    h = t.dims[j]
    keep = []
    for c in t.cubes:
        touches = c.corner[j] + c.side == h if side == "pos" else c.corner[j] == 0
        if touches:
            keep.append(Cube(c.id, c.corner[:j] + c.corner[j + 1 :], c.side))
    return CubeTiling(GeometricBox(t.dims[:j] + t.dims[j + 1 :]), tuple(keep))


def slice_tiling(t: CubeTiling, axis: int, value) -> CubeTiling:
    """Cubes cut by the hyperplane ``x_axis = value``, as an ``(n-1)``-dimensional tiling."""
    if not 1 <= axis <= t.n:
        raise BoxError(f"axis {axis} out of range 1..{t.n}")
    j = axis - 1
    h = t.dims[j]
    if not 0 <= value <= h:
        raise BoxError(f"slice value {value} outside [0, {h}]")
    keep = []
    for c in t.cubes:
        a, b = c.corner[j], c.corner[j] + c.side
        inside = a <= value < b if value < h else a < value <= b
        if inside:
            keep.append(Cube(c.id, c.corner[:j] + c.corner[j + 1 :], c.side))
    return CubeTiling(GeometricBox(t.dims[:j] + t.dims[j + 1 :]), tuple(keep))


# -- discrete lines -------------------------------------------------------------------


def discrete_line(t: CubeTiling, p: Sequence) -> list:
    """Cubes met by the line through top-face point ``p`` perpendicular to the top face.

    ``p`` is either a full point with ``p[0] == h_1`` or its ``n-1`` remaining
    coordinates.  Cubes are ordered by decreasing axis-1 corner, ties by id.
    """
    p = tuple(p)
    if len(p) == t.n - 1:
        p = (t.dims[0],) + p
    if len(p) != t.n or p[0] != t.dims[0]:
        raise BoxError("point must lie on the top face (axis-1 coordinate h_1)")
    for x, h in zip(p[1:], t.dims[1:]):
        if not 0 <= x <= h:
            raise BoxError("point lies outside the top face")
    hit = [c for c in t.cubes if all(c.corner[j] <= p[j] <= c.corner[j] + c.side for j in range(1, t.n))]
    hit.sort(key=lambda c: (-c.corner[0], c.id))
    return [c.id for c in hit]


# -- 2D realizer ----------------------------------------------------------------------


def realize_square_tiling(box: DiscreteBox, m: Metric, tol: float | None = None) -> CubeTiling:
    """Square tiling from an extremal metric of a 2-dimensional box.

    Vertex ``v`` becomes the square of side ``m(v)`` whose lower corner is
    ``(d_1(v) - m(v), d_2(v) - m(v))``, ``d_i`` the shortest-path distance
    from ``B_i'`` including both ends.  The target rectangle is
    ``[0, l_1] x [0, l_2]`` with ``l_i`` the ``B_i' -> B_i`` length.  Zero
    weights give no square.  The result is validated (with ``tol``, default
    ``1e-7`` times the smallest side, for float metrics) and
    :class:`RealizationError` is raised if it is not a tiling.
    """
    if box.n != 2:
        raise BoxError(f"square tilings need a 2-dimensional box, got n={box.n}")
    sp1 = shortest_paths(box, m, box.face(1, "neg"), box.face(1, "pos"))
    sp2 = shortest_paths(box, m, box.face(2, "neg"), box.face(2, "pos"))
    w = m.values(box)
    cubes = []
    dropped = []
    for k, v in enumerate(box.vertices):
        if w[k] <= 0:
            dropped.append(v)
            continue
        if sp1.dist[k] is None or sp2.dist[k] is None:
            raise BoxError(f"vertex {v} is not reachable from the bottom/left faces")
        cubes.append(Cube(v, (sp1.dist[k] - w[k], sp2.dist[k] - w[k]), w[k]))
    dims = (sp1.length, sp2.length)
    if tol is None:
        tol = 0.0 if m.exact else 1e-7 * float(min((c.side for c in cubes), default=1.0))
    bad_dims = [h for h in dims if not h > 0]
    if bad_dims:
        report = ValidationReport([f"target rectangle is degenerate: {dims}"])
        total = sum(c.side**2 for c in cubes)
        report.details["volumeDeficit"] = float(dims[0] * dims[1] - total)
        report.details["omittedZeroVertices"] = dropped
        raise RealizationError("metric does not realize a square tiling", report)
    tiling = CubeTiling(GeometricBox(dims), tuple(cubes))
    report = validate_tiling(tiling, tol)
    report.details["omittedZeroVertices"] = dropped
    if not report.ok:
        raise RealizationError("metric does not realize a square tiling: " + "; ".join(report.violations), report, tiling)
    return tiling


# -- SVG --------------------------------------------------------------------------------


def _fmt(x) -> str:
    return format(float(x), ".10g")


def render_svg(t: CubeTiling, slices: dict | None = None, scale: float = 100.0) -> str:
    """SVG of a 2D tiling, or of a 2D slice of a higher-dimensional one.

    ``slices`` maps axis numbers to slice values; exactly ``n-2`` are needed.
    Axis 1 is drawn vertically (upwards), the other remaining axis horizontally.
    Coordinates are written with 10 significant digits.
    """
    slices = dict(slices or {})
    if len(slices) != t.n - 2:
        raise BoxError(f"a {t.n}-dimensional tiling needs {t.n - 2} slice(s) to render")
    cur = t
    for axis in sorted(slices, reverse=True):
        cur = slice_tiling(cur, axis, slices[axis])
    H, W = float(cur.dims[0]), float(cur.dims[1])
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(W * scale)}" height="{_fmt(H * scale)}" '
        f'viewBox="0 0 {_fmt(W * scale)} {_fmt(H * scale)}">',
        f'<rect x="0" y="0" width="{_fmt(W * scale)}" height="{_fmt(H * scale)}" fill="white" stroke="black"/>',
    ]
    for c in cur.cubes:
        y = (H - float(c.corner[0]) - float(c.side)) * scale
        x = float(c.corner[1]) * scale
        s = float(c.side) * scale
        lines.append(
            f'<rect id="{c.id}" x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(s)}" height="{_fmt(s)}" '
            f'fill="#9ecae1" stroke="black" stroke-width="1"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
