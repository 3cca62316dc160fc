"""Domain types: discrete boxes, vertex metrics, geometric boxes.

Axis numbers are 1-based throughout the public API, matching the JSON
``faces`` keys.  Face pair 1 is the distinguished top/bottom pair.  For every
axis ``i`` the ``pos`` set is the face at coordinate ``h_i`` and the ``neg``
set the face at coordinate 0.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from numbers import Rational
from typing import Iterable, Mapping, Sequence

import numpy as np


class BoxError(ValueError):
    """Malformed input: bad axis index, unknown vertex, unparseable file."""


# -- rationals -------------------------------------------------------------


def parse_rational(value) -> Fraction:
    if isinstance(value, bool):
        raise BoxError(f"not a rational: {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise BoxError(f"not a rational: {value!r}") from exc
    raise BoxError(f"not a rational: {value!r}")


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _parse_number(value, exact: bool):
    if exact:
        return parse_rational(value)
    if isinstance(value, str):
        return float(parse_rational(value))
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise BoxError(f"not a number: {value!r}")
    return float(value)


def _check_keys(obj, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise BoxError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise BoxError(f"{where}: unknown keys {sorted(extra)}")


# -- validation report ------------------------------------------------------


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": list(self.violations), "details": self.details}


# -- discrete box -----------------------------------------------------------


@dataclass(frozen=True)
class DiscreteBox:
    """A finite graph with ``n`` designated pairs of opposing faces.

    ``faces[i-1]`` is ``(pos, neg)`` = ``(B_i, B_i')``.  ``face_structure``,
    when present, holds for every axis a ``(pos_box, neg_box)`` pair of
    ``(n-1)``-dimensional boxes over the face vertex sets; their pairs list
    the parent's remaining axes in increasing order.

    Construction does not validate; call :func:`validate_box`.
    """

    n: int
    vertices: tuple
    edges: frozenset
    faces: tuple
    face_structure: tuple | None = None

    @classmethod
    def build(cls, n, vertices, edges, faces, face_structure=None) -> "DiscreteBox":
        verts = tuple(str(v) for v in vertices)
        order = {v: k for k, v in enumerate(verts)}
        norm = set()
        for e in edges:
            u, w = (str(x) for x in e)
            if u in order and w in order and order[w] < order[u]:
                u, w = w, u
            norm.add((u, w))
        fs = tuple((frozenset(map(str, p)), frozenset(map(str, q))) for p, q in faces)
        nested = None
        if face_structure is not None:
            nested = tuple((p, q) for p, q in face_structure)
        return cls(int(n), verts, frozenset(norm), fs, nested)

    @cached_property
    def index(self) -> dict:
        return {v: k for k, v in enumerate(self.vertices)}

    @cached_property
    def adjacency(self) -> tuple:
        """Neighbour index lists, sorted, self-loops and unknown ends dropped."""
        idx = self.index
        nbrs = [set() for _ in self.vertices]
        for u, w in self.edges:
            if u in idx and w in idx and u != w:
                nbrs[idx[u]].add(idx[w])
                nbrs[idx[w]].add(idx[u])
        return tuple(tuple(sorted(s)) for s in nbrs)

    def face(self, i: int, side: str = "pos") -> frozenset:
        self._check_axis(i)
        pos, neg = self.faces[i - 1]
        if side == "pos":
            return pos
        if side == "neg":
            return neg
        raise BoxError(f"side must be 'pos' or 'neg', got {side!r}")

    @property
    def top(self) -> frozenset:
        return self.faces[0][0]

    @property
    def bottom(self) -> frozenset:
        return self.faces[0][1]

    def face_indices(self, i: int, side: str = "pos") -> list:
        idx = self.index
        return sorted(idx[v] for v in self.face(i, side))

    def _check_axis(self, i: int) -> None:
        if not isinstance(i, (int, np.integer)) or not 1 <= i <= self.n:
            raise BoxError(f"axis index {i!r} out of range 1..{self.n}")

    def to_dict(self) -> dict:
        order = self.index

        def ordered(s):
            return sorted(s, key=lambda v: order.get(v, len(order)))

        out = {
            "n": self.n,
            "vertices": list(self.vertices),
            "edges": [list(e) for e in sorted(self.edges, key=lambda e: (order.get(e[0], -1), order.get(e[1], -1), e))],
            "faces": {
                str(i + 1): {"pos": ordered(p), "neg": ordered(q)} for i, (p, q) in enumerate(self.faces)
            },
        }
        if self.face_structure is not None:
            out["faceStructure"] = {
                str(i + 1): {"pos": p.to_dict(), "neg": q.to_dict()}
                for i, (p, q) in enumerate(self.face_structure)
            }
        return out

    @classmethod
    def from_dict(cls, obj, where: str = "box") -> "DiscreteBox":
        _check_keys(obj, {"n", "vertices", "edges", "faces", "faceStructure"}, where)
        for key in ("n", "vertices", "edges", "faces"):
            if key not in obj:
                raise BoxError(f"{where}: missing key {key!r}")
        n = obj["n"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise BoxError(f"{where}: n must be a positive integer")
        faces_obj = obj["faces"]
        if not isinstance(faces_obj, dict) or set(faces_obj) != {str(i) for i in range(1, n + 1)}:
            raise BoxError(f"{where}: faces must have keys '1'..'{n}'")
        faces = []
        for i in range(1, n + 1):
            pair = faces_obj[str(i)]
            _check_keys(pair, {"pos", "neg"}, f"{where}.faces.{i}")
            faces.append((pair.get("pos", []), pair.get("neg", [])))
        for e in obj["edges"]:
            if not isinstance(e, list) or len(e) != 2:
                raise BoxError(f"{where}: every edge must be a 2-element list, got {e!r}")
        nested = None
        if "faceStructure" in obj:
            fs = obj["faceStructure"]
            if not isinstance(fs, dict) or set(fs) != {str(i) for i in range(1, n + 1)}:
                raise BoxError(f"{where}: faceStructure must have keys '1'..'{n}'")
            nested = []
            for i in range(1, n + 1):
                pair = fs[str(i)]
                _check_keys(pair, {"pos", "neg"}, f"{where}.faceStructure.{i}")
                nested.append(
                    (
                        cls.from_dict(pair["pos"], f"{where}.faceStructure.{i}.pos"),
                        cls.from_dict(pair["neg"], f"{where}.faceStructure.{i}.neg"),
                    )
                )
        return cls.build(n, obj["vertices"], obj["edges"], faces, nested)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "DiscreteBox":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise BoxError(f"line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(obj)


def validate_box(box: DiscreteBox) -> ValidationReport:
    """Collect every violated invariant of ``box``; never raises."""
    report = ValidationReport()
    v = report.violations
    if box.n < 1:
        v.append(f"dimension must be positive, got {box.n}")
    if len(set(box.vertices)) != len(box.vertices):
        v.append("duplicate vertices")
    vs = set(box.vertices)
    for a, b in sorted(box.edges):
        if a == b:
            v.append(f"self-loop at {a}")
        for x in (a, b):
            if x not in vs:
                v.append(f"edge ({a},{b}) uses unknown vertex {x}")
    if len(box.faces) != box.n:
        v.append(f"expected {box.n} face pairs, got {len(box.faces)}")
    for i, (pos, neg) in enumerate(box.faces, start=1):
        for side, s in (("pos", pos), ("neg", neg)):
            if not s:
                v.append(f"face {i}.{side} is empty")
            unknown = sorted(s - vs)
            if unknown:
                v.append(f"face {i}.{side} has unknown vertices {unknown}")
        common = sorted(pos & neg)
        if common:
            v.append(f"face pair {i} not disjoint: B_{i} and B_{i}' share {common}")
            report.details.setdefault("overlaps", {})[str(i)] = common
    if box.vertices and not _connected(box):
        v.append("graph is not connected")
    if box.face_structure is not None:
        if len(box.face_structure) != box.n:
            v.append("faceStructure must have one entry per axis")
        for i, pair in enumerate(box.face_structure, start=1):
            if i > len(box.faces):
                break
            for side, nested, s in (("pos", pair[0], box.faces[i - 1][0]), ("neg", pair[1], box.faces[i - 1][1])):
                if nested.n != box.n - 1:
                    v.append(f"faceStructure {i}.{side} has dimension {nested.n}, expected {box.n - 1}")
                if set(nested.vertices) != set(s):
                    v.append(f"faceStructure {i}.{side} vertex set differs from face {i}.{side}")
                sub = validate_box(nested)
                v.extend(f"faceStructure {i}.{side}: {msg}" for msg in sub.violations)
    return report


def _connected(box: DiscreteBox) -> bool:
    adj = box.adjacency
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return len(seen) == len(box.vertices)


def permute_axes(box: DiscreteBox, perm: Sequence[int]) -> DiscreteBox:
    """Reorder face pairs: new axis ``k+1`` is old axis ``perm[k]+1`` (0-based perm).

    Nested face boxes are carried along with their own pairs reordered so
    that they keep listing the remaining axes in increasing order.
    """
    perm = list(perm)
    if sorted(perm) != list(range(box.n)):
        raise BoxError(f"not a permutation of 0..{box.n - 1}: {perm}")
    faces = tuple(box.faces[p] for p in perm)
    nested = None
    if box.face_structure is not None:
        nested = []
        for k, p in enumerate(perm):
            rest = [perm[r] for r in range(box.n) if r != k]
            induced = [q - (1 if q > p else 0) for q in rest]
            pos, neg = box.face_structure[p]
            nested.append((permute_axes(pos, induced), permute_axes(neg, induced)))
        nested = tuple(nested)
    return DiscreteBox(box.n, box.vertices, box.edges, faces, nested)


def rotate_box(box: DiscreteBox, i: int) -> DiscreteBox:
    """Promote face pair ``i`` to the top/bottom position by swapping it with pair 1."""
    box._check_axis(i)
    perm = list(range(box.n))
    perm[0], perm[i - 1] = perm[i - 1], perm[0]
    return permute_axes(box, perm)


def random_box(rng: random.Random, n: int, num_vertices: int, edge_prob: float = 0.35) -> DiscreteBox:
    """A random valid box: connected graph, random disjoint face pairs."""
    if num_vertices < 2:
        raise BoxError("a box needs at least two vertices")
    names = [f"v{k}" for k in range(num_vertices)]
    order = names[:]
    rng.shuffle(order)
    edges = {tuple(sorted((order[k], order[rng.randrange(k)]), key=names.index)) for k in range(1, num_vertices)}
    for a in range(num_vertices):
        for b in range(a + 1, num_vertices):
            if rng.random() < edge_prob:
                edges.add((names[a], names[b]))
    faces = []
    for _ in range(n):
        pool = names[:]
        rng.shuffle(pool)
        cut = rng.randint(1, num_vertices - 1)
        pos_size = rng.randint(1, min(cut, 3))
        neg_size = rng.randint(1, min(num_vertices - cut, 3))
        faces.append((pool[:pos_size], pool[cut : cut + neg_size]))
    return DiscreteBox.build(n, names, edges, faces)


# -- metrics ---------------------------------------------------------------


@dataclass(frozen=True)
class Metric:
    """Nonnegative weight per vertex.

    ``exact`` metrics hold :class:`~fractions.Fraction` values and serialize
    as ``"p/q"`` strings; the others hold floats.
    """

    weights: Mapping
    exact: bool = False

    def __post_init__(self):
        conv = Fraction if self.exact else float
        w = {str(k): conv(v) for k, v in self.weights.items()}
        bad = sorted(k for k, x in w.items() if x < 0 or x != x)
        if bad:
            raise BoxError(f"metric weights must be nonnegative: {bad}")
        object.__setattr__(self, "weights", w)

    def __getitem__(self, v):
        try:
            return self.weights[v]
        except KeyError:
            raise BoxError(f"unknown vertex {v!r}") from None

    def __len__(self):
        return len(self.weights)

    @classmethod
    def uniform(cls, box: DiscreteBox, value) -> "Metric":
        exact = isinstance(value, Rational)
        return cls({v: value for v in box.vertices}, exact=exact)

    @classmethod
    def from_array(cls, box: DiscreteBox, values) -> "Metric":
        return cls({v: float(x) for v, x in zip(box.vertices, values)})

    def array(self, box: DiscreteBox) -> np.ndarray:
        return np.array([float(self[v]) for v in box.vertices])

    def values(self, box: DiscreteBox) -> list:
        """Weights in box vertex order, keeping the exact representation."""
        return [self[v] for v in box.vertices]

    def scaled(self, c) -> "Metric":
        return Metric({k: x * c for k, x in self.weights.items()}, exact=self.exact and isinstance(c, Rational))

    def as_float(self) -> "Metric":
        return Metric({k: float(x) for k, x in self.weights.items()})

    def to_dict(self) -> dict:
        if self.exact:
            return {"weights": {k: format_rational(x) for k, x in self.weights.items()}}
        return {"weights": {k: x for k, x in self.weights.items()}}

    @classmethod
    def from_dict(cls, obj) -> "Metric":
        _check_keys(obj, {"weights"}, "metric")
        w = obj.get("weights")
        if not isinstance(w, dict):
            raise BoxError("metric: 'weights' must be an object")
        exact = all(isinstance(x, str) for x in w.values())
        return cls({k: _parse_number(x, exact) for k, x in w.items()}, exact=exact)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "Metric":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise BoxError(f"line {exc.lineno}: {exc.msg}") from exc


@dataclass(frozen=True)
class PerturbedMetric:
    """``base`` with ``t`` added once to every vertex listed in ``path``."""

    base: Metric
    path: tuple
    t: float

    def __post_init__(self):
        if self.t < 0:
            raise BoxError("perturbation t must be nonnegative")
        object.__setattr__(self, "path", tuple(self.path))

    def __getitem__(self, v):
        return self.base[v] + self.t if v in set(self.path) else self.base[v]

    def evaluate(self) -> Metric:
        on = set(self.path)
        unknown = on - self.base.weights.keys()
        if unknown:
            raise BoxError(f"perturbation path has vertices without weight: {sorted(unknown)}")
        exact = self.base.exact and isinstance(self.t, Rational)
        return Metric({k: (x + self.t if k in on else x) for k, x in self.base.weights.items()}, exact=exact)


# -- geometric box -----------------------------------------------------------


@dataclass(frozen=True)
class GeometricBox:
    """``[0,h_1] x ... x [0,h_n]`` with exact rational side lengths."""

    dims: tuple

    def __post_init__(self):
        dims = tuple(self.dims)
        if not dims:
            raise BoxError("a geometric box needs at least one dimension")
        if any(h <= 0 for h in dims):
            raise BoxError(f"box side lengths must be positive, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def volume(self):
        v = 1
        for h in self.dims:
            v *= h
        return v

    def to_dict(self) -> dict:
        return {"dims": [format_rational(h) if isinstance(h, Rational) else h for h in self.dims]}

    @classmethod
    def from_dict(cls, obj) -> "GeometricBox":
        _check_keys(obj, {"dims"}, "geometric box")
        return cls(tuple(parse_rational(h) for h in obj["dims"]))


def box_from_json_file(path) -> DiscreteBox:
    with open(path, encoding="utf-8") as fh:
        return DiscreteBox.loads(fh.read())


def metric_from_json_file(path) -> Metric:
    with open(path, encoding="utf-8") as fh:
        return Metric.loads(fh.read())


def iter_axes(box: DiscreteBox) -> Iterable[int]:
    return range(1, box.n + 1)
