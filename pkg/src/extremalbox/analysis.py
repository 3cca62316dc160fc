"""Condition checkers: triple intersection property, Schramm's condition,
necessary conditions for cube tilings, and the extremality inequality chain.

All hitting questions reduce to one predicate: a vertex set ``X`` meets every
shortest top-bottom path iff the top is unreachable from the bottom in the
shortest-path subgraph once ``X`` is deleted.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .boxcore import BoxError, DiscreteBox, Metric, rotate_box, validate_box
from .cubetile import CubeTiling, contact_graph, validate_tiling
from .elsolver import (
    SolverOptions,
    UnreachableError,
    extremal_metric,
    metric_volume,
    metric_volume_pow,
    perturbation_derivative,
    shortest_paths,
)

HOLDS, FAILS, UNDETERMINED = "holds", "fails", "undetermined"

DEFAULT_CAP = 10**6
EL_RTOL = 1e-5


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, set, frozenset)):
        seq = sorted(x) if isinstance(x, (set, frozenset)) else x
        return [_jsonable(v) for v in seq]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


@dataclass
class ConditionReport:
    name: str
    verdict: str
    witnesses: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    parts: list = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    @property
    def fails(self) -> bool:
        return self.verdict == FAILS

    def part(self, name: str) -> "ConditionReport":
        for p in self.parts:
            if p.name == name:
                return p
        raise KeyError(name)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "verdict": self.verdict,
            "witnesses": _jsonable(self.witnesses),
            "stats": _jsonable(self.stats),
            "tolerances": _jsonable(self.tolerances),
        }
        if self.parts:
            out["parts"] = [p.to_dict() for p in self.parts]
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _combine(name: str, parts: list, **extra) -> ConditionReport:
    verdicts = {p.verdict for p in parts}
    if FAILS in verdicts:
        verdict = FAILS
    elif UNDETERMINED in verdicts:
        verdict = UNDETERMINED
    else:
        verdict = HOLDS
    return ConditionReport(name, verdict, parts=parts, **extra)


# -- hitting search -------------------------------------------------------------------


def _pair_structure(box, m, i, tol):
    sp = shortest_paths(box, m, box.face(i, "neg"), box.face(i, "pos"), tol)
    if not sp.reachable:
        raise UnreachableError(f"faces B_{i} and B_{i}' are not connected")
    return sp


def _hitting_search(box: DiscreteBox, m: Metric, i: int, cap: int, tol) -> ConditionReport:
    """Look for a shortest ``B_i' -> B_i`` path meeting every shortest top-bottom path.

    Depth-first over the pair-``i`` shortest-path subgraph.  A prefix is
    abandoned when the prefix together with everything still reachable from
    its end leaves a top-bottom path untouched; that path is kept as a
    certificate.  ``cap`` bounds the number of search nodes.
    """
    sp1 = _pair_structure(box, m, 1, tol)
    spi = _pair_structure(box, m, i, tol)
    names = box.vertices
    stats = {"nodes": 0, "candidatesCompleted": 0, "pruned": 0, "capHit": False}
    tols = {"metricTol": sp1.tol, "cap": cap}

    avoid = sp1.avoiding_path(spi.vertices_on_paths())
    if avoid is not None:
        return ConditionReport(
            f"axis{i}",
            FAILS,
            witnesses={"refutation": "avoids every shortest axis path", "avoiders": [list(avoid)]},
            stats=stats,
            tolerances=tols,
        )

    ends = set(spi.ends)
    avoiders = {}

    def reach_from(u, banned):
        seen = {u}
        queue = deque([u])
        while queue:
            x = queue.popleft()
            for y in spi.succ[x]:
                if y not in seen and y not in banned:
                    seen.add(y)
                    queue.append(y)
        return seen

    def complete(prefix, onstack):
        # any continuation of prefix to an end vertex
        u = prefix[-1]
        parent = {u: None}
        queue = deque([u])
        while queue:
            x = queue.popleft()
            if x in ends:
                tail = []
                while x is not None:
                    tail.append(x)
                    x = parent[x]
                return prefix[:-1] + tail[::-1]
            for y in spi.succ[x]:
                if y not in parent and y not in onstack:
                    parent[y] = x
                    queue.append(y)
        return None

    for s in spi.starts:
        stack = [(s, iter(spi.succ[s]))]
        prefix = [s]
        onstack = {s}
        fresh = True
        while stack:
            if fresh:
                fresh = False
                stats["nodes"] += 1
                if stats["nodes"] > cap:
                    stats["capHit"] = True
                    return ConditionReport(
                        f"axis{i}",
                        UNDETERMINED,
                        witnesses={"avoiders": [list(p) for p in avoiders]},
                        stats=stats,
                        tolerances=tols,
                    )
                pnames = {names[x] for x in prefix}
                if sp1.avoiding_path(pnames) is None:
                    full = complete(prefix, onstack)
                    if full is not None:
                        alpha = tuple(names[x] for x in full)
                        return ConditionReport(
                            f"axis{i}", HOLDS, witnesses={"alpha": list(alpha)}, stats=stats, tolerances=tols
                        )
                reach = reach_from(prefix[-1], onstack)
                bound = pnames | {names[x] for x in reach}
                av = sp1.avoiding_path(bound)
                if av is not None:
                    avoiders.setdefault(av, None)
                    stats["pruned"] += 1
                    stack.pop()
                    onstack.discard(prefix.pop())
                    continue
                if prefix[-1] in ends:
                    stats["candidatesCompleted"] += 1
            u, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                onstack.discard(prefix.pop())
                continue
            if nxt in onstack:
                continue
            stack.append((nxt, iter(spi.succ[nxt])))
            prefix.append(nxt)
            onstack.add(nxt)
            fresh = True

    return ConditionReport(
        f"axis{i}",
        FAILS,
        witnesses={"refutation": "every shortest axis path misses one of the avoiders", "avoiders": [list(p) for p in avoiders]},
        stats=stats,
        tolerances=tols,
    )


def check_tip(box: DiscreteBox, m: Metric, i: int, cap: int = DEFAULT_CAP, tol=None) -> ConditionReport:
    """Is there a shortest ``B_i -> B_i'`` path meeting every shortest top-bottom path?

    ``holds`` carries the path as ``witnesses['alpha']``; ``fails`` carries
    top-bottom shortest paths (``avoiders``) such that every candidate misses
    at least one of them; ``undetermined`` means the search cap was hit.
    """
    box._check_axis(i)
    if i < 2:
        raise BoxError("the triple intersection property concerns axes i >= 2")
    rep = _hitting_search(box, m, i, cap, tol)
    rep.name = f"tip.axis{i}"
    return rep


def check_tip_all(box: DiscreteBox, m: Metric, cap: int = DEFAULT_CAP, tol=None) -> ConditionReport:
    parts = [check_tip(box, m, i, cap, tol) for i in range(2, box.n + 1)]
    return _combine("tip", parts)


def check_schramm(box: DiscreteBox, m: Metric, cap: int = DEFAULT_CAP, tol=None) -> ConditionReport:
    """Schramm's condition on every axis; the overall verdict holds iff all axes hold.

    A holding axis reports its path and the perturbation derivative it achieves.
    """
    parts = []
    for i in range(1, box.n + 1):
        rep = _hitting_search(box, m, i, cap, tol)
        rep.name = f"schramm.axis{i}"
        if rep.holds:
            rep.witnesses["derivative"] = perturbation_derivative(box, m, rep.witnesses["alpha"], tol)
        parts.append(rep)
    return _combine("schramm", parts)


def verify_witnesses(box: DiscreteBox, m: Metric, rep: ConditionReport, tol=None) -> bool:
    """Re-run the underlying predicate on a TIP/Schramm report's witnesses."""
    if rep.parts:
        return all(verify_witnesses(box, m, p, tol) for p in rep.parts)
    i = int(rep.name.rsplit("axis", 1)[1])
    sp1 = _pair_structure(box, m, 1, tol)
    spi = _pair_structure(box, m, i, tol)
    if rep.verdict == HOLDS:
        alpha = tuple(rep.witnesses["alpha"])
        return _is_shortest(box, m, spi, alpha) and sp1.avoiding_path(alpha) is None
    if rep.verdict == FAILS:
        avoiders = [tuple(p) for p in rep.witnesses["avoiders"]]
        if not avoiders or not all(_is_shortest(box, m, sp1, p) for p in avoiders):
            return False
        sets = [set(p) for p in avoiders]
        for alpha in spi.paths():
            a = set(alpha)
            if all(a & s for s in sets):
                return False
        return True
    return True


def _is_shortest(box, m, sp, path) -> bool:
    idx = box.index
    if not path or path[0] not in {box.vertices[s] for s in sp.sources}:
        return False
    if path[-1] not in {box.vertices[t] for t in sp.targets}:
        return False
    if len(set(path)) != len(path):
        return False
    adj = box.adjacency
    for a, b in zip(path, path[1:]):
        if idx[b] not in adj[idx[a]]:
            return False
    total = sum(m[v] for v in path)
    return abs(total - sp.length) <= sp.tol


# -- necessary conditions --------------------------------------------------------------


def _solve_el(box: DiscreteBox, opts: SolverOptions) -> float:
    return extremal_metric(box, opts).extremal_length


def _rel_close(a: float, b: float, rtol: float) -> bool:
    return abs(a - b) <= rtol * max(abs(a), abs(b))


def product_check(els, rtol: float = EL_RTOL) -> ConditionReport:
    """Part 2 verdict from the axis extremal lengths."""
    prod = 1.0
    for e in els:
        prod *= e
    ok = abs(prod - 1.0) <= rtol
    return ConditionReport(
        "part2",
        HOLDS if ok else FAILS,
        witnesses={"axisEL": list(els), "product": prod},
        tolerances={"rtol": rtol},
    )


def _repeated_value(values, tol) -> tuple | None:
    items = sorted((x, v) for v, x in values.items() if x > tol)
    for (x, v), (y, w) in zip(items, items[1:]):
        if abs(x - y) <= tol * max(1.0, abs(float(y))):
            return (v, w, x)
    return None


def check_necessary(target, opts: SolverOptions | None = None, rtol: float = EL_RTOL, mode: str = "full") -> ConditionReport:
    """Three necessary conditions for a box to come from a cube tiling.

    part1: opposing faces (as ``(n-1)``-boxes) have equal extremal length;
    part2: the extremal lengths over all choices of top/bottom multiply to 1;
    part3: two distinct vertices carry the same positive extremal weight.
    ``target`` is a :class:`CubeTiling` (contact box and exact tiling metric
    are extracted) or a :class:`DiscreteBox` (part 3 uses the solver metric).
    """
    opts = opts or SolverOptions()
    if isinstance(target, CubeTiling):
        box, exact = contact_graph(target, mode)
    elif isinstance(target, DiscreteBox):
        box, exact = target, None
        report = validate_box(box)
        if not report.ok:
            raise BoxError("invalid box: " + "; ".join(report.violations))
    else:
        raise TypeError("check_necessary expects a CubeTiling or a DiscreteBox")

    # part 1
    if box.face_structure is None:
        part1 = ConditionReport("part1", UNDETERMINED, witnesses={"reason": "box carries no faceStructure"})
    else:
        pairs = {}
        ok = True
        for i, (pos, neg) in enumerate(box.face_structure, start=1):
            a, b = _solve_el(pos, opts), _solve_el(neg, opts)
            pairs[str(i)] = [a, b]
            ok &= _rel_close(a, b, rtol)
        part1 = ConditionReport("part1", HOLDS if ok else FAILS, witnesses={"faceEL": pairs}, tolerances={"rtol": rtol})

    # part 2
    els = [_solve_el(rotate_box(box, i), opts) for i in range(1, box.n + 1)]
    part2 = product_check(els, rtol)

    # part 3
    if exact is not None:
        hit = _repeated_value(exact.weights, 0)
        source, tol3 = "tiling metric (exact)", 0
    else:
        res = extremal_metric(box, opts)
        tol3 = max(opts.tol, 10 * opts.eps)
        hit = _repeated_value(res.metric.weights, tol3)
        source = "extremal metric (solver)"
    part3 = ConditionReport(
        "part3",
        HOLDS if hit else FAILS,
        witnesses={"pair": [hit[0], hit[1]], "value": hit[2], "metric": source} if hit else {"metric": source},
        tolerances={"tol": tol3},
    )
    return _combine("necessary", [part1, part2, part3], tolerances={"rtol": rtol})


# -- extremality chain ----------------------------------------------------------------------


def verify_extremality_chain(t: CubeTiling, mode: str = "full", opts: SolverOptions | None = None, rtol: float = EL_RTOL) -> ConditionReport:
    """Check the inequality chain behind the extremality of tiling metrics.

    (a) l_s = h_1 and (b) ||s||_n^n = prod h_i, both exactly; with m the
    solver's unit-volume metric, (c) l_m * prod_{i>=2} h_i <= sum m s^(n-1),
    (d) sum m s^(n-1) <= ||m||_n ||s||_n^(n-1), (e) l_m/||m|| <= l_s/||s|| and the
    solver EL equals h_1 / (prod h_i)^(1/n).  Slacks are reported.
    """
    opts = opts or SolverOptions()
    rep = validate_tiling(t)
    if not rep.ok:
        raise BoxError("invalid tiling: " + "; ".join(rep.violations))
    box, s = contact_graph(t, mode, with_faces=False)
    n = t.n
    dims = t.dims
    vol = t.box.volume

    ls = shortest_paths(box, s, box.bottom, box.top).length
    a_ok = ls == dims[0]
    s_pow = metric_volume_pow(s, n)
    b_ok = s_pow == vol

    res = extremal_metric(box, opts)
    m = res.metric
    lm = float(shortest_paths(box, m, box.bottom, box.top).length)
    face = 1
    for h in dims[1:]:
        face *= h
    lhs_c = lm * float(face)
    mid = sum(float(m[v]) * float(s[v]) ** (n - 1) for v in box.vertices)
    norm_m = metric_volume(m, n)
    norm_s = float(s_pow) ** (1.0 / n)
    rhs_d = norm_m * norm_s ** (n - 1)
    hat_m = lm / norm_m
    hat_s = float(dims[0]) / norm_s
    scale = max(abs(mid), 1.0)
    c_ok = lhs_c <= mid + rtol * scale
    d_ok = mid <= rhs_d + rtol * max(rhs_d, 1.0)
    e_ok = hat_m <= hat_s + rtol * hat_s and _rel_close(res.extremal_length, hat_s, rtol)

    def part(name, ok, **w):
        return ConditionReport(name, HOLDS if ok else FAILS, witnesses=w)

    parts = [
        part("a", a_ok, lengthS=ls, h1=dims[0]),
        part("b", b_ok, volumeS=s_pow, boxVolume=vol),
        part("c", c_ok, lhs=lhs_c, rhs=mid, slack=mid - lhs_c),
        part("d", d_ok, lhs=mid, rhs=rhs_d, slack=rhs_d - mid),
        part("e", e_ok, normalizedM=hat_m, normalizedS=hat_s, solverEL=res.extremal_length, elError=res.extremal_length - hat_s),
    ]
    return _combine("chain", parts, tolerances={"rtol": rtol}, stats={"mode": mode, "cubes": len(t.cubes)})
