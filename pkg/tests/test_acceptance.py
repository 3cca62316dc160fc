"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Instances are seeded and built once per module.  Tolerances are the
contractual ones; nothing here is loosened to make a criterion pass.
"""

import itertools
import random
import time
from fractions import Fraction

import pytest

from extremalbox import (
    GeneratorParams,
    Metric,
    brute_force_extremal,
    check_necessary,
    check_schramm,
    check_tip,
    contact_graph,
    discrete_line,
    extremal_metric,
    generate_tiling,
    perturbation_derivative,
    random_box,
    realize_square_tiling,
    shortest_paths,
    validate_box,
    validate_tiling,
    verify_extremality_chain,
)
from extremalbox.analysis import FAILS, HOLDS
from extremalbox.elsolver import SolverOptions, simple_paths

KS2 = (3, 4, 5, (3, 5), (4, 6), 6)
KS3 = ((2, 2, 2), (2, 3, 3), 3, (3, 2, 4), (2, 3, 4))


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b))


def sup(m1, m2, keys):
    return max(abs(float(m1[v]) - float(m2[v])) for v in keys)


def pick_tilings(n, cap, count):
    """First ``count`` seeds giving a non-uniform tiling with 8..cap cubes."""
    out, seed = [], 0
    ks = KS2 if n == 2 else KS3
    while len(out) < count:
        depth = 1 + seed % 3 if n == 2 else 1 + seed % 2
        t = generate_tiling(GeneratorParams(n=n, k=ks[seed % len(ks)], depth=depth, seed=seed))
        seed += 1
        if 8 <= len(t.cubes) <= cap and len(set(t.sides())) > 1:
            out.append(t)
    return out


def random_boxes(count, seed):
    rng = random.Random(seed)
    boxes = []
    while len(boxes) < count:
        n = rng.choice([2, 3])
        box = random_box(rng, n, rng.randint(2 * n + 1, 10))
        assert validate_box(box).ok
        boxes.append(box)
    return boxes


@pytest.fixture(scope="module")
def boxes():
    return random_boxes(20, 2024)


@pytest.fixture(scope="module")
def tilings():
    return pick_tilings(2, 100, 25) + pick_tilings(3, 150, 25)


@pytest.fixture(scope="module")
def solved(tilings):
    """Solver result and wall time per criterion-3 instance."""
    out = []
    for t in tilings:
        box, s = contact_graph(t, with_faces=False)
        t0 = time.perf_counter()
        res = extremal_metric(box)
        out.append((t, box, s, res, time.perf_counter() - t0))
    return out


@pytest.fixture(scope="module")
def necessary(tilings):
    return [check_necessary(t) for t in tilings]


# -- 1 ------------------------------------------------------------------------------------


def test_c01_oracle_equivalence(boxes, criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for box in boxes:
        worst = max(worst, rel(extremal_metric(box).el, brute_force_extremal(box).el))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 30
    assert criterion(1, ok, f"oracle equivalence: max rel diff {worst:.2e} over {len(boxes)} boxes, {dt:.1f}s")


# -- 2 ------------------------------------------------------------------------------------


def test_c02_uniqueness(boxes, criterion):
    rng = random.Random(7)
    worst = 0.0
    for box in boxes[:10]:
        runs = []
        for j in range(3):
            init = Metric({v: rng.uniform(0.0, 5.0) for v in box.vertices})
            runs.append(extremal_metric(box, SolverOptions(seed=j, init=init)).metric)
        for a in range(3):
            for b in range(a + 1, 3):
                worst = max(worst, sup(runs[a], runs[b], box.vertices))
    assert criterion(2, worst <= 1e-5, f"uniqueness: max pairwise sup-norm {worst:.2e} (10 boxes x 3 inits)")


# -- 3 ------------------------------------------------------------------------------------


def test_c03_round_trip(solved, criterion):
    el_err = m_err = slowest = 0.0
    for t, box, s, res, dt in solved:
        n = t.n
        vol = float(sum(x**n for x in s.weights.values())) ** (1.0 / n)
        expect = float(t.dims[0]) / vol
        el_err = max(el_err, rel(res.el, expect))
        scaled = {v: float(s[v]) / vol for v in box.vertices}
        m_err = max(m_err, sup(res.metric, scaled, box.vertices))
        slowest = max(slowest, dt)
    sizes2 = max(len(x[0].cubes) for x in solved if x[0].n == 2)
    sizes3 = max(len(x[0].cubes) for x in solved if x[0].n == 3)
    ok = el_err <= 1e-5 and m_err <= 1e-4 and slowest < 60 and sizes2 <= 100 and sizes3 <= 150
    detail = (
        f"round trip: 25+25 tilings (max {sizes2} squares, {sizes3} cubes), "
        f"EL rel err {el_err:.2e}, metric sup err {m_err:.2e}, slowest {slowest:.2f}s"
    )
    assert criterion(3, ok, detail)


# -- 4 ------------------------------------------------------------------------------------


def test_c04_holder_chain(tilings, criterion):
    bad = []
    for j, t in enumerate(tilings):
        rep = verify_extremality_chain(t)
        if rep.verdict != HOLDS:
            bad.append((j, [p.name for p in rep.parts if p.verdict != HOLDS]))
    assert criterion(4, not bad, f"chain (a)-(e): {len(tilings) - len(bad)}/{len(tilings)} hold {bad or ''}")


# -- 5 ------------------------------------------------------------------------------------


def test_c05_no_triple_intersection(criterion):
    verdicts, capped, holds = [], 0, 0
    for seed in range(10):
        t = generate_tiling(GeneratorParams(n=3, k=2, depth=1, seed=seed))
        box, s = contact_graph(t, with_faces=False)
        reps = [check_tip(box, s, 2), check_tip(box, s, 3), check_schramm(box, s)]
        capped += sum(bool(r.stats.get("capHit")) for r in reps)
        holds += sum(r.verdict == HOLDS for r in reps)
        verdicts.append(all(r.verdict == FAILS for r in reps))
    ok = all(verdicts) and capped == 0 and holds == 0
    assert criterion(5, ok, f"TIP i=2, i=3 and Schramm fail on {sum(verdicts)}/10 3D tilings, caps hit {capped}, holds {holds}")


# -- 6 ------------------------------------------------------------------------------------


def test_c06_axis_product(necessary, criterion):
    worst = max(abs(r.part("part2").witnesses["product"] - 1.0) for r in necessary)
    assert criterion(6, worst <= 1e-5, f"product of axis ELs: max |prod - 1| {worst:.2e} over {len(necessary)} tilings")


# -- 7 ------------------------------------------------------------------------------------


def test_c07_face_el(tilings, necessary, criterion):
    worst, count = 0.0, 0
    for t, r in zip(tilings, necessary):
        if t.n != 3:
            continue
        for pos, neg in r.part("part1").witnesses["faceEL"].values():
            worst = max(worst, rel(pos, neg))
            count += 1
    assert criterion(7, worst <= 1e-5, f"opposing face ELs: max rel diff {worst:.2e} over {count} face pairs")


# -- 8 ------------------------------------------------------------------------------------


def repeated_positive(weights) -> bool:
    vals = [x for x in weights.values() if x > 0]
    return len(set(vals)) < len(vals)


def test_c08_repeated_value(tilings, criterion):
    three = [t for t in tilings if t.n == 3]
    three += [generate_tiling(GeneratorParams(n=3, k=KS3[s % 5], depth=1 + s % 3, seed=1000 + s)) for s in range(50)]
    hits = 0
    for t in three:
        _, s = contact_graph(t, with_faces=False)
        assert s.exact
        hits += repeated_positive(s.weights)
    assert criterion(8, hits == len(three), f"repeated exact side: {hits}/{len(three)} 3D tilings")


# -- 9 ------------------------------------------------------------------------------------


def test_c09_realizer(tilings, criterion):
    worst, valid = 0.0, 0
    flat = [t for t in tilings if t.n == 2][:15]
    for t in flat:
        box, s = contact_graph(t, with_faces=False)
        out = realize_square_tiling(box, extremal_metric(box).metric)
        sides = sorted(float(c.side) for c in out.cubes)
        valid += validate_tiling(out, 1e-7 * sides[0]).ok
        vol = float(sum(x**2 for x in s.weights.values())) ** 0.5
        want = sorted(float(c.side) / vol for c in t.cubes)
        worst = max(worst, max(abs(a - b) for a, b in zip(sides, want)) if len(sides) == len(want) else 1.0)
    ok = valid == len(flat) and worst <= 1e-5
    assert criterion(9, ok, f"2D realizer: {valid}/{len(flat)} valid, max side error {worst:.2e}")


# -- 10 -----------------------------------------------------------------------------------


def non_grazing_point(rng, t):
    cuts = [set() for _ in t.dims[1:]]
    for c in t.cubes:
        for j in range(1, t.n):
            cuts[j - 1].update((c.corner[j], c.corner[j] + c.side))
    while True:
        p = [Fraction(rng.randint(1, 9999), 10000) * h for h in t.dims[1:]]
        if all(x not in cut for x, cut in zip(p, cuts)):
            return p


def test_c10_discrete_lines(criterion):
    rng = random.Random(10)
    good = total = 0
    for seed in range(10):
        t = generate_tiling(GeneratorParams(n=3, k=KS3[seed % 5], depth=1 + seed % 2, seed=200 + seed))
        box, s = contact_graph(t, with_faces=False)
        edges = {frozenset(e) for e in box.edges}
        for _ in range(100):
            line = discrete_line(t, non_grazing_point(rng, t))
            total += 1
            good += (
                line[0] in box.top
                and line[-1] in box.bottom
                and len(set(line)) == len(line)
                and all(frozenset(e) in edges for e in zip(line, line[1:]))
                and sum(s[v] for v in line) >= t.dims[0]
            )
    assert criterion(10, good == total, f"discrete lines: {good}/{total} are top-bottom paths with length >= h1")


# -- 11 -----------------------------------------------------------------------------------


def brute_derivative(box, m, alpha, tol):
    """min over explicitly enumerated shortest top-bottom paths of |path & alpha|.

    Paths touching the faces only at their ends suffice: any shortest path
    contains such a subpath, itself shortest and meeting alpha no more often.
    """
    names = box.vertices
    paths = [tuple(names[i] for i in p) for p in simple_paths(box, box.bottom, box.top)]
    lengths = {p: sum(m[v] for v in p) for p in paths}
    best = min(lengths.values())
    a = set(alpha)
    return min(len(a.intersection(p)) for p, x in lengths.items() if x <= best + tol)


def test_c11_derivative(boxes, criterion):
    rng = random.Random(11)
    agree = total = 0
    for box in boxes:
        metrics = [extremal_metric(box).metric, Metric({v: Fraction(rng.randint(0, 3)) for v in box.vertices}, exact=True)]
        for m in metrics:
            sp = shortest_paths(box, m, box.bottom, box.top)
            if not sp.reachable:
                continue
            for i in range(2, box.n + 1):
                cross = shortest_paths(box, m, box.face(i, "neg"), box.face(i, "pos"))
                for alpha in itertools.islice(cross.paths(), 20):
                    total += 1
                    agree += perturbation_derivative(box, m, alpha) == brute_derivative(box, m, alpha, sp.tol)
    assert criterion(11, agree == total and total > 0, f"perturbation derivative: {agree}/{total} agree with enumeration")


# -- 12 -----------------------------------------------------------------------------------


def test_c12_generator(criterion):
    t0 = time.perf_counter()
    ok = 0
    for j in range(1000):
        n = (2, 3, 4)[j % 3]
        k = 2 if n == 4 else 2 + (j // 3) % 3
        depth = 1 if n == 4 else 1 + (j // 9) % 2
        t = generate_tiling(GeneratorParams(n=n, k=k, depth=depth, seed=j))
        if not validate_tiling(t).ok:
            continue
        box, _ = contact_graph(t, with_faces=False)
        disjoint = all(not (box.face(i, "pos") & box.face(i, "neg")) for i in range(1, n + 1))
        ok += validate_box(box).ok and disjoint
    dt = time.perf_counter() - t0
    assert criterion(12, ok == 1000 and dt < 120, f"generator: {ok}/1000 valid tilings and boxes, {dt:.1f}s")
