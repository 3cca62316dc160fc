import itertools
import random
from collections import Counter
from fractions import Fraction
from xml.etree import ElementTree

import pytest

from extremalbox import (
    BoxError,
    CubeTiling,
    GeneratorParams,
    Metric,
    RealizationError,
    contact_graph,
    discrete_line,
    extremal_metric,
    face_tiling,
    generate_tiling,
    grid_tiling,
    realize_square_tiling,
    refine_cube,
    shortest_paths,
    validate_box,
    validate_tiling,
)
from extremalbox.boxcore import GeometricBox
from extremalbox.cubetile import Cube, render_svg, slice_tiling
from extremalbox.elsolver import metric_volume_pow

from conftest import HALF, q4_box, q7_tiling

F = Fraction


def corners(t):
    return {c.id: (c.corner, c.side) for c in t.cubes}


# -- construction and generator -----------------------------------------------------


def test_grid_fixtures(q4_tiling, k8_tiling):
    assert corners(q4_tiling) == {
        "c0": ((0, 0), 1),
        "c1": ((0, 1), 1),
        "c2": ((1, 0), 1),
        "c3": ((1, 1), 1),
    }
    assert len(k8_tiling.cubes) == 8 and k8_tiling.dims == (2, 2, 2)


def test_generator_depth_zero_is_grid():
    assert generate_tiling(GeneratorParams(n=2, k=2, depth=0)) == grid_tiling(2, 2)
    assert generate_tiling(GeneratorParams(n=3, k=2, depth=0)) == grid_tiling(2, 3)


def test_q7_fixture(q7):
    assert validate_tiling(q7).ok
    c = corners(q7)
    assert c["c0"] == ((0, 0), 1) and c["c1"] == ((0, 1), 1) and c["c2"] == ((1, 0), 1)
    assert sorted(c[k] for k in c if k.startswith("c3.")) == [
        ((1, 1), HALF),
        ((1, F(3, 2)), HALF),
        ((F(3, 2), 1), HALF),
        ((F(3, 2), F(3, 2)), HALF),
    ]


def test_refine_unknown_cube(q4_tiling):
    with pytest.raises(BoxError):
        refine_cube(q4_tiling, "zz", 2)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_generator_sound_and_deterministic(n):
    for seed in range(15):
        p = GeneratorParams(n=n, k=2 if n == 4 else 3, depth=2 if n < 4 else 1, seed=seed)
        t = generate_tiling(p)
        assert t == generate_tiling(p)
        assert validate_tiling(t).ok
        assert not {c.side for c in t.cubes} & set(t.dims)
        box, _ = contact_graph(t, with_faces=False)
        assert validate_box(box).ok


def test_generator_clamps_parameters():
    t = generate_tiling(GeneratorParams(n=2, k=1, depth=-3, q_min=0, glue_p=7.0))
    assert t == grid_tiling(2, 2)


def test_generator_anisotropic():
    t = generate_tiling(GeneratorParams(n=3, k=(2, 3, 4), seed=1))
    assert t.dims == (2, 3, 4) and validate_tiling(t).ok


def test_tiling_round_trip():
    t = generate_tiling(GeneratorParams(n=3, k=3, seed=4))
    assert CubeTiling.loads(t.dumps()) == t


# -- validation ---------------------------------------------------------------------


def test_validate_overlap_witness(q4_tiling):
    cubes = list(q4_tiling.cubes)
    cubes[3] = Cube("c3", (HALF, HALF), F(1))
    rep = validate_tiling(CubeTiling(q4_tiling.box, tuple(cubes)))
    assert not rep.ok
    assert any("c3" in pair for pair in map(tuple, rep.details["overlaps"]))


def test_validate_volume_deficit(q4_tiling):
    rep = validate_tiling(CubeTiling(q4_tiling.box, q4_tiling.cubes[:3]))
    assert not rep.ok and F(rep.details["volumeDeficit"]) == 1


def test_validate_containment(q4_tiling):
    cubes = q4_tiling.cubes[:3] + (Cube("c3", (1, F(3, 2)), F(1)),)
    assert not validate_tiling(CubeTiling(q4_tiling.box, cubes)).ok


def test_validate_float_tolerance(q4_tiling):
    cubes = tuple(Cube(c.id, tuple(float(x) + 1e-12 for x in c.corner), float(c.side)) for c in q4_tiling.cubes)
    t = CubeTiling(GeometricBox((2.0, 2.0)), cubes)
    assert validate_tiling(t, 1e-9).ok


# -- contact graphs ---------------------------------------------------------------------


def test_q4_contact_full(q4_tiling):
    box, s = contact_graph(q4_tiling)
    assert len(box.edges) == 6
    assert box.face(1, "pos") == {"c2", "c3"} and box.face(1, "neg") == {"c0", "c1"}
    assert box.face(2, "pos") == {"c1", "c3"} and box.face(2, "neg") == {"c0", "c2"}
    assert s.exact and all(s[v] == 1 for v in box.vertices)
    # same box as the hand-written fixture under a -> c0, b -> c1, c -> c2, d -> c3
    ren = dict(zip("abcd", ["c0", "c1", "c2", "c3"]))
    q4 = q4_box()
    assert {tuple(sorted((ren[u], ren[w]))) for u, w in q4.edges} == {tuple(sorted(e)) for e in box.edges}


def test_q4_contact_facet(q4_tiling):
    box, _ = contact_graph(q4_tiling, "facet")
    assert {tuple(sorted(e)) for e in box.edges} == {("c0", "c1"), ("c0", "c2"), ("c1", "c3"), ("c2", "c3")}


def test_k8_contact_complete(k8_tiling):
    box, s = contact_graph(k8_tiling)
    assert len(box.edges) == 28 and all(s[v] == 1 for v in box.vertices)
    assert validate_box(box).ok


def test_contact_names_full_span_cube():
    t = CubeTiling(GeometricBox((F(1), F(2))), (Cube("big", (0, 0), F(1)), Cube("r", (0, 1), F(1))))
    with pytest.raises(BoxError, match="big"):
        contact_graph(t)


def test_face_structure_matches_face_tilings(k8_tiling):
    box, _ = contact_graph(k8_tiling)
    for i in (1, 2, 3):
        for side, nested in zip(("pos", "neg"), box.face_structure[i - 1]):
            sub, _ = contact_graph(face_tiling(k8_tiling, i, side))
            assert set(nested.vertices) == set(sub.vertices) == box.face(i, side)
            assert nested.edges == sub.edges


@pytest.mark.parametrize("mode", ["full", "facet"])
def test_tiling_metric_identities(mode):
    for seed in range(6):
        t = generate_tiling(GeneratorParams(n=2 + seed % 2, k=3, seed=seed))
        box, s = contact_graph(t, mode, with_faces=False)
        assert shortest_paths(box, s, box.bottom, box.top).length == t.dims[0]
        assert metric_volume_pow(s, t.n) == t.box.volume


# -- faces and slices -------------------------------------------------------------------


def test_face_tilings(k8_tiling, q7):
    assert face_tiling(k8_tiling, 1, "pos").sides() == [1, 1, 1, 1]
    assert validate_tiling(face_tiling(k8_tiling, 1, "pos")).ok
    top = face_tiling(q7, 1, "pos")
    assert sorted(top.sides()) == [HALF, HALF, 1] and top.dims == (2,)
    assert sorted(face_tiling(q7, 1, "neg").sides()) == [1, 1]


def test_face_tiling_volume():
    t = generate_tiling(GeneratorParams(n=3, k=(2, 3, 4), seed=2))
    for i in (1, 2, 3):
        for side in ("pos", "neg"):
            f = face_tiling(t, i, side)
            assert validate_tiling(f).ok
            assert sum(c.side ** 2 for c in f.cubes) == f.box.volume


def test_slice(k8_tiling):
    assert len(slice_tiling(k8_tiling, 3, HALF).cubes) == 4
    with pytest.raises(BoxError):
        slice_tiling(k8_tiling, 3, F(3))


# -- discrete lines -----------------------------------------------------------------------


def test_discrete_line_examples(q4_tiling, q7):
    assert discrete_line(q4_tiling, (F(2), HALF)) == ["c2", "c0"]
    line = discrete_line(q7, [F(5, 4)])
    assert line == ["c3.2", "c3.0", "c1"]
    assert sum(q7.metric()[v] for v in line) == 2
    grazing = discrete_line(q4_tiling, [F(1)])
    assert sorted(grazing) == ["c0", "c1", "c2", "c3"]
    box, _ = contact_graph(q4_tiling, with_faces=False)
    edges = {frozenset(e) for e in box.edges}
    assert all(frozenset(p) in edges for p in zip(grazing, grazing[1:]))


def test_discrete_line_rejects_off_face(q4_tiling):
    with pytest.raises(BoxError):
        discrete_line(q4_tiling, (F(1), HALF))
    with pytest.raises(BoxError):
        discrete_line(q4_tiling, [F(3)])


def test_discrete_line_soundness_3d():
    rng = random.Random(0)
    t = generate_tiling(GeneratorParams(n=3, k=3, seed=5))
    box, s = contact_graph(t, with_faces=False)
    edges = {frozenset(e) for e in box.edges}
    for _ in range(50):
        p = [F(rng.randint(1, 999), 1000) * h for h in t.dims[1:]]
        line = discrete_line(t, p)
        assert line[0] in box.top and line[-1] in box.bottom
        assert all(frozenset(e) in edges for e in zip(line, line[1:]))
        assert sum(s[v] for v in line) >= t.dims[0]


# -- realizer --------------------------------------------------------------------------------


def test_realize_q4_half():
    q4 = q4_box()
    t = realize_square_tiling(q4, Metric.uniform(q4, HALF))
    assert t.dims == (1, 1)
    assert corners(t) == {"a": ((0, 0), HALF), "b": ((0, HALF), HALF), "c": ((HALF, 0), HALF), "d": ((HALF, HALF), HALF)}


def test_realize_q7_exact(q7):
    box, s = contact_graph(q7, with_faces=False)
    t = realize_square_tiling(box, s.scaled(HALF))
    assert t == q7.scaled(HALF)


def test_realize_rejects_non_extremal():
    q4 = q4_box()
    m = Metric({"a": 1, "b": 0, "c": 0, "d": 1}, exact=True)
    with pytest.raises(RealizationError) as err:
        realize_square_tiling(q4, m)
    rep = err.value.report
    assert not rep.ok
    assert rep.details["omittedZeroVertices"] == ["b", "c"]
    # rectangle area 0 (top-bottom length 0 through zero vertices) against squares of area 2
    assert F(rep.details["volumeDeficit"]) == -2


def test_realize_needs_dimension_two(k8_tiling):
    box, s = contact_graph(k8_tiling, with_faces=False)
    with pytest.raises(BoxError):
        realize_square_tiling(box, s)


def test_realize_from_solver_metric():
    t = generate_tiling(GeneratorParams(n=2, k=4, seed=3))
    box, s = contact_graph(t, with_faces=False)
    m = extremal_metric(box).metric
    out = realize_square_tiling(box, m)
    scale = float(metric_volume_pow(s, 2)) ** 0.5
    got = sorted(c.side for c in out.cubes)
    want = sorted(float(c.side) / scale for c in t.cubes)
    assert max(abs(a - b) for a, b in zip(got, want)) <= 1e-9


# -- rendering ------------------------------------------------------------------------------


def _rects(svg):
    root = ElementTree.fromstring(svg)
    return [r for r in root if r.get("id") is not None]


def test_render_q7(q7):
    svg = render_svg(q7)
    rects = _rects(svg)
    assert len(rects) == 7
    area = sum(float(r.get("width")) * float(r.get("height")) for r in rects)
    assert area == pytest.approx(4 * 100**2)
    assert svg == render_svg(q7)


def test_render_slice(k8_tiling):
    assert len(_rects(render_svg(k8_tiling, {3: HALF}))) == 4
    with pytest.raises(BoxError):
        render_svg(k8_tiling)


def test_square_sides_are_multiset_of_source():
    t = q7_tiling()
    assert Counter(t.sides()) == Counter({F(1): 3, HALF: 4})
    assert sorted(itertools.chain(face_tiling(t, 2, "pos").sides())) == [HALF, HALF, 1]
