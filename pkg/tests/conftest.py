from fractions import Fraction

import pytest

from extremalbox import CubeTiling, DiscreteBox, Metric, grid_tiling, refine_cube
from extremalbox.boxcore import GeometricBox
from extremalbox.cubetile import Cube

HALF = Fraction(1, 2)

ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(lines):
        terminalreporter.write_line(lines[k])


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion, printed after the run."""

    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[ACCEPTANCE][number] = line
        print(line)
        return ok

    return record


def q4_box() -> DiscreteBox:
    """Full-contact box of the 2x2 square tiling: a,b bottom, c,d top; a,c left."""
    return DiscreteBox.build(
        2,
        ["a", "b", "c", "d"],
        [("a", "b"), ("a", "c"), ("a", "d"), ("b", "c"), ("b", "d"), ("c", "d")],
        [({"c", "d"}, {"a", "b"}), ({"b", "d"}, {"a", "c"})],
    )


def q7_tiling() -> CubeTiling:
    # top-right unit square (corner (1,1), id c3) refined into four half squares
    return refine_cube(grid_tiling(2, 2), "c3", 2)


def stack3_tiling() -> CubeTiling:
    one = Fraction(1)
    cubes = tuple(Cube(f"s{j}", (Fraction(j), Fraction(0), Fraction(0)), one) for j in range(3))
    return CubeTiling(GeometricBox((Fraction(3), one, one)), cubes)


@pytest.fixture
def q4():
    return q4_box()


@pytest.fixture
def half4():
    return Metric.uniform(q4_box(), HALF)


@pytest.fixture
def q4_tiling():
    return grid_tiling(2, 2)


@pytest.fixture
def k8_tiling():
    return grid_tiling(2, 3)


@pytest.fixture
def q7():
    return q7_tiling()


@pytest.fixture
def line1d():
    return DiscreteBox.build(1, ["a", "b"], [("a", "b")], [({"b"}, {"a"})])
