import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from weightlab.fieldio import FieldFormatError, format_field, parse_field
from weightlab.grid import (
    Cube, DomainError, DyadicGrid, Field, average, blocks, lp_norm, unblocks,
)

from conftest import matrix, scalar


def test_cell_count_and_partition():
    for dim in (1, 2):
        g = DyadicGrid(dim, 3)
        assert g.n_cells == 2 ** (3 * dim)
        for k in range(4):
            cells = np.concatenate([g.cube_cells(Q) for Q in g.cubes(k)])
            assert sorted(cells) == list(range(g.n_cells))


def test_parent_measure():
    g = DyadicGrid(2, 3)
    for Q in g.all_cubes():
        if Q.level:
            P = g.parent(Q)
            assert P.measure == pytest.approx(4 * Q.measure)
            assert Q in g.children(P)


def test_bad_grid_and_cube():
    with pytest.raises(DomainError):
        DyadicGrid(3, 2)
    g = DyadicGrid(1, 2)
    with pytest.raises(DomainError):
        average(scalar([1, 2, 3, 4]), Cube(3, (0,)))
    with pytest.raises(DomainError):
        g.cube_cells(Cube(1, (2,)))


def test_average_examples():
    g = DyadicGrid(1, 3)
    assert average(Field(g, np.full(8, 2.5)), Cube(1, (1,))) == 2.5
    assert average(scalar([2, 1]), Cube(0, (0,))) == 1.5
    assert average(Field(g, np.arange(8.0)), Cube(1, (0,))) == 1.5


def test_lp_norm_examples():
    assert lp_norm(Field(DyadicGrid(1, 3), np.ones(8)), 2) == pytest.approx(1.0)
    v = np.array([3.0, -4.0])
    f = Field(DyadicGrid(1, 2), np.tile(v, (4, 1)), "vector")
    I = matrix(np.tile(np.eye(2), (4, 1, 1)))
    for p in (1, 1.5, 3):
        assert lp_norm(f, p, I) == pytest.approx(5.0)
    assert lp_norm(scalar([2, 0]), 2, scalar([1, 4])) == pytest.approx(np.sqrt(2))


def test_lp_norm_errors():
    f = scalar([1, 2])
    with pytest.raises(DomainError):
        lp_norm(f, 0.5)
    v = Field(f.grid, np.ones((2, 2)), "vector")
    singular = matrix([np.eye(2), np.diag([1.0, 0.0])])
    with pytest.raises(ArithmeticError, match=r"index \(1,\)"):
        lp_norm(v, 2, singular)


@given(arrays(float, 16, elements=st.floats(-5, 5)), arrays(float, 16, elements=st.floats(-5, 5)),
       st.integers(0, 4))
def test_average_linear_monotone_tower(a, b, level):
    g = DyadicGrid(1, 4)
    f, h = Field(g, a), Field(g, b)
    for Q in g.cubes(level):
        assert average(f.replace(a + b), Q) == pytest.approx(average(f, Q) + average(h, Q), abs=1e-12)
        assert average(f.replace(np.minimum(a, b)), Q) <= average(f, Q) + 1e-12
        kids = g.children(Q)
        if kids:
            assert average(f, Q) == pytest.approx(np.mean([average(f, c) for c in kids]), abs=1e-12)


@given(arrays(float, (16, 2), elements=st.floats(-3, 3)), arrays(float, 16, elements=st.floats(0.1, 10)),
       st.sampled_from([1.0, 2.0, 3.5]))
def test_scalar_multiple_of_identity_weight(f, w, p):
    g = DyadicGrid(2, 2)
    vec = Field(g, f, "vector")
    W = Field(g, w[:, None, None] * np.eye(2), "matrix")
    mag = Field(g, np.linalg.norm(f, axis=1))
    assert lp_norm(vec, p, W) == pytest.approx(lp_norm(mag, p, Field(g, w)), rel=1e-10, abs=1e-12)


def test_blocks_roundtrip_with_offset(rng):
    g = DyadicGrid(2, 3, (3, 5))
    v = rng.standard_normal(g.n_cells)
    for k in range(4):
        b = blocks(v, g, k)
        np.testing.assert_array_equal(unblocks(b, g, k), v)
        for i, Q in enumerate(g.cubes(k)):
            assert sorted(v[g.cube_cells(Q)]) == sorted(b[i])


def test_refine_keeps_averages(rng):
    f = Field(DyadicGrid(2, 2), rng.random(16))
    r = f.refine()
    for Q in f.grid.all_cubes():
        assert average(r, Q) == pytest.approx(average(f, Q))


@pytest.mark.parametrize("kind", ["scalar", "vector", "matrix"])
def test_field_file_roundtrip(kind, rng):
    g = DyadicGrid(2, 2)
    shape = {"scalar": (16,), "vector": (16, 3), "matrix": (16, 2, 2)}[kind]
    f = Field(g, rng.standard_normal(shape), kind)
    back = parse_field(format_field(f))
    assert back.kind == kind and back.grid == g
    np.testing.assert_array_equal(back.values, f.values)


def test_field_file_header():
    text = format_field(scalar([1.0, 2.0]))
    assert text.splitlines()[0] == "weightlab-field v1 dim=1 depth=1 kind=scalar d=1"
    with pytest.raises(FieldFormatError):
        parse_field("weightlab-field v1 dim=1 depth=1 kind=scalar d=1\n1.0\n")
    with pytest.raises(FieldFormatError):
        parse_field("not a header\n")
