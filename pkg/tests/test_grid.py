import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from chemofv.errors import ConfigError, DomainError, PositivityError
from chemofv.grid import (
    Field,
    Grid,
    cell_gradient,
    face_gradient,
    integrate,
    laplacian_neumann,
    linf_norm,
    load_field,
    lp_norm,
    save_field,
    weighted_gradient_functional,
)


def grid1(n=256, L=1.0):
    return Grid.uniform(1, n, L)


def test_grid_geometry():
    g = Grid((8, 4), (2.0, 1.0))
    assert g.h == (0.25, 0.25)
    assert g.volume == 2.0
    assert g.cell_volume == 0.0625
    np.testing.assert_allclose(g.centers(0), (np.arange(8) + 0.5) * 0.25)


@pytest.mark.parametrize("cells,lengths", [((3,), (1.0,)), ((8,), (0.0,)), ((4, 4, 4), (1, 1, 1))])
def test_grid_rejects_bad_shapes(cells, lengths):
    with pytest.raises(ConfigError):
        Grid(cells, lengths)


def test_field_rejects_nonfinite_and_wrong_size():
    g = grid1(8)
    with pytest.raises(DomainError):
        Field(g, np.full(8, np.nan))
    with pytest.raises(ConfigError):
        Field(g, np.ones(7))


def test_integrate_examples():
    assert integrate(Field.constant(Grid((8,), (2.0,)), 1.0)) == pytest.approx(2.0, rel=1e-15)
    assert integrate(Field.constant(grid1(8), 0.0)) == 0.0
    g = grid1(256)
    assert integrate(Field.from_function(g, lambda x: x)) == pytest.approx(0.5, abs=1e-15)


def test_norm_examples():
    g = grid1(64)
    for p in (1, 2, 3.5):
        assert lp_norm(Field.constant(g, -2.5), p) == pytest.approx(2.5, rel=1e-14)
    assert linf_norm(Field.constant(g, 3.0)) == 3.0
    ind = np.zeros(64)
    ind[:32] = 1.0
    assert lp_norm(Field(g, ind), 2) == pytest.approx(math.sqrt(0.5), rel=1e-14)
    with pytest.raises(DomainError):
        lp_norm(Field(g, ind), 0.5)


@settings(max_examples=50, deadline=None)
@given(vals=arrays(float, 24, elements=st.floats(-5, 5)), p=st.floats(1.0, 6.0), L=st.floats(0.2, 3.0))
def test_holder_inequality(vals, p, L):
    f = Field(Grid((24,), (L,)), vals)
    assert lp_norm(f, 1) <= f.grid.volume ** (1 - 1 / p) * lp_norm(f, p) * (1 + 1e-12) + 1e-300


@settings(max_examples=50, deadline=None)
@given(vals=arrays(float, (6, 9), elements=st.floats(-10, 10)), lx=st.floats(0.3, 3), ly=st.floats(0.3, 3))
def test_discrete_divergence_theorem(vals, lx, ly):
    f = Field(Grid((6, 9), (lx, ly)), vals)
    lap = laplacian_neumann(f)
    scale = max(linf_norm(f), 1.0)
    # the sum of the stencil telescopes; normalise by the largest flux size
    assert abs(integrate(lap)) <= 1e-12 * scale * max(1.0, max(f.grid.h) ** -1) * f.grid.volume


def test_laplacian_constant_and_linear():
    g = grid1(32)
    assert np.all(laplacian_neumann(Field.constant(g, 4.2)).values == 0)
    lap = laplacian_neumann(Field.from_function(g, lambda x: x)).values
    np.testing.assert_allclose(lap[1:-1], 0.0, atol=1e-9)
    assert lap[0] > 0 and lap[-1] < 0
    assert abs(np.sum(lap)) < 1e-9


def test_laplacian_cosine_accuracy_and_order():
    errs = []
    for n in (32, 64, 128, 256):
        g = grid1(n)
        f = Field.from_function(g, lambda x: np.cos(np.pi * x))
        (x,) = g.mesh()
        errs.append(np.max(np.abs(laplacian_neumann(f).values + np.pi ** 2 * np.cos(np.pi * x))))
    assert errs[-1] < 1e-3
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.9


def test_face_gradient_examples():
    g = grid1(16)
    assert np.all(face_gradient(Field.constant(g, 1.0)) == 0)
    fg = face_gradient(Field.from_function(g, lambda x: 2 * x))
    assert fg[0] == 0 and fg[-1] == 0
    np.testing.assert_allclose(fg[1:-1], 2.0, rtol=1e-12)
    fq = face_gradient(Field.from_function(g, lambda x: x * x))
    np.testing.assert_allclose(fq[1:-1], 2 * g.faces()[1:-1], rtol=1e-12)
    with pytest.raises(DomainError):
        face_gradient(Field.constant(g, 1.0), axis=1)


@settings(max_examples=30, deadline=None)
@given(vals=arrays(float, (5, 7), elements=st.floats(-3, 3)))
def test_face_gradient_vanishes_on_boundary(vals):
    f = Field(Grid((5, 7), (1.0, 2.0)), vals)
    gx, gy = face_gradient(f, 0), face_gradient(f, 1)
    assert gx.shape == (6, 7) and gy.shape == (5, 8)
    assert np.all(gx[0] == 0) and np.all(gx[-1] == 0)
    assert np.all(gy[:, 0] == 0) and np.all(gy[:, -1] == 0)


def test_cell_gradient_linear_is_exact_everywhere():
    g = grid1(10)
    (gr,) = cell_gradient(Field.from_function(g, lambda x: 3 * x + 1))
    np.testing.assert_allclose(gr, 3.0, rtol=1e-12)


def test_weighted_functional_examples():
    g = grid1(16)
    assert weighted_gradient_functional(Field.constant(g, 2.0), 2) == 0.0
    g = grid1(512)
    val = weighted_gradient_functional(Field.from_function(g, lambda x: 1 + x), 2)
    assert abs(val - math.log(2)) < 1e-3
    ref, _ = quad(lambda x: np.pi ** 2 * np.sin(np.pi * x) ** 2 / (2 + np.cos(np.pi * x)), 0, 1,
                  epsabs=1e-13)
    val = weighted_gradient_functional(Field.from_function(g, lambda x: 2 + np.cos(np.pi * x)), 2)
    assert abs(val - ref) < 1e-3


def test_weighted_functional_errors():
    g = grid1(8)
    with pytest.raises(PositivityError):
        weighted_gradient_functional(Field(g, np.linspace(-1, 1, 8)), 2)
    with pytest.raises(DomainError):
        weighted_gradient_functional(Field.constant(g, 1.0), 1.5)


@pytest.mark.parametrize("suffix", [".csv", ".bin"])
def test_field_serialization_round_trip(tmp_path, suffix):
    rng = np.random.default_rng(3)
    f = Field(Grid((5, 6), (1.0, 0.3)), rng.normal(size=(5, 6)))
    back = load_field(save_field(f, tmp_path / f"f{suffix}"))
    assert back.grid == f.grid
    assert np.array_equal(back.values, f.values)


def test_load_rejects_foreign_files(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("hello\n")
    with pytest.raises(ConfigError):
        load_field(p)
    q = tmp_path / "x.bin"
    q.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(ConfigError):
        load_field(q)
