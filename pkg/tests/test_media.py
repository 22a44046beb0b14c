import numpy as np
import pytest
import scipy.linalg as sl
from hypothesis import given
from hypothesis import strategies as st

from romimaging import (
    Grid2D,
    TransducerArray,
    ValidationError,
    VelocityModel,
    WaveletSpec,
    build_symmetrized_operator,
    build_transducer_field,
    gaussian_smooth_velocity,
    make_phantom,
)
from romimaging.media import chebyshev_exp_degree, delta_field, expm_apply

from conftest import ramp_model


def _dense_laplacian(nx, ny, h, top_reflective=True):
    # written node by node, independent of the vectorized assembly
    N = nx * ny
    L = np.zeros((N, N))
    for iy in range(ny):
        for ix in range(nx):
            i = iy * nx + ix
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                jy, jx = iy + dy, ix + dx
                if 0 <= jy < ny and 0 <= jx < nx:
                    L[i, jy * nx + jx] += 1.0
                    L[i, i] -= 1.0
                elif not (dy == -1 and top_reflective):
                    L[i, i] -= 1.0
    return L / h**2


def test_grid_basics():
    g = Grid2D(4, 3, 2.0, (1.0, -1.0))
    assert g.shape == (3, 4)
    assert g.N == 12
    assert g.index(2, 1) == 9
    np.testing.assert_allclose(g.x, [1.0, 3.0, 5.0, 7.0])
    np.testing.assert_allclose(g.z, [-1.0, 1.0, 3.0])


@pytest.mark.parametrize("nx, ny, h", [(2, 5, 1.0), (5, 2, 1.0), (4, 4, 0.0), (4, 4, -1.0)])
def test_grid_rejects_bad_sizes(nx, ny, h):
    with pytest.raises(ValidationError):
        Grid2D(nx, ny, h)


def test_velocity_units_and_positivity():
    g = Grid2D(3, 3, 1.0)
    m = VelocityModel(g, np.full((3, 3), 2.5), unit="km/s")
    assert m.c[0, 0] == 2500.0
    with pytest.raises(ValidationError):
        VelocityModel(g, -np.ones((3, 3)))
    with pytest.raises(ValidationError):
        VelocityModel(g, np.ones((3, 3)), unit="furlong/s")
    with pytest.raises(ValidationError):
        VelocityModel(g, np.ones((3, 3)), {"top": "sticky"})


@pytest.mark.parametrize("c0, diag, off", [(1.0, -4.0, 1.0), (2.0, -16.0, 4.0)])
def test_interior_stencil(c0, diag, off):
    g = Grid2D(5, 5, 1.0)
    A = build_symmetrized_operator(VelocityModel(g, np.full((5, 5), c0))).toarray()
    i = g.index(2, 2)
    assert A[i, i] == diag
    for j in (g.index(1, 2), g.index(3, 2), g.index(2, 1), g.index(2, 3)):
        assert A[i, j] == off


def test_operator_matches_node_by_node_assembly():
    model = ramp_model(6, 5, 0.5)
    c = model.c.ravel()
    ref = np.diag(c) @ _dense_laplacian(6, 5, 0.5) @ np.diag(c)
    A = build_symmetrized_operator(model).toarray()
    np.testing.assert_allclose(A, ref, rtol=1e-14, atol=1e-12)


def test_operator_exactly_symmetric_and_nsd():
    g = Grid2D(6, 6, 1.0)
    X, Z = g.coords()
    model = VelocityModel(g, 1.0 + 0.3 * np.sin(X) * np.cos(0.5 * Z) + 0.5)
    op = build_symmetrized_operator(model)
    A = op.toarray()
    assert np.max(np.abs(A - A.T)) == 0.0
    lam = np.linalg.eigvalsh(A)
    assert lam.max() <= 1e-12 * np.abs(lam).max()
    assert op.lam_max >= np.abs(lam).max()


def test_all_reflective_has_constant_null_vector():
    g = Grid2D(5, 4, 1.0)
    labels = {e: "accessible" for e in ("top", "bottom", "left", "right")}
    op = build_symmetrized_operator(VelocityModel(g, np.ones(g.shape), labels))
    np.testing.assert_allclose(op @ np.ones(g.N), 0.0, atol=1e-14)


@given(st.integers(3, 7), st.integers(3, 7), st.floats(0.1, 3.0), st.integers(0, 2**31 - 1))
def test_rayleigh_quotients_nonpositive(nx, ny, h, seed):
    rng = np.random.default_rng(seed)
    model = VelocityModel(Grid2D(nx, ny, h), rng.uniform(0.5, 3.0, (ny, nx)))
    op = build_symmetrized_operator(model)
    for v in rng.standard_normal((5, nx * ny)):
        assert v @ (op @ v) <= 1e-12 * op.lam_max * (v @ v)


def test_transducer_array_validation():
    model = ramp_model()
    TransducerArray(np.array([(0, 1)])).validate_on(model)
    with pytest.raises(ValidationError):
        TransducerArray(np.array([(1, 1)])).validate_on(model)
    with pytest.raises(ValidationError):
        TransducerArray(np.array([(0, 1), (0, 1)]))
    with pytest.raises(ValidationError):
        TransducerArray(np.array([(0, 9)])).validate_on(model)


def test_along_edge_and_subset():
    g = Grid2D(20, 10, 1.0)
    arr = TransducerArray.along_edge(g, 4)
    assert arr.positions[:, 0].tolist() == [0, 0, 0, 0]
    assert arr.positions[0, 1] == 1 and arr.positions[-1, 1] == 18
    sub = arr.subset(1, 2)
    np.testing.assert_array_equal(sub.positions, arr.positions[1:3])
    ring = TransducerArray.perimeter(g, 12)
    assert ring.m == 12 and len({tuple(p) for p in ring.positions}) == 12


def test_wavelet_spec():
    w = WaveletSpec.from_tau(0.015, 10)
    assert w.n == 5
    assert w.tau == pytest.approx(np.sqrt(3) / 2 * w.sigma)
    assert w.terminal_time == pytest.approx(0.135)
    for bad in (3, 5, 2):
        with pytest.raises(ValidationError):
            WaveletSpec(0.01, 0.01, bad)


def test_delta_field_scaling():
    g = Grid2D(4, 4, 0.5)
    arr = TransducerArray(np.array([(0, 2)]), theta=np.array([3.0]))
    E = delta_field(g, arr)
    assert E[g.index(0, 2), 0] == 6.0
    assert E.sum() == 6.0


def test_transducer_field_sigma_zero_is_delta():
    model = ramp_model()
    arr = TransducerArray(np.array([(0, 1), (0, 3)]))
    op = build_symmetrized_operator(model)
    b = build_transducer_field(op, model, arr, WaveletSpec(0.0, 0.5, 4))
    np.testing.assert_array_equal(b, delta_field(model.grid, arr))


def test_transducer_field_matches_dense_expm():
    model = ramp_model(6, 5, 1.0)
    arr = TransducerArray(np.array([(0, 1), (0, 4)]))
    op = build_symmetrized_operator(model)
    w = WaveletSpec(0.7, 0.5, 4)
    b = build_transducer_field(op, model, arr, w)
    ref = sl.expm(w.sigma**2 / 4 * op.toarray()) @ delta_field(model.grid, arr)
    np.testing.assert_allclose(b, ref, rtol=0, atol=1e-12 * np.abs(ref).max())


def test_transducer_field_on_eigenvector():
    model = ramp_model()
    op = build_symmetrized_operator(model)
    lam, Q = np.linalg.eigh(op.toarray())
    beta = 0.3**2 / 4
    for j in (0, 7, 19):
        out = expm_apply(op, beta, Q[:, j])
        np.testing.assert_allclose(out, np.exp(beta * lam[j]) * Q[:, j], atol=1e-12)


def test_transducer_field_frozen_values(tiny):
    # independent oracle: node-by-node operator and scipy.linalg.expm
    model, array, wavelet = tiny
    b = build_transducer_field(build_symmetrized_operator(model), model, array, wavelet)
    g = model.grid
    assert b[g.index(0, 1), 0] == pytest.approx(0.9291931823115162, rel=1e-11)
    assert b[g.index(1, 1), 0] == pytest.approx(0.024691816423599702, rel=1e-10)


def test_mollifier_limit_monotone():
    model = ramp_model(7, 6, 1.0)
    arr = TransducerArray(np.array([(0, 3)]))
    op = build_symmetrized_operator(model)
    E = delta_field(model.grid, arr)
    errs = [
        np.linalg.norm(build_transducer_field(op, model, arr, WaveletSpec(s, 0.5, 4)) - E)
        for s in (0.8, 0.4, 0.2, 0.1, 0.05)
    ]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-2


def test_distinct_transducers_nearly_disjoint():
    grid = Grid2D(60, 30, 10.0)
    model = VelocityModel(grid, np.full(grid.shape, 2000.0))
    arr = TransducerArray.along_edge(grid, 3)
    b = build_transducer_field(build_symmetrized_operator(model), model, arr, WaveletSpec.from_tau(0.015, 4))
    overlap = np.sum(np.abs(b[:, 0] * b[:, 1])) / np.sum(b[:, 0] ** 2)
    assert overlap < 1e-10


@pytest.mark.parametrize("z", [0.5, 5.0, 50.0, 500.0])
def test_exp_degree_tail_bound(z):
    from scipy.special import ive

    K = chebyshev_exp_degree(z)
    tail = 2 * ive(np.arange(K + 1, K + 400), z).sum()
    assert tail <= 1e-12


def test_smoothing_identities():
    model = ramp_model(8, 6, 10.0)
    const = model.with_velocity(np.full(model.grid.shape, 1500.0))
    np.testing.assert_allclose(gaussian_smooth_velocity(const, 30.0, 20.0).c, 1500.0)
    np.testing.assert_array_equal(gaussian_smooth_velocity(model, 0.0, 0.0).c, model.c)
    with pytest.raises(ValidationError):
        gaussian_smooth_velocity(model, -1.0, 0.0)


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_smoothing_preserves_bounds(seed, wx, wy):
    rng = np.random.default_rng(seed)
    grid = Grid2D(9, 7, 5.0)
    model = VelocityModel(grid, rng.uniform(1000.0, 4000.0, grid.shape))
    out = gaussian_smooth_velocity(model, wx, wy).c
    assert model.c.min() <= out.min() <= out.max() <= model.c.max()


def test_phantoms():
    g = Grid2D(300, 300, 10.0)
    model, mask = make_phantom("two_reflectors", g, return_mask=True)
    assert model.c[mask].max() == 1000.0
    assert 2000.0 <= model.c[~mask].min() and model.c[~mask].max() <= 3000.0
    # two nodes thick
    col = mask[:, 150]
    assert np.any(col[1:] & col[:-1])
    small = Grid2D(30, 30, 10.0)
    base = make_phantom("point", small, contrast=0.0, c_top=2000.0, c_bottom=2500.0)
    same = make_phantom("point", small, location=(10, 12), contrast=0.0, c_top=2000.0, c_bottom=2500.0)
    np.testing.assert_array_equal(base.c, same.c)
    with pytest.raises(ValidationError):
        make_phantom("two_reflectors", small, reflectors=(((0.1, 0.2), (1.2, 0.2)),))
    with pytest.raises(ValidationError):
        make_phantom("point", small, location=(40, 2))
    with pytest.raises(ValidationError):
        make_phantom("volcano", small)


def test_circular_phantom():
    g = Grid2D(200, 200, 1e-3)
    model, mask = make_phantom("circular_phantom", g, return_mask=True)
    assert model.accessible_edges == ["top", "bottom", "left", "right"]
    assert mask.any()
    assert set(np.unique(model.c)) <= {1500.0, 1540.0, 1470.0, 1570.0, 1600.0}
    with pytest.raises(ValidationError):
        make_phantom("circular_phantom", Grid2D(50, 50, 1e-3))
