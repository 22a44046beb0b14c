import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from romimaging import (
    MuSchedule,
    NoiseSpec,
    RegularizationError,
    SampledData,
    ValidationError,
    add_noise,
    assemble_mass,
    block_cholesky,
    min_eig,
    regularize,
    simulate_data,
)
from romimaging.regularization import scale_first_sample


def _scalar(values):
    return SampledData(np.asarray(values, dtype=float).reshape(-1, 1, 1), 0.1)


@pytest.fixture(scope="module")
def clean(request):
    from romimaging import Grid2D, TransducerArray, VelocityModel, WaveletSpec

    grid = Grid2D(16, 16, 10.0)
    c = 2000.0 + 30.0 * np.arange(16)[:, None] + np.zeros((1, 16))
    c[8:10, 4:12] = 1500.0
    model = VelocityModel(grid, c)
    return simulate_data(model, TransducerArray.along_edge(grid, 4), WaveletSpec.from_tau(0.015, 12))


def test_zero_noise_is_identity(clean):
    out = add_noise(clean, NoiseSpec(0.0, 7))
    assert np.array_equal(out.D, clean.D)


@given(st.floats(0.0, 0.5), st.integers(0, 2**32 - 1))
def test_noisy_data_symmetric(clean, eps, seed):
    out = add_noise(clean, NoiseSpec(eps, seed))
    assert np.array_equal(out.D, out.D.transpose(0, 2, 1))


def test_noise_deterministic_and_seeded(clean):
    a = add_noise(clean, NoiseSpec(0.1, 3))
    b = add_noise(clean, NoiseSpec(0.1, 3))
    c = add_noise(clean, NoiseSpec(0.1, 4))
    assert np.array_equal(a.D, b.D)
    assert not np.array_equal(a.D, c.D)
    assert a.tag == "noisy" and a.meta["noise_seed"] == 3


def test_noise_level_statistics(clean):
    out = add_noise(clean, NoiseSpec(0.1, 11))
    nz = clean.D != 0
    rel = (out.D[nz] - clean.D[nz]) / clean.D[nz]
    rms = np.sqrt(np.mean(rel**2))
    assert abs(rms - 0.1) <= 0.02


def test_noise_spec_validation():
    with pytest.raises(ValidationError):
        NoiseSpec(-0.1)
    with pytest.raises(ValidationError):
        NoiseSpec(float("nan"))


@pytest.mark.parametrize(
    "M, expect",
    [(np.eye(3), 1.0), (np.diag([3.0, -2.0]), -2.0), (np.array([[2.0, 1.0], [1.0, 2.0]]), 1.0)],
)
def test_min_eig_examples(M, expect):
    assert min_eig(M) == pytest.approx(expect, abs=1e-14)


@given(st.integers(0, 2**31 - 1))
def test_min_eig_matches_dense(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((8, 8))
    M = X + X.T
    ref = np.linalg.eigvals(M).real.min()
    assert abs(min_eig(M) - ref) <= 1e-10 * np.linalg.norm(M)


def test_manufactured_scalar_case():
    D = _scalar([1.0, 1.1, 0.9, 0.9])
    assert min_eig(assemble_mass(D)) < 0
    res = regularize(D)
    # smallest 1.05^i with mu (0.9 + mu) / 2 > 1.21
    mu_star = (-0.9 + np.sqrt(0.81 + 4 * 2.42)) / 2
    assert res.mu == pytest.approx(1.05**4, rel=1e-15)
    assert 1.05**3 < mu_star < res.mu
    assert res.iterations == 5
    np.testing.assert_allclose(assemble_mass(res.data), [[res.mu, 1.1], [1.1, (0.9 + res.mu) / 2]])
    lams = [h[1] for h in res.history]
    assert all(a <= b for a, b in zip(lams, lams[1:]))


def test_clean_data_terminates_at_one(clean):
    res = regularize(clean)
    assert res.mu == 1.0 and res.iterations == 1
    assert np.array_equal(res.data.D, clean.D)


def test_only_first_sample_changes(clean):
    noisy = add_noise(clean, NoiseSpec(0.1, 0))
    res = regularize(noisy)
    assert res.mu >= 1.0
    assert np.array_equal(res.data.D[1:], noisy.D[1:])
    np.testing.assert_array_equal(res.data.D[0], res.mu * noisy.D[0] if res.mu > 1 else noisy.D[0])
    block_cholesky(assemble_mass(res.data), noisy.m)


@given(st.integers(0, 2**31 - 1))
def test_lam_min_monotone_in_mu(seed):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((6, 2, 2))
    D = D + D.transpose(0, 2, 1)
    D[0] = np.eye(2) + 0.1 * D[0]
    data = SampledData(D, 0.1)
    lams = [min_eig(assemble_mass(scale_first_sample(data, mu))) for mu in (1.0, 1.1, 1.5, 3.0, 10.0)]
    assert all(a <= b + 1e-12 for a, b in zip(lams, lams[1:]))


def test_cap_failure():
    D = _scalar([1.0, 5.0, -30.0, 0.0])
    with pytest.raises(RegularizationError):
        regularize(D, MuSchedule(cap=2.0))


def test_asymmetric_input_rejected():
    D = np.zeros((2, 2, 2))
    D[0] = [[1.0, 0.5], [0.0, 1.0]]
    with pytest.raises(ValidationError):
        regularize(SampledData(D, 0.1))


@pytest.mark.parametrize("kw", [dict(start=0.5), dict(factor=1.0), dict(start=5.0, cap=2.0)])
def test_schedule_validation(kw):
    with pytest.raises(ValidationError):
        MuSchedule(**kw)


def test_history_csv():
    res = regularize(_scalar([1.0, 1.1, 0.9, 0.9]))
    lines = res.history_csv().splitlines()
    assert lines[0] == "iteration,mu,lam_min,threshold"
    assert len(lines) == 1 + res.iterations
