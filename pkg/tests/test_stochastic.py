import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sbbm.stochastic import (
    NoiseCoefficient,
    apply_noise,
    brownian_values,
    coarsen,
    coarsen_increments,
    generate_path,
    make_noise,
    standard_normals,
)


def test_deterministic_regeneration():
    a = generate_path(42, 7)
    b = generate_path(42, 7)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, generate_path(42, 8).increments)
    assert not np.array_equal(a.increments, generate_path(43, 7).increments)


def test_path_length_and_step():
    p = generate_path(0, 0)
    assert p.n_steps == 4096
    assert p.n_steps * p.k0 == p.T
    with pytest.raises(ValueError):
        generate_path(0, 0, T=1.0, k0=0.3)
    with pytest.raises(ValueError):
        generate_path(0, 0, T=1.0, k0=1 / 3)


def test_normals_prefix_stable():
    # the stream depends only on the key, so shorter draws are prefixes
    assert np.array_equal(standard_normals(5, 1, 100)[:10], standard_normals(5, 1, 10))


def test_coarsen_definition():
    inc = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(coarsen_increments(inc, 2), [3.0, 7.0])
    assert np.array_equal(coarsen_increments(inc, 1), inc)
    with pytest.raises(ValueError):
        coarsen_increments(inc, 3)


def test_coarsen_identity_and_errors():
    p = generate_path(1, 2)
    assert np.array_equal(coarsen(p, p.k0), p.increments)
    with pytest.raises(ValueError):
        coarsen(p, 3 * p.k0)
    with pytest.raises(ValueError):
        coarsen(p, p.k0 / 2)


@given(seed=st.integers(0, 2**63), sid=st.integers(0, 10**6), a=st.integers(0, 6), b=st.integers(0, 6))
def test_coarsen_composes_exactly(seed, sid, a, b):
    p = generate_path(seed, sid, T=1.0, k0=2.0**-12)
    once = coarsen(p, 2.0 ** (a + b) * p.k0)
    twice = coarsen_increments(coarsen(p, 2.0**a * p.k0), 2**b)
    assert np.array_equal(once, twice)


@pytest.mark.parametrize("m", [2, 4, 64, 1024])
def test_cumulative_noise_at_shared_times(m):
    p = generate_path(9, 3)
    coarse = brownian_values(coarsen(p, m * p.k0))
    fine = brownian_values(p.increments)[m - 1 :: m]
    assert np.max(np.abs(coarse - fine)) <= 1e-15


def test_total_increment_preserved():
    p = generate_path(4, 4)
    c = coarsen(p, 256 * p.k0)
    assert abs(brownian_values(c)[-1] - brownian_values(p.increments)[-1]) <= 1e-15


def test_increment_statistics():
    paths = np.stack([generate_path(123, j).increments for j in range(10000)])
    k0 = 2.0**-12
    ratio = paths.var(axis=0, ddof=1) / k0
    # sd of a sample variance ratio with 9999 dof is sqrt(2/9999) = 0.0141, so
    # +-5% is 3.5 sd; a few of the 4096 increments may fall outside by chance
    assert np.mean((ratio < 0.95) | (ratio > 1.05)) <= 0.005
    assert abs(paths.mean()) < 4 * np.sqrt(k0 / paths.size)
    assert abs(paths.sum(axis=1).var(ddof=1) - 1.0) < 0.05
    # coarse increments used by levels 1-3 (k = 1/4, 1/16, 1/64): every one within 5%
    for m in (1024, 256, 64):
        c = coarsen_increments(paths, m)
        r = c.var(axis=0, ddof=1) / (m * k0)
        assert np.all((r >= 0.95) & (r <= 1.05))


def test_independence_across_samples():
    a = np.array([generate_path(77, 2 * j).increments.sum() for j in range(10000)])
    b = np.array([generate_path(77, 2 * j + 1).increments.sum() for j in range(10000)])
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.03


def test_builtin_noise_values():
    assert np.allclose(apply_noise(NoiseCoefficient.linear(0.25), [4.0, -8.0]), [1.0, -2.0])
    out = apply_noise(NoiseCoefficient.sin_shift(0.1), np.zeros(5))
    assert np.allclose(out, 0.0841470984807897, atol=1e-12)
    assert np.all(apply_noise(NoiseCoefficient.zero(), np.ones(3)) == 0)
    with pytest.raises(ValueError):
        apply_noise(NoiseCoefficient.linear(1.0), [np.nan])
    custom = NoiseCoefficient("custom", func=lambda u: u**2, C_G=None)
    assert np.allclose(custom(np.array([2.0])), [4.0])


def test_constants():
    lin = NoiseCoefficient.linear(0.25)
    assert lin.C_G == 0.25 and lin.L0 is None
    s = make_noise("sin_shift", 0.1)
    assert s.C_G == 0.1 and s.L0 == 0.1
    with pytest.raises(ValueError):
        NoiseCoefficient("cubic", 1.0)
    with pytest.raises(ValueError):
        NoiseCoefficient("custom")


@pytest.mark.parametrize("g", [NoiseCoefficient.linear(0.25), NoiseCoefficient.sin_shift(0.1), NoiseCoefficient.linear(-3.0)])
def test_lipschitz_and_bound_certificates(g):
    rng = np.random.default_rng(0)
    a = rng.normal(scale=10, size=10**6)
    b = a + rng.normal(scale=rng.choice([1e-6, 1.0, 100.0], size=a.size))
    slack = 1e-14 * g.C_G * (np.abs(a) + np.abs(b))  # rounding of the products
    assert np.all(np.abs(g(a) - g(b)) <= g.C_G * np.abs(a - b) + slack)
    if g.L0 is not None:
        assert np.all(np.abs(g(a)) <= g.L0)
