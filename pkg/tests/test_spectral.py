import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ptnoise import oracles
from ptnoise.spectral import (
    FourierField,
    NormParams,
    SpectralDumpError,
    SpectralGrid,
    advect,
    apply_fractional_laplacian,
    besov_norm,
    dump_field,
    gradient_coeffs,
    leray_project,
    load_field,
    random_field,
    sample_gaussian_field,
    sobolev_norm,
    to_fourier,
    to_physical,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.sampled_from([2, 3])


def small_grid(d, K=None):
    return SpectralGrid(d, K if K is not None else (6 if d == 2 else 4))


def physical_l2(f):
    """L2 norm by midpoint quadrature on the collocation grid."""
    g = f.grid
    u = f.physical()
    cell = (2 * np.pi / g.M) ** g.d
    return np.sqrt(np.sum(u**2) * cell)


# --- grid -------------------------------------------------------------------------

@pytest.mark.parametrize("K,M", [(4, 15), (8, 25), (10, 32), (16, 50)])
def test_grid_size_dealiases(K, M):
    assert SpectralGrid(2, K).M == M
    assert M >= 3 * K + 1


def test_grid_rejects_bad_parameters():
    with pytest.raises(ValueError):
        SpectralGrid(4, 4)
    with pytest.raises(ValueError):
        SpectralGrid(2, 0)
    with pytest.raises(ValueError):
        SpectralGrid(2, 8, M=20)


@pytest.mark.parametrize("d,K", [(2, 3), (2, 5), (3, 2), (3, 3)])
def test_retained_set_is_punctured_ball(d, K):
    g = SpectralGrid(d, K)
    r = np.arange(-K, K + 1)
    lattice = np.stack(np.meshgrid(*([r] * d), indexing="ij"), -1).reshape(-1, d)
    n2 = np.sum(lattice**2, axis=1)
    expected = {tuple(k) for k in lattice[(n2 > 0) & (n2 <= K * K)]}
    assert {tuple(k) for k in g.retained_modes} == expected
    assert g.mode_count == len(expected)
    assert not g.mask[(0,) * d]


# --- transforms ---------------------------------------------------------------------

@given(seeds, dims)
def test_transform_round_trip(seed, d):
    g = small_grid(d)
    f = random_field(g, np.random.default_rng(seed), components=d)
    back = to_fourier(g, to_physical(g, f.coeffs))
    assert np.max(np.abs(back - f.coeffs)) <= 1e-12 * np.max(np.abs(f.coeffs))


@given(seeds, dims)
def test_fields_are_real_and_hermitian(seed, d):
    g = small_grid(d)
    f = random_field(g, np.random.default_rng(seed))
    for k in g.retained_modes[:20]:
        assert f.mode(k) == pytest.approx(np.conj(f.mode(-k)))
    # a real physical field round-trips to the same Hermitian coefficients
    assert np.allclose(FourierField.from_physical(g, f.physical()).coeffs, f.coeffs, atol=1e-13)


def test_single_mode_physical_values():
    g = SpectralGrid(2, 3)
    f = FourierField.from_modes(g, {(1, 0): 1.0})
    x = 2 * np.pi * np.arange(g.M) / g.M
    expected = 2 * np.cos(x)[:, None] * np.ones(g.M)[None, :] / (2 * np.pi)
    assert np.allclose(f.physical()[0], expected, atol=1e-14)


# --- Leray projection ----------------------------------------------------------------

def test_leray_gradient_direction_annihilated():
    g = SpectralGrid(3, 2)
    f = FourierField.from_modes(g, {(1, 0, 0): [1, 0, 0]}, components=3)
    assert np.allclose(leray_project(f).mode((1, 0, 0)), 0.0)


def test_leray_oblique_mode_by_hand():
    g = SpectralGrid(3, 2)
    f = FourierField.from_modes(g, {(1, 1, 0): [1, 0, 0]}, components=3)
    assert np.allclose(leray_project(f).mode((1, 1, 0)), [0.5, -0.5, 0.0], atol=1e-15)


def test_leray_fixes_divergence_free_field():
    g = SpectralGrid(3, 2)
    f = FourierField.from_modes(g, {(1, 1, 0): [1, -1, 2j]}, components=3)
    assert np.allclose(leray_project(f).coeffs, f.coeffs, atol=1e-15)


def test_leray_rejects_scalar():
    g = SpectralGrid(2, 3)
    with pytest.raises(ValueError):
        leray_project(FourierField.zeros(g))


@given(seeds, dims)
def test_leray_idempotent_and_divergence_free(seed, d):
    g = small_grid(d)
    f = random_field(g, np.random.default_rng(seed), components=d)
    p1 = leray_project(f)
    p2 = leray_project(p1)
    scale = sobolev_norm(f, 0)
    assert sobolev_norm(p2.with_coeffs(p2.coeffs - p1.coeffs), 0) <= 1e-12 * scale
    div = np.sum(g.wavenumbers * p1.coeffs, axis=0)
    assert np.max(np.abs(div)) <= 1e-12 * g.K * np.max(np.abs(f.coeffs))


@given(seeds, dims)
def test_leray_kills_gradients(seed, d):
    g = small_grid(d)
    s = random_field(g, np.random.default_rng(seed))
    grad = FourierField(g, gradient_coeffs(g, s.coeffs))
    assert sobolev_norm(leray_project(grad), 0) <= 1e-12 * sobolev_norm(grad, 0)


# --- fractional Laplacian --------------------------------------------------------------

def test_fractional_laplacian_examples():
    g2 = SpectralGrid(2, 3)
    f = FourierField.from_modes(g2, {(1, 0): 2 - 1j, (1, 2): 0.5})
    assert np.array_equal(apply_fractional_laplacian(f, 0).coeffs, f.coeffs)
    assert apply_fractional_laplacian(f, 1).mode((1, 0)) == pytest.approx(2 - 1j)
    g3 = SpectralGrid(3, 3)
    h = FourierField.from_modes(g3, {(2, 0, 0): 3.0})
    assert apply_fractional_laplacian(h, -0.5).mode((2, 0, 0)) == pytest.approx(1.5)


@given(seeds, st.floats(-2, 2), st.floats(-2, 2))
def test_fractional_laplacian_group_law(seed, s, t):
    g = SpectralGrid(2, 5)
    f = random_field(g, np.random.default_rng(seed))
    lhs = apply_fractional_laplacian(apply_fractional_laplacian(f, s), t)
    rhs = apply_fractional_laplacian(f, s + t)
    assert np.allclose(lhs.coeffs, rhs.coeffs, rtol=1e-12, atol=0)
    back = apply_fractional_laplacian(apply_fractional_laplacian(f, s), -s)
    assert np.max(np.abs(back.coeffs - f.coeffs)) <= 1e-12 * np.max(np.abs(f.coeffs))


# --- norms -----------------------------------------------------------------------------------

def test_sobolev_norm_zero_field():
    assert sobolev_norm(FourierField.zeros(SpectralGrid(2, 4)), 1.3) == 0.0


@pytest.mark.parametrize("s", [-1.0, 0.0, 0.5, 2.0])
def test_sobolev_norm_single_pair(s):
    # norms sum over the full lattice, so setting k and its partner -k to 1 gives sqrt(2)
    f = FourierField.from_modes(SpectralGrid(2, 4), {(0, 1): 1.0})
    assert sobolev_norm(f, s) == pytest.approx(np.sqrt(2), rel=1e-14)


@given(seeds, dims, st.sampled_from([1, None]))
def test_parseval_against_quadrature(seed, d, comps):
    g = small_grid(d)
    f = random_field(g, np.random.default_rng(seed), components=comps or d)
    assert sobolev_norm(f, 0) == pytest.approx(physical_l2(f), rel=1e-10)


def test_besov_examples():
    g = SpectralGrid(2, 8)
    assert besov_norm(FourierField.zeros(g), 1.0, 3.0) == 0.0
    # |k| = sqrt(5) and |k| = 3 lie in the block 2 <= |k| < 4
    f = FourierField.from_modes(g, {(1, 2): 1 + 1j, (3, 0): -0.5})
    for s, p in [(0.5, 2.0), (-1.0, 1.0), (1.5, 4.0)]:
        assert besov_norm(f, s, p) == pytest.approx(2**s * sobolev_norm(f, 0), rel=1e-14)


def test_besov_rejects_small_p():
    with pytest.raises(ValueError):
        NormParams(0.0, 0.5)
    with pytest.raises(ValueError):
        besov_norm(FourierField.zeros(SpectralGrid(2, 4)), 0.0, 0.5)


@given(seeds, st.floats(-2, 2))
def test_besov_two_comparable_to_sobolev(seed, s):
    g = SpectralGrid(2, 12)
    f = random_field(g, np.random.default_rng(seed), decay=1.0)
    ratio = besov_norm(f, s, 2.0) / sobolev_norm(f, s)
    bound = 2 ** abs(s)
    assert 1 / bound - 1e-12 <= ratio <= bound + 1e-12


# --- advection -------------------------------------------------------------------------------

def test_advect_zero_velocity():
    g = SpectralGrid(2, 4)
    w = random_field(g, np.random.default_rng(1))
    v = FourierField.zeros(g, components=2)
    assert np.all(advect(v, w).coeffs == 0)


def test_advect_two_modes_by_hand():
    # v = (0, 2 cos x) / (2 pi), w = 2 cos y / (2 pi)
    # v . grad w = -(4 / (2 pi)^2) cos x sin y, whose (1, 1) coefficient is i / (2 pi)
    g = SpectralGrid(2, 3)
    v = FourierField.from_modes(g, {(1, 0): [0, 1]}, components=2, solenoidal=True)
    w = FourierField.from_modes(g, {(0, 1): 1.0})
    out = advect(v, w)
    c = 1j / (2 * np.pi)
    assert out.mode((1, 1))[0] == pytest.approx(c, abs=1e-15)
    assert out.mode((1, -1))[0] == pytest.approx(-c, abs=1e-15)
    mask = np.ones(g.spectral_shape, bool)
    for k in [(1, 1), (1, -1)]:
        for kk in (k, tuple(-x for x in k)):
            idx = g.index_of(kk)
            if idx is not None:
                mask[idx] = False
    assert np.max(np.abs(out.coeffs[0][mask])) < 1e-15


def test_advect_grid_mismatch():
    v = FourierField.zeros(SpectralGrid(2, 4), components=2)
    w = FourierField.zeros(SpectralGrid(2, 5))
    with pytest.raises(ValueError):
        advect(v, w)


@pytest.mark.parametrize("d,K", [(2, 2), (2, 4), (2, 6), (3, 2), (3, 3)])
@pytest.mark.parametrize("vector_w", [False, True])
def test_advect_matches_direct_convolution(d, K, vector_w):
    g = SpectralGrid(d, K)
    rng = np.random.default_rng(d * 100 + K)
    v = random_field(g, rng, components=d, solenoidal=True)
    w = random_field(g, rng, components=d if vector_w else 1)
    fast = advect(v, w).coeffs
    ref = oracles.to_grid(g, oracles.direct_advect(oracles.from_grid(g, v.coeffs),
                                                   oracles.from_grid(g, w.coeffs), K))
    sel = g.mask
    assert np.max(np.abs(fast[:, sel] - ref[:, sel])) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


@given(seeds, dims)
def test_nonlinear_term_is_energy_neutral(seed, d):
    from ptnoise.sde import nonlinear_coeffs
    from ptnoise.spectral import inner_product

    g = small_grid(d)
    u = random_field(g, np.random.default_rng(seed), components=d, solenoidal=True)
    nl = FourierField(g, nonlinear_coeffs(g, u.coeffs))
    scale = sobolev_norm(u, 0) ** 2 * sobolev_norm(u, 1)
    assert abs(inner_product(nl, u)) <= 1e-10 * scale


# --- Gaussian sampling ----------------------------------------------------------------------

def test_gaussian_zero_std():
    g = SpectralGrid(2, 4)
    f = sample_gaussian_field(g, lambda k: 0 * k, np.random.default_rng(0))
    assert np.all(f.coeffs == 0)


def test_gaussian_unit_variance_per_mode():
    g = SpectralGrid(2, 3)
    n = 10_000
    f = sample_gaussian_field(g, lambda k: np.ones_like(k), np.random.default_rng(3), batch=(n,))
    sq = np.abs(f.coeffs[:, 0]) ** 2
    mean = sq.mean(axis=0)[g.mask]
    se = sq.std(axis=0, ddof=1)[g.mask] / np.sqrt(n)
    assert np.all(np.abs(mean - 1) <= 3 * se + 1e-12)


def test_gaussian_white_noise_energy():
    g = SpectralGrid(2, 4)
    n = 4000
    f = sample_gaussian_field(g, lambda k: np.ones_like(k), np.random.default_rng(4), batch=(n,))
    e = sobolev_norm(f, 0) ** 2
    se = e.std(ddof=1) / np.sqrt(n)
    assert abs(e.mean() - g.mode_count) <= 3 * se


def test_gaussian_spectral_scaling():
    # std |k|^-(a+2b) gives E|w(k)|^2 = |k|^-2(a+2b)
    g = SpectralGrid(2, 3)
    n = 10_000
    expo = 0.75
    f = sample_gaussian_field(g, lambda k: np.where(k > 0, k, 1.0) ** -expo,
                              np.random.default_rng(5), batch=(n,))
    for k in [(1, 0), (1, 1), (2, 2), (0, 3)]:
        x = np.abs(f.mode(k)[:, 0]) ** 2
        assert abs(x.mean() - np.dot(k, k) ** -expo) <= 3 * x.std(ddof=1) / np.sqrt(n)


# --- serialization ----------------------------------------------------------------------------

def test_dump_round_trip(tmp_path):
    g = SpectralGrid(3, 3)
    f = random_field(g, np.random.default_rng(9), components=3, solenoidal=True)
    path = tmp_path / "f.json"
    dump_field(f, path)
    back = load_field(path)
    assert back.solenoidal and back.grid == g
    assert np.allclose(back.coeffs, f.coeffs, atol=0, rtol=0)


def test_dump_rejects_bad_documents(tmp_path):
    g = SpectralGrid(2, 3)
    doc = dump_field(FourierField.from_modes(g, {(1, 0): 1.0}))
    bad = json.loads(json.dumps(doc))
    bad["modes"][0][0] = [5, 5]
    with pytest.raises(SpectralDumpError):
        load_field(bad)
    bad = json.loads(json.dumps(doc))
    bad["header"]["convention"] = "other"
    with pytest.raises(SpectralDumpError):
        load_field(bad)
    vec = dump_field(FourierField.from_modes(g, {(1, 0): [1.0, 0.0]}, components=2))
    vec["header"]["solenoidal"] = True
    with pytest.raises(SpectralDumpError):
        load_field(vec)
