import io
import csv
import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ptnoise import oracles
from ptnoise.noise import (
    NoiseParams,
    apply_transport,
    bounds_report,
    build_noise_ensemble,
    corrector_csv,
    corrector_limit,
    corrector_scalar,
    corrector_table,
    corrector_vector,
    covariance_fourier,
    ensemble_summary,
    member_fields,
    sample_increment,
)
from ptnoise.spectral import (
    FourierField,
    SpectralGrid,
    inner_product,
    kdot,
    random_field,
    sobolev_norm,
)

seeds = st.integers(0, 2**32 - 1)


def ens_of(**kw):
    return build_noise_ensemble(NoiseParams(**kw))


# --- parameters and ensemble --------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(d=2, nu=0.0), dict(d=2, N=0), dict(d=2, gamma=1.5),
                                dict(d=3, gamma=-0.1), dict(d=2, shell="box"), dict(d=4)])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        NoiseParams(**kw)


@pytest.mark.parametrize("d,count", [(2, 4), (3, 6)])
@pytest.mark.parametrize("a", [-0.5, 0.0, 0.7])
def test_unit_shell_normalization(d, count, a):
    ens = ens_of(d=d, a=a, N=1)
    assert ens.n_modes == count
    assert ens.norm_ha**2 == pytest.approx(count, rel=1e-14)


def test_dimension_constant():
    assert ens_of(d=3).c_d == pytest.approx(3 * (2 * np.pi) ** 3, rel=1e-15)
    assert ens_of(d=2).c_d == pytest.approx(4 * (2 * np.pi) ** 2, rel=1e-15)


@pytest.mark.parametrize("d,N", [(2, 5), (3, 3)])
def test_normalization_matches_lattice_sum(d, N):
    r = np.arange(-N, N + 1)
    g = np.stack(np.meshgrid(*([r] * d), indexing="ij"), -1).reshape(-1, d)
    n2 = np.sum(g**2, axis=1)
    n2 = n2[(n2 > 0) & (n2 <= N * N)].astype(float)
    a, gamma = 0.3, 0.4
    ens = ens_of(d=d, a=a, gamma=gamma, N=N)
    assert ens.norm_ha**2 == pytest.approx(np.sum(n2**a * n2 ** (-a - gamma)), rel=1e-13)
    assert ens_of(d=d, a=a, N=N).norm_ha**2 == pytest.approx(len(n2), rel=1e-13)


@pytest.mark.parametrize("d", [2, 3])
def test_frames_orthonormal_and_transverse(d):
    ens = ens_of(d=d, N=4)
    for k, F in zip(ens.modes, ens.frames):
        assert np.allclose(F @ k, 0, atol=1e-12)
        assert np.allclose(F @ F.T, np.eye(d - 1), atol=1e-12)


def test_annulus_shell_support():
    ens = ens_of(d=2, N=3, shell="annulus")
    n2 = np.sum(ens.modes**2, axis=1)
    assert n2.min() >= 9 and n2.max() <= 36
    assert ens.theta_at(np.array([1.0, 0.0])) == 0.0


@pytest.mark.parametrize("d", [2, 3])
def test_member_l2_norms(d):
    ens = ens_of(d=d, a=-0.3, nu=0.7, N=2)
    g = SpectralGrid(d, 2)
    mem = member_fields(ens, g)
    norms = sobolev_norm(mem, 0)
    expected = np.repeat(np.sqrt(ens.c_d * 0.7) * ens.theta / ens.norm_ha, d - 1)
    assert np.allclose(norms, expected, rtol=1e-13)
    assert np.max(np.abs(kdot(g, mem.coeffs))) < 1e-13


# --- covariance -------------------------------------------------------------------------

def test_covariance_outside_band_is_zero():
    ens = ens_of(d=3, N=2)
    assert np.all(covariance_fourier(ens, (3, 0, 0)) == 0)
    with pytest.raises(ValueError):
        covariance_fourier(ens, (0, 0, 0))


@pytest.mark.parametrize("k", [(1, 0, 0), (1, 1, 0), (2, -1, 1)])
def test_covariance_is_projector_shaped(k):
    Q = covariance_fourier(ens_of(d=3, a=0.2, N=3), k)
    assert np.allclose(Q, Q.T)
    w, V = np.linalg.eigh(Q)
    assert w.min() > -1e-15
    assert np.allclose(Q @ np.asarray(k, float), 0, atol=1e-15)


def test_covariance_pair_identity_d2():
    ens = ens_of(d=2, a=0.25, N=2)
    c = (2 * np.pi) ** (ens.d / 2)
    pts = [(0, 0), (1, 0), (0, 1), (1, 1), (-1, 2), (2, 0)]
    for xi in pts:
        for eta in pts:
            for zeta in pts:
                got = oracles.brute_force_pair_sum(ens, xi, eta, zeta)
                if xi == zeta and xi != eta:
                    want = c * covariance_fourier(ens, np.subtract(xi, eta))
                else:
                    want = np.zeros((2, 2))
                assert np.allclose(got, want, atol=1e-12)


@given(st.floats(0, 2 * np.pi))
def test_covariance_independent_of_frame(angle):
    ens = ens_of(d=3, N=2)
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, s], [-s, c]])
    turned = replace(ens, frames=np.einsum("ij,njd->nid", rot, ens.frames))
    for xi, eta in [((1, 0, 0), (0, 1, 0)), ((1, 1, 0), (0, 0, 1)), ((2, 0, 0), (1, 1, 1))]:
        a = oracles.brute_force_pair_sum(ens, xi, eta, xi)
        b = oracles.brute_force_pair_sum(turned, xi, eta, xi)
        assert np.allclose(a, b, atol=1e-12)


# --- correctors ---------------------------------------------------------------------------

def test_scalar_corrector_limit_d2():
    ens = ens_of(d=2, a=0.0, N=64)
    assert abs(corrector_scalar(ens, (1, 0)) + 1.0) <= 0.05


@given(st.integers(-3, 3), st.integers(-3, 3), st.floats(-0.9, 0.9))
def test_scalar_corrector_nonpositive(k1, k2, a):
    if k1 == k2 == 0:
        return
    assert corrector_scalar(ens_of(d=2, a=a, N=3), (k1, k2)) <= 0


@pytest.mark.parametrize("d,xi", [(2, (1, 0)), (2, (2, -1)), (3, (1, 0, 0)), (3, (1, 2, -1))])
@pytest.mark.parametrize("a,b", [(0.0, 0.0), (-0.5, 0.25), (0.25, -0.1)])
def test_corrector_matches_operator_composition(d, xi, a, b):
    ens = ens_of(d=d, a=a, b=b, N=4 if d == 2 else 3)
    assert corrector_scalar(ens, xi) == pytest.approx(
        oracles.brute_force_corrector(ens, xi, "scalar"), abs=1e-10)
    assert np.allclose(corrector_vector(ens, xi),
                       oracles.brute_force_corrector(ens, xi, "vector"), atol=1e-10)


def test_vector_corrector_plus_sign_variant():
    ens = ens_of(d=3, a=0.1, b=0.2, N=2, vector_b_sign=1)
    xi = (1, 1, 0)
    assert np.allclose(corrector_vector(ens, xi),
                       oracles.brute_force_corrector(ens, xi, "vector"), atol=1e-10)


def test_galerkin_corrector_matches_banded_composition():
    ens = ens_of(d=2, a=-0.5, N=3)
    grid = SpectralGrid(2, 3)
    tab = corrector_table(ens, grid, "scalar", "galerkin")
    for xi in [(1, 0), (2, 1), (0, 3)]:
        got = tab.values[grid.index_of(xi)]
        assert got == pytest.approx(oracles.brute_force_corrector(ens, xi, "scalar", band=3),
                                    abs=1e-10)


@pytest.mark.parametrize("xi", [(1, 0, 0), (1, 1, 0), (2, 1, -1)])
def test_vector_corrector_structure(xi):
    S = corrector_vector(ens_of(d=3, a=-0.2, N=3), xi)
    x = np.asarray(xi, float)
    P = np.eye(3) - np.outer(x, x) / (x @ x)
    assert np.allclose(S @ x, 0, atol=1e-14)
    assert np.allclose(S, S.T, atol=1e-14)
    assert np.linalg.eigvalsh(S).max() <= 1e-14
    assert np.allclose(P @ S @ P, S, atol=1e-14)


def _signed_permutations(d, rng, n):
    for _ in range(n):
        R = np.eye(d)[rng.permutation(d)] * rng.choice([-1, 1], size=d)[:, None]
        yield R


def test_vector_corrector_lattice_symmetry(rng):
    ens = ens_of(d=3, a=0.1, N=3)
    for xi in [(1, 2, 0), (2, 1, -1)]:
        S = corrector_vector(ens, xi)
        for R in _signed_permutations(3, rng, 6):
            Rxi = (R @ np.asarray(xi)).astype(int)
            assert np.allclose(corrector_vector(ens, Rxi), R @ S @ R.T, atol=1e-13)


def test_corrector_linear_in_nu():
    a = ens_of(d=2, nu=1.0, N=5)
    b = ens_of(d=2, nu=2.0, N=5)
    assert corrector_scalar(b, (1, 2)) == 2 * corrector_scalar(a, (1, 2))


def test_vector_corrector_limit_d3():
    ens = ens_of(d=3, a=0.0, N=32)
    xi = np.array([1, 0, 0])
    S = corrector_vector(ens, xi)
    P = np.eye(3) - np.outer(xi, xi)
    gap = np.linalg.norm(S + 0.6 * P, 2) / 0.6
    assert gap <= 0.1


def test_limit_coefficients():
    assert corrector_limit(NoiseParams(d=2, nu=2.0), "scalar") == 2.0
    assert corrector_limit(NoiseParams(d=3, nu=2.0), "vector") == pytest.approx(1.2)
    assert corrector_limit(NoiseParams(d=2, nu=2.0), "vector") == pytest.approx(0.5)


def test_corrector_table_rejects_bad_options():
    ens = ens_of(d=2, N=2)
    with pytest.raises(ValueError):
        corrector_table(ens, SpectralGrid(2, 2), "tensor")
    with pytest.raises(ValueError):
        corrector_table(ens, SpectralGrid(2, 2), "scalar", "partial")


def test_corrector_csv_rows():
    ens = ens_of(d=2, N=2)
    grid = SpectralGrid(2, 3)
    text = corrector_csv(corrector_table(ens, grid, "scalar"))
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == grid.mode_count // 2
    r = next(r for r in rows if (r["xi0"], r["xi1"]) == ("1", "0"))
    assert float(r["s0"]) == corrector_scalar(ens, (1, 0))
    assert "\r" not in text


def test_ensemble_summary_json():
    doc = json.loads(ensemble_summary(ens_of(d=3, N=1)))
    assert doc["active_modes"] == 6 and doc["members"] == 12
    assert doc["norm_ha"] == pytest.approx(np.sqrt(6))


# --- transport operator ---------------------------------------------------------------------

def test_transport_of_zero():
    g = SpectralGrid(2, 4)
    z = random_field(g, np.random.default_rng(0), components=2, solenoidal=True)
    out = apply_transport(z, FourierField.zeros(g), 0.3, 0.1)
    assert np.all(out.coeffs == 0)


@given(seeds, st.sampled_from([2, 3]), st.floats(-0.8, 0.8), st.floats(-0.4, 0.4))
def test_transport_antisymmetric(seed, d, a, b):
    K = 5 if d == 2 else 3
    g = SpectralGrid(d, K)
    r = np.random.default_rng(seed)
    z = random_field(g, r, components=d, solenoidal=True)
    for comps in (1, d):
        u = random_field(g, r, components=comps, solenoidal=comps == d)
        t = apply_transport(z, u, a, b)
        scale = sobolev_norm(u, 2 * b + a) ** 2 * np.max(np.abs(z.physical())) * K
        assert abs(inner_product(t, u, 2 * b + a)) <= 1e-10 * scale


def test_transport_single_modes_by_hand():
    # zeta = (0, 2 cos x)/(2 pi), u = 2 cos 2y/(2 pi), a = b = 0: the (1, 2) coefficient is 2i/(2 pi)
    g = SpectralGrid(2, 4)
    z = FourierField.from_modes(g, {(1, 0): [0, 1]}, components=2, solenoidal=True)
    u = FourierField.from_modes(g, {(0, 2): 1.0})
    out = apply_transport(z, u, 0.0, 0.0)
    assert out.mode((1, 2))[0] == pytest.approx(2j / (2 * np.pi), abs=1e-15)
    assert out.mode((1, -2))[0] == pytest.approx(-2j / (2 * np.pi), abs=1e-15)
    # with a and b the input is scaled by |k_in|^(2(a+b)) and the output by |k_out|^(-2b)
    a, b = 0.3, 0.2
    out = apply_transport(z, u, a, b)
    want = 2j / (2 * np.pi) * 4 ** (a + b) * 5 ** (-b)
    assert out.mode((1, 2))[0] == pytest.approx(want, rel=1e-13)


@pytest.mark.parametrize("vector", [False, True])
def test_transport_matches_direct_oracle(vector):
    d = 3 if vector else 2
    g = SpectralGrid(d, 3)
    r = np.random.default_rng(5)
    z = random_field(g, r, components=d, solenoidal=True)
    u = random_field(g, r, components=d if vector else 1, solenoidal=vector)
    a, b = -0.3, 0.2
    fast = apply_transport(z, u, a, b).coeffs
    ref = oracles.direct_transport(oracles.from_grid(g, z.coeffs), oracles.from_grid(g, u.coeffs),
                                   a, b, vector, band=3)
    assert np.allclose(fast, oracles.to_grid(g, ref), atol=1e-12)


def test_transport_linear_in_velocity(rng):
    ens = ens_of(d=2, a=0.2, b=0.1, N=3)
    g = SpectralGrid(2, 6)
    mem = member_fields(ens, g)
    u = random_field(g, rng)
    w = rng.standard_normal(ens.n_members)
    zeta = FourierField(g, np.tensordot(w, mem.coeffs, axes=1), solenoidal=True)
    each = apply_transport(mem, u, 0.2, 0.1).coeffs
    assert np.allclose(apply_transport(zeta, u, 0.2, 0.1).coeffs,
                       np.tensordot(w, each, axes=1), atol=1e-12)


def test_transport_grid_mismatch():
    z = FourierField.zeros(SpectralGrid(2, 4), components=2)
    with pytest.raises(ValueError):
        apply_transport(z, FourierField.zeros(SpectralGrid(2, 5)), 0, 0)


# --- increments ----------------------------------------------------------------------------

def test_increment_zero_dt():
    inc = sample_increment(ens_of(d=2, N=3), 0.0, np.random.default_rng(0))
    assert np.all(inc.zeta.coeffs == 0)


@given(seeds, st.sampled_from([2, 3]))
def test_increment_divergence_free(seed, d):
    ens = ens_of(d=d, N=3)
    inc = sample_increment(ens, 0.01, np.random.default_rng(seed))
    g = inc.zeta.grid
    assert np.max(np.abs(kdot(g, inc.zeta.coeffs))) <= 1e-12 * np.max(np.abs(inc.zeta.coeffs))


def test_increment_covariance_monte_carlo():
    ens = ens_of(d=2, a=0.3, N=2)
    dt = 0.1
    n = 10_000
    inc = sample_increment(ens, dt, np.random.default_rng(11), batch=(n,))
    for k in [(1, 0), (1, 1), (0, 2), (-1, 1)]:
        z = inc.zeta.mode(k)  # (n, 2)
        want = dt * (2 * np.pi) ** (ens.d / 2) * covariance_fourier(ens, k)
        for i in range(2):
            for j in range(2):
                x = (z[:, i] * np.conj(z[:, j])).real
                assert abs(x.mean() - want[i, j]) <= 3 * x.std(ddof=1) / np.sqrt(n) + 1e-15


# --- bounds ---------------------------------------------------------------------------------

def test_linf_budget_is_4dnu():
    for d in (2, 3):
        for N in (2, 4, 8):
            rep = bounds_report(ens_of(d=d, a=-0.5, nu=0.7, N=N), K=2)
            assert rep["linf_budget"] == pytest.approx(4 * d * 0.7, rel=1e-8)


def test_covariance_sup_decay_and_uniform_ratio():
    Ns = [4, 8, 16, 32]
    reps = [bounds_report(ens_of(d=2, N=N), K=1) for N in Ns]
    sup = np.array([r["sup_Q_weighted"] for r in reps])
    slope = np.polyfit(np.log(Ns), np.log(sup), 1)[0]
    assert -2.2 <= slope <= -1.8
    ratios = [r["sup_Q_ratio"] for r in reps]
    assert max(ratios) / min(ratios) < 1 + 1e-12


def test_c_delta_finite_for_negative_a():
    rep = bounds_report(ens_of(d=3, a=-0.5, N=4), K=6)
    cd = rep["c_delta"]
    assert set(cd) == {"0.01", "0.1", "1.0"}
    assert all(np.isfinite(v) and v >= 0 for v in cd.values())
    assert cd["0.01"] >= cd["0.1"] >= cd["1.0"]


def test_c_delta_bounded_in_N():
    vals = [bounds_report(ens_of(d=2, a=-0.5, N=N), K=16, form="scalar")["c_delta"]["0.1"]
            for N in (4, 8, 16)]
    assert max(vals) <= 2 * min(vals) + 1e-12


def test_higher_order_sum_grows():
    lo = bounds_report(ens_of(d=2, N=4), K=1)["sobolev_sum"]
    hi = bounds_report(ens_of(d=2, N=32), K=1)["sobolev_sum"]
    assert hi["0.0"] == pytest.approx(lo["0.0"], rel=1e-12)
    assert hi["0.1"] > 1.2 * lo["0.1"]
