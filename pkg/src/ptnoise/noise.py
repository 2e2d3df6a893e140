"""Pseudo-transport noise: ensemble, covariance, correctors and sampling.

The ensemble is indexed by the real basis: for each active mode ``k`` and
each frame vector ``a_{k,i}`` (orthonormal basis of ``k``-perp) there is one
member field

* ``A theta_k a_{k,i} sqrt(2) (2*pi)^(-d/2) cos(k.x)`` if ``k`` is lex-positive,
* ``A theta_k a_{k,i} sqrt(2) (2*pi)^(-d/2) sin(k.x)`` if ``k`` is lex-negative,

with ``A = sqrt(C_d nu) / |theta|_{h^a}`` and ``C_d = (2*pi)^d 2d/(d-1)``.
In exponential coefficients a cos member has ``sigma_hat(+-k) = A theta a / sqrt(2)``
and a sin member has ``sigma_hat(k) = -i A theta a / sqrt(2)``,
``sigma_hat(-k) = +i A theta a / sqrt(2)``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from . import spectral as sp
from .spectral import FourierField, SpectralGrid

__all__ = [
    "NoiseParams",
    "NoiseEnsemble",
    "CorrectorMultiplier",
    "NoiseIncrement",
    "build_noise_ensemble",
    "covariance_fourier",
    "corrector_scalar",
    "corrector_vector",
    "corrector_table",
    "apply_transport",
    "transport_coeffs",
    "sample_increment",
    "increment_coeffs",
    "member_fields",
    "member_coefficients",
    "bounds_report",
    "corrector_csv",
    "ensemble_summary",
]


@dataclass(frozen=True)
class NoiseParams:
    """Parameters of the noise ensemble.

    Attributes
    ----------
    d : int
        Spatial dimension.
    a, b : float
        Smoothness and fluctuation exponents.
    gamma : float
        Extra spectral decay, ``0 <= gamma <= d/2``.
    nu : float
        Intensity, ``nu > 0``.
    N : int
        Noise cutoff.
    shell : {"ball", "annulus"}
        Active set ``|k| <= N`` or ``N <= |k| <= 2N``.
    vector_b_sign : {-1, +1}
        Outer exponent of the vector operator is ``vector_b_sign * b``. The
        default ``-1`` makes the operator anti-symmetric in ``H^(2b+a)``;
        ``+1`` is the variant that is anti-symmetric only when ``b = 0``.
    """

    d: int
    a: float = 0.0
    b: float = 0.0
    gamma: float = 0.0
    nu: float = 1.0
    N: int = 4
    shell: str = "ball"
    vector_b_sign: int = -1

    def __post_init__(self):
        errs = []
        if self.d not in (2, 3):
            errs.append(f"d must be 2 or 3, got {self.d}")
        if not self.nu > 0:
            errs.append(f"nu must be > 0, got {self.nu}")
        if int(self.N) != self.N or self.N < 1:
            errs.append(f"N must be a positive integer, got {self.N}")
        if not 0 <= self.gamma <= self.d / 2:
            errs.append(f"gamma must lie in [0, d/2], got {self.gamma}")
        if self.shell not in ("ball", "annulus"):
            errs.append(f"shell must be 'ball' or 'annulus', got {self.shell!r}")
        if self.vector_b_sign not in (-1, 1):
            errs.append(f"vector_b_sign must be -1 or +1, got {self.vector_b_sign}")
        if errs:
            raise ValueError("; ".join(errs))

    @property
    def outer_radius(self) -> int:
        return self.N if self.shell == "ball" else 2 * self.N

    def replace(self, **kw) -> "NoiseParams":
        return NoiseParams(**{**asdict(self), **kw})


def _frame(k: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ``k``-perp, rows are the frame vectors."""
    k = np.asarray(k, dtype=float)
    nk = np.linalg.norm(k)
    if k.size == 2:
        return np.array([[-k[1], k[0]]]) / nk
    seed = np.roll(k, 1)  # cyclic shift (k3, k1, k2)
    v = seed - (seed @ k) / nk**2 * k
    if np.linalg.norm(v) < 1e-8 * nk:
        j = int(np.argmin(np.abs(k)))
        e = np.zeros(3)
        e[j] = 1.0
        v = e - (e @ k) / nk**2 * k
    a1 = v / np.linalg.norm(v)
    a2 = np.cross(k, a1) / nk
    return np.stack([a1, a2])


@dataclass(frozen=True, eq=False)
class NoiseEnsemble:
    """Constructed noise ensemble.

    Attributes
    ----------
    modes : ndarray, shape (n, d)
        Active lattice modes, both signs.
    theta : ndarray, shape (n,)
        Weights ``|k|^(-a-gamma)``.
    frames : ndarray, shape (n, d-1, d)
        Orthonormal frames of ``k``-perp.
    norm_ha : float
        ``(sum_k |k|^(2a) theta_k^2)^(1/2)``.
    c_d : float
        ``(2*pi)^d 2d/(d-1)``.
    amplitude : float
        ``sqrt(c_d nu) / norm_ha``.
    """

    params: NoiseParams
    modes: np.ndarray
    theta: np.ndarray
    frames: np.ndarray
    norm_ha: float
    c_d: float
    amplitude: float
    is_plus: np.ndarray
    partner: np.ndarray

    @property
    def d(self) -> int:
        return self.params.d

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def n_members(self) -> int:
        return len(self.modes) * (self.d - 1)

    def theta_at(self, k: np.ndarray) -> np.ndarray:
        """``theta`` evaluated at arbitrary lattice vectors (last axis ``d``)."""
        k2 = np.sum(np.asarray(k, float) ** 2, axis=-1)
        p = self.params
        lo = p.N**2 if p.shell == "annulus" else 1
        active = (k2 >= lo) & (k2 <= p.outer_radius**2) & (k2 > 0)
        out = np.zeros_like(k2)
        out[active] = k2[active] ** (-(p.a + p.gamma) / 2)
        return out


def _lattice_ball(d: int, R: int) -> np.ndarray:
    r = np.arange(-R, R + 1)
    g = np.stack(np.meshgrid(*([r] * d), indexing="ij"), -1).reshape(-1, d)
    return g[np.sum(g**2, axis=1) > 0]


def build_noise_ensemble(params: NoiseParams) -> NoiseEnsemble:
    """Enumerate active modes, weights, normalization and frames."""
    p = params
    g = _lattice_ball(p.d, p.outer_radius)
    n2 = np.sum(g**2, axis=1)
    lo = p.N**2 if p.shell == "annulus" else 1
    modes = g[(n2 >= lo) & (n2 <= p.outer_radius**2)]
    n2 = np.sum(modes**2, axis=1).astype(float)
    theta = n2 ** (-(p.a + p.gamma) / 2)
    norm_ha = float(np.sqrt(np.sum(n2**p.a * theta**2)))
    c_d = (2 * np.pi) ** p.d * 2 * p.d / (p.d - 1)
    frames = np.stack([_frame(k) for k in modes])
    lookup = {tuple(k): i for i, k in enumerate(modes.tolist())}
    partner = np.array([lookup[tuple(k)] for k in (-modes).tolist()])
    return NoiseEnsemble(
        params=p, modes=modes, theta=theta, frames=frames, norm_ha=norm_ha, c_d=c_d,
        amplitude=float(np.sqrt(c_d * p.nu) / norm_ha),
        is_plus=sp.lex_positive(modes), partner=partner,
    )


def _projector(k: np.ndarray) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return np.eye(k.size) - np.outer(k, k) / (k @ k)


def covariance_fourier(ens: NoiseEnsemble, k) -> np.ndarray:
    """Fourier coefficient of the noise covariance at mode ``k``.

    ``Q_hat(k) = (2*pi)^(-d/2) A^2 theta_k^2 (I - k k^T/|k|^2)``; with this
    normalization ``sum_members sigma_hat(p) conj(sigma_hat(p))^T = (2*pi)^(d/2) Q_hat(p)``.

    Raises
    ------
    ValueError
        For the zero mode.
    """
    k = np.asarray(k, dtype=float)
    if not np.any(k):
        raise ValueError("covariance is undefined at the zero mode")
    th = float(ens.theta_at(k))
    return (2 * np.pi) ** (-ens.d / 2) * ens.amplitude**2 * th**2 * _projector(k)


# --- Ito-Stratonovich corrector ------------------------------------------------

def corrector_exponent(params: NoiseParams, form: str) -> float:
    """Combined order ``s_in + s_out`` of the fractional powers around the transport."""
    if form == "vector" and params.vector_b_sign == 1:
        return params.a + 2 * params.b
    return params.a


def _corrector_batch(ens: NoiseEnsemble, xis: np.ndarray, form: str,
                     band: int | None) -> np.ndarray:
    """Exact lattice sums for many ``xi`` at once.

    ``band`` restricts intermediate modes ``xi - eta`` to ``|xi - eta| <= band``
    (the corrector of the Galerkin-truncated Stratonovich system).
    """
    d = ens.d
    e = corrector_exponent(ens.params, form)
    eta = ens.modes.astype(float)
    th2 = ens.theta**2
    eta2 = np.sum(eta**2, axis=1)
    pref = -0.5 * (2 * np.pi) ** (-d) * ens.amplitude**2
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    out = np.zeros((len(xis),) if form == "scalar" else (len(xis), d, d))
    chunk = max(1, 4_000_000 // max(len(eta), 1))
    for s in range(0, len(xis), chunk):
        xi = xis[s : s + chunk]
        xi2 = np.sum(xi**2, axis=1)
        z = xi[:, None, :] - eta[None, :, :]
        z2 = np.sum(z**2, axis=2)
        keep = z2 > 0
        if band is not None:
            keep &= z2 <= band**2
        zpow = np.where(keep, np.where(keep, z2, 1.0) ** e, 0.0)
        quad = xi2[:, None] - (xi @ eta.T) ** 2 / eta2[None, :]
        w = th2[None, :] * quad * zpow
        scale = pref * xi2**e
        if form == "scalar":
            out[s : s + chunk] = scale * w.sum(axis=1)
        else:
            wz = np.where(keep, w / np.where(keep, z2, 1.0), 0.0)
            m = w.sum(axis=1)[:, None, None] * np.eye(d) - np.einsum("mn,mni,mnj->mij", wz, z, z)
            P = np.eye(d)[None] - xi[:, :, None] * xi[:, None, :] / xi2[:, None, None]
            out[s : s + chunk] = scale[:, None, None] * (P @ m @ P)
    return out


def corrector_scalar(ens: NoiseEnsemble, xi, band: int | None = None) -> float:
    """Ito-Stratonovich corrector multiplier of the scalar equation at mode ``xi``.

    ``2 S(xi) = -(2*pi)^(-d) A^2 |xi|^(2a) xi^T [sum_{eta != xi} theta_eta^2
    P_eta |xi - eta|^(2a)] xi``, by exact summation over the active modes.
    """
    return float(_corrector_batch(ens, np.asarray(xi)[None], "scalar", band)[0])


def corrector_vector(ens: NoiseEnsemble, xi, band: int | None = None) -> np.ndarray:
    """Ito-Stratonovich corrector matrix of the Leray-projected vector equation.

    ``S(xi) = -(1/2)(2*pi)^(-d) A^2 |xi|^(2e) P_xi [sum_eta theta_eta^2
    (xi^T P_eta xi) |xi - eta|^(2e) P_(xi-eta)] P_xi`` with ``e = a`` for the
    default operator.
    """
    return _corrector_batch(ens, np.asarray(xi)[None], "vector", band)[0]


def corrector_limit(params: NoiseParams, form: str) -> float:
    """Coefficient ``c`` of the large-``N`` limit ``-c |xi|^(2+2a)`` (times ``P_xi`` for vectors)."""
    if form == "scalar":
        return params.nu
    if params.d == 3:
        return 3 * params.nu / 5
    # circle average of (xi^T P_eta xi)(P_xi P_eta P_xi) relative to the scalar case
    return params.nu / 4


@dataclass(frozen=True, eq=False)
class CorrectorMultiplier:
    """Per-mode corrector table on a grid's storage layout.

    ``values`` has shape ``spectral_shape`` (scalar) or
    ``spectral_shape + (d, d)`` (vector); entries outside the retained set
    are zero.
    """

    grid: SpectralGrid
    params: NoiseParams
    form: str
    kind: str
    values: np.ndarray
    limit_coefficient: float

    def limit_values(self) -> np.ndarray:
        g = self.grid
        e = corrector_exponent(self.params, self.form)
        lim = -self.limit_coefficient * g.power(1 + e)
        if self.form == "scalar":
            return lim
        kv = np.moveaxis(g.wavenumbers, 0, -1)
        k2 = np.where(g.k2 > 0, g.k2, 1.0)[..., None, None]
        P = np.eye(g.d) - kv[..., :, None] * kv[..., None, :] / k2
        return lim[..., None, None] * P

    def apply(self, c: np.ndarray) -> np.ndarray:
        """Multiply stored coefficients ``(*batch, C, *freq)`` by the table."""
        d = self.grid.d
        if self.form == "scalar":
            return c * self.values
        v = np.moveaxis(self.values, (-2, -1), (0, 1))  # (d, d, *freq)
        return _matvec(v, c, d)


def _matvec(v: np.ndarray, c: np.ndarray, d: int) -> np.ndarray:
    out = np.zeros_like(c)
    for i in range(d):
        acc = v[i, 0] * sp.comp(c, 0, d)
        for j in range(1, d):
            acc = acc + v[i, j] * sp.comp(c, j, d)
        out[(Ellipsis, i) + (slice(None),) * d] = acc
    return out


@lru_cache(maxsize=32)
def _table_cached(grid: SpectralGrid, params: NoiseParams, form: str, kind: str) -> CorrectorMultiplier:
    ens = build_noise_ensemble(params)
    kv = np.moveaxis(grid.wavenumbers, 0, -1)
    sel = grid.mask
    band = grid.K if kind == "galerkin" else None
    vals = _corrector_batch(ens, kv[sel], form, band)
    shape = grid.spectral_shape if form == "scalar" else grid.spectral_shape + (grid.d, grid.d)
    table = np.zeros(shape)
    table[sel] = vals
    table.setflags(write=False)
    return CorrectorMultiplier(grid, params, form, kind, table, corrector_limit(params, form))


def corrector_table(ens: NoiseEnsemble, grid: SpectralGrid, form: str = "scalar",
                    kind: str = "full") -> CorrectorMultiplier:
    """Corrector on every retained mode of ``grid``, cached per ``(grid, params)``.

    Parameters
    ----------
    form : {"scalar", "vector"}
    kind : {"full", "galerkin"}
        ``"full"`` sums over every active noise mode. ``"galerkin"`` keeps
        only intermediate modes inside the grid band, which is the exact
        corrector of the truncated Stratonovich system.
    """
    if form not in ("scalar", "vector"):
        raise ValueError(f"form must be 'scalar' or 'vector', got {form!r}")
    if kind not in ("full", "galerkin"):
        raise ValueError(f"kind must be 'full' or 'galerkin', got {kind!r}")
    return _table_cached(grid, ens.params, form, kind)


# --- transport operator ----------------------------------------------------------

def transport_coeffs(grid: SpectralGrid, zeta_phys: np.ndarray, u: np.ndarray, a: float,
                     b: float, vector: bool, b_sign: int = -1) -> np.ndarray:
    """Array kernel for the pseudo-transport operator.

    Scalar: ``(-Delta)^(-b) (zeta . grad (-Delta)^(a+b) u)``.
    Vector: ``(-Delta)^(b_sign b) Leray(zeta . grad (-Delta)^(a+b) u)``.
    """
    w = u * _power(grid, a + b)
    out = sp.transport_coeffs(grid, zeta_phys, w)
    if vector:
        out = sp.leray_coeffs(grid, out)
        return out * _power(grid, b_sign * b)
    return out * _power(grid, -b)


@lru_cache(maxsize=256)
def _power(grid: SpectralGrid, s: float) -> np.ndarray:
    out = grid.power(s)
    out.setflags(write=False)
    return out


def apply_transport(zeta: FourierField, u: FourierField, a: float, b: float,
                    b_sign: int = -1) -> FourierField:
    """Apply the pseudo-transport operator with velocity ``zeta`` to ``u``.

    ``u`` may be a scalar or a vector field; vector fields get the Leray
    projection. Linear in ``zeta``, so feeding the sampled increment gives
    ``sum_k L_k u dW^k`` in one evaluation.
    """
    if zeta.grid != u.grid:
        raise ValueError(f"grid mismatch: {zeta.grid} vs {u.grid}")
    if not zeta.is_vector:
        raise ValueError("zeta must be a vector field")
    phys = sp.to_physical(zeta.grid, zeta.coeffs)
    if u.batch_shape and not zeta.batch_shape:
        phys = phys.reshape((1,) * len(u.batch_shape) + phys.shape)
    out = transport_coeffs(u.grid, phys, u.coeffs, a, b, u.is_vector, b_sign)
    return u.with_coeffs(out, solenoidal=u.is_vector)


# --- sampling ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NoiseIncrement:
    """Sampled ``zeta = sum_{k,i} sigma_{k,i} g_{k,i} sqrt(dt)``."""

    zeta: FourierField
    dt: float
    seed_info: str = ""


@dataclass(frozen=True, eq=False)
class _Scatter:
    flat: np.ndarray      # flat storage index of modes with k_last >= 0
    sel: np.ndarray       # which ensemble modes they are
    primary: np.ndarray   # index of the lex-positive representative
    secondary: np.ndarray
    sign: np.ndarray
    weight: np.ndarray    # A theta / sqrt(2)


@lru_cache(maxsize=32)
def _scatter_plan(grid: SpectralGrid, params: NoiseParams) -> tuple[NoiseEnsemble, _Scatter]:
    ens = build_noise_ensemble(params)
    if params.outer_radius > grid.K:
        raise ValueError(f"noise cutoff {params.outer_radius} exceeds grid band K={grid.K}")
    sel = np.nonzero(ens.modes[:, -1] >= 0)[0]
    plus = ens.is_plus[sel]
    primary = np.where(plus, sel, ens.partner[sel])
    secondary = np.where(plus, ens.partner[sel], sel)
    plan = _Scatter(
        flat=grid.flat_index(ens.modes[sel]), sel=sel, primary=primary, secondary=secondary,
        sign=np.where(plus, 1.0, -1.0), weight=ens.amplitude * ens.theta[sel] / np.sqrt(2),
    )
    return ens, plan


def increment_coeffs(grid: SpectralGrid, params: NoiseParams, gauss: np.ndarray,
                     dt: float) -> np.ndarray:
    """Stored coefficients of ``zeta`` from standard normals.

    Parameters
    ----------
    gauss : ndarray, shape (*batch, n_modes, d-1)
        One normal per member ``(k, i)`` in ensemble mode order.
    """
    ens, plan = _scatter_plan(grid, params)
    d = grid.d
    F = np.einsum("...ni,nij->...nj", gauss, ens.frames)  # (*b, n, d)
    vals = plan.weight[:, None] * (F[..., plan.primary, :]
                                   + 1j * plan.sign[:, None] * F[..., plan.secondary, :])
    vals = vals * np.sqrt(dt)
    batch = gauss.shape[:-2]
    out = np.zeros(batch + (d, int(np.prod(grid.spectral_shape))), dtype=complex)
    out[..., plan.flat] = np.moveaxis(vals, -1, -2)
    return out.reshape(batch + (d,) + grid.spectral_shape)


def sample_increment(ens: NoiseEnsemble, dt: float, rng: np.random.Generator,
                     grid: SpectralGrid | None = None, batch=()) -> NoiseIncrement:
    """Draw ``zeta = sum_{k,i} sigma_{k,i} g_{k,i} sqrt(dt)`` in spectral space.

    Cost is linear in the number of active modes. ``grid`` defaults to the
    smallest grid holding the noise band.
    """
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    grid = grid or SpectralGrid(ens.d, ens.params.outer_radius)
    g = rng.standard_normal(tuple(batch) + (ens.n_modes, ens.d - 1))
    c = increment_coeffs(grid, ens.params, g, dt)
    return NoiseIncrement(FourierField(grid, c, solenoidal=True), dt)


def member_coefficients(ens: NoiseEnsemble) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Each member as ``(mode k, coefficient at k, coefficient at -k)``."""
    out = []
    A = ens.amplitude
    for n, k in enumerate(ens.modes):
        for i in range(ens.d - 1):
            a = ens.frames[n, i] * A * ens.theta[n] / np.sqrt(2)
            if ens.is_plus[n]:
                out.append((k, a.astype(complex), a.astype(complex)))
            else:
                out.append((k, -1j * a, 1j * a))
    return out


def member_fields(ens: NoiseEnsemble, grid: SpectralGrid, start: int = 0,
                  stop: int | None = None) -> FourierField:
    """Members ``start:stop`` as a batched vector field ``(n, d, *freq)``."""
    gauss = np.zeros((ens.n_modes, ens.d - 1))
    mem = list(range(ens.n_members))[start:stop]
    out = np.zeros((len(mem), ens.d) + grid.spectral_shape, dtype=complex)
    for j, m in enumerate(mem):
        gauss[:] = 0.0
        gauss[m // (ens.d - 1), m % (ens.d - 1)] = 1.0
        out[j] = increment_coeffs(grid, ens.params, gauss, 1.0)
    return FourierField(grid, out, solenoidal=True)


# --- bounds and exports ---------------------------------------------------------

def _symmetry_representatives(d: int, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Modes with ``0 <= k_1 <= ... <= k_d``, ``0 < |k| <= K``, with orbit sizes."""
    from itertools import permutations

    reps, sizes = [], []
    g = _lattice_ball(d, K)
    g = g[np.sum(g**2, axis=1) <= K**2]
    for k in g:
        if np.all(k >= 0) and np.all(np.diff(k) >= 0):
            perms = {p for p in permutations(k.tolist())}
            nz = int(np.count_nonzero(k))
            reps.append(k)
            sizes.append(len(perms) * 2**nz)
    return np.array(reps), np.array(sizes)


def bounds_report(ens: NoiseEnsemble, K: int | None = None, deltas=(0.01, 0.1, 1.0),
                  eps_list=(0.0, 0.1), form: str = "vector") -> dict:
    """Measured constants of the noise bounds.

    Returns a dict with

    * ``sup_Q_weighted``: ``sup_k |Q_hat(k)| |k|^(2a)`` and its ratio to
      ``nu / |theta|^2_{h^a}``;
    * ``linf_budget``: ``sum_{k,i} ||(-Delta)^(a/2) sigma_{k,i}||_{L^inf}^2``
      (equals ``4 d nu`` for the ball shell);
    * ``c_delta``: for each ``delta``, the least ``C`` with
      ``|S(xi)| <= delta |xi|^2 + C |xi|^(2+2a)`` over ``0 < |xi| <= K``
      (only for ``-1 <= a < 0``; uses lattice symmetry to reduce the sum);
    * ``sobolev_sum``: ``sum_{k,i} ||sigma_{k,i}||^2_{H^(a+eps)}`` per ``eps``.
    """
    p = ens.params
    d = ens.d
    K = K if K is not None else p.outer_radius
    k2 = np.sum(ens.modes.astype(float) ** 2, axis=1)
    A2 = ens.amplitude**2
    q = (2 * np.pi) ** (-d / 2) * A2 * ens.theta**2 * k2**p.a  # |P| = 1
    sup_q = float(q.max())
    linf = float(np.sum((d - 1) * A2 * ens.theta**2 * k2**p.a * 2 * (2 * np.pi) ** (-d)))
    out = {
        "N": p.N,
        "norm_ha_sq": ens.norm_ha**2,
        "sup_Q_weighted": sup_q,
        "sup_Q_ratio": sup_q * ens.norm_ha**2 / p.nu,
        "linf_budget": linf,
        "linf_budget_over_nu": linf / p.nu,
        "sobolev_sum": {str(e): float(np.sum((d - 1) * A2 * ens.theta**2 * k2 ** (p.a + e)))
                        for e in eps_list},
    }
    if -1 <= p.a < 0:
        reps, _ = _symmetry_representatives(d, K)
        S = _corrector_batch(ens, reps, form, None)
        mag = np.abs(S) if form == "scalar" else np.linalg.norm(S, ord=2, axis=(1, 2))
        r2 = np.sum(reps.astype(float) ** 2, axis=1)
        out["c_delta"] = {str(dl): float(max(0.0, np.max((mag - dl * r2) / r2 ** (1 + p.a))))
                          for dl in deltas}
    return out


def corrector_csv(table: CorrectorMultiplier) -> str:
    """CSV rows ``xi, entries, limit, relative gap`` for one mode of each retained pair."""
    g = table.grid
    kv = np.moveaxis(g.wavenumbers, 0, -1)[g.pair_representatives].astype(int)
    vals = table.values[g.pair_representatives]
    lims = table.limit_values()[g.pair_representatives]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    nent = 1 if table.form == "scalar" else g.d * g.d
    w.writerow([f"xi{j}" for j in range(g.d)] + [f"s{j}" for j in range(nent)]
               + ["limit", "rel_gap"])
    for k, v, lv in zip(kv, vals, lims):
        v = np.atleast_1d(v).ravel()
        lv = np.atleast_1d(lv)
        lim_norm = float(np.linalg.norm(lv, 2) if lv.ndim == 2 else abs(lv[0]))
        gap = float(np.linalg.norm(np.reshape(v, lv.shape) - lv, 2) if lv.ndim == 2
                    else abs(v[0] - lv[0])) / lim_norm
        lim_val = -lim_norm
        w.writerow(list(map(int, k)) + [repr(float(x)) for x in v] + [repr(lim_val), repr(gap)])
    return buf.getvalue()


def ensemble_summary(ens: NoiseEnsemble) -> str:
    """JSON summary: parameters, ``|theta|_{h^a}`` and active mode count."""
    return json.dumps({"params": asdict(ens.params), "norm_ha": ens.norm_ha,
                       "c_d": ens.c_d, "amplitude": ens.amplitude,
                       "active_modes": ens.n_modes, "members": ens.n_members},
                      sort_keys=True)
