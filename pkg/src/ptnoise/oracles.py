"""Brute-force reference implementations used to validate the fast paths.

Fields are held as explicit lists of lattice modes with their coefficients,
and products are evaluated by direct convolution over all mode pairs. Nothing
here touches an FFT, so agreement with the spectral kernels is a genuine
cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import NoiseEnsemble, member_coefficients
from .spectral import SpectralGrid

__all__ = [
    "SparseField",
    "from_grid",
    "to_grid",
    "direct_grad_product",
    "direct_advect",
    "direct_transport",
    "brute_force_corrector",
    "brute_force_pair_sum",
]


@dataclass
class SparseField:
    """Coefficients ``values[n, c]`` at integer ``modes[n]``; no symmetry assumed."""

    modes: np.ndarray
    values: np.ndarray

    @property
    def components(self) -> int:
        return self.values.shape[1]

    def get(self, k) -> np.ndarray:
        hit = np.all(self.modes == np.asarray(k, dtype=int), axis=1)
        if not hit.any():
            return np.zeros(self.components, dtype=complex)
        return self.values[hit].sum(axis=0)

    def map_modes(self, fn) -> "SparseField":
        """Multiply each coefficient by ``fn(mode)`` (scalar or matrix per mode)."""
        out = []
        for k, v in zip(self.modes, self.values):
            m = fn(k)
            out.append(m @ v if np.ndim(m) == 2 else m * v)
        return SparseField(self.modes.copy(), np.array(out, dtype=complex).reshape(self.values.shape))

    def truncate(self, R: float | None) -> "SparseField":
        if R is None:
            return self
        keep = np.sum(self.modes.astype(float) ** 2, axis=1) <= R**2 + 1e-9
        return SparseField(self.modes[keep], self.values[keep])


def single_mode(k, value) -> SparseField:
    return SparseField(np.asarray([k], dtype=int), np.atleast_2d(np.asarray(value, dtype=complex)))


def from_grid(grid: SpectralGrid, coeffs: np.ndarray) -> SparseField:
    """All retained modes (both signs) of an unbatched stored field."""
    modes = grid.retained_modes
    vals = np.stack([np.atleast_1d(grid.get_mode(coeffs, k)) for k in modes])
    return SparseField(modes, vals.reshape(len(modes), -1))


def to_grid(grid: SpectralGrid, f: SparseField) -> np.ndarray:
    """Store the lex-positive half; modes outside the band are dropped."""
    c = grid.zeros(f.components)
    for k, v in zip(f.modes, f.values):
        if 0 < k @ k <= grid.K**2:
            idx = grid.index_of(k)
            if idx is not None:
                c[(slice(None),) + idx] = v
    return c


def _aggregate(modes: np.ndarray, vals: np.ndarray) -> SparseField:
    uniq, inv = np.unique(modes, axis=0, return_inverse=True)
    out = np.zeros((len(uniq), vals.shape[1]), dtype=complex)
    np.add.at(out, inv.ravel(), vals)
    return SparseField(uniq, out)


def direct_grad_product(v: SparseField, w: SparseField) -> SparseField:
    """``v . grad w`` by summing every pair: ``(2*pi)^(-d/2) sum_j v_j(p) i q_j w(q)``."""
    d = v.modes.shape[1]
    p, q = v.modes, w.modes
    # coefficient (p, q, c) = sum_j v_j(p) * i q_j * w_c(q)
    vq = 1j * (v.values @ q.T.astype(float))  # (np, nq)
    vals = vq[:, :, None] * w.values[None, :, :]
    modes = (p[:, None, :] + q[None, :, :]).reshape(-1, d)
    agg = _aggregate(modes, (2 * np.pi) ** (-d / 2) * vals.reshape(-1, w.components))
    nz = np.sum(agg.modes**2, axis=1) > 0
    return SparseField(agg.modes[nz], agg.values[nz])


def direct_advect(v: SparseField, w: SparseField, K: float) -> SparseField:
    """Reference for the dealiased advection product, truncated to ``|k| <= K``."""
    return direct_grad_product(v, w).truncate(K)


def _power(k, s):
    k2 = float(np.dot(k, k))
    return 0.0 if k2 == 0 else k2**s


def _proj(k):
    k = np.asarray(k, dtype=float)
    return np.eye(k.size) - np.outer(k, k) / (k @ k)


def direct_transport(sigma: SparseField, u: SparseField, a: float, b: float,
                     vector: bool, b_sign: int = -1, band: float | None = None) -> SparseField:
    """Reference pseudo-transport operator on sparse fields."""
    w = u.map_modes(lambda k: _power(k, a + b))
    t = direct_grad_product(sigma, w).truncate(band)
    if vector:
        return t.map_modes(lambda k: _power(k, b_sign * b) * _proj(k))
    return t.map_modes(lambda k: _power(k, -b))


def _members(ens: NoiseEnsemble) -> list[SparseField]:
    out = []
    for k, cp, cm in member_coefficients(ens):
        out.append(SparseField(np.stack([k, -k]).astype(int), np.stack([cp, cm])))
    return out


def brute_force_corrector(ens: NoiseEnsemble, xi, form: str = "scalar",
                          band: float | None = None) -> float | np.ndarray:
    """``(1/2) sum_members L L`` applied to ``e_xi``, read back at ``xi``.

    For the vector form the operator is applied to an orthonormal basis of
    ``xi``-perp and the matrix is assembled from the responses. ``band``
    truncates every intermediate field to ``|k| <= band``.
    """
    p = ens.params
    xi = np.asarray(xi, dtype=int)
    vector = form == "vector"
    members = _members(ens)
    if not vector:
        u = single_mode(xi, [1.0])
        acc = 0.0
        for m in members:
            once = direct_transport(m, u, p.a, p.b, False, band=band)
            twice = direct_transport(m, once, p.a, p.b, False, band=band)
            acc += twice.get(xi)[0]
        return 0.5 * acc.real
    d = ens.d
    basis = np.linalg.svd(_proj(xi))[0][:, : d - 1].T
    S = np.zeros((d, d))
    for v in basis:
        u = single_mode(xi, v)
        acc = np.zeros(d, dtype=complex)
        for m in members:
            once = direct_transport(m, u, p.a, p.b, True, p.vector_b_sign, band)
            twice = direct_transport(m, once, p.a, p.b, True, p.vector_b_sign, band)
            acc += twice.get(xi)
        S += 0.5 * np.outer(acc.real, v)
    return S


def brute_force_pair_sum(ens: NoiseEnsemble, xi, eta, zeta) -> np.ndarray:
    """``sum_members sigma_hat(xi - eta) (x) sigma_hat(eta - zeta)`` by enumeration."""
    d = ens.d
    out = np.zeros((d, d), dtype=complex)
    for m in _members(ens):
        out += np.outer(m.get(np.subtract(xi, eta)), m.get(np.subtract(eta, zeta)))
    return out
