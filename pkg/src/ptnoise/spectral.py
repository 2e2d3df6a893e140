"""Fourier grids, transforms and differential operators on the torus.

Conventions
-----------
The torus is ``[0, 2*pi)^d`` with orthonormal basis
``e_k(x) = (2*pi)^(-d/2) exp(i k.x)`` and coefficients
``u_hat(k) = int u(x) e_{-k}(x) dx``, so that ``||u||_{L^2}^2 = sum_k |u_hat(k)|^2``
over the full lattice. Products satisfy
``(f g)^(xi) = (2*pi)^(-d/2) sum_q f_hat(xi - q) g_hat(q)``.

Coefficients are stored in the real-FFT layout of an ``M^d`` physical grid,
shape ``(*batch, C, M, ..., M, M//2 + 1)`` with ``C`` components (1 for a
scalar, ``d`` for a vector field). Only modes with ``0 < |k| <= K`` are ever
nonzero. In norms, entries with last wavenumber ``> 0`` stand for the pair
``{k, -k}`` and carry weight 2; entries on the ``k_last = 0`` plane hold both
members of each pair explicitly and carry weight 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft as sfft

__all__ = [
    "SpectralGrid",
    "FourierField",
    "NormParams",
    "SpectralDumpError",
    "fast_grid_size",
    "to_physical",
    "to_fourier",
    "leray_project",
    "apply_fractional_laplacian",
    "sobolev_norm",
    "besov_norm",
    "inner_product",
    "advect",
    "sample_gaussian_field",
    "random_field",
    "dump_field",
    "load_field",
]

CONVENTION_TAG = "torus[0,2pi)^d; e_k=(2pi)^(-d/2)exp(ik.x); uhat(k)=<u,e_k>"

# Number of FFT worker threads; the CLI may change it.
FFT_WORKERS = 1


def fast_grid_size(K: int) -> int:
    """Smallest FFT-friendly grid size that dealiases band-``K`` products."""
    return sfft.next_fast_len(3 * K + 1, real=True)


@dataclass(frozen=True)
class SpectralGrid:
    """Truncated Fourier lattice on ``T^d`` with its physical collocation grid.

    Parameters
    ----------
    d : int
        Spatial dimension, 2 or 3.
    K : int
        Spectral radius: modes ``0 < |k| <= K`` are retained.
    M : int, optional
        Physical points per axis. Defaults to the smallest fast size
        ``>= 3K + 1``, which makes products of a band-``N`` field
        (``N <= K``) with a band-``K`` field exact on retained modes.
    """

    d: int
    K: int
    M: int | None = None

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.M is None:
            object.__setattr__(self, "M", fast_grid_size(self.K))
        if self.M < 3 * self.K + 1:
            raise ValueError(f"M={self.M} does not dealias K={self.K}; need M >= {3 * self.K + 1}")

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.M,) * (self.d - 1) + (self.M // 2 + 1,)

    @property
    def physical_shape(self) -> tuple[int, ...]:
        return (self.M,) * self.d

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.d, 0))

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavevectors as floats, shape ``(d, *spectral_shape)``."""
        full = np.rint(sfft.fftfreq(self.M) * self.M)
        half = np.arange(self.M // 2 + 1, dtype=float)
        axes = [full] * (self.d - 1) + [half]
        return np.stack(np.meshgrid(*axes, indexing="ij"))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.sum(self.wavenumbers**2, axis=0)

    @cached_property
    def mask(self) -> np.ndarray:
        """Retained modes ``0 < |k| <= K``."""
        return (self.k2 > 0) & (self.k2 <= self.K**2)

    @cached_property
    def pair_weight(self) -> np.ndarray:
        """Weight of each storage entry in sums over the full lattice."""
        w = np.where(self.wavenumbers[-1] > 0, 2.0, 1.0)
        return np.where(self.mask, w, 0.0)

    @cached_property
    def mode_count(self) -> int:
        """Number of retained lattice modes, counting ``k`` and ``-k``."""
        return int(round(self.pair_weight.sum()))

    @cached_property
    def pair_representatives(self) -> np.ndarray:
        """One storage entry per ``{k, -k}`` pair.

        Every entry with ``k_last > 0`` qualifies (its partner is not
        stored); on the ``k_last = 0`` plane the lex-positive member is used.
        """
        kv = np.moveaxis(self.wavenumbers, 0, -1)
        return self.mask & ((self.wavenumbers[-1] > 0) | lex_positive(kv))

    @cached_property
    def retained_modes(self) -> np.ndarray:
        """Integer array ``(n, d)`` of all retained modes, both signs."""
        r = np.arange(-self.K, self.K + 1)
        g = np.stack(np.meshgrid(*([r] * self.d), indexing="ij"), -1).reshape(-1, self.d)
        n2 = np.sum(g**2, axis=1)
        return g[(n2 > 0) & (n2 <= self.K**2)]

    def power(self, s: float) -> np.ndarray:
        """Multiplier ``|k|^(2s)`` on retained modes, zero elsewhere."""
        out = np.zeros(self.spectral_shape)
        out[self.mask] = self.k2[self.mask] ** s
        return out

    @cached_property
    def _mirror_index(self) -> tuple[np.ndarray, ...]:
        neg = (-np.arange(self.M)) % self.M
        return np.ix_(*([neg] * (self.d - 1)))

    @cached_property
    def _negative_plane(self) -> np.ndarray:
        kv = np.moveaxis(self.wavenumbers[..., 0], 0, -1)
        nonzero = np.any(kv != 0, axis=-1)
        return nonzero & ~lex_positive(kv)

    def enforce_hermitian(self, coeffs: np.ndarray) -> np.ndarray:
        """Make coefficients those of a real field.

        Lex-negative entries of the ``k_last = 0`` plane are overwritten by
        conjugates of their mirrors (not averaged, so variances are kept),
        then the retention mask is applied.
        """
        out = np.array(coeffs, dtype=complex)
        plane = out[..., 0]
        mirrored = np.conj(plane[(Ellipsis,) + self._mirror_index])
        out[..., 0] = np.where(self._negative_plane, mirrored, plane)
        out *= self.mask
        return out

    def zeros(self, components: int = 1, batch: tuple[int, ...] = ()) -> np.ndarray:
        return np.zeros(tuple(batch) + (components,) + self.spectral_shape, dtype=complex)

    def index_of(self, k) -> tuple[int, ...] | None:
        """Storage index of mode ``k``, or ``None`` if only ``-k`` is stored."""
        k = tuple(int(v) for v in k)
        if len(k) != self.d:
            raise ValueError(f"mode {k} has wrong dimension for d={self.d}")
        if k[-1] < 0:
            return None
        return tuple(v % self.M for v in k[:-1]) + (k[-1],)

    def flat_index(self, modes: np.ndarray) -> np.ndarray:
        """Flat storage indices of integer modes with ``k_last >= 0``."""
        modes = np.asarray(modes, dtype=int)
        idx = [modes[:, j] % self.M for j in range(self.d - 1)] + [modes[:, -1]]
        return np.ravel_multi_index(idx, self.spectral_shape)

    def get_mode(self, coeffs: np.ndarray, k) -> np.ndarray:
        """Coefficient(s) at mode ``k``, read from the trailing spectral axes."""
        idx = self.index_of(k)
        if idx is None:
            return np.conj(coeffs[(Ellipsis,) + self.index_of([-int(v) for v in k])])
        return coeffs[(Ellipsis,) + idx]

    def set_mode(self, coeffs: np.ndarray, k, value) -> None:
        """Set mode ``k`` and its Hermitian partner ``-k`` in place."""
        k = np.asarray(k, dtype=int)
        value = np.asarray(value, dtype=complex)
        for kk, vv in ((k, value), (-k, np.conj(value))):
            idx = self.index_of(kk)
            if idx is not None:
                coeffs[(Ellipsis,) + idx] = vv


def lex_positive(kv: np.ndarray) -> np.ndarray:
    """True where the first nonzero coordinate (last axis of ``kv``) is positive."""
    kv = np.asarray(kv)
    out = np.zeros(kv.shape[:-1], dtype=bool)
    decided = np.zeros_like(out)
    for j in range(kv.shape[-1]):
        c = kv[..., j]
        out |= ~decided & (c > 0)
        decided |= c != 0
    return out


@dataclass(frozen=True)
class NormParams:
    """Smoothness ``s`` and summability ``p >= 1`` of a Sobolev/Besov norm."""

    s: float
    p: float = 2.0

    def __post_init__(self):
        if not (1 <= self.p < np.inf):
            raise ValueError(f"p must be finite and >= 1, got {self.p}")


@dataclass(frozen=True, eq=False)
class FourierField:
    """Real scalar or vector field held as truncated Fourier coefficients.

    ``coeffs`` has shape ``(*batch, C, *grid.spectral_shape)``; leading batch
    axes hold independent replicas. ``solenoidal`` tags divergence-free
    vector fields.
    """

    grid: SpectralGrid
    coeffs: np.ndarray
    solenoidal: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        d = self.grid.d
        if c.ndim < d + 1 or c.shape[-d:] != self.grid.spectral_shape:
            raise ValueError(f"coeffs shape {c.shape} does not match grid {self.grid.spectral_shape}")
        if c.shape[-d - 1] not in (1, d):
            raise ValueError(f"component axis must have size 1 or {d}, got {c.shape[-d - 1]}")

    @property
    def components(self) -> int:
        return self.coeffs.shape[-self.grid.d - 1]

    @property
    def is_vector(self) -> bool:
        return self.components == self.grid.d

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[: -self.grid.d - 1]

    def with_coeffs(self, coeffs: np.ndarray, solenoidal: bool | None = None) -> "FourierField":
        return FourierField(self.grid, coeffs, self.solenoidal if solenoidal is None else solenoidal)

    def mode(self, k) -> np.ndarray:
        return self.grid.get_mode(self.coeffs, k)

    def physical(self) -> np.ndarray:
        return to_physical(self.grid, self.coeffs)

    @classmethod
    def zeros(cls, grid: SpectralGrid, components: int = 1, batch=()) -> "FourierField":
        return cls(grid, grid.zeros(components, batch), solenoidal=components == grid.d)

    @classmethod
    def from_modes(cls, grid: SpectralGrid, modes: dict, components: int = 1,
                   solenoidal: bool = False) -> "FourierField":
        """Real field from ``{k: value}``; the partner ``-k`` gets the conjugate.

        ``value`` is a scalar for ``components == 1`` and a length-``d``
        vector otherwise.
        """
        c = grid.zeros(components)
        for k, v in modes.items():
            v = np.broadcast_to(np.asarray(v, dtype=complex), (components,))
            for i in range(components):
                grid.set_mode(c[i], k, v[i])
        return cls(grid, c, solenoidal)

    @classmethod
    def from_physical(cls, grid: SpectralGrid, u: np.ndarray, solenoidal: bool = False) -> "FourierField":
        return cls(grid, to_fourier(grid, u), solenoidal)


def to_physical(grid: SpectralGrid, coeffs: np.ndarray) -> np.ndarray:
    """Grid values ``u(x_j)``, ``x_j = 2*pi*j/M``, from stored coefficients."""
    scale = (2 * np.pi) ** (-grid.d / 2) * grid.M**grid.d
    return scale * sfft.irfftn(coeffs, s=grid.physical_shape, axes=grid.axes, workers=FFT_WORKERS)


def to_fourier(grid: SpectralGrid, u: np.ndarray) -> np.ndarray:
    """Stored coefficients of grid values, truncated to retained modes."""
    scale = (2 * np.pi) ** (grid.d / 2) / grid.M**grid.d
    out = sfft.rfftn(u, axes=grid.axes, workers=FFT_WORKERS)
    out *= scale * grid.mask
    return out


# --- array-level kernels (used directly by the time steppers) ---------------

def comp(c: np.ndarray, i: int, d: int) -> np.ndarray:
    """Component ``i`` of a stored field, keeping batch and spectral axes."""
    return c[(Ellipsis, i) + (slice(None),) * d]


def kdot(grid: SpectralGrid, c: np.ndarray) -> np.ndarray:
    """``k . c_hat(k)`` with the component axis removed."""
    d = grid.d
    out = grid.wavenumbers[0] * comp(c, 0, d)
    for i in range(1, d):
        out = out + grid.wavenumbers[i] * comp(c, i, d)
    return out


def leray_coeffs(grid: SpectralGrid, c: np.ndarray) -> np.ndarray:
    """``(I - k k^T/|k|^2) c_hat(k)`` per mode."""
    k2 = np.where(grid.k2 > 0, grid.k2, 1.0)
    ratio = np.expand_dims(kdot(grid, c) / k2, -grid.d - 1)
    return c - grid.wavenumbers * ratio


def gradient_coeffs(grid: SpectralGrid, c: np.ndarray) -> np.ndarray:
    """Gradient of each component: shape ``(*batch, C, d, *freq)``."""
    return 1j * np.expand_dims(c, -grid.d - 1) * grid.wavenumbers


def transport_coeffs(grid: SpectralGrid, v_phys: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Coefficients of ``v . grad w`` for physical ``v`` and stored ``w``.

    Gradient form: one inverse transform per derivative, products on the
    grid, one forward transform per output component.
    """
    d = grid.d
    gw = to_physical(grid, gradient_coeffs(grid, w))  # (*b, C, d, *phys)
    prod = np.sum(np.expand_dims(v_phys, -d - 2) * gw, axis=-d - 1)
    return to_fourier(grid, prod)


# --- public field operations --------------------------------------------------

def leray_project(f: FourierField) -> FourierField:
    """Project a vector field onto divergence-free fields mode by mode.

    Raises
    ------
    ValueError
        If ``f`` is not a vector field.
    """
    if not f.is_vector:
        raise ValueError("leray_project needs a vector field with d components")
    return f.with_coeffs(leray_coeffs(f.grid, f.coeffs), solenoidal=True)


def apply_fractional_laplacian(f: FourierField, s: float) -> FourierField:
    """Multiply every retained mode by ``|k|^(2s)``, i.e. apply ``(-Delta)^s``."""
    return f.with_coeffs(f.coeffs * f.grid.power(s))


def _mode_energy(f: FourierField) -> np.ndarray:
    """``sum_components |u_hat|^2`` per storage entry, pair weight included."""
    g = f.grid
    e = np.sum(np.abs(f.coeffs) ** 2, axis=-g.d - 1)
    return e * g.pair_weight


def sobolev_norm(f: FourierField, s: float) -> np.ndarray | float:
    """Homogeneous norm ``(sum_k |k|^(2s) |u_hat(k)|^2)^(1/2)``.

    Returns one value per batch entry (a float for an unbatched field).
    """
    e = _mode_energy(f) * f.grid.power(s)
    out = np.sqrt(np.sum(e, axis=f.grid.axes))
    return float(out) if out.ndim == 0 else out


def besov_norm(f: FourierField, s: float, p: float) -> np.ndarray | float:
    """Sharp-dyadic ``B^s_{2,p}`` norm ``(sum_j 2^(j s p) ||Delta_j f||^p)^(1/p)``.

    Blocks are ``Delta_j = {2^j <= |k| < 2^(j+1)}``, ``j >= 0``.
    """
    NormParams(s, p)
    g = f.grid
    e = _mode_energy(f)
    jblock = np.floor(np.log2(np.where(g.mask, np.sqrt(g.k2), 1.0))).astype(int)
    total = 0.0
    for j in range(int(np.floor(np.log2(g.K))) + 1):
        blk = np.sqrt(np.sum(e * (g.mask & (jblock == j)), axis=g.axes))
        total = total + (2.0 ** (j * s) * blk) ** p
    out = total ** (1.0 / p)
    return float(out) if np.ndim(out) == 0 else out


def inner_product(f: FourierField, g: FourierField, s: float = 0.0) -> np.ndarray | float:
    """Real inner product ``sum_k |k|^(2s) f_hat(k) . conj(g_hat(k))``."""
    _check_same_grid(f, g)
    gr = f.grid
    prod = np.sum((f.coeffs * np.conj(g.coeffs)).real, axis=-gr.d - 1)
    out = np.sum(prod * gr.pair_weight * gr.power(s), axis=gr.axes)
    return float(out) if np.ndim(out) == 0 else out


def _check_same_grid(*fields: FourierField) -> None:
    g0 = fields[0].grid
    for f in fields[1:]:
        if f.grid != g0:
            raise ValueError(f"grid mismatch: {f.grid} vs {g0}")


def advect(v: FourierField, w: FourierField) -> FourierField:
    """Dealiased coefficients of ``v . grad w`` (component-wise for vector ``w``).

    Exact on retained modes for band-limited inputs.

    Raises
    ------
    ValueError
        On grid mismatch or when ``v`` is not a vector field.
    """
    _check_same_grid(v, w)
    if not v.is_vector:
        raise ValueError("advecting velocity must be a vector field")
    out = transport_coeffs(v.grid, to_physical(v.grid, v.coeffs), w.coeffs)
    return w.with_coeffs(out, solenoidal=False)


def sample_gaussian_field(grid: SpectralGrid, spectral_std, rng: np.random.Generator,
                          components: int = 1, batch=()) -> FourierField:
    """Gaussian field with independent real-basis coefficients.

    The real basis is ``sqrt(2) (2*pi)^(-d/2) cos(k.x)`` for lex-positive
    ``k`` and ``sqrt(2) (2*pi)^(-d/2) sin(k.x)`` for lex-negative ``k``; each
    coefficient is centred with standard deviation ``spectral_std(k)``. Then
    ``E|u_hat(k)|^2 = spectral_std(k)^2`` for an even ``spectral_std``.

    Parameters
    ----------
    spectral_std : callable or ndarray
        Either a function of ``|k|`` (array in, array out) or an array on the
        storage layout.
    """
    std = spectral_std(np.sqrt(grid.k2)) if callable(spectral_std) else np.asarray(spectral_std, float)
    std = np.broadcast_to(std, grid.spectral_shape) * grid.mask
    shape = tuple(batch) + (components,) + grid.spectral_shape
    z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    c = grid.enforce_hermitian(z * (std / np.sqrt(2)))
    return FourierField(grid, c, solenoidal=False)


def random_field(grid: SpectralGrid, rng: np.random.Generator, components: int = 1,
                 batch=(), solenoidal: bool = False, decay: float = 0.0) -> FourierField:
    """Random band-limited field with spectrum ``|k|^(-decay)``, for tests."""
    f = sample_gaussian_field(grid, lambda k: np.where(k > 0, k, 1.0) ** (-decay), rng,
                              components, batch)
    if solenoidal:
        f = leray_project(f)
    return f


# --- serialization -----------------------------------------------------------

class SpectralDumpError(ValueError):
    """Raised when a spectral dump fails validation."""


def dump_field(f: FourierField, path: str | Path | None = None) -> dict:
    """Self-describing JSON dump of an unbatched field.

    Records hold ``(k, component, re, im)`` for one mode of every retained
    pair; the partner ``-k`` is implied by Hermitian symmetry.
    """
    if f.batch_shape:
        raise ValueError("dump_field expects an unbatched field")
    g = f.grid
    modes = np.moveaxis(g.wavenumbers, 0, -1)[g.pair_representatives].astype(int)
    recs = []
    for i in range(f.components):
        vals = f.coeffs[i][g.pair_representatives]
        for k, v in zip(modes, vals):
            recs.append([[int(x) for x in k], i, float(v.real), float(v.imag)])
    doc = {
        "header": {"format": "spectral-dump/1", "d": g.d, "K": g.K, "M": g.M,
                   "components": f.components, "solenoidal": bool(f.solenoidal),
                   "convention": CONVENTION_TAG},
        "modes": recs,
    }
    if path is not None:
        Path(path).write_text(json.dumps(doc, allow_nan=False))
    return doc


def load_field(src: str | Path | dict, atol: float = 1e-12) -> FourierField:
    """Load and validate a spectral dump produced by :func:`dump_field`."""
    doc = src if isinstance(src, dict) else json.loads(Path(src).read_text())
    try:
        h = doc["header"]
        if h.get("convention") != CONVENTION_TAG:
            raise SpectralDumpError(f"unknown convention tag {h.get('convention')!r}")
        grid = SpectralGrid(int(h["d"]), int(h["K"]), int(h["M"]))
        C = int(h["components"])
        if C not in (1, grid.d):
            raise SpectralDumpError(f"bad component count {C}")
        c = grid.zeros(C)
        for k, i, re, im in doc["modes"]:
            k = np.asarray(k, dtype=int)
            if k.shape != (grid.d,) or not (0 < k @ k <= grid.K**2):
                raise SpectralDumpError(f"mode {k.tolist()} outside retained set")
            if not 0 <= i < C:
                raise SpectralDumpError(f"component {i} out of range")
            grid.set_mode(c[i], k, complex(re, im))
    except (KeyError, TypeError) as exc:
        raise SpectralDumpError(f"malformed dump: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, SpectralDumpError):
            raise
        raise SpectralDumpError(str(exc)) from exc
    f = FourierField(grid, c, bool(h.get("solenoidal", False)))
    if f.solenoidal:
        div = np.max(np.abs(kdot(grid, c))) if C == grid.d else np.inf
        scale = max(np.max(np.abs(c)) * grid.K, 1e-300)
        if div > atol * scale:
            raise SpectralDumpError(f"field tagged solenoidal has divergence {div:.3e}")
    return f
