"""Time integration of the noisy scalar and fluid equations.

Three schemes share one stepping engine:

``ito_em``
    Euler-Maruyama on the Ito form ``du = [kappa Delta u + S u + F(u)] dt + L(zeta) u``.
``ito_etd``
    Exponential Euler: the per-mode linear part ``kappa Delta + S`` is
    integrated exactly (3x3 or 2x2 matrix exponentials for vector fields);
    noise is applied before the propagator and the nonlinearity ``F``
    through the ``phi_1`` function.
``strat_midpoint``
    Implicit midpoint on the Stratonovich form (no corrector), solved by
    fixed-point iteration with the viscous part handled linearly-implicitly.
    Without viscosity and nonlinearity each step is a Cayley transform of an
    operator that is skew in ``H^(2b+a)``, so that norm is conserved up to the
    iteration tolerance.

Replicas are batched along a leading axis. Each replica owns an independent
random stream derived from ``(seed, replica index)``, so results do not
depend on how replicas are grouped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import spectral as sp
from .noise import (
    CorrectorMultiplier,
    NoiseEnsemble,
    NoiseParams,
    build_noise_ensemble,
    corrector_table,
    increment_coeffs,
    transport_coeffs,
)
from .spectral import FourierField, SpectralGrid

__all__ = [
    "SimConfig",
    "Trajectory",
    "CutoffFunction",
    "IntegratorError",
    "step_ito",
    "step_strat_midpoint",
    "simulate",
    "small_data_threshold",
    "replica_generators",
    "nonlinear_coeffs",
]

SCHEMES = ("ito_em", "ito_etd", "strat_midpoint")


class IntegratorError(RuntimeError):
    """A step produced non-finite values or the implicit solve failed."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


def _smooth_step(s: np.ndarray) -> np.ndarray:
    """``C^inf`` transition: 1 for ``s <= 0``, 0 for ``s >= 1``."""
    s = np.asarray(s, dtype=float)

    def psi(x):
        out = np.zeros_like(x)
        pos = x > 0
        out[pos] = np.exp(-1.0 / x[pos])
        return out

    return psi(1.0 - s) / (psi(1.0 - s) + psi(s))


@dataclass(frozen=True)
class CutoffFunction:
    """Smooth non-increasing switch with ``f = 1`` on ``[0, R]`` and ``f = 0`` on ``[2R, inf)``.

    The bridge is ``f(x) = h((x - R)/R)`` with ``h`` the standard smooth
    step built from ``exp(-1/x)``.
    """

    R: float = math.inf

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if math.isinf(self.R):
            return np.ones_like(x)
        return _smooth_step((x - self.R) / self.R)


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one (batched) run.

    Attributes
    ----------
    grid : SpectralGrid
    noise : NoiseParams or None
        ``None`` switches the noise (and its corrector) off.
    form : {"scalar", "vector"}
    kappa : float
        Viscosity; 0 gives the inviscid equation.
    nonlinear : bool
        Include ``-f_R(||u||) Leray(u . grad u)`` (vector form only).
    cutoff_R, cutoff_delta : float
        The nonlinearity is switched by ``f_R(||u||_{H^(2b+a-delta)})``.
    guard : float or None
        Replicas whose cut-off norm exceeds ``guard`` are frozen and flagged.
        Defaults to ``10 R`` (never, when ``R`` is infinite).
    corrector : {"full", "galerkin"}
        Which Ito corrector the Ito schemes use.
    norm_s : tuple of float
        Extra Sobolev exponents to record.
    besov_p : float
        Time-integrability exponent defining the trace norm
        ``B^(2b+a+1-2/p)_(2,p)``.
    """

    grid: SpectralGrid
    noise: NoiseParams | None
    dt: float
    T: float
    form: str = "scalar"
    kappa: float = 0.0
    nonlinear: bool = False
    cutoff_R: float = math.inf
    cutoff_delta: float = 0.0
    guard: float | None = None
    scheme: str = "ito_etd"
    corrector: str = "full"
    seed: int = 0
    replicas: int = 1
    record_every: int = 10
    norm_s: tuple = ()
    besov_p: float = 2.0
    tol: float = 1e-12
    max_iter: int = 200
    keep_states: bool = False
    check_every_step: bool = True

    def __post_init__(self):
        errs = []
        if not self.dt > 0:
            errs.append(f"dt must be > 0, got {self.dt}")
        elif not self.T >= self.dt:
            errs.append(f"T must be >= dt, got T={self.T}, dt={self.dt}")
        elif abs(self.T / self.dt - round(self.T / self.dt)) > 1e-6:
            errs.append(f"T={self.T} is not a whole number of steps dt={self.dt}")
        if self.scheme not in SCHEMES:
            errs.append(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.form not in ("scalar", "vector"):
            errs.append(f"form must be 'scalar' or 'vector', got {self.form!r}")
        if self.nonlinear and self.form != "vector":
            errs.append("nonlinear term needs form='vector'")
        if self.corrector not in ("full", "galerkin"):
            errs.append(f"corrector must be 'full' or 'galerkin', got {self.corrector!r}")
        if self.noise is not None:
            if self.noise.d != self.grid.d:
                errs.append(f"noise.d={self.noise.d} differs from grid.d={self.grid.d}")
            if self.noise.outer_radius > self.grid.K:
                errs.append(f"noise cutoff {self.noise.outer_radius} exceeds grid K={self.grid.K}")
        if self.replicas < 1 or self.record_every < 1:
            errs.append("replicas and record_every must be >= 1")
        if not (self.tol > 0 and self.max_iter >= 1):
            errs.append("tol must be > 0 and max_iter >= 1")
        if errs:
            raise ValueError("; ".join(errs))

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def a(self) -> float:
        return self.noise.a if self.noise else 0.0

    @property
    def b(self) -> float:
        return self.noise.b if self.noise else 0.0

    @property
    def energy_exponent(self) -> float:
        """``2b + a``: order of the norm conserved by the noise."""
        return 2 * self.b + self.a

    @property
    def guard_level(self) -> float:
        if self.guard is not None:
            return self.guard
        return 10 * self.cutoff_R

    @property
    def components(self) -> int:
        return 1 if self.form == "scalar" else self.grid.d

    def replace(self, **kw) -> "SimConfig":
        return replace(self, **kw)


@dataclass
class Trajectory:
    """Recorded output of :func:`simulate`.

    Norm arrays have shape ``(n_records, replicas)``.
    """

    times: np.ndarray
    norms: dict
    besov: np.ndarray
    dissipation: np.ndarray
    cutoff_norm_sup: np.ndarray
    tripped: np.ndarray
    trip_time: np.ndarray
    final: FourierField
    energy_residual: np.ndarray | None = None
    states: list | None = None
    max_iterations: int = 0
    meta: dict = field(default_factory=dict)

    def norm(self, s: float) -> np.ndarray:
        return self.norms[_skey(s)]

    def to_csv(self, replica: int = 0) -> str:
        """Long table ``t, ||u||_{H^s}..., besov, dissipation, guard`` for one replica."""
        keys = sorted(self.norms, key=float)
        head = ["t"] + [f"H^{k}" for k in keys] + ["besov", "dissipation", "guard_tripped"]
        if self.energy_residual is not None:
            head.append("energy_residual")
        rows = [",".join(head)]
        for n, t in enumerate(self.times):
            tripped = bool(self.tripped[replica]) and self.trip_time[replica] <= t
            vals = [t] + [self.norms[k][n, replica] for k in keys] + [
                self.besov[n, replica], self.dissipation[n, replica]]
            cells = [fmt_float(v) for v in vals] + [str(int(tripped))]
            if self.energy_residual is not None:
                cells.append(fmt_float(self.energy_residual[n, replica]))
            rows.append(",".join(cells))
        return "\n".join(rows) + "\n"


def fmt_float(x: float) -> str:
    """Locale-independent round-trip formatting with 17 significant digits."""
    return format(float(x), ".17g")


def _skey(s: float) -> str:
    return format(float(s), ".6g")


def replica_generators(seed: int, replicas, stream: int = 0) -> list[np.random.Generator]:
    """Independent generators keyed by ``(seed, stream, replica)``.

    ``replicas`` is a count or an iterable of replica indices.
    """
    idx = range(replicas) if isinstance(replicas, int) else replicas
    return [np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stream, int(r))))
            for r in idx]


def nonlinear_coeffs(grid: SpectralGrid, u: np.ndarray, u_phys: np.ndarray | None = None) -> np.ndarray:
    """``Leray(u . grad u)`` for divergence-free ``u`` via ``div(u (x) u)``."""
    d = grid.d
    if u_phys is None:
        u_phys = sp.to_physical(grid, u)
    pairs = [(i, j) for i in range(d) for j in range(i, d)]
    prod = np.stack([sp.comp(u_phys, i, d) * sp.comp(u_phys, j, d) for i, j in pairs],
                    axis=-d - 1)
    ph = sp.to_fourier(grid, prod)
    lookup = {p: n for n, p in enumerate(pairs)}
    kv = grid.wavenumbers
    out = np.zeros_like(u)
    for i in range(d):
        acc = 0
        for j in range(d):
            acc = acc + 1j * kv[j] * sp.comp(ph, lookup[(min(i, j), max(i, j))], d)
        out[(Ellipsis, i) + (slice(None),) * d] = acc
    return sp.leray_coeffs(grid, out)


def small_data_threshold(n: float) -> dict:
    """Integrability exponent and threshold form of the small-data result.

    ``p(n) = 2(2n+1)/(2n-1)`` for ``1/2 < n < 3/2`` and ``p(n) = 4`` for
    ``n >= 3/2``; the smallness condition reads
    ``delta_0^2 < C(n)^(-1/(p(n)-1))`` with an unspecified constant ``C(n)``.
    """
    if not n > 0.5:
        raise ValueError(f"regularity n must exceed 1/2, got {n}")
    p = 2 * (2 * n + 1) / (2 * n - 1) if n < 1.5 else 4.0
    return {"n": n, "p": p, "exponent": -1.0 / (p - 1),
            "threshold": f"delta0^2 < C(n)^(-1/{fmt_float(p - 1)})", "C": "symbolic"}


# --- stepping engine -----------------------------------------------------------

@lru_cache(maxsize=16)
def _linear_tables(grid: SpectralGrid, noise: NoiseParams | None, form: str, kappa: float,
                   corrector_kind: str, dt: float, with_corrector: bool):
    """Propagator ``E = exp(dt Lambda)``, ``phi_1`` and ``Lambda`` per mode."""
    k2 = grid.k2 * grid.mask
    if noise is not None and with_corrector:
        ens = build_noise_ensemble(noise)
        S = corrector_table(ens, grid, form, corrector_kind).values
    else:
        S = np.zeros(grid.spectral_shape if form == "scalar" else grid.spectral_shape + (grid.d,) * 2)
    if form == "scalar":
        lam = (-kappa * k2 + S) * grid.mask
        z = lam * dt
        E = np.exp(z)
        phi = np.where(np.abs(z) > 1e-8, np.expm1(z) / np.where(z == 0, 1, z), 1 + z / 2)
        return lam, E, phi
    w, V = np.linalg.eigh(S)
    lamv = (w - kappa * k2[..., None]) * grid.mask[..., None]
    z = lamv * dt
    ez = np.exp(z)
    pz = np.where(np.abs(z) > 1e-8, np.expm1(z) / np.where(z == 0, 1, z), 1 + z / 2)

    def assemble(vals):
        m = np.einsum("...ik,...k,...jk->...ij", V, vals, V)
        return np.moveaxis(m, (-2, -1), (0, 1))  # (d, d, *freq)

    lam = assemble(lamv)
    return lam, assemble(ez), assemble(pz)


def _apply(mult: np.ndarray, c: np.ndarray, d: int, scalar: bool) -> np.ndarray:
    if scalar:
        return mult * c
    out = np.empty_like(c)
    for i in range(d):
        acc = mult[i, 0] * sp.comp(c, 0, d)
        for j in range(1, d):
            acc = acc + mult[i, j] * sp.comp(c, j, d)
        out[(Ellipsis, i) + (slice(None),) * d] = acc
    return out


class _Engine:
    """Precomputed operators for one configuration; acts on stored arrays."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        g = self.grid = cfg.grid
        self.d = g.d
        self.scalar = cfg.form == "scalar"
        self.vector = not self.scalar
        self.ens = build_noise_ensemble(cfg.noise) if cfg.noise is not None else None
        ito = cfg.scheme != "strat_midpoint"
        self.lam, self.E, self.phi = _linear_tables(
            g, cfg.noise, cfg.form, float(cfg.kappa), cfg.corrector, float(cfg.dt), ito)
        self.cut = CutoffFunction(cfg.cutoff_R)
        self.cut_pow = g.power(cfg.energy_exponent - cfg.cutoff_delta) * g.pair_weight
        hk = 0.5 * cfg.dt * cfg.kappa * g.k2 * g.mask
        self.mid_plus = 1.0 - hk
        self.mid_inv = 1.0 / (1.0 + hk)
        self.b_sign = cfg.noise.vector_b_sign if cfg.noise is not None else -1

    # -- pieces
    def zeta_phys(self, gauss: np.ndarray | None) -> np.ndarray | None:
        if gauss is None or self.ens is None:
            return None
        z = increment_coeffs(self.grid, self.cfg.noise, gauss, self.cfg.dt)
        return sp.to_physical(self.grid, z)

    def noise_term(self, zphys, c):
        if zphys is None:
            return 0.0
        return transport_coeffs(self.grid, zphys, c, self.cfg.a, self.cfg.b, self.vector, self.b_sign)

    def cutoff_norm(self, c: np.ndarray) -> np.ndarray:
        e = np.sum(np.abs(c) ** 2, axis=-self.d - 1) * self.cut_pow
        return np.sqrt(np.sum(e, axis=self.grid.axes))

    def drift_nl(self, c: np.ndarray) -> np.ndarray | float:
        if not self.cfg.nonlinear:
            return 0.0
        f = self.cut(self.cutoff_norm(c))
        shape = f.shape + (1,) * (self.d + 1)
        return -f.reshape(shape) * nonlinear_coeffs(self.grid, c)

    # -- schemes
    def step_em(self, c, zphys):
        lin = _apply(self.lam, c, self.d, self.scalar)
        return c + self.cfg.dt * (lin + self.drift_nl(c)) + self.noise_term(zphys, c)

    def step_etd(self, c, zphys):
        out = _apply(self.E, c + self.noise_term(zphys, c), self.d, self.scalar)
        if self.cfg.nonlinear:
            out = out + self.cfg.dt * _apply(self.phi, self.drift_nl(c), self.d, self.scalar)
        return out

    def step_mid(self, c, zphys, step: int | None = None):
        cfg = self.cfg
        base = self.mid_plus * c
        new = c
        it = 0
        if zphys is None and not cfg.nonlinear:
            return self.mid_inv * base, 0
        for it in range(1, cfg.max_iter + 1):
            mid = 0.5 * (c + new)
            rhs = base + cfg.dt * self.drift_nl(mid) + self.noise_term(zphys, mid)
            nxt = self.mid_inv * rhs
            diff = np.max(np.abs(nxt - new))
            scale = max(np.max(np.abs(nxt)), 1e-300)
            new = nxt
            if diff <= cfg.tol * scale:
                return new, it
        raise IntegratorError(
            f"midpoint fixed point did not converge in {cfg.max_iter} iterations "
            f"(last relative update {diff / scale:.2e}); reduce dt", step)


def _gauss_shape(cfg: SimConfig, ens: NoiseEnsemble) -> tuple[int, int]:
    return (ens.n_modes, ens.d - 1)


def step_ito(state: FourierField, cfg: SimConfig, ens: NoiseEnsemble | None = None,
             corrector: CorrectorMultiplier | None = None,
             rng: np.random.Generator | None = None) -> FourierField:
    """One Ito step (``cfg.scheme`` selects ``ito_em`` or ``ito_etd``).

    ``ens`` and ``corrector`` are taken from ``cfg`` when omitted; when
    given they must agree with it. Noise for every batch entry is drawn from
    the single generator ``rng``.
    """
    if cfg.scheme == "strat_midpoint":
        raise ValueError("step_ito needs an Ito scheme")
    if corrector is not None and (corrector.kind != cfg.corrector or corrector.grid != cfg.grid):
        raise ValueError("corrector table does not match the configuration")
    eng = _engine(cfg)
    gauss = _draw(eng, rng, state.batch_shape)
    z = eng.zeta_phys(gauss)
    c = eng.step_etd(state.coeffs, z) if cfg.scheme == "ito_etd" else eng.step_em(state.coeffs, z)
    _check_finite(c, None)
    return state.with_coeffs(c)


def step_strat_midpoint(state: FourierField, cfg: SimConfig, ens: NoiseEnsemble | None = None,
                        rng: np.random.Generator | None = None) -> FourierField:
    """One implicit-midpoint step of the Stratonovich form."""
    eng = _engine(cfg.replace(scheme="strat_midpoint"))
    gauss = _draw(eng, rng, state.batch_shape)
    c, _ = eng.step_mid(state.coeffs, eng.zeta_phys(gauss))
    _check_finite(c, None)
    return state.with_coeffs(c)


@lru_cache(maxsize=8)
def _engine(cfg: SimConfig) -> _Engine:
    return _Engine(cfg)


def _draw(eng: _Engine, rng, batch) -> np.ndarray | None:
    if eng.ens is None:
        return None
    if rng is None:
        raise ValueError("a random generator is required when noise is on")
    return rng.standard_normal(tuple(batch) + _gauss_shape(eng.cfg, eng.ens))


def _check_finite(c: np.ndarray, step: int | None) -> None:
    if not np.all(np.isfinite(c)):
        raise IntegratorError("non-finite state", step)


class _NoiseFeed:
    """Per-replica Gaussian draws, pre-fetched in chunks of steps."""

    def __init__(self, gens, shape, n_steps):
        self.gens = gens
        self.shape = shape
        per = max(1, len(gens) * int(np.prod(shape)))
        self.chunk = int(max(1, min(n_steps, 4_000_000 // per)))
        self.buf = None
        self.pos = self.chunk

    def next(self) -> np.ndarray:
        if self.pos >= self.chunk:
            self.buf = np.stack([g.standard_normal((self.chunk,) + self.shape) for g in self.gens],
                                axis=1)
            self.pos = 0
        out = self.buf[self.pos]
        self.pos += 1
        return out


def _broadcast_initial(cfg: SimConfig, u0: FourierField | None) -> np.ndarray:
    shape = (cfg.replicas, cfg.components) + cfg.grid.spectral_shape
    if u0 is None:
        return np.zeros(shape, dtype=complex)
    if u0.grid != cfg.grid:
        raise ValueError("initial field grid differs from configuration grid")
    c = np.asarray(u0.coeffs, dtype=complex)
    if c.shape[-cfg.grid.d - 1] != cfg.components:
        raise ValueError(f"initial field has {c.shape[-cfg.grid.d - 1]} components, "
                         f"configuration needs {cfg.components}")
    return np.broadcast_to(c, shape).copy() * cfg.grid.mask


def simulate(cfg: SimConfig, u0: FourierField | None = None, replica_offset: int = 0,
             observer=None) -> Trajectory:
    """Integrate all replicas to ``cfg.T`` and record norm series.

    Parameters
    ----------
    u0 : FourierField, optional
        Initial data, unbatched (shared) or batched with ``cfg.replicas``
        entries. Defaults to zero.
    replica_offset : int
        Global index of the first replica; replica ``r`` always uses the
        random stream ``(cfg.seed, r)``.
    observer : callable, optional
        Called as ``observer(n, t_n, coeffs)`` with the state at every step
        ``n = 0, ..., n_steps`` (read-only; do not modify ``coeffs``).

    Raises
    ------
    IntegratorError
        Non-finite state, failed implicit solve, or a vector state that lost
        divergence-freeness.
    """
    g = cfg.grid
    d = g.d
    eng = _Engine(cfg)
    c = _broadcast_initial(cfg, u0)
    R = cfg.replicas
    n_exp = cfg.energy_exponent
    s_list = sorted({float(s) for s in cfg.norm_s} | {n_exp, n_exp - cfg.cutoff_delta, 0.0})
    w = g.pair_weight
    pow_tables = {s: g.power(s) * w if s != 0 else w for s in s_list}
    diss_pow = g.power(n_exp + 1) * w
    s_tr = n_exp + 1 - 2.0 / cfg.besov_p

    def energy(cc, table):
        sq = cc.real**2 + cc.imag**2
        return np.sum(np.sum(sq, axis=-d - 1) * table, axis=g.axes)

    feed = None
    if eng.ens is not None:
        gens = replica_generators(cfg.seed, range(replica_offset, replica_offset + R))
        feed = _NoiseFeed(gens, _gauss_shape(cfg, eng.ens), cfg.n_steps)

    critical = (abs(n_exp) < 1e-14 and cfg.kappa > 0 and math.isinf(cfg.cutoff_R))
    rec_t, rec_norms, rec_besov, rec_diss, rec_res, states = [], {s: [] for s in s_list}, [], [], [], []
    diss = np.zeros(R)
    e0 = energy(c, pow_tables[0.0])
    alive = np.ones(R, dtype=bool)
    trip_time = np.full(R, np.inf)
    guard = cfg.guard_level
    cut_sup = eng.cutoff_norm(c)
    max_it = 0
    # the cut-off norm only matters for a finite radius or guard
    watch = not (math.isinf(cfg.cutoff_R) and math.isinf(guard))

    def record(t, cc):
        rec_t.append(t)
        for s in s_list:
            rec_norms[s].append(np.sqrt(energy(cc, pow_tables[s])))
        rec_besov.append(np.atleast_1d(sp.besov_norm(FourierField(g, cc), s_tr, cfg.besov_p)))
        rec_diss.append(diss.copy())
        if critical:
            rec_res.append((energy(cc, pow_tables[0.0]) + 2 * cfg.kappa * diss - e0)
                           / np.where(e0 > 0, e0, 1.0))
        if cfg.keep_states:
            states.append(cc.copy())
        if eng.vector:
            div = np.max(np.abs(sp.kdot(g, cc)))
            if div > 1e-9 * max(np.max(np.abs(cc)), 1e-300) * g.K:
                raise IntegratorError(f"state lost divergence-freeness ({div:.2e})")

    initial_trip = cut_sup > guard
    alive &= ~initial_trip
    trip_time[initial_trip] = 0.0
    record(0.0, c)
    if observer is not None:
        observer(0, 0.0, c)
    for n in range(1, cfg.n_steps + 1):
        gauss = feed.next() if feed is not None else None
        z = eng.zeta_phys(gauss)
        if cfg.scheme == "strat_midpoint":
            new, it = eng.step_mid(c, z, n)
            max_it = max(max_it, it)
            dmid = energy(0.5 * (c + new), diss_pow)
        else:
            new = eng.step_etd(c, z) if cfg.scheme == "ito_etd" else eng.step_em(c, z)
            dmid = energy(c, diss_pow)
        if cfg.check_every_step or n % cfg.record_every == 0 or n == cfg.n_steps:
            _check_finite(new, n)
        diss = diss + np.where(alive, cfg.dt * dmid, 0.0)
        sel = alive.reshape((R,) + (1,) * (d + 1))
        c = np.where(sel, new, c) if not alive.all() else new
        if watch:
            cn = eng.cutoff_norm(c)
            cut_sup = np.where(alive, np.maximum(cut_sup, cn), cut_sup)
            trip = alive & (cn > guard)
            trip_time[trip] = n * cfg.dt
            alive &= ~trip
        if n % cfg.record_every == 0 or n == cfg.n_steps:
            record(n * cfg.dt, c)
        if observer is not None:
            observer(n, n * cfg.dt, c)

    return Trajectory(
        times=np.array(rec_t),
        norms={_skey(s): np.array(v) for s, v in rec_norms.items()},
        besov=np.array(rec_besov),
        dissipation=np.array(rec_diss),
        cutoff_norm_sup=cut_sup,
        tripped=~alive,
        trip_time=trip_time,
        final=FourierField(g, c, solenoidal=eng.vector),
        energy_residual=np.array(rec_res) if critical else None,
        states=states if cfg.keep_states else None,
        max_iterations=max_it,
        meta={"n_steps": cfg.n_steps, "scheme": cfg.scheme, "besov_s": s_tr},
    )
