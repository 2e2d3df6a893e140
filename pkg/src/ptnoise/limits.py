"""Deterministic and exactly solvable limit objects.

* fractional heat flow ``d_t w = -nu (-Delta)^(1+a) w`` (exact multiplier);
* the stationary Ornstein-Uhlenbeck process (exact Gaussian transitions);
* hyperviscous and damped Navier-Stokes/Euler (second-order exponential
  time differencing with an exact linear propagator);
* the closed linear system for per-mode second moments of the noisy
  scalar equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from . import spectral as sp
from .noise import NoiseEnsemble, corrector_limit, corrector_table
from .sde import CutoffFunction, IntegratorError, Trajectory, _skey, nonlinear_coeffs
from .spectral import FourierField, SpectralGrid

__all__ = [
    "LimitParams",
    "fractional_heat",
    "ou_exact_step",
    "hyperviscous_ns",
    "damped_euler",
    "riccati_envelope",
    "fit_riccati_constant",
    "SecondMomentSystem",
    "build_moment_system",
    "moment_ode",
    "moment_recursion",
]


@dataclass(frozen=True)
class LimitParams:
    """Parameters of a limit equation.

    ``coefficient`` is the extra dissipation prefactor: ``nu`` for the
    scalar equation and ``3 nu / 5`` for the three-dimensional vector one.
    """

    nu: float
    a: float = 0.0
    b: float = 0.0
    kappa: float = 0.0
    damping: bool = False
    form: str = "scalar"
    d: int = 3

    @property
    def coefficient(self) -> float:
        if self.damping:
            return self.nu
        if self.form == "scalar":
            return self.nu
        return 3 * self.nu / 5 if self.d == 3 else self.nu / 4


def fractional_heat(omega0: FourierField, nu: float, a: float, t: float) -> FourierField:
    """``w_hat(t, k) = exp(-nu |k|^(2+2a) t) w_hat(0, k)``."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    g = omega0.grid
    return omega0.with_coeffs(omega0.coeffs * np.exp(-nu * g.power(1 + a) * t) * g.mask)


def ou_exact_step(state: FourierField, nu: float, a: float, b: float, dt: float,
                  rng: np.random.Generator) -> FourierField:
    """Exact transition of ``dw_k = -nu |k|^(2+2a) w_k dt + sqrt(2 nu) |k|^(1-2b) dW_k``.

    The stationary per-mode variance is ``|k|^(-2(a+2b))``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    g = state.grid
    lam = nu * g.power(1 + a)
    decay = np.exp(-lam * dt)
    var = g.power(-(a + 2 * b)) * (-np.expm1(-2 * lam * dt))
    noise = sp.sample_gaussian_field(g, np.sqrt(var), rng, state.components, state.batch_shape)
    return state.with_coeffs(decay * state.coeffs + noise.coeffs)


# --- deterministic exponential integrator --------------------------------------

def _phi12(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    phi1 = np.where(small, 1 + z / 2 + z**2 / 6, np.expm1(zs) / zs)
    phi2 = np.where(small, 0.5 + z / 6 + z**2 / 24, (np.expm1(zs) - zs) / zs**2)
    return phi1, phi2


def _run_deterministic(grid: SpectralGrid, u0: FourierField, lam: np.ndarray, nl, dt: float,
                       T: float, record_every: int, norm_s, dissipation_s: float,
                       besov_s: float, besov_p: float, cutoff_norm, guard: float,
                       keep_states: bool = False) -> Trajectory:
    """ETD2 (Cox-Matthews) for ``u' = lam u + nl(u)`` with diagonal ``lam``."""
    if not (dt > 0 and T >= dt):
        raise ValueError(f"need 0 < dt <= T, got dt={dt}, T={T}")
    n_steps = int(round(T / dt))
    z = lam * dt
    E = np.exp(z)
    phi1, phi2 = _phi12(z)
    c = np.asarray(u0.coeffs, dtype=complex)[None] * grid.mask
    d = grid.d
    w = grid.pair_weight
    s_list = sorted({float(s) for s in norm_s} | {0.0})
    tabs = {s: grid.power(s) * w if s != 0 else w for s in s_list}
    dtab = grid.power(dissipation_s) * w

    def energy(cc, tab):
        return np.sum(np.sum(np.abs(cc) ** 2, axis=-d - 1) * tab, axis=grid.axes)

    times, norms, besov, diss_rec, states = [], {s: [] for s in s_list}, [], [], []
    diss = np.zeros(1)
    tripped = False
    trip_time = math.inf
    sup_cut = cutoff_norm(c)

    def record(t):
        times.append(t)
        for s in s_list:
            norms[s].append(np.sqrt(energy(c, tabs[s])))
        besov.append(np.atleast_1d(sp.besov_norm(FourierField(grid, c), besov_s, besov_p)))
        diss_rec.append(diss.copy())
        if keep_states:
            states.append(c.copy())

    record(0.0)
    for n in range(1, n_steps + 1):
        if tripped:
            break
        N0 = nl(c)
        a_ = E * c + dt * phi1 * N0
        new = a_ + dt * phi2 * (nl(a_) - N0)
        diss = diss + 0.5 * dt * (energy(c, dtab) + energy(new, dtab))
        c = new
        if not np.all(np.isfinite(c)):
            raise IntegratorError("non-finite state", n)
        cn = cutoff_norm(c)
        sup_cut = np.maximum(sup_cut, cn)
        if np.any(cn > guard):
            tripped, trip_time = True, n * dt
        if n % record_every == 0 or n == n_steps or tripped:
            record(n * dt)
    return Trajectory(
        times=np.array(times),
        norms={_skey(s): np.array(v) for s, v in norms.items()},
        besov=np.array(besov),
        dissipation=np.array(diss_rec),
        cutoff_norm_sup=np.atleast_1d(sup_cut),
        tripped=np.array([tripped]),
        trip_time=np.array([trip_time]),
        final=FourierField(grid, c, solenoidal=True),
        states=states if keep_states else None,
        meta={"n_steps": n_steps, "scheme": "etd2"},
    )


def _check_vector(u0: FourierField, d: int = 3) -> None:
    if u0.grid.d != d or not u0.is_vector:
        raise ValueError(f"initial data must be a {d}-d vector field")
    if u0.batch_shape:
        raise ValueError("initial data must be unbatched")


def hyperviscous_ns(u0: FourierField, nu: float, a: float, kappa: float = 0.0,
                    cutoff_R: float = math.inf, dt: float = 1e-3, T: float = 1.0, *,
                    b: float = 0.0, cutoff_delta: float = 0.0, coefficient: float | None = None,
                    nonlinear: bool = True, record_every: int = 10, norm_s=(),
                    guard: float | None = None, besov_p: float = 2.0,
                    keep_states: bool = False) -> Trajectory:
    """Integrate ``u' = kappa Delta u - c (-Delta)^(1+a) u - f_R(||u||) Leray(u . grad u)``.

    ``c`` defaults to ``3 nu / 5``. The cut-off norm is
    ``||u||_{H^(2b+a-delta)}``; the guard defaults to ``10 R``. The recorded
    dissipation is ``int ||u||^2_{H^(2b+a+1)} dt``.
    """
    _check_vector(u0, u0.grid.d)
    g = u0.grid
    coef = 3 * nu / 5 if coefficient is None else coefficient
    lam = (-kappa * g.k2 - coef * g.power(1 + a)) * g.mask
    n_exp = 2 * b + a
    cut = CutoffFunction(cutoff_R)
    cpow = g.power(n_exp - cutoff_delta) * g.pair_weight

    def cnorm(c):
        return np.sqrt(np.sum(np.sum(np.abs(c) ** 2, axis=-g.d - 1) * cpow, axis=g.axes))

    def nl(c):
        if not nonlinear:
            return 0.0
        f = cut(cnorm(c)).reshape((-1,) + (1,) * (g.d + 1))
        return -f * nonlinear_coeffs(g, c)

    guard = guard if guard is not None else 10 * cutoff_R
    return _run_deterministic(g, u0, lam, nl, dt, T, record_every, norm_s, n_exp + 1,
                              n_exp + 1 - 2 / besov_p, besov_p, cnorm, guard, keep_states)


def damped_euler(u0: FourierField, nu: float, s: float, dt: float, T: float, *,
                 record_every: int = 10, guard: float = math.inf) -> tuple[Trajectory, dict]:
    """Integrate ``u' + Leray(u . grad u) = -nu u`` and summarize ``||u||_{H^s}``.

    Returns the trajectory and a dict with ``monotone`` (non-increasing
    ``H^s`` norm up to 1e-12 relative), the fitted Riccati constant and the
    envelope values at the record times.
    """
    _check_vector(u0, u0.grid.d)
    if not s > 0:
        raise ValueError(f"s must be positive, got {s}")
    g = u0.grid
    lam = -nu * g.mask.astype(float)
    spow = g.power(s) * g.pair_weight

    def hs(c):
        return np.sqrt(np.sum(np.sum(np.abs(c) ** 2, axis=-g.d - 1) * spow, axis=g.axes))

    tr = _run_deterministic(g, u0, lam, lambda c: -nonlinear_coeffs(g, c), dt, T, record_every,
                            (s,), 0.0, s, 2.0, hs, guard)
    y = tr.norm(s)[:, 0]
    C = fit_riccati_constant(tr.times, y, nu)
    env = riccati_envelope(tr.times, y[0], nu, C)
    summary = {
        "monotone": bool(np.all(np.diff(y) <= 1e-12 * y[0])),
        "riccati_C": C,
        "envelope": env,
        "sup_norm": float(y.max()),
        "guard_tripped": bool(tr.tripped[0]),
    }
    return tr, summary


def riccati_envelope(t: np.ndarray, y0: float, nu: float, C: float) -> np.ndarray:
    """Solution of ``y' = -nu y + C y^2``: ``nu / (C - (C - nu/y0) exp(nu t))``.

    Entries past a finite blow-up time are ``inf``.
    """
    t = np.asarray(t, dtype=float)
    if y0 == 0:
        return np.zeros_like(t)
    den = C - (C - nu / y0) * np.exp(nu * t)
    return np.where(den > 0, nu / np.where(den > 0, den, 1.0), np.inf)


def fit_riccati_constant(t: np.ndarray, y: np.ndarray, nu: float) -> float:
    """Least ``C >= 0`` whose Riccati envelope dominates ``y`` at all samples."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    y0 = y[0]
    sel = (t > 0) & (y > 0)
    if y0 == 0 or not sel.any():
        return 0.0
    et = np.exp(nu * t[sel])
    C = nu * (et / y0 - 1.0 / y[sel]) / (et - 1.0)
    return float(max(0.0, C.max()))


# --- second moments ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SecondMomentSystem:
    """Closed linear system for ``x_xi = E|w_hat(xi)|^2`` of the noisy scalar equation.

    ``dx/dt = -S x + C x`` restricted to ``0 < |xi| <= K``. ``S`` holds
    decay rates ``-2 S_hat(xi) >= 0`` and ``C[xi, eta] =
    (2*pi)^(-d) A^2 theta_(xi-eta)^2 (eta^T P_(xi-eta) eta) |eta|^(4(a+b)) |xi|^(-4b)``
    is the quadratic variation of the noise term. ``outflow[eta]`` is the
    weighted rate at which mass of mode ``eta`` leaves the band.
    """

    modes: np.ndarray
    S_xi: np.ndarray
    coupling: np.ndarray
    weights: np.ndarray
    outflow: np.ndarray
    kappa: float = 0.0
    meta: dict = field(default_factory=dict)

    def index(self, k) -> int:
        hit = np.nonzero(np.all(self.modes == np.asarray(k, dtype=int), axis=1))[0]
        if len(hit) == 0:
            raise KeyError(f"mode {tuple(k)} not in system")
        return int(hit[0])

    @property
    def generator(self) -> np.ndarray:
        k2 = np.sum(self.modes.astype(float) ** 2, axis=1)
        return self.coupling - np.diag(self.S_xi + 2 * self.kappa * k2)


def build_moment_system(ens: NoiseEnsemble, K: int, kind: str = "full",
                        kappa: float = 0.0) -> SecondMomentSystem:
    """Assemble the moment system on ``0 < |xi| <= K`` from the noise ensemble."""
    p = ens.params
    d = ens.d
    grid = SpectralGrid(d, K)
    modes = grid.retained_modes
    table = corrector_table(ens, grid, "scalar", kind)
    S = np.array([-2 * float(grid.get_mode(table.values, k)) for k in modes])
    A2 = ens.amplitude**2
    mf = modes.astype(float)
    n2 = np.sum(mf**2, axis=1)

    def cmat(xi, eta):
        q = xi[:, None, :] - eta[None, :, :]
        th2 = ens.theta_at(q) ** 2
        q2 = np.sum(q**2, axis=2)
        qe = np.einsum("mnd,nd->mn", q, eta)
        e2 = np.sum(eta**2, axis=1)
        quad = e2[None, :] - np.where(q2 > 0, qe**2 / np.where(q2 > 0, q2, 1), 0.0)
        x2 = np.sum(xi**2, axis=1)
        return ((2 * np.pi) ** (-d) * A2 * th2 * quad * e2[None, :] ** (2 * (p.a + p.b))
                * x2[:, None] ** (-2 * p.b))

    C = cmat(mf, mf)
    w = n2 ** (2 * p.b + p.a)
    # weighted mass leaving the band: targets eta + q with |eta + q| > K
    R = p.outer_radius
    rr = np.arange(-(K + R), K + R + 1)
    big = np.stack(np.meshgrid(*([rr] * d), indexing="ij"), -1).reshape(-1, d).astype(float)
    b2 = np.sum(big**2, axis=1)
    outside = big[(b2 > K**2) & (b2 <= (K + R) ** 2)]
    Cout = cmat(outside, mf)
    wout = np.sum(outside**2, axis=1) ** (2 * p.b + p.a)
    outflow = wout @ Cout
    return SecondMomentSystem(modes, S, C, w, outflow, kappa,
                              {"K": K, "kind": kind, "params": p})


def moment_ode(sys: SecondMomentSystem, x0: np.ndarray, T: float,
               times: np.ndarray | None = None) -> dict:
    """Solve the moment system exactly with matrix exponentials.

    Returns ``times``, ``x`` of shape ``(len(times), n)``, the weighted mass
    ``sum_xi w_xi x_xi`` and the cumulative truncation flux, which together
    satisfy ``mass(t) - mass(0) = -flux(t)`` (with ``kappa = 0``).

    Raises
    ------
    ValueError
        On negative initial data or a markedly negative solution.
    """
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < 0):
        raise ValueError("initial second moments must be nonnegative")
    times = np.array([0.0, T]) if times is None else np.asarray(times, dtype=float)
    n = len(x0)
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = sys.generator
    A[n, :n] = sys.outflow
    y0 = np.append(x0, 0.0)
    ys = np.stack([expm(t * A) @ y0 for t in times])
    x = ys[:, :n]
    scale = max(float(np.abs(x).max()), 1e-300)
    if np.any(x < -1e-9 * scale):
        raise ValueError("moment system produced negative second moments")
    return {"times": times, "x": x, "mass": x @ sys.weights, "flux": ys[:, n]}


def moment_recursion(sys: SecondMomentSystem, x0: np.ndarray, dt: float, n_steps: int,
                     scheme: str = "ito_etd") -> np.ndarray:
    """Exact second moments of an Ito time stepper after ``n_steps``.

    Exponential Euler maps ``x -> exp(-dt S) (x + dt C x)`` per step and
    Euler-Maruyama maps ``x -> (1 - dt S/2)^2 x + dt C x``. Comparing with
    :func:`moment_ode` isolates the time-discretization bias from
    Monte-Carlo error.
    """
    k2 = np.sum(sys.modes.astype(float) ** 2, axis=1)
    rate = sys.S_xi + 2 * sys.kappa * k2
    x = np.asarray(x0, dtype=float)
    if scheme == "ito_etd":
        decay = np.exp(-dt * rate)
        for _ in range(n_steps):
            x = decay * (x + dt * (sys.coupling @ x))
    elif scheme == "ito_em":
        # per-mode drift multiplier is 1 + dt (S_hat - kappa k^2) = 1 - dt rate / 2
        amp = (1 - 0.5 * dt * rate) ** 2
        for _ in range(n_steps):
            x = amp * x + dt * (sys.coupling @ x)
    else:
        raise ValueError(f"scheme must be 'ito_etd' or 'ito_em', got {scheme!r}")
    return x


def limit_coefficient(params, form: str) -> float:
    return corrector_limit(params, form)
