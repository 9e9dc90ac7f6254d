"""
Right-hand sides, auxiliary variables and energy functionals for the
Oldroyd-B variants.

Three variants share one code path:

``GeneralizedNoDamping``
    du/dt = P(-u.grad u + K1 div tau) - nu Lambda^alpha u
    dtau/dt = -u.grad tau - Q(tau, grad u) + K2 D(u)
``ViscousDiffusive``
    du/dt = P(-u.grad u + div tau) + nu Lap u
    dtau/dt = -u.grad tau + D(u) + Lap tau
``InviscidDiffusive``
    the viscous-diffusive system with nu = 0.

The pressure never appears: velocity equations are evolved in projected form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .errors import ConfigError
from .spectral import (
    PARSEVAL_SPECTRAL,
    Field,
    _axes,
    _component_weights,
    _q_arrays,
    advect,
    deformation,
    dealias,
    fractional_laplacian,
    fractional_power_symbol,
    full_tensor,
    leray_project,
    n_components,
    norm_l2,
    sym_pairs,
    tensor_divergence,
)

VARIANTS = ("GeneralizedNoDamping", "ViscousDiffusive", "InviscidDiffusive")
_DEFAULT_NU = {"GeneralizedNoDamping": 1.0, "ViscousDiffusive": 1e-2, "InviscidDiffusive": 0.0}


@dataclass(frozen=True)
class ModelParams:
    """Model constants.  ``nu=None`` picks the variant default."""

    n: int = 2
    nu: float | None = None
    alpha: float = 2.0
    k1: float = 1.0
    k2: float = 1.0
    b: float = 0.0
    variant: str = "GeneralizedNoDamping"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}", "model.variant")
        if self.nu is None:
            object.__setattr__(self, "nu", _DEFAULT_NU[self.variant])
        object.__setattr__(self, "nu", float(self.nu))
        if self.n not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {self.n}", "model.n")
        if self.nu < 0:
            raise ConfigError(f"must be >= 0, got {self.nu}", "model.nu")
        if not 1.0 < self.alpha <= 2.0:
            raise ConfigError(f"must lie in (1, 2], got {self.alpha}", "model.alpha")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ConfigError("coupling constants must be positive", "model.k1" if self.k1 <= 0 else "model.k2")
        if not -1.0 <= self.b <= 1.0:
            raise ConfigError(f"must lie in [-1, 1], got {self.b}", "model.b")
        if self.variant == "GeneralizedNoDamping" and self.nu <= 0:
            raise ConfigError("GeneralizedNoDamping needs nu > 0", "model.nu")
        if self.variant == "InviscidDiffusive" and self.nu != 0:
            raise ConfigError("InviscidDiffusive has nu = 0", "model.nu")
        if self.variant != "GeneralizedNoDamping" and (self.k1 != 1.0 or self.k2 != 1.0):
            raise ConfigError("the diffusive variants fix K1 = K2 = 1", "model.k1")

    @property
    def has_q(self):
        return self.variant == "GeneralizedNoDamping"

    @property
    def diffusive(self):
        return self.variant != "GeneralizedNoDamping"

    def default_n0(self):
        """High/low threshold used by the energy ledgers."""
        return n0_threshold(self.alpha) if self.variant == "GeneralizedNoDamping" else 0


@dataclass(frozen=True)
class State:
    """Velocity (vector) and stress (symmetric tensor) in spectral form at time t."""

    u: Field
    tau: Field
    t: float = 0.0

    @property
    def grid(self):
        return self.u.grid

    def check(self, tol=1e-10):
        """Raise ValueError unless u is divergence free and both fields are mean zero."""
        from .spectral import divergence

        if self.u.kind != "vector" or self.tau.kind != "symtensor":
            raise ValueError("state needs a vector u and a symmetric tensor tau")
        if self.u.space != "spectral" or self.tau.space != "spectral":
            raise ValueError("state fields must be spectral")
        un = norm_l2(self.u)
        div = norm_l2(divergence(self.u))
        if div > tol * max(un, 1e-300) and div > 1e-300:
            raise ValueError(f"u is not divergence free (||div u|| = {div:.3e})")
        if not (self.u.is_mean_zero(1e-10) and self.tau.is_mean_zero(1e-10)):
            raise ValueError("state fields must have zero mean")
        return self

    def with_fields(self, u=None, tau=None, t=None):
        return State(u if u is not None else self.u, tau if tau is not None else self.tau, self.t if t is None else t)


def zero_state(grid):
    from .spectral import zeros

    return State(zeros(grid, "vector"), zeros(grid, "symtensor"), 0.0)


def n0_threshold(alpha):
    """Smallest band index j with 2^j >= 2^(1 / (2 (alpha - 1))).

    For j at or above it, 2^(alpha j) - 2^((2 - alpha) j) >= 2^((2 - alpha) j) / 2.
    """
    if alpha <= 1.0:
        raise ValueError("the frequency threshold diverges for alpha <= 1")
    return int(math.ceil(1.0 / (2.0 * (alpha - 1.0)) - 1e-12))


# ---------------------------------------------------------------------------
# right-hand side on raw arrays (hot path used by the integrator)


def linear_rates(grid, params):
    """Diagonal decay rates (lam_u, lam_tau) so the linear part is -lam * field."""
    if params.variant == "GeneralizedNoDamping":
        lam_u = params.nu * fractional_power_symbol(grid, params.alpha)
        lam_t = np.zeros(grid.shape)
    else:
        lam_u = params.nu * grid.kmag2 if params.nu else np.zeros(grid.shape)
        lam_t = grid.kmag2.astype(float)
    return lam_u, lam_t


def stacked_rates(grid, params):
    lam_u, lam_t = linear_rates(grid, params)
    nu_c = n_components("vector", grid.n)
    nt_c = n_components("symtensor", grid.n)
    return np.concatenate([np.broadcast_to(lam_u, (nu_c,) + grid.shape), np.broadcast_to(lam_t, (nt_c,) + grid.shape)])


def explicit_terms(grid, params, uh, th):
    """Everything except the diagonal linear dissipation, on spectral arrays.

    Returns (Nu, Ntau), both dealiased, Nu divergence free.
    """
    axes = _axes(grid)
    n = grid.n
    ikd = 1j * grid.kd
    mask = grid.dealias_mask
    up = np.fft.ifftn(uh, axes=axes).real
    gu = np.fft.ifftn(uh[:, None] * ikd[None], axes=tuple(a + 1 for a in axes)).real  # gu[i, j] = d_j u_i
    gt = np.fft.ifftn(th[:, None] * ikd[None], axes=tuple(a + 1 for a in axes)).real
    adv_u = np.einsum("j...,ij...->i...", up, gu)
    tau_rhs = -np.einsum("j...,cj...->c...", up, gt)
    if params.has_q:
        tp = np.fft.ifftn(th, axes=axes).real
        tfull = np.empty((n, n) + grid.shape)
        for c, (i, j) in enumerate(sym_pairs(n)):
            tfull[i, j] = tp[c]
            tfull[j, i] = tp[c]
        q = _q_arrays(tfull, gu, params.b)
        for c, (i, j) in enumerate(sym_pairs(n)):
            tau_rhs[c] -= q[i, j]
    nu_hat = np.where(mask, np.fft.fftn(-adv_u, axes=axes), 0.0)
    nt_hat = np.where(mask, np.fft.fftn(tau_rhs, axes=axes), 0.0)

    # linear couplings, exact in spectral space
    tfull_h = np.empty((n, n) + grid.shape, dtype=complex)
    for c, (i, j) in enumerate(sym_pairs(n)):
        tfull_h[i, j] = th[c]
        tfull_h[j, i] = th[c]
    nu_hat = nu_hat + params.k1 * np.einsum("ij...,j...->i...", tfull_h, ikd)
    kdotv = np.sum(grid.kd * nu_hat, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        inv = np.where(grid.kd2 > 0, 1.0 / grid.kd2, 0.0)
    nu_hat = nu_hat - grid.kd * (kdotv * inv)[None]
    guh = uh[:, None] * ikd[None]
    for c, (i, j) in enumerate(sym_pairs(n)):
        nt_hat[c] = nt_hat[c] + params.k2 * 0.5 * (guh[i, j] + guh[j, i])
    # Q has a nonzero spatial mean; dropping it keeps both fields mean zero
    zero = (slice(None),) + grid.zero_index
    nu_hat[zero] = 0.0
    nt_hat[zero] = 0.0
    return nu_hat, nt_hat


def rhs(state, params):
    """(du/dt, dtau/dt) as spectral fields."""
    if state.grid.n != params.n:
        raise ConfigError(f"params are for n={params.n} but the grid has n={state.grid.n}", "model.n")
    state.check()
    grid = state.grid
    nu_hat, nt_hat = explicit_terms(grid, params, state.u.data, state.tau.data)
    lam_u, lam_t = linear_rates(grid, params)
    if params.nu or params.variant == "GeneralizedNoDamping":
        nu_hat = nu_hat - lam_u[None] * state.u.data
    if params.diffusive:
        nt_hat = nt_hat - lam_t[None] * state.tau.data
    return state.u._like(nu_hat), state.tau._like(nt_hat)


# ---------------------------------------------------------------------------
# dissipation-transfer variables


@dataclass(frozen=True)
class AuxState:
    phi: Field
    w: Field


def lambda_inv_p_div(tau):
    """Lambda^-1 P div tau."""
    return fractional_laplacian(leray_project(tensor_divergence(tau)), -1.0)


def auxiliary(state, params):
    """phi = Lambda^-1 P div tau and w = Lambda^(alpha-1) phi - u."""
    phi = lambda_inv_p_div(state.tau)
    w = fractional_laplacian(phi, params.alpha - 1.0) - state.u
    return AuxState(phi, w)


def _q_field(state, params):
    if not params.has_q:
        return None
    from .spectral import gradient, q_bilinear

    q = q_bilinear(state.tau.physical(), gradient(state.u).physical(), params.b)
    return dealias(q.spectral())


def forcings(state, params):
    """(f, g, F) of the transformed system for phi, u and w.

    f = -[Lambda^-1 P div, u.grad] tau - Lambda^-1 P div Q(tau, grad u)
    g = -[P, u.grad] u
    F = -[Lambda^(alpha-1), u.grad] phi + Lambda^(alpha-1) f - g
    """
    u, tau = state.u, state.tau
    a = params.alpha - 1.0
    comm_tau = lambda_inv_p_div(advect(u, tau)) - advect(u, lambda_inv_p_div(tau))
    f = -comm_tau
    q = _q_field(state, params)
    if q is not None:
        f = f - lambda_inv_p_div(q)
    adv_u = advect(u, u)
    g = -(leray_project(adv_u) - adv_u)
    phi = lambda_inv_p_div(tau)
    comm_phi = fractional_laplacian(advect(u, phi), a) - advect(u, fractional_laplacian(phi, a))
    F = -comm_phi + fractional_laplacian(f, a) - g
    return f, g, F


# ---------------------------------------------------------------------------
# energies


def _s_low(params):
    return params.n / 2.0 + 1.0 - params.alpha


def energy_e0(state, params):
    """||(u0, tau0)||_{B^(n/2+1-alpha)} + ||tau0||_{B^(n/2) cap B^(n/2+1-alpha)}."""
    s0 = _s_low(params)
    return (
        lp.besov_norm(state.u, s0, state.tau)
        + lp.besov_norm(state.tau, params.n / 2.0)
        + lp.besov_norm(state.tau, s0)
    )


def energy_e1_parts(state, params):
    """Instantaneous values whose running maxima make up E1."""
    return lp.besov_norm(state.u, _s_low(params), state.tau), lp.besov_norm(state.tau, params.n / 2.0)


def energy_e1(state, params):
    """E1 evaluated on a single state (the L^inf_t norm over one instant)."""
    return sum(energy_e1_parts(state, params))


def energy_e2_integrands(state, params, n0=None):
    """(||u||_{B^(n/2+1)}, ||phi_low||_{B^(n/2+1)}, ||phi_high||_{B^(n/2+2-alpha)})."""
    n0 = params.default_n0() if n0 is None else n0
    phi = lambda_inv_p_div(state.tau)
    low, high = lp.high_low_split(phi, n0)
    half = params.n / 2.0
    return (
        lp.besov_norm(state.u, half + 1.0),
        lp.besov_norm(low, half + 1.0),
        lp.besov_norm(high, half + 2.0 - params.alpha),
    )


def energy_e2(ledger, state, dt):
    """Advance a ledger's running E2 integrals by one trapezoid panel of width dt."""
    return ledger.record(ledger.rows[-1]["t"] + dt if ledger.rows else 0.0, state)


def _cross_power(a, b):
    w = _component_weights(a)
    return np.tensordot(w, (a.data * np.conj(b.data)).real, axes=1) * PARSEVAL_SPECTRAL(a.grid)


def cancellation_residual(state, eps=1e-300):
    """max_j |<D_j P div tau, D_j u> + <D_j D(u), D_j tau>| / (||D_j tau|| ||D_j u|| + eps)."""
    u, tau = state.u, state.tau
    cut, syms = lp._symbols(u.grid)
    c1 = _cross_power(leray_project(tensor_divergence(tau)), u)
    c2 = _cross_power(deformation(u), tau)
    pu = lp._power(u)
    pt = lp._power(tau)
    worst = 0.0
    for j in cut.j_range:
        m2 = syms[j] ** 2
        num = abs(np.sum(m2 * (c1 + c2)))
        den = np.sqrt(np.sum(m2 * pu) * np.sum(m2 * pt)) + eps
        if num == 0.0:
            continue
        worst = max(worst, num / den)
    return float(worst)


def quadratic_energy(state, params):
    """1/2 ||u||^2 / K1 + 1/2 ||tau||^2 / K2."""
    return 0.5 * norm_l2(state.u) ** 2 / params.k1 + 0.5 * norm_l2(state.tau) ** 2 / params.k2


def dissipation_rate_arrays(grid, params, uh, th, rates=None):
    """sum over fields of <lam f, f> / K; equals (nu/K1) ||Lambda^(alpha/2) u||^2
    for the generalized system."""
    lam_u, lam_t = rates if rates is not None else linear_rates(grid, params)
    c = PARSEVAL_SPECTRAL(grid)
    pu = np.sum(np.abs(uh) ** 2, axis=0)
    out = np.sum(lam_u * pu) * c / params.k1
    if params.diffusive:
        w = np.array([1.0 if i == j else 2.0 for i, j in sym_pairs(grid.n)])
        pt = np.tensordot(w, np.abs(th) ** 2, axes=1)
        out += np.sum(lam_t * pt) * c / params.k2
    return float(out)


def dissipation_rate(state, params):
    return dissipation_rate_arrays(state.grid, params, state.u.data, state.tau.data)


# ---------------------------------------------------------------------------
# ledger


LEDGER_COLUMNS = ("t", "E1", "E2_u_int", "E2_phi_low_int", "E2_phi_high_int", "cancellation_residual")


@dataclass
class EnergyLedger:
    """Running E1 maxima and trapezoid E2 integrals at the output cadence."""

    params: ModelParams
    n0: int | None = None
    e0: float | None = None
    rows: list = field(default_factory=list)
    _max_pair: float = 0.0
    _max_tau: float = 0.0
    _last: tuple | None = None

    def __post_init__(self):
        if self.n0 is None:
            self.n0 = self.params.default_n0()

    def record(self, t, state):
        if self.e0 is None:
            self.e0 = energy_e0(state, self.params)
        pair, tau_part = energy_e1_parts(state, self.params)
        self._max_pair = max(self._max_pair, pair)
        self._max_tau = max(self._max_tau, tau_part)
        integrands = np.array(energy_e2_integrands(state, self.params, self.n0))
        if self._last is None:
            running = np.zeros(3)
        else:
            t_prev, f_prev, run_prev = self._last
            running = run_prev + 0.5 * (t - t_prev) * (f_prev + integrands)
        self._last = (t, integrands, running)
        row = {
            "t": float(t),
            "E1": self._max_pair + self._max_tau,
            "E2_u_int": float(running[0]),
            "E2_phi_low_int": float(running[1]),
            "E2_phi_high_int": float(running[2]),
            "cancellation_residual": cancellation_residual(state),
        }
        self.rows.append(row)
        return row

    __call__ = record

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def total_energy(self):
        """E(t) = E1(t) + E2(t) at every recorded time."""
        return self.column("E1") + self.column("E2_u_int") + self.column("E2_phi_low_int") + self.column("E2_phi_high_int")


def fit_quadratic_bound(e_t, e0):
    """Smallest C with E(t) <= C E0 + C E(t)^2 at every sample."""
    e_t = np.asarray(e_t, dtype=float)
    denom = e0 + e_t**2
    if np.all(e_t == 0):
        return 0.0
    return float(np.max(np.where(denom > 0, e_t / np.where(denom > 0, denom, 1.0), np.inf)))

