"""
Integrating-factor Runge-Kutta time stepping.

The diagonal dissipation (nu Lambda^alpha on u, the Laplacian on tau where
present) is integrated exactly through exp(-lam dt); the remaining terms,
including the linear u/tau coupling, go through the explicit RK tableau on
the transformed variables.  An optional scalar integrand can be carried
along with the same stages, which gives a quadrature of matching order.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint
from .dynamics import ModelParams, State, explicit_terms, stacked_rates
from .errors import BlowUpError, CFLError, ConfigError
from .spectral import Field, _axes, leray_project, n_components

SCHEMES = ("IFRK2", "IFRK4")
CFL_EPS = 1e-12


@dataclass(frozen=True)
class StepperConfig:
    dt: float = 1e-2
    scheme: str = "IFRK4"
    t_end: float = 1.0
    output_every: int = 10
    cfl_safety: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"must be positive, got {self.dt}", "stepper.dt")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}", "stepper.scheme")
        if self.t_end < 0:
            raise ConfigError(f"must be >= 0, got {self.t_end}", "stepper.t_end")
        if int(self.output_every) != self.output_every or self.output_every < 1:
            raise ConfigError(f"must be a positive integer, got {self.output_every}", "stepper.output_every")
        if not 0.0 < self.cfl_safety < 1.0:
            raise ConfigError(f"must lie in (0, 1), got {self.cfl_safety}", "stepper.cfl_safety")
        self.n_steps  # validates t_end / dt

    @property
    def n_steps(self):
        steps = int(round(self.t_end / self.dt))
        if abs(steps * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ConfigError(f"t_end={self.t_end} is not a multiple of dt={self.dt}", "stepper.t_end")
        return steps

    def with_dt(self, dt):
        return StepperConfig(dt, self.scheme, self.t_end, self.output_every, self.cfl_safety)


@dataclass
class Trajectory:
    """Snapshots at the output cadence plus whatever the observers recorded."""

    snapshots: list = field(default_factory=list)
    ledger: object = None
    integral: list = field(default_factory=list)
    steps: int = 0

    @property
    def times(self):
        return np.array([t for t, _ in self.snapshots])

    @property
    def final(self):
        return self.snapshots[-1][1]


def cfl_estimate(state, grid=None, cap=None):
    """dx / (max |u| + eps), optionally capped."""
    grid = grid or state.grid
    up = np.fft.ifftn(state.u.data, axes=_axes(grid)).real
    return _cfl_from_physical(grid, up, cap)


def _cfl_from_physical(grid, up, cap=None):
    umax = float(np.sqrt(np.max(np.sum(up**2, axis=0))))
    dt = grid.dx / (umax + CFL_EPS)
    return min(dt, cap) if cap is not None else dt


class _Stepper:
    """Array-level IF-RK stepper bound to one (grid, params, config)."""

    def __init__(self, grid, params, config, integrand=None, explicit=True):
        self.grid = grid
        self.params = params
        self.config = config
        self.integrand = integrand
        self.explicit = explicit
        self.nu_c = n_components("vector", grid.n)
        lam = stacked_rates(grid, params)
        dt = config.dt
        self.E = np.exp(-lam * dt)
        self.E2 = np.exp(-lam * (0.5 * dt))

    def N(self, y):
        if not self.explicit:
            return np.zeros_like(y)
        nu_hat, nt_hat = explicit_terms(self.grid, self.params, y[: self.nu_c], y[self.nu_c :])
        return np.concatenate([nu_hat, nt_hat])

    def g(self, y):
        return self.integrand(self.grid, self.params, y[: self.nu_c], y[self.nu_c :])

    def step(self, y):
        """One step; returns (y_next, integrand increment or None)."""
        dt = self.config.dt
        E, E2 = self.E, self.E2
        q = None
        if self.config.scheme == "IFRK4":
            k1 = self.N(y)
            a = E2 * (y + 0.5 * dt * k1)
            k2 = self.N(a)
            b = E2 * y + 0.5 * dt * k2
            k3 = self.N(b)
            c = E * y + dt * (E2 * k3)
            k4 = self.N(c)
            y1 = E * y + (dt / 6.0) * (E * k1 + 2.0 * E2 * (k2 + k3) + k4)
            if self.integrand is not None:
                q = (dt / 6.0) * (self.g(y) + 2.0 * self.g(a) + 2.0 * self.g(b) + self.g(c))
        else:
            k1 = self.N(y)
            a = E * (y + dt * k1)
            k2 = self.N(a)
            y1 = E * y + (0.5 * dt) * (E * k1 + k2)
            if self.integrand is not None:
                q = 0.5 * dt * (self.g(y) + self.g(a))
        # divergence cleanup on u
        u = leray_project(Field(self.grid, y1[: self.nu_c], "vector", "spectral")).data
        y1 = np.concatenate([u, y1[self.nu_c :]])
        return y1, q

    def check_cfl(self, y, t):
        if not self.explicit:
            return
        up = np.fft.ifftn(y[: self.nu_c], axes=_axes(self.grid)).real
        admissible = self.config.cfl_safety * _cfl_from_physical(self.grid, up)
        if self.config.dt > admissible:
            raise CFLError(self.config.dt, admissible, t)


def _pack(state):
    return np.concatenate([state.u.data, state.tau.data])


def _unpack(grid, y, nu_c, t):
    return State(
        Field(grid, y[:nu_c].copy(), "vector", "spectral"),
        Field(grid, y[nu_c:].copy(), "symtensor", "spectral"),
        t,
    )


def step(state, params, config, explicit=True):
    """Advance one step of size config.dt.

    ``explicit=False`` drops everything but the diagonal dissipation, which
    is then integrated exactly.
    """
    st = _Stepper(state.grid, params, config, explicit=explicit)
    y = _pack(state)
    st.check_cfl(y, state.t)
    y1, _ = st.step(y)
    if not np.all(np.isfinite(y1)):
        raise BlowUpError(state.t)
    return _unpack(state.grid, y1, st.nu_c, state.t + config.dt)


def integrate(state0, params, config, observers=(), integrand=None, start_step=0, explicit=True):
    """Advance state0 to t_end, recording snapshots every ``output_every`` steps.

    Observers are called as ``obs(t, state)`` at every output time (the first
    and the last included); an observer with a ``rows`` attribute is attached
    to the trajectory as its ledger.  ``integrand(grid, params, uh, th)`` is
    integrated along with the RK stages and its running value stored in
    ``trajectory.integral``.  Times are ``(start_step + k) * dt`` so a restart
    from a checkpoint continues on the same time lattice.
    """
    if state0.grid.n != params.n:
        raise ConfigError(f"params are for n={params.n} but the grid has n={state0.grid.n}", "model.n")
    state0.check()
    grid = state0.grid
    st = _Stepper(grid, params, config, integrand=integrand, explicit=explicit)
    traj = Trajectory()
    for obs in observers:
        if hasattr(obs, "rows"):
            traj.ledger = obs
    dt = config.dt
    y = _pack(state0)
    q = 0.0

    def emit(k, y):
        t = (start_step + k) * dt if k else state0.t
        s = _unpack(grid, y, st.nu_c, t)
        traj.snapshots.append((t, s))
        traj.integral.append(q)
        for obs in observers:
            obs(t, s)

    emit(0, y)
    n_steps = config.n_steps
    for k in range(1, n_steps + 1):
        t_prev = (start_step + k - 1) * dt if k > 1 else state0.t
        st.check_cfl(y, t_prev)
        y_next, dq = st.step(y)
        if not np.all(np.isfinite(y_next)):
            traj.steps = k - 1
            raise BlowUpError(t_prev, traj)
        y = y_next
        if dq is not None:
            q += dq
        if k % config.output_every == 0 or k == n_steps:
            emit(k, y)
    traj.steps = n_steps
    return traj


def save_checkpoint(path, state, params, config=None, step_count=0):
    """Binary fields plus a JSON sidecar ``<path>.json`` with the run metadata."""
    path = Path(path)
    checkpoint.save_fields(path, [state.u, state.tau])
    meta = {
        "t": state.t,
        "step": int(step_count),
        "params": asdict(params),
        "config": asdict(config) if config is not None else None,
    }
    path.with_name(path.name + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path):
    """(state, params, config or None, step count) from save_checkpoint output."""
    path = Path(path)
    u, tau = checkpoint.load_fields(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    params = ModelParams(**meta["params"])
    config = StepperConfig(**meta["config"]) if meta.get("config") else None
    return State(u.spectral(), tau.spectral(), meta["t"]), params, config, meta["step"]
