"""
The experiment drivers behind the CLI: single runs with energy ledgers, the
inviscid-limit viscosity sweep, Besov ledgers of checkpoints and commutator
ensembles.  Each writes CSV ledgers, a JSON summary and (for runs) binary
checkpoints into its output directory.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linprog

from . import checkpoint, lp
from .commutators import EnsembleSpec, refinement_change, run_ensemble
from .config import SIGMA, emit_config
from .dynamics import (
    LEDGER_COLUMNS,
    EnergyLedger,
    State,
    dissipation_rate_arrays,
    energy_e1_parts,
    fit_quadratic_bound,
    quadratic_energy,
)
from .errors import BlowUpError, ConfigError
from .integrator import integrate, save_checkpoint
from .spectral import Grid, max_abs, norm_l2, random_divfree_field, random_symtensor_field

log = logging.getLogger(__name__)

RATE_TOLERANCE = 0.15
DT_CONTROL_LIMIT = 0.20
AUDIT_FACTOR = 2.0
REFINEMENT_LIMIT = 0.25


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def emit_csv(header, rows, path):
    Path(path).write_text(csv_text(header, rows))


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_summary(summary, path):
    Path(path).write_text(json.dumps(_json_safe(summary), indent=2, sort_keys=True) + "\n")


def _out_dir(cfg, out):
    d = Path(out if out is not None else cfg.output.dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# initial data


def initial_state(cfg, grid=None):
    """Seeded band-limited (u0, tau0), each scaled to H^6 norm = amplitude."""
    grid = grid or cfg.make_grid()
    ic = cfg.initial
    try:
        u = random_divfree_field(grid, [ic.seed, 0], ic.slope, ic.band)
        tau = random_symtensor_field(grid, [ic.seed, 1], ic.slope, ic.band)
    except ValueError as exc:
        raise ConfigError(str(exc), "initial.band") from exc
    u = u * (ic.amplitude / lp.sobolev_norm(u, SIGMA))
    tau = tau * (ic.amplitude / lp.sobolev_norm(tau, SIGMA))
    return State(u, tau, 0.0)


def initial_besov_norms(state, params):
    """The initial norms the small-data regime is stated in."""
    pair, tau_half = energy_e1_parts(state, params)
    s0 = params.n / 2.0 + 1.0 - params.alpha
    return {"pair_low": pair, "tau_half": tau_half, "tau_low": lp.besov_norm(state.tau, s0)}


# ---------------------------------------------------------------------------
# single runs


@dataclass
class RunResult:
    trajectory: object
    ledger: EnergyLedger
    status: str
    summary: dict
    out_dir: Path | None = None


TRAJECTORY_COLUMNS = ("t", "u_l2", "tau_l2", "quadratic_energy", "dissipation_int", "max_u")


def _trajectory_rows(traj, params):
    rows = []
    for (t, s), q in zip(traj.snapshots, traj.integral):
        rows.append((t, norm_l2(s.u), norm_l2(s.tau), quadratic_energy(s, params), q, max_abs(s.u)))
    return rows


def _dissipation(grid, params, uh, th):
    return dissipation_rate_arrays(grid, params, uh, th)


def _run(cfg, params, state0, out=None, label="simulate"):
    grid = state0.grid
    ledger = EnergyLedger(params)
    status = "ok"
    error = None
    checkpoints = []
    every = cfg.output.checkpoint_every
    d = _out_dir(cfg, out) if out is not False else None

    class _Checkpointer:
        def __init__(self):
            self.k = 0

        def __call__(self, t, s):
            if d is not None and every and self.k % every == 0:
                step = int(round(t / cfg.stepper.dt))
                name = f"checkpoint_{step:08d}.oldb"
                save_checkpoint(d / name, s, params, cfg.stepper, step)
                checkpoints.append(name)
            self.k += 1

    try:
        traj = integrate(state0, params, cfg.stepper, observers=[ledger, _Checkpointer()], integrand=_dissipation)
    except BlowUpError as exc:
        traj = exc.trajectory
        status = "blowup"
        error = str(exc)
        log.warning("%s: %s", label, exc)
    final_t, final = traj.snapshots[-1]
    e_t = ledger.total_energy()
    e1 = ledger.column("E1")
    summary = {
        "experiment": label,
        "status": status,
        "error": error,
        "variant": params.variant,
        "t_final": final_t,
        "steps": traj.steps,
        "e0": ledger.e0,
        "e1_initial": float(e1[0]),
        "e1_max": float(e1.max()),
        "e1_growth": float(e1.max() / e1[0]) if e1[0] > 0 else 0.0,
        "energy_max": float(e_t.max()),
        "cancellation_residual_max": float(ledger.column("cancellation_residual").max()),
        "initial_besov": initial_besov_norms(state0, params),
        "checkpoints": checkpoints,
    }
    if d is not None:
        emit_config(cfg, d / "config.json")
        emit_csv(LEDGER_COLUMNS, [[r[c] for c in LEDGER_COLUMNS] for r in ledger.rows], d / "energy.csv")
        emit_csv(TRAJECTORY_COLUMNS, _trajectory_rows(traj, params), d / "trajectory.csv")
        save_checkpoint(d / "final.oldb", final, params, cfg.stepper, traj.steps)
    return RunResult(traj, ledger, status, summary, d)


def run_simulate(cfg, out=None, state0=None):
    """Evolve the configured variant, writing energy.csv, trajectory.csv,
    final.oldb and summary.json.  ``out=False`` skips all file output."""
    params = cfg.make_params()
    state0 = state0 if state0 is not None else initial_state(cfg)
    res = _run(cfg, params, state0, out, "simulate")
    if res.out_dir is not None:
        write_summary(res.summary, res.out_dir / "summary.json")
    return res


def run_energy_audit(cfg, out=None, state0=None):
    """GeneralizedNoDamping run with the E(t) <= C E0 + C E(t)^2 fit.

    The run is flagged when E(t) exceeds AUDIT_FACTOR * C * E0 at some
    output time, i.e. when the quadratic term is no longer negligible.
    """
    if cfg.model.variant != "GeneralizedNoDamping":
        raise ConfigError("the energy audit runs the GeneralizedNoDamping variant", "model.variant")
    params = cfg.make_params()
    state0 = state0 if state0 is not None else initial_state(cfg)
    res = _run(cfg, params, state0, out, "energy-audit")
    e_t = res.ledger.total_energy()
    e0 = res.ledger.e0
    c_fit = fit_quadratic_bound(e_t, e0)
    threshold = AUDIT_FACTOR * c_fit * e0
    flag = bool(res.status != "ok" or (e0 > 0 and np.any(e_t > threshold * (1.0 + 1e-12))))
    res.summary.update({"c_fit": c_fit, "threshold": threshold, "flag": flag})
    if res.out_dir is not None:
        write_summary(res.summary, res.out_dir / "summary.json")
    return res


# ---------------------------------------------------------------------------
# viscosity sweep


@dataclass
class RateReport:
    nu: list
    max_g: list
    max_g_half_dt: list
    dt_error: list
    valid: list
    slope: float
    intercept: float
    fit_residual: float
    nu0_estimate: float | None
    c1: float
    c2: float
    times: np.ndarray = None
    g_t: dict = field(default_factory=dict)
    m_t: np.ndarray = None
    warnings: list = field(default_factory=list)

    @property
    def smallest_valid_g(self):
        vals = [g for g, ok in zip(self.max_g, self.valid) if ok]
        return min(vals) if vals else None

    def rows(self):
        return list(zip(self.nu, self.max_g, self.max_g_half_dt, self.dt_error, [int(v) for v in self.valid]))


def _evolve(args):
    state0, params, stepper = args
    try:
        traj = integrate(state0, params, stepper)
        return traj.snapshots, None
    except BlowUpError as exc:
        return None, str(exc)


def _map(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def _g_series(member, reference, s):
    return np.array(
        [lp.sobolev_norm(a.u - b.u, s) + lp.sobolev_norm(a.tau - b.tau, s) for (_, a), (_, b) in zip(member, reference)]
    )


def fit_growth_constants(cases):
    """Smallest (C1, C2) >= 0, in scaled units, with
    dG/dt - nu ||u||_{H^(s+2)} <= C1 M G + C2 G^2 at every sample.

    ``cases`` is a list of (nu, times, G, M, u_high).  dG/dt uses centred
    differences on the output cadence.  The objective weighs each constant
    by the mean size of its column so neither is favoured by units.
    """
    a_rows, b_rows = [], []
    for nu, t, g, m, uh in cases:
        dg = np.gradient(g, t)
        lhs = dg - nu * uh
        for i in range(len(t)):
            a_rows.append((m[i] * g[i], g[i] ** 2))
            b_rows.append(lhs[i])
    a = np.array(a_rows)
    b = np.array(b_rows)
    need = b > 0
    if not np.any(need):
        return 0.0, 0.0
    scale = np.maximum(np.abs(a).mean(axis=0), 1e-300)
    res = linprog(
        c=np.ones(2),
        A_ub=-(a[need] / scale),
        b_ub=-b[need],
        bounds=[(0, None), (0, None)],
        method="highs",
    )
    if not res.success:
        return np.inf, np.inf
    c1, c2 = res.x / scale
    return float(c1), float(c2)


def nu0_formula(times, u_sigma, m_t, c1, c2):
    """(8 C2 int_0^T ||u||_{H^sigma} exp(C1 int_t^T M) dt)^-1; None if C2 = 0."""
    times = np.asarray(times, dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (m_t[1:] + m_t[:-1]))])
    tail = cum[-1] - cum
    integral = np.trapezoid(u_sigma * np.exp(c1 * tail), x=times)
    if c2 <= 0 or integral <= 0:
        return None
    return float(1.0 / (8.0 * c2 * integral))


def run_nu_sweep(cfg, out=None, state0=None):
    """ViscousDiffusive members against one InviscidDiffusive reference on
    shared data, grid and time step; see RateReport."""
    grid = cfg.make_grid()
    state0 = state0 if state0 is not None else initial_state(cfg, grid)
    s = cfg.s_diff
    stepper = cfg.stepper
    ref_params = cfg.make_params("InviscidDiffusive", 0.0)
    nus = list(cfg.nu_list)
    members = [cfg.make_params("ViscousDiffusive", nu) for nu in nus]
    jobs = [(state0, ref_params, stepper)] + [(state0, p, stepper) for p in members]
    half = None
    if cfg.dt_control:
        half = stepper.with_dt(stepper.dt / 2.0)
        half = type(stepper)(half.dt, half.scheme, half.t_end, 2 * stepper.output_every, half.cfl_safety)
        jobs += [(state0, ref_params, half)] + [(state0, p, half) for p in members]
    results = _map(_evolve, jobs, cfg.workers)
    ref, ref_err = results[0]
    if ref is None:
        raise BlowUpError(float("nan"))
    times = np.array([t for t, _ in ref])
    warnings = []
    g_t, max_g, max_half, dt_err, valid = {}, [], [], [], []
    for i, nu in enumerate(nus):
        snaps, err = results[1 + i]
        if snaps is None:
            warnings.append(f"nu={nu!r} blew up ({err}); excluded from the fit")
            g_t[nu] = None
            max_g.append(None)
            max_half.append(None)
            dt_err.append(None)
            valid.append(False)
            continue
        g = _g_series(snaps, ref, s)
        g_t[nu] = g
        max_g.append(float(g.max()))
        ok = True
        if half is not None:
            ref_h = results[1 + len(nus)][0]
            snaps_h = results[2 + len(nus) + i][0]
            if ref_h is None or snaps_h is None:
                max_half.append(None)
                dt_err.append(None)
                ok = False
            else:
                gh = float(_g_series(snaps_h, ref_h, s).max())
                max_half.append(gh)
                e = abs(max_g[-1] - gh) / gh if gh > 0 else 0.0
                dt_err.append(e)
                if e > DT_CONTROL_LIMIT:
                    ok = False
                    warnings.append(f"nu={nu!r}: time-step error {e:.3g} exceeds {DT_CONTROL_LIMIT}; excluded")
        else:
            max_half.append(None)
            dt_err.append(None)
        valid.append(ok)

    fit_nu = np.array([nu for nu, ok in zip(nus, valid) if ok])
    fit_g = np.array([g for g, ok in zip(max_g, valid) if ok])
    if len(fit_nu) >= 3 and np.all(fit_g > 0):
        slope, intercept = np.polyfit(np.log(fit_nu), np.log(fit_g), 1)
        resid = np.log(fit_g) - (slope * np.log(fit_nu) + intercept)
        fit_residual = float(np.sqrt(np.mean(resid**2)))
    else:
        slope = intercept = fit_residual = float("nan")
        warnings.append("fewer than 3 valid viscosities; no rate fit")
    ordered = [g for g in max_g if g is not None]
    if any(b > a for a, b in zip(ordered, ordered[1:])):
        warnings.append("max_t G is not monotone in nu over the sweep")

    m_t = np.array([lp.sobolev_norm(st.u, s + 1) + lp.sobolev_norm(st.tau, s + 1) for _, st in ref])
    u_high = np.array([lp.sobolev_norm(st.u, s + 2) for _, st in ref])
    u_sigma = np.array([lp.sobolev_norm(st.u, SIGMA) for _, st in ref])
    cases = [(nu, times, g_t[nu], m_t, u_high) for nu, ok in zip(nus, valid) if ok]
    c1, c2 = fit_growth_constants(cases) if cases else (float("nan"), float("nan"))
    nu0 = nu0_formula(times, u_sigma, m_t, c1, c2) if cases and np.isfinite(c1) else None

    report = RateReport(
        nu=nus,
        max_g=max_g,
        max_g_half_dt=max_half,
        dt_error=dt_err,
        valid=valid,
        slope=float(slope),
        intercept=float(intercept),
        fit_residual=fit_residual,
        nu0_estimate=nu0,
        c1=c1,
        c2=c2,
        times=times,
        g_t=g_t,
        m_t=m_t,
        warnings=warnings,
    )
    if out is not False:
        d = _out_dir(cfg, out)
        emit_config(cfg, d / "config.json")
        emit_csv(("nu", "max_G", "max_G_half_dt", "dt_rel_error", "valid"), report.rows(), d / "rates.csv")
        header = ["t"] + [f"G_nu={nu!r}" for nu in nus]
        rows = [[t] + [g_t[nu][k] if g_t[nu] is not None else None for nu in nus] for k, t in enumerate(times)]
        emit_csv(header, rows, d / "g_t.csv")
        emit_csv(("t", "M", "u_H_s+2", "u_H_sigma"), zip(times, m_t, u_high, u_sigma), d / "reference.csv")
        write_summary(
            {
                "experiment": "nu-sweep",
                "s": s,
                "slope": report.slope,
                "intercept": report.intercept,
                "fit_residual": report.fit_residual,
                "valid_nu": [nu for nu, ok in zip(nus, valid) if ok],
                "c1_fitted": c1,
                "c2_fitted": c2,
                "nu0_estimate": nu0,
                "nu0_label": "empirical estimate from fitted constants",
                "nu0_note": None if nu0 is not None else "fitted C2 is 0: the sampled data imply no finite threshold",
                "warnings": warnings,
                "slope_within_tolerance": bool(abs(report.slope - 1.0) <= RATE_TOLERANCE),
            },
            d / "summary.json",
        )
    return report


def sweep_passes(report):
    """Rate within tolerance and the dt control below its limit for the smallest nu."""
    if not np.isfinite(report.slope) or abs(report.slope - 1.0) > RATE_TOLERANCE:
        return False
    errs = [e for e, ok in zip(report.dt_error, report.valid) if ok and e is not None]
    return all(e <= DT_CONTROL_LIMIT for e in errs)


# ---------------------------------------------------------------------------
# Besov ledger of a checkpoint


def besov_ledger_of_checkpoint(path, component="u", s=1.0, dealias_fraction=2.0 / 3.0):
    fields = checkpoint.load_fields(path, dealias_fraction)
    if len(fields) == 1:
        f = fields[0]
    else:
        f = fields[{"u": 0, "tau": 1}[component]]
    return lp.besov_ledger(f.spectral(), s)


def run_besov_norm(cfg, out=None, path=None, component=None, s=None):
    path = path or cfg.besov.field
    if not path:
        raise ConfigError("no checkpoint given", "besov.field")
    if not Path(path).exists():
        raise ConfigError(f"no such file {path}", "besov.field")
    component = component or cfg.besov.component
    s = cfg.besov.s if s is None else s
    rows, total = besov_ledger_of_checkpoint(path, component, s, cfg.grid.dealias_fraction)
    text = csv_text(("j", "weighted_block_norm"), rows + [("total", total)])
    if out is not False:
        d = _out_dir(cfg, out)
        (d / "besov.csv").write_text(text)
    return rows, total, text


# ---------------------------------------------------------------------------
# commutator ensembles


def ensemble_spec(cfg):
    e = cfg.ensemble
    seeds = tuple(range(cfg.initial.seed, cfg.initial.seed + e.samples))
    return EnsembleSpec(seeds, cfg.make_grid(), e.band, e.s_values, e.samples, e.kind)


def run_commutator_test(cfg, out=None):
    spec = ensemble_spec(cfg)
    report = run_ensemble(spec)
    summary = {
        "experiment": "commutator-test",
        "kind": spec.kind,
        "grid_size": spec.grid.size,
        "band": list(spec.field_band),
        "samples": spec.samples,
        "max_ratio_by_s": {repr(k): v for k, v in report.max_by_s().items()},
        "admissible": report.admissible,
    }
    if cfg.ensemble.refine_size:
        fine = Grid(spec.grid.n, cfg.ensemble.refine_size, spec.grid.dealias_fraction)
        change, _, fine_max = refinement_change(spec, fine)
        summary["refine_size"] = fine.size
        summary["fine_max_ratio_by_s"] = {repr(k): v for k, v in fine_max.items()}
        summary["refinement_change_by_s"] = {repr(k): v for k, v in change.items()}
        summary["refinement_stable"] = bool(all(c < REFINEMENT_LIMIT for c in change.values()))
    if out is not False:
        d = _out_dir(cfg, out)
        emit_config(cfg, d / "config.json")
        (d / "report.csv").write_text(report.to_csv())
        write_summary(summary, d / "summary.json")
    return report, summary
