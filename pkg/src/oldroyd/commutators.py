"""
Commutator and paraproduct diagnostics on seeded random fields.

Every ratio here is measured, not asserted against a known constant: the
inequalities being probed have unquantified constants, so the useful facts
are that the ratios stay finite and do not drift under grid refinement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lp
from .errors import ContractError
from .spectral import (
    Grid,
    _axes,
    advect,
    bessel_potential,
    divergence,
    fractional_laplacian,
    gradient,
    max_abs,
    norm_l2,
    random_divfree_field,
    random_vector_field,
)

DIV_TOL = 1e-10


def _require_divfree(u):
    un = norm_l2(u)
    if norm_l2(divergence(u)) > DIV_TOL * max(un, 1e-300):
        raise ContractError("the advecting field must be divergence free")


def commutator_lambda(u, v, s):
    """[Lambda^s, u . grad] v = Lambda^s(u . grad v) - u . grad(Lambda^s v)."""
    u, v = u.spectral(), v.spectral()
    _require_divfree(u)
    return fractional_laplacian(advect(u, v), s) - advect(u, fractional_laplacian(v, s))


def lemma210_ratio(u, v, s, n=None):
    """||[Lambda^s, u . grad] v||_{B^(n/2-s)} / (||grad u||_{B^(n/2)} ||v||_{B^(n/2)})."""
    n = n or u.grid.n
    if not -1.0 <= s < n + 1.0:
        raise ValueError(f"s = {s} outside the admissible range [-1, {n + 1})")
    c = commutator_lambda(u, v, s)
    den = lp.besov_norm(gradient(u.spectral()), n / 2.0) * lp.besov_norm(v.spectral(), n / 2.0)
    if den == 0.0:
        return 0.0
    return lp.besov_norm(c, n / 2.0 - s) / den


def block_commutator(u, v, j):
    """[Delta_j, u . grad] v."""
    return lp.dyadic_block(advect(u, v), j) - advect(u, lp.dyadic_block(v, j))


@dataclass
class InequalityReport:
    """Rows of (seed, s, lhs, rhs, ratio); ``ledger`` holds per-band detail
    when a single sample was analysed."""

    rows: list = field(default_factory=list)
    ledger: list = field(default_factory=list)

    def add(self, seed, s, lhs, rhs):
        if lhs < 0 or rhs < 0:
            raise ValueError("inequality sides must be nonnegative")
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
        self.rows.append((seed, float(s), float(lhs), float(rhs), float(ratio)))

    @property
    def ratios(self):
        return np.array([r[4] for r in self.rows])

    @property
    def max_ratio(self):
        return float(self.ratios.max()) if self.rows else 0.0

    @property
    def admissible(self):
        return bool(self.rows) and bool(np.all(np.isfinite(self.ratios)))

    def max_by_s(self):
        out = {}
        for _, s, _, _, ratio in self.rows:
            out[s] = max(out.get(s, 0.0), ratio)
        return out

    def to_csv(self):
        lines = ["seed,s,lhs,rhs,ratio"]
        lines += [f"{seed},{s!r},{lhs!r},{rhs!r},{ratio!r}" for seed, s, lhs, rhs, ratio in self.rows]
        lines.append(f"max,,,,{self.max_ratio!r}")
        return "\n".join(lines) + "\n"


def lemma28_check(u, v, s, seed=None):
    """2^(js) ||[Delta_j, u . grad] v|| per band, summed and divided by
    ||grad u||_{B^(n/2)} ||v||_{B^s}."""
    u, v = u.spectral(), v.spectral()
    _require_divfree(u)
    n = u.grid.n
    if not (-1.0 - n / 2.0 < s <= 1.0 + n / 2.0):
        raise ValueError(f"s = {s} outside (-1 - n/2, 1 + n/2]")
    report = InequalityReport()
    total = 0.0
    for j in lp.cutoff_for(u.grid).j_range:
        val = 2.0 ** (j * s) * norm_l2(block_commutator(u, v, j))
        report.ledger.append((j, val))
        total += val
    rhs = lp.besov_norm(gradient(u), n / 2.0) * lp.besov_norm(v, s)
    report.add(seed, s, total, rhs)
    return report


def _sides_kp(u, v, s):
    if s < 0:
        raise ValueError("Kato-Ponce ratio needs s >= 0")
    u, v = u.spectral(), v.spectral()
    lhs = norm_l2(bessel_potential(advect(u, v), s) - advect(u, bessel_potential(v, s)))
    gu, gv = gradient(u), gradient(v)
    rhs = max_abs(gu) * norm_l2(bessel_potential(gv, s - 1.0)) + max_abs(gv) * norm_l2(bessel_potential(u, s))
    return lhs, rhs


def kato_ponce_ratio(u, v, s):
    """||J^s(u . grad v) - u . grad J^s v|| /
    (||grad u||_inf ||J^(s-1) grad v|| + ||grad v||_inf ||J^s u||).

    L^inf norms are grid maxima of the pointwise magnitude.
    """
    lhs, rhs = _sides_kp(u, v, s)
    return lhs / rhs if rhs > 0 else 0.0


def _phys(f):
    return np.fft.ifftn(f.data, axes=_axes(f.grid)).real


def bony_pieces(u, v, j_max=None):
    """(T_u v, T_v u, R(u, v)) as physical arrays for scalar u, v.

    ``j_max`` truncates the dyadic ladder; with the full ladder the three
    pieces add up to uv exactly.
    """
    u, v = u.spectral(), v.spectral()
    if u.kind != "scalar" or v.kind != "scalar":
        raise ContractError("bony_pieces works on scalar fields")
    cut = lp.cutoff_for(u.grid)
    js = [j for j in cut.j_range if j_max is None or j <= j_max]
    du = {j: _phys(lp.dyadic_block(u, j))[0] for j in js}
    dv = {j: _phys(lp.dyadic_block(v, j))[0] for j in js}
    shape = u.grid.shape
    t_uv, t_vu, rem = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    for j in js:
        su = sum((du[i] for i in js if i <= j - 2), np.zeros(shape))
        sv = sum((dv[i] for i in js if i <= j - 2), np.zeros(shape))
        t_uv += su * dv[j]
        t_vu += sv * du[j]
        for i in (j - 1, j, j + 1):
            if i in du:
                rem += du[j] * dv[i]
    return t_uv, t_vu, rem


def bony_check(u, v, j_max=None):
    """||uv - (T_u v + T_v u + R(u, v))|| / ||uv|| (0 if uv vanishes)."""
    prod = _phys(u.spectral())[0] * _phys(v.spectral())[0]
    t_uv, t_vu, rem = bony_pieces(u, v, j_max)
    den = np.sqrt(np.sum(prod**2))
    if den == 0.0:
        return 0.0
    return float(np.sqrt(np.sum((prod - t_uv - t_vu - rem) ** 2)) / den)


@dataclass(frozen=True)
class EnsembleSpec:
    """Seeded ensemble of (divergence-free u, vector v) pairs."""

    seeds: tuple = tuple(range(50))
    grid: Grid = Grid(2, 64)
    field_band: tuple = (1.0, 4.0)
    s_values: tuple = (-1.0, 0.0, 1.0, 2.0)
    samples: int = 50
    kind: str = "lemma210"

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if len(self.seeds) < self.samples:
            raise ValueError("need at least as many seeds as samples")
        if self.kind not in ENSEMBLE_KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")

    def pairs(self, grid=None):
        grid = grid or self.grid
        for seed in self.seeds[: self.samples]:
            u = random_divfree_field(grid, 2 * seed, band=self.field_band)
            v = random_vector_field(grid, 2 * seed + 1, band=self.field_band)
            yield seed, u, v


def _sides_210(u, v, s):
    n = u.grid.n
    lhs = lp.besov_norm(commutator_lambda(u, v, s), n / 2.0 - s)
    rhs = lp.besov_norm(gradient(u), n / 2.0) * lp.besov_norm(v, n / 2.0)
    return lhs, rhs


def _sides_28(u, v, s):
    r = lemma28_check(u, v, s)
    return r.rows[0][2], r.rows[0][3]


ENSEMBLE_KINDS = {"lemma210": _sides_210, "lemma28": _sides_28, "kato_ponce": _sides_kp}


def run_ensemble(spec, grid=None):
    """InequalityReport over every (seed, s), seeds outer, s inner."""
    sides = ENSEMBLE_KINDS[spec.kind]
    report = InequalityReport()
    for seed, u, v in spec.pairs(grid):
        for s in spec.s_values:
            lhs, rhs = sides(u, v, s)
            report.add(seed, s, lhs, rhs)
    return report


def refinement_change(spec, fine_grid):
    """Relative change of the per-s ensemble max between spec.grid and fine_grid."""
    coarse = run_ensemble(spec).max_by_s()
    fine = run_ensemble(spec, fine_grid).max_by_s()
    out = {}
    for s, c in coarse.items():
        f = fine[s]
        out[s] = 0.0 if c == f else abs(f - c) / max(abs(c), abs(f))
    return out, coarse, fine
