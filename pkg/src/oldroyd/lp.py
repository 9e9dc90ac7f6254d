"""
Discrete homogeneous Littlewood-Paley decomposition and Besov/Sobolev norms.

Blocks are Fourier multipliers phi(2^-j |k|) with phi(r) = chi(r/2) - chi(r)
and chi a smooth non-increasing radial profile equal to 1 for r <= 3/4 and
0 for r >= 4/3.  Only p = 2, r = 1 Besov norms are provided, so every norm
is a weighted sum over spectral coefficients and needs no inverse FFT.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ContractError
from .spectral import PARSEVAL_SPECTRAL, _component_weights, apply_multiplier

CHI_INNER = 3.0 / 4.0
CHI_OUTER = 4.0 / 3.0
J_MIN = -2


class OutOfRangeWarning(UserWarning):
    """A dyadic block index outside the grid's resolvable range was requested."""


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    with np.errstate(over="ignore"):
        out[mid] = 1.0 / (1.0 + np.exp(1.0 / tm - 1.0 / (1.0 - tm)))
    return out


def chi(r):
    return smooth_step((CHI_OUTER - np.asarray(r, dtype=float)) / (CHI_OUTER - CHI_INNER))


def phi(r):
    r = np.asarray(r, dtype=float)
    return chi(r / 2.0) - chi(r)


@dataclass(frozen=True)
class DyadicCutoff:
    """Resolved band range of a grid: j_min = -2, j_max = ceil(log2(size/2))."""

    j_min: int
    j_max: int

    @classmethod
    def for_grid(cls, grid):
        return cls(J_MIN, int(np.ceil(np.log2(grid.size / 2))))

    @property
    def j_range(self):
        return range(self.j_min, self.j_max + 1)

    def safe_annulus(self):
        """|k| interval where the partition of unity is exact."""
        return 2.0**self.j_min * CHI_INNER, 2.0**self.j_max * CHI_INNER

    def __contains__(self, j):
        return self.j_min <= j <= self.j_max


@dataclass(frozen=True)
class BesovSpec:
    """Norm selector: homogeneous B^s_{2,1} or inhomogeneous H^s."""

    s: float
    kind: str = "homogeneous"
    p: int = 2
    r: int = 1

    def __post_init__(self):
        if self.p != 2 or self.r != 1:
            raise ValueError("only p = 2, r = 1 Besov norms are supported")
        if self.kind not in ("homogeneous", "sobolev"):
            raise ValueError(f"unknown norm kind {self.kind!r}")


@lru_cache(maxsize=32)
def _symbols(grid):
    cut = DyadicCutoff.for_grid(grid)
    syms = {}
    for j in cut.j_range:
        m = phi(grid.kmag * 2.0**-j)
        m[grid.zero_index] = 0.0
        syms[j] = m
    return cut, syms


def cutoff_for(grid):
    return _symbols(grid)[0]


def block_symbol(grid, j):
    cut, syms = _symbols(grid)
    if j not in cut:
        return None
    return syms[j]


def low_pass_symbol(grid, j):
    m = chi(grid.kmag * 2.0**-j)
    m[grid.zero_index] = 0.0
    return m


def _zero_like(f):
    return f._like(np.zeros_like(f.data))


def dyadic_block(f, j):
    """Delta_j f.  Out-of-range j gives the zero field and an OutOfRangeWarning."""
    if f.space != "spectral":
        raise ContractError("dyadic_block expects a spectral field")
    m = block_symbol(f.grid, j)
    if m is None:
        cut = cutoff_for(f.grid)
        warnings.warn(f"block {j} is outside the resolved range [{cut.j_min}, {cut.j_max}]", OutOfRangeWarning, stacklevel=2)
        return _zero_like(f)
    return apply_multiplier(f, m)


def low_pass(f, j):
    """S_j f = chi(2^-j D) f, which equals the sum of blocks j' < j on the grid."""
    if f.space != "spectral":
        raise ContractError("low_pass expects a spectral field")
    return apply_multiplier(f, low_pass_symbol(f.grid, j))


def _power(f):
    """Per-mode weighted |f_hat|^2 summed over components, scaled to an integral."""
    w = _component_weights(f)
    return np.tensordot(w, np.abs(f.data) ** 2, axes=1) * PARSEVAL_SPECTRAL(f.grid)


def block_norms(f):
    """(j values, ||Delta_j f||_L2) over the resolved range."""
    if f.space != "spectral":
        f = f.spectral()
    cut, syms = _symbols(f.grid)
    pw = _power(f)
    js = np.array(list(cut.j_range))
    norms = np.array([np.sqrt(np.sum(syms[j] ** 2 * pw)) for j in js])
    return js, norms


def pair_block_norms(*fields):
    """Block norms of a tuple of fields, ||(Delta_j a, Delta_j b, ...)||_L2."""
    js = None
    total = 0.0
    for f in fields:
        js, nf = block_norms(f)
        total = total + nf**2
    return js, np.sqrt(total)


def _require_mean_zero(f):
    if not f.spectral().is_mean_zero():
        raise ContractError("homogeneous Besov norms need mean-zero fields")


def besov_norm(f, spec, *others):
    """||f||_{B^s_{2,1}} = sum_j 2^{js} ||Delta_j f||_L2.

    ``spec`` is a BesovSpec or a plain exponent.  Extra fields are measured
    jointly with f, block by block, as the pair norm ||(f, g)||.
    """
    if not isinstance(spec, BesovSpec):
        spec = BesovSpec(float(spec))
    if spec.kind == "sobolev":
        return float(np.sqrt(sum(sobolev_norm(g, spec.s) ** 2 for g in (f,) + others)))
    for g in (f,) + others:
        _require_mean_zero(g)
    js, norms = pair_block_norms(f, *others)
    return float(np.sum(2.0 ** (js * spec.s) * norms))


def besov_ledger(f, s):
    """(j, 2^{js} ||Delta_j f||) rows and their sum."""
    _require_mean_zero(f)
    js, norms = block_norms(f)
    weighted = 2.0 ** (js * float(s)) * norms
    return list(zip(js.tolist(), weighted.tolist())), float(np.sum(weighted))


def sobolev_norm(f, s):
    """||f||_{H^s} with symbol (1 + |k|^2)^(s/2)."""
    pw = _power(f.spectral())
    return float(np.sqrt(np.sum((1.0 + f.grid.kmag2) ** float(s) * pw)))


def high_low_split(f, n0):
    """(f_low, f_high): blocks j <= n0 and the rest, recombining to f exactly."""
    if f.space != "spectral":
        raise ContractError("high_low_split expects a spectral field")
    cut, syms = _symbols(f.grid)
    m = np.zeros(f.grid.shape)
    for j in cut.j_range:
        if j <= n0:
            m = m + syms[j]
    if n0 >= cut.j_max:
        # every resolved block is low; keep the whole field there
        m = np.ones(f.grid.shape)
    low = apply_multiplier(f, m)
    return low, f - low


def chemin_lerner_norm(trajectory, times, s, q):
    """sum_j 2^{js} ||Delta_j f||_{L^q(0,T; L^2)} for q in {1, inf}.

    Time integrals use the trapezoid rule on the given (uniform or not) times.
    """
    if q not in (1, np.inf, float("inf")):
        raise ValueError("q must be 1 or inf")
    rows = np.array([block_norms(f)[1] for f in trajectory])
    js = block_norms(trajectory[0])[0]
    if q == 1:
        per = np.trapezoid(rows, x=np.asarray(times, dtype=float), axis=0) if len(times) > 1 else np.zeros(len(js))
    else:
        per = rows.max(axis=0)
    return float(np.sum(2.0 ** (js * float(s)) * per))


def lq_besov_norm(trajectory, times, s, q):
    """|| ||f(t)||_{B^s} ||_{L^q(0,T)}, the time norm taken after the block sum."""
    vals = np.array([besov_norm(f, s) for f in trajectory])
    if q == 1:
        return float(np.trapezoid(vals, x=np.asarray(times, dtype=float))) if len(vals) > 1 else 0.0
    return float(vals.max())


def dominant_block(f):
    js, norms = block_norms(f)
    return int(js[np.argmax(norms)])


def bernstein_ratio(f, k, direction="high", j=None):
    """sup_{|a|=k} ||d^a f|| / (2^{jk} ||f||) for a field concentrated near 2^j.

    ``direction="high"`` returns that ratio (audited against the upper
    Bernstein bound); ``"low"`` returns its reciprocal (audited against the
    lower bound on an annulus).  Both should stay below a j-independent
    constant.
    """
    if direction not in ("high", "low"):
        raise ValueError("direction must be 'high' or 'low'")
    f = f.spectral()
    if j is None:
        j = dominant_block(f)
    base = np.sqrt(np.sum(_power(f)))
    if base == 0.0:
        raise ValueError("bernstein_ratio of the zero field")
    best = 0.0
    for alpha in itertools.combinations_with_replacement(range(f.grid.n), k):
        sym = np.ones(f.grid.shape)
        for axis in alpha:
            sym = sym * f.grid.kd[axis]
        val = np.sqrt(np.sum(sym**2 * _power(f)))
        best = max(best, val)
    ratio = best / (2.0 ** (j * k) * base)
    return ratio if direction == "high" else 1.0 / ratio
