"""
Periodic-grid fields and pointwise-in-frequency operators.

Fields live on the torus [0, 2*pi)^n with an isotropic power-of-two grid.
Every dynamical field is real valued and mean zero; spectral coefficients
are stored as full complex FFT arrays.

Normalization
-------------
Forward transforms are unnormalized and the inverse carries 1/size**n, so a
physical field f with coefficients fh satisfies Parseval in the form

    int f g dx = (2*pi)**n / size**(2*n) * sum_k fh(k) conj(gh(k)).

``PARSEVAL_*`` below is the single place this constant is defined.

Tensor conventions
------------------
The gradient of a vector field is stored row-major with component
``i * n + j`` holding d_j u_i.  Symmetric tensors keep the upper triangle in
row-major order: (0,0), (0,1), (1,1) in 2D and (0,0), (0,1), (0,2), (1,1),
(1,2), (2,2) in 3D.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ContractError

KINDS = ("scalar", "vector", "symtensor", "tensor")
SPACES = ("physical", "spectral")


def sym_pairs(n):
    """Upper-triangle (i, j) index pairs in storage order."""
    return [(i, j) for i in range(n) for j in range(i, n)]


def sym_index(n, i, j):
    """Storage slot of tau_ij (either order) in a symmetric tensor."""
    if i > j:
        i, j = j, i
    return sym_pairs(n).index((i, j))


def n_components(kind, n):
    return {"scalar": 1, "vector": n, "symtensor": n * (n + 1) // 2, "tensor": n * n}[kind]


def kind_from_components(ncomp, n):
    for kind in KINDS:
        if n_components(kind, n) == ncomp:
            return kind
    raise ContractError(f"no field kind has {ncomp} components in {n}D")


@dataclass(frozen=True)
class Grid:
    """Isotropic periodic grid of side 2*pi.

    Parameters
    ----------
    n : int
        Spatial dimension, 2 or 3.
    size : int
        Points per axis; a power of two, at least 16.
    dealias_fraction : float
        Modes with any |k_i| above ``dealias_fraction * size / 2`` are
        removed after every nonlinear product.
    """

    n: int
    size: int
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"grid.n must be 2 or 3, got {self.n}")
        if self.size < 16 or self.size & (self.size - 1):
            raise ValueError(f"grid.size must be a power of two >= 16, got {self.size}")
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ValueError(f"grid.dealias_fraction must lie in (0, 1], got {self.dealias_fraction}")

    @property
    def shape(self):
        return (self.size,) * self.n

    @property
    def dx(self):
        return 2.0 * np.pi / self.size

    @property
    def volume(self):
        return (2.0 * np.pi) ** self.n

    @cached_property
    def k(self):
        """Integer wavenumbers, shape (n, size, ..., size), in [-size/2, size/2)."""
        k1 = np.fft.fftfreq(self.size, 1.0 / self.size)
        return np.array(np.meshgrid(*([k1] * self.n), indexing="ij"))

    @cached_property
    def kd(self):
        """Wavenumbers for first derivatives; the Nyquist entry is zeroed so
        derivatives of real fields stay real."""
        kd = self.k.copy()
        kd[kd == -self.size // 2] = 0.0
        return kd

    @cached_property
    def kmag2(self):
        return np.sum(self.k**2, axis=0)

    @cached_property
    def kmag(self):
        return np.sqrt(self.kmag2)

    @cached_property
    def kd2(self):
        return np.sum(self.kd**2, axis=0)

    @cached_property
    def dealias_mask(self):
        cutoff = self.dealias_fraction * (self.size / 2)
        return np.all(np.abs(self.k) <= cutoff, axis=0)

    @cached_property
    def coords(self):
        x1 = self.dx * np.arange(self.size)
        return np.array(np.meshgrid(*([x1] * self.n), indexing="ij"))

    @property
    def zero_index(self):
        return (0,) * self.n


# Parseval constants: physical sums and spectral sums to integrals over the torus.
def PARSEVAL_PHYSICAL(grid):
    return grid.volume / grid.size**grid.n


def PARSEVAL_SPECTRAL(grid):
    return grid.volume / grid.size ** (2 * grid.n)


@dataclass(frozen=True, eq=False)
class Field:
    """A scalar, vector or tensor field on a grid.

    ``data`` has shape ``(ncomp, size, ..., size)``; it is real in physical
    space and complex in spectral space.  The array is frozen on
    construction.
    """

    grid: Grid
    data: np.ndarray
    kind: str = "scalar"
    space: str = "physical"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown field kind {self.kind!r}")
        if self.space not in SPACES:
            raise ContractError(f"unknown representation {self.space!r}")
        expect = (n_components(self.kind, self.grid.n),) + self.grid.shape
        if self.data.shape != expect:
            raise ContractError(f"{self.kind} field needs data shape {expect}, got {self.data.shape}")
        if self.space == "physical" and np.iscomplexobj(self.data):
            raise ContractError("physical fields must be real")
        self.data.flags.writeable = False

    @property
    def ncomp(self):
        return self.data.shape[0]

    def _like(self, data, kind=None, space=None):
        return Field(self.grid, data, kind or self.kind, space or self.space)

    def _check_compatible(self, other):
        if not isinstance(other, Field):
            return NotImplemented
        if other.grid != self.grid or other.kind != self.kind or other.space != self.space:
            raise ContractError("fields differ in grid, kind or representation")
        return True

    def __add__(self, other):
        if self._check_compatible(other) is NotImplemented:
            return NotImplemented
        return self._like(self.data + other.data)

    def __sub__(self, other):
        if self._check_compatible(other) is NotImplemented:
            return NotImplemented
        return self._like(self.data - other.data)

    def __mul__(self, c):
        if isinstance(c, Field):
            return NotImplemented
        return self._like(self.data * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.data)

    def spectral(self):
        """This field in spectral form (converting if needed)."""
        return self if self.space == "spectral" else to_spectral(self)

    def physical(self):
        """This field in physical form (converting if needed)."""
        return self if self.space == "physical" else to_physical(self)

    def mean(self):
        """Per-component mean value."""
        if self.space == "spectral":
            return (self.data[(slice(None),) + self.grid.zero_index] / self.grid.size**self.grid.n).real
        return self.data.reshape(self.ncomp, -1).mean(axis=1)

    def is_mean_zero(self, rtol=1e-12):
        scale = max(norm_l2(self), 1e-300)
        return bool(np.all(np.abs(self.mean()) * np.sqrt(self.grid.volume) <= rtol * scale + 1e-300))


def zeros(grid, kind="scalar", space="spectral"):
    dtype = complex if space == "spectral" else float
    return Field(grid, np.zeros((n_components(kind, grid.n),) + grid.shape, dtype=dtype), kind, space)


def from_components(grid, components, kind=None):
    """Build a physical field from a list of per-component arrays."""
    data = np.array([np.broadcast_to(np.asarray(c, dtype=float), grid.shape) for c in components])
    return Field(grid, data, kind or kind_from_components(len(components), grid.n), "physical")


def _axes(grid):
    return tuple(range(1, grid.n + 1))


def to_spectral(f):
    if f.space != "physical":
        raise ContractError("to_spectral expects a physical field")
    return f._like(np.fft.fftn(f.data, axes=_axes(f.grid)), space="spectral")


def to_physical(f):
    if f.space != "spectral":
        raise ContractError("to_physical expects a spectral field")
    return f._like(np.fft.ifftn(f.data, axes=_axes(f.grid)).real, space="physical")


def _require_spectral(*fields):
    for f in fields:
        if f.space != "spectral":
            raise ContractError("operator expects spectral fields")


def apply_multiplier(f, m):
    """Multiply every component of a spectral field by the symbol ``m(k)``."""
    _require_spectral(f)
    return f._like(f.data * m[None])


def fractional_power_symbol(grid, s):
    """|k|**s with the zero mode mapped to 1 for s == 0 and to 0 otherwise."""
    with np.errstate(divide="ignore"):
        m = np.where(grid.kmag2 > 0, grid.kmag ** float(s), 0.0)
    if s == 0:
        m[grid.zero_index] = 1.0
    return m


def fractional_laplacian(f, s):
    """Lambda^s f, Lambda = sqrt(-Laplacian)."""
    _require_spectral(f)
    if s < 0 and not f.is_mean_zero():
        raise ContractError("Lambda^s with s < 0 is undefined on fields with nonzero mean")
    return apply_multiplier(f, fractional_power_symbol(f.grid, s))


def bessel_potential(f, s):
    """J^s f with symbol (1 + |k|^2)^(s/2)."""
    return apply_multiplier(f, (1.0 + f.grid.kmag2) ** (0.5 * s))


def laplacian(f):
    return apply_multiplier(f, -f.grid.kmag2)


def gradient(f):
    """Gradient of a scalar (-> vector) or a vector (-> tensor, slot i*n+j = d_j f_i)."""
    _require_spectral(f)
    if f.kind not in ("scalar", "vector"):
        raise ContractError("gradient is defined for scalar and vector fields")
    ikd = 1j * f.grid.kd
    out = (f.data[:, None] * ikd[None]).reshape((-1,) + f.grid.shape)
    return Field(f.grid, out, "vector" if f.kind == "scalar" else "tensor", "spectral")


def divergence(v):
    _require_spectral(v)
    if v.kind != "vector":
        raise ContractError("divergence expects a vector field")
    out = np.sum(1j * v.grid.kd * v.data, axis=0)
    return Field(v.grid, out[None], "scalar", "spectral")


def full_tensor(t):
    """Component array of shape (n, n, ...) for a symmetric or full tensor field."""
    n = t.grid.n
    if t.kind == "tensor":
        return t.data.reshape((n, n) + t.grid.shape)
    if t.kind != "symtensor":
        raise ContractError("expected a tensor field")
    full = np.empty((n, n) + t.grid.shape, dtype=t.data.dtype)
    for c, (i, j) in enumerate(sym_pairs(n)):
        full[i, j] = t.data[c]
        full[j, i] = t.data[c]
    return full


def sym_from_full(grid, full, space):
    data = np.array([full[i, j] for i, j in sym_pairs(grid.n)])
    return Field(grid, data, "symtensor", space)


def tensor_divergence(t):
    """(div tau)_i = sum_j d_j tau_ij."""
    _require_spectral(t)
    full = full_tensor(t)
    out = np.einsum("ij...,j...->i...", full, 1j * t.grid.kd)
    return Field(t.grid, out, "vector", "spectral")


def leray_project(v):
    """P v = v - k (k . v) / |k|^2, mode by mode."""
    _require_spectral(v)
    if v.kind != "vector":
        raise ContractError("leray_project expects a vector field")
    kd = v.grid.kd
    with np.errstate(invalid="ignore", divide="ignore"):
        inv = np.where(v.grid.kd2 > 0, 1.0 / v.grid.kd2, 0.0)
    kdotv = np.sum(kd * v.data, axis=0)
    return v._like(v.data - kd * (kdotv * inv)[None])


def deformation(u):
    """D(u) = (grad u + grad u^T) / 2 as a symmetric tensor."""
    g = full_tensor(gradient(u))
    return sym_from_full(u.grid, 0.5 * (g + np.swapaxes(g, 0, 1)), u.space)


def vorticity(u):
    """Omega(u) = (grad u - grad u^T) / 2 as a full tensor."""
    g = full_tensor(gradient(u))
    om = 0.5 * (g - np.swapaxes(g, 0, 1))
    return Field(u.grid, om.reshape((-1,) + u.grid.shape), "tensor", "spectral")


def q_bilinear(tau, grad_u, b):
    """Q(tau, grad u) = tau Omega - Omega tau + b (D tau + tau D), pointwise.

    Both inputs must be physical; the result is an undealiased physical
    symmetric tensor.
    """
    if tau.space != "physical" or grad_u.space != "physical":
        raise ContractError("q_bilinear works on physical fields")
    if tau.kind != "symtensor" or grad_u.kind != "tensor":
        raise ContractError("q_bilinear expects (symtensor, tensor)")
    return sym_from_full(tau.grid, _q_arrays(full_tensor(tau), full_tensor(grad_u), b), "physical")


def _q_arrays(T, G, b):
    om = 0.5 * (G - np.swapaxes(G, 0, 1))
    q = np.einsum("ik...,kj...->ij...", T, om) - np.einsum("ik...,kj...->ij...", om, T)
    if b:
        d = 0.5 * (G + np.swapaxes(G, 0, 1))
        q = q + b * (np.einsum("ik...,kj...->ij...", d, T) + np.einsum("ik...,kj...->ij...", T, d))
    return q


def dealias(f):
    _require_spectral(f)
    return f._like(np.where(f.grid.dealias_mask[None], f.data, 0.0))


def advect(u, f):
    """Dealiased u . grad f for spectral u (vector) and f (any kind)."""
    _require_spectral(u, f)
    grid = u.grid
    up = np.fft.ifftn(u.data, axes=_axes(grid)).real
    ikd = 1j * grid.kd
    out = np.zeros_like(f.data)
    for c in range(f.ncomp):
        dfc = np.fft.ifftn(f.data[c][None] * ikd, axes=_axes(grid)).real
        out[c] = np.fft.fftn(np.sum(up * dfc, axis=0))
    return dealias(f._like(out))


def _component_weights(f):
    w = np.ones(f.ncomp)
    if f.kind == "symtensor":
        for c, (i, j) in enumerate(sym_pairs(f.grid.n)):
            if i != j:
                w[c] = 2.0
    return w


def inner_l2(f, g):
    """L^2 inner product over the torus (tensors contract fully)."""
    if f.space != g.space or f.kind != g.kind or f.grid != g.grid:
        raise ContractError("inner_l2 needs fields of the same grid, kind and representation")
    w = _component_weights(f)
    if f.space == "physical":
        per = np.sum((f.data * g.data).reshape(f.ncomp, -1), axis=1)
        return float(np.dot(w, per) * PARSEVAL_PHYSICAL(f.grid))
    per = np.sum((f.data * np.conj(g.data)).real.reshape(f.ncomp, -1), axis=1)
    return float(np.dot(w, per) * PARSEVAL_SPECTRAL(f.grid))


def norm_l2(f):
    return float(np.sqrt(max(inner_l2(f, f), 0.0)))


def _half_space_modes(n, kmax):
    """Integer vectors with max |k_i| <= kmax and first nonzero entry
    positive, in lexicographic order (independent of the grid)."""
    r = np.arange(-kmax, kmax + 1)
    ks = np.array(np.meshgrid(*([r] * n), indexing="ij")).reshape(n, -1).T
    keep = []
    for k in ks:
        nz = np.flatnonzero(k)
        if nz.size and k[nz[0]] > 0:
            keep.append(k)
    return np.array(keep)


def _random_modes(grid, seed, slope, band, ncomp, project):
    lo, hi = float(band[0]), float(band[1])
    if hi < lo or hi < 1.0:
        raise ValueError(f"empty band {band}")
    modes = _half_space_modes(grid.n, int(np.floor(hi)))
    mag = np.sqrt(np.sum(modes**2, axis=1)) if len(modes) else np.zeros(0)
    sel = (mag >= lo) & (mag <= hi)
    if not np.any(sel):
        raise ValueError(f"band {band} contains no lattice modes")
    if np.any(np.abs(modes[sel]) > grid.dealias_fraction * grid.size / 2):
        raise ValueError(f"band {band} exceeds the dealiased range of a {grid.size}-point grid")
    rng = np.random.default_rng(seed)
    # draw for every candidate mode so the sequence depends only on (seed, n, floor(hi))
    coef = rng.standard_normal((len(modes), ncomp)) + 1j * rng.standard_normal((len(modes), ncomp))
    data = np.zeros((ncomp,) + grid.shape, dtype=complex)
    scale = grid.size**grid.n
    for k, m, c in zip(modes[sel], mag[sel], coef[sel]):
        c = c * m**slope
        if project:
            kk = k / m
            c = c - kk * np.dot(kk, c)
        idx = tuple(int(x) % grid.size for x in k)
        nidx = tuple(int(-x) % grid.size for x in k)
        data[(slice(None),) + idx] = scale * c
        data[(slice(None),) + nidx] = scale * np.conj(c)
    return data


def random_divfree_field(grid, seed, spectrum_slope=0.0, band=(1.0, 4.0)):
    """Seeded divergence-free, mean-zero vector field with spectral amplitude
    |k|**spectrum_slope on the annulus band[0] <= |k| <= band[1].

    The physical field depends only on (seed, band, slope), not on the grid
    size, as long as the band fits in the dealiased range.
    """
    data = _random_modes(grid, seed, spectrum_slope, band, grid.n, project=True)
    return Field(grid, data, "vector", "spectral")


def random_vector_field(grid, seed, spectrum_slope=0.0, band=(1.0, 4.0)):
    """Like random_divfree_field but without the solenoidal projection."""
    data = _random_modes(grid, seed, spectrum_slope, band, grid.n, project=False)
    return Field(grid, data, "vector", "spectral")


def random_symtensor_field(grid, seed, spectrum_slope=0.0, band=(1.0, 4.0)):
    """Seeded mean-zero symmetric tensor field on the given annulus."""
    data = _random_modes(grid, seed, spectrum_slope, band, n_components("symtensor", grid.n), project=False)
    return Field(grid, data, "symtensor", "spectral")


def random_scalar_field(grid, seed, spectrum_slope=0.0, band=(1.0, 4.0)):
    data = _random_modes(grid, seed, spectrum_slope, band, 1, project=False)
    return Field(grid, data, "scalar", "spectral")


def max_abs(f):
    """Grid maximum of the pointwise Euclidean (Frobenius for tensors) magnitude."""
    p = f.physical()
    w = _component_weights(p)
    return float(np.sqrt(np.max(np.tensordot(w, p.data**2, axes=1))))
