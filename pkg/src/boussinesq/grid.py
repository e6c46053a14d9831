"""Periodic spectral discretization of R^n.

The whole space is replaced by the box ``[-W, W)^n`` with periodic
boundary conditions.  Frequencies on axis ``a`` are ``pi * j / W_a`` for
integer ``j`` in ``[-N_a/2, N_a/2)``; spectra are stored in FFT order
(the order returned by :func:`numpy.fft.fftfreq`).

The transform is normalized so that the discrete Parseval identity
carries no factor::

    sum_k |u_hat_k|^2 == cell_volume * sum_x |u(x)|^2

i.e. ``u_hat(xi) ~ (2W)^{-n/2} * integral u(x) exp(-i x.xi) dx`` with the
integral replaced by the rectangle rule.

Fields carry a leading component axis: ``values.shape == (N, *points)``.
The pointwise E-norm of a component vector is the l_q norm.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from .errors import GridError, NotElliptic, SideMismatch

PHYSICAL = "physical"
SPECTRAL = "spectral"

_FFT_WORKERS = 1


def set_threads(n: int) -> int:
    """Set the worker count used by FFTs; ``0`` means all cores."""
    global _FFT_WORKERS
    _FFT_WORKERS = (os.cpu_count() or 1) if n == 0 else max(1, int(n))
    return _FFT_WORKERS


def get_threads() -> int:
    return _FFT_WORKERS


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic grid on ``[-W, W)^n`` together with its frequency lattice."""

    n_dims: int
    points: tuple[int, ...]
    half_width: tuple[float, ...]

    def __post_init__(self):
        if self.n_dims not in (1, 2, 3):
            raise GridError(f"n_dims must be 1, 2 or 3, got {self.n_dims}")
        if len(self.points) != self.n_dims or len(self.half_width) != self.n_dims:
            raise GridError("points and half_width need one entry per axis")
        for n in self.points:
            if int(n) != n or n < 4 or not _is_pow2(int(n)):
                raise GridError(f"points per axis must be a power of two >= 4, got {n}")
        for w in self.half_width:
            if not (np.isfinite(w) and w > 0):
                raise GridError(f"half_width must be positive, got {w}")

    @cached_property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(n) for n in self.points)

    @cached_property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def axes(self) -> tuple[int, ...]:
        """Trailing array axes holding the spatial dimensions."""
        return tuple(range(-self.n_dims, 0))

    @cached_property
    def dx(self) -> tuple[float, ...]:
        return tuple(2.0 * w / n for w, n in zip(self.half_width, self.points))

    @cached_property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    @cached_property
    def volume(self) -> float:
        return float(np.prod([2.0 * w for w in self.half_width]))

    def axis_coords(self, axis: int) -> np.ndarray:
        n, w = self.points[axis], self.half_width[axis]
        return -w + np.arange(n) * (2.0 * w / n)

    def axis_index(self, axis: int) -> np.ndarray:
        """Integer frequency labels ``j`` in FFT order."""
        n = self.points[axis]
        return np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)

    def axis_freqs(self, axis: int) -> np.ndarray:
        return np.pi * self.axis_index(axis) / self.half_width[axis]

    def lattice(self, axis: int) -> np.ndarray:
        """Sorted frequencies of one axis, ``-N/2 .. N/2-1`` times ``pi/W``."""
        return np.sort(self.axis_freqs(axis))

    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*[self.axis_coords(a) for a in range(self.n_dims)],
                                 indexing="ij"))

    def xi(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*[self.axis_freqs(a) for a in range(self.n_dims)],
                                 indexing="ij"))

    def xi_sq(self) -> np.ndarray:
        return _cached_xi_sq(self)

    def _phase(self) -> np.ndarray:
        return _cached_phase(self)

    def nyquist_mask(self) -> np.ndarray:
        """True on modes that sit on the Nyquist plane of some axis."""
        masks = [self.axis_index(a) == -self.points[a] // 2 for a in range(self.n_dims)]
        grids = np.meshgrid(*masks, indexing="ij")
        return np.logical_or.reduce(grids)

    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep ``|j| < N/3`` on every axis."""
        keep = [np.abs(self.axis_index(a)) < self.points[a] / 3.0 for a in range(self.n_dims)]
        return np.logical_and.reduce(np.meshgrid(*keep, indexing="ij"))

    # Transforms on raw arrays with trailing spatial axes.

    def fft(self, values: np.ndarray) -> np.ndarray:
        scale = self.cell_volume / np.sqrt(self.volume)
        out = sfft.fftn(values, axes=self.axes, workers=_FFT_WORKERS)
        return out * (scale * self._phase())

    def ifft(self, values: np.ndarray) -> np.ndarray:
        scale = self.size / np.sqrt(self.volume)
        return sfft.ifftn(values * self._phase(), axes=self.axes,
                          workers=_FFT_WORKERS) * scale


@lru_cache(maxsize=64)
def _cached_xi_sq(grid: SpectralGrid) -> np.ndarray:
    out = sum(k * k for k in grid.xi())
    out.flags.writeable = False
    return out


@lru_cache(maxsize=64)
def _cached_phase(grid: SpectralGrid) -> np.ndarray:
    # exp(+-i xi W) == (-1)^j, real on every axis
    sign = [np.where(grid.axis_index(a) % 2 == 0, 1.0, -1.0) for a in range(grid.n_dims)]
    out = np.prod(np.meshgrid(*sign, indexing="ij"), axis=0)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=256)
def _cached_bessel(grid: SpectralGrid, s: float) -> np.ndarray:
    out = (1.0 + grid.xi_sq()) ** (0.5 * s)
    out.flags.writeable = False
    return out


def make_grid(n_dims: int, points, half_width) -> SpectralGrid:
    """Build a grid; scalar ``points``/``half_width`` apply to every axis.

    >>> make_grid(1, 8, np.pi).lattice(0)
    array([-4., -3., -2., -1.,  0.,  1.,  2.,  3.])
    """
    if n_dims not in (1, 2, 3):
        raise GridError(f"n_dims must be 1, 2 or 3, got {n_dims}")
    pts = np.broadcast_to(np.asarray(points), (n_dims,)).tolist()
    hw = np.broadcast_to(np.asarray(half_width, dtype=float), (n_dims,)).tolist()
    return SpectralGrid(n_dims, tuple(int(p) if float(p).is_integer() else p for p in pts),
                        tuple(hw))


@dataclass(frozen=True, eq=False)
class Field:
    """E-valued samples on a grid, physical or spectral side.

    ``values`` has shape ``(components, *grid.shape)`` and is complex.
    """

    grid: SpectralGrid
    values: np.ndarray
    side: str = PHYSICAL

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape == self.grid.shape:
            v = v[None]
        if v.ndim != self.grid.n_dims + 1 or v.shape[1:] != self.grid.shape:
            raise GridError(f"values of shape {v.shape} do not fit grid {self.grid.shape}")
        if self.side not in (PHYSICAL, SPECTRAL):
            raise GridError(f"unknown side {self.side!r}")
        v = v.copy() if v is self.values else v
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def components(self) -> int:
        return self.values.shape[0]

    def is_real(self, rtol: float = 0.0) -> bool:
        if self.side != PHYSICAL:
            raise SideMismatch("is_real needs a physical-side field")
        scale = np.max(np.abs(self.values)) if self.values.size else 0.0
        return bool(np.max(np.abs(self.values.imag), initial=0.0) <= rtol * scale)

    def __add__(self, other: "Field") -> "Field":
        _check_compatible(self, other)
        return Field(self.grid, self.values + other.values, self.side)

    def __sub__(self, other: "Field") -> "Field":
        _check_compatible(self, other)
        return Field(self.grid, self.values - other.values, self.side)

    def __mul__(self, c) -> "Field":
        return Field(self.grid, self.values * c, self.side)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values, self.side)


def _check_compatible(a: Field, b: Field):
    if a.grid != b.grid:
        raise GridError("fields live on different grids")
    if a.side != b.side:
        raise SideMismatch("fields are on different sides")
    if a.components != b.components:
        raise GridError("fields have different component counts")


def zeros(grid: SpectralGrid, components: int = 1) -> Field:
    return Field(grid, np.zeros((components, *grid.shape), dtype=np.complex128))


def gaussian(grid: SpectralGrid, amplitude=1.0, width=1.0, center=None) -> Field:
    """``amplitude * exp(-|x - center|^2 / width^2)``; a sequence of amplitudes
    gives one component per entry."""
    amps = np.atleast_1d(np.asarray(amplitude, dtype=float))
    c = np.zeros(grid.n_dims) if center is None else np.broadcast_to(
        np.asarray(center, dtype=float), (grid.n_dims,))
    r2 = sum((x - ci) ** 2 for x, ci in zip(grid.coords(), c))
    bump = np.exp(-r2 / float(width) ** 2)
    return Field(grid, amps[(slice(None),) + (None,) * grid.n_dims] * bump)


def plane_mode(grid: SpectralGrid, k, amplitude=1.0, kind: str = "cos") -> Field:
    """Single real mode ``amplitude * cos(k.x)`` (or ``sin``, or complex ``exp``)."""
    amps = np.atleast_1d(np.asarray(amplitude, dtype=float))
    kv = np.broadcast_to(np.asarray(k, dtype=float), (grid.n_dims,))
    phase = sum(ki * x for ki, x in zip(kv, grid.coords()))
    wave = {"cos": np.cos, "sin": np.sin, "exp": lambda a: np.exp(1j * a)}[kind](phase)
    return Field(grid, amps[(slice(None),) + (None,) * grid.n_dims] * wave)


def transform(field: Field, direction: str) -> Field:
    """Unitary forward (physical -> spectral) or inverse transform."""
    if direction == "forward":
        if field.side != PHYSICAL:
            raise SideMismatch("forward transform needs a physical-side field")
        return Field(field.grid, field.grid.fft(field.values), SPECTRAL)
    if direction == "inverse":
        if field.side != SPECTRAL:
            raise SideMismatch("inverse transform needs a spectral-side field")
        return Field(field.grid, field.grid.ifft(field.values), PHYSICAL)
    raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")


def to_physical(field: Field) -> Field:
    return field if field.side == PHYSICAL else transform(field, "inverse")


def to_spectral(field: Field) -> Field:
    return field if field.side == SPECTRAL else transform(field, "forward")


@dataclass(frozen=True, eq=False)
class EllipticForm:
    """Constant-coefficient form ``L(xi) = sum a_ij xi_i xi_j``.

    The coefficient matrix is symmetrized on construction and must be
    positive definite; ``m1``/``m2`` are its extreme eigenvalues.
    """

    coeffs: np.ndarray
    m1: float = field(init=False)
    m2: float = field(init=False)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        a = 0.5 * (a + a.T)
        m1, m2 = check_ellipticity(a)
        a.flags.writeable = False
        object.__setattr__(self, "coeffs", a)
        object.__setattr__(self, "m1", m1)
        object.__setattr__(self, "m2", m2)

    @classmethod
    def identity(cls, n_dims: int) -> "EllipticForm":
        return cls(np.eye(n_dims))

    @property
    def n_dims(self) -> int:
        return self.coeffs.shape[0]

    def __call__(self, xi) -> np.ndarray:
        """Evaluate on a tuple of per-axis frequency arrays (broadcasting)."""
        a = self.coeffs
        n = self.n_dims
        if len(xi) != n:
            raise GridError(f"expected {n} frequency components, got {len(xi)}")
        return sum(a[i, j] * xi[i] * xi[j] for i in range(n) for j in range(n))

    def on_grid(self, grid: SpectralGrid) -> np.ndarray:
        return self(grid.xi())


def check_ellipticity(coeffs) -> tuple[float, float]:
    """Return ``(m1, m2)``, the extreme eigenvalues of the symmetrized matrix.

    Raises
    ------
    NotElliptic
        If the smallest eigenvalue is not positive.
    """
    a = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GridError(f"coefficient matrix must be square, got shape {a.shape}")
    if a.shape[0] > 3:
        raise GridError("at most three spatial dimensions are supported")
    if not np.all(np.isfinite(a)):
        raise NotElliptic("coefficient matrix has non-finite entries")
    ev = np.linalg.eigvalsh(0.5 * (a + a.T))
    m1, m2 = float(ev[0]), float(ev[-1])
    if m1 <= 0.0:
        raise NotElliptic(f"form is not positive definite (smallest eigenvalue {m1:g})")
    return m1, m2


def elliptic_symbol(form: EllipticForm, xi: Sequence[float]) -> float:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (form.n_dims,):
        raise GridError(f"xi must have {form.n_dims} entries")
    return float(xi @ form.coeffs @ xi)


def bessel_multiplier(grid: SpectralGrid, s: float) -> np.ndarray:
    return _cached_bessel(grid, float(s))


def bessel_apply(field: Field, s: float) -> Field:
    """Scale every mode by ``(1 + |xi|^2)^{s/2}``."""
    if field.side != SPECTRAL:
        raise SideMismatch("bessel_apply needs a spectral-side field")
    if s == 0:
        return field
    return Field(field.grid, field.values * bessel_multiplier(field.grid, s), SPECTRAL)


def derivative_multiplier(grid: SpectralGrid, axis: int, order: int) -> np.ndarray:
    """``(i xi_axis)^order`` on the lattice; Nyquist zeroed for odd orders."""
    k = grid.xi()[axis]
    mult = (1j * k) ** order
    if order % 2 == 1:
        mult = np.where(grid.nyquist_mask(), 0.0, mult)
    return mult


# Norms.  The *_values helpers take raw arrays with shape (..., N, *points)
# and reduce over the last n_dims + 1 axes.

def pointwise_enorm(values: np.ndarray, q: float, n_dims: int) -> np.ndarray:
    comp_axis = values.ndim - n_dims - 1
    mag = np.abs(values)
    if values.shape[comp_axis] == 1:
        return np.take(mag, 0, axis=comp_axis)
    if np.isinf(q):
        return mag.max(axis=comp_axis)
    return np.sum(mag ** q, axis=comp_axis) ** (1.0 / q)


def lp_values(grid: SpectralGrid, values: np.ndarray, p: float, q: float = 2.0) -> np.ndarray:
    e = pointwise_enorm(values, q, grid.n_dims)
    if np.isinf(p):
        return e.max(axis=grid.axes)
    return (np.sum(e ** p, axis=grid.axes) * grid.cell_volume) ** (1.0 / p)


def lsp_values(grid: SpectralGrid, spectrum: np.ndarray, s: float, p: float,
               q: float = 2.0) -> np.ndarray:
    weighted = grid.ifft(spectrum * bessel_multiplier(grid, s)) if s != 0 else grid.ifft(spectrum)
    return lp_values(grid, weighted, p, q)


def norm(field: Field, kind: str = "Lp", p: float = 2.0, s: float = 0.0,
         q_inner: float = 2.0) -> float:
    """Discrete L^p, L^inf or Bessel-potential L^{s,p} norm of a field.

    Parameters
    ----------
    kind : {"Lp", "Linf", "Lsp"}
        ``Lp`` is ``(sum_x |v(x)|_q^p * cell_volume)^{1/p}``, ``Linf`` the grid
        maximum of the pointwise l_q norm, ``Lsp`` the ``Lp`` norm of the
        field after the multiplier ``(1+|xi|^2)^{s/2}``.
    """
    if q_inner < 1:
        raise ValueError(f"q_inner must be >= 1, got {q_inner}")
    if kind == "Linf":
        return float(lp_values(field.grid, to_physical(field).values, np.inf, q_inner))
    if not (p >= 1) or np.isinf(p):
        raise ValueError(f"p must satisfy 1 <= p < inf, got {p}")
    if kind == "Lp":
        return float(lp_values(field.grid, to_physical(field).values, p, q_inner))
    if kind == "Lsp":
        return float(lsp_values(field.grid, to_spectral(field).values, s, p, q_inner))
    raise ValueError(f"unknown norm kind {kind!r}")
