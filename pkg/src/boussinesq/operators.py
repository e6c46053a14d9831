"""The operator A, its frozen per-mode form, and cosine/sine kernels.

After a Fourier transform in x the equation ``u_tt - L u_tt + A u = g``
becomes, mode by mode,

    u_hat_tt + A_xi u_hat = r(xi) g_hat,    A_xi = r(xi) A,  r = 1/(1 + L(xi)).

Its propagators are the cosine and sine functions of ``A_xi``::

    C(t) = sum_k (-1)^k t^{2k} M^k / (2k)!
    S(t) = t * sum_k (-1)^k t^{2k} M^k / (2k+1)!

which need no square root of ``M`` and are entire in ``M``.  Matrices
are handled by argument scaling plus double-angle recombination.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import GridError, NonFiniteError
from .grid import EllipticForm, SpectralGrid, get_threads

SYMBOL = "symbol"
MATRIX = "matrix"


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """Either a scalar Fourier symbol ``a(xi) >= 0`` or a constant matrix.

    A scalar symbol acts identically on every component of a vector field.
    """

    kind: str
    name: str
    symbol: Callable | None = None
    matrix: np.ndarray | None = None
    weights: tuple[float, ...] | None = None
    s_weight: float | None = None

    @classmethod
    def laplacian(cls) -> "OperatorSpec":
        """``A = -Delta``, symbol ``|xi|^2``."""
        return cls(SYMBOL, "laplacian", symbol=lambda xi: sum(k * k for k in xi))

    @classmethod
    def from_symbol(cls, fn: Callable, name: str = "symbol") -> "OperatorSpec":
        return cls(SYMBOL, name, symbol=fn)

    @classmethod
    def from_matrix(cls, m, name: str = "matrix") -> "OperatorSpec":
        m = np.atleast_2d(np.asarray(m, dtype=np.complex128))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise GridError(f"operator matrix must be square, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NonFiniteError("operator matrix has non-finite entries")
        m.flags.writeable = False
        return cls(MATRIX, name, matrix=m)

    @classmethod
    def weighted(cls, g, s: float) -> "OperatorSpec":
        """The system operator ``a_mj = g_m * 2^(s*j)`` with ``m, j = 1..N``."""
        g = np.asarray(g, dtype=float)
        if g.ndim != 1 or g.size < 1 or np.any(g <= 0):
            raise GridError("weights g_m must be a non-empty list of positive reals")
        j = np.arange(1, g.size + 1)
        m = g[:, None] * 2.0 ** (s * j)[None, :]
        spec = cls.from_matrix(m, name="weighted")
        return cls(MATRIX, "weighted", matrix=spec.matrix,
                   weights=tuple(g.tolist()), s_weight=float(s))

    @property
    def is_matrix(self) -> bool:
        return self.kind == MATRIX

    @property
    def components(self) -> int | None:
        """Required component count, or ``None`` when any count works."""
        return self.matrix.shape[0] if self.is_matrix else None

    def symbol_values(self, xi) -> np.ndarray:
        a = np.asarray(self.symbol(xi), dtype=float)
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise NonFiniteError(f"symbol {self.name!r} must be finite and >= 0")
        return np.broadcast_to(a, np.broadcast(*xi).shape)


def build_frozen_operator(A: OperatorSpec, form: EllipticForm, xi):
    """``A_xi = A / (1 + L(xi))`` at one frequency vector."""
    xi = tuple(np.atleast_1d(np.asarray(xi, dtype=float)))
    r = 1.0 / (1.0 + float(form(xi)))
    if A.is_matrix:
        return r * A.matrix
    return r * float(A.symbol_values(xi))


def frozen_on_points(A: OperatorSpec, form: EllipticForm, xi) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``(A_xi, r)`` over arrays of frequencies, flattened.

    Returns ``A_xi`` with shape ``(P,)`` for a symbol or ``(P, N, N)`` for a
    matrix, and ``r`` with shape ``(P,)``.
    """
    r = (1.0 / (1.0 + form(xi))).reshape(-1)
    if A.is_matrix:
        return r[:, None, None] * A.matrix[None], r
    return r * A.symbol_values(xi).reshape(-1), r


def _scalar_kernels(m: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = np.asarray(m)
    t = np.asarray(t, dtype=float)
    if np.iscomplexobj(m):
        if np.any(m.imag != 0):
            raise GridError("complex scalar kernels are not supported; use a 1x1 matrix")
        m = m.real
    m = m.astype(float)
    pos = m >= 0
    w = np.sqrt(np.abs(m))
    # S = t * sinc(t w / pi) stays exact at w == 0
    c = np.where(pos, np.cos(t * w), np.cosh(t * w))
    with np.errstate(invalid="ignore", divide="ignore"):
        sh = np.where(w > 0, np.sinh(t * w) / np.where(w > 0, w, 1.0), t)
    s = np.where(pos, t * np.sinc(t * w / np.pi), sh)
    return c, s


def _one_norm(x: np.ndarray) -> np.ndarray:
    return np.abs(x).sum(axis=-2).max(axis=-1)


def _matrix_kernels(m: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched matrix cosine/sine; ``m`` is ``(B, N, N)``, ``t`` is ``(B,)``."""
    b, n, _ = m.shape
    t = np.asarray(t, dtype=float).reshape(b)
    x = (t * t)[:, None, None] * m
    nx = _one_norm(x)
    # halve t until ||t^2 M|| <= 1, i.e. divide X by 4^j
    with np.errstate(divide="ignore"):
        j = np.where(nx > 1.0, np.ceil(np.log(np.where(nx > 0, nx, 1.0)) / np.log(4.0)), 0)
    j = j.astype(int)
    y = x / (4.0 ** j)[:, None, None]
    eye = np.broadcast_to(np.eye(n, dtype=m.dtype), (b, n, n))
    c = eye.copy()
    sinc = eye.copy()
    power = eye.copy()
    for k in range(1, 40):
        power = -power @ y
        term_c = power / math.factorial(2 * k)
        term_s = power / math.factorial(2 * k + 1)
        c = c + term_c
        sinc = sinc + term_s
        bound = _one_norm(power).max() / math.factorial(2 * k + 2)
        if bound < 1e-16 * max(1.0, float(_one_norm(c).min())):
            break
    s = (t / 2.0 ** j)[:, None, None] * sinc
    for level in range(int(j.max(initial=0))):
        sel = j > level
        cs, ss = c[sel], s[sel]
        s[sel] = 2.0 * ss @ cs
        c[sel] = 2.0 * cs @ cs - eye[sel]
    return c, s


def trig_kernels(m, t, matrix: bool | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Cosine and sine kernels ``(C(t), S(t))`` for scalars or matrices.

    ``m`` may be a scalar, an array of scalars (``matrix=False``), one
    square matrix, or a stack ``(..., N, N)``.  ``t`` broadcasts against the
    leading (non-matrix) shape.
    """
    m = np.asarray(m)
    if matrix is None:
        matrix = m.ndim >= 2
    if not np.all(np.isfinite(m)) or not np.all(np.isfinite(t)):
        raise NonFiniteError("kernel arguments must be finite")
    if not matrix:
        return _scalar_kernels(m, np.asarray(t, dtype=float))
    lead = np.broadcast_shapes(m.shape[:-2], np.shape(t))
    n = m.shape[-1]
    mb = np.broadcast_to(m, lead + (n, n)).reshape(-1, n, n)
    dtype = np.result_type(mb.dtype, np.float64)
    tb = np.broadcast_to(np.asarray(t, dtype=float), lead).reshape(-1)
    c, s = _matrix_kernels(mb.astype(dtype), tb)
    if not (np.all(np.isfinite(c)) and np.all(np.isfinite(s))):
        raise NonFiniteError("matrix kernel series produced non-finite values")
    return c.reshape(lead + (n, n)), s.reshape(lead + (n, n))


def cosine_kernel(m, t: float):
    """``cos(t M^{1/2})``; exactly ``cos(t sqrt(M))`` for a scalar ``M >= 0``."""
    c, _ = trig_kernels(m, t)
    return float(c) if np.ndim(c) == 0 else c


def sine_kernel(m, t: float):
    """``M^{-1/2} sin(t M^{1/2})`` in its sinc form (equals ``t`` at ``M = 0``)."""
    _, s = trig_kernels(m, t)
    return float(s) if np.ndim(s) == 0 else s


@dataclass(frozen=True, eq=False)
class KernelTable:
    """Kernels ``C(k dt)``, ``S(k dt)`` for ``k = 0..steps`` on every lattice mode.

    Arrays are flattened over modes: ``cos``/``sin`` have shape
    ``(steps+1, P)`` for a scalar symbol or ``(steps+1, P, N, N)`` for a
    matrix operator; ``frozen`` is ``A_xi`` and ``r`` is ``1/(1+L(xi))``.
    """

    grid: SpectralGrid
    dt: float
    steps: int
    cos: np.ndarray
    sin: np.ndarray
    frozen: np.ndarray
    r: np.ndarray
    is_matrix: bool

    @property
    def components(self) -> int | None:
        return self.frozen.shape[-1] if self.is_matrix else None

    def at(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        return self.cos[k], self.sin[k]

    def kernels_at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Kernels at an arbitrary time, tabulated directly."""
        k = t / self.dt
        if abs(k - round(k)) < 1e-9 * max(1.0, k) and 0 <= round(k) <= self.steps:
            return self.at(int(round(k)))
        return trig_kernels(self.frozen, t, matrix=self.is_matrix)


def _chunks(p: int, workers: int) -> list[slice]:
    if workers <= 1 or p < 2 * workers:
        return [slice(0, p)]
    edges = np.linspace(0, p, workers + 1).astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def build_kernel_table(A: OperatorSpec, form: EllipticForm, grid: SpectralGrid, dt: float,
                       steps: int = 1) -> KernelTable:
    """Tabulate ``C``, ``S`` at ``t = k*dt`` (``k = 0..steps``) for every mode."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if form.n_dims != grid.n_dims:
        raise GridError("elliptic form and grid dimensions differ")
    frozen, r = frozen_on_points(A, form, grid.xi())
    times = dt * np.arange(steps + 1)
    p = frozen.shape[0]

    def work(sl: slice):
        fz = frozen[sl]
        if A.is_matrix:
            tt = np.broadcast_to(times[:, None], (steps + 1, fz.shape[0]))
            return trig_kernels(fz[None], tt, matrix=True)
        return trig_kernels(fz[None, :], times[:, None], matrix=False)

    parts = _chunks(p, get_threads())
    try:
        if len(parts) == 1:
            results = [work(parts[0])]
        else:
            with ThreadPoolExecutor(len(parts)) as ex:
                results = list(ex.map(work, parts))
    except NonFiniteError as err:
        bad = np.flatnonzero(~np.isfinite(frozen.reshape(p, -1)).all(axis=1))
        where = [tuple(x.reshape(-1)[i] for x in grid.xi()) for i in bad[:5]]
        raise NonFiniteError(f"kernel tabulation failed: {err}", where=where) from err
    c = np.concatenate([res[0] for res in results], axis=1)
    s = np.concatenate([res[1] for res in results], axis=1)
    for arr in (c, s, frozen, r):
        arr.flags.writeable = False
    return KernelTable(grid, float(dt), int(steps), c, s, frozen, r, A.is_matrix)


@dataclass(frozen=True)
class ResolventReport:
    max_violation: float
    witness: complex
    constant: float
    samples: int


def resolvent_bound_check(A: OperatorSpec, C0: float, omega: float, samples: int = 32,
                          extra=()) -> ResolventReport:
    """Probe ``||(A - lam^2)^{-1}|| * |Re lam - omega| <= C0`` for ``Re lam > omega``.

    ``Re lam - omega`` runs over ``logspace(-3, 3, samples)`` and ``Im lam``
    over ``0`` and ``+-logspace(-3, 3, samples)``; ``extra`` adds explicit
    sample points.  The report carries the largest value of the left side
    minus ``C0`` (positive means a violation was witnessed) and the
    sample where it happened.  A singular resolvent counts as ``+inf``.
    """
    if not A.is_matrix:
        raise GridError("resolvent_bound_check needs a matrix operator")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    a = A.matrix
    n = a.shape[0]
    re = omega + np.logspace(-3, 3, samples)
    im_pos = np.logspace(-3, 3, samples)
    im = np.concatenate([-im_pos[::-1], [0.0], im_pos])
    lams = (re[:, None] + 1j * im[None, :]).reshape(-1)
    lams = np.concatenate([lams, np.asarray(list(extra), dtype=complex)])
    worst, witness = -np.inf, complex(lams[0])
    eye = np.eye(n)
    for lam in lams:
        if lam.real <= omega:
            continue
        mat = a - lam * lam * eye
        try:
            inv = np.linalg.inv(mat)
            val = np.linalg.norm(inv, 2) * (lam.real - omega)
            if not np.isfinite(val) or np.linalg.cond(mat) > 1.0 / np.finfo(float).eps:
                val = np.inf
        except np.linalg.LinAlgError:
            val = np.inf
        if val - C0 > worst:
            worst, witness = val - C0, complex(lam)
    return ResolventReport(float(worst), witness, float(C0), int(lams.size))
