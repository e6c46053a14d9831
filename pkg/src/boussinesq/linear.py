"""Linear problem ``u_tt - L u_tt + A u = g`` via per-mode cosine/sine kernels.

Per mode, with ``A_xi`` the frozen operator and ``r = 1/(1+L(xi))``::

    u_hat(t)   = C(t) phi_hat + S(t) psi_hat + int_0^t S(t-tau) r g_hat(tau) dtau
    u_hat_t(t) = -A_xi S(t) phi_hat + C(t) psi_hat + int_0^t C(t-tau) r g_hat(tau) dtau

The velocity is evaluated from its own representation, never by
differencing ``u``.  The Duhamel integrals use composite Simpson weights on
the uniform time grid.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import GridError, NonFiniteError
from .grid import (PHYSICAL, EllipticForm, Field, SpectralGrid, lp_values,
                   lsp_values, to_physical, to_spectral)
from .operators import KernelTable, OperatorSpec, build_kernel_table, frozen_on_points, trig_kernels

NORM_CHANNELS = ("X1", "Xp", "Xinf", "Ysp")


@lru_cache(maxsize=4096)
def _duhamel_weights(k: int) -> np.ndarray:
    """Quadrature weights (in units of dt) for ``int_0^{k dt}`` on ``k+1`` samples.

    Composite Simpson when ``k`` is even; for odd ``k >= 3`` the first three
    cells use the 3/8 rule so the order stays four; ``k = 1`` is a trapezoid.
    """
    w = np.zeros(k + 1)
    if k == 0:
        return w
    if k == 1:
        w[:] = 0.5
        return w
    start = 0
    if k % 2 == 1:
        w[:4] += np.array([3.0, 9.0, 9.0, 3.0]) / 8.0
        start = 3
    if k > start:
        m = k - start
        simpson = np.ones(m + 1)
        simpson[1:m:2] = 4.0
        simpson[2:m:2] = 2.0
        w[start:] += simpson / 3.0
    w.flags.writeable = False
    return w


def _apply_kernel(kern: np.ndarray, vec: np.ndarray, is_matrix: bool) -> np.ndarray:
    """Kernel ``(P,)``/``(P,N,N)`` applied to a flattened spectrum ``(N,P)``."""
    if is_matrix:
        return np.einsum("pab,bp->ap", kern, vec)
    return kern[None, :] * vec


def _check_components(table: KernelTable, n: int):
    if table.is_matrix and table.components != n:
        raise GridError(f"operator acts on {table.components} components, field has {n}")


def propagate(table: KernelTable, phi_hat: np.ndarray, psi_hat: np.ndarray,
              g_hat: np.ndarray | None = None, steps: int | None = None
              ) -> tuple[np.ndarray, np.ndarray]:
    """Evolve spectra over ``steps`` kernel steps.

    ``phi_hat``/``psi_hat`` have shape ``(N, *points)``; ``g_hat`` (if given)
    has shape ``(steps+1, N, *points)`` sampled at ``k*dt``.  Returns
    ``(u_hat, ut_hat)`` each of shape ``(steps+1, N, *points)``.
    """
    steps = table.steps if steps is None else steps
    if steps > table.steps:
        raise GridError(f"table holds {table.steps} steps, {steps} requested")
    shape = phi_hat.shape
    n = shape[0]
    _check_components(table, n)
    p = table.r.size
    phi = phi_hat.reshape(n, p)
    psi = psi_hat.reshape(n, p)
    mat = table.is_matrix
    c, s = table.cos[: steps + 1], table.sin[: steps + 1]

    if mat:
        u = np.einsum("kpab,bp->kap", c, phi) + np.einsum("kpab,bp->kap", s, psi)
        a_s = np.einsum("pab,kpbc->kpac", table.frozen, s)
        ut = -np.einsum("kpab,bp->kap", a_s, phi) + np.einsum("kpab,bp->kap", c, psi)
    else:
        u = c[:, None, :] * phi[None] + s[:, None, :] * psi[None]
        ut = -(table.frozen[None, None, :] * s[:, None, :]) * phi[None] + c[:, None, :] * psi[None]

    if g_hat is not None:
        if g_hat.shape[0] < steps + 1:
            raise GridError(f"forcing has {g_hat.shape[0]} samples, need {steps + 1}")
        h = table.r[None, None, :] * g_hat[: steps + 1].reshape(steps + 1, n, p)
        dt = table.dt
        for k in range(1, steps + 1):
            w = _duhamel_weights(k) * dt
            sk, ck = s[k::-1], c[k::-1]
            if mat:
                u[k] += np.einsum("j,jpab,jbp->ap", w, sk, h[: k + 1])
                ut[k] += np.einsum("j,jpab,jbp->ap", w, ck, h[: k + 1])
            else:
                u[k] += np.einsum("jp,jnp->np", w[:, None] * sk, h[: k + 1])
                ut[k] += np.einsum("jp,jnp->np", w[:, None] * ck, h[: k + 1])
    return u.reshape((steps + 1,) + shape), ut.reshape((steps + 1,) + shape)


def _same_grid(*fields: Field):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridError("fields live on different grids")
        if f.components != fields[0].components:
            raise GridError("fields have different component counts")


def apply_initial_propagators(table: KernelTable, phi: Field, psi: Field, t: float) -> Field:
    """``S1(t) phi + S2(t) psi`` returned on the physical side."""
    _same_grid(phi, psi)
    if phi.grid != table.grid:
        raise GridError("fields and kernel table live on different grids")
    if t == 0:
        return to_physical(phi)
    c, s = table.kernels_at(t)
    n = phi.components
    _check_components(table, n)
    p = table.r.size
    ph = to_spectral(phi).values.reshape(n, p)
    ps = to_spectral(psi).values.reshape(n, p)
    out = _apply_kernel(c, ph, table.is_matrix) + _apply_kernel(s, ps, table.is_matrix)
    return Field(phi.grid, phi.grid.ifft(out.reshape(phi.values.shape)), PHYSICAL)


def duhamel_term(table: KernelTable, g: Sequence[Field], t: float) -> Field:
    """``int_0^t S(t-tau) r g_hat(tau) dtau`` from samples ``g[j]`` at ``j*dt``."""
    k = int(round(t / table.dt))
    if abs(k * table.dt - t) > 1e-9 * max(1.0, abs(t)):
        raise GridError(f"t={t} is not a multiple of dt={table.dt}")
    if len(g) < k + 1:
        raise GridError(f"need {k + 1} forcing samples, got {len(g)}")
    if k > table.steps:
        raise GridError(f"table holds {table.steps} steps, t needs {k}")
    grid = table.grid
    n = g[0].components
    zero = np.zeros((n, *grid.shape), dtype=complex)
    g_hat = np.stack([to_spectral(gj).values for gj in g[: k + 1]])
    u, _ = propagate(table, zero, zero, g_hat, steps=k)
    return Field(grid, grid.ifft(u[k]), PHYSICAL)


def _norm_channels(grid: SpectralGrid, values: np.ndarray, s: float, p: float, q: float
                   ) -> dict[str, np.ndarray]:
    spec = grid.fft(values)
    return {
        "X1": lp_values(grid, values, 1.0, q),
        "Xp": lp_values(grid, values, p, q),
        "Xinf": lp_values(grid, values, np.inf, q),
        "Ysp": lsp_values(grid, spec, s, p, q),
    }


@dataclass(eq=False)
class SolutionTrace:
    """Time samples of ``u`` and ``u_t`` with their norm records.

    ``u`` and ``ut`` are physical-side arrays of shape
    ``(len(times), N, *grid.shape)``.  ``norms`` maps ``"u_X1"``, ``"u_Xp"``,
    ``"u_Xinf"``, ``"u_Ysp"`` and the matching ``"ut_*"`` keys to per-time
    arrays, with ``Ysp`` the ``L^{s,p}`` norm.
    """

    grid: SpectralGrid
    times: np.ndarray
    u: np.ndarray
    ut: np.ndarray
    s: float = 2.0
    p: float = 2.0
    q: float = 2.0
    norms: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.u.shape != self.ut.shape or self.u.shape[0] != self.times.size:
            raise GridError("trace arrays do not match the time samples")
        if self.times.size and self.times[0] != 0.0:
            raise GridError("trace times must start at 0")
        if np.any(np.diff(self.times) <= 0):
            raise GridError("trace times must be strictly increasing")
        if not self.norms:
            self.norms = self.compute_norms()

    def compute_norms(self) -> dict[str, np.ndarray]:
        out = {}
        for name, arr in (("u", self.u), ("ut", self.ut)):
            for ch, val in _norm_channels(self.grid, arr, self.s, self.p, self.q).items():
                out[f"{name}_{ch}"] = np.asarray(val, dtype=float)
        return out

    def __len__(self) -> int:
        return self.times.size

    @property
    def components(self) -> int:
        return self.u.shape[1]

    def state(self, k: int) -> Field:
        return Field(self.grid, self.u[k], PHYSICAL)

    def velocity(self, k: int) -> Field:
        return Field(self.grid, self.ut[k], PHYSICAL)

    def monitor(self) -> np.ndarray:
        """``||u||_Ysp + ||u||_Xinf + ||u_t||_Ysp + ||u_t||_Xinf`` per time."""
        n = self.norms
        return n["u_Ysp"] + n["u_Xinf"] + n["ut_Ysp"] + n["ut_Xinf"]


def _all_real(*fields: Field) -> bool:
    return all(np.all(to_physical(f).values.imag == 0) for f in fields)


def _sample_forcing(g, grid: SpectralGrid, n: int, times: np.ndarray) -> list[Field] | None:
    if g is None:
        return None
    if callable(g):
        out = [g(float(t)) for t in times]
    else:
        out = list(g)
        if len(out) < times.size:
            raise GridError(f"forcing has {len(out)} samples, need {times.size}")
    for f in out:
        if f.grid != grid or f.components != n:
            raise GridError("forcing samples do not match the data grid/components")
    return out


def solve_linear(A: OperatorSpec, form: EllipticForm, phi: Field, psi: Field,
                 g: Callable[[float], Field] | Sequence[Field] | None, T: float, dt: float,
                 s: float = 2.0, p: float = 2.0, q: float = 2.0,
                 table: KernelTable | None = None) -> SolutionTrace:
    """Solve the linearized problem on ``[0, T]`` at the times ``k*dt``.

    ``g`` is ``None`` (no forcing), a callable ``t -> Field``, or a sequence
    of fields sampled at ``k*dt``.  Real data give real traces.
    """
    _same_grid(phi, psi)
    grid = phi.grid
    steps = int(round(T / dt))
    if steps < 0 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise GridError(f"T={T} must be a non-negative multiple of dt={dt}")
    if table is None or table.dt != dt or table.steps < steps or table.grid != grid:
        table = build_kernel_table(A, form, grid, dt, steps)
    times = dt * np.arange(steps + 1)
    g_fields = _sample_forcing(g, grid, phi.components, times)
    g_hat = None if g_fields is None else np.stack([to_spectral(f).values for f in g_fields])
    real = _all_real(phi, psi, *(g_fields or []))
    u_hat, ut_hat = propagate(table, to_spectral(phi).values, to_spectral(psi).values,
                              g_hat, steps=steps)
    u, ut = grid.ifft(u_hat), grid.ifft(ut_hat)
    if real:
        u, ut = u.real.astype(complex), ut.real.astype(complex)
    u[0] = to_physical(phi).values
    ut[0] = to_physical(psi).values
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(ut))):
        raise NonFiniteError("linear solve produced non-finite values")
    return SolutionTrace(grid, times, u, ut, s=s, p=p, q=q)


@dataclass(frozen=True)
class LinearEstimateReport:
    """Empirical constants of the two a-priori estimates.

    ``ratio_216`` bounds the sup-norms of ``u`` and ``u_t`` by
    ``Y^{s,p}`` plus ``L^1`` norms of the data; ``ratio_217`` bounds their
    ``Y^{s,p}`` norms by ``Y^{s,p}`` norms of the data.
    """

    ratio_216: float
    ratio_217: float
    ill_posed: bool
    per_time_216: np.ndarray
    per_time_217: np.ndarray


def _ratio(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, bool]:
    num = np.asarray(num, dtype=float)
    den = np.broadcast_to(np.asarray(den, dtype=float), num.shape)
    out = np.zeros_like(num)
    pos = den > 0
    out[pos] = num[pos] / den[pos]
    bad = (~pos) & (num > 0)
    out[bad] = np.inf
    return out, bool(bad.any())


def verify_linear_estimates(trace: SolutionTrace, phi: Field, psi: Field,
                            g=None) -> LinearEstimateReport:
    """Measure both a-priori estimate ratios along a linear trace (0/0 counts as 0)."""
    s, p, q = trace.s, trace.p, trace.q
    grid = trace.grid

    def ch(f: Field):
        return _norm_channels(grid, to_physical(f).values, s, p, q)

    nphi, npsi = ch(phi), ch(psi)
    g_fields = _sample_forcing(g, grid, trace.components, trace.times)
    if g_fields is None or trace.times.size < 2:
        g_ysp = g_x1 = np.zeros(trace.times.size)
    else:
        gv = np.stack([to_physical(f).values for f in g_fields])
        gch = _norm_channels(grid, gv, s, p, q)
        g_ysp = cumulative_trapezoid(gch["Ysp"], trace.times, initial=0.0)
        g_x1 = cumulative_trapezoid(gch["X1"], trace.times, initial=0.0)
    n = trace.norms
    lhs_216 = n["u_Xinf"] + n["ut_Xinf"]
    rhs_216 = nphi["Ysp"] + nphi["X1"] + npsi["Ysp"] + npsi["X1"] + g_ysp + g_x1
    lhs_217 = n["u_Ysp"] + n["ut_Ysp"]
    rhs_217 = nphi["Ysp"] + npsi["Ysp"] + g_ysp
    r216, bad1 = _ratio(lhs_216, rhs_216)
    r217, bad2 = _ratio(lhs_217, rhs_217)
    return LinearEstimateReport(float(r216.max(initial=0.0)), float(r217.max(initial=0.0)),
                                bad1 or bad2, r216, r217)


@dataclass(frozen=True)
class SymbolDecayReport:
    """Sup of ``|xi|^{|alpha|+n/p} ||D^alpha[(1+L)^{-s/2} K(t, A_xi)]||`` over the lattice.

    ``sup_extended`` repeats the sup on a lattice ``extent`` times wider with
    the same spacing; ``growth`` flags a relative increase above
    ``growth_tol``.  ``admissible`` records whether ``s > n/p``.
    """

    sup: float
    sup_extended: float
    per_alpha: dict
    argmax_xi: tuple
    growth: bool
    admissible: bool


def _symbol_sup(A, form, axes_freqs, spacing, s, p, times, kernel, alpha):
    n = len(axes_freqs)
    xi = np.meshgrid(*axes_freqs, indexing="ij")
    xi_flat = [x.reshape(-1) for x in xi]
    mag = np.sqrt(sum(x * x for x in xi_flat))
    active = [a for a in range(n) if alpha[a]]
    deriv = 0.0
    for signs in itertools.product((-1.0, 1.0), repeat=len(active)):
        pts = list(xi_flat)
        for a, sg in zip(active, signs):
            pts[a] = pts[a] + sg * spacing[a]
        frozen, r = frozen_on_points(A, form, tuple(pts))
        c, sn = trig_kernels(frozen[None], np.asarray(times)[:, None], matrix=A.is_matrix)
        kern = c if kernel == "cos" else sn
        damp = r ** (0.5 * s)
        val = (damp[:, None, None] * kern) if A.is_matrix else damp * kern
        deriv = deriv + np.prod(signs) * val
    deriv = deriv / np.prod([2.0 * spacing[a] for a in active]) if active else deriv
    if A.is_matrix:
        nrm = np.linalg.norm(deriv, 2, axis=(-2, -1))
    else:
        nrm = np.abs(deriv)
    weight = mag ** (len(active) + n / p)
    vals = np.where(mag > 0, weight * nrm, 0.0).max(axis=0)
    i = int(np.argmax(vals))
    return float(vals[i]), tuple(float(x[i]) for x in xi_flat)


def symbol_decay_check(A: OperatorSpec, form: EllipticForm, grid: SpectralGrid, s: float,
                       p: float, t_samples, kernel: str = "cos", alphas=None,
                       extent: int = 4, growth_tol: float = 0.01) -> SymbolDecayReport:
    """Check the multiplier decay bound behind the sup-norm estimate.

    Derivatives ``D^alpha`` (``alpha_k`` in ``{0, 1}``) are centered
    differences with one lattice spacing.  By default every such ``alpha``
    is checked.
    """
    if kernel not in ("cos", "sin"):
        raise ValueError("kernel must be 'cos' or 'sin'")
    n = grid.n_dims
    if alphas is None:
        alphas = list(itertools.product((0, 1), repeat=n))
    spacing = [np.pi / w for w in grid.half_width]
    base = [grid.lattice(a) for a in range(n)]
    wide = [spacing[a] * np.arange(-extent * grid.points[a] // 2, extent * grid.points[a] // 2)
            for a in range(n)]
    per_alpha, best, best_xi, best_wide = {}, -1.0, (), -1.0
    for alpha in alphas:
        sup_b, xi_b = _symbol_sup(A, form, base, spacing, s, p, t_samples, kernel, alpha)
        sup_w, _ = _symbol_sup(A, form, wide, spacing, s, p, t_samples, kernel, alpha)
        per_alpha[tuple(alpha)] = (sup_b, sup_w)
        if sup_b > best:
            best, best_xi = sup_b, xi_b
        best_wide = max(best_wide, sup_w)
    growth = any(w > (1.0 + growth_tol) * b for b, w in per_alpha.values())
    return SymbolDecayReport(best, best_wide, per_alpha, best_xi, growth, s > n / p)
