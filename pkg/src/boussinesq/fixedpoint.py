"""Local nonlinear solver by contraction, continuation, and blow-up monitoring.

The map iterated here is

    G(u)(t) = S1(t) phi + S2(t) psi + int_0^t F^{-1} S(t-tau) r f_hat(u)(tau) dtau

on the window ``[0, T]``, in the norm

    ||u||_{Y(T)} = max_t ||u||_{Y^{2,p}} + max_t ||u||_{X_inf}.

With ``M`` the size of the data and ``fbar`` the derivative majorant of
``f``, the window length is the smaller of

    1 / ((M+1) (1 + 2 C0 (M+1) fbar(M+1)))   and   1 / (2 (1 + C1 (M+1)^2 fbar(M+1))),

which makes ``G`` a self-map of the ball ``||u||_{Y(T)} <= M+1`` and a
1/2-contraction there.  Long runs restart from ``(u(T), u_t(T))`` and glue
the windows end to end.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridError, MaxItersExceeded, NonFiniteError
from .grid import EllipticForm, Field, SpectralGrid, lp_values, lsp_values, to_physical
from .linear import SolutionTrace, _all_real, _same_grid, propagate
from .nonlinearity import NonlinearitySpec, fbar
from .operators import KernelTable, OperatorSpec, build_kernel_table

log = logging.getLogger(__name__)

S_WINDOW = 2.0  # smoothness index of the contraction space Y(T)

COMPLETED = "Completed"
BLOWUP = "BlowUpSuspected"
FAILED = "IterationFailed"


# ---------------------------------------------------------------- sizes

def _ysp(grid: SpectralGrid, values: np.ndarray, p: float, q: float) -> np.ndarray:
    return lsp_values(grid, grid.fft(values), S_WINDOW, p, q)


def _yT_values(grid: SpectralGrid, u: np.ndarray, p: float, q: float) -> float:
    """``max_t ||u||_{Y^{2,p}} + max_t ||u||_{X_inf}`` for stacked samples."""
    return float(np.max(_ysp(grid, u, p, q)) + np.max(lp_values(grid, u, np.inf, q)))


def _yT_pair(grid: SpectralGrid, a: np.ndarray, b: np.ndarray, p: float, q: float):
    both = np.stack([a, b])
    y = _ysp(grid, both, p, q).max(axis=1) + lp_values(grid, both, np.inf, q).max(axis=1)
    return float(y[0]), float(y[1])


def yT_norm(trace: SolutionTrace) -> float:
    """Window norm of a trace, read from its stored ``Y^{2,p}`` and sup records."""
    if trace.s != S_WINDOW:
        raise ValueError(f"Y(T) needs traces recorded with s={S_WINDOW}, got s={trace.s}")
    if len(trace) == 0:
        return 0.0
    return float(np.max(trace.norms["u_Ysp"]) + np.max(trace.norms["u_Xinf"]))


def amplitude_M(phi: Field, psi: Field, p: float = 2.0, q: float = 2.0) -> float:
    """``||phi||_{Y^{2,p}} + ||phi||_inf + ||psi||_{Y^{2,p}} + ||psi||_inf``."""
    _same_grid(phi, psi)
    grid = phi.grid
    vals = np.stack([to_physical(phi).values, to_physical(psi).values])
    return float(np.sum(_ysp(grid, vals, p, q)) + np.sum(lp_values(grid, vals, np.inf, q)))


def window_length(M: float, fbar_M1: float, C0: float = 1.0, C1: float = 1.0) -> float:
    """Largest window allowed by the self-map and contraction conditions."""
    if M < 0 or fbar_M1 < 0:
        raise ValueError("M and fbar must be non-negative")
    m1 = M + 1.0
    self_map = 1.0 / (m1 * (1.0 + 2.0 * C0 * m1 * fbar_M1))
    contraction = 0.5 / (1.0 + C1 * m1 * m1 * fbar_M1)
    return min(self_map, contraction)


# ---------------------------------------------------------------- the map G

@dataclass(frozen=True)
class SolveWindow:
    """Record of one accepted window."""

    T: float
    dt: float
    steps: int
    M: float
    fbar_M1: float
    C0_comp: float
    C1_contr: float
    picard_iters: int
    contraction_estimate: float
    t_start: float = 0.0
    differences: tuple = ()
    ratios: tuple = ()
    residual: float = float("nan")
    membership_ok: bool = True
    fbar_exact: bool = True

    @property
    def bound(self) -> float:
        return window_length(self.M, self.fbar_M1, self.C0_comp, self.C1_contr)


class _WindowMap:
    """Evaluates ``G`` on stacked physical samples for one window."""

    def __init__(self, f: NonlinearitySpec, table: KernelTable, steps: int, real: bool,
                 dealias: bool = True):
        self.f = f
        self.table = table
        self.grid = table.grid
        self.steps = steps
        self.real = real
        self.mask = self.grid.dealias_mask() if dealias else None

    def _phys(self, spec: np.ndarray) -> np.ndarray:
        out = self.grid.ifft(spec)
        return out.real.astype(complex) if self.real else out

    def forcing_hat(self, u: np.ndarray) -> np.ndarray | None:
        if self.f.is_zero:
            return None
        grid = self.grid
        if self.mask is not None:
            u = self._phys(grid.fft(u) * self.mask)
        fu = np.stack([self.f(u[k]) for k in range(u.shape[0])])
        if not np.all(np.isfinite(fu)):
            bad = int(np.flatnonzero(~np.isfinite(fu).reshape(fu.shape[0], -1).all(axis=1))[0])
            raise NonFiniteError(f"f(u) is not finite at time index {bad}", where=bad)
        g_hat = grid.fft(fu)
        return g_hat * self.mask if self.mask is not None else g_hat

    def __call__(self, phi_hat, psi_hat, u: np.ndarray | None):
        g_hat = None if u is None else self.forcing_hat(u)
        uh, uth = propagate(self.table, phi_hat, psi_hat, g_hat, steps=self.steps)
        return self._phys(uh), self._phys(uth)


def _window_setup(A, form, phi: Field, T: float, dt: float | None, steps: int | None,
                  table: KernelTable | None):
    if steps is None:
        if dt is None:
            steps = 64
        else:
            steps = max(1, int(math.ceil(T / dt - 1e-9)))
    dt_w = T / steps
    if dt is not None and abs(steps * dt - T) <= 1e-12 * max(1.0, T):
        dt_w = dt
    if (table is None or table.grid != phi.grid or table.steps < steps
            or not math.isclose(table.dt, dt_w, rel_tol=1e-14, abs_tol=0.0)):
        table = build_kernel_table(A, form, phi.grid, dt_w, steps)
    return table, steps, dt_w


def apply_G(u: SolutionTrace | np.ndarray, phi: Field, psi: Field, f: NonlinearitySpec,
            table: KernelTable, T: float, p: float = 2.0, q: float = 2.0,
            dealias: bool = True) -> SolutionTrace:
    """Evaluate ``G(u)`` on ``[0, T]`` and return it as a trace.

    ``u`` is sampled at ``k * table.dt``.  ``f(u)`` is evaluated pointwise
    after 2/3-rule truncation of ``u`` and truncated again before the
    Duhamel integral.
    """
    _same_grid(phi, psi)
    steps = int(round(T / table.dt))
    if abs(steps * table.dt - T) > 1e-9 * max(1.0, T):
        raise GridError(f"T={T} is not a multiple of dt={table.dt}")
    values = u.u if isinstance(u, SolutionTrace) else np.asarray(u)
    if values.shape[0] != steps + 1:
        raise GridError(f"candidate has {values.shape[0]} samples, window needs {steps + 1}")
    real = _all_real(phi, psi) and np.all(values.imag == 0)
    gmap = _WindowMap(f, table, steps, real, dealias)
    un, utn = gmap(phi.grid.fft(to_physical(phi).values),
                   phi.grid.fft(to_physical(psi).values), values)
    return SolutionTrace(phi.grid, table.dt * np.arange(steps + 1), un, utn,
                         s=S_WINDOW, p=p, q=q)


def picard_solve(phi: Field, psi: Field, f: NonlinearitySpec, A: OperatorSpec,
                 form: EllipticForm, T: float, dt: float | None = None, tol: float = 1e-10,
                 max_iters: int = 50, C0: float = 1.0, C1: float = 1.0, p: float = 2.0,
                 q: float = 2.0, seed="linear", steps: int | None = None,
                 table: KernelTable | None = None, enforce_window: bool = True,
                 dealias: bool = True, M: float | None = None, rng_seed: int = 0
                 ) -> tuple[SolutionTrace, SolveWindow]:
    """Fixed point of ``G`` on one window by Picard iteration.

    Iterates ``u_{k+1} = G(u_k)`` from ``seed`` (``"linear"``: the solution
    with ``f = 0``; ``"zero"``; or an array / trace of samples) until
    ``||u_{k+1} - u_k||_{Y(T)} <= tol``.  ``M`` may be passed when the
    data size is already known; ``rng_seed`` drives the sampled majorant of
    non-polynomial ``f``.

    Raises
    ------
    ValueError
        If ``enforce_window`` and ``T`` exceeds :func:`window_length`.
    MaxItersExceeded
        With the difference and ratio history.
    NonFiniteError
        When ``f(u)`` overflows.
    """
    _same_grid(phi, psi)
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = phi.grid
    if M is None:
        M = amplitude_M(phi, psi, p, q)
    fb = fbar(f, M + 1.0, seed=rng_seed)
    if enforce_window:
        bound = window_length(M, fb, C0, C1) * (1.0 if f.exact_fbar or f.is_zero else 0.5)
        if T > bound * (1 + 1e-12):
            raise ValueError(f"T={T:g} exceeds the admissible window {bound:g} for M={M:g}")
    table, steps, dt_w = _window_setup(A, form, phi, T, dt, steps, table)
    real = _all_real(phi, psi)
    gmap = _WindowMap(f, table, steps, real, dealias)
    ph = grid.fft(to_physical(phi).values)
    ps = grid.fft(to_physical(psi).values)

    if isinstance(seed, str):
        if seed == "linear":
            u, ut = gmap(ph, ps, None)
        elif seed == "zero":
            u = np.zeros((steps + 1,) + ph.shape, dtype=complex)
        else:
            raise ValueError(f"unknown seed {seed!r}")
    else:
        u = np.array(seed.u if isinstance(seed, SolutionTrace) else seed, dtype=complex)
        if u.shape != (steps + 1,) + ph.shape:
            raise GridError("seed samples do not match the window")

    radius = M + 1.0
    diffs, ratios = [], []
    member = True
    for it in range(1, max_iters + 1):
        un, ut = gmap(ph, ps, u)
        d, size = _yT_pair(grid, un - u, un, p, q)
        if diffs:
            ratios.append(d / diffs[-1] if diffs[-1] > 0 else 0.0)
        diffs.append(d)
        if size > radius + tol:
            member = False
        u = un
        if d <= tol:
            break
    else:
        raise MaxItersExceeded(
            f"Picard iteration did not reach tol={tol:g} in {max_iters} iterations "
            f"(last difference {diffs[-1]:.3e})", diffs, ratios)
    u_chk, _ = gmap(ph, ps, u)
    residual = _yT_values(grid, u_chk - u, p, q)
    u[0] = to_physical(phi).values
    ut[0] = to_physical(psi).values
    trace = SolutionTrace(grid, dt_w * np.arange(steps + 1), u, ut, s=S_WINDOW, p=p, q=q)
    window = SolveWindow(T=steps * dt_w, dt=dt_w, steps=steps, M=M, fbar_M1=fb,
                         C0_comp=C0, C1_contr=C1, picard_iters=it,
                         contraction_estimate=max(ratios, default=0.0),
                         differences=tuple(diffs), ratios=tuple(ratios), residual=residual,
                         membership_ok=member, fbar_exact=f.exact_fbar or f.is_zero)
    return trace, window


def contraction_probe(u1, u2, phi: Field, psi: Field, f: NonlinearitySpec,
                      table: KernelTable, T: float, p: float = 2.0, q: float = 2.0) -> float:
    """``||G u1 - G u2||_{Y(T)} / ||u1 - u2||_{Y(T)}``, zero when ``u1 == u2``."""
    a = u1.u if isinstance(u1, SolutionTrace) else np.asarray(u1)
    b = u2.u if isinstance(u2, SolutionTrace) else np.asarray(u2)
    grid = phi.grid
    den = _yT_values(grid, a - b, p, q)
    if den == 0:
        return 0.0
    ga = apply_G(a, phi, psi, f, table, T, p, q)
    gb = apply_G(b, phi, psi, f, table, T, p, q)
    return _yT_values(grid, ga.u - gb.u, p, q) / den


def uniqueness_probe(trace1: SolutionTrace, trace2: SolutionTrace) -> float:
    """``max_t ||u1 - u2||_{Y^{2,p}}`` between two traces on the same times."""
    if trace1.u.shape != trace2.u.shape or not np.allclose(trace1.times, trace2.times,
                                                           rtol=0, atol=1e-12):
        raise GridError("traces must share grid and time samples")
    return float(np.max(_ysp(trace1.grid, trace1.u - trace2.u, trace1.p, trace1.q)))


# ---------------------------------------------------------------- continuation

@dataclass(eq=False)
class ContinuationReport:
    """Outcome of a windowed run.

    ``status`` is ``Completed``, ``BlowUpSuspected`` or ``IterationFailed``.
    Per stored time, ``window_index``, ``picard_iters`` and
    ``contraction`` give the window that produced the sample.
    """

    status: str
    windows: list
    trace: SolutionTrace
    window_index: np.ndarray
    picard_iters: np.ndarray
    contraction: np.ndarray
    t_end: float
    threshold: float
    t_star: float | None = None
    failed_window: int | None = None
    reason: str | None = None
    events: list = field(default_factory=list)

    @property
    def window_lengths(self) -> np.ndarray:
        return np.array([w.T for w in self.windows])

    @property
    def history(self) -> tuple[np.ndarray, np.ndarray]:
        """Times and values of the blow-up monitor."""
        return self.trace.times, self.trace.monitor()

    def to_dict(self) -> dict:
        times, phi = self.history
        return {
            "status": self.status,
            "t_end": self.t_end,
            "t_star": self.t_star,
            "threshold": self.threshold,
            "failed_window": self.failed_window,
            "reason": self.reason,
            "events": list(self.events),
            "windows": [
                {"index": i, "t_start": w.t_start, "T": w.T, "dt": w.dt, "steps": w.steps,
                 "M": w.M, "fbar_M1": w.fbar_M1, "C0_comp": w.C0_comp, "C1_contr": w.C1_contr,
                 "picard_iters": w.picard_iters,
                 "contraction_estimate": w.contraction_estimate, "residual": w.residual,
                 "membership_ok": w.membership_ok, "fbar_exact": w.fbar_exact,
                 "window_bound": w.bound}
                for i, w in enumerate(self.windows)],
            "monitor": {"t": times.tolist(), "value": phi.tolist()},
        }


def _monitor(grid, u, ut, p, q) -> np.ndarray:
    both = np.stack([u, ut])
    return (_ysp(grid, both, p, q).sum(axis=0)
            + lp_values(grid, both, np.inf, q).sum(axis=0))


def continue_solve(phi: Field, psi: Field, f: NonlinearitySpec, A: OperatorSpec,
                   form: EllipticForm, horizon: float, blowup_threshold: float | None = None,
                   dt: float | None = None, tol: float = 1e-10, max_iters: int = 50,
                   C0: float = 1.0, C1: float = 1.0, p: float = 2.0, q: float = 2.0,
                   steps_per_window: int = 64, min_steps: int = 2,
                   max_window: float | None = None, max_windows: int = 100_000,
                   max_retries: int = 8, record: str = "all",
                   dealias: bool = True, rng_seed: int = 0) -> ContinuationReport:
    """Solve on ``[0, horizon]`` by successive windows.

    Each window takes ``M`` from the current state, its length from
    :func:`window_length` (halved when the majorant of ``f`` is only
    sampled), solves by :func:`picard_solve` and restarts from the final
    ``(u, u_t)``.  ``dt`` fixes the step (windows get ``ceil(T/dt)`` steps,
    at least ``min_steps``); without it every window has
    ``steps_per_window`` steps.  The run stops as ``BlowUpSuspected`` once
    the monitor ``||u||_{Y^{2,p}} + ||u||_inf + ||u_t||_{Y^{2,p}} + ||u_t||_inf``
    exceeds the threshold (default ``1e6`` times its initial value).

    A window whose Picard iteration fails, or whose measured contraction
    factor reaches one, is halved and retried up to ``max_retries`` times.
    ``record="endpoints"`` keeps only window end states in the trace.
    """
    _same_grid(phi, psi)
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if not f.zero_at_zero:
        raise ValueError("continuation needs f(0) = 0; move constant forcing into g")
    if record not in ("all", "endpoints"):
        raise ValueError("record must be 'all' or 'endpoints'")
    grid = phi.grid
    u0 = to_physical(phi).values
    ut0 = to_physical(psi).values
    phi0 = float(_monitor(grid, u0[None], ut0[None], p, q)[0])
    threshold = 1e6 * phi0 if blowup_threshold is None else float(blowup_threshold)
    if not threshold > 0 and phi0 > 0:
        raise ValueError("blow-up threshold must be positive")
    safety = 1.0 if (f.exact_fbar or f.is_zero) else 0.5

    times, us, uts = [0.0], [u0], [ut0]
    norms_parts = [SolutionTrace(grid, [0.0], u0[None], ut0[None], s=S_WINDOW, p=p, q=q).norms]
    win_idx, iters, contr = [0], [0], [0.0]
    windows: list[SolveWindow] = []
    events: list[str] = []
    status, t_star, failed, reason = COMPLETED, None, None, None
    t = 0.0
    cur_phi, cur_psi = Field(grid, u0), Field(grid, ut0)
    table_cache: dict = {}
    M_next = phi0  # the monitor at a time equals M for the state at that time
    eps = 1e-12 * horizon

    while horizon - t > eps:
        if len(windows) >= max_windows:
            status, failed, reason = FAILED, len(windows), "window budget exhausted"
            break
        M = amplitude_M(cur_phi, cur_psi, p, q) if M_next is None else M_next
        fb = fbar(f, M + 1.0, seed=rng_seed)
        T = window_length(M, fb, C0, C1) * safety
        if max_window is not None:
            T = min(T, max_window)
        T = min(T, horizon - t)
        if T <= eps:
            status, failed, reason = FAILED, len(windows), f"window length underflow (T={T:.3e})"
            break
        attempt = 0
        while True:
            if dt is None:
                steps = steps_per_window
            else:
                steps = max(min_steps, int(math.ceil(T / dt - 1e-9)))
            dt_w = T / steps
            if dt is not None and abs(steps * dt - T) <= 1e-12 * max(1.0, T):
                dt_w = dt
            if (dt_w, steps) not in table_cache:
                table_cache = {(dt_w, steps): build_kernel_table(A, form, grid, dt_w, steps)}
            table = table_cache[(dt_w, steps)]
            try:
                trace, win = picard_solve(cur_phi, cur_psi, f, A, form, steps * dt_w, dt=dt_w,
                                          tol=tol, max_iters=max_iters, C0=C0, C1=C1, p=p, q=q,
                                          steps=steps, table=table, enforce_window=False,
                                          dealias=dealias, M=M, rng_seed=rng_seed)
                if win.contraction_estimate >= 1.0:
                    raise MaxItersExceeded(
                        f"measured contraction {win.contraction_estimate:.3f} >= 1",
                        win.differences, win.ratios)
                break
            except MaxItersExceeded as err:
                attempt += 1
                if attempt > max_retries:
                    status, failed = FAILED, len(windows)
                    reason = f"window {len(windows)} at t={t:.6g}: {err}"
                    break
                events.append(f"calibration: window {len(windows)} at t={t:.6g} halved "
                              f"from T={T:.6g} ({err})")
                log.info(events[-1])
                T *= 0.5
            except NonFiniteError as err:
                status, failed = FAILED, len(windows)
                reason = f"window {len(windows)} at t={t:.6g}: {err}"
                break
        if status == FAILED:
            break

        win = SolveWindow(**{**win.__dict__, "t_start": t})
        if windows and win.T < windows[-1].T and win.M > windows[-1].M:
            log.debug("window shrank to T=%.3e as M grew to %.3e", win.T, win.M)
        windows.append(win)
        k0 = len(windows) - 1
        sel = slice(1, None) if record == "all" else slice(-1, None)
        local_t = t + trace.times[sel]
        if horizon - local_t[-1] <= eps:
            local_t[-1] = horizon
        times.extend(local_t.tolist())
        us.extend(trace.u[sel])
        uts.extend(trace.ut[sel])
        norms_parts.append({k: v[sel] for k, v in trace.norms.items()})
        nsel = local_t.size
        win_idx.extend([k0] * nsel)
        iters.extend([win.picard_iters] * nsel)
        contr.extend([win.contraction_estimate] * nsel)

        mon = trace.monitor()
        over = np.flatnonzero(mon[1:] > threshold)
        t_next = t + trace.times[-1]
        cur_phi, cur_psi = trace.state(-1), trace.velocity(-1)
        M_next = float(mon[-1])
        t = t_next if horizon - t_next > eps else horizon
        if over.size:
            status = BLOWUP
            t_star = float(windows[-1].t_start + trace.times[1 + over[0]])
            events.append(f"monitor {mon[1 + over[0]]:.6g} exceeded threshold "
                          f"{threshold:.6g} at t={t_star:.6g}")
            log.warning(events[-1])
            break

    norms = {k: np.concatenate([part[k] for part in norms_parts]) for k in norms_parts[0]}
    glued = SolutionTrace(grid, np.array(times), np.array(us), np.array(uts),
                          s=S_WINDOW, p=p, q=q, norms=norms)
    return ContinuationReport(status, windows, glued, np.array(win_idx), np.array(iters),
                              np.array(contr), float(times[-1]), threshold, t_star=t_star,
                              failed_window=failed, reason=reason, events=events)
