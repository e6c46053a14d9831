"""Numerical checks of the inequality toolbox behind the local theory.

Three families are measured on the periodic grid:

* the Gagliardo-Nirenberg interpolation inequality at the endpoint
  ``mu = i/m``;
* the composition estimate for ``D^k f(u)``;
* the d'Alembert identity ``C(t+s) + C(t-s) = 2 C(t) C(s)`` of the cosine
  family.

Each returns a ratio of the left side to the right side with the unknown
constant dropped, so the worst ratio over a family is an empirical
constant.  All derivatives are spectral.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .grid import (Field, SpectralGrid, derivative_multiplier, gaussian, lp_values, make_grid,
                   to_physical)
from .nonlinearity import NonlinearitySpec, _tensor_norm, power
from .operators import cosine_kernel


@dataclass
class InequalityReport:
    """Worst ratio of a sample family and how it moves under grid refinement.

    ``refinement_trend`` lists ``(points_per_axis, worst_ratio)``;
    ``passed`` means the last two entries differ by less than ``trend_tol``
    (relative).
    """

    name: str
    samples: int
    worst_ratio: float
    empirical_constant: float
    refinement_trend: list = field(default_factory=list)
    passed: bool = True
    per_sample: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"name": self.name, "samples": self.samples, "worst_ratio": self.worst_ratio,
                "empirical_constant": self.empirical_constant,
                "refinement_trend": [list(map(float, r)) for r in self.refinement_trend],
                "pass": bool(self.passed), "per_sample": [float(x) for x in self.per_sample]}


def derivative_tensor(u: Field, order: int) -> np.ndarray:
    """All ordered ``order``-th partial derivatives, shape ``(n^order, N, *points)``."""
    grid = u.grid
    vals = to_physical(u).values
    if order == 0:
        return vals[None]
    spec = grid.fft(vals)
    out = []
    for combo in itertools.product(range(grid.n_dims), repeat=order):
        mult = np.ones(grid.shape, dtype=complex)
        for axis in set(combo):
            mult = mult * derivative_multiplier(grid, axis, combo.count(axis))
        out.append(grid.ifft(spec * mult))
    out = np.stack(out)
    return out.real.astype(complex) if np.all(vals.imag == 0) else out


def _tensor_lp(grid: SpectralGrid, d: np.ndarray, r: float, q: float) -> float:
    """``L^r`` norm of the pointwise size of a derivative tensor.

    The size is the Euclidean norm over derivative indices followed by the
    ``l_q`` norm over components.
    """
    per_comp = np.sqrt(np.sum(np.abs(d) ** 2, axis=0))
    return float(lp_values(grid, per_comp, r, q))


def nirenberg_exponent(i: int, m: int, p: float, q: float, n: int) -> float:
    """``1/r = i/n + mu (1/q - m/n) + (1 - mu)/p`` at ``mu = i/m``."""
    mu = i / m
    return i / n + mu * (1.0 / q - m / n) + (1.0 - mu) / p


def nirenberg_ratio(u: Field, i: int, m: int, p: float, q: float,
                    q_inner: float = 2.0) -> float:
    """``||D^i u||_r / (||u||_p^{1-mu} (sum_k ||D_k^m u||_q)^mu)`` with ``mu = i/m``.

    Raises
    ------
    ValueError
        For ``i`` outside ``[0, m]``, ``m <= n/q`` or exponents giving
        ``r <= 0``.
    """
    n = u.grid.n_dims
    if not 0 <= i <= m or m < 1:
        raise ValueError(f"need 0 <= i <= m and m >= 1, got i={i}, m={m}")
    if not m > n / q:
        raise ValueError(f"need m > n/q, got m={m}, n={n}, q={q}")
    inv_r = nirenberg_exponent(i, m, p, q, n)
    if inv_r < 0:
        raise ValueError(f"incompatible exponents: 1/r = {inv_r:g}")
    r = np.inf if inv_r == 0 else 1.0 / inv_r
    mu = i / m
    grid = u.grid
    vals = to_physical(u).values
    lhs = _tensor_lp(grid, derivative_tensor(u, i), r, q_inner)
    base = float(lp_values(grid, vals, p, q_inner))
    spec = grid.fft(vals)
    top = 0.0
    for k in range(n):
        dk = grid.ifft(spec * derivative_multiplier(grid, k, m))
        top += float(lp_values(grid, dk, q, q_inner))
    rhs = base ** (1.0 - mu) * top ** mu
    return lhs / rhs


def composition_norm_check(f: NonlinearitySpec, u: Field, k: int, p: float,
                           q_inner: float = 2.0) -> float:
    """Ratio of ``||D^k f(u)||_p`` to ``sum_j ||f^(j)(u)||_inf ||u||_inf^{j-1} ||D^k u||_p``.

    ``k = 0`` measures ``||f(u) - f(0)||_p / (||f'(u)||_inf ||u||_p)``
    instead.  The sum runs over ``j = 1..k``.
    """
    if k not in (0, 1, 2):
        raise ValueError(f"k must be 0, 1 or 2, got {k}")
    grid = u.grid
    vals = to_physical(u).values
    if np.any(vals.imag != 0):
        raise ValueError("composition check needs a real field")
    fu = f(vals.real)
    derivs = [f.d1(vals.real), f.d2(vals.real)]
    sup = [float(np.max(_tensor_norm(d, j + 1))) for j, d in enumerate(derivs)]
    if k == 0:
        f0 = f(np.zeros((vals.shape[0], 1)))
        lhs = float(lp_values(grid, (fu - f0.reshape((-1,) + (1,) * grid.n_dims)).astype(complex),
                              p, q_inner))
        rhs = sup[0] * float(lp_values(grid, vals, p, q_inner))
    else:
        lhs = _tensor_lp(grid, derivative_tensor(Field(grid, fu.astype(complex)), k), p, q_inner)
        dku = _tensor_lp(grid, derivative_tensor(u, k), p, q_inner)
        usup = float(lp_values(grid, vals, np.inf, q_inner))
        rhs = sum(sup[j - 1] * usup ** (j - 1) for j in range(1, k + 1)) * dku
    if rhs == 0:
        return 0.0 if lhs == 0 else np.inf
    return lhs / rhs


def cosine_identity_check(M, pairs) -> float:
    """Largest entrywise ``|C(t+s) + C(t-s) - 2 C(t) C(s)|`` over ``pairs``."""
    M = np.asarray(M)
    worst = 0.0
    for t, s in pairs:
        ct, cs = cosine_kernel(M, t), cosine_kernel(M, s)
        lhs = cosine_kernel(M, t + s) + cosine_kernel(M, t - s)
        prod = ct @ cs if np.ndim(ct) == 2 else ct * cs
        worst = max(worst, float(np.max(np.abs(lhs - 2.0 * prod))))
    return worst


def random_psd(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    b = rng.standard_normal((n, n))
    return scale * (b @ b.T) / n


# ---------------------------------------------------------------- suite

def _refine(name: str, per_res: dict, trend_tol: float) -> InequalityReport:
    """Collapse ``{points: [ratios]}`` into a report; the finest level is reported."""
    levels = sorted(per_res)
    trend = [(lv, float(np.max(per_res[lv]))) for lv in levels]
    finest = per_res[levels[-1]]
    worst = trend[-1][1]
    passed = bool(np.all(np.isfinite(finest)))
    if len(trend) > 1:
        a, b = trend[-2][1], trend[-1][1]
        passed = passed and abs(b - a) <= trend_tol * max(abs(a), abs(b), 1e-300)
    return InequalityReport(name, len(finest), worst, worst, trend, passed, list(finest))


def nirenberg_suite(n_dims: int, points: int, half_width: float, p: float = 2.0,
                    q: float = 2.0, i: int = 1, m: int = 2,
                    dilations=(0.25, 1.0, 4.0), trend_tol: float = 0.1) -> InequalityReport:
    """Dilated Gaussians ``exp(-|lambda x|^2)`` at two resolutions."""
    per_res = {}
    for pts in (points, 2 * points):
        grid = make_grid(n_dims, pts, half_width)
        per_res[pts] = [nirenberg_ratio(gaussian(grid, 1.0, 1.0 / lam), i, m, p, q)
                        for lam in dilations]
    return _refine(f"nirenberg(i={i},m={m},p={p:g},q={q:g})", per_res, trend_tol)


def composition_suite(f: NonlinearitySpec, n_dims: int, points: int, half_width: float,
                      p: float = 2.0, k: int = 2, amplitudes=(0.1, 1.0, 10.0),
                      trend_tol: float = 0.1) -> InequalityReport:
    """Gaussians of several amplitudes (one per component of ``f``) at two resolutions."""
    per_res = {}
    for pts in (points, 2 * points):
        grid = make_grid(n_dims, pts, half_width)
        per_res[pts] = [
            composition_norm_check(f, gaussian(grid, [a] * f.components, 1.0), k, p)
            for a in amplitudes]
    return _refine(f"composition(f={f.name},k={k},p={p:g})", per_res, trend_tol)


def cosine_suite(rng: np.random.Generator, n: int = 3, pairs: int = 100) -> InequalityReport:
    """d'Alembert identity for one random PSD matrix over random ``(t, s)`` pairs."""
    M = random_psd(n, rng)
    ts = rng.uniform(-3.0, 3.0, size=(pairs, 2))
    errs = [cosine_identity_check(M, [tuple(pair)]) for pair in ts]
    worst = float(max(errs))
    return InequalityReport("cosine_identity", pairs, worst, worst, [], worst < 1e-10, errs)


def run_check_suite(n_dims: int = 1, points: int = 256, half_width: float = 20.0,
                    p: float = 2.0, f: NonlinearitySpec | None = None,
                    seed: int = 0) -> list[InequalityReport]:
    """Reports for the interpolation, composition and cosine-family checks."""
    f = power(2) if f is None else f
    rng = np.random.default_rng(seed)
    reports = [nirenberg_suite(n_dims, points, half_width, p=p, q=p)]
    for k in (0, 1, 2):
        reports.append(composition_suite(f, n_dims, points, half_width, p=p, k=k))
    reports.append(cosine_suite(rng))
    return reports
