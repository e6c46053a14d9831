"""Pointwise nonlinearities ``f: E -> E`` with closed-form derivatives.

Built-ins are polynomial systems: component ``m`` of ``f(u)`` is a sum of
monomials ``c * prod_i u_i^{e_i}``.  Arrays of states carry the component
axis first, so ``evaluate`` maps ``(N, ...) -> (N, ...)``, ``d1`` gives
``(N, N, ...)``, ``d2`` gives ``(N, N, N, ...)`` and so on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import qmc

Monomial = tuple[int, complex, tuple[int, ...]]  # (component, coefficient, exponents)


def _diff_terms(terms: list[Monomial], var: int) -> list[Monomial]:
    out = []
    for m, c, e in terms:
        if e[var] > 0:
            e2 = list(e)
            e2[var] -= 1
            out.append((m, c * e[var], tuple(e2)))
    return out


def _eval_terms(terms: list[Monomial], u: np.ndarray, n_out: int) -> np.ndarray:
    out = np.zeros((n_out,) + u.shape[1:], dtype=np.result_type(u.dtype, float))
    for m, c, e in terms:
        mono = c
        for i, k in enumerate(e):
            if k:
                mono = mono * u[i] ** k
        out[m] = out[m] + mono
    return out


class Polynomial:
    """Polynomial map ``C^N -> C^N`` with derivative tensors up to order three."""

    def __init__(self, components: int, terms):
        self.components = n = int(components)
        self.terms = [(int(m), c, tuple(int(k) for k in e)) for m, c, e in terms]
        for m, _, e in self.terms:
            if not 0 <= m < n or len(e) != n or min(e, default=0) < 0:
                raise ValueError(f"bad monomial ({m}, {e}) for {n} components")
        # derivative term lists indexed by flattened multi-index of variables
        self.d1_terms = [_diff_terms(self.terms, i) for i in range(n)]
        self.d2_terms = [[_diff_terms(t, j) for j in range(n)] for t in self.d1_terms]
        self.d3_terms = [[[_diff_terms(t, k) for k in range(n)] for t in row]
                         for row in self.d2_terms]

    def __call__(self, u):
        return _eval_terms(self.terms, u, self.components)

    def d1(self, u):
        n = self.components
        # result[m, i] = d f_m / d u_i
        parts = [_eval_terms(self.d1_terms[i], u, n) for i in range(n)]
        return np.stack(parts, axis=1)

    def d2(self, u):
        n = self.components
        parts = [[_eval_terms(self.d2_terms[i][j], u, n) for j in range(n)] for i in range(n)]
        return np.stack([np.stack(row, axis=1) for row in parts], axis=1)

    def d3(self, u):
        n = self.components
        parts = [[[_eval_terms(self.d3_terms[i][j][k], u, n) for k in range(n)]
                  for j in range(n)] for i in range(n)]
        return np.stack([np.stack([np.stack(r, axis=1) for r in row], axis=1)
                         for row in parts], axis=1)

    def scalar_coeffs(self) -> np.ndarray:
        """Power-series coefficients when ``N == 1``."""
        deg = max((e[0] for _, _, e in self.terms), default=0)
        c = np.zeros(deg + 1, dtype=complex)
        for _, coef, e in self.terms:
            c[e[0]] += coef
        return c


@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    """A pointwise nonlinearity with its first three derivatives.

    ``poly`` is set for built-in polynomials and enables the closed-form
    majorant when ``components == 1``.
    """

    name: str
    components: int
    evaluate: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    d3: Callable[[np.ndarray], np.ndarray]
    poly: Polynomial | None = None

    def __call__(self, u):
        return self.evaluate(u)

    @property
    def arity(self) -> int:
        return self.components

    @property
    def zero_at_zero(self) -> bool:
        z = np.zeros((self.components, 1))
        return bool(np.all(self.evaluate(z) == 0))

    @property
    def is_zero(self) -> bool:
        return self.poly is not None and all(c == 0 for _, c, _ in self.poly.terms)

    @property
    def exact_fbar(self) -> bool:
        return self.poly is not None and self.components == 1


def polynomial(components: int, terms, name: str = "poly") -> NonlinearitySpec:
    p = Polynomial(components, terms)
    return NonlinearitySpec(name, components, p, p.d1, p.d2, p.d3, poly=p)


def zero(components: int = 1) -> NonlinearitySpec:
    return polynomial(components, [], name="zero")


def power(k: int, sign: float = 1.0) -> NonlinearitySpec:
    """Scalar ``f(u) = sign * u^k``."""
    return polynomial(1, [(0, float(sign), (int(k),))], name=f"power{k}")


def scalar_poly(coeffs, name: str = "poly") -> NonlinearitySpec:
    """Scalar ``f(u) = sum_k coeffs[k] u^k``."""
    terms = [(0, float(c), (k,)) for k, c in enumerate(coeffs) if c != 0]
    return polynomial(1, terms, name=name)


def coupled_quadratic(table) -> NonlinearitySpec:
    """``f_m(u) = sum_{i,j} table[m][i][j] u_i u_j``."""
    t = np.asarray(table, dtype=float)
    n = t.shape[0]
    if t.shape != (n, n, n):
        raise ValueError(f"coupling table must be N x N x N, got {t.shape}")
    terms = []
    for m in range(n):
        for i in range(n):
            for j in range(n):
                if t[m, i, j] != 0:
                    e = [0] * n
                    e[i] += 1
                    e[j] += 1
                    terms.append((m, float(t[m, i, j]), tuple(e)))
    return polynomial(n, terms, name="coupled_quadratic")


def _tensor_norm(t: np.ndarray, order: int) -> np.ndarray:
    """Frobenius norm over the leading ``order + 1`` axes (``|.|`` when N == 1)."""
    axes = tuple(range(order + 1))
    return np.sqrt(np.sum(np.abs(t) ** 2, axis=axes))


class _AbsMax:
    """``r -> max_{|x| <= r} |p(x)|`` for a real polynomial, critical points precomputed."""

    def __init__(self, c: np.ndarray):
        c = np.real_if_close(c).astype(float)
        self.poly = np.polynomial.Polynomial(c) if c.size and np.any(c != 0) else None
        crit = []
        if self.poly is not None and c.size > 2:
            crit = [z.real for z in self.poly.deriv().roots() if abs(z.imag) < 1e-12]
        self.crit = np.array(crit, dtype=float)
        with np.errstate(over="ignore"):  # far critical points of tiny leading terms
            self.crit_vals = np.abs(self.poly(self.crit)) if self.poly is not None else self.crit

    def __call__(self, r: float) -> float:
        if self.poly is None:
            return 0.0
        edge = np.abs(self.poly(np.array([-r, r])))
        inside = self.crit_vals[np.abs(self.crit) <= r]
        return float(max(edge.max(), inside.max(initial=0.0)))


def _poly_abs_max(c: np.ndarray, r: float) -> float:
    """Exact ``max_{|x| <= r} |p(x)|`` for a real polynomial."""
    return _AbsMax(c)(r)


def _scalar_majorants(f: NonlinearitySpec) -> tuple[_AbsMax, _AbsMax]:
    cached = f.__dict__.get("_majorants")
    if cached is None:
        c = f.poly.scalar_coeffs()
        if np.any(np.imag(c) != 0):
            raise ValueError("closed-form majorant needs real coefficients")
        p = np.polynomial.Polynomial(c.real)
        d1 = p.deriv(1).coef if c.size > 1 else np.zeros(1)
        d2 = p.deriv(2).coef if c.size > 2 else np.zeros(1)
        cached = (_AbsMax(d1), _AbsMax(d2))
        object.__setattr__(f, "_majorants", cached)
    return cached


def fbar(f: NonlinearitySpec, r: float, samples: int = 10_000, seed: int = 0) -> float:
    """``max_{|x| <= r} max(|f'(x)|, |f''(x)|)``.

    Exact for scalar polynomials.  Otherwise a maximum over ``samples``
    scrambled-Sobol points in the ball plus as many on its boundary, which
    is only a lower bound (see :attr:`NonlinearitySpec.exact_fbar`).
    """
    if r < 0:
        raise ValueError("radius must be non-negative")
    if f.exact_fbar:
        m1, m2 = _scalar_majorants(f)
        return max(m1(r), m2(r))
    n = f.components
    sampler = qmc.Sobol(d=n, scramble=True, seed=seed)
    m = int(2 ** np.ceil(np.log2(max(samples, 2))))
    cube = sampler.random(m)
    dirs = qmc.MultivariateNormalQMC(np.zeros(n), seed=seed).random(m)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    # radius ~ U^{1/n} gives uniform points in the ball
    radii = cube[:, 0] ** (1.0 / n)
    pts = np.concatenate([dirs * radii[:, None], dirs], axis=0) * r
    pts = np.concatenate([pts, np.zeros((1, n))], axis=0).T
    v1 = _tensor_norm(f.d1(pts), 1)
    v2 = _tensor_norm(f.d2(pts), 2)
    return float(max(v1.max(), v2.max()))
