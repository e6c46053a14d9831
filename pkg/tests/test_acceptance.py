"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
from scipy.integrate import solve_ivp

from boussinesq.checks import nirenberg_ratio, random_psd
from boussinesq.cli import main
from boussinesq.fixedpoint import (BLOWUP, COMPLETED, _yT_values, amplitude_M,
                                   contraction_probe, continue_solve, picard_solve,
                                   window_length)
from boussinesq.grid import EllipticForm, gaussian, make_grid, zeros
from boussinesq.linear import propagate, solve_linear, verify_linear_estimates
from boussinesq.nonlinearity import coupled_quadratic, fbar, power, zero
from boussinesq.operators import OperatorSpec, build_kernel_table, cosine_kernel, sine_kernel

LAP = OperatorSpec.laplacian()
ID1 = EllipticForm.identity(1)


def _linear_run():
    g = make_grid(1, 256, 20.0)
    phi = gaussian(g, 1.0, 1.0)
    steps = 128
    tab = build_kernel_table(LAP, ID1, g, 2.0 / steps, steps)
    ph = g.fft(phi.values)
    uh, uth = propagate(tab, ph, np.zeros_like(ph), None, steps)
    return g, ph, tab, uh, uth


def test_c01_linear_exactness(accept):
    t0 = time.perf_counter()
    g, ph, tab, uh, _ = _linear_run()
    elapsed = time.perf_counter() - t0
    xi = g.axis_freqs(0)
    omega = np.abs(xi) / np.sqrt(1 + xi**2)
    t = tab.dt * np.arange(uh.shape[0])
    exact = np.cos(t[:, None] * omega[None]) * ph[0][None]
    nz = np.abs(ph[0]) > 0
    # relative to |phi_hat|, since cos(t w) itself passes through zero
    err = np.max(np.abs(uh[:, 0, nz] - exact[:, nz]) / np.abs(ph[0][nz]))
    accept(1, "linear exactness", err < 1e-11 and elapsed < 1.0,
           f"max rel err {err:.2e} (< 1e-11), {elapsed:.3f}s (< 1s)")


def test_c02_energy_conservation(accept):
    g, _, tab, uh, uth = _linear_run()
    a_xi = tab.frozen
    e = np.abs(uth[:, 0]) ** 2 + a_xi[None] * np.abs(uh[:, 0]) ** 2
    live = e[0] > 0
    drift = np.max(np.abs(e[:, live] - e[0, live]) / e[0, live])
    accept(2, "per-mode energy", drift < 1e-11, f"max rel drift {drift:.2e} over 128 steps")


def test_c03_dalembert(accept):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        m = random_psd(3, rng, scale=3.0)
        t, s = rng.uniform(-3, 3, 2)
        lhs = cosine_kernel(m, t + s) + cosine_kernel(m, t - s)
        worst = max(worst, np.max(np.abs(lhs - 2 * cosine_kernel(m, t) @ cosine_kernel(m, s))))
    J = np.array([[0.0, 1.0], [0.0, 0.0]])
    jordan = 0.0
    for t in (0.5, 1.0, 3.0, 7.0):
        jordan = max(jordan, np.max(np.abs(cosine_kernel(J, t) - (np.eye(2) - t * t / 2 * J))),
                     np.max(np.abs(sine_kernel(J, t) - (t * np.eye(2) - t**3 / 6 * J))))
    accept(3, "d'Alembert identity", worst < 1e-10 and jordan <= 1e-14,
           f"random PSD max err {worst:.2e} (< 1e-10), Jordan block err {jordan:.1e}")


def test_c04_duhamel_order(accept):
    t0 = time.perf_counter()
    g = make_grid(1, 4, 1.0)
    # zero mode with A = 1 and r = 1: u'' + u = cos t, so u = (t/2) sin t
    A = OperatorSpec.from_symbol(lambda xi: 1.0 + 0 * xi[0])
    j0 = int(np.flatnonzero(g.axis_freqs(0) == 0)[0])
    z = np.zeros((1, 4), complex)
    errs = []
    for n in (32, 64, 128, 256):
        tab = build_kernel_table(A, ID1, g, 1.0 / n, n)
        t = tab.dt * np.arange(n + 1)
        gh = np.zeros((n + 1, 1, 4), complex)
        gh[:, 0, j0] = np.cos(t)
        u, _ = propagate(tab, z, z, gh, n)
        errs.append(np.max(np.abs(u[:, 0, j0] - t / 2 * np.sin(t))))
    elapsed = time.perf_counter() - t0
    order = np.log2(errs[0] / errs[-1]) / 3
    accept(4, "Duhamel convergence", order >= 3.5 and elapsed < 1.0,
           f"observed order {order:.2f} (>= 3.5), errors {', '.join(f'{e:.1e}' for e in errs)}, "
           f"{elapsed:.3f}s")


def _small_scenario(points=64, steps=32):
    g = make_grid(1, points, 8.0)
    phi, psi = gaussian(g, 0.02, 1.0), zeros(g)
    f = power(2)
    M = amplitude_M(phi, psi)
    T = window_length(M, fbar(f, M + 1.0), 1.0, 1.0)
    return g, phi, psi, f, M, T, steps


def _probe_pairs(points, steps, pairs=10, seed=5):
    g, phi, psi, f, M, T, steps = _small_scenario(points, steps)
    tab = build_kernel_table(LAP, ID1, g, T / steps, steps)
    lin = solve_linear(LAP, ID1, phi, psi, None, T, T / steps, table=tab).u
    room = M + 1.0 - _yT_values(g, lin, 2, 2)
    rng = np.random.default_rng(seed)
    x, t = g.axis_coords(0), tab.dt * np.arange(steps + 1)
    worst = 0.0
    for _ in range(pairs):
        cands = []
        for _ in range(2):
            c, w, x0 = rng.standard_normal(3), rng.uniform(0.7, 2.0, 3), rng.uniform(-3, 3, 3)
            bump = sum(c[i] * np.exp(-((x - x0[i]) / w[i]) ** 2) for i in range(3))
            # vanishes at t = 0 so both candidates carry the data
            d = (np.sin((1 + rng.uniform()) * t / T)[:, None] * bump[None])[:, None, :]
            d = d * (rng.uniform(0.1, 1.0) * room / _yT_values(g, d, 2, 2))
            cands.append(lin + d)
        worst = max(worst, contraction_probe(cands[0], cands[1], phi, psi, f, tab, T))
    return worst, M


def test_c05_contraction(accept):
    t0 = time.perf_counter()
    base, M = _probe_pairs(64, 32)
    fine, _ = _probe_pairs(128, 64)
    elapsed = time.perf_counter() - t0
    accept(5, "contraction probe", M <= 0.2 and base <= 0.55 and fine <= 0.52 and elapsed < 30,
           f"M={M:.3f}, worst ratio {base:.2e} (<= 0.55), doubled {fine:.2e} (<= 0.52), "
           f"{elapsed:.2f}s")


def test_c06_picard(accept):
    g, phi, psi, f, M, T, steps = _small_scenario()
    _, win = picard_solve(phi, psi, f, LAP, ID1, T, dt=T / steps, tol=1e-10, max_iters=25)
    ok = all(r < 1 for r in win.ratios) and win.picard_iters <= 25 and win.residual <= 1e-9
    accept(6, "Picard fixed point", ok,
           f"{win.picard_iters} iterations, ratios {[f'{r:.1e}' for r in win.ratios]}, "
           f"residual {win.residual:.1e}")


def test_c07_uniqueness(accept):
    g, phi, psi, f, M, T, steps = _small_scenario()
    a, _ = picard_solve(phi, psi, f, LAP, ID1, T, dt=T / steps, seed="linear")
    b, _ = picard_solve(phi, psi, f, LAP, ID1, T, dt=T / steps, seed="zero")
    gap = _yT_values(g, a.u - b.u, 2, 2)
    accept(7, "uniqueness surrogate", gap <= 1e-9, f"Y(T) gap {gap:.1e} (<= 1e-9)")


def test_c08_gluing(accept):
    g = make_grid(1, 128, 16.0)
    phi, psi = gaussian(g, 0.5, 1.0), gaussian(g, 0.2, 2.0)
    rep = continue_solve(phi, psi, zero(), LAP, ID1, 1.0, dt=1 / 64, max_window=0.25)
    lin = solve_linear(LAP, ID1, phi, psi, None, 1.0, 1 / 64)
    same_t = np.allclose(rep.trace.times, lin.times, rtol=0, atol=1e-14)
    err = np.max(np.abs(rep.trace.u - lin.u)) if same_t else np.inf
    accept(8, "continuation gluing", len(rep.windows) >= 4 and err <= 1e-10,
           f"{len(rep.windows)} windows, max X_inf difference {err:.1e} (<= 1e-10)")


def test_c09_blowup_monitor(accept):
    g = make_grid(1, 64, 16.0)
    f = power(2, -1.0)
    big = gaussian(g, -5.0, 2.0)
    phi0 = amplitude_M(big, zeros(g))
    # the default 1e6 * Phi(0) threshold is out of reach on a desk: windows shrink like M^-3
    rep = continue_solve(big, zeros(g), f, LAP, ID1, 10.0, blowup_threshold=1.5 * phi0,
                         steps_per_window=2, record="endpoints")
    tail = rep.window_lengths[-3:]
    shrinking = tail.size == 3 and bool(np.all(np.diff(tail) < 0))
    small = continue_solve(gaussian(g, 0.05, 2.0), zeros(g), f, LAP, ID1, 1.0,
                           steps_per_window=8)
    ok = rep.status == BLOWUP and shrinking and small.status == COMPLETED
    accept(9, "blow-up monitor", ok,
           f"amplitude 5: {rep.status} at t*={rep.t_star} after {len(rep.windows)} windows, "
           f"final lengths {[f'{x:.8e}' for x in tail]}; amplitude 0.05: {small.status}")


def test_c10_system_against_dense_ode(accept):
    t0 = time.perf_counter()
    g = make_grid(1, 32, 8.0)
    A = OperatorSpec.weighted([1.0, 1.0], 1.0)
    table = np.array([[[1.0, 0.0], [0.0, 0.5]], [[0.0, 0.5], [0.5, 0.0]]])
    f = coupled_quadratic(table)
    phi, psi = gaussian(g, [0.02, 0.01], 1.0), gaussian(g, [0.0, 0.01], 1.5)
    rep = continue_solve(phi, psi, f, A, ID1, 0.5, dt=1 / 256)

    # brute force: physical-space first-order system with explicit DFT matrices
    x = g.axis_coords(0)
    n = x.size
    j = np.arange(n) - n // 2
    xi = np.pi * j / g.half_width[0]
    F = np.exp(-1j * np.outer(xi, x))
    Fi = np.linalg.inv(F)
    R = (Fi @ np.diag(1 / (1 + xi**2)) @ F).real
    P = (Fi @ np.diag((np.abs(j) < n / 3).astype(float)) @ F).real
    Am = np.array([[2.0, 4.0], [2.0, 4.0]])

    def rhs(_, y):
        U, V = y[: 2 * n].reshape(2, n), y[2 * n:]
        PU = U @ P.T
        fu = np.einsum("mij,ip,jp->mp", table, PU, PU)
        return np.concatenate([V, ((-(Am @ U) + fu @ P.T) @ R.T).ravel()])

    y0 = np.concatenate([phi.values.real.ravel(), psi.values.real.ravel()])
    sol = solve_ivp(rhs, (0, 0.5), y0, method="DOP853", rtol=1e-13, atol=1e-15,
                    t_eval=rep.trace.times)
    U = sol.y[: 2 * n].T.reshape(-1, 2, n)
    err = np.max(np.abs(U - rep.trace.u))
    elapsed = time.perf_counter() - t0
    accept(10, "system vs dense ODE", rep.status == COMPLETED and err <= 1e-8 and elapsed < 60,
           f"{rep.status}, {len(rep.windows)} windows, max err {err:.1e} (<= 1e-8), "
           f"{elapsed:.2f}s")


def test_c11_nirenberg_dilation(accept):
    g = make_grid(1, 1024, 20.0)
    ratios = [nirenberg_ratio(gaussian(g, 1.0, 1.0 / lam), 1, 2, 2.0, 2.0)
              for lam in (0.25, 1.0, 4.0)]
    spread = (max(ratios) - min(ratios)) / min(ratios)
    accept(11, "Nirenberg scale invariance", spread < 0.02,
           f"ratios {[f'{r:.6f}' for r in ratios]}, spread {spread:.1e} (< 2%)")


def _estimate_case(rng_state, points):
    rng = np.random.default_rng(rng_state)
    a = rng.uniform(0.5, 2.0)
    form = EllipticForm([[a]])
    g = make_grid(1, points, 16.0)
    phi = gaussian(g, rng.uniform(-2, 2), rng.uniform(0.8, 2.0), [rng.uniform(-3, 3)])
    psi = gaussian(g, rng.uniform(-2, 2), rng.uniform(0.8, 2.0), [rng.uniform(-3, 3)])
    amp, w = rng.uniform(-1, 1), rng.uniform(0.8, 2.0)
    bump = gaussian(g, 1.0, w)
    forcing = (lambda t: bump * (amp * np.cos(t))) if rng.uniform() < 0.5 else None

    tr = solve_linear(LAP, form, phi, psi, forcing, 1.0, 1 / 32)
    rep = verify_linear_estimates(tr, phi, psi, forcing)
    return rep.ratio_216, rep.ratio_217


def test_c12_estimate_ratios(accept):
    worst_change, finite = 0.0, True
    for case in range(20):
        r1 = np.array(_estimate_case(case, 128))
        r2 = np.array(_estimate_case(case, 256))
        finite &= bool(np.all(np.isfinite(r1)) and np.all(np.isfinite(r2)))
        worst_change = max(worst_change, float(np.max(np.abs(r2 - r1) / r1)))
    accept(12, "estimate ratios", finite and worst_change < 0.05,
           f"20 cases finite={finite}, worst change under doubling {worst_change:.1e} (< 5%)")


def test_c13_reproducible_csv(accept, tmp_path):
    cfg = ('scenario = "imbq_scalar"\ngrid.points = 128\ngrid.half_width = 16.0\n'
           'phi.kind = "gaussian"\nphi.amplitude = 0.05\nsolver.horizon = 0.5\n')
    blobs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        (d / "cfg.toml").write_text(cfg)
        code = main(["--threads", "1", "--seed", "42", "--quiet", "run", str(d / "cfg.toml")])
        blobs.append((code, (d / "trace.csv").read_bytes()))
    same = blobs[0] == blobs[1] and blobs[0][0] == 0
    accept(13, "reproducibility", same,
           f"exit codes {blobs[0][0]}/{blobs[1][0]}, CSV {len(blobs[0][1])} bytes, "
           f"identical={blobs[0][1] == blobs[1][1]}")
