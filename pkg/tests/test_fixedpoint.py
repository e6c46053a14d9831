import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boussinesq.errors import MaxItersExceeded
from boussinesq.fixedpoint import (BLOWUP, COMPLETED, FAILED, _yT_values, amplitude_M, apply_G,
                                   contraction_probe, continue_solve, picard_solve,
                                   uniqueness_probe, window_length, yT_norm)
from boussinesq.grid import EllipticForm, Field, gaussian, make_grid, zeros
from boussinesq.linear import solve_linear
from boussinesq.nonlinearity import NonlinearitySpec, fbar, power, scalar_poly, zero
from boussinesq.operators import OperatorSpec, build_kernel_table

LAP = OperatorSpec.laplacian()
ID1 = EllipticForm.identity(1)
G64 = make_grid(1, 64, 8.0)


def _small_data(amp=0.02):
    return gaussian(G64, amp, 1.0), zeros(G64)


def _window(phi, psi, f):
    M = amplitude_M(phi, psi)
    return window_length(M, fbar(f, M + 1.0))


# sizes

def test_window_length_examples():
    assert window_length(0.0, 0.0) == 0.5
    assert window_length(1.0, 4.0) == pytest.approx(1 / 34, rel=1e-15)
    with pytest.raises(ValueError):
        window_length(-1.0, 0.0)


@given(st.floats(0, 50), st.floats(0, 50), st.floats(0, 50))
def test_window_length_nonincreasing(M, fb, dm):
    assert window_length(M + dm, fb) <= window_length(M, fb)
    assert window_length(M, fb + dm) <= window_length(M, fb)


def test_amplitude_examples():
    g = make_grid(1, 32, np.pi)
    assert amplitude_M(zeros(g), zeros(g)) == 0.0
    c = -1.5
    const = Field(g, np.full(32, c))
    # only the zero mode is present, where the Bessel multiplier is one
    expect = abs(c) * np.sqrt(2 * np.pi) + abs(c)
    assert amplitude_M(const, zeros(g)) == pytest.approx(expect, rel=1e-13)
    assert amplitude_M(const, const) == pytest.approx(2 * expect, rel=1e-13)


@given(st.floats(-10, 10))
def test_amplitude_homogeneous(lam):
    phi, _ = _small_data(1.0)
    psi = gaussian(G64, 0.5, 2.0)
    base = amplitude_M(phi, psi)
    assert amplitude_M(phi * lam, psi * lam) == pytest.approx(abs(lam) * base, rel=1e-12)


def test_yT_norm_reads_stored_norms():
    phi, psi = _small_data(1.0)
    tr = solve_linear(LAP, ID1, phi, psi, None, 0.5, 0.125)
    assert yT_norm(tr) == pytest.approx(_yT_values(G64, tr.u, 2, 2), rel=1e-14)
    with pytest.raises(ValueError):
        yT_norm(solve_linear(LAP, ID1, phi, psi, None, 0.5, 0.125, s=1.0))


# the map G

def test_G_with_zero_f_ignores_candidate():
    phi, psi = _small_data()
    tab = build_kernel_table(LAP, ID1, G64, 0.05, 4)
    rng = np.random.default_rng(0)
    a = apply_G(rng.standard_normal((5, 1, 64)), phi, psi, zero(), tab, 0.2)
    b = apply_G(np.zeros((5, 1, 64)), phi, psi, zero(), tab, 0.2)
    lin = solve_linear(LAP, ID1, phi, psi, None, 0.2, 0.05)
    assert np.array_equal(a.u, b.u)
    assert np.max(np.abs(a.u - lin.u)) < 1e-15


def test_G_of_zero_is_linear_solution_for_quadratic_f():
    phi, psi = _small_data(0.5)
    tab = build_kernel_table(LAP, ID1, G64, 0.05, 4)
    out = apply_G(np.zeros((5, 1, 64)), phi, psi, power(2), tab, 0.2)
    lin = solve_linear(LAP, ID1, phi, psi, None, 0.2, 0.05)
    assert np.max(np.abs(out.u - lin.u)) < 1e-15


def test_G_rejects_misaligned_window():
    phi, psi = _small_data()
    tab = build_kernel_table(LAP, ID1, G64, 0.05, 4)
    with pytest.raises(Exception):
        apply_G(np.zeros((5, 1, 64)), phi, psi, power(2), tab, 0.17)


# Picard

def test_picard_zero_f_one_iteration():
    phi, psi = _small_data(0.5)
    tr, win = picard_solve(phi, psi, zero(), LAP, ID1, 0.25, dt=1 / 64)
    assert win.picard_iters == 1 and win.differences[0] == 0.0
    lin = solve_linear(LAP, ID1, phi, psi, None, 0.25, 1 / 64)
    assert np.max(np.abs(tr.u - lin.u)) < 1e-14


def test_picard_small_data_contracts():
    phi, psi = _small_data()
    f = power(2)
    T = _window(phi, psi, f)
    tr, win = picard_solve(phi, psi, f, LAP, ID1, T, dt=T / 32)
    assert win.picard_iters <= 25
    assert all(r <= 0.55 for r in win.ratios)
    assert win.residual <= 1e-9 and win.membership_ok
    assert win.T == pytest.approx(T) and win.T <= win.bound * (1 + 1e-12)
    assert np.array_equal(tr.u[0], phi.values)


def test_picard_rejects_oversized_window():
    phi, psi = _small_data()
    f = power(2)
    T = _window(phi, psi, f)
    with pytest.raises(ValueError, match="admissible"):
        picard_solve(phi, psi, f, LAP, ID1, 2 * T, dt=T / 8)


def test_picard_budget_exhaustion_keeps_history():
    phi, psi = _small_data(0.5)
    with pytest.raises(MaxItersExceeded) as info:
        picard_solve(phi, psi, power(2), LAP, ID1, 0.2, dt=0.05, max_iters=2, tol=1e-300,
                     enforce_window=False)
    assert len(info.value.history) == 2 and len(info.value.ratios) == 1


def test_contraction_probe_examples():
    phi, psi = _small_data()
    f = power(2)
    T = _window(phi, psi, f)
    tab = build_kernel_table(LAP, ID1, G64, T / 16, 16)
    u = np.random.default_rng(1).standard_normal((17, 1, 64)) * 0.1
    assert contraction_probe(u, u, phi, psi, f, tab, T) == 0.0
    # f = 0 makes G constant
    assert contraction_probe(u, 2 * u, phi, psi, zero(), tab, T) == 0.0
    assert 0 < contraction_probe(u, 2 * u, phi, psi, f, tab, T) < 0.5


def test_uniqueness_probe():
    phi, psi = _small_data()
    f = power(2)
    T = _window(phi, psi, f)
    a, _ = picard_solve(phi, psi, f, LAP, ID1, T, dt=T / 16)
    b, _ = picard_solve(phi, psi, f, LAP, ID1, T, dt=T / 16, seed="zero")
    assert uniqueness_probe(a, a) == 0.0
    assert uniqueness_probe(a, b) <= 1e-9
    c, _ = picard_solve(phi * 2.0, psi, f, LAP, ID1, T / 2, dt=T / 32)
    with pytest.raises(Exception):
        uniqueness_probe(a, c)
    d, _ = picard_solve(phi * 2.0, psi, f, LAP, ID1, T, dt=T / 16, enforce_window=False)
    assert uniqueness_probe(a, d) > 0.01


# continuation

def test_gluing_matches_single_shot():
    phi, psi = _small_data(0.5)
    rep = continue_solve(phi, psi, zero(), LAP, ID1, 1.0, dt=1 / 64, max_window=0.25)
    lin = solve_linear(LAP, ID1, phi, psi, None, 1.0, 1 / 64)
    assert rep.status == COMPLETED and len(rep.windows) == 4
    assert np.allclose(rep.trace.times, lin.times, rtol=0, atol=1e-14)
    assert np.max(np.abs(rep.trace.u - lin.u)) < 1e-10
    # seams carry the state exactly
    starts = [w.t_start for w in rep.windows]
    assert starts == pytest.approx([0.0, 0.25, 0.5, 0.75])


def test_zero_data_stays_zero():
    g = make_grid(1, 16, 4.0)
    rep = continue_solve(zeros(g), zeros(g), power(2), LAP, ID1, 1.0, steps_per_window=4)
    assert rep.status == COMPLETED and rep.t_end == 1.0
    assert not np.any(rep.trace.u) and np.all(rep.history[1] == 0)


def test_endpoint_recording_and_report_columns():
    phi, psi = _small_data()
    rep = continue_solve(phi, psi, power(2), LAP, ID1, 0.5, steps_per_window=8,
                         record="endpoints")
    n = len(rep.windows)
    assert len(rep.trace) == n + 1
    assert rep.window_index.tolist() == [0] + list(range(n))
    assert rep.trace.times[-1] == 0.5
    d = rep.to_dict()
    assert d["status"] == COMPLETED and len(d["windows"]) == n


def test_growing_solution_shrinks_windows_and_flags_blowup():
    g = make_grid(1, 64, 16.0)
    phi = gaussian(g, -5.0, 2.0)
    f = power(2, -1.0)
    phi0 = amplitude_M(phi, zeros(g))
    rep = continue_solve(phi, zeros(g), f, LAP, ID1, 10.0, blowup_threshold=1.05 * phi0,
                         steps_per_window=2, record="endpoints")
    assert rep.status == BLOWUP and rep.t_star is not None
    lengths = rep.window_lengths
    assert np.all(np.diff(lengths[-3:]) < 0)
    assert rep.history[1][-1] > rep.threshold >= rep.history[1][-2]


def test_overflow_reports_iteration_failed():
    def ev(u):
        return np.where(np.abs(u) > 0.5, np.inf, u * u)

    f = NonlinearitySpec("guard", 1, ev, lambda u: 2 * u[None], lambda u: 2 + 0 * u[None, None],
                         lambda u: 0 * u[None, None, None])
    phi = gaussian(G64, 1.0, 1.0)
    rep = continue_solve(phi, zeros(G64), f, LAP, ID1, 1.0, steps_per_window=4)
    assert rep.status == FAILED and rep.failed_window == 0 and "not finite" in rep.reason


def test_rejects_nonzero_f_at_zero():
    phi, psi = _small_data()
    with pytest.raises(ValueError, match="f\\(0\\)"):
        continue_solve(phi, psi, scalar_poly([1.0, 0.0, 1.0]), LAP, ID1, 1.0)


@settings(max_examples=5, deadline=None)
@given(st.floats(0.005, 0.03))
def test_small_data_completes(amp):
    phi, psi = _small_data(amp)
    rep = continue_solve(phi, psi, power(2), LAP, ID1, 0.5, steps_per_window=8)
    assert rep.status == COMPLETED
    assert all(w.membership_ok for w in rep.windows)
    assert np.all(rep.contraction < 1)
