import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boussinesq.checks import (composition_norm_check, composition_suite, cosine_identity_check,
                               cosine_suite, derivative_tensor, nirenberg_exponent,
                               nirenberg_ratio, random_psd, run_check_suite)
from boussinesq.grid import Field, gaussian, make_grid, plane_mode
from boussinesq.nonlinearity import coupled_quadratic, power, scalar_poly

G1 = make_grid(1, 1024, 20.0)


def test_exponent_relation():
    assert nirenberg_exponent(0, 2, 2.0, 2.0, 1) == 0.5
    # i=1, m=2, p=q=2, n=1 gives r = 2
    assert nirenberg_exponent(1, 2, 2.0, 2.0, 1) == 0.5


@pytest.mark.parametrize("n", [1, 2, 3])
def test_nirenberg_identity_case(n):
    g = make_grid(n, 16, 6.0)
    u = gaussian(g, 1.3, 1.0)
    assert nirenberg_ratio(u, 0, 2, 2.0, 2.0) == pytest.approx(1.0, rel=1e-13)


def test_nirenberg_gaussian_closed_form():
    # with |hat u|^2 ~ exp(-xi^2 / 2): ||u'||^2 : ||u||^2 : ||u''||^2 = 1 : 1 : 3
    for lam in (0.25, 1.0, 4.0):
        r = nirenberg_ratio(gaussian(G1, 1.0, 1.0 / lam), 1, 2, 2.0, 2.0)
        assert r == pytest.approx(3 ** -0.25, rel=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.5, 2.0), st.floats(0.1, 10.0))
def test_nirenberg_scale_and_amplitude_invariance(width, amp):
    base = nirenberg_ratio(gaussian(G1, 1.0, width), 1, 2, 2.0, 2.0)
    assert nirenberg_ratio(gaussian(G1, amp, width), 1, 2, 2.0, 2.0) == pytest.approx(
        base, rel=1e-9)


def test_nirenberg_vector_close_to_scalar():
    g = make_grid(1, 512, 20.0)
    a = gaussian(g, 1.0, 1.0)
    b = gaussian(g, 0.5, 2.0, center=3.0)
    vec = Field(g, np.concatenate([a.values, b.values]))
    rv = nirenberg_ratio(vec, 1, 2, 2.0, 2.0)
    for comp in (a, b):
        rs = nirenberg_ratio(comp, 1, 2, 2.0, 2.0)
        assert 0.5 * rs <= rv <= 2.0 * rs


def test_nirenberg_rejections():
    u = gaussian(make_grid(2, 16, 5.0))
    with pytest.raises(ValueError):
        nirenberg_ratio(u, 3, 2, 2.0, 2.0)
    with pytest.raises(ValueError):
        nirenberg_ratio(u, 0, 1, 2.0, 2.0)  # m <= n/q
    with pytest.raises(ValueError):
        nirenberg_ratio(gaussian(make_grid(1, 16, 5.0)), 2, 2, 2.0, 0.2)  # m <= n/q


def test_derivative_tensor_of_plane_mode():
    g = make_grid(2, 16, np.pi)
    u = plane_mode(g, (1, 2), kind="sin")
    d1 = derivative_tensor(u, 1)
    d2 = derivative_tensor(u, 2)
    x, y = g.coords()
    assert d1.shape == (2, 1, 16, 16) and d2.shape == (4, 1, 16, 16)
    assert np.allclose(d1[1, 0], 2 * np.cos(x + 2 * y), atol=1e-12)
    assert np.allclose(d2[1, 0], -2 * np.sin(x + 2 * y), atol=1e-12)
    assert np.allclose(d2[1], d2[2], atol=1e-13)


def test_composition_linear_f_is_one():
    u = gaussian(G1, 2.0, 1.5)
    for k in (1, 2):
        assert composition_norm_check(power(1), u, k, 2.0) == pytest.approx(1.0, rel=1e-12)


def test_composition_zero_order_constant_field():
    g = make_grid(1, 32, 3.0)
    c = Field(g, np.full(32, 0.7))
    for p in (1.0, 2.0, 4.0):
        assert composition_norm_check(power(2), c, 0, p) == pytest.approx(0.5, rel=1e-13)


def test_composition_k2_stable_under_refinement():
    vals = []
    for pts in (128, 256, 512):
        g = make_grid(1, pts, 20.0)
        vals.append(composition_norm_check(power(2), gaussian(g, 1.0, 1.0), 2, 2.0))
    assert np.isfinite(vals).all()
    assert abs(vals[2] - vals[0]) <= 0.1 * vals[2]


def test_composition_rejects_bad_k():
    with pytest.raises(ValueError):
        composition_norm_check(power(2), gaussian(G1), 3, 2.0)


def test_composition_suite_vector_f():
    f = coupled_quadratic([[[1.0, 0.0], [0.0, 0.0]], [[0.0, 1.0], [0.0, 0.0]]])
    rep = composition_suite(f, 1, 128, 16.0, k=1)
    assert rep.passed and np.isfinite(rep.worst_ratio)


def test_cosine_identity_examples():
    pairs = [(0.3, 1.1), (-2.0, 0.5), (5.0, 5.0)]
    assert cosine_identity_check(np.zeros((2, 2)), pairs) == 0.0
    assert cosine_identity_check(1.0, pairs) < 1e-14
    rng = np.random.default_rng(5)
    ts = rng.uniform(-3, 3, size=(100, 2))
    assert cosine_identity_check(random_psd(3, rng), ts) < 1e-10


def test_cosine_suite_passes():
    rep = cosine_suite(np.random.default_rng(0))
    assert rep.passed and rep.samples == 100


def test_check_suite_reports():
    reps = run_check_suite(1, 128, 16.0, f=scalar_poly([0, 0, 1, 0.5]))
    assert [r.name.split("(")[0] for r in reps] == ["nirenberg"] + ["composition"] * 3 + [
        "cosine_identity"]
    assert all(r.passed for r in reps)
    d = reps[0].to_dict()
    assert d["pass"] is True and len(d["refinement_trend"]) == 2
