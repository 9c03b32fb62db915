import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfh.functional import FunctionalContext
from rfh.nonlinearity import (
    EvaluationError, InfeasibleExponentsError, LinearCombination, NonlinearitySpec,
    check_hypotheses, exponent_condition, integral_H, sample_fiber, select_s,
)
from rfh.spectral import PairField, build_circle_spectrum


def scan_interval(n, p, q, step=1e-4):
    """Independent oracle: scan both strict inequalities over s in (0, 1)."""
    s = np.arange(step, 1.0, step)
    ok_p = np.where(n - 2 * s > 0, p < (n + 2 * s) / np.where(n - 2 * s > 0, n - 2 * s, 1), True)
    den = n + 2 * s - 2
    ok_q = np.where(den > 0, q < (n + 2 - 2 * s) / np.where(den > 0, den, 1), True)
    good = s[ok_p & ok_q]
    return (good.min(), good.max()) if good.size else None


def test_select_s_n3_example():
    wit = select_s(3, 1.2, 1.2)
    assert wit.interval == pytest.approx((0.13636, 0.86364), abs=1e-5)
    assert wit.s == pytest.approx(0.5)
    lo, hi = scan_interval(3, 1.2, 1.2)
    assert lo == pytest.approx(wit.interval[0], abs=2e-4)
    assert hi == pytest.approx(wit.interval[1], abs=2e-4)


def test_select_s_borderline_is_infeasible():
    with pytest.raises(InfeasibleExponentsError, match=r"1/\(p\+1\) \+ 1/\(q\+1\)"):
        select_s(3, 2, 2)


@given(st.floats(1.01, 50), st.floats(1.01, 50))
def test_select_s_always_feasible_on_curves(p, q):
    wit = select_s(1, p, q)
    n, s = 1, wit.s
    assert 0 < wit.interval[0] < s < wit.interval[1] <= 1
    assert p < (n + 2 * s) / (n - 2 * s) if n - 2 * s > 0 else True
    assert q < (n + 2 - 2 * s) / (n + 2 * s - 2) if n + 2 * s - 2 > 0 else True


@given(st.integers(2, 5), st.floats(1.05, 4), st.floats(1.05, 4))
def test_select_s_agrees_with_scan_and_exponent_condition(n, p, q):
    scan = scan_interval(n, p, q, step=1e-3)
    feasible = exponent_condition(n, p, q) > 0
    if abs(exponent_condition(n, p, q)) < 1e-3:
        return  # too close to the boundary for a grid scan
    if feasible:
        wit = select_s(n, p, q)
        assert scan is not None
        assert wit.interval[0] - 2e-3 <= scan[0] and scan[1] <= wit.interval[1] + 2e-3
    else:
        with pytest.raises(InfeasibleExponentsError):
            select_s(n, p, q)
        assert scan is None


def test_quadratic_values_at_origin():
    h = NonlinearitySpec.quadratic()
    assert h.evaluate(0.0, 0j, 0j) == 0.0
    hu, hv = h.evaluate_z(0.0, 0j, 0j)
    assert hu == 0 and hv == 0
    assert np.array_equal(h.evaluate_zz(0.0, 0j, 0j), np.eye(4))


def test_power_values_real_point():
    h = NonlinearitySpec.power(3, 3)
    c = 1.3
    assert h.evaluate(0.2, c, c) == pytest.approx(c ** 4 / 2)
    assert h.evaluate_z(0.2, c, c)[0] == pytest.approx(c ** 3)


@pytest.mark.parametrize("h", [NonlinearitySpec.quadratic(2.0),
                               NonlinearitySpec.power(3, 3),
                               NonlinearitySpec.power(2.5, 1.7, f=2.0, g=0.5),
                               NonlinearitySpec.power(3, 2, f=(1.0, 2.0, 1.5, 0.7))])
def test_fiber_derivatives_match_differences(h, rng):
    x, u, v = sample_fiber(1000, 3.0, rng)
    mask = np.sqrt(np.abs(u) ** 2 + np.abs(v) ** 2) > 1e-2
    x, u, v = x[mask], u[mask], v[mask]
    step = 1e-6
    hu, hv = h.evaluate_z(x, u, v)
    hzz = h.evaluate_zz(x, u, v)
    dirs = [(1, 0), (1j, 0), (0, 1), (0, 1j)]
    for i, (du, dv) in enumerate(dirs):
        fd = (h.evaluate(x, u + step * du, v + step * dv)
              - h.evaluate(x, u - step * du, v - step * dv)) / (2 * step)
        exact = np.real(hu * np.conj(du) + hv * np.conj(dv))
        assert np.allclose(fd, exact, rtol=1e-6, atol=1e-6)
        pu, pv = h.evaluate_z(x, u + step * du, v + step * dv)
        mu, mv = h.evaluate_z(x, u - step * du, v - step * dv)
        col = np.stack([(pu - mu).real, (pu - mu).imag, (pv - mv).real, (pv - mv).imag],
                       axis=-1) / (2 * step)
        assert np.allclose(col, hzz[:, :, i], rtol=1e-5, atol=1e-5)


@given(st.floats(0, 2 * np.pi))
def test_s1_invariance(theta):
    rng = np.random.default_rng(3)
    x, u, v = sample_fiber(50, 4.0, rng)
    ph = np.exp(1j * theta)
    for h in (NonlinearitySpec.quadratic(), NonlinearitySpec.power(3, 2)):
        assert np.allclose(h.evaluate(x, ph * u, ph * v), h.evaluate(x, u, v))


def test_integral_H_examples():
    spec = build_circle_spectrum(3)
    a = np.zeros(spec.num_modes, complex)
    a[2] = np.sqrt(2)
    z = PairField(spec, a, np.zeros_like(a), 0.5)
    assert integral_H(NonlinearitySpec.quadratic(), z) == pytest.approx(1.0, rel=1e-14)
    assert integral_H(NonlinearitySpec.quadratic(), PairField.zeros(spec, 0.5)) == 0.0
    c = 0.8 - 0.3j
    a[2] = c
    z = PairField(spec, a, a, 0.5)
    assert integral_H(NonlinearitySpec.power(3, 3), z) == pytest.approx(2 * abs(c) ** 4 / 4)


def test_quadratic_h1_margin_is_zero():
    rep = check_hypotheses(NonlinearitySpec.quadratic(), 2000)
    assert rep["H1"].passed
    assert rep["H1"].margin == pytest.approx(0.0, abs=1e-9)


def test_power_passes_h1_h2_h3(rng):
    h = NonlinearitySpec.power(3, 3, c2=3.0)
    rep = check_hypotheses(h, 10_000, rng=rng)
    assert rep["H1"].passed and rep["H1"].margin >= 0
    assert rep["H2"].passed and rep["H2"].margin <= 1.0
    assert rep["H3"].passed and rep["growth"].passed


def test_constant_nonlinearity_fails_h1_with_witness():
    h = NonlinearitySpec.custom(lambda x, u, v: 5.0, lambda x, u, v: (0j * u, 0j * v))
    rep = check_hypotheses(h, 100)
    assert not rep["H1"].passed
    assert rep["H1"].margin == pytest.approx(-10.0)
    assert set(rep["H1"].witness) == {"x", "u", "v"}


def test_h4_is_heuristic(power_ctx, rng):
    rep = check_hypotheses(power_ctx.nonlinearity, 100, rng=rng, context=power_ctx,
                           field_samples=8)
    assert rep["H4"].heuristic and rep["H4"].passed


def test_custom_callback_failure_propagates():
    def boom(x, u, v):
        raise RuntimeError("bad")
    h = NonlinearitySpec.custom(boom, boom)
    with pytest.raises(EvaluationError):
        h.evaluate(0.0, 1j, 1j)


def test_invalid_specs_rejected():
    with pytest.raises(ValueError):
        NonlinearitySpec.power(1.0, 3)
    with pytest.raises(ValueError):
        NonlinearitySpec.power(3, 3, f=-1.0)
    with pytest.raises(ValueError):
        NonlinearitySpec.quadratic(c0=2.0)


def test_round_trip_dict():
    h = NonlinearitySpec.power(3, 2.5, f=2.0, c1=4.0)
    assert NonlinearitySpec.from_dict(h.to_dict()) == h


def test_linear_combination_matches_scaled(power_ctx):
    h0, h1 = NonlinearitySpec.quadratic(), NonlinearitySpec.power(3, 3)
    lc = LinearCombination(((0.25, h0), (0.75, h1)))
    x, u, v = sample_fiber(20, 2.0, np.random.default_rng(1))
    assert np.allclose(lc.evaluate(x, u, v), 0.25 * h0.evaluate(x, u, v)
                       + 0.75 * h1.evaluate(x, u, v))
    ctx = FunctionalContext(power_ctx.spectrum, 0.4, lc)
    assert ctx.integral_h(np.zeros(ctx.dim)) == 0.0
