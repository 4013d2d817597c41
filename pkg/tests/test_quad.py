import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from girsanov_verdict.quad import (
    IntegrationError,
    NegativeIntegrandError,
    QuadConfig,
    SingularityError,
    Verdict,
    cached_antiderivative,
    improper_integral,
    integrate,
    l1loc_verdict,
)

CFG = QuadConfig()

# smooth integrands used by the property tests
SMOOTH = {
    "square": lambda x: x * x,
    "exp": lambda x: np.exp(-x),
    "wave": lambda x: np.sin(3 * x) + x,
    "cauchy": lambda x: 1 / (1 + x * x),
    "gauss": lambda x: np.exp(-x * x),
    "cubic": lambda x: x ** 3 - 2 * x,
}


def _within(value, expected, err):
    return abs(value - expected) <= max(err, CFG.rel_tol * abs(expected), CFG.abs_tol)


def test_polynomial_is_exact():
    v, e = integrate(SMOOTH["square"], 0.0, 1.0)
    assert abs(v - 1 / 3) <= 1e-12
    assert e <= max(CFG.rel_tol * abs(v), CFG.abs_tol)


def test_inverse_square_root_at_endpoint():
    v, e = integrate(lambda x: x ** -0.5, 0.0, 1.0)
    assert _within(v, 2.0, e)


def test_exponential_over_ten():
    v, e = integrate(SMOOTH["exp"], 0.0, 10.0)
    assert _within(v, 1 - math.exp(-10), e)


def test_integrate_rejects_bad_interval():
    with pytest.raises(ValueError):
        integrate(SMOOTH["square"], 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate(SMOOTH["square"], 0.0, math.inf)


def test_interior_singularity_is_named():
    with pytest.raises(SingularityError) as info:
        integrate(lambda x: 1 / (x - 0.5), 0.0, 1.0)
    assert info.value.point == pytest.approx(0.5)


def test_improper_exponential_tail():
    v = improper_integral(lambda y: np.exp(-2 * y), 0.0, math.inf)
    assert v.kind is Verdict.CONVERGES
    assert v.value == pytest.approx(0.5, rel=1e-8)
    assert v.err <= max(CFG.rel_tol * abs(v.value), CFG.abs_tol)


def test_improper_log_singularity_diverges():
    v = improper_integral(lambda y: 1 / y, 1.0, 0.0)
    assert v.kind is Verdict.DIVERGES
    sums = np.array(v.partial_sums)
    assert np.all(np.diff(sums) >= 0)


@pytest.mark.parametrize("toward", [math.inf, -math.inf, 0.0])
def test_zero_integrand_converges_to_zero(toward):
    v = improper_integral(lambda y: np.zeros_like(y), 1.0 if toward == 0.0 else 0.0, toward)
    assert v.converges and v.value == 0.0


def test_power_divergence_evidence_is_monotone_and_growing():
    v = improper_integral(lambda y: y ** -2, 1.0, 0.0)
    assert v.diverges
    sums = np.array(v.partial_sums)
    assert np.all(np.diff(sums) > 0)
    # increments double window after window: no decay toward the singularity
    incs = np.diff(sums)
    assert np.all(incs[1:] >= incs[:-1])


def test_log_divergence_at_infinity():
    v = improper_integral(lambda y: 1 / y, 1.0, math.inf)
    assert v.diverges
    incs = np.diff(v.partial_sums)
    # geometric windows: each adds about log 2, never less than the one before
    assert np.all(np.diff(incs) > 0)
    assert incs[-1] == pytest.approx(math.log(2), rel=1e-3)


def test_l1loc_constant_tail_diverges():
    assert l1loc_verdict(lambda y: np.ones_like(y), "+inf", 0.0).diverges


def test_l1loc_inverse_square():
    v = l1loc_verdict(lambda y: y ** -2, "+inf", 1.0)
    assert v.converges and v.value == pytest.approx(1.0, rel=1e-8)


def test_l1loc_inverse_root_at_zero():
    v = l1loc_verdict(lambda y: y ** -0.5, "0+", 1.0)
    assert v.converges and v.value == pytest.approx(2.0, rel=1e-8)


def test_l1loc_rejects_negative_samples():
    with pytest.raises(NegativeIntegrandError):
        l1loc_verdict(lambda y: np.sin(y), "+inf", 0.0)


def test_antiderivative_of_one():
    G = cached_antiderivative(lambda y: np.ones_like(y), 0.0, -1.0, 2.0)
    assert G(0.0) == 0.0
    assert np.allclose(G(np.array([-1.0, 0.0, 2.0])), [-1.0, 0.0, 2.0], rtol=1e-10, atol=1e-12)


def test_antiderivative_of_linear_drift_rate():
    G = cached_antiderivative(lambda y: 2 * y, 0.0, -3.0, 3.0)
    xs = np.linspace(-3, 3, 13)
    assert np.allclose(G(xs), xs ** 2, rtol=1e-10, atol=1e-12)


def test_antiderivative_of_cubic_rate():
    G = cached_antiderivative(lambda y: 2 * y ** 3, 0.0, -2.0, 2.0)
    assert G(2.0) == pytest.approx(8.0, rel=1e-10)
    assert G(0.0) == 0.0


def test_antiderivative_base_is_exact_off_origin():
    G = cached_antiderivative(lambda y: 1 / y, 1.0, 1e-3, 50.0)
    assert G(1.0) == 0.0
    assert G(math.e) == pytest.approx(1.0, rel=1e-10)
    # queries outside the knot table extend by direct integration
    assert G(100.0) == pytest.approx(math.log(100.0), rel=1e-10)


def test_antiderivative_singular_knot_is_named():
    with pytest.raises(SingularityError) as info:
        cached_antiderivative(lambda y: 1 / (y - 0.5), 1.0, -1.0, 2.0)
    assert info.value.point == 0.5


def test_antiderivative_non_integrable_point_is_located():
    with pytest.raises(IntegrationError) as info:
        cached_antiderivative(lambda y: 1 / y, 1.0, -1.0, 2.0)
    assert abs(info.value.point) < 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        QuadConfig(window_base=1.5)
    with pytest.raises(ValueError):
        QuadConfig(divergence_factor=0.5)
    with pytest.raises(ValueError):
        QuadConfig.from_dict({"bogus": 1})
    assert QuadConfig.from_dict({"rel_tol": 1e-6}).rel_tol == 1e-6


_points = st.floats(-4, 4, allow_nan=False)


@given(st.sampled_from(sorted(SMOOTH)), _points, _points, _points)
def test_additivity(name, a, b, c):
    a, b, c = sorted((a, b, c))
    assume(b - a > 1e-3 and c - b > 1e-3)
    f = SMOOTH[name]
    whole, e0 = integrate(f, a, c)
    left, e1 = integrate(f, a, b)
    right, e2 = integrate(f, b, c)
    assert abs(whole - (left + right)) <= 2 * (e0 + e1 + e2)


@given(st.sampled_from(sorted(SMOOTH)), st.sampled_from(sorted(SMOOTH)),
       st.floats(-3, 3, allow_subnormal=False), st.floats(-3, 3, allow_subnormal=False), _points, _points)
def test_linearity(fn, gn, alpha, beta, a, b):
    a, b = sorted((a, b))
    assume(b - a > 1e-3)
    f, g = SMOOTH[fn], SMOOTH[gn]
    both, e0 = integrate(lambda x: alpha * f(x) + beta * g(x), a, b)
    vf, ef = integrate(f, a, b)
    vg, eg = integrate(g, a, b)
    bound = e0 + abs(alpha) * ef + abs(beta) * eg
    assert abs(both - (alpha * vf + beta * vg)) <= 2 * bound + 4 * np.finfo(float).eps * (abs(alpha * vf) + abs(beta * vg))


# (dominating function, boundary, anchor); all integrable there
DOMINATING = [
    (lambda y: y ** -2, "+inf", 1.0),
    (lambda y: np.exp(-y), "+inf", 0.0),
    (lambda y: y ** -0.5, "0+", 1.0),
    (lambda y: 1 / (1 + y * y), "-inf", 0.0),
]


@given(st.integers(0, len(DOMINATING) - 1), st.floats(0.0, 1.0), st.floats(0.0, 3.0), st.floats(0.0, 1.0))
def test_l1loc_monotone_under_domination(i, scale, k, mix):
    g, boundary, anchor = DOMINATING[i]
    # 0 <= f <= g pointwise
    f = lambda y: scale * g(y) * (mix + (1 - mix) * np.abs(np.cos(k * y)))  # noqa: E731
    assert l1loc_verdict(g, boundary, anchor).converges
    assert not l1loc_verdict(f, boundary, anchor).diverges
