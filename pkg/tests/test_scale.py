import math

import numpy as np
import pytest
from scipy import integrate as sint
from scipy.special import gamma

from girsanov_verdict.field import Domain
from girsanov_verdict.logic import TriState
from girsanov_verdict.scale import (
    Boundary,
    EngelbertSchmidtError,
    ScaleError,
    build_scale,
    feller_accessible,
    is_recurrent,
)


def const(k):
    return lambda x: np.full(np.shape(x), float(k))


# (name, v, c, domain)
CORPUS = [
    ("brownian", const(0), const(1), Domain.REAL_LINE),
    ("drifted", const(1), const(1), Domain.REAL_LINE),
    ("cubic", lambda x: x ** 3, const(1), Domain.REAL_LINE),
    ("inward", lambda x: -np.sign(x), const(1), Domain.REAL_LINE),
    ("ou", lambda x: -x, lambda x: 1 + 0.5 * np.sin(x) ** 2, Domain.REAL_LINE),
    ("bessel_sq", const(1.5), lambda y: 2 * y, Domain.POSITIVE_HALF_LINE),
    ("bessel3", lambda y: 1 / y, const(1), Domain.POSITIVE_HALF_LINE),
]


@pytest.fixture(scope="module")
def profiles():
    return {name: build_scale(v, c, dom) for name, v, c, dom in CORPUS}


def test_brownian_scale_is_identity(profiles):
    prof = profiles["brownian"]
    xs = np.linspace(-5, 5, 11)
    assert np.allclose(prof.p(xs), 1.0)
    assert np.allclose(prof.s(xs), xs, atol=1e-12)
    assert prof.s_upper.finite is TriState.NO and prof.s_lower.finite is TriState.NO
    assert prof.s_upper.value == math.inf and prof.s_lower.value == -math.inf


def test_drifted_scale_closed_form(profiles):
    prof = profiles["drifted"]
    xs = np.array([-2.0, 0.5, 3.0])
    assert np.allclose(prof.p(xs), np.exp(-2 * xs), rtol=1e-10)
    assert np.allclose(prof.s(xs), (1 - np.exp(-2 * xs)) / 2, rtol=1e-9)
    assert prof.s_upper.value == pytest.approx(0.5, rel=1e-8)
    assert prof.s_lower.finite is TriState.NO


def test_cubic_scale_limits_are_finite(profiles):
    prof = profiles["cubic"]
    oracle, _ = sint.quad(lambda y: math.exp(-y ** 4 / 2), 0, math.inf, epsabs=1e-13)
    assert oracle == pytest.approx(2 ** 0.25 * gamma(0.25) / 4, rel=1e-10)
    assert prof.s_upper.value == pytest.approx(oracle, rel=1e-7)
    assert prof.s_lower.value == pytest.approx(-oracle, rel=1e-7)


@pytest.mark.parametrize("name", [n for n, *_ in CORPUS])
def test_normalisation_is_exact(profiles, name):
    prof = profiles[name]
    assert prof.p(prof.base) == 1.0
    assert prof.s(prof.base) == 0.0


@pytest.mark.parametrize("name", [n for n, *_ in CORPUS])
def test_scale_is_strictly_increasing(profiles, name):
    prof = profiles[name]
    rng = np.random.default_rng(11)
    if prof.domain == Domain.POSITIVE_HALF_LINE:
        pts = np.exp(rng.uniform(math.log(1e-3), math.log(50), (50, 2)))
    else:
        pts = rng.uniform(-4, 4, (50, 2))
    pts.sort(axis=1)
    lo, hi = pts.T
    s_lo, s_hi = prof.s(lo), prof.s(hi)
    assert np.all(s_lo <= s_hi)
    # strict wherever the true increment is resolvable in double precision
    gaps = np.array([sint.quad(prof.p, a, b, epsabs=0)[0] for a, b in pts])
    resolvable = gaps > 1e-12 * np.maximum(1.0, np.abs(s_hi))
    assert resolvable.sum() >= 25
    assert np.all(s_lo[resolvable] < s_hi[resolvable])
    assert np.all(prof.p(pts.ravel()) > 0)


def test_limits_match_quadrature_verdicts(profiles):
    for prof in profiles.values():
        for lim in (prof.s_upper, prof.s_lower):
            assert lim.verdict.kind.value in {"converges", "diverges", "inconclusive"}
            assert (lim.finite is TriState.YES) == lim.verdict.converges


def test_brownian_boundaries_inaccessible(profiles):
    for b in Boundary:
        assert feller_accessible(profiles["brownian"], b).accessible is TriState.NO


def test_cubic_upper_boundary_accessible(profiles):
    verdict = feller_accessible(profiles["cubic"], Boundary.UPPER)
    assert verdict.accessible is TriState.YES
    assert verdict.weight.converges


def test_bessel_squared_origin_inaccessible(profiles):
    prof = profiles["bessel_sq"]
    # p(y) = y^(-3/2)
    assert prof.p(4.0) == pytest.approx(0.125, rel=1e-9)
    assert prof.s_lower.finite is TriState.NO
    assert prof.s_upper.value == pytest.approx(2.0, rel=1e-7)
    assert feller_accessible(prof, Boundary.LOWER).accessible is TriState.NO


def test_bessel3_origin_inaccessible(profiles):
    # p(y) = y^(-2), s(y) = 1 - 1/y
    prof = profiles["bessel3"]
    assert prof.s(2.0) == pytest.approx(0.5, rel=1e-9)
    assert feller_accessible(prof, Boundary.LOWER).accessible is TriState.NO


@pytest.mark.parametrize("name, expected", [("brownian", TriState.YES), ("drifted", TriState.NO),
                                            ("inward", TriState.YES), ("cubic", TriState.NO)])
def test_recurrence(profiles, name, expected):
    assert is_recurrent(profiles[name]) is expected


def test_recurrence_needs_real_line(profiles):
    with pytest.raises(ScaleError):
        is_recurrent(profiles["bessel_sq"])


def test_nonpositive_diffusion_is_rejected():
    with pytest.raises(EngelbertSchmidtError) as info:
        build_scale(const(0), lambda x: x * x, Domain.REAL_LINE)
    assert info.value.point == 0.0


def test_euclidean_domain_is_rejected():
    with pytest.raises(ScaleError):
        build_scale(const(0), const(1), Domain.EUCLIDEAN)
