import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from girsanov_verdict.field import CoefficientField, FieldError, scalar_field
from girsanov_verdict.logic import TriState
from girsanov_verdict.sufficiency import (
    SUFFICIENCY_NOTE,
    GrowthKind,
    SufficiencyConfig,
    TimeWeightError,
    benes_check,
    elementary_inequality_check,
    local_novikov_check,
)


@pytest.mark.parametrize("beta", ["1", "-3.5", "x", "x/(1 + abs(x))", "sqrt(1 + x^2)"])
def test_linear_growth_is_satisfied(beta):
    rep = benes_check(scalar_field("0", "1", beta))
    assert rep.kind is GrowthKind.SATISFIED_ON_RANGE
    assert rep.certifies_martingale
    assert rep.max_ratio < math.inf


def test_constant_ratios_for_constant_beta():
    rep = benes_check(scalar_field("0", "1", "2"), gamma="3")
    r = np.array(rep.tested_radii)
    assert np.allclose(rep.drift_ratios, 4 / (3 * (1 + r * r)), rtol=1e-12)


def test_cubic_beta_is_violated_with_witness():
    rep = benes_check(scalar_field("0", "1", "x^3"))
    assert rep.kind is GrowthKind.VIOLATED
    (w,) = rep.witness
    # the ratio at the witness is exactly x^6 / (1 + x^2)
    assert rep.ratio == pytest.approx(w ** 6 / (1 + w * w), rel=1e-12)
    assert rep.ratio > 1.05
    assert rep.note == SUFFICIENCY_NOTE


def test_cubic_ratio_at_ten():
    # oracle: 10^6 / 101
    cfg = SufficiencyConfig(r_min=1.0, r_max=10.0, n_radii=2)
    rep = benes_check(scalar_field("0", "1", "x^3"), cfg=cfg)
    assert rep.drift_ratios[-1] == pytest.approx(1e6 / 101, rel=1e-12)


def test_superlinear_diffusion_is_violated():
    rep = benes_check(scalar_field("0", "1 + x^4", "0"))
    assert rep.kind is GrowthKind.VIOLATED


def test_multidimensional_linear_field():
    fld = CoefficientField.create(["-x1", "-x2"], "1", ["x2", "-x1"], x0=[1.0, 0.0])
    assert benes_check(fld).kind is GrowthKind.SATISFIED_ON_RANGE


def test_time_weight_must_be_integrable():
    with pytest.raises(TimeWeightError):
        benes_check(scalar_field("0", "1", "1"), gamma="1/t")


def test_time_weight_with_integrable_singularity():
    rep = benes_check(scalar_field("0", "1", "1"), gamma="t^(-1/2)")
    assert rep.kind is GrowthKind.SATISFIED_ON_RANGE


def test_time_weight_depends_on_time_only():
    with pytest.raises(FieldError):
        benes_check(scalar_field("0", "1", "1"), gamma="x")


def test_time_dependent_coefficients_use_the_weight():
    # |beta|^2 = (1 + t) x^2 stays within gamma = 1 + t times linear growth
    rep = benes_check(scalar_field("0", "1", "sqrt(1 + t) * x"), gamma="1 + t")
    assert rep.kind is GrowthKind.SATISFIED_ON_RANGE
    rep = benes_check(scalar_field("0", "1", "sqrt(1 + t) * x"), gamma="1")
    assert rep.kind is GrowthKind.SATISFIED_ON_RANGE  # bounded horizons keep it linear


_BETAS = ["1", "x", "x^3", "piecewise(x < 1, x, -2*x)", "abs(x)^(1/2)", "x^2"]


@given(st.sampled_from(_BETAS), st.floats(0.01, 1.0))
def test_scaling_beta_never_increases_ratios(src, lam):
    base = benes_check(scalar_field("0", "1", src))
    scaled = benes_check(scalar_field("0", "1", f"{lam!r} * ({src})"))
    assert np.all(np.array(scaled.drift_ratios) <= np.array(base.drift_ratios) * (1 + 1e-12))
    if base.kind is GrowthKind.SATISFIED_ON_RANGE:
        assert scaled.kind is not GrowthKind.VIOLATED


def test_novikov_constant_beta():
    rep = local_novikov_check(scalar_field("0", "1", "1"), 5)
    assert rep.holds is TriState.YES and rep.bound == 5.0


def test_novikov_linear_beta():
    rep = local_novikov_check(scalar_field("0", "1", "x"), 3)
    assert rep.holds is TriState.YES
    assert rep.bound == pytest.approx(27.0, rel=1e-12)
    assert abs(rep.argmax[0]) == 3.0


def test_novikov_pole_is_inconclusive():
    rep = local_novikov_check(scalar_field("0", "1", "1/(1 - x)"), 2)
    assert rep.holds is TriState.INCONCLUSIVE
    assert rep.bound is None


def test_novikov_rejects_bad_index():
    with pytest.raises(ValueError):
        local_novikov_check(scalar_field("0", "1", "1"), 0)


def test_novikov_in_three_dimensions():
    fld = CoefficientField.create(["0"] * 3, "1", ["x1", "x2", "x3"], x0=[1.0, 0.0, 0.0])
    rep = local_novikov_check(fld, 2)
    assert rep.holds is TriState.YES
    assert rep.bound == pytest.approx(2 * 4.0, rel=1e-12)


@given(st.sampled_from(["1", "x", "x^2", "exp(x/4)", "min(abs(x), 2)"]), st.integers(1, 8), st.integers(1, 8))
def test_novikov_bound_is_monotone_in_n(src, n1, n2):
    n1, n2 = sorted((n1, n2))
    fld = scalar_field("0", "1", src)
    a, b = local_novikov_check(fld, n1), local_novikov_check(fld, n2)
    assert a.holds is TriState.YES and b.holds is TriState.YES
    assert a.bound <= b.bound


def test_elementary_inequality_on_default_grid():
    assert elementary_inequality_check() <= 1e-12


def test_elementary_inequality_examples():
    assert elementary_inequality_check([1.0]) == 0.0
    assert elementary_inequality_check([4.0]) == pytest.approx(1 - (4 * math.log(4) - 3), rel=1e-14)
    assert elementary_inequality_check([4.0]) < 0


def test_elementary_inequality_rejects_bad_grids():
    with pytest.raises(ValueError):
        elementary_inequality_check([])
    with pytest.raises(ValueError):
        elementary_inequality_check([1.0, -2.0])


@given(st.floats(1e-8, 1e8))
def test_elementary_inequality_pointwise(x):
    assert elementary_inequality_check([x]) <= 1e-12 * max(1.0, x * abs(math.log(x)))
