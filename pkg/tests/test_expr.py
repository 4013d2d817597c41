import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from girsanov_verdict.expr import (
    DomainError,
    Expression,
    ExpressionSyntaxError,
    UnknownIdentifierError,
    evaluate,
    free_variables,
    is_syntactically_zero,
    parse,
    to_source,
)

CORPUS = [
    "2*x + exp(-x^2)",
    "piecewise(x<0, -1, 1)",
    "x^3 - 3*x + 1",
    "sqrt(abs(x)) * sign(x)",
    "min(x, 2) + max(-x, 1)",
    "exp(-x) / (1 + x^2)",
    "-x^2 + 2^3",
    "log(1 + x^2) * t",
    "x / (1 + abs(x))",
    "piecewise(x^2 <= 1, 1 - x^2, 0)",
    "(x - 1) * (x + 1) / 4",
    "-(-x)",
]


def test_parse_then_evaluate_sum_with_gaussian():
    # 2*0 + exp(0)
    assert evaluate("2*x + exp(-x^2)", 0.0) == 1.0


def test_piecewise_selects_first_branch_when_condition_holds():
    assert evaluate("piecewise(x<0, -1, 1)", -2.0) == -1.0


def test_piecewise_branch_point_falls_to_second_branch():
    assert evaluate("piecewise(x<0, -1, 1)", 0.0) == 1.0
    assert evaluate("piecewise(x<=0, -1, 1)", 0.0) == -1.0


def test_dangling_operator_reports_offset():
    with pytest.raises(ExpressionSyntaxError) as info:
        parse("2*")
    assert info.value.offset == 2


@pytest.mark.parametrize("src", ["", "   ", "(x", "x +* 2", "exp(", "1 2"])
def test_malformed_sources_raise(src):
    with pytest.raises(ExpressionSyntaxError):
        parse(src)


@pytest.mark.parametrize("src", ["y + 1", "foo(x)", "x0 * 2"])
def test_unknown_identifiers(src):
    with pytest.raises(UnknownIdentifierError):
        parse(src)


@pytest.mark.parametrize("src, point, expected", [("x^3", 2.0, 8.0), ("sqrt(x)", 4.0, 2.0), ("x1*x2 + t", [2.0, 3.0], 6.5)])
def test_evaluate_examples(src, point, expected):
    assert evaluate(src, point, time=0.5) == expected


@pytest.mark.parametrize("src, point", [("1/x", 0.0), ("log(x)", -1.0), ("sqrt(x)", -4.0), ("log(x)", 0.0)])
def test_domain_errors_are_raised_not_nan(src, point):
    with pytest.raises(DomainError):
        evaluate(src, point)


def test_domain_error_lists_offending_points():
    e = parse("1/x")
    with pytest.raises(DomainError) as info:
        e(x=np.array([1.0, 0.0, 2.0]))
    assert info.value.points is not None
    assert np.array_equal(info.value.points.ravel(), [0.0])


def test_non_strict_evaluation_yields_nan():
    out = parse("log(x)")(x=np.array([1.0, -1.0]), strict=False)
    assert out[0] == 0.0 and math.isnan(out[1])


@pytest.mark.parametrize("src, zero", [("0", True), ("x - x", True), ("0*exp(x)", True), ("x^2", False), ("x - 2*x/2 + 1", False)])
def test_syntactic_zero(src, zero):
    assert is_syntactically_zero(src) is zero


def test_folded_zero_vanishes_at_random_points():
    rng = np.random.default_rng(7)
    pts = rng.uniform(-50, 50, 100)
    assert is_syntactically_zero("x - x")
    assert np.all(parse("x - x")(x=pts) == 0.0)


@pytest.mark.parametrize("src, names", [("2*x+t", {"x", "t"}), ("3.5", set()), ("x1*x2", {"x1", "x2"})])
def test_free_variables(src, names):
    assert free_variables(src) == names


def test_expressions_are_immutable():
    e = parse("x")
    with pytest.raises(AttributeError):
        e.source = "y"
    assert isinstance(e, Expression)


@pytest.mark.parametrize("src", CORPUS)
def test_round_trip_on_corpus(src):
    e = parse(src)
    again = parse(to_source(e.ast))
    assert again.ast == e.ast
    rng = np.random.default_rng(abs(hash(src)) % 2**32)
    xs = rng.uniform(-5, 5, 100)
    ts = rng.uniform(0, 2, 100)
    env = {"x": xs, "t": ts}
    a = e(strict=False, **{k: env[k] for k in e.variables})
    b = again(strict=False, **{k: env[k] for k in again.variables})
    assert np.array_equal(a, b, equal_nan=True)


_leaf = st.one_of(
    st.sampled_from(["x", "t", "x1", "x2"]),
    st.floats(0, 1e6, allow_nan=False).map(repr),
    st.integers(0, 99).map(str),
)


def _grow(children):
    binary = st.tuples(children, st.sampled_from(["+", "-", "*", "/", "^"]), children).map(lambda p: f"({p[0]} {p[1]} {p[2]})")
    unary = children.map(lambda c: f"-{c}")
    call = st.tuples(st.sampled_from(["exp", "log", "sqrt", "abs", "sign"]), children).map(lambda p: f"{p[0]}({p[1]})")
    two = st.tuples(st.sampled_from(["min", "max"]), children, children).map(lambda p: f"{p[0]}({p[1]}, {p[2]})")
    pw = st.tuples(children, st.sampled_from(["<", "<=", ">", ">="]), children, children, children).map(
        lambda p: f"piecewise({p[0]} {p[1]} {p[2]}, {p[3]}, {p[4]})")
    return st.one_of(binary, unary, call, two, pw)


@given(st.recursive(_leaf, _grow, max_leaves=12))
def test_printing_round_trips_structurally(src):
    e = parse(src)
    assert parse(to_source(e.ast)).ast == e.ast


@given(st.recursive(_leaf, _grow, max_leaves=10), st.floats(-10, 10), st.floats(0, 3))
def test_round_trip_preserves_values_bitwise(src, x, t):
    e = parse(src)
    again = parse(to_source(e.ast))
    env = {"x": x, "t": t, "x1": x, "x2": -x}
    a = e(strict=False, **{k: env[k] for k in e.variables})
    b = again(strict=False, **{k: env[k] for k in again.variables})
    assert np.array_equal(a, b, equal_nan=True)
