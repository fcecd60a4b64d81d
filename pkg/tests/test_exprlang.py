import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaugepoisson.errors import EvaluationError
from gaugepoisson.exprlang import (
    EvalContext,
    ExprError,
    ExprEvalError,
    evaluate,
    field_phase,
    parse,
    to_string,
)


def ev(src, m=3, n=3, **bind):
    return evaluate(parse(src, (m, n)), EvalContext(m, n, **bind))


@pytest.mark.parametrize("src, value", [
    ("2+3*4^2", 50.0),
    ("-2^2", -4.0),
    ("2^3^2", 512.0),
    ("(2+3)*4", 20.0),
    ("8/4/2", 1.0),
    ("2.5", 2.5),
    ("1e-3*1000", 1.0),
    ("pi", math.pi),
    ("atan2(1, 1)*4", math.pi),
    ("min(3, -1) + max(2, 5)", 4.0),
    ("abs(-7)", 7.0),
])
def test_golden_values(src, value):
    assert ev(src) == value


def test_bilinear_example():
    assert ev("q1*y2 - q2*y1", 2, 2, q=[1, 2], y=[3, 4]) == -2.0


def test_trig_identity(rng):
    e = parse("sin(q1)^2 + cos(q1)^2", (1, 0))
    for x in rng.uniform(-10, 10, size=10):
        assert abs(evaluate(e, EvalContext(1, 0, q=[x])) - 1.0) <= 1e-15


def test_sqrt_example():
    assert ev("sqrt(q1^2+q2^2+q3^2)", q=[1, 2, 2]) == 3.0


def test_phase_field_binds_p_q_y_in_order():
    f = field_phase(parse("p1 + 10*q1 + 100*y2", (2, 2)))
    assert f([1, 0, 2, 0, 0, 3]) == 321.0


@pytest.mark.parametrize("src, kind", [
    ("q4", "index"),
    ("y0", "unknown"),
    ("foo(q1)", "unknown"),
    ("sin(q1, q2)", "arity"),
    ("sin", "arity"),
    ("q1^q2", "exponent"),
    ("1 +", "syntax"),
    ("(1", "syntax"),
    ("1 $ 2", "syntax"),
    ("", "syntax"),
])
def test_parse_errors(src, kind):
    with pytest.raises(ExprError) as info:
        parse(src, (3, 3))
    assert info.value.kind == kind


def test_error_position_is_line_and_column():
    with pytest.raises(ExprError) as info:
        parse("1 +\n  q9", (3, 3))
    assert (info.value.line, info.value.col) == (2, 3)


def test_t_can_be_disallowed():
    assert ev("t + 1", t=2.0) == 3.0
    with pytest.raises(ExprError):
        parse("t", (1, 1), allow_t=False)


@pytest.mark.parametrize("src", ["1/0", "log(-1)", "log(0)", "sqrt(-1)", "0^-1", "(-8)^0.5", "exp(1000)"])
def test_domain_faults_raise(src):
    with pytest.raises(EvaluationError):
        ev(src)


def test_fault_names_subexpression():
    with pytest.raises(ExprEvalError) as info:
        ev("q1 + 1/(q2 - 2)", q=[0, 2, 0])
    assert "1 / (q2 - 2)" in str(info.value)


def test_context_dimensions_checked():
    with pytest.raises(ValueError):
        EvalContext(3, 3, q=[1, 2])
    with pytest.raises(ValueError):
        evaluate(parse("1", (2, 2)), EvalContext(3, 3))


def test_evaluation_is_bitwise_repeatable(rng):
    e = parse("exp(q1)*sin(y2) - q3^3/(1 + y1^2)", (3, 3))
    ctx = EvalContext(3, 3, q=rng.normal(size=3), y=rng.normal(size=3))
    assert evaluate(e, ctx) == evaluate(e, ctx)


# --- printer round trip

_leaf = st.one_of(
    st.integers(0, 9).map(str),
    st.sampled_from(["0.5", "2.25", "pi", "q1", "q2", "p1", "y1", "y2", "t"]),
)


def _node(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*", "/"]), children).map(lambda x: f"({x[0]} {x[1]} {x[2]})"),
        st.tuples(children, st.sampled_from(["2", "3", "0.5", "-1"])).map(lambda x: f"({x[0]})^{x[1]}"),
        children.map(lambda x: f"-{x}"),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "abs"]), children).map(lambda x: f"{x[0]}({x[1]})"),
        st.tuples(st.sampled_from(["atan2", "min", "max"]), children, children).map(
            lambda x: f"{x[0]}({x[1]}, {x[2]})"),
    )


EXPRS = st.recursive(_leaf, _node, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(EXPRS)
def test_print_parse_round_trip(src):
    e = parse(src, (2, 2))
    printed = to_string(e)
    again = parse(printed, (2, 2))
    assert again.root == e.root
    assert to_string(again) == printed
