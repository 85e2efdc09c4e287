import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mogbn import expr as ex
from mogbn.errors import ExpressionError


def ev(text, **env):
    return ex.evaluate(ex.parse_expression(text), env)


def test_logistic_at_zero_is_half():
    assert ev("logistic(2*a)", a=0.0) == 0.5


def test_logistic_at_one():
    assert ev("logistic(2*a)", a=1.0) == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-12)
    assert ev("logistic(2*a)", a=1.0) == pytest.approx(0.8808, abs=1e-4)


def test_phi_at_zero():
    assert ev("phi(0)") == pytest.approx(0.39894, abs=1e-5)


@pytest.mark.parametrize(
    "text, env, want",
    [
        ("1 + 2 * 3", {}, 7.0),
        ("(1 + 2) * 3", {}, 9.0),
        ("2 ^ 3", {}, 8.0),
        ("-2 ^ 2", {}, 4.0),
        ("-(2 ^ 2)", {}, -4.0),
        ("8 / 4 / 2", {}, 1.0),
        ("10 - 4 - 3", {}, 3.0),
        ("pow(a, 2)", {"a": 3.0}, 9.0),
        ("sqrt(abs(a))", {"a": -16.0}, 4.0),
        ("ln(exp(1.5))", {}, 1.5),
        ("Phi(0)", {}, 0.5),
        ("2.5e-1 * 4", {}, 1.0),
    ],
)
def test_evaluation(text, env, want):
    assert ev(text, **env) == pytest.approx(want, abs=1e-12)


def test_vectorised_matches_scalar():
    e = ex.parse_expression("A^2 + logistic(A) * phi(A)")
    xs = np.linspace(-3, 3, 13)
    vec = ex.evaluate(e, {"A": xs})
    assert vec.shape == xs.shape
    for x, v in zip(xs, vec):
        assert ex.evaluate(e, {"A": float(x)}) == v


def test_unbound_variable():
    with pytest.raises(ExpressionError, match="unbound variable 'b'"):
        ev("a + b", a=1.0)


@pytest.mark.parametrize(
    "text, env, msg",
    [
        ("ln(a)", {"a": 0.0}, "ln of nonpositive"),
        ("1 / a", {"a": 0.0}, "division by zero"),
        ("sqrt(a)", {"a": -1.0}, "sqrt of negative"),
        ("a ^ 0.5", {"a": -1.0}, "negative base"),
    ],
)
def test_domain_errors_name_the_subexpression(text, env, msg):
    with pytest.raises(ExpressionError, match=msg) as err:
        ev(text, **env)
    assert "a" in str(err.value)


@pytest.mark.parametrize("text", ["1 +", "foo(1)", "(1", "1 2", "pow(1)", "2 $ 3"])
def test_syntax_errors(text):
    with pytest.raises(ExpressionError):
        ex.parse_expression(text)


def test_syntax_error_reports_column():
    with pytest.raises(ExpressionError, match="column 5"):
        ex.parse_expression("1 + $")


def test_variables():
    assert ex.variables(ex.parse_expression("a * exp(b) + 2")) == {"a", "b"}


_atoms = st.one_of(
    st.floats(0, 100, allow_nan=False).map(ex.Num),
    st.sampled_from(["a", "b"]).map(ex.Var),
)


def _extend(children):
    return st.one_of(
        st.builds(ex.Neg, children),
        st.builds(ex.BinOp, st.sampled_from("+-*/^"), children, children),
        st.builds(lambda x: ex.Call("exp", (x,)), children),
        st.builds(lambda x, y: ex.Call("pow", (x, y)), children, children),
    )


@settings(max_examples=200, deadline=None)
@given(st.recursive(_atoms, _extend, max_leaves=8))
def test_to_string_round_trip(e):
    assert ex.parse_expression(ex.to_string(e)) == e


@settings(max_examples=100, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_evaluation_is_pure(a, b):
    e = ex.parse_expression("a * logistic(b) - Phi(a) / (1 + b^2)")
    assert ex.evaluate(e, {"a": a, "b": b}) == ex.evaluate(e, {"a": a, "b": b})


def test_sympy_round_trip_of_inverse():
    import sympy as sp

    c = sp.Symbol("C", real=True)
    e = ex.from_sympy(sp.log(c) / 2 - 1)
    assert ex.evaluate(e, {"C": math.e**4}) == pytest.approx(1.0)
