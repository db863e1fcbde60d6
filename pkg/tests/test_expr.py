import cmath

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlsmod.expr import ExprError, affine_coefficients, parse


@pytest.mark.parametrize(
    "text, z, expected",
    [
        ("z^3", 2 + 1j, (2 + 1j) ** 3),
        ("2*z - 3", 1.5, 0.0),
        ("-z^2", 3, -9),  # unary minus binds looser than ^
        ("2^3^2", 0, 2**9),  # right associative
        ("2.5i*z", 2, 5j),
        ("i*log(z + 5)", 1j, 1j * cmath.log(5 + 1j)),
        ("exp(i*pi)", 0, -1),
        ("sqrt(z)/z", 4, 0.5),
        ("1e-3*z", 1000, 1),
        ("(0.5 - 1i)*z", 2, 1 - 2j),
    ],
)
def test_evaluation(text, z, expected):
    assert abs(parse(text).eval(z) - expected) < 1e-12 * max(1, abs(expected))


@pytest.mark.parametrize(
    "text, position",
    [("z^^3", 2), ("2*", 2), ("foo(z)", 0), ("(z + 1", 6), ("z $ 2", 2), ("log z", 4)],
)
def test_parse_errors_carry_position(text, position):
    with pytest.raises(ExprError) as info:
        parse(text)
    assert info.value.position == position
    assert f"position {position}" in str(info.value)


def test_array_evaluation_matches_scalar():
    tree = parse("z^3 - 2*z + exp(z/4)")
    zs = np.array([0.3 + 1j, -2 + 0.5j, 1.0])
    arr = tree.eval(zs)
    for z, v in zip(zs, arr):
        assert abs(v - tree.eval(complex(z))) < 1e-13


def test_constant_evaluates_to_array_shape():
    assert parse("3").eval(np.zeros(4)).shape == (4,)


@pytest.mark.parametrize(
    "text",
    ["z^4 - 3*z", "exp(2*z)", "log(z + 5)", "sqrt(z + 2)", "1/(z - 3)", "z^2*exp(-z)", "(z + 1)^z"],
)
def test_symbolic_derivative_matches_finite_difference(text):
    tree = parse(text)
    d = tree.diff()
    z = 0.4 + 0.7j
    h = 1e-6
    fd = (tree.eval(z + h) - tree.eval(z - h)) / (2 * h)
    assert abs(d.eval(z) - fd) < 1e-7 * max(1, abs(fd))


@pytest.mark.parametrize(
    "text, ab",
    [("3*z + 2", (3, 2)), ("-(z - 1)/2", (-0.5, 0.5)), ("5", (0, 5)), ("z*z", None), ("exp(z)", None)],
)
def test_affine_coefficients(text, ab):
    got = affine_coefficients(parse(text))
    if ab is None:
        assert got is None
    else:
        assert got == pytest.approx(ab)


coef = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(coef, min_size=1, max_size=7), coef, coef)
def test_polynomial_round_trip(coeffs, re, im):
    text = " + ".join(f"({c!r})*z^{k}" for k, c in enumerate(coeffs))
    z = complex(re, im) / 5
    want = np.polyval(coeffs[::-1], z)
    assert abs(parse(text).eval(z) - want) <= 1e-10 * (1 + np.sum(np.abs(coeffs)) * max(1, abs(z)) ** len(coeffs))


@settings(max_examples=60, deadline=None)
@given(st.lists(coef, min_size=1, max_size=6))
def test_printed_tree_reparses_to_same_values(coeffs):
    text = " + ".join(f"({c!r})*z^{k}" for k, c in enumerate(coeffs))
    tree = parse(text)
    again = parse(str(tree))
    z = 0.37 - 1.1j
    assert abs(tree.eval(z) - again.eval(z)) <= 1e-12 * (1 + abs(tree.eval(z)))
