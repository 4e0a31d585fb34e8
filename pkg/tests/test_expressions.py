from __future__ import annotations

import numpy as np
import pytest

from koranyi.expressions import ExpressionError, expression_field, parse_expression
from koranyi.heisenberg import HPoint


def test_fields_evaluate_over_modulus_and_height() -> None:
    points = HPoint(np.array([[3.0 + 4.0j], [0.0 + 1.0j]]), np.array([2.0, -1.0]))
    field = expression_field("2*absz*t + z2^2", name="g")
    np.testing.assert_allclose(field(points), [2 * 5 * 2 + 625, 2 * 1 * -1 + 1])
    assert field.circular
    assert field.name == "g"


def test_constants_broadcast_to_the_point_shape() -> None:
    points = HPoint(np.zeros((4, 2), dtype=complex), np.zeros(4))
    values = expression_field("1", n=2)(points)
    assert values.shape == (4,)
    np.testing.assert_allclose(values, 1.0)


def test_allowed_functions_are_available() -> None:
    points = HPoint([0j], 0.5)
    assert expression_field("exp(t)*cos(z2)")(points) == pytest.approx(np.exp(0.5))


@pytest.mark.parametrize(
    ("source", "message"),
    [
        ("", "empty"),
        ("x + t", "unknown symbols"),
        ("bessel(t)", "unknown functions"),
        ("t +* 2", "cannot parse"),
    ],
)
def test_bad_expressions_are_reported(source: str, message: str) -> None:
    with pytest.raises(ExpressionError, match=message) as excinfo:
        parse_expression(source)
    assert excinfo.value.source == source
