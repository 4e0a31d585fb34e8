from __future__ import annotations

import numpy as np
import pytest

from koranyi.heisenberg import HPoint
from koranyi.problems import BUILTIN_PROBLEMS, UnknownProblemError, add_problems, build_problem


def test_builtin_problems_are_built_by_name() -> None:
    prob = build_problem("z2-source")
    point = HPoint([0.6 + 0.8j], 0.0)
    assert prob.name == "z2-source"
    assert prob.f(point) == pytest.approx(1.0)
    assert prob.g(point) == pytest.approx(2.0)
    assert prob.exact(point) == pytest.approx(1.0)
    assert build_problem("incompatible").exact is None


def test_z2_source_scales_with_the_dimension() -> None:
    prob = build_problem("z2-source", n=2)
    point = HPoint([0.6, 0.8j], 0.0)
    assert prob.f(point) == pytest.approx(2.0)
    assert prob.exact(point) == pytest.approx(1.0)
    assert BUILTIN_PROBLEMS["z2-source"].f == "1"


def test_unknown_problem_lists_the_builtins() -> None:
    with pytest.raises(UnknownProblemError) as excinfo:
        build_problem("poisson")
    message = str(excinfo.value)
    for name in BUILTIN_PROBLEMS:
        assert name in message


def test_custom_problems_need_both_data() -> None:
    prob = build_problem(f="0", g="2*absz*t", exact="t", tol_compat=1e-4)
    assert prob.name == "custom"
    assert prob.tol_compat == 1e-4
    with pytest.raises(ValueError, match="both f and g"):
        build_problem(f="1")


def test_added_problems_sum_their_data() -> None:
    total = add_problems(build_problem("t-flux"), build_problem("z2-source"))
    points = HPoint(np.array([[0.6 + 0.0j], [0.0 - 0.3j]]), np.array([0.2, -0.4]))
    modulus = np.abs(points.z[:, 0])
    np.testing.assert_allclose(total.f(points), 1.0)
    np.testing.assert_allclose(total.g(points), 2 * modulus * points.t + 2 * modulus**3)
    np.testing.assert_allclose(total.exact(points), points.t + modulus**2)
    assert total.name == "t-flux+z2-source"
