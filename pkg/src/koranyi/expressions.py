"""Circular data from arithmetic expressions over |z|² and t.

Only the symbols `z2` (= |z|²), `absz` (= |z|) and `t` may appear, so every
parsed field is circular by construction.
"""

from __future__ import annotations

import numpy as np
import sympy
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

from koranyi.heisenberg import ScalarField

Z2, ABSZ, T = sympy.symbols("z2 absz t", real=True)
ALLOWED_SYMBOLS = {"z2": Z2, "absz": ABSZ, "t": T}
ALLOWED_FUNCTIONS = {
    "sqrt": sympy.sqrt,
    "exp": sympy.exp,
    "log": sympy.log,
    "sin": sympy.sin,
    "cos": sympy.cos,
    "pi": sympy.pi,
}

_PARSER_GLOBALS = {
    "Integer": sympy.Integer,
    "Float": sympy.Float,
    "Rational": sympy.Rational,
    "Symbol": sympy.Symbol,
    "Function": sympy.Function,
    "__builtins__": {},
}


class ExpressionError(ValueError):
    def __init__(self, source: str, message: str) -> None:
        super().__init__(f"{source!r}: {message}")
        self.source = source


def parse_expression(source: str) -> sympy.Expr:
    if not source.strip():
        raise ExpressionError(source, "expression is empty")
    namespace = {**ALLOWED_SYMBOLS, **ALLOWED_FUNCTIONS}
    try:
        expression = parse_expr(
            source.replace("^", "**"),
            local_dict=namespace,
            global_dict=dict(_PARSER_GLOBALS),
            transformations=standard_transformations,
        )
    except (sympy.SympifyError, SyntaxError, TypeError, NameError, AttributeError) as exc:
        raise ExpressionError(source, f"cannot parse ({exc})") from exc
    if not isinstance(expression, sympy.Expr):
        raise ExpressionError(source, "not an arithmetic expression")
    undefined = expression.atoms(AppliedUndef)
    if undefined:
        raise ExpressionError(source, f"unknown functions {sorted(map(str, undefined))}")
    unknown = {str(s) for s in expression.free_symbols} - set(ALLOWED_SYMBOLS)
    if unknown:
        allowed = ", ".join(sorted(ALLOWED_SYMBOLS))
        raise ExpressionError(source, f"unknown symbols {sorted(unknown)}; use {allowed}")
    return expression


def expression_field(source: str, n: int = 1, name: str | None = None) -> ScalarField:
    """Compile `source` to a circular ScalarField on H_n."""
    expression = parse_expression(source)
    compiled = sympy.lambdify((Z2, ABSZ, T), expression, "numpy")

    def evaluate(z: np.ndarray, t: np.ndarray) -> np.ndarray:
        z2 = np.sum(np.abs(z) ** 2, axis=-1)
        t = np.asarray(t, dtype=float)
        value = compiled(z2, np.sqrt(z2), t)
        return np.broadcast_to(np.asarray(value, dtype=float), np.shape(t)).copy()

    return ScalarField(evaluate, n=n, circular=True, name=name or source)
