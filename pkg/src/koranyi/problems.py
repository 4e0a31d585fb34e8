from __future__ import annotations

from dataclasses import dataclass

from koranyi.expressions import expression_field
from koranyi.heisenberg import ScalarField
from koranyi.neumann import NeumannProblem


class UnknownProblemError(KeyError):
    def __init__(self, name: str) -> None:
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        known = ", ".join(sorted(BUILTIN_PROBLEMS))
        return f"Unknown problem {self.name!r}; builtin problems are {known}."


@dataclass(frozen=True)
class ProblemSpec:
    f: str
    g: str
    exact: str | None = None


# Manufactured from u = t (L₀t = 0, ∂⊥t = 2|z|t) and
# u = |z|² (L₀|z|² = n, ∂⊥|z|² = 2|z|³), so z2-source takes f = n.
BUILTIN_PROBLEMS: dict[str, ProblemSpec] = {
    "t-flux": ProblemSpec(f="0", g="2*absz*t", exact="t"),
    "z2-source": ProblemSpec(f="1", g="2*absz^3", exact="z2"),
    "incompatible": ProblemSpec(f="0", g="1"),
    "zero": ProblemSpec(f="0", g="0", exact="0"),
}


def build_problem(
    name: str | None = None,
    *,
    f: str | None = None,
    g: str | None = None,
    exact: str | None = None,
    n: int = 1,
    tol_compat: float = 1e-3,
) -> NeumannProblem:
    """A builtin problem by name, or one assembled from expressions for f and g."""
    if name and name != "custom":
        spec = BUILTIN_PROBLEMS.get(name)
        if spec is None:
            raise UnknownProblemError(name)
        if name == "z2-source":
            spec = ProblemSpec(f=str(n), g=spec.g, exact=spec.exact)
    else:
        if f is None or g is None:
            raise ValueError("Expression problems need both f and g.")
        spec = ProblemSpec(f=f, g=g, exact=exact)
        name = "custom"
    return NeumannProblem(
        f=expression_field(spec.f, n, name="f"),
        g=expression_field(spec.g, n, name="g"),
        n=n,
        tol_compat=tol_compat,
        name=name,
        exact=expression_field(spec.exact, n, name="u") if spec.exact else None,
    )


def add_problems(first: NeumannProblem, second: NeumannProblem) -> NeumannProblem:
    """Data (f₁ + f₂, g₁ + g₂), for linearity checks."""

    def summed(a: ScalarField, b: ScalarField, label: str) -> ScalarField:
        return ScalarField(
            lambda z, t: a.func(z, t) + b.func(z, t), n=a.n, circular=True, name=label
        )

    exact = None
    if first.exact is not None and second.exact is not None:
        exact = summed(first.exact, second.exact, "u")
    return NeumannProblem(
        f=summed(first.f, second.f, "f"),
        g=summed(first.g, second.g, "g"),
        n=first.n,
        tol_compat=max(first.tol_compat, second.tol_compat),
        name=f"{first.name}+{second.name}",
        exact=exact,
    )
