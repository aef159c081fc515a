"""Small arithmetic expression language over the variables t, x, y, z.

Expressions are parsed with :mod:`ast`, checked against a whitelist and
compiled into a vectorised numpy callable::

    >>> e = Expression("abs(z)**3 + sin(x)")
    >>> float(e(t=0.0, x=0.0, y=0.0, z=2.0))
    8.0
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

VARIABLES = ("t", "x", "y", "z")

FUNCTIONS = {
    "abs": np.abs,
    "pow": np.power,
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "min": np.minimum,
    "max": np.maximum,
}

_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.USub,
    ast.UAdd,
)


def _validate(tree: ast.AST, text: str) -> set[str]:
    used = set()
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(f"unsupported syntax {type(node).__name__} in {text!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError(f"non-numeric constant in {text!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ConfigError(f"unknown function in {text!r}")
            if node.keywords:
                raise ConfigError(f"keyword arguments not allowed in {text!r}")
            arity = 1 if node.func.id in ("abs", "exp", "sin", "cos") else 2
            if len(node.args) != arity:
                raise ConfigError(f"{node.func.id} takes {arity} argument(s) in {text!r}")
        if isinstance(node, ast.Name) and node.id not in FUNCTIONS:
            if node.id not in VARIABLES:
                raise ConfigError(f"unknown variable {node.id!r} in {text!r}")
            used.add(node.id)
    return used


@dataclass(frozen=True)
class Expression:
    text: str
    variables: frozenset = field(init=False, compare=False)
    _code: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        try:
            tree = ast.parse(self.text.strip(), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {self.text!r}: {exc.msg}") from None
        used = _validate(tree, self.text)
        object.__setattr__(self, "variables", frozenset(used))
        object.__setattr__(self, "_code", compile(tree, "<expr>", "eval"))

    def __call__(self, t=0.0, x=0.0, y=0.0, z=0.0):
        scope = {"t": t, "x": x, "y": y, "z": z}
        scope = {k: np.asarray(v, dtype=float) for k, v in scope.items()}
        with np.errstate(all="ignore"):
            out = eval(self._code, {"__builtins__": {}, **FUNCTIONS}, scope)
        shape = np.broadcast_shapes(*(v.shape for v in scope.values()))
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()
