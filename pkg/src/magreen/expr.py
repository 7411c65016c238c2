"""Closed-form density expressions evaluated on grid nodes.

Expressions are ordinary Python arithmetic over the coordinates ``x``, ``y``,
``z`` and the grid spacing ``h``::

    1 + 0.5*sin(4*x)*sin(4*y)
    0.6 + 0.9*step(x, 4*h)

Parsing goes through :mod:`ast`; only the node types and names listed below
are accepted, so evaluating a config file never executes arbitrary code.
"""

from __future__ import annotations

import ast
import math

import numpy as np

from .errors import ConfigurationError


def _step(s, width):
    """Heaviside step smoothed over ``width`` (tanh profile)."""
    width = np.asarray(width, dtype=float)
    if np.any(width <= 0):
        return np.where(np.asarray(s) > 0, 1.0, 0.0)
    return 0.5 * (1.0 + np.tanh(np.asarray(s) / width))


FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "step": _step,
}
CONSTANTS = {"pi": math.pi, "e": math.e}
VARIABLES = ("x", "y", "z", "h")

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class Expression:
    """A parsed, validated arithmetic expression.

    >>> Expression("1 + x**2").evaluate({"x": np.array([0.0, 2.0])})
    array([1., 5.])
    """

    def __init__(self, source: str):
        self.source = source.strip()
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ConfigurationError(f"cannot parse expression {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def __repr__(self):
        return f"Expression({self.source!r})"

    @property
    def names(self):
        return sorted({n.id for n in ast.walk(self._tree) if isinstance(n, ast.Name)} & set(VARIABLES))

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ConfigurationError(f"unsupported literal {node.value!r} in {self.source!r}")
        elif isinstance(node, ast.Name):
            if node.id not in VARIABLES and node.id not in CONSTANTS:
                raise ConfigurationError(f"unknown identifier {node.id!r} in {self.source!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ConfigurationError(f"unsupported operator in {self.source!r}")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.USub, ast.UAdd)):
                raise ConfigurationError(f"unsupported unary operator in {self.source!r}")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise ConfigurationError(f"unknown function in {self.source!r}")
            if node.keywords:
                raise ConfigurationError(f"keyword arguments not allowed in {self.source!r}")
            for arg in node.args:
                self._check(arg)
        else:
            raise ConfigurationError(f"unsupported syntax {type(node).__name__} in {self.source!r}")

    def evaluate(self, env):
        """Evaluate with ``env`` mapping variable names to arrays or scalars."""
        return np.asarray(self._eval(self._tree, env), dtype=float)

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in CONSTANTS:
                return CONSTANTS[node.id]
            if node.id not in env:
                raise ConfigurationError(f"variable {node.id!r} not available (dimension too low?)")
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, env)
            return -val if isinstance(node.op, ast.USub) else val
        args = [self._eval(a, env) for a in node.args]
        return FUNCTIONS[node.func.id](*args)

    def on_points(self, points, h=0.0):
        """Evaluate at ``points`` of shape ``(..., dim)``."""
        points = np.asarray(points, dtype=float)
        env = {name: points[..., k] for k, name in enumerate("xyz"[: points.shape[-1]])}
        env["h"] = h
        out = self.evaluate(env)
        return np.broadcast_to(out, points.shape[:-1]).copy()
