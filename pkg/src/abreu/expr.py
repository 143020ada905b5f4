"""A small arithmetic expression language for K and phi.

Grammar: numbers, the names ``xi1 .. xi<n>``, ``pi`` and ``e``, the binary
operators ``+ - * / **``, unary minus, and the functions ``log``, ``exp`` and
``sqrt``.  Expressions are parsed with :mod:`ast` and evaluated by walking the
tree, so nothing outside this grammar can run.
"""

from __future__ import annotations

import ast
import math
import operator
import re

import numpy as np

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"log": np.log, "exp": np.exp, "sqrt": np.sqrt}
_CONSTS = {"pi": math.pi, "e": math.e}
_VAR = re.compile(r"^xi([1-9])$")


class ExpressionError(ValueError):
    pass


class Expression:
    """Compiled expression callable on ``(P, n)`` point arrays."""

    def __init__(self, text):
        self.text = text
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
        self.dim = 0
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise ExpressionError(f"unsupported constant {node.value!r}")
        elif isinstance(node, ast.Name):
            m = _VAR.match(node.id)
            if m:
                self.dim = max(self.dim, int(m.group(1)))
            elif node.id not in _CONSTS:
                raise ExpressionError(f"unknown name {node.id!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ExpressionError("unsupported operator")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNARY:
                raise ExpressionError("unsupported unary operator")
            self._check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords or len(node.args) != 1:
                raise ExpressionError("only log(.), exp(.) and sqrt(.) calls are allowed")
            self._check(node.args[0])
        else:
            raise ExpressionError(f"unsupported syntax: {type(node).__name__}")

    def _eval(self, node, pts):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            m = _VAR.match(node.id)
            if m:
                return pts[:, int(m.group(1)) - 1]
            return _CONSTS[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, pts), self._eval(node.right, pts))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, pts))
        return _FUNCS[node.func.id](self._eval(node.args[0], pts))

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.dim > pts.shape[1]:
            raise ExpressionError(f"{self.text!r} uses xi{self.dim} on {pts.shape[1]}-D points")
        with np.errstate(all="ignore"):
            out = self._eval(self._tree, pts)
        return np.broadcast_to(np.asarray(out, dtype=float), (len(pts),)).copy()

    def __repr__(self):
        return f"Expression({self.text!r})"


def parse_field(spec):
    """``const:<number>`` gives a float, ``expr:<expression>`` an :class:`Expression`."""
    if not isinstance(spec, str) or ":" not in spec:
        raise ExpressionError(f"field spec must be 'const:<value>' or 'expr:<expression>', got {spec!r}")
    kind, body = spec.split(":", 1)
    if kind == "const":
        try:
            return float(body)
        except ValueError:
            raise ExpressionError(f"bad constant {body!r}") from None
    if kind == "expr":
        return Expression(body)
    raise ExpressionError(f"unknown field kind {kind!r}")
