"""
Tiny closed-form expression language used by configuration files.

Grammar: numbers, ``t``, ``x1 .. xn``, ``pi``, ``e``, the operators
``+ - * / ^`` (``**`` also accepted) and the functions ``sin``, ``cos``,
``exp``. Expressions are parsed with :mod:`ast`, checked against this
whitelist, and compiled into ``f(t, x)`` callables that accept scalars or
numpy arrays.
"""
import ast
import re

import numpy as np

from .errors import ConfigurationError

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
CONSTANTS = {"pi": np.pi, "e": np.e}
_STATE_NAME = re.compile(r"^x([1-9][0-9]*)$")
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)


class _Rewriter(ast.NodeTransformer):
    def __init__(self, dimension):
        self.dimension = dimension

    def visit_Name(self, node):
        if node.id == "t" or node.id in CONSTANTS or node.id in FUNCTIONS:
            return node
        match = _STATE_NAME.match(node.id)
        if match is None:
            raise ConfigurationError(f"unknown name {node.id!r} in expression")
        index = int(match.group(1))
        if index > self.dimension:
            raise ConfigurationError(
                f"{node.id} used but the system has dimension {self.dimension}"
            )
        return ast.copy_location(
            ast.Subscript(
                value=ast.Name(id="x", ctx=ast.Load()),
                slice=ast.Constant(value=index - 1),
                ctx=ast.Load(),
            ),
            node,
        )


def _check(node):
    if isinstance(node, ast.Expression):
        return _check(node.body)
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ConfigurationError(f"unsupported literal {node.value!r}")
        return
    if isinstance(node, ast.Name):
        if node.id in FUNCTIONS:
            raise ConfigurationError(f"function {node.id!r} used without an argument")
        return
    if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        _check(node.left)
        _check(node.right)
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, _UNARY):
        _check(node.operand)
        return
    if isinstance(node, ast.Call):
        if (
            isinstance(node.func, ast.Name)
            and node.func.id in FUNCTIONS
            and len(node.args) == 1
            and not node.keywords
        ):
            _check(node.args[0])
            return
        raise ConfigurationError("only sin(.), cos(.) and exp(.) calls are allowed")
    raise ConfigurationError(f"unsupported syntax: {type(node).__name__}")


def compile_expr(source, dimension=0):
    """
    Compile ``source`` into a callable ``f(t, x)``.

    ``dimension`` bounds the admissible state names; use 0 for expressions
    of time only (they are still called as ``f(t, x)``; ``x`` is ignored).
    """
    if isinstance(source, (int, float)) and not isinstance(source, bool):
        source = repr(float(source))
    if not isinstance(source, str) or not source.strip():
        raise ConfigurationError("expression must be a non-empty string")
    text = source.replace("^", "**")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse expression {source!r}: {exc.msg}") from None
    _check(tree)
    tree = ast.fix_missing_locations(_Rewriter(dimension).visit(tree))
    lam = ast.Lambda(
        args=ast.arguments(
            posonlyargs=[],
            args=[ast.arg(arg="t"), ast.arg(arg="x")],
            kwonlyargs=[],
            kw_defaults=[],
            defaults=[ast.Constant(value=None)],
        ),
        body=tree.body,
    )
    code = compile(ast.fix_missing_locations(ast.Expression(body=lam)), "<expr>", "eval")
    namespace = {"__builtins__": {}}
    namespace.update(FUNCTIONS)
    namespace.update(CONSTANTS)
    fn = eval(code, namespace)  # AST restricted by _check above
    fn.source = source
    return fn


def compile_time_fn(source):
    """Compile an expression of ``t`` only into ``f(t) -> float``."""
    g = compile_expr(source, dimension=0)

    def fn(t):
        return g(t)

    fn.source = g.source
    return fn
