"""Safe evaluation of the small expression language used in spec strings.

Spec strings look like ``name(arg, key=value, ...)`` where each value is a
number, an arithmetic expression over numbers (``+ - * / **``), a call to
``sqrt``/``exp``/``log``, a bracketed list, or a bare word (kept as a string).
"""

from __future__ import annotations

import ast
import math
import operator

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {"sqrt": math.sqrt, "exp": math.exp, "log": math.log}
_CONSTS = {"inf": math.inf, "pi": math.pi, "e": math.e, "true": True, "false": False}


def _eval(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, str)):
        return node.value
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left), _eval(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        return _UNARY[type(node.op)](_eval(node.operand))
    if isinstance(node, (ast.List, ast.Tuple)):
        return [_eval(e) for e in node.elts]
    if isinstance(node, ast.Name):
        return _CONSTS.get(node.id.lower(), node.id)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if node.keywords or len(node.args) != 1:
            raise ValueError(f"{node.func.id} takes exactly one argument")
        return _FUNCS[node.func.id](_eval(node.args[0]))
    raise ValueError(f"unsupported expression: {ast.dump(node)}")


def evaluate(text: str):
    """Evaluate a single value expression."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse {text!r}: {exc.msg}") from None
    return _eval(tree.body)


def parse_call(text: str) -> tuple[str, list, dict]:
    """Split ``name(a, b, key=value)`` into ``(name, [a, b], {key: value})``.

    A bare name without parentheses yields empty argument lists.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse {text!r}: {exc.msg}") from None
    body = tree.body
    if isinstance(body, ast.Name):
        return body.id, [], {}
    if not (isinstance(body, ast.Call) and isinstance(body.func, ast.Name)):
        raise ValueError(f"expected name(...), got {text!r}")
    args = [_eval(a) for a in body.args]
    kwargs = {kw.arg: _eval(kw.value) for kw in body.keywords}
    return body.func.id, args, kwargs
