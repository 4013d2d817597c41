"""Text expressions for coefficient functions.

A small recursive-descent parser turns strings such as ``"2*x + exp(-x^2)"``
into an immutable syntax tree.  Trees evaluate on numpy arrays so that
quadrature and simulation code can push thousands of points through a
coefficient in one call.

Grammar (lowest to highest precedence)::

    cond    := sum (('<' | '<=' | '>' | '>=') sum)?
    sum     := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | NAME | NAME '(' cond (',' cond)* ')' | '(' cond ')'

``^`` is right associative and binds tighter than unary minus, so ``-x^2``
means ``-(x^2)``.  ``piecewise(cond, a, b)`` selects ``a`` where ``cond``
holds and ``b`` elsewhere; comparisons are strict where written strict, so
``piecewise(x<0, a, b)`` returns ``b`` at ``x == 0``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Binary",
    "Call",
    "Const",
    "DomainError",
    "Expression",
    "ExpressionError",
    "ExpressionSyntaxError",
    "Piecewise",
    "Unary",
    "UnknownIdentifierError",
    "Var",
    "evaluate",
    "free_variables",
    "is_syntactically_zero",
    "parse",
    "simplify",
    "to_source",
]


class ExpressionError(ValueError):
    """Base class for expression problems."""


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifierError(ExpressionSyntaxError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r}", offset)
        self.name = name


class DomainError(ExpressionError, ArithmeticError):
    """Evaluation left the domain of an operation (or overflowed).

    ``points`` holds the offending evaluation points when they are known.
    """

    def __init__(self, message: str, points=None):
        self.points = None if points is None else np.atleast_1d(np.asarray(points, dtype=float))
        if self.points is not None and self.points.size:
            message = f"{message} (first offending point: {self.points.reshape(self.points.shape[0], -1)[0].tolist()})"
        super().__init__(message)


# ---------------------------------------------------------------------------
# syntax tree


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class Piecewise:
    cond: "Node"
    then: "Node"
    other: "Node"


Node = Union[Const, Var, Unary, Binary, Call, Piecewise]

_FUNCTIONS = {
    "exp": (1, 1),
    "log": (1, 1),
    "sqrt": (1, 1),
    "abs": (1, 1),
    "sign": (1, 1),
    "min": (2, None),
    "max": (2, None),
}
_CONSTANTS = {"pi": np.pi}
_VAR_RE = re.compile(r"^(x|t|x[1-9][0-9]*)$")
_COMPARISONS = ("<=", ">=", "<", ">")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|[-+*/^(),<>])
    """,
    re.VERBOSE,
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, value, pos = self.tok
        if value != text or kind != "op":
            found = "end of input" if kind == "end" else repr(value)
            raise ExpressionSyntaxError(f"expected {text!r}, found {found}", pos)
        self.advance()

    def parse(self) -> Node:
        node = self.cond()
        kind, value, pos = self.tok
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected {value!r}", pos)
        return node

    def cond(self):
        left = self.sum()
        kind, value, _ = self.tok
        if kind == "op" and value in _COMPARISONS:
            self.advance()
            return Binary(value, left, self.sum())
        return left

    def sum(self):
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.advance()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.advance()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.advance()[1]
            return Unary(op, self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            return Binary("^", base, self.unary())
        return base

    def atom(self):
        kind, value, pos = self.tok
        if kind == "number":
            self.advance()
            return Const(float(value))
        if kind == "name":
            self.advance()
            if self.tok[0] == "op" and self.tok[1] == "(":
                return self.call(value, pos)
            if value in _CONSTANTS:
                return Const(float(_CONSTANTS[value]))
            if _VAR_RE.match(value):
                return Var(value)
            raise UnknownIdentifierError(value, pos)
        if kind == "op" and value == "(":
            self.advance()
            node = self.cond()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(value)
        raise ExpressionSyntaxError(f"expected a value, found {found}", pos)

    def call(self, name, pos):
        if name != "piecewise" and name not in _FUNCTIONS:
            raise UnknownIdentifierError(name, pos)
        self.expect("(")
        args = [self.cond()]
        while self.tok[0] == "op" and self.tok[1] == ",":
            self.advance()
            args.append(self.cond())
        self.expect(")")
        if name == "piecewise":
            if len(args) != 3:
                raise ExpressionSyntaxError("piecewise takes exactly 3 arguments", pos)
            return Piecewise(*args)
        lo, hi = _FUNCTIONS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            raise ExpressionSyntaxError(f"wrong number of arguments to {name}", pos)
        return Call(name, tuple(args))


def to_source(node: Node) -> str:
    """Print ``node`` so that parsing the text rebuilds the same tree."""
    if isinstance(node, Const):
        text = repr(float(node.value))
        return f"({text})" if node.value < 0 else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        return f"({node.op}{to_source(node.operand)})"
    if isinstance(node, Binary):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    if isinstance(node, Piecewise):
        return f"piecewise({to_source(node.cond)}, {to_source(node.then)}, {to_source(node.other)})"
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# evaluation


class _Invalid(Exception):
    def __init__(self, message, mask):
        self.message = message
        self.mask = mask


def _check(values, message, strict):
    bad = ~np.isfinite(values)
    if bad.any():
        if strict:
            raise _Invalid(message, bad)
        values = np.where(bad, np.nan, values)
    return values


def _subset(env, mask):
    return {k: (v[mask] if np.ndim(v) else v) for k, v in env.items()}


def _eval(node, env, n, strict):
    if isinstance(node, Const):
        return np.full(n, node.value)
    if isinstance(node, Var):
        return np.broadcast_to(np.asarray(env[node.name], dtype=float), (n,))
    if isinstance(node, Unary):
        v = _eval(node.operand, env, n, strict)
        return -v if node.op == "-" else v
    if isinstance(node, Piecewise):
        cond = _eval(node.cond, env, n, strict)
        pick = cond != 0
        out = np.empty(n)
        if pick.any():
            out[pick] = _eval(node.then, _subset(env, pick), int(pick.sum()), strict)
        rest = ~pick
        if rest.any():
            out[rest] = _eval(node.other, _subset(env, rest), int(rest.sum()), strict)
        # nan conditions propagate instead of silently choosing a branch
        return np.where(np.isnan(cond), np.nan, out)
    if isinstance(node, Binary) and node.op == "^" and isinstance(node.right, Const):
        return _power_const(_eval(node.left, env, n, strict), node.right.value, strict)
    if isinstance(node, Binary):
        a = _eval(node.left, env, n, strict)
        b = _eval(node.right, env, n, strict)
        op = node.op
        if op == "+":
            return _check(a + b, "overflow in +", strict)
        if op == "-":
            return _check(a - b, "overflow in -", strict)
        if op == "*":
            return _check(a * b, "overflow in *", strict)
        if op == "/":
            zero = b == 0
            if zero.any():
                if strict:
                    raise _Invalid("division by zero", zero)
                b = np.where(zero, np.nan, b)
            return _check(a / b, "overflow in /", strict)
        if op == "^":
            neg = (a < 0) & (b != np.round(b))
            zero = (a == 0) & (b < 0)
            bad = neg | zero
            if bad.any():
                if strict:
                    raise _Invalid("power outside its domain", bad)
                a = np.where(bad, np.nan, a)
            return _check(np.power(a, b), "overflow in ^", strict)
        if op == "<":
            return (a < b).astype(float)
        if op == "<=":
            return (a <= b).astype(float)
        if op == ">":
            return (a > b).astype(float)
        if op == ">=":
            return (a >= b).astype(float)
        raise ExpressionError(f"unknown operator {op!r}")
    if isinstance(node, Call):
        args = [_eval(a, env, n, strict) for a in node.args]
        name = node.name
        if name == "exp":
            return _check(np.exp(args[0]), "overflow in exp", strict)
        if name == "log":
            bad = args[0] <= 0
            if bad.any():
                if strict:
                    raise _Invalid("log of a nonpositive number", bad)
                args[0] = np.where(bad, np.nan, args[0])
            return np.log(args[0])
        if name == "sqrt":
            bad = args[0] < 0
            if bad.any():
                if strict:
                    raise _Invalid("sqrt of a negative number", bad)
                args[0] = np.where(bad, np.nan, args[0])
            return np.sqrt(args[0])
        if name == "abs":
            return np.abs(args[0])
        if name == "sign":
            return np.sign(args[0])
        if name == "min":
            return np.minimum.reduce(args)
        if name == "max":
            return np.maximum.reduce(args)
    raise TypeError(f"not an expression node: {node!r}")


def _power_const(a, e, strict):
    integral = e == round(e)
    bad = (a == 0) if e < 0 else None
    if not integral:
        neg = a < 0
        bad = neg if bad is None else bad | neg
    if bad is not None and bad.any():
        if strict:
            raise _Invalid("power outside its domain", bad)
        a = np.where(bad, np.nan, a)
    if e == 2:
        out = a * a
    elif e == 3:
        out = a * a * a
    elif e == 1:
        out = a.copy()
    else:
        out = np.power(a, e)
    return _check(out, "overflow in ^", strict)


def _walk(node):
    yield node
    if isinstance(node, Unary):
        yield from _walk(node.operand)
    elif isinstance(node, Binary):
        yield from _walk(node.left)
        yield from _walk(node.right)
    elif isinstance(node, Call):
        for a in node.args:
            yield from _walk(a)
    elif isinstance(node, Piecewise):
        yield from _walk(node.cond)
        yield from _walk(node.then)
        yield from _walk(node.other)


# ---------------------------------------------------------------------------
# simplification


def _fold(node):
    """Evaluate a node with constant children, or return None."""
    try:
        with np.errstate(all="ignore"):
            value = _eval(node, {}, 1, True)[0]
    except (_Invalid, KeyError):
        return None
    return Const(float(value)) if np.isfinite(value) else None


def _is_const(node, value=None):
    return isinstance(node, Const) and (value is None or node.value == value)


def _simplify_once(node):
    if isinstance(node, (Const, Var)):
        return node
    if isinstance(node, Unary):
        arg = _simplify_once(node.operand)
        if node.op == "+":
            return arg
        if isinstance(arg, Unary) and arg.op == "-":
            return arg.operand
        if _is_const(arg):
            return Const(0.0) if arg.value == 0 else Const(-arg.value)
        return Unary("-", arg)
    if isinstance(node, Piecewise):
        cond = _simplify_once(node.cond)
        then = _simplify_once(node.then)
        other = _simplify_once(node.other)
        if _is_const(cond):
            return then if cond.value != 0 else other
        if then == other:
            return then
        return Piecewise(cond, then, other)
    if isinstance(node, Call):
        args = tuple(_simplify_once(a) for a in node.args)
        new = Call(node.name, args)
        if all(_is_const(a) for a in args):
            return _fold(new) or new
        if node.name in ("min", "max") and all(a == args[0] for a in args):
            return args[0]
        if node.name in ("abs", "sign", "sqrt") and _is_const(args[0], 0.0):
            return Const(0.0)
        return new
    if isinstance(node, Binary):
        a = _simplify_once(node.left)
        b = _simplify_once(node.right)
        op = node.op
        new = Binary(op, a, b)
        if _is_const(a) and _is_const(b):
            return _fold(new) or new
        if op == "+":
            if _is_const(a, 0.0):
                return b
            if _is_const(b, 0.0):
                return a
            if (isinstance(b, Unary) and b.operand == a) or (isinstance(a, Unary) and a.operand == b):
                return Const(0.0)
        elif op == "-":
            if a == b:
                return Const(0.0)
            if _is_const(b, 0.0):
                return a
            if _is_const(a, 0.0):
                return Unary("-", b)
        elif op == "*":
            if _is_const(a, 0.0) or _is_const(b, 0.0):
                return Const(0.0)
            if _is_const(a, 1.0):
                return b
            if _is_const(b, 1.0):
                return a
        elif op == "/":
            if _is_const(a, 0.0) and not _is_const(b, 0.0):
                return Const(0.0)
            if _is_const(b, 1.0):
                return a
        elif op == "^":
            if _is_const(b, 1.0):
                return a
            if _is_const(b, 0.0):
                return Const(1.0)
            if _is_const(a, 0.0) and _is_const(b) and b.value > 0:
                return Const(0.0)
        return new
    raise TypeError(f"not an expression node: {node!r}")


def simplify(node: Node) -> Node:
    """Constant folding plus a handful of algebraic identities, to a fixpoint."""
    for _ in range(100):
        new = _simplify_once(node)
        if new == node:
            return new
        node = new
    return node


# ---------------------------------------------------------------------------
# public wrapper


class Expression:
    """Parsed, immutable expression.

    Calling the object evaluates it on arrays::

        >>> e = parse("2*x + exp(-x^2)")
        >>> float(e(x=0.0))
        1.0
    """

    __slots__ = ("source", "ast", "_vars")

    def __init__(self, source: str, ast: Node):
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "ast", ast)
        object.__setattr__(self, "_vars", frozenset(n.name for n in _walk(ast) if isinstance(n, Var)))

    def __setattr__(self, name, value):
        raise AttributeError("Expression is immutable")

    def __repr__(self):
        return f"Expression({self.source!r})"

    def __str__(self):
        return self.source

    def __eq__(self, other):
        return isinstance(other, Expression) and self.ast == other.ast

    def __hash__(self):
        return hash(self.ast)

    @classmethod
    def from_ast(cls, ast: Node) -> "Expression":
        return cls(to_source(ast), ast)

    @property
    def variables(self) -> frozenset:
        return self._vars

    def __call__(self, strict: bool = True, **env):
        """Evaluate with keyword arrays, e.g. ``e(x=xs, t=0.0)``.

        With ``strict=False`` domain violations become NaN instead of raising;
        the simulator uses this to flag individual paths.
        """
        missing = self._vars - env.keys()
        if missing:
            raise ExpressionError(f"no value supplied for {sorted(missing)}")
        arrays = {k: np.asarray(env[k], dtype=float) for k in self._vars}
        shape = np.broadcast_shapes(*(a.shape for a in arrays.values())) if arrays else ()
        n = int(np.prod(shape)) if shape else 1
        flat = {k: np.broadcast_to(a, shape).reshape(n) for k, a in arrays.items()}
        try:
            with np.errstate(all="ignore"):
                out = _eval(self.ast, flat, n, strict)
        except _Invalid as exc:
            pts = None
            space = [k for k in sorted(flat) if k != "t"]
            if space:
                pts = np.column_stack([flat[k][exc.mask] for k in space])
            raise DomainError(f"{exc.message} in {self.source!r}", pts) from None
        return out.reshape(shape) if shape else out[0]

    def evaluate(self, point, time: float = 0.0) -> float:
        return evaluate(self, point, time)

    def is_zero(self) -> bool:
        return is_syntactically_zero(self)


def parse(source: str) -> Expression:
    if not isinstance(source, str) or not source.strip():
        raise ExpressionSyntaxError("empty expression", 0)
    return Expression(source, _Parser(source).parse())


def _point_env(e: Expression, point) -> dict:
    coords = np.atleast_1d(np.asarray(point, dtype=float))
    if coords.ndim != 1:
        raise ExpressionError("a single point must be a scalar or a 1-d vector")
    env = {}
    for name in e.variables:
        if name == "t":
            continue
        if name == "x":
            if coords.size != 1:
                raise ExpressionError(f"variable 'x' used with a {coords.size}-dimensional point; use x1..x{coords.size}")
            env["x"] = coords[0]
        else:
            k = int(name[1:])
            if k > coords.size:
                raise ExpressionError(f"variable {name!r} exceeds point dimension {coords.size}")
            env[name] = coords[k - 1]
    return env


def evaluate(e: Union[Expression, str], point, time: float = 0.0) -> float:
    """Evaluate ``e`` at a single point (scalar or vector) and time."""
    if isinstance(e, str):
        e = parse(e)
    env = _point_env(e, point)
    if "t" in e.variables:
        env["t"] = time
    return float(e(**env))


def is_syntactically_zero(e: Union[Expression, str]) -> bool:
    """True when constant folding reduces ``e`` to the literal 0.

    False says nothing about whether ``e`` vanishes almost everywhere.
    """
    if isinstance(e, str):
        e = parse(e)
    node = simplify(e.ast)
    return _is_const(node, 0.0)


def free_variables(e: Union[Expression, str]) -> set:
    if isinstance(e, str):
        e = parse(e)
    return set(e.variables)


def combine(op: str, *parts: Sequence) -> Expression:
    """Build ``a op b`` from expressions without re-parsing user text."""
    nodes = [p.ast if isinstance(p, Expression) else p for p in parts]
    if op == "neg":
        return Expression.from_ast(Unary("-", nodes[0]))
    node = nodes[0]
    for other in nodes[1:]:
        node = Binary(op, node, other)
    return Expression.from_ast(node)


def constant(value: float) -> Expression:
    return Expression.from_ast(Const(float(value)))


def as_expression(value: Union[Expression, str, float, int, Mapping]) -> Expression:
    if isinstance(value, Expression):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return parse(repr(float(value))) if value >= 0 else combine("neg", Const(float(-value)))
    if isinstance(value, str):
        return parse(value)
    raise ExpressionError(f"cannot interpret {value!r} as an expression")
