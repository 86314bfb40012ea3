"""Coefficient expressions: parsing, evaluation, exact symbolic differentiation.

Drift and scale coefficients are supplied as text like ``"alpha1*(alpha2-X)"``
or ``"gamma1*X^gamma2"``. The grammar is deliberately small: numbers, declared
identifiers, ``+ - * / ^``, unary minus, and the functions exp/log/sqrt/abs.
Precedence is ``^`` > unary minus > ``* /`` > ``+ -``; ``^`` is
right-associative, everything else left-associative, and ``^`` binds tighter
than unary minus, so ``-X^2`` means ``-(X^2)``.

Expressions are immutable after construction and safe to share across threads.
Differentiation is exact (with constant folding of the result); correctness of
derivatives is established numerically in the test suite against central
finite differences.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

_IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")
_FUNCTIONS = ("exp", "log", "sqrt", "abs")


class ExprSyntaxError(ValueError):
    """Malformed expression text; ``pos`` is the 0-based offset of the error."""

    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class UndeclaredSymbolError(ValueError):
    """Identifier not present in the symbol table; ``name`` is the offender."""

    def __init__(self, name: str, pos: int = -1):
        where = f" (at position {pos})" if pos >= 0 else ""
        super().__init__(f"undeclared identifier '{name}'{where}")
        self.name = name


class EvalDomainError(ArithmeticError):
    """Arithmetic left the real domain (log of nonpositive, 0^negative, ...)."""

    def __init__(self, message: str, node: "Node"):
        super().__init__(f"{message} in subexpression '{to_text(node)}'")
        self.node = node


# ---------------------------------------------------------------------------
# AST nodes


class Node:
    __slots__ = ()

    def __repr__(self):
        return f"{type(self).__name__}({to_text(self)!r})"


class Const(Node):
    __slots__ = ("value",)

    def __init__(self, value: float):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"non-finite constant {value!r}")
        object.__setattr__(self, "value", value)

    def __setattr__(self, *a):
        raise AttributeError("Const is immutable")

    def __eq__(self, other):
        return isinstance(other, Const) and (
            self.value == other.value
            or (math.isnan(self.value) and math.isnan(other.value))
        )

    def __hash__(self):
        return hash(("const", self.value))


class Sym(Node):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)

    def __setattr__(self, *a):
        raise AttributeError("Sym is immutable")

    def __eq__(self, other):
        return isinstance(other, Sym) and self.name == other.name

    def __hash__(self):
        return hash(("sym", self.name))


class Unary(Node):
    """op in {"neg", "exp", "log", "sqrt", "abs"}."""

    __slots__ = ("op", "child")

    def __init__(self, op: str, child: Node):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "child", child)

    def __setattr__(self, *a):
        raise AttributeError("Unary is immutable")

    def __eq__(self, other):
        return isinstance(other, Unary) and self.op == other.op and self.child == other.child

    def __hash__(self):
        return hash(("unary", self.op, self.child))


class Bin(Node):
    """op in {"+", "-", "*", "/", "^"}."""

    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Node, right: Node):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    def __setattr__(self, *a):
        raise AttributeError("Bin is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, Bin)
            and self.op == other.op
            and self.left == other.left
            and self.right == other.right
        )

    def __hash__(self):
        return hash(("bin", self.op, self.left, self.right))


# ---------------------------------------------------------------------------
# Symbol table and the public expression type


@dataclass(frozen=True)
class SymbolTable:
    """Declared names an expression may reference.

    state_vars are the SDE state components (nonempty, ordered), params the
    model parameters (ordered, with optional box bounds), time_var the time
    label. All names must be unique, match ``[A-Za-z][A-Za-z0-9_]*`` and avoid
    the reserved function names exp/log/sqrt/abs.
    """

    state_vars: tuple
    params: tuple = ()
    time_var: str = "t"
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "state_vars", tuple(self.state_vars))
        object.__setattr__(self, "params", tuple(self.params))
        if not self.state_vars:
            raise ValueError("state_vars must be nonempty")
        names = list(self.state_vars) + list(self.params) + [self.time_var]
        for name in names:
            if not _IDENT_RE.fullmatch(name):
                raise ValueError(f"invalid identifier {name!r}")
            if name in _FUNCTIONS:
                raise ValueError(f"identifier {name!r} shadows a builtin function")
        if len(set(names)) != len(names):
            raise ValueError("names in the symbol table must be unique")
        for name, box in self.bounds.items():
            if name not in self.params:
                raise ValueError(f"bounds given for unknown parameter {name!r}")
            lo, hi = box
            if not (lo < hi):
                raise ValueError(f"empty box for {name!r}: [{lo}, {hi}]")

    @property
    def all_names(self) -> frozenset:
        return frozenset(self.state_vars) | frozenset(self.params) | {self.time_var}


@dataclass(frozen=True)
class CoefficientExpr:
    """A parsed coefficient expression bound to its symbol table."""

    ast: Node
    table: SymbolTable

    def __call__(self, **bindings) -> float:
        return evaluate(self, bindings)

    def __str__(self):
        return to_text(self.ast)


# ---------------------------------------------------------------------------
# Parser (recursive descent)


class _Parser:
    def __init__(self, text: str, table: SymbolTable):
        self.text = text
        self.table = table
        self.pos = 0

    def error(self, message: str):
        raise ExprSyntaxError(message, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        if self.peek() != ch:
            self.error(f"expected '{ch}'")
        self.pos += 1

    # sum := product (("+"|"-") product)*
    def parse_sum(self) -> Node:
        node = self.parse_product()
        while self.peek() in ("+", "-"):
            op = self.text[self.pos]
            self.pos += 1
            node = Bin(op, node, self.parse_product())
        return node

    # product := unary (("*"|"/") unary)*
    def parse_product(self) -> Node:
        node = self.parse_unary()
        while self.peek() in ("*", "/"):
            op = self.text[self.pos]
            self.pos += 1
            node = Bin(op, node, self.parse_unary())
        return node

    # unary := "-" unary | power       (so -x^2 == -(x^2))
    def parse_unary(self) -> Node:
        if self.peek() == "-":
            self.pos += 1
            inner = self.parse_unary()
            if isinstance(inner, Const):
                return Const(-inner.value)  # canonical: "-2" is the literal -2.0
            return Unary("neg", inner)
        return self.parse_power()

    # power := atom ("^" unary)?       (right-associative; -x allowed in exponent)
    def parse_power(self) -> Node:
        node = self.parse_atom()
        if self.peek() == "^":
            self.pos += 1
            node = Bin("^", node, self.parse_unary())
        return node

    def parse_atom(self) -> Node:
        ch = self.peek()
        if ch == "":
            self.error("unexpected end of expression")
        if ch == "(":
            self.pos += 1
            node = self.parse_sum()
            self.expect(")")
            return node
        if ch.isdigit() or ch == ".":
            return self.parse_number()
        m = _IDENT_RE.match(self.text, self.pos)
        if m is None:
            self.error(f"unexpected character {ch!r}")
        name = m.group(0)
        start = self.pos
        self.pos = m.end()
        if name in _FUNCTIONS:
            self.expect("(")
            arg = self.parse_sum()
            self.expect(")")
            return Unary(name, arg)
        if name not in self.table.all_names:
            raise UndeclaredSymbolError(name, start)
        return Sym(name)

    _NUMBER_RE = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")

    def parse_number(self) -> Node:
        m = self._NUMBER_RE.match(self.text, self.pos)
        if m is None:
            self.error("malformed number")
        self.pos = m.end()
        return Const(float(m.group(0)))


def parse(text: str, table: SymbolTable) -> CoefficientExpr:
    """Parse coefficient text against a symbol table.

    Raises ExprSyntaxError (with position) on malformed input and
    UndeclaredSymbolError (with the name) on unknown identifiers.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    p = _Parser(text, table)
    node = p.parse_sum()
    p.skip_ws()
    if p.pos != len(text):
        p.error("trailing input")
    return CoefficientExpr(node, table)


# ---------------------------------------------------------------------------
# Pretty printing (parse -> to_text -> parse is an AST fixpoint)

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _print(node: Node, parent_prec: int, right_side: bool) -> str:
    if isinstance(node, Const):
        v = node.value
        if v < 0 or (v == 0 and math.copysign(1.0, v) < 0):
            s = f"-{repr(-v)}"
            return f"({s})" if parent_prec >= _PREC["neg"] else s
        return repr(v)
    if isinstance(node, Sym):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            inner = _print(node.child, _PREC["neg"], False)
            s = f"-{inner}"
            # parenthesize when embedded anywhere binding at least as tightly
            return f"({s})" if parent_prec >= _PREC["neg"] else s
        return f"{node.op}({_print(node.child, 0, False)})"
    assert isinstance(node, Bin)
    prec = _PREC[node.op]
    if node.op == "^":
        left = _print(node.left, prec + 1, False)  # left operand of ^ needs parens if compound
        right = _print(node.right, prec, False)    # right-assoc: bare ^ chains ok
    else:
        left = _print(node.left, prec, False)
        right = _print(node.right, prec + 1, True)
    s = f"{left} {node.op} {right}" if node.op in "+-" else f"{left}{node.op}{right}"
    return f"({s})" if prec < parent_prec else s


def to_text(node: Node) -> str:
    """Render an AST back to parseable text."""
    return _print(node, 0, False)


# ---------------------------------------------------------------------------
# Evaluation


def _eval(node: Node, bindings: dict) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Sym):
        try:
            return float(bindings[node.name])
        except KeyError:
            raise KeyError(f"missing binding for symbol '{node.name}'") from None
    if isinstance(node, Unary):
        x = _eval(node.child, bindings)
        if node.op == "neg":
            return -x
        if node.op == "exp":
            try:
                return math.exp(x)
            except OverflowError:
                return math.inf
        if node.op == "log":
            if x <= 0.0:
                raise EvalDomainError(f"log of nonpositive value {x!r}", node)
            return math.log(x)
        if node.op == "sqrt":
            if x < 0.0:
                raise EvalDomainError(f"sqrt of negative value {x!r}", node)
            return math.sqrt(x)
        return abs(x)
    assert isinstance(node, Bin)
    a = _eval(node.left, bindings)
    b = _eval(node.right, bindings)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        if b == 0.0:
            raise EvalDomainError("division by zero", node)
        return a / b
    # power
    if a == 0.0 and b < 0.0:
        raise EvalDomainError("0 raised to a negative power", node)
    if a < 0.0 and b != math.floor(b):
        raise EvalDomainError(f"negative base {a!r} with non-integer exponent {b!r}", node)
    try:
        return math.pow(a, b)
    except OverflowError:
        sign = -1.0 if (a < 0.0 and math.floor(b) % 2 == 1) else 1.0
        return sign * math.inf


def evaluate(expr: CoefficientExpr, bindings: dict) -> float:
    """Evaluate with IEEE-double arithmetic; bindings map name -> value."""
    return _eval(expr.ast, bindings)


def free_symbols(expr: CoefficientExpr) -> frozenset:
    """Names of all symbols appearing in the tree."""
    out = set()
    stack = [expr.ast]
    while stack:
        node = stack.pop()
        if isinstance(node, Sym):
            out.add(node.name)
        elif isinstance(node, Unary):
            stack.append(node.child)
        elif isinstance(node, Bin):
            stack.append(node.left)
            stack.append(node.right)
    return frozenset(out)


# ---------------------------------------------------------------------------
# Differentiation with constant folding


def _fold(node: Node) -> Node:
    if isinstance(node, (Const, Sym)):
        return node
    if isinstance(node, Unary):
        child = _fold(node.child)
        if isinstance(child, Const):
            try:
                return Const(_eval(Unary(node.op, child), {}))
            except (EvalDomainError, ValueError):
                return Unary(node.op, child)
        if node.op == "neg" and isinstance(child, Unary) and child.op == "neg":
            return child.child
        return Unary(node.op, child)
    assert isinstance(node, Bin)
    left = _fold(node.left)
    right = _fold(node.right)
    if isinstance(left, Const) and isinstance(right, Const):
        try:
            return Const(_eval(Bin(node.op, left, right), {}))
        except (EvalDomainError, ValueError):
            return Bin(node.op, left, right)
    op = node.op
    lz = isinstance(left, Const) and left.value == 0.0
    rz = isinstance(right, Const) and right.value == 0.0
    lone = isinstance(left, Const) and left.value == 1.0
    rone = isinstance(right, Const) and right.value == 1.0
    if op == "+":
        if lz:
            return right
        if rz:
            return left
    elif op == "-":
        if rz:
            return left
        if lz:
            return _fold(Unary("neg", right))
    elif op == "*":
        if lz or rz:
            return Const(0.0)
        if lone:
            return right
        if rone:
            return left
    elif op == "/":
        if lz:
            return Const(0.0)
        if rone:
            return left
    elif op == "^":
        if rone:
            return left
        if isinstance(right, Const) and right.value == 0.0:
            return Const(1.0)
    return Bin(op, left, right)


def _diff(node: Node, wrt: str) -> Node:
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Sym):
        return Const(1.0 if node.name == wrt else 0.0)
    if isinstance(node, Unary):
        du = _diff(node.child, wrt)
        u = node.child
        if node.op == "neg":
            return Unary("neg", du)
        if node.op == "exp":
            return Bin("*", Unary("exp", u), du)
        if node.op == "log":
            return Bin("/", du, u)
        if node.op == "sqrt":
            return Bin("/", du, Bin("*", Const(2.0), Unary("sqrt", u)))
        # d|u| = u/|u| * du; evaluating at u = 0 raises a domain error
        return Bin("*", Bin("/", u, Unary("abs", u)), du)
    assert isinstance(node, Bin)
    u, v = node.left, node.right
    du, dv = _diff(u, wrt), _diff(v, wrt)
    if node.op == "+":
        return Bin("+", du, dv)
    if node.op == "-":
        return Bin("-", du, dv)
    if node.op == "*":
        return Bin("+", Bin("*", du, v), Bin("*", u, dv))
    if node.op == "/":
        num = Bin("-", Bin("*", du, v), Bin("*", u, dv))
        return Bin("/", num, Bin("^", v, Const(2.0)))
    # power u^v
    if isinstance(v, Const):
        # c*u^(c-1)*u'
        return Bin("*", Bin("*", v, Bin("^", u, Const(v.value - 1.0))), du)
    if isinstance(u, Const):
        # u^v * log(u) * v'
        return Bin("*", Bin("*", Bin("^", u, v), Unary("log", u)), dv)
    # u^v * (v' log u + v u'/u)
    bracket = Bin(
        "+",
        Bin("*", dv, Unary("log", u)),
        Bin("*", v, Bin("/", du, u)),
    )
    return Bin("*", Bin("^", u, v), bracket)


def differentiate(expr: CoefficientExpr, wrt: str) -> CoefficientExpr:
    """Exact symbolic partial derivative with constant folding.

    ``wrt`` must be declared in the expression's symbol table. Repeated
    application yields higher derivatives.
    """
    if wrt not in expr.table.all_names:
        raise UndeclaredSymbolError(wrt)
    return CoefficientExpr(_fold(_diff(expr.ast, wrt)), expr.table)


# ---------------------------------------------------------------------------
# Compiled (vectorized) evaluation for the hot paths


def _codegen(node: Node, table: SymbolTable) -> str:
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Sym):
        if node.name in table.state_vars:
            return f"S[..., {table.state_vars.index(node.name)}]"
        if node.name in table.params:
            return f"P[{table.params.index(node.name)}]"
        return "T"
    if isinstance(node, Unary):
        inner = _codegen(node.child, table)
        if node.op == "neg":
            return f"(-({inner}))"
        fn = {"exp": "np.exp", "log": "np.log", "sqrt": "np.sqrt", "abs": "np.abs"}[node.op]
        return f"{fn}({inner})"
    assert isinstance(node, Bin)
    a = _codegen(node.left, table)
    b = _codegen(node.right, table)
    if node.op == "^":
        return f"np.power({a}, {b})"
    return f"({a} {node.op} {b})"


def compile_fn(expr: CoefficientExpr):
    """Compile to ``f(S, P, T=0.0)`` for fast vectorized evaluation.

    S has state components along the last axis (shape (..., d)), P is the
    parameter vector in symbol-table order, T the time value. Domain
    violations follow numpy semantics (nan/inf) instead of raising; callers
    on the optimization path treat non-finite results as invalid.
    """
    src = f"lambda S, P, T=0.0: np.broadcast_to(np.asarray({_codegen(expr.ast, expr.table)}, dtype=float), np.shape(S)[:-1]).copy()"
    return eval(src, {"np": np})  # noqa: S307 - source is generated from the validated AST
