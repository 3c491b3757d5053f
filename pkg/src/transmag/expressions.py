"""Tiny arithmetic expression language for model component formulas.

Metric entries, tensor entries and structure functions are written as
text in a deliberately small grammar:

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := base ('^' factor)?
    base   := number | ident | '(' expr ')'
            | ('-' | 'sin' | 'cos' | 'exp' | 'sqrt') base
    ident  := 'x' digits | 't'

Numbers are decimal with an optional exponent.  Coordinates are named
``x1 .. xd``; the bare name ``t`` is an alias that is bound to one
designated coordinate when a field is compiled (warping profiles are
written in ``t``).

Expressions parse to plain tuple ASTs, e.g. ``('bin', '+', ('var', 'x1'),
('num', 2.0))``.  ``compile_field`` turns a whole matrix of expressions
into a single vectorized numpy function; constant entries are folded into
a precomputed template so only coordinate-dependent entries cost
anything per evaluation.
"""

import math
import re

import numpy as np

from .errors import EvaluationDomainError, ExpressionError

_FUNCTIONS = ("sin", "cos", "exp", "sqrt")

_TOKEN_RE = re.compile(
    r"""
    (?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
  | (?P<space>\s+)
  | (?P<bad>.)
    """,
    re.VERBOSE,
)


def _tokenize(text):
    tokens = []
    line, col = 1, 1
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        value = m.group()
        if kind == "bad":
            raise ExpressionError(f"unexpected character {value!r}", line, col)
        if kind != "space":
            tokens.append((kind, value, line, col))
        for ch in value:
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1
    tokens.append(("end", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        raise ExpressionError(message, tok[2], tok[3])

    def parse(self):
        node = self.expr()
        kind, value, _, _ = self.peek()
        if kind != "end":
            self.error(f"unexpected {value!r} after expression")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.advance()[1]
            node = ("bin", op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            op = self.advance()[1]
            node = ("bin", op, node, self.factor())
        return node

    def factor(self):
        node = self.base()
        if self.peek()[:2] == ("op", "^"):
            self.advance()
            node = ("bin", "^", node, self.factor())
        return node

    def base(self):
        kind, value, line, col = self.advance()
        if kind == "number":
            return ("num", float(value))
        if kind == "name":
            if value in _FUNCTIONS:
                return ("call", value, self.base())
            if value == "t" or re.fullmatch(r"x\d+", value):
                return ("var", value)
            raise ExpressionError(f"unknown identifier {value!r}", line, col)
        if (kind, value) == ("op", "-"):
            return ("neg", self.base())
        if (kind, value) == ("op", "("):
            node = self.expr()
            kind, value, line, col = self.advance()
            if (kind, value) != ("op", ")"):
                raise ExpressionError("expected ')'", line, col)
            return node
        raise ExpressionError(
            f"expected a number, identifier or '(', got {value!r}" if value
            else "unexpected end of expression",
            line, col,
        )


def parse(text):
    """Parse expression text to a tuple AST."""
    if not isinstance(text, str):
        return text  # already an AST
    return _Parser(text).parse()


def variables(ast):
    """Set of variable names appearing in an AST."""
    tag = ast[0]
    if tag == "num":
        return set()
    if tag == "var":
        return {ast[1]}
    if tag == "neg":
        return variables(ast[1])
    if tag == "call":
        return variables(ast[2])
    return variables(ast[2]) | variables(ast[3])


def substitute(ast, mapping):
    """Rename variables according to ``mapping`` (e.g. bind the t alias)."""
    tag = ast[0]
    if tag == "num":
        return ast
    if tag == "var":
        return ("var", mapping.get(ast[1], ast[1]))
    if tag == "neg":
        return ("neg", substitute(ast[1], mapping))
    if tag == "call":
        return ("call", ast[1], substitute(ast[2], mapping))
    return ("bin", ast[1], substitute(ast[2], mapping), substitute(ast[3], mapping))


_MATH_FN = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "sqrt": math.sqrt}


def fold(ast):
    """Constant-fold: collapse variable-free subtrees to numbers."""
    tag = ast[0]
    if tag in ("num", "var"):
        return ast
    if tag == "neg":
        a = fold(ast[1])
        return ("num", -a[1]) if a[0] == "num" else ("neg", a)
    if tag == "call":
        a = fold(ast[2])
        if a[0] == "num":
            try:
                return ("num", _MATH_FN[ast[1]](a[1]))
            except (ValueError, OverflowError) as exc:
                raise ExpressionError(f"constant {ast[1]} is undefined: {exc}")
        return ("call", ast[1], a)
    op, a, b = ast[1], fold(ast[2]), fold(ast[3])
    if a[0] == "num" and b[0] == "num":
        try:
            if op == "+":
                return ("num", a[1] + b[1])
            if op == "-":
                return ("num", a[1] - b[1])
            if op == "*":
                return ("num", a[1] * b[1])
            if op == "/":
                return ("num", a[1] / b[1])
            return ("num", a[1] ** b[1])
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise ExpressionError(f"constant expression is undefined: {exc}")
    return ("bin", op, a, b)


def derivative(ast, var):
    """Exact derivative of an AST with respect to variable ``var``.

    Non-constant exponents are rejected (the grammar has no logarithm).
    """
    tag = ast[0]
    if tag == "num":
        return ("num", 0.0)
    if tag == "var":
        return ("num", 1.0 if ast[1] == var else 0.0)
    if tag == "neg":
        return ("neg", derivative(ast[1], var))
    if tag == "call":
        fn, a = ast[1], ast[2]
        da = derivative(a, var)
        if fn == "sin":
            outer = ("call", "cos", a)
        elif fn == "cos":
            outer = ("neg", ("call", "sin", a))
        elif fn == "exp":
            outer = ast
        else:  # sqrt
            outer = ("bin", "/", ("num", 0.5), ("call", "sqrt", a))
        return ("bin", "*", outer, da)
    op, a, b = ast[1], ast[2], ast[3]
    da, db = derivative(a, var), derivative(b, var)
    if op in "+-":
        return ("bin", op, da, db)
    if op == "*":
        return ("bin", "+", ("bin", "*", da, b), ("bin", "*", a, db))
    if op == "/":
        num = ("bin", "-", ("bin", "*", da, b), ("bin", "*", a, db))
        return ("bin", "/", num, ("bin", "^", b, ("num", 2.0)))
    # power with constant exponent: c * a^(c-1) * a'
    bf = fold(b)
    if bf[0] != "num":
        raise ExpressionError("derivative of a non-constant exponent is unsupported")
    c = bf[1]
    return ("bin", "*",
            ("bin", "*", ("num", c), ("bin", "^", a, ("num", c - 1.0))),
            da)


def to_source(ast):
    """Render an AST back to grammar-conforming text."""

    def atom(node):
        s = to_source(node)
        return s if node[0] in ("num", "var", "call") and not s.startswith("-") else f"({s})"

    tag = ast[0]
    if tag == "num":
        v = ast[1]
        if v == int(v) and abs(v) < 1e16:
            return repr(int(v)) if v >= 0 else f"-{int(-v)}"
        return repr(v)
    if tag == "var":
        return ast[1]
    if tag == "neg":
        return f"-{atom(ast[1])}"
    if tag == "call":
        return f"{ast[1]}({to_source(ast[2])})"
    op, a, b = ast[1], ast[2], ast[3]
    if op in "+-":
        left = to_source(a)
        right = to_source(b)
        if b[0] in ("bin", "neg") and (b[0] == "neg" or b[1] in "+-"):
            right = f"({right})"
        return f"{left}{op}{right}"
    if op in "*/":
        def mul_operand(node, protect_div):
            s = to_source(node)
            if node[0] == "neg" or (node[0] == "bin" and node[1] in "+-"):
                return f"({s})"
            if protect_div and node[0] == "bin" and node[1] in "*/":
                return f"({s})"
            return s
        return f"{mul_operand(a, False)}{op}{mul_operand(b, op == '/')}"
    return f"{atom(a)}^{atom(b)}"


def _emit(ast):
    """Numpy source text for a (non-constant) AST."""
    tag = ast[0]
    if tag == "num":
        return repr(ast[1])
    if tag == "var":
        return ast[1]
    if tag == "neg":
        return f"(-{_emit(ast[1])})"
    if tag == "call":
        return f"np.{ast[1]}({_emit(ast[2])})"
    op = {"+": "+", "-": "-", "*": "*", "/": "/", "^": "**"}[ast[1]]
    return f"({_emit(ast[2])}{op}{_emit(ast[3])})"


class CompiledField:
    """A matrix/vector of expressions compiled to one vectorized function.

    Calling with an ``(m, dim)`` array of points returns an array of shape
    ``(m,) + shape``.  ``sources`` keeps the original expression text for
    serialization.
    """

    def __init__(self, fn, shape, dim, sources, label, check_finite):
        self._fn = fn
        self.shape = shape
        self.dim = dim
        self.sources = sources
        self.label = label
        self.check_finite = check_finite

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise ValueError(
                f"{self.label}: expected points of shape (m, {self.dim})")
        with np.errstate(all="ignore"):
            out = self._fn(points)
        if self.check_finite and not np.all(np.isfinite(out)):
            raise EvaluationDomainError(
                f"{self.label}: expression produced a non-finite value")
        return out


def compile_field(entries, shape, dim, alias=None, label="field",
                  check_finite=False):
    """Compile a nested list of expression strings into a CompiledField.

    ``entries`` is nested to match ``shape`` (one level per axis).  The
    alias variable ``t``, when present, must be bound via ``alias`` (the
    substitute coordinate name, e.g. ``"x3"``).
    """
    flat_index = []

    def walk(node, idx):
        if len(idx) == len(shape):
            flat_index.append((idx, node))
            return
        if not isinstance(node, (list, tuple)) or len(node) != shape[len(idx)]:
            raise ExpressionError(f"{label}: entries do not match shape {shape}")
        for k, child in enumerate(node):
            walk(child, idx + (k,))

    walk(entries, ())

    template = np.zeros(shape)
    lines = []
    used = set()
    sources = np.empty(shape, dtype=object)
    for idx, text in flat_index:
        ast = fold(parse(text))
        if alias is not None:
            ast = fold(substitute(ast, {"t": alias}))
        names = variables(ast)
        if "t" in names:
            raise ExpressionError(
                f"{label}: 't' used without a designated alias coordinate")
        for name in names:
            axis = int(name[1:])
            if not 1 <= axis <= dim:
                raise ExpressionError(
                    f"{label}: variable {name} outside x1..x{dim}")
        sources[idx] = to_source(ast)
        if ast[0] == "num":
            template[idx] = ast[1]
            continue
        used |= names
        sel = ", ".join(str(k) for k in idx)
        lines.append(f"    out[:, {sel}] = {_emit(ast)}")

    header = ["def _field(P):",
              "    out = np.empty((P.shape[0],) + _shape)",
              "    out[...] = _template"]
    for name in sorted(used, key=lambda s: int(s[1:])):
        header.append(f"    {name} = P[:, {int(name[1:]) - 1}]")
    src = "\n".join(header + lines + ["    return out"])
    namespace = {"np": np, "_shape": shape, "_template": template}
    exec(compile(src, f"<{label}>", "exec"), namespace)
    return CompiledField(namespace["_field"], shape, dim,
                         sources.tolist(), label, check_finite)
