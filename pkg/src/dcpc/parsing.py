"""Text frontend: a small modeling language for vector optimization problems.

The surface syntax::

    # duel.cvx
    var alice;
    var bob;
    minimize max(alice + bob + 2, -alice - bob);
    subject to
      alice <= 0;
      bob == -0.5;

Grammar sketch (``#`` starts a line comment, files are UTF-8)::

    problem    := vardecl* objective constraints?
    vardecl    := "var" IDENT ("[" INT "]")? ";"
    objective  := ("minimize" | "maximize") expr ";"
    constraints:= "subject" "to" (expr REL expr ";")+     REL in {<=, >=, ==}
    additive   := mult (("+" | "-") mult)*
    mult       := factor ("*" factor)*
    factor     := NUMBER | "[" SNUMBER ("," SNUMBER)* "]" | IDENT
                | IDENT "[" INT "]" | ATOM "(" expr ("," expr)* ")"
                | "(" expr ")" | "-" factor

Precedence: unary minus binds tighter than ``*``, which binds tighter than
``+``/``-``; relations bind loosest and cannot be chained.  Indexing is
0-based.  A unary minus applied directly to a numeric or vector literal folds
into a negative constant, so printed problems parse back to identical trees.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import expressions as ex

__all__ = ["SourceSpan", "ParseError", "parse_problem", "print_problem",
           "format_number", "RESERVED_WORDS"]


@dataclass(frozen=True)
class SourceSpan:
    """Location of a token or phrase: 1-based line/column plus length."""

    line: int
    column: int
    length: int


class ParseError(ValueError):
    """A rejection of the input text, carrying the offending span."""

    def __init__(self, message: str, span: SourceSpan):
        self.span = span
        super().__init__(f"{span.line}:{span.column}: {message}")


_KEYWORDS = ("var", "minimize", "maximize", "subject", "to")
_ATOM_NAMES = ("abs", "max", "sum", "square", "sum_squares", "norm2")
RESERVED_WORDS = frozenset(_KEYWORDS) | frozenset(_ATOM_NAMES)

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<number>(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<rel><=|>=|==)
  | (?P<punct>[;,()\[\]+\-*])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Token:
    kind: str  # NUMBER, IDENT, REL, PUNCT, EOF
    text: str
    span: SourceSpan
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            span = SourceSpan(line, pos - line_start + 1, 1)
            raise ParseError(f"unexpected character {text[pos]!r}", span)
        kind = m.lastgroup
        tok_text = m.group()
        if kind == "newline":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            span = SourceSpan(line, pos - line_start + 1, len(tok_text))
            name = {"number": "NUMBER", "ident": "IDENT",
                    "rel": "REL", "punct": "PUNCT"}[kind]
            tokens.append(_Token(name, tok_text, span, pos))
        pos = m.end()
    tokens.append(_Token("EOF", "", SourceSpan(line, len(text) - line_start + 1, 1),
                         len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0
        self.variables: list[ex.VariableDecl] = []
        self.by_name: dict[str, ex.VariableDecl] = {}

    # --- token plumbing -------------------------------------------------

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def expect(self, kind: str, text: str | None = None, what: str | None = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            wanted = what or (text if text is not None else kind.lower())
            got = repr(tok.text) if tok.kind != "EOF" else "end of input"
            raise ParseError(f"expected {wanted}, found {got}", tok.span)
        return self.advance()

    def span_between(self, start: _Token, end: _Token) -> SourceSpan:
        length = max(1, end.offset + len(end.text) - start.offset)
        return SourceSpan(start.span.line, start.span.column, length)

    def prev(self) -> _Token:
        return self.tokens[max(0, self.pos - 1)]

    # --- grammar --------------------------------------------------------

    def parse(self) -> ex.ProblemForm:
        while self.peek().kind == "IDENT" and self.peek().text == "var":
            self.parse_vardecl()
        sense_tok = self.peek()
        if sense_tok.kind == "IDENT" and sense_tok.text in ("minimize", "maximize"):
            self.advance()
            sense = ex.Sense.MINIMIZE if sense_tok.text == "minimize" else ex.Sense.MAXIMIZE
        else:
            raise ParseError("expected 'minimize' or 'maximize'", sense_tok.span)
        start = self.peek()
        objective = self.parse_expr()
        if objective.dim != 1:
            raise ParseError(f"objective must be scalar, got dimension {objective.dim}",
                             self.span_between(start, self.prev()))
        self.expect("PUNCT", ";")
        constraints = []
        if self.peek().kind == "IDENT" and self.peek().text == "subject":
            self.advance()
            self.expect("IDENT", "to", what="'to'")
            constraints.append(self.parse_constraint())
            while self.peek().kind != "EOF":
                constraints.append(self.parse_constraint())
        tok = self.peek()
        if tok.kind != "EOF":
            raise ParseError(f"unexpected trailing input {tok.text!r}", tok.span)
        try:
            return ex.make_problem(sense, objective, constraints, self.variables)
        except (ex.ProblemError, ex.ExpressionError) as err:
            raise ParseError(str(err), SourceSpan(1, 1, 1)) from err

    def parse_vardecl(self):
        self.expect("IDENT", "var")
        name_tok = self.expect("IDENT", what="variable name")
        name = name_tok.text
        if name in RESERVED_WORDS:
            raise ParseError(f"'{name}' is a reserved word", name_tok.span)
        if name in self.by_name:
            raise ParseError(f"variable '{name}' is already declared", name_tok.span)
        dim = 1
        if self.peek().kind == "PUNCT" and self.peek().text == "[":
            self.advance()
            dim_tok = self.expect("NUMBER", what="dimension")
            dim_val = float(dim_tok.text)
            if dim_val != int(dim_val) or int(dim_val) < 1:
                raise ParseError("dimension must be a positive integer", dim_tok.span)
            dim = int(dim_val)
            self.expect("PUNCT", "]")
        self.expect("PUNCT", ";")
        decl = ex.VariableDecl(len(self.variables), name, dim)
        self.variables.append(decl)
        self.by_name[name] = decl

    def parse_constraint(self):
        lhs_start = self.peek()
        lhs = self.parse_expr()
        rel_tok = self.peek()
        if rel_tok.kind != "REL":
            raise ParseError("expected a relation ('<=', '>=', or '==')", rel_tok.span)
        self.advance()
        rhs = self.parse_expr()
        after = self.peek()
        if after.kind == "REL":
            raise ParseError("chained relations are not allowed", after.span)
        self.expect("PUNCT", ";")
        relation = {"<=": ex.Relation.LE, ">=": ex.Relation.GE,
                    "==": ex.Relation.EQ}[rel_tok.text]
        if lhs.dim != rhs.dim and 1 not in (lhs.dim, rhs.dim):
            raise ParseError(
                f"constraint sides have dimensions {lhs.dim} and {rhs.dim}",
                self.span_between(lhs_start, self.prev()))
        return (lhs, relation, rhs)

    def parse_expr(self) -> ex.ExpressionNode:
        return self.parse_additive()

    def _build(self, fn, args, start: _Token):
        try:
            return fn(*args)
        except ex.ExpressionError as err:
            raise ParseError(str(err), self.span_between(start, self.prev())) from err

    def parse_additive(self) -> ex.ExpressionNode:
        start = self.peek()
        node = self.parse_mult()
        while self.peek().kind == "PUNCT" and self.peek().text in "+-":
            op = self.advance().text
            rhs = self.parse_mult()
            node = self._build(ex.add if op == "+" else ex.sub, (node, rhs), start)
        return node

    def parse_mult(self) -> ex.ExpressionNode:
        start = self.peek()
        node = self.parse_factor()
        while self.peek().kind == "PUNCT" and self.peek().text == "*":
            self.advance()
            rhs = self.parse_factor()
            node = self._build(ex.mul, (node, rhs), start)
        return node

    def parse_factor(self) -> ex.ExpressionNode:
        tok = self.peek()
        if tok.kind == "PUNCT" and tok.text == "-":
            self.advance()
            nxt = self.peek()
            # A minus applied directly to a literal folds into the constant,
            # which keeps printed negative constants re-parseable as written.
            if nxt.kind == "NUMBER":
                self.advance()
                return ex.constant(-float(nxt.text))
            if nxt.kind == "PUNCT" and nxt.text == "[":
                return ex.constant(-self.parse_vector_literal())
            operand = self.parse_factor()
            return self._build(ex.neg, (operand,), tok)
        return self.parse_primary()

    def parse_vector_literal(self) -> np.ndarray:
        self.expect("PUNCT", "[")
        values = [self.parse_signed_number()]
        while self.peek().kind == "PUNCT" and self.peek().text == ",":
            self.advance()
            values.append(self.parse_signed_number())
        self.expect("PUNCT", "]")
        return np.array(values)

    def parse_primary(self) -> ex.ExpressionNode:
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.advance()
            return ex.constant(float(tok.text))
        if tok.kind == "PUNCT" and tok.text == "[":
            return ex.constant(self.parse_vector_literal())
        if tok.kind == "PUNCT" and tok.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect("PUNCT", ")")
            return node
        if tok.kind == "IDENT":
            name = tok.text
            self.advance()
            nxt = self.peek()
            if nxt.kind == "PUNCT" and nxt.text == "(":
                if name not in _ATOM_NAMES:
                    raise ParseError(f"unknown atom '{name}'", tok.span)
                self.advance()
                args = [self.parse_expr()]
                while self.peek().kind == "PUNCT" and self.peek().text == ",":
                    self.advance()
                    args.append(self.parse_expr())
                self.expect("PUNCT", ")")
                builder = {"abs": ex.abs_, "max": ex.max_, "sum": ex.sum_,
                           "square": ex.square, "sum_squares": ex.sum_squares,
                           "norm2": ex.norm2}[name]
                return self._build(builder, tuple(args), tok)
            if name in RESERVED_WORDS:
                raise ParseError(f"'{name}' is a reserved word", tok.span)
            if name not in self.by_name:
                raise ParseError(f"unknown identifier '{name}'", tok.span)
            decl = self.by_name[name]
            node = ex.var_ref(decl)
            if nxt.kind == "PUNCT" and nxt.text == "[":
                self.advance()
                idx_tok = self.expect("NUMBER", what="index")
                idx_val = float(idx_tok.text)
                if idx_val != int(idx_val):
                    raise ParseError("index must be an integer", idx_tok.span)
                self.expect("PUNCT", "]")
                node = self._build(ex.index, (node, int(idx_val)), tok)
            return node
        got = repr(tok.text) if tok.kind != "EOF" else "end of input"
        raise ParseError(f"expected an expression, found {got}", tok.span)

    def parse_signed_number(self) -> float:
        sign = 1.0
        if self.peek().kind == "PUNCT" and self.peek().text == "-":
            self.advance()
            sign = -1.0
        tok = self.expect("NUMBER", what="a number")
        return sign * float(tok.text)


def parse_problem(text: str) -> ex.ProblemForm:
    """Parse source text into a validated :class:`ProblemForm`."""
    return _Parser(text).parse()


def format_number(v: float) -> str:
    """Shortest faithful rendering of a float for the surface syntax."""
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


# Precedence levels used by the printer; a child is parenthesized when its
# level is below what its context requires.
_LEVEL_ADD, _LEVEL_MUL, _LEVEL_UNARY, _LEVEL_FACTOR = 1, 2, 3, 4


def _print_expr(expr: ex.ExpressionNode) -> tuple[str, int]:
    if expr.kind == "const":
        if expr.dim == 1:
            v = float(expr.payload[0])
            return format_number(v), (_LEVEL_UNARY if v < 0 else _LEVEL_FACTOR)
        body = ", ".join(format_number(float(v)) for v in expr.payload)
        return f"[{body}]", _LEVEL_FACTOR
    if expr.kind == "var":
        return expr.var_name, _LEVEL_FACTOR

    def child(e, need):
        text, level = _print_expr(e)
        return f"({text})" if level < need else text

    name = expr.atom
    if name == "add":
        return (f"{child(expr.children[0], _LEVEL_ADD)} + {child(expr.children[1], _LEVEL_MUL)}",
                _LEVEL_ADD)
    if name == "sub":
        return (f"{child(expr.children[0], _LEVEL_ADD)} - {child(expr.children[1], _LEVEL_MUL)}",
                _LEVEL_ADD)
    if name == "mul_const":
        return (f"{child(expr.children[0], _LEVEL_MUL)} * {child(expr.children[1], _LEVEL_UNARY)}",
                _LEVEL_MUL)
    if name == "neg":
        operand = expr.children[0]
        if operand.kind == "const":
            text, _ = _print_expr(operand)
            return f"-({text})", _LEVEL_UNARY
        return f"-{child(operand, _LEVEL_UNARY)}", _LEVEL_UNARY
    if name == "index":
        base = expr.children[0]
        if base.kind != "var":
            raise ValueError("index of a non-variable expression has no textual form")
        return f"{base.var_name}[{expr.param}]", _LEVEL_FACTOR
    args = ", ".join(_print_expr(c)[0] for c in expr.children)
    return f"{name}({args})", _LEVEL_FACTOR


def print_problem(problem: ex.ProblemForm) -> str:
    """Emit canonical text for a problem; ``parse_problem`` inverts it."""
    lines = []
    for v in problem.variables:
        lines.append(f"var {v.name};" if v.dim == 1 else f"var {v.name}[{v.dim}];")
    sense = "minimize" if problem.sense is ex.Sense.MINIMIZE else "maximize"
    lines.append(f"{sense} {_print_expr(problem.objective)[0]};")
    if problem.constraints:
        lines.append("subject to")
        for c in problem.constraints:
            lines.append(f"  {_print_expr(c.lhs)[0]} {c.relation.value} {_print_expr(c.rhs)[0]};")
    return "\n".join(lines) + "\n"
