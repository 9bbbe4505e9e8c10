"""Recursive-descent parser for the Hamiltonian expression language.

Grammar (ASCII only, whitespace ignored)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := ("-" | "+") unary | power
    power   := atom ("^" unary)?
    atom    := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

``^`` is right associative and binds tighter than unary minus, so
``-q1^2`` is ``-(q1^2)``.  Exponents must evaluate to non-negative
integers.  Division is accepted only by a nonzero constant.  There is no
implicit multiplication.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from . import expr as ex
from .errors import ExponentError, ExpressionSyntaxError, UnknownIdentifierError

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def tokenize(source: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        ch = source[pos]
        if ord(ch) > 127:
            raise ExpressionSyntaxError(f"non-ASCII character {ch!r}", _byte_offset(source, pos))
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {ch!r}", _byte_offset(source, pos))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(Token("end", "", len(source)))
    return tokens


def _byte_offset(source: str, pos: int) -> int:
    return len(source[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, source: str, names: Iterable[str]):
        self.source = source
        self.names = frozenset(names)
        self.tokens = tokenize(source)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def error(self, msg: str, tok: Token | None = None) -> ExpressionSyntaxError:
        tok = tok or self.tok
        return ExpressionSyntaxError(msg, _byte_offset(self.source, tok.offset))

    def accept(self, text: str) -> Token | None:
        if self.tok.kind == "op" and self.tok.text == text:
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return t

    def parse(self) -> ex.Expr:
        if self.tok.kind == "end":
            raise self.error("empty expression")
        e = self.expr()
        if self.tok.kind != "end":
            raise self.error(f"unexpected {self.tok.text!r}")
        return e

    def expr(self) -> ex.Expr:
        terms = [self.term()]
        while True:
            if self.accept("+"):
                terms.append(self.term())
            elif self.accept("-"):
                terms.append(ex.neg(self.term()))
            else:
                return ex.add(*terms)

    def term(self) -> ex.Expr:
        factors = [self.unary()]
        while True:
            if self.accept("*"):
                factors.append(self.unary())
            elif (slash := self.accept("/")) is not None:
                d = self.unary()
                if not isinstance(d, ex.Const):
                    raise self.error("division is only supported by constants", slash)
                if d.value == 0.0:
                    raise self.error("division by zero", slash)
                factors.append(ex.Const(1.0 / d.value))
            else:
                return ex.mul(*factors)

    def unary(self) -> ex.Expr:
        if self.accept("-"):
            return ex.neg(self.unary())
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> ex.Expr:
        base = self.atom()
        caret = self.accept("^")
        if caret is None:
            return base
        start = self.tok
        k = self.unary()
        if not isinstance(k, ex.Const) or k.value < 0 or k.value != int(k.value):
            text = self.source[start.offset:self.tok.offset].strip()
            raise ExponentError(
                f"exponent must be a non-negative integer, got {text!r}",
                _byte_offset(self.source, start.offset),
            )
        return ex.power(base, int(k.value))

    def atom(self) -> ex.Expr:
        tok = self.tok
        if tok.kind == "number":
            self.i += 1
            return ex.Const(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if self.accept("("):
                if tok.text not in ex.FUNCTIONS:
                    raise UnknownIdentifierError(
                        f"unknown function {tok.text!r}", _byte_offset(self.source, tok.offset), tok.text
                    )
                arg = self.expr()
                self.expect(")")
                return ex.func(tok.text, arg)
            if tok.text not in self.names:
                raise UnknownIdentifierError(
                    f"unknown identifier {tok.text!r}", _byte_offset(self.source, tok.offset), tok.text
                )
            return ex.Var(tok.text)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        found = tok.text or "end of input"
        raise self.error(f"unexpected {found!r}")


def parse_expr(source: str, names: Iterable[str]) -> ex.Expr:
    """Parse ``source`` allowing only identifiers in ``names``."""
    return _Parser(source, names).parse()
