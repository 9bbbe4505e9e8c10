"""Expression trees for smooth Hamiltonians.

The node set is deliberately small: constants, variables, sums, products,
non-negative integer powers, negation and the unary functions ``sin``,
``cos`` and ``exp``.  Differentiation is closed over it.  The smart
constructors :func:`add`, :func:`mul`, :func:`power` and :func:`neg` do
constant folding and zero/one elimination and nothing more; two trees that
are mathematically equal need not be structurally equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

FUNCTIONS = ("sin", "cos", "exp")

_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


class Expr:
    """Base class of all nodes.  Instances are immutable and hashable."""

    __slots__ = ()

    def diff(self, var: str) -> "Expr":
        raise NotImplementedError

    def evaluate(self, env: Mapping[str, float]) -> float:
        raise NotImplementedError

    def variables(self) -> frozenset[str]:
        raise NotImplementedError

    def _code(self, index: Mapping[str, int]) -> str:
        raise NotImplementedError

    precedence = _PREC_ATOM

    def __str__(self) -> str:
        return to_source(self)

    # operator sugar, handy in tests and in the Legendre construction
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return add(self, neg(as_expr(other)))

    def __rsub__(self, other):
        return add(as_expr(other), neg(self))

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, k: int):
        return power(self, k)


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: float

    precedence = _PREC_ATOM

    def diff(self, var):
        return ZERO

    def evaluate(self, env):
        return self.value

    def variables(self):
        return frozenset()

    def _code(self, index):
        return f"({self.value!r})"


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str

    precedence = _PREC_ATOM

    def diff(self, var):
        return ONE if var == self.name else ZERO

    def evaluate(self, env):
        return env[self.name]

    def variables(self):
        return frozenset((self.name,))

    def _code(self, index):
        return f"v[{index[self.name]}]"


@dataclass(frozen=True, slots=True)
class Add(Expr):
    terms: tuple[Expr, ...]

    precedence = _PREC_ADD

    def diff(self, var):
        return add(*(t.diff(var) for t in self.terms))

    def evaluate(self, env):
        return math.fsum(t.evaluate(env) for t in self.terms)

    def variables(self):
        return frozenset().union(*(t.variables() for t in self.terms))

    def _code(self, index):
        return "(" + " + ".join(t._code(index) for t in self.terms) + ")"


@dataclass(frozen=True, slots=True)
class Mul(Expr):
    factors: tuple[Expr, ...]

    precedence = _PREC_MUL

    def diff(self, var):
        parts = []
        for i, f in enumerate(self.factors):
            df = f.diff(var)
            if df == ZERO:
                continue
            parts.append(mul(*self.factors[:i], df, *self.factors[i + 1:]))
        return add(*parts)

    def evaluate(self, env):
        out = 1.0
        for f in self.factors:
            out *= f.evaluate(env)
        return out

    def variables(self):
        return frozenset().union(*(f.variables() for f in self.factors))

    def _code(self, index):
        return "(" + " * ".join(f._code(index) for f in self.factors) + ")"


@dataclass(frozen=True, slots=True)
class Pow(Expr):
    base: Expr
    exponent: int

    precedence = _PREC_POW

    def diff(self, var):
        db = self.base.diff(var)
        if db == ZERO:
            return ZERO
        return mul(Const(float(self.exponent)), power(self.base, self.exponent - 1), db)

    def evaluate(self, env):
        return self.base.evaluate(env) ** self.exponent

    def variables(self):
        return self.base.variables()

    def _code(self, index):
        return f"({self.base._code(index)} ** {self.exponent})"


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr

    precedence = _PREC_NEG

    def diff(self, var):
        return neg(self.arg.diff(var))

    def evaluate(self, env):
        return -self.arg.evaluate(env)

    def variables(self):
        return self.arg.variables()

    def _code(self, index):
        return f"(-{self.arg._code(index)})"


@dataclass(frozen=True, slots=True)
class Func(Expr):
    name: str
    arg: Expr

    precedence = _PREC_ATOM

    def __post_init__(self):
        if self.name not in FUNCTIONS:
            raise ValueError(f"unsupported function {self.name!r}")

    def diff(self, var):
        du = self.arg.diff(var)
        if du == ZERO:
            return ZERO
        if self.name == "sin":
            outer = Func("cos", self.arg)
        elif self.name == "cos":
            outer = neg(Func("sin", self.arg))
        else:
            outer = self
        return mul(outer, du)

    def evaluate(self, env):
        return getattr(math, self.name)(self.arg.evaluate(env))

    def variables(self):
        return self.arg.variables()

    def _code(self, index):
        return f"_{self.name}({self.arg._code(index)})"


ZERO = Const(0.0)
ONE = Const(1.0)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float)):
        return Const(float(x))
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def var(name: str) -> Var:
    return Var(name)


def add(*terms: Expr) -> Expr:
    flat: list[Expr] = []
    c = 0.0
    for t in terms:
        items = t.terms if isinstance(t, Add) else (t,)
        for s in items:
            if isinstance(s, Const):
                c += s.value
            else:
                flat.append(s)
    if c != 0.0:
        flat.append(Const(c))
    if not flat:
        return ZERO
    if len(flat) == 1:
        return flat[0]
    return Add(tuple(flat))


def mul(*factors: Expr) -> Expr:
    flat: list[Expr] = []
    c = 1.0
    for f in factors:
        items = f.factors if isinstance(f, Mul) else (f,)
        for g in items:
            if isinstance(g, Neg):
                c = -c
                g = g.arg
                if isinstance(g, Mul):
                    # re-flatten the negated product
                    for h in g.factors:
                        if isinstance(h, Const):
                            c *= h.value
                        else:
                            flat.append(h)
                    continue
            if isinstance(g, Const):
                c *= g.value
            else:
                flat.append(g)
    if c == 0.0:
        return ZERO
    if not flat:
        return Const(c)
    body = flat[0] if len(flat) == 1 else Mul(tuple(flat))
    if c == 1.0:
        return body
    if c == -1.0:
        return Neg(body)
    if isinstance(body, Mul):
        return Mul((Const(c),) + body.factors)
    return Mul((Const(c), body))


def power(base: Expr, k: int) -> Expr:
    if not isinstance(k, int) or isinstance(k, bool) or k < 0:
        raise ValueError(f"exponent must be a non-negative integer, got {k!r}")
    if k == 0:
        return ONE
    if k == 1:
        return base
    if isinstance(base, Const):
        return Const(base.value ** k)
    if isinstance(base, Pow):
        return Pow(base.base, base.exponent * k)
    return Pow(base, k)


def neg(e: Expr) -> Expr:
    if isinstance(e, Const):
        return Const(-e.value) if e.value != 0.0 else ZERO
    if isinstance(e, Neg):
        return e.arg
    if isinstance(e, Mul) and isinstance(e.factors[0], Const):
        return mul(Const(-e.factors[0].value), *e.factors[1:])
    return Neg(e)


def func(name: str, arg: Expr) -> Expr:
    if isinstance(arg, Const):
        return Const(getattr(math, name)(arg.value))
    return Func(name, arg)


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions, rebuilding through the simplifiers."""
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Add):
        return add(*(substitute(t, mapping) for t in e.terms))
    if isinstance(e, Mul):
        return mul(*(substitute(f, mapping) for f in e.factors))
    if isinstance(e, Pow):
        return power(substitute(e.base, mapping), e.exponent)
    if isinstance(e, Neg):
        return neg(substitute(e.arg, mapping))
    if isinstance(e, Func):
        return func(e.name, substitute(e.arg, mapping))
    raise TypeError(type(e))


def is_polynomial(e: Expr) -> bool:
    if isinstance(e, Func):
        return False
    if isinstance(e, Add):
        return all(is_polynomial(t) for t in e.terms)
    if isinstance(e, Mul):
        return all(is_polynomial(f) for f in e.factors)
    if isinstance(e, (Pow,)):
        return is_polynomial(e.base)
    if isinstance(e, Neg):
        return is_polynomial(e.arg)
    return True


# -- printing ---------------------------------------------------------------

def _fmt_number(x: float) -> str:
    if math.isfinite(x) and x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def to_source(e: Expr) -> str:
    """Print in the input grammar; ``parse(to_source(e))`` evaluates like ``e``."""
    return _src(e)


def _wrap(e: Expr, min_prec: int) -> str:
    s = _src(e)
    prec = e.precedence
    if isinstance(e, Const) and e.value < 0:
        prec = _PREC_NEG
    return f"({s})" if prec < min_prec else s


def _src(e: Expr) -> str:
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Add):
        out = _wrap(e.terms[0], _PREC_ADD)
        for t in e.terms[1:]:
            if isinstance(t, Neg):
                out += " - " + _wrap(t.arg, _PREC_MUL)
            elif isinstance(t, Const) and t.value < 0:
                out += " - " + _fmt_number(-t.value)
            elif isinstance(t, Mul) and isinstance(t.factors[0], Const) and t.factors[0].value < 0:
                out += " - " + _src(neg(t))
            else:
                out += " + " + _wrap(t, _PREC_MUL)
        return out
    if isinstance(e, Mul):
        return "*".join(_wrap(f, _PREC_POW) for f in e.factors)
    if isinstance(e, Pow):
        return f"{_wrap(e.base, _PREC_ATOM)}^{e.exponent}"
    if isinstance(e, Neg):
        return "-" + _wrap(e.arg, _PREC_MUL)
    if isinstance(e, Func):
        return f"{e.name}({_src(e.arg)})"
    raise TypeError(type(e))


# -- compilation ------------------------------------------------------------

_NAMESPACE = {"_sin": math.sin, "_cos": math.cos, "_exp": math.exp}


def compile_exprs(exprs: Sequence[Expr], names: Sequence[str]) -> Callable[[Sequence[float]], tuple]:
    """Compile expressions to one Python function of a flat value vector.

    ``names`` fixes the position of each variable in the argument.  The
    returned function maps a sequence of floats to a tuple of floats, one
    per expression.  Generated code only ever indexes the argument; no
    identifiers from user input reach ``eval``.
    """
    index = {name: i for i, name in enumerate(names)}
    missing = set().union(*(e.variables() for e in exprs)) - index.keys() if exprs else set()
    if missing:
        raise KeyError(f"variables not in layout: {sorted(missing)}")
    body = ", ".join(e._code(index) for e in exprs)
    src = f"lambda v: ({body}{',' if len(exprs) == 1 else ''})"
    return eval(compile(src, "<contactdyn-expr>", "eval"), dict(_NAMESPACE))


def collect_variables(exprs: Iterable[Expr]) -> frozenset[str]:
    return frozenset().union(*(e.variables() for e in exprs))
