"""Expression trees for right-hand sides: evaluation, forward-mode
differentiation, and interval enclosure.

Variables are indexed 0..n with index 0 reserved for t. Evaluation is
numpy-vectorized: `values` may be shaped (n+1,) for a single point or
(n+1, N) for a batch. Interval evaluation takes parallel lower/upper
arrays and returns a sound enclosure, widened by a relative epsilon
inflation instead of directed rounding.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, ExpressionSyntaxError, UnknownSymbolError

DEFAULT_INFLATION = 1e-12

_TWO_PI = 2.0 * math.pi


def _widen(lo, hi, eps):
    if eps == 0.0:
        return lo, hi
    m = np.maximum(np.abs(lo), np.abs(hi))
    return lo - eps * m, hi + eps * m


def _interval_mul(alo, ahi, blo, bhi):
    p1 = alo * blo
    p2 = alo * bhi
    p3 = ahi * blo
    p4 = ahi * bhi
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    return lo, hi


def _contains_crit(lo, hi, offset):
    # True where some offset + 2*pi*k lies in [lo, hi]
    return np.floor((hi - offset) / _TWO_PI) >= np.ceil((lo - offset) / _TWO_PI)


class Expr:
    """Base expression node. Subclasses implement ev / iv / diff."""

    def ev(self, values):
        raise NotImplementedError

    def iv(self, lo, hi, eps):
        raise NotImplementedError

    def diff(self, k):
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self}>"


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = float(value)

    def ev(self, values):
        return self.value

    def iv(self, lo, hi, eps):
        return self.value, self.value

    def diff(self, k):
        return Const(0.0)

    def __str__(self):
        return repr(self.value)


class Var(Expr):
    __slots__ = ("index",)

    def __init__(self, index):
        self.index = index

    def ev(self, values):
        return values[self.index]

    def iv(self, lo, hi, eps):
        return lo[self.index], hi[self.index]

    def diff(self, k):
        return Const(1.0 if k == self.index else 0.0)

    def __str__(self):
        return "t" if self.index == 0 else f"x{self.index}"


class Add(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def ev(self, values):
        return self.a.ev(values) + self.b.ev(values)

    def iv(self, lo, hi, eps):
        alo, ahi = self.a.iv(lo, hi, eps)
        blo, bhi = self.b.iv(lo, hi, eps)
        return _widen(alo + blo, ahi + bhi, eps)

    def diff(self, k):
        return add(self.a.diff(k), self.b.diff(k))

    def __str__(self):
        return f"({self.a} + {self.b})"


class Sub(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def ev(self, values):
        return self.a.ev(values) - self.b.ev(values)

    def iv(self, lo, hi, eps):
        alo, ahi = self.a.iv(lo, hi, eps)
        blo, bhi = self.b.iv(lo, hi, eps)
        return _widen(alo - bhi, ahi - blo, eps)

    def diff(self, k):
        return sub(self.a.diff(k), self.b.diff(k))

    def __str__(self):
        return f"({self.a} - {self.b})"


class Mul(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def ev(self, values):
        return self.a.ev(values) * self.b.ev(values)

    def iv(self, lo, hi, eps):
        alo, ahi = self.a.iv(lo, hi, eps)
        blo, bhi = self.b.iv(lo, hi, eps)
        return _widen(*_interval_mul(alo, ahi, blo, bhi), eps)

    def diff(self, k):
        return add(mul(self.a.diff(k), self.b), mul(self.a, self.b.diff(k)))

    def __str__(self):
        return f"({self.a} * {self.b})"


class Div(Expr):
    __slots__ = ("a", "b")

    def __init__(self, a, b):
        self.a, self.b = a, b

    def ev(self, values):
        return self.a.ev(values) / self.b.ev(values)

    def iv(self, lo, hi, eps):
        alo, ahi = self.a.iv(lo, hi, eps)
        blo, bhi = self.b.iv(lo, hi, eps)
        if np.any((blo <= 0.0) & (bhi >= 0.0)):
            raise DomainError("interval division through zero")
        rlo, rhi = 1.0 / bhi, 1.0 / blo
        return _widen(*_interval_mul(alo, ahi, rlo, rhi), eps)

    def diff(self, k):
        num = sub(mul(self.a.diff(k), self.b), mul(self.a, self.b.diff(k)))
        return div(num, mul(self.b, self.b))

    def __str__(self):
        return f"({self.a} / {self.b})"


class Neg(Expr):
    __slots__ = ("a",)

    def __init__(self, a):
        self.a = a

    def ev(self, values):
        return -self.a.ev(values)

    def iv(self, lo, hi, eps):
        alo, ahi = self.a.iv(lo, hi, eps)
        return -ahi, -alo

    def diff(self, k):
        return neg(self.a.diff(k))

    def __str__(self):
        return f"(-{self.a})"


class Pow(Expr):
    """Integer power; negative exponents go through the reciprocal."""

    __slots__ = ("a", "p")

    def __init__(self, a, p):
        self.a, self.p = a, int(p)

    def ev(self, values):
        return self.a.ev(values) ** self.p

    def iv(self, lo, hi, eps):
        p = self.p
        if p < 0:
            inner = Pow(self.a, -p)
            ilo, ihi = inner.iv(lo, hi, eps)
            if np.any((ilo <= 0.0) & (ihi >= 0.0)):
                raise DomainError("interval reciprocal through zero")
            return _widen(1.0 / ihi, 1.0 / ilo, eps)
        alo, ahi = self.a.iv(lo, hi, eps)
        plo, phi = alo**p, ahi**p
        if p % 2 == 0 and p > 0:
            crosses = (alo <= 0.0) & (ahi >= 0.0)
            lo_out = np.where(crosses, 0.0, np.minimum(plo, phi))
            hi_out = np.maximum(plo, phi)
            return _widen(lo_out, hi_out, eps)
        return _widen(plo, phi, eps)

    def diff(self, k):
        if self.p == 0:
            return Const(0.0)
        return mul(mul(Const(self.p), ipow(self.a, self.p - 1)), self.a.diff(k))

    def __str__(self):
        return f"({self.a} ^ {self.p})"


class Fun(Expr):
    """Whitelisted unary function: sin, cos, exp."""

    __slots__ = ("name", "a")

    _EV = {"sin": np.sin, "cos": np.cos, "exp": np.exp}

    def __init__(self, name, a):
        self.name, self.a = name, a

    def ev(self, values):
        return self._EV[self.name](self.a.ev(values))

    def iv(self, lo, hi, eps):
        alo, ahi = self.a.iv(lo, hi, eps)
        if self.name == "exp":
            return _widen(np.exp(alo), np.exp(ahi), eps)
        if self.name == "sin":
            va, vb = np.sin(alo), np.sin(ahi)
            hi_out = np.where(_contains_crit(alo, ahi, 0.5 * math.pi), 1.0,
                              np.maximum(va, vb))
            lo_out = np.where(_contains_crit(alo, ahi, -0.5 * math.pi), -1.0,
                              np.minimum(va, vb))
        else:
            va, vb = np.cos(alo), np.cos(ahi)
            hi_out = np.where(_contains_crit(alo, ahi, 0.0), 1.0,
                              np.maximum(va, vb))
            lo_out = np.where(_contains_crit(alo, ahi, math.pi), -1.0,
                              np.minimum(va, vb))
        lo_out, hi_out = _widen(lo_out, hi_out, eps)
        return np.maximum(lo_out, -1.0), np.minimum(hi_out, 1.0)

    def diff(self, k):
        inner = self.a.diff(k)
        if self.name == "sin":
            return mul(call("cos", self.a), inner)
        if self.name == "cos":
            return neg(mul(call("sin", self.a), inner))
        return mul(self, inner)

    def __str__(self):
        return f"{self.name}({self.a})"


# Smart constructors with constant folding, so derivative trees stay small.

def _is_const(e, v=None):
    return isinstance(e, Const) and (v is None or e.value == v)


def add(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if _is_const(a) and _is_const(b):
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return Mul(a, b)


def div(a, b):
    if _is_const(b) and b.value != 0.0:
        if _is_const(a):
            return Const(a.value / b.value)
        if b.value == 1.0:
            return a
    if _is_const(a, 0.0):
        return Const(0.0)
    return Div(a, b)


def neg(a):
    if _is_const(a):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def ipow(a, p):
    p = int(p)
    if p == 0:
        return Const(1.0)
    if p == 1:
        return a
    if _is_const(a):
        return Const(a.value**p)
    return Pow(a, p)


def call(name, a):
    if _is_const(a):
        return Const(float(Fun._EV[name](a.value)))
    return Fun(name, a)


FUNCTIONS = ("sin", "cos", "exp")

_CONSTANTS = {"pi": math.pi, "e": math.e}


class _Tokenizer:
    def __init__(self, text, base):
        self.text = text
        self.base = base  # global offset for error positions
        self.pos = 0
        self.tokens = []
        self._scan()
        self.i = 0

    def _scan(self):
        text = self.text
        i = 0
        while i < len(text):
            ch = text[i]
            if ch.isspace():
                i += 1
                continue
            start = i
            if ch.isdigit() or (ch == "." and i + 1 < len(text) and text[i + 1].isdigit()):
                j = i
                while j < len(text) and (text[j].isdigit() or text[j] == "."):
                    j += 1
                if j < len(text) and text[j] in "eE":
                    k = j + 1
                    if k < len(text) and text[k] in "+-":
                        k += 1
                    if k < len(text) and text[k].isdigit():
                        j = k
                        while j < len(text) and text[j].isdigit():
                            j += 1
                self.tokens.append(("num", text[i:j], self.base + start))
                i = j
            elif ch.isalpha() or ch == "_":
                j = i
                while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                self.tokens.append(("name", text[i:j], self.base + start))
                i = j
            elif text.startswith("**", i):
                self.tokens.append(("op", "^", self.base + start))
                i += 2
            elif ch in "+-*/^()":
                self.tokens.append(("op", ch, self.base + start))
                i += 1
            else:
                raise ExpressionSyntaxError(f"unexpected character {ch!r}", self.base + start)
        self.tokens.append(("end", "", self.base + len(text)))

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok


class ExpressionParser:
    """Recursive-descent parser over the closed function whitelist.

    Grammar:
        expr   := term (('+'|'-') term)*
        term   := unary (('*'|'/') unary)*
        unary  := ('+'|'-') unary | power
        power  := atom ('^' unary)?        -- exponent must be an integer literal
        atom   := number | 't' | 'x<k>' | const | fun '(' expr ')' | '(' expr ')'
    """

    def __init__(self, n_vars):
        self.n = n_vars

    def parse(self, text, base_offset=0):
        tz = _Tokenizer(text, base_offset)
        expr = self._expr(tz)
        kind, val, pos = tz.peek()
        if kind != "end":
            raise ExpressionSyntaxError(f"unexpected token {val!r}", pos)
        return expr

    def _expr(self, tz):
        node = self._term(tz)
        while True:
            kind, val, _ = tz.peek()
            if kind == "op" and val in "+-":
                tz.next()
                rhs = self._term(tz)
                node = add(node, rhs) if val == "+" else sub(node, rhs)
            else:
                return node

    def _term(self, tz):
        node = self._unary(tz)
        while True:
            kind, val, _ = tz.peek()
            if kind == "op" and val in "*/":
                tz.next()
                rhs = self._unary(tz)
                node = mul(node, rhs) if val == "*" else div(node, rhs)
            else:
                return node

    def _unary(self, tz):
        kind, val, _ = tz.peek()
        if kind == "op" and val in "+-":
            tz.next()
            inner = self._unary(tz)
            return inner if val == "+" else neg(inner)
        return self._power(tz)

    def _power(self, tz):
        base = self._atom(tz)
        kind, val, pos = tz.peek()
        if kind == "op" and val == "^":
            tz.next()
            exp = self._unary(tz)
            if not isinstance(exp, Const) or exp.value != int(exp.value):
                raise ExpressionSyntaxError("exponent must be an integer literal", pos)
            return ipow(base, int(exp.value))
        return base

    def _atom(self, tz):
        kind, val, pos = tz.next()
        if kind == "num":
            try:
                return Const(float(val))
            except ValueError:
                raise ExpressionSyntaxError(f"bad number {val!r}", pos) from None
        if kind == "name":
            if val == "t":
                return Var(0)
            if val in _CONSTANTS:
                return Const(_CONSTANTS[val])
            if val in FUNCTIONS:
                k2, v2, p2 = tz.next()
                if k2 != "op" or v2 != "(":
                    raise ExpressionSyntaxError(f"expected '(' after {val}", p2)
                arg = self._expr(tz)
                k3, v3, p3 = tz.next()
                if k3 != "op" or v3 != ")":
                    raise ExpressionSyntaxError("expected ')'", p3)
                return call(val, arg)
            if val.startswith("x") and val[1:].isdigit():
                idx = int(val[1:])
                if not 1 <= idx <= self.n:
                    raise UnknownSymbolError(
                        f"variable {val} out of range for dimension {self.n}")
                return Var(idx)
            raise UnknownSymbolError(f"unknown symbol {val!r}")
        if kind == "op" and val == "(":
            node = self._expr(tz)
            k2, v2, p2 = tz.next()
            if k2 != "op" or v2 != ")":
                raise ExpressionSyntaxError("expected ')'", p2)
            return node
        if kind == "end":
            raise ExpressionSyntaxError("unexpected end of expression", pos)
        raise ExpressionSyntaxError(f"unexpected token {val!r}", pos)


def interval_bound_abs(expr, lo, hi, eps=DEFAULT_INFLATION):
    """Upper bound of |expr| over the box [lo, hi] (arrays broadcast)."""
    blo, bhi = expr.iv(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float), eps)
    return np.maximum(np.abs(blo), np.abs(bhi))
