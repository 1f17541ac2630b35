"""Map expressions: parsing, canonical formatting and overflow-safe compilation.

Grammar (loosest to tightest)::

    sum     := product (('+' | '-') product)*
    product := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' exponent)?
    exponent:= ['-' | '+'] INT | '(' exponent ')'
    primary := NUMBER | 'i' | 'z' | 'exp' '(' sum ')' | '(' sum ')'

Numbers are decimals with an optional exponent and an optional trailing ``i``.
Exponents must be integer literals with ``|k| <= 64``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .sphere import INF, PunctureSet, SpherePoint, sphere_point

OMEGA = 1e300
EXP_CAP = 690.0
LOG_OMEGA_EVAL = math.log(OMEGA)
MAX_EXPONENT = 64

OK, OVERFLOW, UNDERFLOW = 0, 1, 2


# --------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Lit:
    value: complex


@dataclass(frozen=True)
class Add:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sub:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Mul:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Div:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    k: int


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Exp:
    arg: "Expr"


Expr = Union[Var, Lit, Add, Sub, Mul, Div, Pow, Neg, Exp]


# ------------------------------------------------------------------ parsing


class ParseError(ValueError):
    def __init__(self, message: str, offset: int, expected=()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f" (expected one of: {', '.join(sorted(self.expected))})" if self.expected else ""
        super().__init__(f"{message} at byte {offset}{detail}")


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?i?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)

_IDENTS = {"z", "exp", "i"}
_PRIMARY_START = ("number", "z", "i", "exp", "(")


@dataclass
class _Tok:
    kind: str  # num, ident, op, end
    text: str
    offset: int


def _tokenize(text: str) -> list:
    toks = []
    pos = 0
    raw = text
    while pos < len(raw):
        m = _TOKEN_RE.match(raw, pos)
        byte_off = len(raw[:pos].encode("utf-8"))
        if m is None:
            raise ParseError(f"unexpected character {raw[pos]!r}", byte_off, _PRIMARY_START)
        kind = m.lastgroup
        if kind == "ident" and m.group() not in _IDENTS:
            raise ParseError(f"unknown identifier {m.group()!r}", byte_off, ("z", "exp", "i"))
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), byte_off))
        pos = m.end()
    toks.append(_Tok("end", "", len(raw.encode("utf-8"))))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text or t.kind not in ("op", "ident"):
            raise ParseError(f"unexpected {t.text or 'end of input'!r}", t.offset, (text,))
        return self.take()

    def parse(self) -> Expr:
        e = self.sum()
        t = self.peek()
        if t.kind != "end":
            raise ParseError(f"unexpected {t.text!r}", t.offset, ("+", "-", "*", "/", "^", "end of input"))
        return e

    def sum(self) -> Expr:
        e = self.product()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            rhs = self.product()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def product(self) -> Expr:
        e = self.unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            rhs = self.unary()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def unary(self) -> Expr:
        t = self.peek()
        if t.kind == "op" and t.text == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        t = self.peek()
        if t.kind == "op" and t.text == "^":
            self.take()
            return Pow(base, self.exponent())
        return base

    def exponent(self) -> int:
        t = self.peek()
        if t.kind == "op" and t.text == "(":
            self.take()
            k = self.exponent()
            self.expect(")")
            return k
        sign = 1
        if t.kind == "op" and t.text in "+-":
            sign = -1 if t.text == "-" else 1
            self.take()
            t = self.peek()
        if t.kind != "num" or not t.text.isdigit():
            raise ParseError(
                f"exponent must be an integer literal, got {t.text or 'end of input'!r}",
                t.offset,
                ("integer",),
            )
        self.take()
        k = sign * int(t.text)
        if abs(k) > MAX_EXPONENT:
            raise ParseError(f"exponent {k} exceeds |k| <= {MAX_EXPONENT}", t.offset, ("integer",))
        nxt = self.peek()
        if nxt.kind == "op" and nxt.text == "^":
            raise ParseError("exponent must be an integer literal", nxt.offset, (")", "*", "/", "+", "-"))
        return k

    def primary(self) -> Expr:
        t = self.peek()
        if t.kind == "num":
            self.take()
            if t.text.endswith("i"):
                return Lit(complex(0.0, float(t.text[:-1])))
            return Lit(complex(float(t.text), 0.0))
        if t.kind == "ident":
            self.take()
            if t.text == "z":
                return Var()
            if t.text == "i":
                return Lit(1j)
            self.expect("(")
            arg = self.sum()
            self.expect(")")
            return Exp(arg)
        if t.kind == "op" and t.text == "(":
            self.take()
            e = self.sum()
            self.expect(")")
            return e
        raise ParseError(f"unexpected {t.text or 'end of input'!r}", t.offset, _PRIMARY_START)


def parse(text: str) -> Expr:
    return _Parser(text).parse()


# --------------------------------------------------------------- formatting

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _fmt_real(x: float) -> str:
    if not math.isfinite(x) or x < 0:
        raise ValueError(f"literal component {x!r} cannot be written")
    if x == int(x) and x < 1e16:
        return str(int(x))
    return repr(x)


def _fmt_lit(c: complex) -> str:
    if c.imag == 0.0 and not math.copysign(1.0, c.imag) < 0:
        return _fmt_real(c.real)
    if c.real == 0.0 and not math.copysign(1.0, c.real) < 0:
        return "i" if c.imag == 1.0 else _fmt_real(c.imag) + "i"
    raise ValueError(f"literal {c!r} is not purely real or purely imaginary")


def _prec(e: Expr) -> int:
    return _PREC.get(type(e), 5)


def format_expr(e: Expr) -> str:
    """Canonical text; ``parse(format_expr(e)) == e``."""
    if isinstance(e, Var):
        return "z"
    if isinstance(e, Lit):
        return _fmt_lit(e.value)
    if isinstance(e, Exp):
        return f"exp({format_expr(e.arg)})"
    if isinstance(e, Pow):
        base = format_expr(e.base)
        # a literal like "1.5e-05" would re-lex fine, but "2i" etc. are atoms anyway
        if _prec(e.base) <= 4:
            base = f"({base})"
        return f"{base}^{e.k}"
    if isinstance(e, Neg):
        inner = format_expr(e.operand)
        if _prec(e.operand) < 3:
            inner = f"({inner})"
        return "-" + inner
    op = {Add: " + ", Sub: " - ", Mul: "*", Div: "/"}[type(e)]
    p = _prec(e)
    left = format_expr(e.left)
    if _prec(e.left) < p:
        left = f"({left})"
    right = format_expr(e.right)
    if _prec(e.right) <= p:
        right = f"({right})"
    return left + op + right


# ---------------------------------------------------------- log-modulus form


@dataclass(frozen=True)
class ReOf:
    """``Re(u)`` with ``u`` evaluated in doubles."""

    expr: Expr


@dataclass(frozen=True)
class LogModOf:
    """``log|u|`` for a leaf ``u`` (the variable or a literal)."""

    expr: Expr


@dataclass(frozen=True)
class LSum:
    left: "LogAbs"
    right: "LogAbs"


@dataclass(frozen=True)
class LDiff:
    left: "LogAbs"
    right: "LogAbs"


@dataclass(frozen=True)
class LScale:
    k: int
    operand: "LogAbs"


LogAbs = Union[ReOf, LogModOf, LSum, LDiff, LScale]


def derive_log_abs(e: Expr) -> Optional[LogAbs]:
    """Symbolic ``log|e|`` that never forms ``e`` itself, or None if not covered."""
    if isinstance(e, Exp):
        return ReOf(e.arg)
    if isinstance(e, (Var, Lit)):
        if isinstance(e, Lit) and e.value == 0:
            return None
        return LogModOf(e)
    if isinstance(e, Neg):
        return derive_log_abs(e.operand)
    if isinstance(e, Pow):
        inner = derive_log_abs(e.base)
        return None if inner is None else LScale(e.k, inner)
    if isinstance(e, (Mul, Div)):
        a, b = derive_log_abs(e.left), derive_log_abs(e.right)
        if a is None or b is None:
            return None
        return LSum(a, b) if isinstance(e, Mul) else LDiff(a, b)
    return None


def format_log_abs(t: LogAbs) -> str:
    if isinstance(t, ReOf):
        return f"Re({format_expr(t.expr)})"
    if isinstance(t, LogModOf):
        return f"log|{format_expr(t.expr)}|"
    if isinstance(t, LScale):
        return f"{t.k}*{format_log_abs(t.operand)}"
    if isinstance(t, LSum):
        return f"{format_log_abs(t.left)} + {format_log_abs(t.right)}"
    return f"{format_log_abs(t.left)} - ({format_log_abs(t.right)})"


# ---------------------------------------------------------------- evaluation


def _ovf_mask(v: np.ndarray) -> np.ndarray:
    a = np.abs(v)
    return ~(a <= OMEGA)  # catches inf and nan too


def _build(e: Expr):
    """Closure evaluating ``e`` on a complex array: returns (values, overflow, underflow)."""
    if isinstance(e, Var):
        def run(z):
            return z, _ovf_mask(z), np.zeros(z.shape, dtype=bool)
        return run
    if isinstance(e, Lit):
        c = complex(e.value)

        def run(z):
            n = z.shape
            return np.full(n, c), np.zeros(n, dtype=bool), np.zeros(n, dtype=bool)
        return run
    if isinstance(e, Neg):
        f = _build(e.operand)

        def run(z):
            v, o, u = f(z)
            return -v, o, u
        return run
    if isinstance(e, Exp):
        f = _build(e.arg)

        def run(z):
            v, o, u = f(z)
            re_, im_ = v.real, v.imag
            big = re_ > EXP_CAP
            small = re_ < -EXP_CAP
            mag = np.exp(np.clip(re_, -EXP_CAP, EXP_CAP))
            out = np.empty(v.shape, dtype=complex)
            out.real = mag * np.cos(im_)
            out.imag = mag * np.sin(im_)
            out[small] = 0.0
            o = o | big | ~np.isfinite(re_) | ~np.isfinite(im_)
            return out, o, u | small
        return run
    if isinstance(e, Pow):
        f = _build(e.base)
        k = e.k

        def run(z):
            v, o, u = f(z)
            if k < 0:
                zero = v == 0
                o = o | zero
                v = 1.0 / np.where(zero, 1.0, v)
            n = abs(k)
            acc = np.ones(v.shape, dtype=complex)
            sq = v
            while n:
                if n & 1:
                    acc = acc * sq
                n >>= 1
                if n:
                    sq = sq * sq
            return acc, o | _ovf_mask(acc), u
        return run
    fl, fr = _build(e.left), _build(e.right)
    if isinstance(e, Add):
        def run(z):
            a, oa, ua = fl(z)
            b, ob, ub = fr(z)
            v = a + b
            return v, oa | ob | _ovf_mask(v), ua | ub
        return run
    if isinstance(e, Sub):
        def run(z):
            a, oa, ua = fl(z)
            b, ob, ub = fr(z)
            v = a - b
            return v, oa | ob | _ovf_mask(v), ua | ub
        return run
    if isinstance(e, Mul):
        def run(z):
            a, oa, ua = fl(z)
            b, ob, ub = fr(z)
            v = a * b
            return v, oa | ob | _ovf_mask(v), ua | ub
        return run
    if isinstance(e, Div):
        def run(z):
            a, oa, ua = fl(z)
            b, ob, ub = fr(z)
            zero = b == 0
            v = a / np.where(zero, 1.0, b)
            return v, oa | ob | zero | _ovf_mask(v), ua | ub
        return run
    raise TypeError(f"not an expression node: {e!r}")


def _build_real(e: Expr):
    """Real part of ``e`` that survives an overflowed ``exp`` term.

    ``Re exp(u) = exp(Re u) cos(Im u)`` keeps a definite sign, so it becomes
    ``+-inf`` beyond the double range.  NaN marks a real part that is unknown.
    """
    if isinstance(e, Exp):
        f = _build(e.arg)

        def run(z):
            v, o, _ = f(z)
            c = np.cos(v.imag)
            log_mag = v.real + np.log(np.abs(c))
            mag = np.where(log_mag > LOG_OMEGA_EVAL, np.inf, np.exp(np.minimum(log_mag, LOG_OMEGA_EVAL)))
            return np.where(o, np.nan, np.sign(c) * mag)
        return run
    if isinstance(e, Neg):
        f = _build_real(e.operand)
        return lambda z: -f(z)
    if isinstance(e, (Add, Sub)):
        fl, fr = _build_real(e.left), _build_real(e.right)
        if isinstance(e, Add):
            return lambda z: fl(z) + fr(z)
        return lambda z: fl(z) - fr(z)
    f = _build(e)

    def run(z):
        v, o, _ = f(z)
        return np.where(o, np.nan, v.real)
    return run


def _build_log_abs(t: LogAbs):
    if isinstance(t, ReOf):
        f = _build(t.expr)
        slow = _build_real(t.expr)

        def run(z):
            v, o, _ = f(z)
            out = np.where(o, np.nan, v.real)
            if o.any():
                out[o] = slow(z[o])
            return out
        return run
    if isinstance(t, LogModOf):
        if isinstance(t.expr, Var):
            return lambda z: np.log(np.abs(z))
        c = math.log(abs(t.expr.value))
        return lambda z: np.full(z.shape, c)
    if isinstance(t, LScale):
        f, k = _build_log_abs(t.operand), float(t.k)
        return lambda z: k * f(z)
    fl, fr = _build_log_abs(t.left), _build_log_abs(t.right)
    if isinstance(t, LSum):
        return lambda z: fl(z) + fr(z)
    return lambda z: fl(z) - fr(z)


# ------------------------------------------------- log-polar evaluation
# Points beyond the double range are carried as ``w = log z`` (complex).


def _build_log_value(e: Expr):
    """``w -> log e(exp(w))`` as a complex array; NaN where not representable."""
    if isinstance(e, Var):
        return lambda w: w
    if isinstance(e, Lit):
        c = complex(e.value)
        lc = complex(-np.inf, 0.0) if c == 0 else complex(np.log(c))
        return lambda w: np.full(w.shape, lc)
    if isinstance(e, Neg):
        f = _build_log_value(e.operand)
        return lambda w: f(w) + 1j * math.pi
    if isinstance(e, Pow):
        f, k = _build_log_value(e.base), e.k
        return lambda w: k * f(w)
    if isinstance(e, Exp):
        return _build_value_from_log(e.arg)
    fl, fr = _build_log_value(e.left), _build_log_value(e.right)
    if isinstance(e, Mul):
        return lambda w: fl(w) + fr(w)
    if isinstance(e, Div):
        return lambda w: fl(w) - fr(w)
    vl, vr = _build_value_from_log(e.left), _build_value_from_log(e.right)
    sign = 1.0 if isinstance(e, Add) else -1.0
    return lambda w: np.log(vl(w) + sign * vr(w))


def _build_value_from_log(e: Expr):
    f = _build_log_value(e)

    def run(w):
        lv = f(w)
        out = np.exp(np.where(lv.real > LOG_OMEGA_EVAL, np.nan, lv))
        return np.where(np.isnan(lv.real), np.nan, out)
    return run


def _real_from_polar(lv: np.ndarray) -> np.ndarray:
    """``Re exp(lv)`` with ``+-inf`` beyond the double range."""
    c = np.cos(lv.imag)
    log_mag = lv.real + np.log(np.abs(c))
    mag = np.where(log_mag > LOG_OMEGA_EVAL, np.inf, np.exp(np.minimum(log_mag, LOG_OMEGA_EVAL)))
    return np.where(np.isnan(lv.real), np.nan, np.sign(c) * mag)


def _build_real_from_log(e: Expr):
    """``w -> Re e(exp(w))``, NaN where unknown."""
    if isinstance(e, Neg):
        f = _build_real_from_log(e.operand)
        return lambda w: -f(w)
    if isinstance(e, (Add, Sub)):
        fl, fr = _build_real_from_log(e.left), _build_real_from_log(e.right)
        if isinstance(e, Add):
            return lambda w: fl(w) + fr(w)
        return lambda w: fl(w) - fr(w)
    f = _build_log_value(e)
    return lambda w: _real_from_polar(f(w))


def _build_log_abs_from_log(t: LogAbs):
    """The log-modulus form evaluated at ``exp(w)``."""
    if isinstance(t, ReOf):
        return _build_real_from_log(t.expr)
    if isinstance(t, LogModOf):
        if isinstance(t.expr, Var):
            return lambda w: w.real
        c = math.log(abs(t.expr.value))
        return lambda w: np.full(w.shape, c)
    if isinstance(t, LScale):
        f, k = _build_log_abs_from_log(t.operand), float(t.k)
        return lambda w: k * f(w)
    fl, fr = _build_log_abs_from_log(t.left), _build_log_abs_from_log(t.right)
    if isinstance(t, LSum):
        return lambda w: fl(w) + fr(w)
    return lambda w: fl(w) - fr(w)


def _as_array(z) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(z, dtype=complex))


@dataclass
class EvalResult:
    values: np.ndarray
    status: np.ndarray
    log_abs: np.ndarray  # NaN where unknown or without a log-modulus form
    lost: np.ndarray  # overflow whose value is undetermined


class CompiledMap:
    """A compiled self-map of the punctured plane.

    ``evaluate_array`` returns values together with a status code per element:
    ``OK``, ``OVERFLOW`` (the value is infinity) or ``UNDERFLOW`` (an ``exp``
    underflowed to exact zero somewhere; the value is still returned).
    """

    def __init__(self, expr: Expr, punctures: PunctureSet, power: int = 1):
        if power < 1:
            raise ValueError("power must be at least 1")
        self.expr = expr
        self.punctures = punctures
        self.power = power
        self.text = format_expr(expr)
        self.log_abs_form = derive_log_abs(expr)
        self._eval = _build(expr)
        self._log_abs = None if self.log_abs_form is None else _build_log_abs(self.log_abs_form)
        self._finite_punctures = np.array(punctures.finite, dtype=complex)
        self._log_value = _build_log_value(expr)
        self._log_abs_polar = None if self.log_abs_form is None else _build_log_abs_from_log(self.log_abs_form)

    def __repr__(self) -> str:
        suffix = f", power={self.power}" if self.power > 1 else ""
        return f"CompiledMap({self.text!r}{suffix})"

    @property
    def has_log_abs(self) -> bool:
        return self._log_abs is not None

    def compose(self, p: int) -> "CompiledMap":
        return CompiledMap(self.expr, self.punctures, self.power * p)

    # -- single application ------------------------------------------------
    def _apply_once(self, z: np.ndarray):
        with np.errstate(all="ignore"):
            v, o, u = self._eval(z)
            if self._log_abs is not None and o.any():
                # an overflowed intermediate can still leave a tiny final value
                idx = np.flatnonzero(o)
                tiny = idx[self._log_abs(z[idx]) < -EXP_CAP]
                v, o, u = v.copy(), o.copy(), u.copy()
                v[tiny], o[tiny], u[tiny] = 0.0, False, True
        status = np.where(o, OVERFLOW, np.where(u, UNDERFLOW, OK)).astype(np.int8)
        v = np.where(o, complex(np.inf, 0.0), v)
        return v, status

    def _at_puncture(self, v: np.ndarray) -> np.ndarray:
        hit = np.zeros(v.shape, dtype=bool)
        for y in self._finite_punctures:
            hit |= v == y
        return hit

    def _run(self, z: np.ndarray, steps: int) -> EvalResult:
        n = z.shape[0]
        v = z.copy()
        status = np.full(n, OK, dtype=np.int8)
        la = np.full(n, np.nan)
        lost = np.zeros(n, dtype=bool)
        last_in = np.full(n, complex(np.nan, np.nan))
        live = np.ones(n, dtype=bool)
        symbolic = self._log_abs is not None
        for i in range(1, steps + 1):
            idx = np.flatnonzero(live)
            if idx.size == 0:
                break
            prev = v[idx]
            if i == steps:
                last_in[idx] = prev
            nv, ns = self._apply_once(prev)
            carried = status[idx] == UNDERFLOW
            ns = np.where(carried & (ns == OK), UNDERFLOW, ns).astype(np.int8)
            stop = (ns == OVERFLOW) | ((ns == UNDERFLOW) & self._at_puncture(nv))
            over = np.flatnonzero(ns == OVERFLOW)
            if symbolic and over.size and i < steps:
                with np.errstate(all="ignore"):
                    definite = self._log_abs(prev[over]) > EXP_CAP
                lost[idx[over]] = ~definite
            v[idx] = nv
            status[idx] = ns
            live[idx[stop]] = False
        if symbolic:
            done = ~np.isnan(last_in.real)
            with np.errstate(all="ignore"):
                final = self._log_abs(np.where(done, last_in, 1.0))
            la = np.where(np.isnan(la) & done, final, la)
            over = status == OVERFLOW
            # an overflow is definite only when the log modulus is beyond range
            lost |= over & done & ~(final > EXP_CAP)
        return EvalResult(v, status, la, lost)

    # -- public evaluation -------------------------------------------------
    def evaluate_full(self, z, steps: Optional[int] = None) -> EvalResult:
        """Values, status, ``log|f^p(z)|`` and the undetermined-overflow mask.

        Overflow and exact puncture hits after an underflow are absorbing.  An
        overflow is definite when the log modulus of that application is beyond
        range; a definite overflow before the last application stays at
        infinity, with log modulus NaN.  Without a log-modulus form every
        overflow is taken at face value.
        """
        z = _as_array(z)
        return self._run(z, self.power if steps is None else steps)

    def evaluate_array(self, z, steps: Optional[int] = None) -> tuple:
        """Apply the map ``steps`` times (default ``power``): ``(values, status)``."""
        r = self.evaluate_full(z, steps)
        return r.values, r.status

    def log_abs_array(self, z) -> Optional[np.ndarray]:
        """``log|f^p(z)|`` without forming the final value; NaN where unknown."""
        if self._log_abs is None:
            return None
        return self.evaluate_full(z).log_abs

    def indeterminate_array(self, z) -> np.ndarray:
        """Elements whose overflow leaves the value unknown (see :meth:`evaluate_full`)."""
        return self.evaluate_full(z).lost

    def log_value_array(self, z) -> np.ndarray:
        """Complex ``log f^p(z)`` (imaginary part not reduced), NaN where unknown."""
        z = _as_array(z)
        bad = np.zeros(z.shape, dtype=bool)
        if self.power > 1:
            z, status = self.evaluate_array(z, self.power - 1)
            bad = status == OVERFLOW
        with np.errstate(all="ignore"):
            out = self._log_value(np.log(np.where(bad, 1.0, z)))
        return np.where(bad, complex(np.nan, np.nan), out)

    def log_abs_beyond(self, w) -> np.ndarray:
        """``log|f^p(exp(w))|`` for points carried in log-polar form.

        Only a single application is covered; NaN where unknown or for powers.
        """
        w = _as_array(w)
        if self._log_abs_polar is None or self.power > 1:
            return np.full(w.shape, np.nan)
        with np.errstate(all="ignore"):
            out = self._log_abs_polar(w)
        return np.where(np.isnan(w.real) | np.isnan(w.imag), np.nan, out)

    def evaluate(self, x: SpherePoint) -> tuple:
        """Scalar evaluation: ``(SpherePoint, underflow_flag)``."""
        if x is INF:
            return INF, False
        v, s = self.evaluate_array(np.array([complex(x)]))
        if s[0] == OVERFLOW:
            return INF, False
        return sphere_point(v[0]), bool(s[0] == UNDERFLOW)

    def __call__(self, x: SpherePoint) -> SpherePoint:
        return self.evaluate(x)[0]

    def log_abs(self, x: SpherePoint) -> Optional[float]:
        if self._log_abs is None or x is INF:
            return None
        return float(self.log_abs_array(np.array([complex(x)]))[0])


def compile_map(expr: Union[Expr, str], punctures: PunctureSet) -> CompiledMap:
    if isinstance(expr, str):
        expr = parse(expr)
    return CompiledMap(expr, punctures)


def compose_power(f: CompiledMap, p: int) -> CompiledMap:
    if p < 1:
        raise ValueError("p must be a positive integer")
    return f.compose(p)


# ---------------------------------------------------------- Radstrom family


@dataclass(frozen=True)
class RadstromSpec:
    """``z^k exp(g(z) + h(1/z))`` with polynomial ``g`` and ``h`` (ascending coefficients)."""

    k: int
    g_coeffs: tuple
    h_coeffs: tuple

    def __post_init__(self):
        for name in ("g_coeffs", "h_coeffs"):
            cs = getattr(self, name)
            try:
                if any(isinstance(c, (str, bytes)) for c in cs):
                    raise TypeError("string coefficient")
                cs = tuple(complex(c) for c in cs)
            except TypeError as exc:
                raise TypeError(f"{name} must be a sequence of numbers (polynomials only)") from exc
            object.__setattr__(self, name, cs)
        if _degree(self.g_coeffs) < 1 and _degree(self.h_coeffs) < 1:
            raise ValueError("g and h are both constant: the map has no essential singularity")
        if abs(self.k) > MAX_EXPONENT:
            raise ValueError(f"|k| must be at most {MAX_EXPONENT}")


def _degree(cs: Sequence[complex]) -> int:
    d = -1
    for i, c in enumerate(cs):
        if c != 0:
            d = i
    return d


def _coeff(c: complex) -> Expr:
    if c.imag == 0:
        lit = Lit(complex(abs(c.real), 0.0))
        return Neg(lit) if c.real < 0 else lit
    if c.real == 0:
        lit = Lit(complex(0.0, abs(c.imag)))
        return Neg(lit) if c.imag < 0 else lit
    re_part = _coeff(complex(c.real, 0.0))
    im_part = Lit(complex(0.0, abs(c.imag)))
    return Add(re_part, im_part) if c.imag > 0 else Sub(re_part, im_part)


def _horner(cs: Sequence[complex], var: Expr) -> Optional[Expr]:
    """Polynomial in ``var`` by Horner's scheme; None for the zero polynomial."""
    d = _degree(cs)
    if d < 0:
        return None
    acc = _coeff(cs[d])
    if d > 0:
        acc = var if cs[d] == 1 else Mul(acc, var)
    for i in range(d - 1, -1, -1):
        if cs[i] != 0:
            acc = Add(acc, _coeff(cs[i]))
        if i > 0:
            acc = Mul(acc, var)
    return acc


def radstrom(spec: RadstromSpec) -> Expr:
    g = _horner(spec.g_coeffs, Var())
    h = _horner(spec.h_coeffs, Div(Lit(1 + 0j), Var()))
    if g is None:
        arg = h
    elif h is None:
        arg = g
    else:
        arg = Add(g, h)
    body = Exp(arg)
    if spec.k == 0:
        return body
    zk = Var() if spec.k == 1 else Pow(Var(), spec.k)
    return Mul(zk, body)
