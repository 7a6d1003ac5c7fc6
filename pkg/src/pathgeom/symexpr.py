"""Symbolic expression core.

Expressions are immutable, hash-consed DAG nodes.  Construction applies a
cheap local normal form (flattening, constant folding, collection of like
terms and like powers) so that large derivative computations stay small.
Full rational normal form is available through :func:`simplify`.
"""

from __future__ import annotations

import math
import re
import zlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

NUM, SYM, ADD, MUL, POW, FN = range(6)
FUNCTIONS = ("sqrt", "exp", "log", "sin", "cos")
DEFAULT_RANGE = ((-2.0, -0.1), (0.1, 2.0))


class ExprError(Exception):
    """Base class for expression errors."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnboundSymbolError(ExprError):
    pass


class DomainError(ExprError, ArithmeticError):
    pass


_table: dict = {}


def _digest(kind: int, value, args: tuple) -> int:
    if kind == SYM or kind == FN:
        vh = zlib.crc32(value.encode())
    elif kind == NUM:
        vh = hash((type(value) is float, value))
    else:
        vh = 0
    return hash((kind, vh) + tuple(a._key for a in args))


class Expr:
    """Interned expression node.  Build with the module constructors."""

    __slots__ = ("kind", "value", "args", "_key", "_free", "_funcs", "__weakref__")

    def __init__(self, kind, value, args, key):
        self.kind = kind
        self.value = value
        self.args = args
        self._key = key
        self._free = None
        self._funcs = {}

    def __hash__(self):
        return self._key

    def __eq__(self, other):
        return self is other

    def __ne__(self, other):
        return self is not other

    def __reduce__(self):
        return (parse, (render(self),))

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(-1, other))

    def __rsub__(self, other):
        return add(other, mul(-1, self))

    def __neg__(self):
        return mul(-1, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return mul(self, power(other, -1))

    def __rtruediv__(self, other):
        return mul(other, power(self, -1))

    def __pow__(self, other):
        return power(self, other)

    def __rpow__(self, other):
        return power(other, self)

    def __repr__(self):
        return f"Expr({render(self)!r})"

    def __str__(self):
        return render(self)

    @property
    def free_symbols(self) -> frozenset:
        if self._free is None:
            for node in _topo([self]):
                if node._free is None:
                    if node.kind == SYM:
                        node._free = frozenset((node.value,))
                    elif node.kind == NUM:
                        node._free = frozenset()
                    else:
                        node._free = frozenset().union(*(a._free for a in node.args))
        return self._free

    @property
    def is_number(self) -> bool:
        return self.kind == NUM

    @property
    def is_zero(self) -> bool:
        return self.kind == NUM and self.value == 0


def _intern(kind, value, args=()):
    tkey = (kind, type(value).__name__, value, args)
    node = _table.get(tkey)
    if node is None:
        node = Expr(kind, value, args, _digest(kind, value, args))
        _table[tkey] = node
    return node


def num(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, bool):
        value = int(value)
    if isinstance(value, int):
        value = Fraction(value)
    elif isinstance(value, float):
        if value.is_integer() and abs(value) < 2**53:
            value = Fraction(int(value))
    elif isinstance(value, Fraction):
        pass
    else:
        raise TypeError(f"cannot convert {type(value).__name__} to Expr")
    return _intern(NUM, value)


def sym(name: str) -> Expr:
    if not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", name):
        raise ValueError(f"invalid symbol name {name!r}")
    if name in FUNCTIONS:
        raise ValueError(f"{name!r} is reserved")
    return _intern(SYM, name)


def symbols(names: str | Iterable[str]) -> tuple:
    if isinstance(names, str):
        names = names.replace(",", " ").split()
    return tuple(sym(n) for n in names)


ZERO = num(0)
ONE = num(1)
HALF = num(Fraction(1, 2))


def _coerce(x) -> Expr:
    return x if isinstance(x, Expr) else num(x)


def _split_coeff(term: Expr):
    if term.kind == NUM:
        return term.value, ONE
    if term.kind == MUL and term.args[0].kind == NUM:
        rest = term.args[1:]
        return term.args[0].value, rest[0] if len(rest) == 1 else _intern(MUL, None, rest)
    return Fraction(1), term


def _order(nodes):
    return tuple(sorted(nodes, key=lambda e: (e.kind != NUM, e._key)))


def add(*terms) -> Expr:
    flat = []
    for t in terms:
        t = _coerce(t)
        if t.kind == ADD:
            flat.extend(t.args)
        else:
            flat.append(t)
    const = Fraction(0)
    coeffs: dict = {}
    order = []
    for t in flat:
        c, rest = _split_coeff(t)
        if rest is ONE:
            const = const + c
            continue
        if rest in coeffs:
            coeffs[rest] = coeffs[rest] + c
        else:
            coeffs[rest] = c
            order.append(rest)
    out = []
    for rest in order:
        c = coeffs[rest]
        if c == 0:
            continue
        out.append(rest if c == 1 else mul(c, rest))
    if const != 0:
        out.append(num(const))
    if not out:
        return ZERO
    if len(out) == 1:
        return out[0]
    return _intern(ADD, None, _order(out))


def _base_exp(f: Expr):
    if f.kind == POW:
        return f.args[0], f.args[1]
    return f, ONE


def mul(*factors) -> Expr:
    flat = []
    for f in factors:
        f = _coerce(f)
        if f.kind == MUL:
            flat.extend(f.args)
        else:
            flat.append(f)
    const = Fraction(1)
    groups: dict = {}
    order = []
    for f in flat:
        if f.kind == NUM:
            const = const * f.value
            continue
        b, e = _base_exp(f)
        if b in groups:
            groups[b].append(e)
        else:
            groups[b] = [e]
            order.append(b)
    if const == 0:
        return ZERO
    out = []
    for b in order:
        exps = groups[b]
        numeric = all(e.kind == NUM for e in exps)
        same_sign = numeric and (all(e.value > 0 for e in exps) or all(e.value < 0 for e in exps))
        if len(exps) > 1 and same_sign:
            p = power(b, num(sum(e.value for e in exps)))
            if p.kind == NUM:
                const = const * p.value
            elif p.kind == MUL:
                for g in p.args:
                    if g.kind == NUM:
                        const = const * g.value
                    else:
                        out.append(g)
            else:
                out.append(p)
        else:
            # mixed signs are kept apart so that cancellation stays visible
            # to simplify() and its side conditions
            for e in exps:
                out.append(power(b, e))
    if const == 0:
        return ZERO
    out = [f for f in out if f is not ONE]
    if not out:
        return num(const)
    if const == 1 and len(out) == 1:
        return out[0]
    body = _order(out)
    if const != 1:
        body = (num(const),) + body
    return _intern(MUL, None, body)


def _exact_root(x: Fraction, q: int):
    if x < 0:
        if q % 2 == 0:
            return None
        r = _exact_root(-x, q)
        return None if r is None else -r
    n, d = x.numerator, x.denominator
    rn = round(n ** (1.0 / q)) if n else 0
    rd = round(d ** (1.0 / q))
    for a in (rn - 1, rn, rn + 1):
        if a >= 0 and a**q == n:
            for b in (rd - 1, rd, rd + 1):
                if b > 0 and b**q == d:
                    return Fraction(a, b)
    return None


def power(base, exp) -> Expr:
    base = _coerce(base)
    exp = _coerce(exp)
    if exp.kind == NUM:
        e = exp.value
        if e == 0:
            return ONE
        if e == 1:
            return base
        if base.kind == NUM:
            b = base.value
            if b == 1:
                return ONE
            if isinstance(b, float) or isinstance(e, float):
                if b < 0 and not float(e).is_integer():
                    return _intern(POW, None, (base, exp))
                if b == 0 and e < 0:
                    return _intern(POW, None, (base, exp))
                return num(float(b) ** float(e))
            if b == 0:
                return ZERO if e > 0 else _intern(POW, None, (base, exp))
            if e.denominator == 1:
                return num(b ** e.numerator)
            r = _exact_root(b, e.denominator)
            if r is not None:
                return num(r ** e.numerator)
            return _intern(POW, None, (base, exp))
        if base.kind == POW and e.denominator == 1 and not isinstance(e, float):
            inner = base.args[1]
            return power(base.args[0], mul(inner, exp))
        if base.kind == MUL and e.denominator == 1 and not isinstance(e, float):
            return mul(*(power(f, exp) for f in base.args))
    if base is ONE:
        return ONE
    return _intern(POW, None, (base, exp))


def fn(name: str, arg) -> Expr:
    arg = _coerce(arg)
    if name == "sqrt":
        return power(arg, HALF)
    if name not in FUNCTIONS:
        raise ExprError(f"unknown function {name!r}")
    if arg.kind == NUM and arg.value == 0:
        if name == "exp" or name == "cos":
            return ONE
        if name == "sin":
            return ZERO
    if name == "log" and arg is ONE:
        return ZERO
    return _intern(FN, name, (arg,))


def sqrt(x) -> Expr:
    return fn("sqrt", x)


def exp(x) -> Expr:
    return fn("exp", x)


def log(x) -> Expr:
    return fn("log", x)


def sin(x) -> Expr:
    return fn("sin", x)


def cos(x) -> Expr:
    return fn("cos", x)


def _topo(roots: Sequence[Expr]) -> list:
    """Children-first ordering of every node reachable from roots."""
    seen = set()
    out = []
    stack = [(r, False) for r in reversed(list(roots))]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            out.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for a in reversed(node.args):
            if id(a) not in seen:
                stack.append((a, False))
    return out


def count_nodes(e: Expr) -> int:
    return len(_topo([e]))


# ---------------------------------------------------------------- parsing

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*|\.\d+|\d+)|([A-Za-z][A-Za-z0-9_]*)|(\S))")


def _tokenize(text: str):
    pos = 0
    toks = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        start = m.start(m.lastindex)
        if m.group(1) is not None:
            toks.append(("num", m.group(1), start))
        elif m.group(2) is not None:
            toks.append(("id", m.group(2), start))
        else:
            if m.group(3) not in "+-*/^()":
                raise ParseError(f"unexpected character {m.group(3)!r}", start)
            toks.append(("op", m.group(3), start))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind
            raise ParseError(f"expected {want!r}, found {tok[1] or 'end of input'!r}", tok[2])
        self.i += 1
        return tok

    def expr(self):
        node = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            node = add(node, rhs) if op == "+" else add(node, mul(-1, rhs))
        return node

    def term(self):
        node = self.factor()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.factor()
            node = mul(node, rhs) if op == "*" else mul(node, power(rhs, -1))
        return node

    def factor(self):
        node = self.base()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            node = power(node, self.factor())
        return node

    def base(self):
        kind, val, pos = self.peek()
        if kind == "num":
            self.take()
            return num(Fraction(val))
        if kind == "id":
            self.take()
            if self.peek()[:2] == ("op", "("):
                if val not in FUNCTIONS:
                    raise ParseError(f"unknown function {val!r}", pos)
                self.take()
                arg = self.expr()
                self.take("op", ")")
                return fn(val, arg)
            if val in FUNCTIONS:
                raise ParseError(f"function {val!r} needs an argument", pos)
            return sym(val)
        if (kind, val) == ("op", "("):
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        if (kind, val) == ("op", "-"):
            self.take()
            return mul(-1, self.base())
        raise ParseError(f"unexpected {val or 'end of input'!r}", pos)


def parse(text: str) -> Expr:
    """Parse infix text (``+ - * / ^``, parentheses, sqrt/exp/log/sin/cos)."""
    p = _Parser(text)
    node = p.expr()
    tok = p.peek()
    if tok[0] != "end":
        raise ParseError(f"unexpected {tok[1]!r}", tok[2])
    return node


# -------------------------------------------------------------- rendering

_PREC_ADD, _PREC_MUL, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4


def _fmt_num(v) -> str:
    if isinstance(v, float):
        if math.isinf(v) or math.isnan(v):
            raise ExprError("non-finite literal")
        s = np.format_float_positional(v, unique=True, trim="-")
        return s if "." in s or not s.lstrip("-").isdigit() else s
    if v.denominator == 1:
        return str(v.numerator)
    return f"{v.numerator}/{v.denominator}"


def _num_prec(v) -> int:
    if v < 0:
        return _PREC_ADD
    if isinstance(v, Fraction) and v.denominator != 1:
        return _PREC_MUL
    return _PREC_ATOM


def _render(e: Expr, memo: dict) -> tuple:
    got = memo.get(e)
    if got is not None:
        return got
    k = e.kind
    if k == NUM:
        out = (_fmt_num(e.value), _num_prec(e.value))
    elif k == SYM:
        out = (e.value, _PREC_ATOM)
    elif k == FN:
        out = (f"{e.value}({_render(e.args[0], memo)[0]})", _PREC_ATOM)
    elif k == POW:
        b, x = e.args
        if x.kind == NUM and x.value == Fraction(1, 2):
            out = (f"sqrt({_render(b, memo)[0]})", _PREC_ATOM)
        else:
            bs, bp = _render(b, memo)
            xs, xp = _render(x, memo)
            if bp <= _PREC_POW:
                bs = f"({bs})"
            if xp < _PREC_POW or (x.kind == NUM and x.value < 0):
                xs = f"({xs})"
            out = (f"{bs}^{xs}", _PREC_POW)
    elif k == MUL:
        out = _render_mul(e, memo)
    else:
        parts = []
        for i, t in enumerate(e.args):
            c, rest = _split_coeff(t)
            if c < 0 and i == 0:
                parts.append(_render(t, memo)[0])
            elif c < 0:
                s = _render(mul(-c, rest) if rest is not ONE else num(-c), memo)
                body = s[0] if s[1] > _PREC_ADD else f"({s[0]})"
                parts.append(" - " + body)
            else:
                s = _render(t, memo)
                body = s[0] if s[1] > _PREC_ADD else f"({s[0]})"
                parts.append(body if i == 0 else " + " + body)
        out = ("".join(parts), _PREC_ADD)
    memo[e] = out
    return out


def _render_mul(e: Expr, memo: dict) -> tuple:
    coeff = Fraction(1)
    numer, denom = [], []
    for f in e.args:
        if f.kind == NUM:
            coeff = f.value
            continue
        b, x = _base_exp(f)
        if x.kind == NUM and x.value < 0:
            denom.append(power(b, num(-x.value)) if x.value != -1 else b)
        else:
            numer.append(f)

    def chunk(fs):
        out = []
        for f in fs:
            s, p = _render(f, memo)
            out.append(s if p > _PREC_MUL else f"({s})")
        return "*".join(out)

    neg = coeff < 0
    c = -coeff if neg else coeff
    head = []
    if c != 1 or not numer:
        head.append(_fmt_num(c))
    text = "*".join(head + ([chunk(numer)] if numer else []))
    if denom:
        d = chunk(denom)
        text = f"{text}/{d}" if len(denom) == 1 else f"{text}/({d})"
    if neg:
        first = numer[0] if numer and c == 1 else None
        if first is not None and first.kind == POW:
            text = f"-({text})"
        else:
            text = "-" + text
        return text, _PREC_ADD
    return text, _PREC_MUL


def render(e: Expr) -> str:
    """Infix text that parses back to a structurally equal expression."""
    return _render(e, {})[0]


# ---------------------------------------------------------- differentiation

_dcache: dict = {}


def differentiate(e: Expr, s) -> Expr:
    """Exact partial derivative de/ds, in construction normal form."""
    name = s.value if isinstance(s, Expr) else s
    key = (e, name)
    hit = _dcache.get(key)
    if hit is not None:
        return hit
    local: dict = {}
    for node in _topo([e]):
        if name not in node.free_symbols:
            local[node] = ZERO
            continue
        hit = _dcache.get((node, name))
        if hit is not None:
            local[node] = hit
            continue
        k = node.kind
        if k == SYM:
            d = ONE
        elif k == ADD:
            d = add(*(local[a] for a in node.args))
        elif k == MUL:
            terms = []
            args = node.args
            for i, a in enumerate(args):
                da = local[a]
                if da is ZERO:
                    continue
                terms.append(mul(*args[:i], da, *args[i + 1:]))
            d = add(*terms)
        elif k == POW:
            b, x = node.args
            db, dx = local[b], local[x]
            if dx is ZERO:
                d = mul(x, power(b, add(x, -1)), db)
            else:
                d = mul(node, add(mul(dx, fn("log", b)), mul(x, db, power(b, -1))))
        else:
            a = node.args[0]
            da = local[a]
            if node.value == "exp":
                d = mul(node, da)
            elif node.value == "log":
                d = mul(da, power(a, -1))
            elif node.value == "sin":
                d = mul(fn("cos", a), da)
            else:
                d = mul(-1, fn("sin", a), da)
        local[node] = d
        _dcache[(node, name)] = d
    return local[e]


def diff(e: Expr, *names) -> Expr:
    for n in names:
        e = differentiate(e, n)
    return e


# -------------------------------------------------------------- substitution

def substitute(e: Expr, mapping: Mapping) -> Expr:
    """Simultaneous substitution of symbols, then simplify."""
    return simplify(replace(e, mapping))


def replace(e: Expr, mapping: Mapping) -> Expr:
    """Simultaneous substitution without simplification."""
    m = {}
    for k, v in mapping.items():
        m[k.value if isinstance(k, Expr) else k] = _coerce(v)
    out: dict = {}
    for node in _topo([e]):
        k = node.kind
        if not (node.free_symbols & m.keys()):
            out[node] = node
        elif k == SYM:
            out[node] = m[node.value]
        elif k == ADD:
            out[node] = add(*(out[a] for a in node.args))
        elif k == MUL:
            out[node] = mul(*(out[a] for a in node.args))
        elif k == POW:
            out[node] = power(out[node.args[0]], out[node.args[1]])
        else:
            out[node] = fn(node.value, out[node.args[0]])
    return out[e]


# ---------------------------------------------------------------- evaluation

def _chk_inv(x):
    if x == 0:
        raise DomainError("division by zero")
    return 1.0 / x


def _ipow(x, n):
    if n < 0:
        if x == 0:
            raise DomainError("division by zero")
        return (1.0 / x) ** (-n) if isinstance(x, float) else x ** n
    return x ** n


def _rpow(x, r):
    if x < 0:
        raise DomainError("fractional power of a negative number")
    if x == 0 and r < 0:
        raise DomainError("division by zero")
    return x ** r


def _gpow(x, y):
    if x <= 0:
        raise DomainError("real power of a non-positive number")
    return x ** y


def _log(x):
    if x <= 0:
        raise DomainError("log of a non-positive number")
    return x.log() if hasattr(x, "log") else math.log(x)


def _exp(x):
    try:
        return x.exp() if hasattr(x, "exp") else math.exp(x)
    except OverflowError as err:
        raise DomainError("exp overflow") from err


def _sin(x):
    return x.sin() if hasattr(x, "sin") else math.sin(x)


def _cos(x):
    return x.cos() if hasattr(x, "cos") else math.cos(x)


_RUNTIME = {"_ipow": _ipow, "_rpow": _rpow, "_gpow": _gpow, "_inv": _chk_inv,
            "exp": _exp, "log": _log, "sin": _sin, "cos": _cos}


def compile_exprs(exprs: Sequence[Expr], names: Sequence[str]) -> Callable:
    """Compile expressions to one function f(*values) -> tuple of floats.

    Shared subexpressions are evaluated once.  Domain violations raise
    DomainError.  Inputs may also be Jet numbers for forward derivatives.
    """
    exprs = [_coerce(e) for e in exprs]
    index = {n: i for i, n in enumerate(names)}
    lines = []
    var: dict = {}
    for node in _topo(exprs):
        k = node.kind
        if k == NUM:
            var[node] = repr(float(node.value))
            continue
        if k == SYM:
            if node.value not in index:
                raise UnboundSymbolError(f"symbol {node.value!r} is not bound")
            var[node] = f"a{index[node.value]}"
            continue
        v = f"v{len(lines)}"
        if k == ADD:
            rhs = " + ".join(var[a] for a in node.args)
        elif k == MUL:
            rhs = " * ".join(var[a] for a in node.args)
        elif k == POW:
            b, x = node.args
            if x.kind == NUM:
                xv = x.value
                if xv == -1:
                    rhs = f"_inv({var[b]})"
                elif isinstance(xv, Fraction) and xv.denominator == 1:
                    rhs = f"_ipow({var[b]}, {xv.numerator})"
                else:
                    rhs = f"_rpow({var[b]}, {float(xv)!r})"
            else:
                rhs = f"_gpow({var[b]}, {var[x]})"
        else:
            rhs = f"{node.value}({var[node.args[0]]})"
        lines.append(f"    {v} = {rhs}")
        var[node] = v
    args = ", ".join(f"a{i}" for i in range(len(names)))
    ret = ", ".join(var[e] for e in exprs)
    src = f"def _f({args}):\n" + "\n".join(lines) + f"\n    return ({ret}{',' if len(exprs) == 1 else ''})\n"
    ns = dict(_RUNTIME)
    exec(compile(src, "<symexpr>", "exec"), ns)
    raw = ns["_f"]

    def wrapped(*vals):
        try:
            return raw(*vals)
        except ZeroDivisionError as err:
            raise DomainError("division by zero") from err
        except OverflowError as err:
            raise DomainError("overflow") from err

    return wrapped


def lambdify(e: Expr, names: Sequence[str]) -> Callable:
    key = tuple(names)
    f = e._funcs.get(key)
    if f is None:
        g = compile_exprs([e], names)
        f = e._funcs[key] = lambda *v: g(*v)[0]
    return f


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """IEEE double value of e at the given symbol values."""
    e = _coerce(e)
    missing = e.free_symbols - bindings.keys()
    if missing:
        raise UnboundSymbolError(f"unbound symbols: {sorted(missing)}")
    names = tuple(sorted(e.free_symbols))
    return float(lambdify(e, names)(*(float(bindings[n]) for n in names)))


# --------------------------------------------------------------- forward jets

class Jet:
    """First-order forward-mode number a + b*eps with eps^2 = 0."""

    __slots__ = ("a", "b")

    def __init__(self, a, b=0.0):
        self.a = a
        self.b = b

    def __add__(self, o):
        if isinstance(o, Jet):
            return Jet(self.a + o.a, self.b + o.b)
        return Jet(self.a + o, self.b)

    __radd__ = __add__

    def __sub__(self, o):
        if isinstance(o, Jet):
            return Jet(self.a - o.a, self.b - o.b)
        return Jet(self.a - o, self.b)

    def __rsub__(self, o):
        return Jet(o - self.a, -self.b)

    def __neg__(self):
        return Jet(-self.a, -self.b)

    def __mul__(self, o):
        if isinstance(o, Jet):
            return Jet(self.a * o.a, self.a * o.b + self.b * o.a)
        return Jet(self.a * o, self.b * o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        if isinstance(o, Jet):
            if o.a == 0:
                raise DomainError("division by zero")
            return Jet(self.a / o.a, (self.b * o.a - self.a * o.b) / (o.a * o.a))
        return Jet(self.a / o, self.b / o)

    def __rtruediv__(self, o):
        if self.a == 0:
            raise DomainError("division by zero")
        return Jet(o / self.a, -o * self.b / (self.a * self.a))

    def __pow__(self, r):
        if isinstance(r, Jet):
            return (self.log() * r).exp()
        if self.a == 0 and r < 1:
            raise DomainError("non-smooth power at zero")
        return Jet(self.a ** r, r * self.a ** (r - 1) * self.b)

    def __rpow__(self, o):
        return (self * math.log(o)).exp()

    def exp(self):
        v = math.exp(self.a)
        return Jet(v, v * self.b)

    def log(self):
        return Jet(math.log(self.a), self.b / self.a)

    def sin(self):
        return Jet(math.sin(self.a), math.cos(self.a) * self.b)

    def cos(self):
        return Jet(math.cos(self.a), -math.sin(self.a) * self.b)

    def _cmp(self, o):
        return o.a if isinstance(o, Jet) else o

    def __lt__(self, o):
        return self.a < self._cmp(o)

    def __le__(self, o):
        return self.a <= self._cmp(o)

    def __gt__(self, o):
        return self.a > self._cmp(o)

    def __ge__(self, o):
        return self.a >= self._cmp(o)

    def __eq__(self, o):
        return self.a == self._cmp(o)

    __hash__ = None

    def __repr__(self):
        return f"Jet({self.a!r}, {self.b!r})"


# ------------------------------------------------------------ simplification

def denominators(e: Expr) -> frozenset:
    """Bases raised to negative powers anywhere in e (the excluded locus)."""
    out = set()
    for node in _topo([e]):
        if node.kind == POW:
            x = node.args[1]
            if x.kind == NUM and x.value < 0:
                out.add(node.args[0])
    return frozenset(out)


def to_sympy(e: Expr):
    import sympy

    memo: dict = {}
    for node in _topo([e]):
        k = node.kind
        if k == NUM:
            v = node.value
            memo[node] = sympy.Float(v) if isinstance(v, float) else sympy.Rational(v.numerator, v.denominator)
        elif k == SYM:
            memo[node] = sympy.Symbol(node.value)
        elif k == ADD:
            memo[node] = sympy.Add(*(memo[a] for a in node.args))
        elif k == MUL:
            memo[node] = sympy.Mul(*(memo[a] for a in node.args))
        elif k == POW:
            memo[node] = sympy.Pow(memo[node.args[0]], memo[node.args[1]])
        else:
            memo[node] = getattr(sympy, node.value)(memo[node.args[0]])
    return memo[e]


def from_sympy(s) -> Expr:
    import sympy

    memo: dict = {}

    def conv(x):
        if x in memo:
            return memo[x]
        if x.is_Integer:
            r = num(int(x))
        elif x.is_Rational:
            r = num(Fraction(int(x.p), int(x.q)))
        elif x.is_Float:
            r = num(float(x))
        elif x.is_Symbol:
            r = sym(x.name)
        elif x.is_Add:
            r = add(*(conv(a) for a in x.args))
        elif x.is_Mul:
            r = mul(*(conv(a) for a in x.args))
        elif x.is_Pow:
            r = power(conv(x.args[0]), conv(x.args[1]))
        elif isinstance(x, sympy.exp):
            r = fn("exp", conv(x.args[0]))
        elif isinstance(x, (sympy.log, sympy.sin, sympy.cos)):
            r = fn(type(x).__name__, conv(x.args[0]))
        elif x is sympy.E:
            r = fn("exp", ONE)
        else:
            raise ExprError(f"cannot convert {x!r}")
        memo[x] = r
        return r

    return conv(s)


_scache: dict = {}


def simplify(e: Expr) -> Expr:
    """Rational normal form with transcendental and radical atoms opaque."""
    return simplify_conditions(e)[0]


def simplify_conditions(e: Expr) -> tuple:
    """simplify(e) together with the denominators assumed non-zero."""
    e = _coerce(e)
    hit = _scache.get(e)
    if hit is None:
        if e.kind in (NUM, SYM):
            hit = e
        else:
            import sympy

            s = sympy.cancel(sympy.together(to_sympy(e)))
            hit = from_sympy(s)
        _scache[e] = hit
    return hit, denominators(e)


# --------------------------------------------------------------- sampling

@dataclass(frozen=True)
class SampleRanges:
    """Per-symbol sampling intervals; symbols not listed use the default."""

    default: tuple = DEFAULT_RANGE
    overrides: tuple = ()

    def intervals(self, name: str):
        for k, v in self.overrides:
            if k == name:
                return v
        return self.default


def draw(rng: np.random.Generator, names: Sequence[str], ranges: SampleRanges | None = None) -> dict:
    ranges = ranges or SampleRanges()
    out = {}
    for n in names:
        ivs = ranges.intervals(n)
        lo, hi = ivs[rng.integers(len(ivs))]
        out[n] = float(rng.uniform(lo, hi))
    return out


def sample_points(exprs: Sequence[Expr], count: int, seed: int = 0, *,
                  names: Sequence[str] | None = None, ranges: SampleRanges | None = None,
                  min_denominator: float = 1e-6, max_tries: int | None = None) -> list:
    """Random points where every expression evaluates and no denominator is small."""
    exprs = [_coerce(e) for e in exprs]
    if names is None:
        names = sorted(frozenset().union(*(e.free_symbols for e in exprs)))
    names = tuple(names)
    dens = sorted(frozenset().union(*(denominators(e) for e in exprs)), key=lambda d: d._key)
    f = compile_exprs(list(exprs) + dens, names)
    nd = len(dens)
    rng = np.random.default_rng(seed)
    pts = []
    tries = max_tries if max_tries is not None else 50 * count + 50
    for _ in range(tries):
        if len(pts) >= count:
            break
        pt = draw(rng, names, ranges)
        try:
            vals = f(*(pt[n] for n in names))
        except DomainError:
            continue
        if nd and min(abs(v) for v in vals[len(vals) - nd:]) < min_denominator:
            continue
        if not all(math.isfinite(v) for v in vals):
            continue
        pts.append(pt)
    return pts


def equivalent(e1, e2, samples: int = 20, tol: float = 1e-9, seed: int = 0,
               ranges: SampleRanges | None = None):
    """Probabilistic equality: True, False, or None when no sample was valid."""
    e1, e2 = _coerce(e1), _coerce(e2)
    names = tuple(sorted(e1.free_symbols | e2.free_symbols))
    pts = sample_points([e1, e2], samples, seed, names=names, ranges=ranges)
    if not pts:
        return None
    f = compile_exprs([e1, e2], names)
    for pt in pts:
        a, b = f(*(pt[n] for n in names))
        if abs(a - b) > tol * (1 + abs(a)):
            return False
    return True
