"""Exact scalar expressions on a fibered chart.

An expression is a finite sum of monomials with rational coefficients.  A
monomial is a product of variable powers and powers of ``sin``/``cos``/``exp``
applied to affine combinations of the chart variables.  The stored form is
canonical, so structural equality is mathematical equality inside the class
(no trigonometric identities are applied).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

__all__ = [
    "ChartSignature",
    "Expr",
    "ExprError",
    "ParseError",
    "UnknownVariableError",
    "SignatureMismatchError",
    "parse",
    "sample_equal",
]

Number = Union[int, Fraction]
FUNCTIONS = ("sin", "cos", "exp")


class ExprError(ValueError):
    """Base class for expression-kernel errors."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownVariableError(ExprError):
    def __init__(self, name: str):
        super().__init__(f"unknown variable {name!r}")
        self.name = name


class SignatureMismatchError(ExprError):
    pass


@dataclass(frozen=True)
class ChartSignature:
    """Variable names of a chart U x F, base variables first."""

    base_names: tuple[str, ...]
    fiber_names: tuple[str, ...]
    periodic: tuple[bool, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "base_names", tuple(self.base_names))
        object.__setattr__(self, "fiber_names", tuple(self.fiber_names))
        if not self.periodic:
            object.__setattr__(self, "periodic", (False,) * (self.n + self.m))
        else:
            object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        if self.n < 1 or self.m < 1:
            raise ValueError("a chart needs at least one base and one fiber variable")
        names = self.names
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        for name in names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name) or name in FUNCTIONS:
                raise ValueError(f"invalid variable name {name!r}")
        if len(self.periodic) != len(names):
            raise ValueError("periodic flags must cover every variable")

    @classmethod
    def standard(cls, n: int, m: int, periodic: Sequence[bool] = ()) -> "ChartSignature":
        """Chart with variables x1..xn, y1..ym."""
        return cls(
            tuple(f"x{i + 1}" for i in range(n)),
            tuple(f"y{j + 1}" for j in range(m)),
            tuple(periodic),
        )

    @property
    def n(self) -> int:
        return len(self.base_names)

    @property
    def m(self) -> int:
        return len(self.fiber_names)

    @property
    def names(self) -> tuple[str, ...]:
        return self.base_names + self.fiber_names

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownVariableError(name) from None

    def base_index(self, i: int) -> int:
        return i

    def fiber_index(self, j: int) -> int:
        return self.n + j


# A transcendental atom is (kind, coefficients, constant) where the argument is
# sum(coefficients[v] * var_v) + constant.  A monomial is (exponents, trans)
# with ``trans`` a sorted tuple of (atom, power) pairs.


def _normalize_atom(kind: str, coeffs: tuple, const: Fraction):
    """Return (sign, atom) or (value, None) for a constant-folded atom."""
    if not any(coeffs) and const == 0:
        return (0 if kind == "sin" else 1), None
    if kind in ("sin", "cos"):
        lead = next((c for c in coeffs if c), const)
        if lead < 0:
            coeffs = tuple(-c for c in coeffs)
            const = -const
            return (-1 if kind == "sin" else 1), (kind, coeffs, const)
    return 1, (kind, coeffs, const)


class Expr:
    """Immutable exact expression in canonical expanded form."""

    __slots__ = ("sig", "_terms", "_hash")

    def __init__(self, sig: ChartSignature, terms: Mapping | None = None):
        self.sig = sig
        self._terms = {k: v for k, v in (terms or {}).items() if v != 0}
        self._hash = None

    # construction -----------------------------------------------------

    @classmethod
    def _raw(cls, sig, terms: dict) -> "Expr":
        obj = cls.__new__(cls)
        obj.sig = sig
        obj._terms = terms
        obj._hash = None
        return obj

    @classmethod
    def const(cls, sig: ChartSignature, value: Number | str) -> "Expr":
        value = Fraction(value)
        if value == 0:
            return cls._raw(sig, {})
        return cls._raw(sig, {((0,) * len(sig.names), ()): value})

    @classmethod
    def var(cls, sig: ChartSignature, name: str | int) -> "Expr":
        idx = sig.index(name) if isinstance(name, str) else name
        exps = [0] * len(sig.names)
        exps[idx] = 1
        return cls._raw(sig, {(tuple(exps), ()): Fraction(1)})

    @classmethod
    def function(cls, sig: ChartSignature, kind: str, argument: "Expr") -> "Expr":
        """``kind(argument)`` for an affine ``argument``."""
        if kind not in FUNCTIONS:
            raise ExprError(f"unsupported function {kind!r}")
        affine = argument.as_affine()
        if affine is None:
            raise ExprError(f"argument of {kind} must be affine, got {argument}")
        coeffs, const = affine
        factor, atom = _normalize_atom(kind, coeffs, const)
        if atom is None:
            return cls.const(sig, factor)
        zero = (0,) * len(sig.names)
        return cls._raw(sig, {(zero, ((atom, 1),)): Fraction(factor)})

    def _coerce(self, other) -> "Expr":
        if isinstance(other, Expr):
            if other.sig is not self.sig and other.sig != self.sig:
                raise SignatureMismatchError("expressions live on different charts")
            return other
        if isinstance(other, (int, Fraction)):
            return Expr.const(self.sig, other)
        return NotImplemented

    # arithmetic -------------------------------------------------------

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if not other._terms:
            return self
        terms = dict(self._terms)
        for k, v in other._terms.items():
            s = terms.get(k, 0) + v
            if s:
                terms[k] = s
            else:
                terms.pop(k, None)
        return Expr._raw(self.sig, terms)

    __radd__ = __add__

    def __neg__(self):
        return Expr._raw(self.sig, {k: -v for k, v in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            if other == 0:
                return Expr._raw(self.sig, {})
            return Expr._raw(self.sig, {k: v * other for k, v in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms: dict = {}
        for (e1, t1), c1 in self._terms.items():
            for (e2, t2), c2 in other._terms.items():
                exps = tuple(a + b for a, b in zip(e1, e2))
                trans = _merge_trans(t1, t2) if (t1 and t2) else (t1 or t2)
                key = (exps, trans)
                s = terms.get(key, 0) + c1 * c2
                if s:
                    terms[key] = s
                else:
                    terms.pop(key, None)
        return Expr._raw(self.sig, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ExprError("only non-negative integer powers are supported")
        result = Expr.const(self.sig, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # comparison -------------------------------------------------------

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = Expr.const(self.sig, other)
        if not isinstance(other, Expr):
            return NotImplemented
        return self.sig == other.sig and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def equals(self, other: "Expr") -> bool:
        """Normal-form equality; raises on signature mismatch."""
        if self.sig != other.sig:
            raise SignatureMismatchError("expressions live on different charts")
        return self._terms == other._terms

    # inspection -------------------------------------------------------

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self):
        return bool(self._terms)

    def is_constant(self) -> bool:
        return all(not any(e) and not t for e, t in self._terms)

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ExprError(f"{self} is not constant")
        return next(iter(self._terms.values()), Fraction(0))

    def is_polynomial(self) -> bool:
        return all(not t for _, t in self._terms)

    def terms(self):
        """Iterate over ((exponents, transcendental factors), coefficient)."""
        return self._terms.items()

    def num_terms(self) -> int:
        return len(self._terms)

    def free_indices(self) -> frozenset[int]:
        out = set()
        for exps, trans in self._terms:
            out.update(i for i, e in enumerate(exps) if e)
            for (_, coeffs, _), _p in trans:
                out.update(i for i, c in enumerate(coeffs) if c)
        return frozenset(out)

    def depends_on(self, name: str | int) -> bool:
        idx = self.sig.index(name) if isinstance(name, str) else name
        return idx in self.free_indices()

    def as_affine(self):
        """(coefficients, constant) if the expression is affine, else None."""
        N = len(self.sig.names)
        coeffs = [Fraction(0)] * N
        const = Fraction(0)
        for (exps, trans), c in self._terms.items():
            if trans:
                return None
            total = sum(exps)
            if total == 0:
                const += c
            elif total == 1:
                coeffs[next(i for i, e in enumerate(exps) if e)] += c
            else:
                return None
        return tuple(coeffs), const

    # calculus ---------------------------------------------------------

    def diff(self, name: str | int) -> "Expr":
        """Exact partial derivative with respect to a chart variable."""
        idx = self.sig.index(name) if isinstance(name, str) else name
        if not 0 <= idx < len(self.sig.names):
            raise UnknownVariableError(str(name))
        terms: dict = {}

        def add(key, value):
            s = terms.get(key, 0) + value
            if s:
                terms[key] = s
            else:
                terms.pop(key, None)

        for (exps, trans), c in self._terms.items():
            e = exps[idx]
            if e:
                new = exps[:idx] + (e - 1,) + exps[idx + 1:]
                add((new, trans), c * e)
            for pos, (atom, p) in enumerate(trans):
                kind, coeffs, const = atom
                slope = coeffs[idx]
                if not slope:
                    continue
                rest = trans[:pos] + (((atom, p - 1),) if p > 1 else ()) + trans[pos + 1:]
                scale = c * p * slope
                if kind == "exp":
                    add((exps, _merge_trans(rest, ((atom, 1),))), scale)
                else:
                    other_kind = "cos" if kind == "sin" else "sin"
                    sign = 1 if kind == "sin" else -1
                    add((exps, _merge_trans(rest, (((other_kind, coeffs, const), 1),))), scale * sign)
        return Expr._raw(self.sig, terms)

    def subs(self, mapping: Mapping[str | int, "Expr"]) -> "Expr":
        """Substitute expressions for variables.

        Variables occurring inside transcendental arguments may only be
        replaced by affine expressions.
        """
        repl = {}
        for k, v in mapping.items():
            idx = self.sig.index(k) if isinstance(k, str) else k
            repl[idx] = self._coerce(v) if not isinstance(v, Expr) else v
        return self.transfer(self.sig, {i: i for i in range(len(self.sig.names))}, repl)

    def transfer(
        self,
        target: ChartSignature,
        index_map: Mapping[int, int],
        replacements: Mapping[int, "Expr"] | None = None,
    ) -> "Expr":
        """Rewrite on another chart.

        ``index_map`` sends source variable indices to target indices;
        ``replacements`` (target-chart expressions) take precedence.
        """
        replacements = replacements or {}
        var_images: dict[int, Expr] = {}
        for i in range(len(self.sig.names)):
            if i in replacements:
                var_images[i] = replacements[i]
            elif i in index_map:
                var_images[i] = Expr.var(target, index_map[i])
        out = Expr.const(target, 0)
        for (exps, trans), c in self._terms.items():
            term = Expr.const(target, c)
            for i, e in enumerate(exps):
                if e:
                    if i not in var_images:
                        raise ExprError(f"no image for variable {self.sig.names[i]}")
                    term = term * var_images[i] ** e
            for (kind, coeffs, const), p in trans:
                arg = Expr.const(target, const)
                for i, a in enumerate(coeffs):
                    if a:
                        if i not in var_images:
                            raise ExprError(f"no image for variable {self.sig.names[i]}")
                        arg = arg + var_images[i] * a
                if arg.as_affine() is None:
                    raise ExprError("substitution makes a transcendental argument non-affine")
                term = term * Expr.function(target, kind, arg) ** p
            out = out + term
        return out

    def compile(self, module=math):
        """Return ``f(p)`` evaluating the expression with ``p[i]`` the i-th variable.

        ``module`` supplies sin/cos/exp, so ``numpy`` gives a vectorised
        evaluator over arrays of points.
        """
        pieces = []
        for (exps, trans), c in self._terms.items():
            factors = [repr(float(c))]
            for i, e in enumerate(exps):
                if e:
                    factors.append(f"p[{i}]" if e == 1 else f"p[{i}]**{e}")
            for (kind, coeffs, const), pw in trans:
                arg = " + ".join(
                    [repr(float(const))] + [f"{float(a)!r}*p[{i}]" for i, a in enumerate(coeffs) if a]
                )
                f = f"_m.{kind}({arg})"
                factors.append(f if pw == 1 else f"{f}**{pw}")
            pieces.append("*".join(factors))
        body = " + ".join(pieces) if pieces else "0.0"
        return eval(f"lambda p: {body}", {"_m": module})

    def evalf(self, point: Sequence[float]) -> float:
        """Evaluate at a point given in chart order (base, then fiber)."""
        if len(point) != len(self.sig.names):
            raise ExprError("point has the wrong length")
        pt = [float(v) for v in point]
        total = 0.0
        for (exps, trans), c in self._terms.items():
            val = float(c)
            for i, e in enumerate(exps):
                if e:
                    val *= pt[i] ** e
            for (kind, coeffs, const), p in trans:
                arg = float(const) + sum(float(a) * pt[i] for i, a in enumerate(coeffs) if a)
                val *= getattr(math, kind)(arg) ** p
            total += val
        return total

    # printing ---------------------------------------------------------

    def _sort_key(self, key):
        exps, trans = key
        return (tuple(-e for e in exps), len(trans), trans)

    def __str__(self):
        if not self._terms:
            return "0"
        names = self.sig.names
        parts = []
        for key in sorted(self._terms, key=self._sort_key):
            exps, trans = key
            c = self._terms[key]
            factors = []
            for i, e in enumerate(exps):
                if e:
                    factors.append(names[i] if e == 1 else f"{names[i]}^{e}")
            for (kind, coeffs, const), p in trans:
                arg = _format_affine(names, coeffs, const)
                f = f"{kind}({arg})"
                factors.append(f if p == 1 else f"{f}^{p}")
            mag = abs(c)
            if factors:
                body = "*".join(factors)
                if mag != 1:
                    body = f"{_format_rational(mag)}*{body}"
            else:
                body = _format_rational(mag)
            parts.append(("-" if c < 0 else "+", body))
        first_sign, first = parts[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    def __repr__(self):
        return f"Expr({str(self)!r})"


def _merge_trans(t1: tuple, t2: tuple) -> tuple:
    if not t1:
        return t2
    if not t2:
        return t1
    merged: dict = dict(t1)
    for atom, p in t2:
        merged[atom] = merged.get(atom, 0) + p
    return tuple(sorted(merged.items()))


def _format_rational(q: Fraction) -> str:
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def _format_affine(names, coeffs, const) -> str:
    pieces = []
    for i, a in enumerate(coeffs):
        if a:
            mag = abs(a)
            body = names[i] if mag == 1 else f"{_format_rational(mag)}*{names[i]}"
            pieces.append(("-" if a < 0 else "+", body))
    if const:
        pieces.append(("-" if const < 0 else "+", _format_rational(abs(const))))
    sign, body = pieces[0]
    out = ("-" if sign == "-" else "") + body
    for sign, body in pieces[1:]:
        out += f" {sign} {body}"
    return out


# parsing ----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


class _Parser:
    def __init__(self, text: str, sig: ChartSignature):
        self.text = text
        self.sig = sig
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
                raise ParseError(f"unexpected character {text[bad]!r}", bad)
            kind = m.lastgroup
            start = m.start(kind)
            self.tokens.append((kind, m.group(kind), start))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("end", "", len(self.text))

    def take(self, value=None):
        tok = self.peek()
        if value is not None and tok[1] != value:
            raise ParseError(f"expected {value!r}", tok[2])
        if tok[0] == "end":
            raise ParseError("unexpected end of input", tok[2])
        self.i += 1
        return tok

    def parse(self) -> Expr:
        if not self.tokens:
            raise ParseError("empty expression", 0)
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected token {tok[1]!r}", tok[2])
        return e

    def expr(self) -> Expr:
        sign = 1
        if self.peek()[1] in "+-" and self.peek()[0] == "op":
            sign = -1 if self.take()[1] == "-" else 1
        e = self.term() * sign
        while self.peek()[0] == "op" and self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            t = self.term()
            e = e + t if op == "+" else e - t
        return e

    def term(self) -> Expr:
        e = self.power()
        while self.peek()[0] == "op" and self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            pos = self.peek()[2]
            rhs = self.power()
            if op == "*":
                e = e * rhs
            elif not rhs.is_constant():
                raise ParseError("division is only allowed by a constant", pos)
            elif rhs.constant_value() == 0:
                raise ParseError("division by zero", pos)
            else:
                e = e * (1 / rhs.constant_value())
        return e

    def power(self) -> Expr:
        e = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            kind, value, pos = self.take()
            if kind != "num" or not value.isdigit():
                raise ParseError("exponent must be a non-negative integer", pos)
            e = e ** int(value)
        return e

    def factor(self) -> Expr:
        kind, value, pos = self.peek()
        if kind == "num":
            self.take()
            return Expr.const(self.sig, Fraction(value))
        if kind == "name":
            self.take()
            if value in FUNCTIONS:
                self.take("(")
                arg_pos = self.peek()[2]
                arg = self.expr()
                self.take(")")
                if arg.as_affine() is None:
                    raise ParseError(f"argument of {value} must be affine", arg_pos)
                return Expr.function(self.sig, value, arg)
            if value not in self.sig.names:
                raise UnknownVariableError(value)
            return Expr.var(self.sig, value)
        if kind == "op" and value == "(":
            self.take()
            e = self.expr()
            self.take(")")
            return e
        if kind == "op" and value == "-":
            self.take()
            return -self.power()
        if kind == "end":
            raise ParseError("unexpected end of input", pos)
        raise ParseError(f"unexpected token {value!r}", pos)


def parse(text: str, sig: ChartSignature) -> Expr:
    """Parse ``text`` into its normal form on the chart ``sig``."""
    return _Parser(text, sig).parse()


def sample_equal(
    e1: Expr,
    e2: Expr,
    points: Iterable[Sequence[float]],
    tol: float = 1e-9,
) -> bool:
    """Numeric equality oracle: |e1 - e2| <= tol at every point."""
    diff = e1 - e2
    return all(abs(diff.evalf(p)) <= tol for p in points)
