"""Differential forms on a fibered chart and the connection-adapted splitting.

Every form is stored as a sparse map from a sorted tuple of *global* slot
indices to an :class:`Expr` coefficient.  Slot ``i < n`` is ``dx_{i+1}`` and
slot ``n + j`` is ``dy_{j+1}``; since base slots sort first, a key is exactly
``dx_I ^ dy_J`` with ``I`` and ``J`` ascending.  All signs come from counting
transpositions when keys are merged.

:class:`CoordForm` is a form written in the coordinate coframe.
:class:`Decomposition` uses the same storage but reads ``dy_J`` as ``theta_J``
(the coframe adapted to a connection), so its ``(p, q)`` block is an element of
``Omega^p(B, Omega^q(V))``.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

from .expr import ChartSignature, Expr, SignatureMismatchError

__all__ = [
    "VerticalField",
    "CoordForm",
    "Decomposition",
    "FormError",
    "wedge",
    "interior",
    "exterior_derivative",
    "d_vertical",
    "lie_vertical",
    "decompose",
    "assemble",
]


class FormError(ValueError):
    pass


def _check_sig(a, b):
    if a is not b and a != b:
        raise SignatureMismatchError("objects live on different charts")


@lru_cache(maxsize=65536)
def _merge(a: tuple, b: tuple):
    """(sign, merged key) for dx_a ^ dx_b, or (0, None) on a repeated slot."""
    if not a:
        return 1, b
    if not b:
        return 1, a
    sa = set(a)
    if any(x in sa for x in b):
        return 0, None
    inversions = 0
    for y in b:
        inversions += sum(1 for x in a if x > y)
    return (-1 if inversions % 2 else 1), tuple(sorted(a + b))


class VerticalField:
    """Vertical vector field sum_j X^j d/dy_j with chart-dependent coefficients."""

    __slots__ = ("sig", "components")

    def __init__(self, sig: ChartSignature, components: Sequence[Expr | int | Fraction]):
        if len(components) != sig.m:
            raise FormError(f"vertical field needs {sig.m} components, got {len(components)}")
        comps = []
        for c in components:
            if isinstance(c, Expr):
                _check_sig(c.sig, sig)
                comps.append(c)
            else:
                comps.append(Expr.const(sig, c))
        self.sig = sig
        self.components = tuple(comps)

    @classmethod
    def zero(cls, sig: ChartSignature) -> "VerticalField":
        return cls(sig, [0] * sig.m)

    @classmethod
    def basis(cls, sig: ChartSignature, j: int) -> "VerticalField":
        return cls(sig, [int(k == j) for k in range(sig.m)])

    def __call__(self, f: Expr) -> Expr:
        """Directional derivative X(f)."""
        out = Expr.const(self.sig, 0)
        n = self.sig.n
        for j, c in enumerate(self.components):
            if c:
                out = out + c * f.diff(n + j)
        return out

    def bracket(self, other: "VerticalField") -> "VerticalField":
        """Commutator [X, Y] in the fiber variables (base variables are parameters)."""
        _check_sig(self.sig, other.sig)
        return VerticalField(
            self.sig,
            [self(b) - other(a) for a, b in zip(self.components, other.components)],
        )

    def partial(self, var: int | str) -> "VerticalField":
        return VerticalField(self.sig, [c.diff(var) for c in self.components])

    def __add__(self, other: "VerticalField") -> "VerticalField":
        _check_sig(self.sig, other.sig)
        return VerticalField(self.sig, [a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "VerticalField") -> "VerticalField":
        _check_sig(self.sig, other.sig)
        return VerticalField(self.sig, [a - b for a, b in zip(self.components, other.components)])

    def __neg__(self) -> "VerticalField":
        return VerticalField(self.sig, [-a for a in self.components])

    def __mul__(self, f) -> "VerticalField":
        return VerticalField(self.sig, [a * f for a in self.components])

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, VerticalField):
            return NotImplemented
        return self.sig == other.sig and self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def as_vector(self) -> list[Expr]:
        """Full tangent vector (zeros in the base slots)."""
        return [Expr.const(self.sig, 0)] * self.sig.n + list(self.components)

    def evalf(self, point) -> list[float]:
        return [c.evalf(point) for c in self.components]

    def __str__(self):
        parts = [f"({c})*d/d{self.sig.fiber_names[j]}" for j, c in enumerate(self.components) if c]
        return " + ".join(parts) if parts else "0"

    __repr__ = __str__


class _Form:
    __slots__ = ("sig", "degree", "_terms")

    def __init__(self, sig: ChartSignature, degree: int, terms: Mapping[tuple, Expr] | None = None):
        N = len(sig.names)
        clean = {}
        for key, c in (terms or {}).items():
            key = tuple(key)
            if len(key) != degree:
                raise FormError(f"key {key} does not have degree {degree}")
            if any(b <= a for a, b in zip(key, key[1:])) or any(not 0 <= g < N for g in key):
                raise FormError(f"key {key} is not sorted and duplicate-free")
            if not isinstance(c, Expr):
                c = Expr.const(sig, c)
            else:
                _check_sig(c.sig, sig)
            if c:
                clean[key] = c
        self.sig = sig
        self.degree = degree
        self._terms = clean

    @classmethod
    def _raw(cls, sig, degree, terms):
        obj = cls.__new__(cls)
        obj.sig = sig
        obj.degree = degree
        obj._terms = terms
        return obj

    @classmethod
    def zero(cls, sig: ChartSignature, degree: int):
        return cls._raw(sig, degree, {})

    @classmethod
    def from_indices(cls, sig: ChartSignature, items: Iterable[tuple], degree: int | None = None):
        """Build from (coeff, I, J) triples with 0-based, possibly unsorted, I and J."""
        terms: dict = {}
        deg = degree
        for coeff, I, J in items:
            slots = tuple(I) + tuple(sig.n + j for j in J)
            if any(not 0 <= i < sig.n for i in I) or any(not 0 <= j < sig.m for j in J):
                raise FormError(f"index out of range in {I}, {J}")
            if deg is None:
                deg = len(slots)
            elif len(slots) != deg:
                raise FormError("terms of mixed degree")
            if len(set(slots)) != len(slots):
                continue
            sign = 1
            arr = list(slots)
            for a in range(len(arr)):
                for b in range(len(arr) - 1 - a):
                    if arr[b] > arr[b + 1]:
                        arr[b], arr[b + 1] = arr[b + 1], arr[b]
                        sign = -sign
            if not isinstance(coeff, Expr):
                coeff = Expr.const(sig, coeff)
            key = tuple(arr)
            terms[key] = terms.get(key, Expr.const(sig, 0)) + coeff * sign
        return cls(sig, deg if deg is not None else 0, terms)

    # access -----------------------------------------------------------

    def items(self):
        return self._terms.items()

    def keys(self):
        return self._terms.keys()

    def __len__(self):
        return len(self._terms)

    def split_key(self, key: tuple) -> tuple[tuple[int, ...], tuple[int, ...]]:
        n = self.sig.n
        return tuple(g for g in key if g < n), tuple(g - n for g in key if g >= n)

    def coefficient(self, I: Sequence[int], J: Sequence[int]) -> Expr:
        """Coefficient of dx_I ^ dy_J (0-based, sorted)."""
        key = tuple(I) + tuple(self.sig.n + j for j in J)
        return self._terms.get(key, Expr.const(self.sig, 0))

    def bidegrees(self) -> set[tuple[int, int]]:
        n = self.sig.n
        out = set()
        for key in self._terms:
            p = sum(1 for g in key if g < n)
            out.add((p, len(key) - p))
        return out

    def block(self, p: int, q: int):
        n = self.sig.n
        return self._raw(
            self.sig,
            p + q,
            {k: c for k, c in self._terms.items() if len(k) == p + q and sum(1 for g in k if g < n) == p},
        )

    def is_zero(self) -> bool:
        return not self._terms

    def __bool__(self):
        return bool(self._terms)

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        if self.sig != other.sig:
            return False
        if not self._terms and not other._terms:
            return True
        return self.degree == other.degree and self._terms == other._terms

    def __hash__(self):
        return hash((self.degree, frozenset(self._terms.items())))

    # linear structure -------------------------------------------------

    def _compatible(self, other):
        if type(other) is not type(self):
            raise FormError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        _check_sig(self.sig, other.sig)
        if self.degree != other.degree and self._terms and other._terms:
            raise FormError(f"degree mismatch {self.degree} vs {other.degree}")

    def __add__(self, other):
        self._compatible(other)
        if not other._terms:
            return self
        if not self._terms:
            return other
        terms = dict(self._terms)
        for k, c in other._terms.items():
            s = terms[k] + c if k in terms else c
            if s:
                terms[k] = s
            else:
                terms.pop(k, None)
        return self._raw(self.sig, self.degree, terms)

    def __neg__(self):
        return self._raw(self.sig, self.degree, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, f):
        """Multiply by a scalar function or number."""
        if isinstance(f, Expr):
            _check_sig(self.sig, f.sig)
        elif not isinstance(f, (int, Fraction)):
            return NotImplemented
        terms = {}
        for k, c in self._terms.items():
            v = c * f
            if v:
                terms[k] = v
        return self._raw(self.sig, self.degree, terms)

    __rmul__ = __mul__

    def map_coefficients(self, fn):
        terms = {}
        for k, c in self._terms.items():
            v = fn(c)
            if v:
                terms[k] = v
        return self._raw(self.sig, self.degree, terms)

    def partial(self, var: int | str):
        """Differentiate every coefficient (slots are held fixed)."""
        return self.map_coefficients(lambda c: c.diff(var))

    # algebra ----------------------------------------------------------

    def wedge(self, other):
        self._compatible_type(other)
        deg = self.degree + other.degree
        terms: dict = {}
        for k1, c1 in self._terms.items():
            for k2, c2 in other._terms.items():
                sign, key = _merge(k1, k2)
                if not sign:
                    continue
                v = c1 * c2
                if sign < 0:
                    v = -v
                if key in terms:
                    v = terms[key] + v
                if v:
                    terms[key] = v
                else:
                    terms.pop(key, None)
        return self._raw(self.sig, deg, terms)

    def _compatible_type(self, other):
        if type(other) is not type(self):
            raise FormError(f"cannot combine {type(self).__name__} with {type(other).__name__}")
        _check_sig(self.sig, other.sig)

    def interior(self, v: VerticalField):
        """Contraction with a vertical field in the first slot."""
        _check_sig(self.sig, v.sig)
        n = self.sig.n
        terms: dict = {}
        for key, c in self._terms.items():
            for pos, g in enumerate(key):
                if g < n:
                    continue
                comp = v.components[g - n]
                if not comp:
                    continue
                val = c * comp
                if pos % 2:
                    val = -val
                new = key[:pos] + key[pos + 1:]
                if new in terms:
                    val = terms[new] + val
                if val:
                    terms[new] = val
                else:
                    terms.pop(new, None)
        return self._raw(self.sig, max(self.degree - 1, 0), terms)

    def fiber_d(self):
        """sum_l dy_l ^ d/dy_l acting on the coefficients."""
        n = self.sig.n
        terms: dict = {}
        for key, c in self._terms.items():
            for l in range(self.sig.m):
                g = n + l
                if g in key:
                    continue
                dc = c.diff(g)
                if not dc:
                    continue
                sign, new = _merge((g,), key)
                if sign < 0:
                    dc = -dc
                if new in terms:
                    dc = terms[new] + dc
                if dc:
                    terms[new] = dc
                else:
                    terms.pop(new, None)
        return self._raw(self.sig, self.degree + 1, terms)

    def lie_vertical(self, v: VerticalField):
        """Cartan formula L_v = i_v d + d i_v with the fiber differential."""
        return self.fiber_d().interior(v) + self.interior(v).fiber_d()

    def evaluate_on(self, vectors: Sequence[Sequence[Expr]]) -> Expr:
        """F(v_1, ..., v_k) for full tangent vectors given in slot order."""
        if len(vectors) != self.degree:
            raise FormError(f"need {self.degree} vectors")
        from .linalg import det

        out = Expr.const(self.sig, 0)
        for key, c in self._terms.items():
            mat = [[vectors[r][g] for g in key] for r in range(self.degree)]
            d = det(mat) if self.degree else 1
            out = out + c * d
        return out

    def evalf(self, point) -> dict[tuple, float]:
        return {k: c.evalf(point) for k, c in self._terms.items()}

    def max_abs(self, points) -> float:
        best = 0.0
        for p in points:
            for c in self._terms.values():
                best = max(best, abs(c.evalf(p)))
        return best

    # output -----------------------------------------------------------

    def to_literal(self) -> list[dict]:
        """Scenario-file term list with 1-based indices."""
        out = []
        for key in sorted(self._terms):
            I, J = self.split_key(key)
            out.append({"coeff": str(self._terms[key]), "dx": [i + 1 for i in I], "dy": [j + 1 for j in J]})
        return out

    def _slot_name(self, g: int) -> str:
        n = self.sig.n
        return f"dx{g + 1}" if g < n else f"{self._fiber_symbol}{g - n + 1}"

    _fiber_symbol = "dy"

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for key in sorted(self._terms):
            basis = "^".join(self._slot_name(g) for g in key)
            coeff = str(self._terms[key])
            parts.append(f"({coeff})*{basis}" if basis else f"({coeff})")
        return " + ".join(parts)

    def __repr__(self):
        return f"{type(self).__name__}(degree={self.degree}, {self})"


class CoordForm(_Form):
    """A form in the coordinate coframe {dx_i, dy_j}."""

    __slots__ = ()

    def d(self) -> "CoordForm":
        return exterior_derivative(self)


class Decomposition(_Form):
    """A form in the adapted coframe {dx_i, theta^j}; blocks are graded by (p, q)."""

    __slots__ = ()
    _fiber_symbol = "th"

    @classmethod
    def from_blocks(cls, *blocks: "Decomposition") -> "Decomposition":
        out = None
        for b in blocks:
            out = b if out is None else out + b
        if out is None:
            raise FormError("no blocks given")
        return out


def wedge(F1: _Form, F2: _Form) -> _Form:
    return F1.wedge(F2)


def interior(v: VerticalField, F: _Form) -> _Form:
    return F.interior(v)


def lie_vertical(v: VerticalField, omega: _Form) -> _Form:
    return omega.lie_vertical(v)


def d_vertical(D: Decomposition) -> Decomposition:
    """Block (p, q) -> (p, q + 1): (-1)^p times the fiber differential of the value.

    Moving ``dy_l`` past the ``p`` base slots produces the (-1)^p, so on the
    shared storage this is just ``fiber_d``.
    """
    return D.fiber_d()


def exterior_derivative(F: CoordForm) -> CoordForm:
    """Coordinate exterior derivative on the chart."""
    terms: dict = {}
    N = len(F.sig.names)
    for key, c in F.items():
        for g in range(N):
            if g in key:
                continue
            dc = c.diff(g)
            if not dc:
                continue
            sign, new = _merge((g,), key)
            if sign < 0:
                dc = -dc
            if new in terms:
                dc = terms[new] + dc
            if dc:
                terms[new] = dc
            else:
                terms.pop(new, None)
    return CoordForm._raw(F.sig, F.degree + 1, terms)


def _change_coframe(F: _Form, images: Sequence[_Form], target: type) -> _Form:
    """Substitute fiber slot j -> images[j] (1-forms of class ``target``)."""
    sig = F.sig
    n = sig.n
    one = Expr.const(sig, 1)
    base = [target._raw(sig, 1, {(i,): one}) for i in range(n)]
    out = target.zero(sig, F.degree)
    cache: dict = {}
    for key, c in F.items():
        prod = cache.get(key)
        if prod is None:
            prod = target._raw(sig, 0, {(): one})
            for g in key:
                prod = prod.wedge(base[g] if g < n else images[g - n])
            cache[key] = prod
        out = out + prod * c
    return out


def decompose(F: CoordForm, conn) -> Decomposition:
    """Rewrite ``F`` in the adapted coframe dx_i, theta^j = dy_j - sum_i a_i^j dx_i."""
    _check_sig(F.sig, conn.sig)
    if not isinstance(F, CoordForm):
        raise FormError("decompose expects a CoordForm")
    sig = F.sig
    one = Expr.const(sig, 1)
    images = []
    for j in range(sig.m):
        terms = {(sig.n + j,): one}
        for i in range(sig.n):
            c = conn.a[i].components[j]
            if c:
                terms[(i,)] = c
        images.append(Decomposition._raw(sig, 1, terms))
    return _change_coframe(F, images, Decomposition)


def assemble(D: Decomposition, conn) -> CoordForm:
    """Inverse of :func:`decompose`: theta^j -> dy_j - sum_i a_i^j dx_i."""
    _check_sig(D.sig, conn.sig)
    if not isinstance(D, Decomposition):
        raise FormError("assemble expects a Decomposition")
    sig = D.sig
    one = Expr.const(sig, 1)
    images = []
    for j in range(sig.m):
        terms = {(sig.n + j,): one}
        for i in range(sig.n):
            c = conn.a[i].components[j]
            if c:
                terms[(i,)] = -c
        images.append(CoordForm._raw(sig, 1, terms))
    return _change_coframe(D, images, CoordForm)
