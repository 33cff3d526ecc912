"""Prequantization and exact Courant brackets in split form, fibered over the base.

Sections are pairs (X, f) of a vertical field and a function, or (X, alpha) of
a vertical field and a vertical 1-form.  Base variables enter as parameters.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

from .expr import ChartSignature, Expr
from .forms import Decomposition, FormError, VerticalField, _check_sig
from .sampling import random_field, random_polynomial

__all__ = [
    "PrequantSection",
    "CourantSection",
    "DerivationDatum",
    "prequant_bracket",
    "courant_bracket",
    "pairing",
    "adjoint_action",
    "apply_derivation",
    "derivation_condition",
    "derivation_check",
    "DerivationReport",
    "prequant_axioms",
    "courant_axioms",
    "random_prequant_section",
    "random_courant_section",
]


def _vertical(D: Decomposition, q: int, what: str) -> Decomposition:
    n = D.sig.n
    if D and (D.degree != q or any(g < n for key in D.keys() for g in key)):
        raise FormError(f"{what} must be a vertical {q}-form")
    return D


def _fn(f: Expr) -> Decomposition:
    return Decomposition._raw(f.sig, 0, {(): f} if f else {})


def _scalar(D: Decomposition) -> Expr:
    return dict(D.items()).get((), Expr.const(D.sig, 0))


@dataclass(frozen=True)
class PrequantSection:
    X: VerticalField
    f: Expr

    def __post_init__(self):
        _check_sig(self.X.sig, self.f.sig)

    @property
    def sig(self) -> ChartSignature:
        return self.X.sig

    def __add__(self, o):
        return PrequantSection(self.X + o.X, self.f + o.f)

    def __sub__(self, o):
        return PrequantSection(self.X - o.X, self.f - o.f)

    def __mul__(self, g: Expr):
        return PrequantSection(self.X * g, self.f * g)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return self.X.is_zero() and self.f.is_zero()

    def to_json(self) -> dict:
        return {"X": [str(c) for c in self.X.components], "f": str(self.f)}


@dataclass(frozen=True)
class CourantSection:
    X: VerticalField
    alpha: Decomposition

    def __post_init__(self):
        _check_sig(self.X.sig, self.alpha.sig)
        _vertical(self.alpha, 1, "alpha")

    @property
    def sig(self) -> ChartSignature:
        return self.X.sig

    def __add__(self, o):
        return CourantSection(self.X + o.X, self.alpha + o.alpha)

    def __sub__(self, o):
        return CourantSection(self.X - o.X, self.alpha - o.alpha)

    def __mul__(self, g: Expr):
        return CourantSection(self.X * g, self.alpha * g)

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return self.X.is_zero() and self.alpha.is_zero()

    def to_json(self) -> dict:
        return {"X": [str(c) for c in self.X.components], "alpha": self.alpha.to_literal()}


Section = Union[PrequantSection, CourantSection]


@dataclass(frozen=True)
class DerivationDatum:
    """Projectable field sum_i base[i] d_i + X together with a vertical co-datum.

    The co-datum is a vertical 1-form (prequantization case) or a vertical
    2-form (Courant case).
    """

    base: tuple
    X: VerticalField
    co: Decomposition

    def __post_init__(self):
        base = tuple(Fraction(b) for b in self.base)
        object.__setattr__(self, "base", base)
        if len(base) != self.X.sig.n:
            raise FormError("base part needs one rational per base direction")
        _check_sig(self.X.sig, self.co.sig)
        _vertical(self.co, self.co.degree, "co-datum")

    @property
    def sig(self) -> ChartSignature:
        return self.X.sig

    def on_function(self, g: Expr) -> Expr:
        out = self.X(g)
        for i, b in enumerate(self.base):
            if b:
                out = out + g.diff(i) * b
        return out

    def on_field(self, Y: VerticalField) -> VerticalField:
        out = self.X.bracket(Y)
        for i, b in enumerate(self.base):
            if b:
                out = out + Y.partial(i) * b
        return out

    def on_form(self, F: Decomposition) -> Decomposition:
        out = F.lie_vertical(self.X)
        for i, b in enumerate(self.base):
            if b:
                out = out + F.partial(i) * b
        return out

    def to_json(self) -> dict:
        return {
            "base": [str(b) for b in self.base],
            "X": [str(c) for c in self.X.components],
            "co": self.co.to_literal(),
        }


# brackets ----------------------------------------------------------------


def _omega_pair(omega: Decomposition, X: VerticalField, Y: VerticalField) -> Expr:
    return _scalar(omega.interior(X).interior(Y))


def prequant_bracket(s1: PrequantSection, s2: PrequantSection, omega_v: Decomposition) -> PrequantSection:
    """([X, Y], X(g) - Y(f) + omega(X, Y))."""
    _check_sig(s1.sig, s2.sig)
    _check_sig(s1.sig, omega_v.sig)
    return PrequantSection(
        s1.X.bracket(s2.X),
        s1.X(s2.f) - s2.X(s1.f) + _omega_pair(omega_v, s1.X, s2.X),
    )


def courant_bracket(s1: CourantSection, s2: CourantSection, phi_v: Decomposition) -> CourantSection:
    """([X, Y], L_X beta - i_Y d alpha + Phi(X, Y, .))."""
    _check_sig(s1.sig, s2.sig)
    _check_sig(s1.sig, phi_v.sig)
    form = (s2.alpha.lie_vertical(s1.X)
            - s1.alpha.fiber_d().interior(s2.X)
            + phi_v.interior(s1.X).interior(s2.X))
    return CourantSection(s1.X.bracket(s2.X), form)


def pairing(s1: CourantSection, s2: CourantSection) -> Expr:
    """<(X, alpha), (Y, beta)> = (i_X beta + i_Y alpha) / 2."""
    return (_scalar(s2.alpha.interior(s1.X)) + _scalar(s1.alpha.interior(s2.X))) * Fraction(1, 2)


def adjoint_action(s: Section, background: Decomposition) -> DerivationDatum:
    """ad_(X,f) = (X, i_X omega - df); ad_(X,alpha) = (X, i_X Phi - d alpha)."""
    zero = (0,) * s.sig.n
    if isinstance(s, PrequantSection):
        return DerivationDatum(zero, s.X, background.interior(s.X) - _fn(s.f).fiber_d())
    return DerivationDatum(zero, s.X, background.interior(s.X) - s.alpha.fiber_d())


def apply_derivation(D: DerivationDatum, s: Section) -> Section:
    """(X, a) acting on a section: (L_X Y, L_X g + a(Y)) or (L_X Y, L_X beta + i_Y a)."""
    if isinstance(s, PrequantSection):
        return PrequantSection(D.on_field(s.X), D.on_function(s.f) + _scalar(D.co.interior(s.X)))
    return CourantSection(D.on_field(s.X), D.on_form(s.alpha) + D.co.interior(s.X))


def derivation_condition(D: DerivationDatum, background: Decomposition) -> Decomposition:
    """L_X background - d co; zero exactly when D is a derivation."""
    return D.on_form(background) - D.co.fiber_d()


@dataclass
class DerivationReport:
    symbolic: bool
    residual: Decomposition
    brute_force: bool
    pairs_checked: int

    @property
    def agree(self) -> bool:
        return self.symbolic == self.brute_force

    def to_json(self) -> dict:
        return {
            "symbolic": self.symbolic,
            "brute_force": self.brute_force,
            "agree": self.agree,
            "residual_terms": self.residual.to_literal(),
            "pairs_checked": self.pairs_checked,
        }


def _bracket_for(background: Decomposition):
    if background.degree == 2:
        return prequant_bracket, random_prequant_section
    if background.degree == 3:
        return courant_bracket, random_courant_section
    raise FormError("background must be a vertical 2-form or 3-form")


def _coordinate_section(sig: ChartSignature, a: int, bracket):
    X = VerticalField(sig, [Expr.const(sig, int(b == a)) for b in range(sig.m)])
    if bracket is prequant_bracket:
        return PrequantSection(X, Expr.const(sig, 0))
    return CourantSection(X, Decomposition.zero(sig, 1))


def derivation_check(
    D: DerivationDatum,
    background: Decomposition,
    rng: random.Random | None = None,
    pairs: int = 4,
) -> DerivationReport:
    """Symbolic condition versus the brute-force derivation property on coordinate and random sections."""
    expected_co = background.degree - 1
    if D.co.degree != expected_co:
        raise FormError(f"co-datum must be a vertical {expected_co}-form")
    rng = rng or random.Random(0)
    residual = derivation_condition(D, background)
    bracket, make = _bracket_for(background)
    # the defect of a non-derivation is tensorial in the anchors, so coordinate
    # sections detect it; random pairs also exercise the function/form parts
    sig = D.sig
    unit = [_coordinate_section(sig, a, bracket) for a in range(sig.m)]
    candidates = [(unit[a], unit[b]) for a in range(sig.m) for b in range(a + 1, sig.m)]
    candidates += [(make(sig, rng), make(sig, rng)) for _ in range(pairs)]
    ok = True
    for s, t in candidates:
        lhs = apply_derivation(D, bracket(s, t, background))
        rhs = bracket(apply_derivation(D, s), t, background) + bracket(s, apply_derivation(D, t), background)
        if not (lhs - rhs).is_zero():
            ok = False
        if isinstance(s, CourantSection):
            inv = D.on_function(pairing(s, t)) - pairing(apply_derivation(D, s), t) - pairing(
                s, apply_derivation(D, t))
            if inv:
                ok = False
        if not ok:
            break
    return DerivationReport(residual.is_zero(), residual, ok, len(candidates))


# axiom residuals ---------------------------------------------------------


def prequant_axioms(s1, s2, s3, f: Expr, omega_v: Decomposition) -> dict[str, object]:
    """Residuals of Jacobi, antisymmetry, anchor and Leibniz rules."""
    br = lambda a, b: prequant_bracket(a, b, omega_v)  # noqa: E731
    jac = br(br(s1, s2), s3) + br(br(s2, s3), s1) + br(br(s3, s1), s2)
    return {
        "jacobi": jac,
        "antisymmetry": br(s1, s2) + br(s2, s1),
        "anchor": br(s1, s2).X - s1.X.bracket(s2.X),
        "leibniz": br(s1, s2 * f) - br(s1, s2) * f - s2 * s1.X(f),
    }


def courant_axioms(s1, s2, s3, f: Expr, phi_v: Decomposition) -> dict[str, object]:
    """Residuals of the five exact Courant algebroid axioms (Dorfman form)."""
    br = lambda a, b: courant_bracket(a, b, phi_v)  # noqa: E731
    sig = s1.sig
    jac = br(s1, br(s2, s3)) - br(br(s1, s2), s3) - br(s2, br(s1, s3))
    ss = br(s1, s1)
    return {
        "jacobi": jac,
        "anchor": br(s1, s2).X - s1.X.bracket(s2.X),
        "module": br(s1, s2 * f) - br(s1, s2) * f - s2 * s1.X(f),
        "invariance": s1.X(pairing(s2, s3)) - pairing(br(s1, s2), s3) - pairing(s2, br(s1, s3)),
        "self-bracket": ss - CourantSection(VerticalField.zero(sig), _fn(pairing(s1, s1)).fiber_d()),
    }


def residual_is_zero(r) -> bool:
    return r.is_zero()


# random sections ---------------------------------------------------------


def random_prequant_section(sig: ChartSignature, rng: random.Random, degree: int = 2) -> PrequantSection:
    return PrequantSection(random_field(sig, rng, degree), random_polynomial(sig, rng, degree))


def random_courant_section(sig: ChartSignature, rng: random.Random, degree: int = 2) -> CourantSection:
    n = sig.n
    terms = {(n + j,): random_polynomial(sig, rng, degree) for j in range(sig.m) if rng.random() < 0.7}
    return CourantSection(random_field(sig, rng, degree), Decomposition(sig, 1, terms))
