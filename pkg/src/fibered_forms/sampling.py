"""Seeded random generators for expressions, fields, forms and connections."""

from __future__ import annotations

import random
from fractions import Fraction
from itertools import combinations
from typing import Sequence

import numpy as np

from .expr import ChartSignature, Expr
from .forms import CoordForm, Decomposition, VerticalField
from .connection import Connection

__all__ = [
    "random_polynomial",
    "random_expr",
    "random_field",
    "random_connection",
    "random_form",
    "random_block",
    "random_points",
]


def _rational(rng: random.Random) -> Fraction:
    num = rng.choice([-3, -2, -1, 1, 2, 3])
    den = rng.choice([1, 1, 1, 2, 3])
    return Fraction(num, den)


def random_polynomial(
    sig: ChartSignature,
    rng: random.Random,
    degree: int = 2,
    terms: int = 3,
    variables: Sequence[int] | None = None,
) -> Expr:
    """Sparse polynomial with rational coefficients and total degree <= ``degree``."""
    idx = list(range(len(sig.names))) if variables is None else list(variables)
    out = Expr.const(sig, 0)
    for _ in range(rng.randint(1, terms)):
        mono = Expr.const(sig, _rational(rng))
        for _ in range(rng.randint(0, degree)):
            if idx:
                mono = mono * Expr.var(sig, rng.choice(idx))
        out = out + mono
    return out


def random_expr(sig: ChartSignature, rng: random.Random, degree: int = 2, terms: int = 3) -> Expr:
    """Polynomial possibly multiplied by a transcendental factor of an affine argument."""
    e = random_polynomial(sig, rng, degree, terms)
    if rng.random() < 0.5:
        arg = random_polynomial(sig, rng, 1, 2)
        kind = rng.choice(["sin", "cos", "exp"])
        e = e * Expr.function(sig, kind, arg)
    return e


def random_field(sig: ChartSignature, rng: random.Random, degree: int = 2, terms: int = 2,
                 variables: Sequence[int] | None = None) -> VerticalField:
    return VerticalField(
        sig,
        [random_polynomial(sig, rng, degree, terms, variables) if rng.random() < 0.7 else Expr.const(sig, 0)
         for _ in range(sig.m)],
    )


def random_connection(sig: ChartSignature, rng: random.Random, degree: int = 2) -> Connection:
    return Connection(sig, [random_field(sig, rng, degree) for _ in range(sig.n)])


def _random_terms(sig, rng, keys, density, make):
    terms = {}
    for key in keys:
        if rng.random() < density:
            terms[key] = make()
    return terms


def random_block(sig: ChartSignature, rng: random.Random, p: int, q: int, degree: int = 2,
                 density: float = 0.5, transcendental: bool = False,
                 variables: Sequence[int] | None = None) -> Decomposition:
    """Random (p, q) block."""
    n, m = sig.n, sig.m
    keys = [I + tuple(n + j for j in J) for I in combinations(range(n), p) for J in combinations(range(m), q)]
    make = (lambda: random_expr(sig, rng, degree)) if transcendental else (
        lambda: random_polynomial(sig, rng, degree, 3, variables))
    terms = _random_terms(sig, rng, keys, density, make)
    if keys and not terms:
        terms[rng.choice(keys)] = make()
    return Decomposition(sig, p + q, terms)


def random_form(sig: ChartSignature, rng: random.Random, k: int, degree: int = 2, density: float = 0.4,
                transcendental: bool = False, cls=CoordForm):
    """Random homogeneous k-form (coordinate or decomposed)."""
    N = len(sig.names)
    keys = list(combinations(range(N), k))
    make = (lambda: random_expr(sig, rng, degree)) if transcendental else (
        lambda: random_polynomial(sig, rng, degree))
    terms = _random_terms(sig, rng, keys, density, make)
    if keys and not terms:
        terms[rng.choice(keys)] = make()
    return cls(sig, k, terms)


def random_points(sig: ChartSignature, count: int, seed: int = 0, low: float = -1.0, high: float = 1.0) -> np.ndarray:
    gen = np.random.default_rng(seed)
    return gen.uniform(low, high, size=(count, len(sig.names)))
