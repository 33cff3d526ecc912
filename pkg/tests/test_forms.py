import random

import pytest

from fibered_forms.connection import Connection, full_differential
from fibered_forms.expr import ChartSignature, parse
from fibered_forms.forms import (
    CoordForm,
    Decomposition,
    FormError,
    VerticalField,
    assemble,
    d_vertical,
    decompose,
    exterior_derivative,
)
from fibered_forms.sampling import random_connection, random_form

SIG = ChartSignature.standard(2, 2)
N = SIG.n


def P(text, sig=SIG):
    return parse(text, sig)


def F(items, cls=CoordForm, sig=SIG):
    return cls.from_indices(sig, [(P(c, sig), I, J) for c, I, J in items])


def field(*comps, sig=SIG):
    return VerticalField(sig, [P(c, sig) for c in comps])


def test_canonical_storage():
    with pytest.raises(FormError):
        CoordForm(SIG, 2, {(3, 2): P("1")})
    D = CoordForm(SIG, 1, {(2,): P("0")})
    assert D.is_zero() and list(D.items()) == []
    swapped = F([("1", [], [1, 0])])
    assert swapped.coefficient([], [0, 1]).equals(P("-1"))


def test_wedge_examples():
    dy1, dy2, dx1 = F([("1", [], [0])]), F([("1", [], [1])]), F([("1", [0], [])])
    assert dy1.wedge(dy2).coefficient([], [0, 1]).equals(P("1"))
    assert dy2.wedge(dy1).coefficient([], [0, 1]).equals(P("-1"))
    assert dy1.wedge(dy1).is_zero()
    prod = (dx1 * P("y1")).wedge(dy2)
    assert prod.coefficient([0], [1]).equals(P("y1"))


def test_interior_examples():
    dy12 = F([("1", [], [0, 1])], Decomposition)
    assert (dy12.interior(field("1", "0")) - F([("1", [], [1])], Decomposition)).is_zero()
    assert (dy12.interior(field("0", "1")) - F([("-1", [], [0])], Decomposition)).is_zero()
    dx1dy1 = F([("1", [0], [0])], Decomposition)
    assert (dx1dy1.interior(field("1", "0")) - F([("-1", [0], [])], Decomposition)).is_zero()


def test_vertical_differential_examples():
    D = F([("y1", [], [1])], Decomposition)
    assert (d_vertical(D) - F([("1", [], [0, 1])], Decomposition)).is_zero()
    D0 = Decomposition(SIG, 0, {(): P("x1*y2")})
    assert (d_vertical(D0) - F([("x1", [], [1])], Decomposition)).is_zero()
    D10 = F([("y1", [0], [])], Decomposition)
    assert (d_vertical(D10) - F([("-1", [0], [0])], Decomposition)).is_zero()


def test_lie_vertical_examples():
    dy12 = F([("1", [], [0, 1])], Decomposition)
    assert dy12.lie_vertical(field("1", "0")).is_zero()
    assert (dy12.lie_vertical(field("y1", "0")) - dy12).is_zero()
    D = F([("y1", [], [1])], Decomposition)
    assert (D.lie_vertical(field("1", "0")) - F([("1", [], [1])], Decomposition)).is_zero()


def test_decompose_examples():
    flat = Connection.flat(SIG)
    D = decompose(F([("1", [], [0, 1])]), flat)
    assert D.bidegrees() == {(0, 2)}
    D = decompose(F([("1", [0], [0])]), flat)
    assert D.bidegrees() == {(1, 1)} and D.coefficient([0], [0]).equals(P("1"))
    conn = Connection.from_strings(SIG, [["0", "1"], ["0", "0"]])
    D = decompose(F([("1", [], [0, 1])]), conn)
    assert D.block(0, 2).coefficient([], [0, 1]).equals(P("1"))
    assert D.block(1, 1).coefficient([0], [0]).equals(P("-1"))


def test_decompose_type_errors():
    flat = Connection.flat(SIG)
    with pytest.raises(FormError):
        decompose(F([("1", [], [0])], Decomposition), flat)
    with pytest.raises(FormError):
        assemble(F([("1", [], [0])]), flat)


@pytest.mark.parametrize("seed", range(5))
def test_round_trips(seed):
    rng = random.Random(seed)
    for _ in range(20):
        conn = random_connection(SIG, rng)
        k = rng.randint(0, 3)
        Fc = random_form(SIG, rng, k, transcendental=True)
        assert (assemble(decompose(Fc, conn), conn) - Fc).is_zero()
        D = random_form(SIG, rng, k, cls=Decomposition)
        assert (decompose(assemble(D, conn), conn) - D).is_zero()


def test_single_vertical_block_assembles_to_itself_when_flat():
    D = F([("y1*x2", [], [0, 1])], Decomposition)
    assert dict(assemble(D, Connection.flat(SIG)).items()) == dict(D.items())


def test_exterior_derivative_squares_to_zero():
    rng = random.Random(3)
    for _ in range(20):
        Fc = random_form(SIG, rng, rng.randint(0, 2), transcendental=True)
        assert exterior_derivative(exterior_derivative(Fc)).is_zero()


def test_operator_decomposition_oracle():
    rng = random.Random(8)
    for _ in range(10):
        conn = random_connection(SIG, rng)
        D = random_form(SIG, rng, rng.randint(0, 3), cls=Decomposition)
        lhs = decompose(exterior_derivative(assemble(D, conn)), conn)
        assert (lhs - full_differential(D, conn)).is_zero()


def test_vertical_field_bracket():
    X, Y = field("y1", "0"), field("1", "0")
    assert (X.bracket(Y) - field("-1", "0")).is_zero()
    assert (X.bracket(X)).is_zero()
