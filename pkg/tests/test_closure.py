import random
from fractions import Fraction

import pytest

from fibered_forms.closure import (
    ClosureError,
    Components2Form,
    Components3Form,
    analyze_2form,
    analyze_3form,
    build_invariant_problem,
    connection_shift,
    extract_2connection,
    extract_3connection,
    fiber_nondegeneracy,
    gauge_shift,
    induced_connection,
    invariant_solve,
    poincare_primitive,
    residual_basic_form,
)
from fibered_forms.connection import Connection, d_curvature, d_horizontal
from fibered_forms.coupling import canonical_2plectic
from fibered_forms.expr import ChartSignature, parse
from fibered_forms.forms import (
    CoordForm,
    Decomposition,
    VerticalField,
    assemble,
    d_vertical,
    decompose,
    exterior_derivative,
)
from fibered_forms.sampling import random_block, random_connection, random_points

S22 = ChartSignature.standard(2, 2)
S32 = ChartSignature.standard(3, 2)


def blk(sig, items, cls=Decomposition):
    return cls.from_indices(sig, [(parse(c, sig), I, J) for c, I, J in items])


def conn(sig, rows):
    return Connection.from_strings(sig, rows)


def zero(sig, k):
    return Decomposition.zero(sig, k)


OMEGA = blk(S22, [("1", [], [0, 1])])
TWIST = conn(S22, [["0", "0"], ["x1", "0"]])


# analyzers -------------------------------------------------------------------


def test_pullback_of_closed_base_form_is_closed():
    beta = blk(S22, [("x1^2 + x2", [0, 1], [])])
    rep = analyze_2form(Components2Form(zero(S22, 2), zero(S22, 2), beta), Connection.flat(S22))
    assert rep.all_zero
    phi = blk(ChartSignature.standard(3, 1), [("x2", [0, 1, 2], [])])
    rep3 = analyze_3form(Components3Form(*(zero(phi.sig, 3),) * 3, phi), Connection.flat(phi.sig))
    assert rep3.all_zero


def test_dropping_omega_h_exposes_third_equation():
    alpha = blk(S22, [("x1*y1", [1], [1])])
    omega = blk(S22, [("y1", [], [0, 1])])
    rep = analyze_2form(Components2Form(omega, alpha, zero(S22, 2)), TWIST)
    third = rep["closed2:3"].residual
    assert (third - (d_curvature(omega, TWIST) + d_horizontal(alpha, TWIST))).is_zero()
    assert [e.equation for e in rep.equations] == ["closed2:1", "closed2:2", "closed2:3", "closed2:4"]


def test_random_assembled_closed_forms_analyze_to_zero():
    rng = random.Random(4)
    for _ in range(5):
        c = random_connection(S32, rng)
        potential = random_block(S32, rng, 0, 1) + random_block(S32, rng, 1, 0)
        F = exterior_derivative(assemble(potential, c))
        comps = Components2Form.from_decomposition(decompose(F, c))
        assert analyze_2form(comps, c).all_zero


def test_three_form_analyzer_names():
    rep = analyze_3form(Components3Form(*(zero(S22, 3),) * 4), TWIST)
    assert [e.equation for e in rep.equations] == [f"phi:closed{k}" for k in range(1, 6)]


# non-degeneracy and induced connections --------------------------------------


def test_nondegeneracy_examples():
    pts = random_points(S22, 50, 0)
    assert fiber_nondegeneracy(blk(S22, [("1", [], [0, 1])], CoordForm), pts).ok
    s3 = ChartSignature.standard(1, 3)
    assert fiber_nondegeneracy(blk(s3, [("1", [], [0, 1, 2])], CoordForm), random_points(s3, 20, 0)).ok
    pts = random_points(S22, 5, 1)
    pts[2, 2] = 0.0  # y1 = 0
    rep = fiber_nondegeneracy(blk(S22, [("y1", [], [0, 1])], CoordForm), pts)
    assert rep.degenerate_points == [2]


def test_induced_connection_example():
    F = blk(S22, [("1", [], [0, 1]), ("1", [0], [0])], CoordForm)
    c = induced_connection(F)
    assert c.to_literal() == [["0", "1"], ["0", "0"]]
    assert decompose(F, c).block(1, 1).is_zero()
    assert induced_connection(blk(S22, [("y1*x2", [], [0, 1]), ("x1", [0, 1], [])], CoordForm)).is_flat()


def test_induced_connection_recovers_generating_connection():
    rng = random.Random(7)
    for _ in range(10):
        c0 = random_connection(S22, rng)
        D = OMEGA * Fraction(rng.choice([1, 2, -3])) + random_block(S22, rng, 2, 0)
        F = assemble(D, c0)
        c = induced_connection(F)
        assert all((a - b).is_zero() for a, b in zip(c.a, c0.a))


def test_induced_connection_needs_constant_determinant():
    with pytest.raises(ClosureError):
        induced_connection(blk(S22, [("y1", [], [0, 1]), ("1", [0], [0])], CoordForm))


# connection shift and gauge shift --------------------------------------------


def test_connection_shift_example():
    alpha = blk(S22, [("1", [0], [0])])
    new, corr = connection_shift(Connection.flat(S22), alpha, OMEGA)
    assert new.to_literal() == [["0", "1"], ["0", "0"]]
    assert corr.is_zero()
    same, corr0 = connection_shift(TWIST, zero(S22, 2), OMEGA)
    assert same.to_literal() == TWIST.to_literal() and corr0.is_zero()


def test_connection_shift_preserves_the_total_form():
    rng = random.Random(0)
    for _ in range(20):
        c = random_connection(S22, rng)
        omega = OMEGA * Fraction(rng.choice([1, 2, -3]))
        alpha = random_block(S22, rng, 1, 0).fiber_d()
        omega_h = random_block(S22, rng, 2, 0)
        new, corr = connection_shift(c, alpha, omega)
        assert (assemble(omega + alpha + omega_h, c) - assemble(omega + omega_h + corr, new)).is_zero()


def test_gauge_shift_keeps_closed_forms_closed():
    rng = random.Random(2)
    omega = blk(S22, [("y1", [], [0, 1])])
    comps = Components2Form(omega, blk(S22, [("x1*y1", [1], [1])]), zero(S22, 2))
    assert analyze_2form(comps, TWIST).all_zero
    assert gauge_shift(comps, zero(S22, 1), TWIST) == comps
    for _ in range(5):
        delta = random_block(S22, rng, 0, 1)
        shifted = gauge_shift(comps, delta, TWIST)
        assert analyze_2form(shifted, TWIST).all_zero
        diff = assemble(shifted.total(), TWIST) - assemble(comps.total(), TWIST)
        assert (diff - exterior_derivative(assemble(delta, TWIST))).is_zero()


def test_gauge_shift_normalizes_vertical_form():
    omega_v = blk(S22, [("1 + x1", [], [0, 1])])
    alpha = blk(S22, [("y1", [0], [1])])
    comps = Components2Form(omega_v, alpha, zero(S22, 2))
    assert analyze_2form(comps, Connection.flat(S22)).all_zero
    delta = blk(S22, [("-x1*y1", [], [1])])
    shifted = gauge_shift(comps, delta, Connection.flat(S22))
    assert (shifted.omega_v - OMEGA).is_zero()
    assert shifted.alpha_h.is_zero()


# basic residual --------------------------------------------------------------


def test_residual_basic_form_example():
    comps = Components2Form(blk(S32, [("1", [], [0, 1])]), zero(S32, 2), blk(S32, [("x3", [0, 1], [])]))
    flat = Connection.flat(S32)
    res = residual_basic_form(comps, flat)
    assert dict(res.phi.items()) == dict(blk(S32, [("1", [0, 1, 2], [])], CoordForm).items())
    assert res.closed
    prim = poincare_primitive(res.phi)
    assert (exterior_derivative(prim) - res.phi).is_zero()
    fixed = Components2Form(comps.omega_v, comps.alpha_h, comps.omega_h - blk(S32, [("x3", [0, 1], [])]))
    assert analyze_2form(fixed, flat).all_zero
    closed = Components2Form(comps.omega_v, zero(S32, 2), zero(S32, 2))
    assert residual_basic_form(closed, flat).phi.is_zero()


def test_residual_basic_form_preconditions():
    comps = Components2Form(blk(S22, [("1", [], [0, 1])]), zero(S22, 2), zero(S22, 2))
    with pytest.raises(ClosureError):
        residual_basic_form(comps, TWIST)
    s = ChartSignature.standard(3, 2)
    bad = Components2Form(blk(s, [("1", [], [0, 1])]), zero(s, 2), blk(s, [("x3*y1", [0, 1], [])]))
    with pytest.raises(ClosureError):
        residual_basic_form(bad, Connection.flat(s))


# invariant solver ------------------------------------------------------------


TORUS = ChartSignature(("x1", "x2"), ("y1", "y2"), (True,) * 4)


def test_torus_obstruction_is_infeasible_with_certificate():
    c = Connection.from_strings(TORUS, [["0", "0"], ["x1", "0"]])
    omega = blk(TORUS, [("1", [], [0, 1])])
    problem = build_invariant_problem("closed2:3", {"omega_v": omega}, c)
    assert problem.torus
    sol = invariant_solve(problem)
    assert not sol.feasible
    assert abs(sol.pairing) == 1
    cert = [sol.certificate.get(key_ij, 0) for key_ij in
            [((0, 1), (0,)), ((0, 1), (1,))]]
    assert any(cert)
    # the certificate annihilates every image vector
    for col in range(len(problem.unknowns)):
        total = Fraction(0)
        for r, key in enumerate(problem.equations):
            I = tuple(g for g in key if g < 2)
            J = tuple(g - 2 for g in key if g >= 2)
            total += sol.certificate.get((I, J), 0) * problem.matrix[r][col]
        assert total == 0


def test_flat_torus_is_feasible_with_zero_solution():
    omega = blk(TORUS, [("1", [], [0, 1])])
    sol = invariant_solve(build_invariant_problem("closed2:3", {"omega_v": omega}, Connection.flat(TORUS)))
    assert sol.feasible
    assert all(D.is_zero() for D in sol.solution.values())


def test_invariant_solver_rejects_nonconstant_input():
    with pytest.raises(ClosureError):
        build_invariant_problem("closed2:3", {"omega_v": blk(TORUS, [("y1", [], [0, 1])])},
                                Connection.flat(TORUS))
    with pytest.raises(ClosureError):
        build_invariant_problem("nope", {}, Connection.flat(TORUS))


# higher connections ----------------------------------------------------------


def test_extract_2connection_trivial_and_weakly_hamiltonian():
    flat = Connection.flat(S22)
    two = extract_2connection(Components2Form(OMEGA, zero(S22, 2), zero(S22, 2)), flat)
    assert two.all_zero
    comps = Components2Form(blk(S32, [("1", [], [0, 1])]), zero(S32, 2), blk(S32, [("x3", [0, 1], [])]))
    two = extract_2connection(comps, Connection.flat(S32))
    assert two.fake_zero and not two.curvature3_zero
    phi = residual_basic_form(comps, Connection.flat(S32)).phi
    assert (two.curvature3_form() - phi).is_zero()


def test_extract_2connection_requires_x_independent_fiber_form():
    comps = Components2Form(blk(S22, [("1 + x1", [], [0, 1])]), zero(S22, 2), zero(S22, 2))
    with pytest.raises(ClosureError):
        extract_2connection(comps, Connection.flat(S22))


def test_extract_3connection_on_canonical_fibration():
    can = canonical_2plectic(TWIST)
    three = extract_3connection(can.components, can.connection)
    assert three.all_zero
    C = can.connection.curvature()(0, 1)
    m_field, m_form = three.m[(0, 1)]
    assert (m_field - C).is_zero()
    assert (m_form + can.omega2_v.interior(C)).is_zero()
    empty = Components3Form(*(zero(S22, 3),) * 4)
    assert extract_3connection(empty, Connection.flat(S22)).all_zero


def test_vertical_closedness_identity():
    rng = random.Random(9)
    D = random_block(S22, rng, 0, 1)
    assert d_vertical(d_vertical(D)).is_zero()
    assert VerticalField.zero(S22).is_zero()
