import random
from fractions import Fraction

import numpy as np
import pytest

from fibered_forms.closure import analyze_2form, analyze_3form, extract_2connection, extract_3connection, fiber_nondegeneracy
from fibered_forms.connection import Connection
from fibered_forms.coupling import (
    ActionData,
    CouplingError,
    LieAlgebraData,
    PrincipalConnectionData,
    canonical_2plectic,
    hamiltonian_field,
    invariant_splitting_check,
    minimal_coupling,
    moment_cocycle,
    poisson_bracket,
    verify_moment,
)
from fibered_forms.expr import ChartSignature, parse
from fibered_forms.forms import CoordForm, Decomposition, VerticalField, assemble
from fibered_forms.sampling import random_points, random_polynomial

S = ChartSignature.standard(2, 2)


def P(text, sig=S):
    return parse(text, sig)


def vf(*comps, sig=S):
    return VerticalField(sig, [P(c, sig) for c in comps])


def form(items, sig=S, cls=Decomposition):
    return cls.from_indices(sig, [(P(c, sig), I, J) for c, I, J in items])


OMEGA = form([("1", [], [0, 1])])
LINE = LieAlgebraData.from_literal({"dim": 1})
MAGNETIC = ActionData([vf("0", "1")], [P("y1")])
TRANSLATIONS = ActionData([vf("-1", "0"), vf("0", "-1")], [P("y2"), P("-y1")])


# Lie algebra data ------------------------------------------------------------


def test_lie_algebra_validation():
    with pytest.raises(CouplingError):
        LieAlgebraData.from_literal({"dim": 3, "c": [[1, 2, 3, "1"], [1, 3, 1, "1"]]})
    with pytest.raises(CouplingError):
        LieAlgebraData.from_literal({"dim": 2, "c": [[1, 2, 2, "1"]], "g": [[1, 0], [0, 1]]})
    so3 = LieAlgebraData.from_literal({"dim": 3, "c": [[1, 2, 3, "1"], [2, 3, 1, "1"], [3, 1, 2, "1"]]})
    assert so3.bracket([1, 0, 0], [0, 1, 0]) == [0, 0, 1]
    assert LieAlgebraData.from_literal(so3.to_json()) == so3


# moment maps -----------------------------------------------------------------


def test_verify_moment_examples():
    assert verify_moment(MAGNETIC, OMEGA).ok
    assert verify_moment(ActionData([vf("0", "1")], [P("y1 + 7")]), OMEGA).ok
    wrong = verify_moment(ActionData([vf("0", "1")], [P("-y1")]), OMEGA)
    assert not wrong.ok
    assert (wrong.residuals[0] - form([("2", [], [0])])).is_zero()


def test_hamiltonian_field_convention():
    X = hamiltonian_field(P("y1"), OMEGA)
    assert (X - vf("0", "1")).is_zero()
    assert (OMEGA.interior(X) + form([("1", [], [0])])).is_zero()


def _numeric_poisson(f, g, W, point, h=1e-6):
    """{f, g} = omega(X_g, X_f) with i_{X_h} omega = -dh, by finite differences."""
    def grad(e):
        out = []
        for a in range(2):
            up, down = list(point), list(point)
            up[2 + a] += h
            down[2 + a] -= h
            out.append((e.evalf(up) - e.evalf(down)) / (2 * h))
        return np.array(out)

    Xf = np.linalg.solve(W, grad(f))
    Xg = np.linalg.solve(W, grad(g))
    return float(Xg @ W @ Xf)


def test_poisson_bracket_matches_brute_force_oracle():
    W = np.array([[0.0, 1.0], [-1.0, 0.0]])
    rng = random.Random(0)
    for p in random_points(S, 20, 3):
        f, g = random_polynomial(S, rng, 3), random_polynomial(S, rng, 3)
        assert abs(poisson_bracket(f, g, OMEGA).evalf(p) - _numeric_poisson(f, g, W, p)) < 1e-6
    # pinned value for the translation moment data
    p = [0.3, -0.2, 0.5, 0.9]
    assert abs(_numeric_poisson(P("y2"), P("-y1"), W, p) - (-1.0)) < 1e-8


def test_translation_cocycle():
    rep = moment_cocycle(LieAlgebraData.abelian(2), TRANSLATIONS, OMEGA)
    assert rep.ok and not rep.vanishes
    assert rep.matrix[0][1].equals(P("-1")) and rep.matrix[1][0].equals(P("1"))


def test_rotation_and_one_dimensional_cocycles_vanish():
    rot = ActionData([vf("-y2", "y1")], [P("(y1^2 + y2^2)/2")])
    assert verify_moment(rot, OMEGA).ok
    assert moment_cocycle(LINE, rot, OMEGA).vanishes
    assert moment_cocycle(LINE, MAGNETIC, OMEGA).vanishes


def test_cocycle_requires_valid_moment():
    with pytest.raises(CouplingError):
        moment_cocycle(LINE, ActionData([vf("0", "1")], [P("-y1")]), OMEGA)


# minimal coupling ------------------------------------------------------------


def test_magnetic_coupling():
    pc = PrincipalConnectionData([[P("x1*x2^2 + x2")], [P("x1^3 - x2")]])
    cp = minimal_coupling(LINE, MAGNETIC, pc, OMEGA)
    expected = form([("y1*(3*x1^2 - 2*x1*x2 - 1)", [0, 1], [])])
    assert (cp.components.omega_h - expected).is_zero()
    assert analyze_2form(cp.components, cp.connection).all_zero
    assert extract_2connection(cp.components, cp.connection).all_zero


def test_flat_principal_connection_gives_zero_omega_h():
    pc = PrincipalConnectionData([[P("x2")], [P("x1")]])
    cp = minimal_coupling(LINE, MAGNETIC, pc, OMEGA)
    assert cp.components.omega_h.is_zero()
    assert analyze_2form(cp.components, cp.connection).all_zero


def test_random_abelian_couplings_close():
    rng = random.Random(12)
    s3 = ChartSignature.standard(3, 2)
    om = form([("1", [], [0, 1])], s3)
    act = ActionData([vf("0", "1", sig=s3)], [P("y1", s3)])
    for _ in range(5):
        A = [[random_polynomial(s3, rng, 2, variables=range(3))] for _ in range(3)]
        cp = minimal_coupling(LINE, act, PrincipalConnectionData(A), om)
        assert analyze_2form(cp.components, cp.connection).all_zero


def test_sl2_coupling_closes():
    J = [P("y1^2/2"), P("y2^2/2"), P("y1*y2")]
    rho = [hamiltonian_field(j, OMEGA) for j in J]
    alg = LieAlgebraData.from_literal({"dim": 3, "c": [[1, 2, 3, "-1"], [1, 3, 1, "-2"], [2, 3, 2, "2"]]})
    act = ActionData(rho, J)
    assert act.is_antihomomorphism(alg)
    assert moment_cocycle(alg, act, OMEGA).vanishes
    pc = PrincipalConnectionData([[P("x2"), P("x1^2"), P("1")], [P("x1*x2"), P("0"), P("x2")]])
    cp = minimal_coupling(alg, act, pc, OMEGA)
    assert analyze_2form(cp.components, cp.connection).all_zero
    assert extract_2connection(cp.components, cp.connection).all_zero


def test_non_equivariant_coupling_residual_matches_cocycle_pairing():
    s3 = ChartSignature.standard(3, 2)
    om = form([("1", [], [0, 1])], s3)
    act = ActionData([vf("-1", "0", sig=s3), vf("0", "-1", sig=s3)], [P("y2", s3), P("-y1", s3)])
    alg = LieAlgebraData.abelian(2)
    A = [[P("x2", s3), P("x1^2", s3)], [P("x3", s3), P("x1", s3)], [P("1", s3), P("x2*x3", s3)]]
    pc = PrincipalConnectionData(A)
    cp = minimal_coupling(alg, act, pc, om)
    rep = analyze_2form(cp.components, cp.connection)
    assert rep["closed2:1"].zero and rep["closed2:2"].zero and rep["closed2:3"].zero
    residual = rep["closed2:4"].residual
    assert not residual.is_zero()
    lam = moment_cocycle(alg, act, om).matrix
    curv = pc.curvature(alg)

    def w(b, i, j):
        return curv[(i, j)][b] if i < j else -curv[(j, i)][b]

    expected = P("0", s3)
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        for b in range(2):
            for c in range(2):
                expected = expected - A[k][c] * lam[b][c] * w(b, i, j)
    assert residual.coefficient([0, 1, 2], []).equals(expected)


def test_minimal_coupling_preconditions():
    pc = PrincipalConnectionData([[P("x1")], [P("0")]])
    with pytest.raises(CouplingError):
        minimal_coupling(LINE, ActionData([vf("0", "1")], [P("-y1")]), pc, OMEGA)
    with pytest.raises(CouplingError):
        PrincipalConnectionData([[P("y1")], [P("0")]])
    with pytest.raises(CouplingError):
        minimal_coupling(LINE, MAGNETIC, pc, form([("1 + x1", [], [0, 1])]))


# 2-plectic coupling ----------------------------------------------------------


S23 = ChartSignature.standard(2, 3)
PHI = form([("1", [], [0, 1, 2])], S23)
SO3 = LieAlgebraData.from_literal({"dim": 3, "c": [[1, 2, 3, "1"], [2, 3, 1, "1"], [3, 1, 2, "1"]],
                                   "g": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]})


def so3_action():
    rots = [vf("0", "-y3", "y2", sig=S23), vf("y3", "0", "-y1", sig=S23), vf("-y2", "y1", "0", sig=S23)]
    euler = vf("y1", "y2", "y3", sig=S23)
    J = [PHI.interior(euler).interior(r) * Fraction(1, 3) for r in rots]
    return ActionData(rots, J)


def test_hamiltonian_2plectic_coupling():
    act = so3_action()
    assert act.is_antihomomorphism(SO3)
    assert verify_moment(act, PHI).ok
    pc = PrincipalConnectionData([[P("x2", S23), P("x1^2", S23), P("1", S23)],
                                  [P("x1*x2", S23), P("0", S23), P("x2", S23)]])
    cp = minimal_coupling(SO3, act, pc, PHI)
    assert cp.components.alpha_h.is_zero() and cp.components.phi_h.is_zero()
    assert analyze_3form(cp.components, cp.connection).all_zero
    three = extract_3connection(cp.components, cp.connection)
    assert three.all_zero


# canonical 2-plectic fibration -----------------------------------------------


@pytest.mark.parametrize("m", [2, 3])
def test_canonical_2plectic_closes(m):
    sig = ChartSignature.standard(2, m)
    rows = [["0"] * m, ["x1"] + ["0"] * (m - 1)]
    can = canonical_2plectic(Connection.from_strings(sig, rows))
    assert can.components.alpha_h.is_zero() and can.components.phi_h.is_zero()
    assert analyze_3form(can.components, can.connection).all_zero
    Phi = assemble(can.components.total(), can.connection)
    assert fiber_nondegeneracy(Phi, random_points(can.sig, 100, m)).ok


def test_canonical_2plectic_twisted_omega_star():
    sig = ChartSignature.standard(2, 2)
    can = canonical_2plectic(Connection.from_strings(sig, [["0", "0"], ["x1", "0"]]))
    C = can.connection.curvature()(0, 1)
    assert (C - VerticalField(can.sig, [parse(c, can.sig) for c in ("1", "0", "0")])).is_zero()
    value = Decomposition._raw(can.sig, 1, {k[2:]: c for k, c in can.components.omega_h.items()})
    # the curvature operator contracts with a minus sign in this convention
    assert (value + can.omega2_v.interior(C)).is_zero()


def test_canonical_flat_m3_is_sum_of_deta_dy_dy():
    sig = ChartSignature.standard(1, 3)
    can = canonical_2plectic(Connection.flat(sig))
    Phi = assemble(can.components.total(), can.connection)
    names = can.sig.names
    expected = {}
    for (j, k), idx in can.eta_index.items():
        expected[(1 + j, 1 + k, idx)] = "1"
    assert {k: str(c) for k, c in Phi.items()} == expected
    assert names[-3:] == ("eta1_2", "eta1_3", "eta2_3")


def test_tautological_pullback():
    sig = ChartSignature.standard(1, 3)
    can = canonical_2plectic(Connection.flat(sig))
    omega2 = CoordForm(can.sig, 2, dict(can.omega2_v.items()))
    for text in ("y1*y3 + 1", "sin(y2)"):
        beta = form([(text, [], [0, 1]), ("y2^2", [], [1, 2])], sig, CoordForm)
        assert (can.pullback(omega2, beta) - beta).is_zero()


def test_canonical_requires_two_fiber_dimensions():
    with pytest.raises(CouplingError):
        canonical_2plectic(Connection.flat(ChartSignature.standard(1, 1)))


# splitting -------------------------------------------------------------------


SU2_SQ = LieAlgebraData.from_literal({
    "dim": 6,
    "c": [[1, 2, 3, "1"], [2, 3, 1, "1"], [3, 1, 2, "1"], [4, 5, 6, "1"], [5, 6, 4, "1"], [6, 4, 5, "1"]],
    "g": [[int(i == j) for j in range(6)] for i in range(6)],
})


def test_diagonal_splitting():
    rep = invariant_splitting_check(SU2_SQ, [[1, 0, 0, 1, 0, 0], [0, 1, 0, 0, 1, 0], [0, 0, 1, 0, 0, 1]])
    assert rep.mixed_zero and len(rep.complement) == 3
    assert rep.restricted_nondegenerate and rep.semisimple


def test_whole_algebra_and_abelian_line():
    rep = invariant_splitting_check(SO3, [0, 1, 2])
    assert rep.complement == [] and rep.mixed_zero
    line = invariant_splitting_check(SO3, [2])
    assert not line.restricted_nondegenerate and not line.semisimple and line.consistent


def test_splitting_preconditions():
    with pytest.raises(CouplingError):
        invariant_splitting_check(SO3, [0, 1])
    neg = LieAlgebraData.abelian(2, g=[[-1, 0], [0, 1]])
    with pytest.raises(CouplingError):
        invariant_splitting_check(neg, [0])
