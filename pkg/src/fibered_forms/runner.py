"""Execution of scenario checks and report assembly."""

from __future__ import annotations

import random
from fractions import Fraction
from typing import Callable

from . import algebroid, closure, coupling
from .closure import ClosureError, Components2Form, Components3Form
from .connection import commutation_check, full_differential, holonomy_transport_check
from .coupling import CouplingError
from .expr import ExprError
from .forms import CoordForm, Decomposition, FormError, assemble, decompose, exterior_derivative
from .sampling import random_form, random_points, random_polynomial
from .scenario import CHECKS, Scenario, ScenarioError, _pointer

__all__ = ["run_checks", "run_check"]

_RUNTIME_ERRORS = (ClosureError, CouplingError, FormError, ExprError, ZeroDivisionError)


class _Params:
    """Typed access to one check's parameters with pointer-bearing errors."""

    def __init__(self, sc: Scenario, index: int, data: dict, allowed: set[str]):
        self.sc = sc
        self.base = ("checks", index)
        self.data = data
        extra = set(data) - allowed - {"check"}
        if extra:
            raise ScenarioError(_pointer(self.base), f"unknown parameter(s) {sorted(extra)}")

    def path(self, key) -> tuple:
        return self.base + (key,)

    def get(self, key, default=None, kind=None, required=False):
        if key not in self.data:
            if required:
                raise ScenarioError(_pointer(self.base), f"missing parameter {key!r}")
            return default
        value = self.data[key]
        if kind is not None and (not isinstance(value, kind) or isinstance(value, bool) and kind is not bool):
            raise ScenarioError(_pointer(self.path(key)), f"expected {getattr(kind, '__name__', kind)}")
        return value

    def count(self, key, default) -> int:
        v = self.get(key, default, int)
        if v < 0:
            raise ScenarioError(_pointer(self.path(key)), "must be non-negative")
        return v

    def form(self, key, cls=Decomposition, degree=None, required=True):
        if key not in self.data:
            if required:
                raise ScenarioError(_pointer(self.base), f"missing parameter {key!r}")
            return None
        return self.sc.form(self.data[key], self.path(key), cls, degree)

    def components(self, table: str):
        name = self.get("components", required=True)
        return self.sc.named(table, name, self.path("components"))

    def need(self, attr: str):
        value = getattr(self.sc, attr)
        if value is None:
            raise ScenarioError(_pointer(self.base), f"check needs a top-level {attr!r} entry")
        return value


def _any_components(p: _Params):
    name = p.get("components", required=True)
    if name in p.sc.components2:
        return p.sc.components2[name]
    return p.sc.named("components3", name, p.path("components"))


def _vertical_background(p: _Params, key="background"):
    D = p.form(key)
    if any(g < p.sc.sig.n for k, _ in D.items() for g in k):
        raise ScenarioError(_pointer(p.path(key)), "background must be a vertical form")
    if D.degree not in (2, 3):
        raise ScenarioError(_pointer(p.path(key)), "background must have degree 2 or 3")
    return D


# individual checks -------------------------------------------------------


def _decompose(p: _Params, seed: int) -> dict:
    sc = p.sc
    F = p.form("form", CoordForm)
    D = decompose(F, sc.connection)
    back = assemble(D, sc.connection)
    out = {"decomposition": D.to_literal(), "bidegrees": sorted(list(b) for b in D.bidegrees()),
           "roundtrip": (back - F).is_zero()}
    ok = out["roundtrip"]
    expected = p.form("expected", degree=F.degree, required=False)
    if expected is not None:
        out["matches_expected"] = (D - expected).is_zero()
        ok = ok and out["matches_expected"]
    out["pass"] = ok
    return out


def _assemble_roundtrip(p: _Params, seed: int) -> dict:
    sc = p.sc
    samples = p.count("samples", 20)
    rng = random.Random(seed)
    N = len(sc.sig.names)
    failures = {"roundtrip": 0, "differential": 0}
    for _ in range(samples):
        k = rng.randint(0, min(3, N))
        D = random_form(sc.sig, rng, k, cls=Decomposition)
        F = assemble(D, sc.connection)
        if not (decompose(F, sc.connection) - D).is_zero():
            failures["roundtrip"] += 1
        lhs = decompose(exterior_derivative(F), sc.connection)
        if not (lhs - full_differential(D, sc.connection)).is_zero():
            failures["differential"] += 1
    return {"samples": samples, "failures": failures, "pass": not any(failures.values())}


def _commutation(p: _Params, seed: int) -> dict:
    sc = p.sc
    samples = p.count("samples", 5)
    npts = p.count("points", 100)
    tol = float(p.get("tol", 1e-9, (int, float)))
    rng = random.Random(seed)
    N = len(sc.sig.names)
    forms = [random_form(sc.sig, rng, rng.randint(0, min(3, N)), cls=Decomposition) for _ in range(samples)]
    rep = commutation_check(sc.connection, forms, random_points(sc.sig, npts, seed))
    by_identity: dict[str, dict] = {}
    for e in rep.entries:
        slot = by_identity.setdefault(e.identity, {"identity": e.identity, "residual_zero": True, "numeric_max": 0.0})
        slot["residual_zero"] = slot["residual_zero"] and e.zero
        slot["numeric_max"] = max(slot["numeric_max"], e.numeric_max)
    return {"samples": samples, "points": npts, "identities": list(by_identity.values()),
            "pass": rep.all_zero and rep.numeric_max < tol}


def _analyze(table: str):
    def run(p: _Params, seed: int) -> dict:
        comps = p.components(table)
        pts = random_points(p.sc.sig, p.count("points", 20), seed)
        fn = closure.analyze_2form if table == "components2" else closure.analyze_3form
        rep = fn(comps, p.sc.connection, pts)
        return {"equations": rep.to_json(), "pass": rep.all_zero}

    return run


def _fiber_nondegeneracy(p: _Params, seed: int) -> dict:
    F = p.form("form", CoordForm)
    npts = p.count("points", 100)
    rep = closure.fiber_nondegeneracy(F, random_points(p.sc.sig, npts, seed))
    out = {"degree": rep.degree, "points": npts, "degenerate_points": rep.degenerate_points, "pass": rep.ok}
    if rep.determinant is not None:
        out["determinant"] = rep.determinant
    return out


def _induced_connection(p: _Params, seed: int) -> dict:
    F = p.form("form", CoordForm)
    conn = closure.induced_connection(F)
    D = decompose(F, conn)
    mixed = D.block(1, F.degree - 1)
    out = {"connection": conn.to_literal(), "mixed_block_zero": mixed.is_zero()}
    ok = mixed.is_zero()
    expected = p.get("expected", None, list)
    if expected is not None:
        exp_rows = [[p.sc.expr(v, p.path("expected") + (i, j)) for j, v in enumerate(r)]
                    for i, r in enumerate(expected)]
        out["matches_expected"] = all((a - e).is_zero() for row, erow in zip(conn.a, exp_rows)
                                      for a, e in zip(row.components, erow))
        ok = ok and out["matches_expected"]
    out["pass"] = ok
    return out


def _gauge_shift(p: _Params, seed: int) -> dict:
    sc = p.sc
    comps = _any_components(p)
    q = 1 if isinstance(comps, Components2Form) else 2
    delta = p.form("delta", degree=q)
    shifted = closure.gauge_shift(comps, delta, sc.connection)
    diff = assemble(shifted.total(), sc.connection) - assemble(comps.total(), sc.connection)
    exact = (diff - exterior_derivative(assemble(delta, sc.connection))).is_zero()
    fn = closure.analyze_2form if q == 1 else closure.analyze_3form
    before, after = fn(comps, sc.connection, []), fn(shifted, sc.connection, [])
    return {"shifted": {k: v.to_literal() for k, v in shifted.blocks().items()},
            "difference_is_exact": exact, "closed_before": before.all_zero, "closed_after": after.all_zero,
            "pass": exact and before.all_zero == after.all_zero}


def _residual_basic(p: _Params, seed: int) -> dict:
    sc = p.sc
    comps = _any_components(p)
    res = closure.residual_basic_form(comps, sc.connection, [])
    out = {"phi": res.phi.to_literal(), "closed": res.closed}
    ok = res.closed
    if res.closed and not res.phi.is_zero():
        prim = closure.poincare_primitive(res.phi)
        corr = Decomposition(sc.sig, prim.degree, dict(prim.items()))
        if isinstance(comps, Components2Form):
            fixed = Components2Form(comps.omega_v, comps.alpha_h, comps.omega_h - corr)
            again = closure.analyze_2form(fixed, sc.connection, [])
        else:
            fixed = Components3Form(comps.phi_v, comps.alpha_h, comps.omega_h, comps.phi_h - corr)
            again = closure.analyze_3form(fixed, sc.connection, [])
        out["primitive"] = prim.to_literal()
        out["corrected_closed"] = again.all_zero
        ok = ok and again.all_zero
    if "expected" in p.data:
        expected = p.form("expected", CoordForm, degree=res.phi.degree)
        out["matches_expected"] = (res.phi - expected).is_zero()
        ok = ok and out["matches_expected"]
    out["pass"] = ok
    return out


def _invariant_solve(p: _Params, seed: int) -> dict:
    kind = p.get("problem", "closed2:3", str)
    comps = _any_components(p)
    problem = closure.build_invariant_problem(kind, comps.blocks(), p.sc.connection)
    sol = closure.invariant_solve(problem)
    return {"problem": kind, **sol.to_json(), "pass": sol.feasible}


def _extract2(p: _Params, seed: int) -> dict:
    comps = p.components("components2")
    delta = p.form("delta", degree=1, required=False)
    two = closure.extract_2connection(comps, p.sc.connection, delta)
    return {
        "fake_curvature": [{"pair": [i + 1 for i in k], **r.to_json()} for k, r in two.fake_curvature.items()],
        "curvature3": [{"triple": [i + 1 for i in k], **r.to_json()} for k, r in two.curvature3.items()],
        "fake_curvature_zero": two.fake_zero,
        "curvature3_zero": two.curvature3_zero,
        "pass": two.all_zero,
    }


def _extract3(p: _Params, seed: int) -> dict:
    comps = p.components("components3")
    delta = p.form("delta", degree=2, required=False)
    three = closure.extract_3connection(comps, p.sc.connection, delta)
    return {
        "fake_curvature": [{"pair": [i + 1 for i in k], **r.to_json()} for k, r in three.fake_curvature.items()],
        "structure": [{"triple": [i + 1 for i in k], **r.to_json()} for k, r in three.structure.items()],
        "curvature4": [{"quadruple": [i + 1 for i in k], "value": str(v)} for k, v in three.curvature4.items()],
        "pass": three.all_zero,
    }


def _bracket_axioms(p: _Params, seed: int) -> dict:
    sc = p.sc
    bg = _vertical_background(p)
    prequant = bg.degree == 2
    axioms = algebroid.prequant_axioms if prequant else algebroid.courant_axioms
    make = algebroid.random_prequant_section if prequant else algebroid.random_courant_section
    kind = algebroid.PrequantSection if prequant else algebroid.CourantSection
    triples = []
    names = p.get("sections", [], list)
    if names:
        if len(names) != 3:
            raise ScenarioError(_pointer(p.path("sections")), "give exactly three section names")
        secs = [sc.named("sections", n, p.path("sections") + (k,)) for k, n in enumerate(names)]
        if not all(isinstance(s, kind) for s in secs):
            raise ScenarioError(_pointer(p.path("sections")), "section type does not match the background degree")
        triples.append(secs)
    rng = random.Random(seed)
    for _ in range(p.count("random", 50)):
        triples.append([make(sc.sig, rng) for _ in range(3)])
    failures: dict[str, int] = {}
    for s1, s2, s3 in triples:
        f = random_polynomial(sc.sig, rng)
        for name, r in axioms(s1, s2, s3, f, bg).items():
            failures.setdefault(name, 0)
            if not r.is_zero():
                failures[name] += 1
    return {"algebroid": "prequantization" if prequant else "exact Courant", "background_closed": bg.fiber_d().is_zero(),
            "triples": len(triples), "failures": failures, "pass": not any(failures.values())}


def _derivation_check(p: _Params, seed: int) -> dict:
    sc = p.sc
    bg = _vertical_background(p)
    base = p.get("base", [0] * sc.sig.n, list)
    if len(base) != sc.sig.n:
        raise ScenarioError(_pointer(p.path("base")), f"expected {sc.sig.n} rationals")
    try:
        base = [Fraction(str(b)) for b in base]
    except (ValueError, ZeroDivisionError):
        raise ScenarioError(_pointer(p.path("base")), "base part must be rational constants") from None
    X = sc.field_(p.get("X", required=True, kind=list), p.path("X"))
    co = p.form("co", degree=bg.degree - 1)
    D = algebroid.DerivationDatum(base, X, co)
    rep = algebroid.derivation_check(D, bg, random.Random(seed), p.count("pairs", 4))
    out = rep.to_json()
    ok = rep.agree
    expect = p.get("expect", None, bool)
    if expect is not None:
        out["matches_expected"] = rep.symbolic == expect
        ok = ok and out["matches_expected"]
    out["pass"] = ok
    return out


def _verify_moment(p: _Params, seed: int) -> dict:
    rep = coupling.verify_moment(p.need("action"), _vertical_background(p))
    return {"residuals": rep.to_json(), "pass": rep.ok}


def _minimal_coupling(p: _Params, seed: int) -> dict:
    bg = _vertical_background(p)
    cp = coupling.minimal_coupling(p.need("lie"), p.need("action"), p.need("principal"), bg)
    if bg.degree == 2:
        rep = closure.analyze_2form(cp.components, cp.connection, [])
        ext = closure.extract_2connection(cp.components, cp.connection)
    else:
        rep = closure.analyze_3form(cp.components, cp.connection, [])
        ext = closure.extract_3connection(cp.components, cp.connection)
    return {
        "connection": cp.connection.to_literal(),
        "omega_h": cp.components.omega_h.to_literal(),
        "equations": rep.to_json(),
        "higher_connection_zero": ext.all_zero,
        "pass": rep.all_zero and ext.all_zero,
    }


def _moment_cocycle(p: _Params, seed: int) -> dict:
    bg = _vertical_background(p)
    if bg.degree != 2:
        raise ScenarioError(_pointer(p.path("background")), "the cocycle is defined for a 2-form background")
    rep = coupling.moment_cocycle(p.need("lie"), p.need("action"), bg)
    out = rep.to_json()
    ok = rep.ok
    expect = p.get("expect_vanishing", None, bool)
    if expect is not None:
        out["matches_expected"] = rep.vanishes == expect
        ok = ok and out["matches_expected"]
    out["pass"] = ok
    return out


def _canonical(p: _Params, seed: int) -> dict:
    sc = p.sc
    can = coupling.canonical_2plectic(sc.connection)
    npts = p.count("points", 100)
    rep = closure.analyze_3form(can.components, can.connection, [])
    blocks_ok = can.components.alpha_h.is_zero() and can.components.phi_h.is_zero()
    Phi = assemble(can.components.total(), can.connection)
    nd = closure.fiber_nondegeneracy(Phi, random_points(can.sig, npts, seed))
    out = {"chart": list(can.sig.names), "equations": rep.to_json(), "alpha_and_phi_h_zero": blocks_ok,
           "nondegenerate_points": npts - len(nd.degenerate_points), "points": npts}
    ok = rep.all_zero and blocks_ok and nd.ok
    if "beta" in p.data:
        beta = p.form("beta", CoordForm, degree=2)
        if any(g < sc.sig.n for k, _ in beta.items() for g in k):
            raise ScenarioError(_pointer(p.path("beta")), "beta must be vertical")
        omega2 = CoordForm(can.sig, 2, dict(can.omega2_v.items()))
        pulled = can.pullback(omega2, beta)
        out["tautological"] = (pulled - beta).is_zero()
        ok = ok and out["tautological"]
    out["pass"] = ok
    return out


def _splitting(p: _Params, seed: int) -> dict:
    alg = p.need("lie")
    sub = p.get("subalgebra", required=True, kind=list)
    conv = []
    for k, s in enumerate(sub):
        if isinstance(s, int) and not isinstance(s, bool):
            if not 1 <= s <= alg.dim:
                raise ScenarioError(_pointer(p.path("subalgebra") + (k,)), "basis index out of range")
            conv.append(s - 1)
        elif isinstance(s, list) and len(s) == alg.dim:
            conv.append(s)
        else:
            raise ScenarioError(_pointer(p.path("subalgebra") + (k,)), "expected a basis index or a vector")
    rep = coupling.invariant_splitting_check(alg, conv)
    return {**rep.to_json(), "pass": rep.mixed_zero and rep.consistent}


def _holonomy(p: _Params, seed: int) -> dict:
    sc = p.sc
    omega_v = p.form("omega_v")
    alpha_h = p.form("alpha_h", degree=omega_v.degree)
    direction = p.get("direction", 1, int)
    if not 1 <= direction <= sc.sig.n:
        raise ScenarioError(_pointer(p.path("direction")), "direction out of range")
    t = float(p.get("t", 1.0, (int, float)))
    step = float(p.get("step", 1e-3, (int, float)))
    tol = float(p.get("tol", 1e-6, (int, float)))
    npts = p.count("points", 20)
    rep = holonomy_transport_check(sc.connection, omega_v, alpha_h, direction - 1, t,
                                   random_points(sc.sig, npts, seed), step=step)
    return {"max_deviation": rep.max_deviation, "steps": rep.steps, "escaped": rep.escaped,
            "pass": rep.ok and rep.max_deviation <= tol}


_RUNNERS: dict[str, tuple[Callable, set[str]]] = {
    "decompose": (_decompose, {"form", "expected"}),
    "assemble-roundtrip": (_assemble_roundtrip, {"samples"}),
    "commutation": (_commutation, {"samples", "points", "tol"}),
    "analyze-2form": (_analyze("components2"), {"components", "points"}),
    "analyze-3form": (_analyze("components3"), {"components", "points"}),
    "fiber-nondegeneracy": (_fiber_nondegeneracy, {"form", "points"}),
    "induced-connection": (_induced_connection, {"form", "expected"}),
    "gauge-shift": (_gauge_shift, {"components", "delta"}),
    "residual-basic": (_residual_basic, {"components", "expected"}),
    "invariant-solve": (_invariant_solve, {"components", "problem"}),
    "extract-2connection": (_extract2, {"components", "delta"}),
    "extract-3connection": (_extract3, {"components", "delta"}),
    "bracket-axioms": (_bracket_axioms, {"background", "sections", "random"}),
    "derivation-check": (_derivation_check, {"background", "base", "X", "co", "pairs", "expect"}),
    "verify-moment": (_verify_moment, {"background"}),
    "minimal-coupling": (_minimal_coupling, {"background"}),
    "moment-cocycle": (_moment_cocycle, {"background", "expect_vanishing"}),
    "canonical-2plectic": (_canonical, {"points", "beta"}),
    "splitting-check": (_splitting, {"subalgebra"}),
    "holonomy-transport": (_holonomy, {"omega_v", "alpha_h", "direction", "t", "step", "tol", "points"}),
}
assert set(_RUNNERS) == set(CHECKS)


def run_check(sc: Scenario, index: int, seed: int) -> dict:
    data = sc.checks[index]
    name = data["check"]
    fn, allowed = _RUNNERS[name]
    params = _Params(sc, index, data, allowed)
    try:
        result = fn(params, seed)
    except ScenarioError:
        raise
    except _RUNTIME_ERRORS as exc:
        result = {"pass": False, "error": f"{type(exc).__name__}: {exc}"}
    return {"check": name, **result}


def run_checks(sc: Scenario, seed: int = 0) -> dict:
    """Run every declared check in order; overall pass iff all checks pass."""
    results = [run_check(sc, k, seed) for k in range(len(sc.checks))]
    return {"seed": seed, "pass": all(r["pass"] for r in results), "checks": results}
