"""Closedness systems for 2- and 3-forms and the procedures built on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations, permutations
from typing import Sequence

import numpy as np

from . import linalg
from .connection import Connection, _vectorised_max, d_curvature, d_horizontal
from .expr import ChartSignature, Expr
from .forms import (
    CoordForm,
    Decomposition,
    FormError,
    VerticalField,
    _check_sig,
    d_vertical,
    exterior_derivative,
)
from .sampling import random_points

__all__ = [
    "ClosureError",
    "Components2Form",
    "Components3Form",
    "EquationResidual",
    "ClosureReport",
    "analyze_2form",
    "analyze_3form",
    "NondegeneracyReport",
    "fiber_nondegeneracy",
    "induced_connection",
    "connection_shift",
    "gauge_shift",
    "BasicResidual",
    "residual_basic_form",
    "poincare_primitive",
    "InvariantProblem",
    "InvariantSolution",
    "build_invariant_problem",
    "invariant_solve",
    "TwoConnection",
    "extract_2connection",
    "ThreeConnection",
    "extract_3connection",
]


class ClosureError(ValueError):
    pass


def _vertical_part(D: Decomposition, p: int, q: int) -> Decomposition:
    if D.bidegrees() - {(p, q)}:
        raise FormError(f"expected a ({p},{q}) block, got bidegrees {sorted(D.bidegrees())}")
    return Decomposition._raw(D.sig, p + q, dict(D.items()))


@dataclass(frozen=True)
class Components2Form:
    """omega = omega_V + alpha_H + omega_H with bidegrees (0,2), (1,1), (2,0)."""

    omega_v: Decomposition
    alpha_h: Decomposition
    omega_h: Decomposition

    def __post_init__(self):
        for blk, (p, q) in zip((self.omega_v, self.alpha_h, self.omega_h), ((0, 2), (1, 1), (2, 0))):
            _vertical_part(blk, p, q)
            _check_sig(blk.sig, self.omega_v.sig)

    @property
    def sig(self) -> ChartSignature:
        return self.omega_v.sig

    @classmethod
    def zero(cls, sig: ChartSignature) -> "Components2Form":
        z = Decomposition.zero(sig, 2)
        return cls(z, z, z)

    @classmethod
    def from_decomposition(cls, D: Decomposition) -> "Components2Form":
        if D.degree != 2 and D:
            raise FormError("need a 2-form")
        return cls(D.block(0, 2), D.block(1, 1), D.block(2, 0))

    def total(self) -> Decomposition:
        return self.omega_v + self.alpha_h + self.omega_h

    def blocks(self) -> dict[str, Decomposition]:
        return {"omega_v": self.omega_v, "alpha_h": self.alpha_h, "omega_h": self.omega_h}


@dataclass(frozen=True)
class Components3Form:
    """Phi = Phi_V + alpha*_H + omega*_H + Phi_H with bidegrees (0,3), (1,2), (2,1), (3,0)."""

    phi_v: Decomposition
    alpha_h: Decomposition
    omega_h: Decomposition
    phi_h: Decomposition

    def __post_init__(self):
        pairs = ((self.phi_v, (0, 3)), (self.alpha_h, (1, 2)), (self.omega_h, (2, 1)), (self.phi_h, (3, 0)))
        for blk, (p, q) in pairs:
            _vertical_part(blk, p, q)
            _check_sig(blk.sig, self.phi_v.sig)

    @property
    def sig(self) -> ChartSignature:
        return self.phi_v.sig

    @classmethod
    def zero(cls, sig: ChartSignature) -> "Components3Form":
        z = Decomposition.zero(sig, 3)
        return cls(z, z, z, z)

    @classmethod
    def from_decomposition(cls, D: Decomposition) -> "Components3Form":
        if D.degree != 3 and D:
            raise FormError("need a 3-form")
        return cls(D.block(0, 3), D.block(1, 2), D.block(2, 1), D.block(3, 0))

    def total(self) -> Decomposition:
        return self.phi_v + self.alpha_h + self.omega_h + self.phi_h

    def blocks(self) -> dict[str, Decomposition]:
        return {"phi_v": self.phi_v, "alpha_h": self.alpha_h, "omega_h": self.omega_h, "phi_h": self.phi_h}


# analyzers ---------------------------------------------------------------


@dataclass
class EquationResidual:
    equation: str
    residual: Decomposition
    numeric_max: float

    @property
    def zero(self) -> bool:
        return self.residual.is_zero()

    def to_json(self) -> dict:
        return {
            "equation": self.equation,
            "residual_zero": self.zero,
            "residual_terms": self.residual.to_literal(),
            "numeric_max": self.numeric_max,
        }


@dataclass
class ClosureReport:
    equations: list[EquationResidual]

    @property
    def all_zero(self) -> bool:
        return all(e.zero for e in self.equations)

    def __getitem__(self, name: str) -> EquationResidual:
        for e in self.equations:
            if e.equation == name:
                return e
        raise KeyError(name)

    def to_json(self) -> list[dict]:
        return [e.to_json() for e in self.equations]


def _ops(conn: Connection):
    return {
        "V": d_vertical,
        "H": lambda D: d_horizontal(D, conn),
        "C": lambda D: d_curvature(D, conn),
    }


def _analyze(table, blocks, conn, points) -> ClosureReport:
    ops = _ops(conn)
    out = []
    for name, parts in table:
        terms = [ops[op](blocks[b]) for op, b in parts]
        residual = terms[0]
        for t in terms[1:]:
            residual = residual + t
        out.append(EquationResidual(name, residual, _vectorised_max(terms, points)))
    return ClosureReport(out)


_TABLE2 = (
    ("closed2:1", (("V", "omega_v"),)),
    ("closed2:2", (("H", "omega_v"), ("V", "alpha_h"))),
    ("closed2:3", (("C", "omega_v"), ("H", "alpha_h"), ("V", "omega_h"))),
    ("closed2:4", (("C", "alpha_h"), ("H", "omega_h"))),
)

_TABLE3 = (
    ("phi:closed1", (("V", "phi_v"),)),
    ("phi:closed2", (("H", "phi_v"), ("V", "alpha_h"))),
    ("phi:closed3", (("C", "phi_v"), ("H", "alpha_h"), ("V", "omega_h"))),
    ("phi:closed4", (("C", "alpha_h"), ("H", "omega_h"), ("V", "phi_h"))),
    ("phi:closed5", (("C", "omega_h"), ("H", "phi_h"))),
)


def _default_points(sig, points, seed=0):
    if points is None:
        return random_points(sig, 20, seed)
    return np.asarray(points, dtype=float)


def analyze_2form(comps: Components2Form, conn: Connection, points=None) -> ClosureReport:
    """Residuals of the four equations equivalent to d omega = 0."""
    _check_sig(comps.sig, conn.sig)
    return _analyze(_TABLE2, comps.blocks(), conn, _default_points(conn.sig, points))


def analyze_3form(comps: Components3Form, conn: Connection, points=None) -> ClosureReport:
    """Residuals of the five equations equivalent to d Phi = 0."""
    _check_sig(comps.sig, conn.sig)
    return _analyze(_TABLE3, comps.blocks(), conn, _default_points(conn.sig, points))


# fibre non-degeneracy ----------------------------------------------------


def _unit(sig: ChartSignature, g: int) -> list[Expr]:
    return [Expr.const(sig, int(k == g)) for k in range(len(sig.names))]


@dataclass
class NondegeneracyReport:
    degree: int
    nondegenerate: list[bool]
    determinant: str | None = None
    ranks: list[tuple[int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(self.nondegenerate)

    @property
    def degenerate_points(self) -> list[int]:
        return [i for i, ok in enumerate(self.nondegenerate) if not ok]


def _vertical_matrix(F) -> list[list[Expr]]:
    sig = F.sig
    n, m = sig.n, sig.m
    return [[F.evaluate_on([_unit(sig, n + a), _unit(sig, n + b)]) for b in range(m)] for a in range(m)]


def _eta_rows(F) -> tuple[list[list[Expr]], list[list[Expr]]]:
    """Rows of w -> i_w Phi restricted to Lambda^2 V, for w = d/dy_l and w = d/dx_i."""
    sig = F.sig
    n, m = sig.n, sig.m
    pairs = list(combinations(range(m), 2))

    def row(g):
        return [F.evaluate_on([_unit(sig, g), _unit(sig, n + a), _unit(sig, n + b)]) for a, b in pairs]

    return [row(n + l) for l in range(m)], [row(i) for i in range(n)]


def _numeric_rank(mat: np.ndarray, tol: float = 1e-9) -> int:
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    return int((s > tol * max(1.0, s[0] if s.size else 0.0)).sum())


def fiber_nondegeneracy(F, points, tol: float = 1e-9) -> NondegeneracyReport:
    """Pointwise non-degeneracy of the fiber restriction of a 2-form or 3-form."""
    pts = np.asarray(points, dtype=float)
    if F.degree == 2:
        W = _vertical_matrix(F)
        detW = linalg.det(W)
        fn = detW.compile(np) if isinstance(detW, Expr) else (lambda p: float(detW))
        vals = np.broadcast_to(np.asarray(fn(pts.T), dtype=float), (len(pts),))
        return NondegeneracyReport(2, [bool(abs(v) > tol) for v in vals], determinant=str(detW))
    if F.degree == 3:
        vrows, hrows = _eta_rows(F)
        m = F.sig.m
        vfns = [[c.compile(np) for c in r] for r in vrows]
        hfns = [[c.compile(np) for c in r] for r in hrows]
        flags, ranks = [], []
        for p in pts:
            V = np.array([[f(p) for f in r] for r in vfns], dtype=float).reshape(m, -1)
            H = np.array([[f(p) for f in r] for r in hfns], dtype=float).reshape(len(hfns), -1)
            rv = _numeric_rank(V, tol)
            rfull = _numeric_rank(np.vstack([V, H]), tol)
            ranks.append((rv, rfull))
            # i) injective on V; ii) every eta(d_i) lies in eta(V), i.e. ker eta + V = TM
            flags.append(rv == m and rfull == rv)
        return NondegeneracyReport(3, flags, ranks=ranks)
    raise ClosureError("fiber non-degeneracy is defined for degree 2 or 3")


# induced connection ------------------------------------------------------


def _constant_inverse(W: list[list[Expr]], what: str):
    detW = linalg.det(W)
    if isinstance(detW, Expr):
        if detW.is_zero():
            raise ClosureError(f"singular {what}: determinant vanishes identically")
        if not detW.is_constant():
            raise ClosureError(
                f"{what} has non-constant determinant {detW}; its inverse leaves the expression class"
            )
        dval = detW.constant_value()
    else:
        dval = Fraction(detW)
        if dval == 0:
            raise ClosureError(f"singular {what}: determinant 0")
    adj = linalg.adjugate(W)
    return [[c * (1 / dval) for c in row] for row in adj]


def _is_zero_det(M) -> bool:
    d = linalg.det(M)
    return d.is_zero() if isinstance(d, Expr) else d == 0


def induced_connection(F: CoordForm) -> Connection:
    """Connection whose horizontal space is the annihilator of the fibers.

    Degree 2: Hor = Ver^perp, i.e. F(d_i + a_i, d/dy_j) = 0.
    Degree 3: Hor = ker eta, i.e. i_{d_i + a_i} F vanishes on Lambda^2 V.
    """
    sig = F.sig
    n, m = sig.n, sig.m
    if F.degree == 2:
        W = _vertical_matrix(F)
        mixed = [[F.evaluate_on([_unit(sig, i), _unit(sig, n + j)]) for j in range(m)] for i in range(n)]
        if all(not c for row in mixed for c in row):
            # no mixed terms: a = 0 whenever the fibers are generically symplectic
            if _is_zero_det(W):
                raise ClosureError("singular vertical matrix: determinant vanishes identically")
            return Connection.flat(sig)
        Winv = _constant_inverse(W, "vertical matrix")
        fields = []
        for i in range(n):
            b = mixed[i]
            comps = []
            for l in range(m):
                acc = Expr.const(sig, 0)
                for j in range(m):
                    acc = acc - b[j] * Winv[j][l]
                comps.append(acc)
            fields.append(VerticalField(sig, comps))
        return Connection(sig, fields)
    if F.degree == 3:
        vrows, hrows = _eta_rows(F)
        ncol = len(vrows[0]) if vrows else 0
        if all(not c for row in hrows for c in row):
            if all(_is_zero_det([[vrows[l][c] for c in cols] for l in range(m)])
                   for cols in combinations(range(ncol), m)):
                raise ClosureError("eta restricted to V is nowhere injective")
            return Connection.flat(sig)
        for cols in combinations(range(ncol), m):
            sub = [[vrows[l][c] for c in cols] for l in range(m)]
            d = linalg.det(sub)
            if isinstance(d, Expr) and d.is_constant() and not d.is_zero():
                break
        else:
            raise ClosureError("no constant invertible minor of eta restricted to V (condition i fails)")
        # sum_l a^l E[l][c] = -e_i[c]  ->  a = -e_i[cols] E[cols]^{-1}
        Einv = _constant_inverse(sub, "eta minor")
        fields = []
        for i in range(n):
            comps = []
            for l in range(m):
                acc = Expr.const(sig, 0)
                for r, c in enumerate(cols):
                    acc = acc - hrows[i][c] * Einv[r][l]
                comps.append(acc)
            for c in range(ncol):
                check = hrows[i][c]
                for l in range(m):
                    check = check + comps[l] * vrows[l][c]
                if not check.is_zero():
                    raise ClosureError(f"eta system inconsistent for d_{i + 1} (condition ii fails)")
            fields.append(VerticalField(sig, comps))
        return Connection(sig, fields)
    raise ClosureError("induced connections are defined for degree 2 or 3")


# shifts ------------------------------------------------------------------


def _components_of_block(D: Decomposition, p_index: int):
    """alpha_i^a for a (1,1) block: {(i, a): coeff}."""
    n = D.sig.n
    return {(key[0], key[1] - n): c for key, c in D.items()}


def connection_shift(conn: Connection, alpha_h: Decomposition, omega_v: Decomposition):
    """Shift the connection by Delta with omega_V(., Delta_i) = alpha_H(d_i).

    Returns ``(conn', correction)``.  If (alpha_H, omega_H) solve the first three
    closedness equations for ``conn`` then (omega_V, 0, omega_H + correction)
    solves them for ``conn'``; the correction is sum_{k<l} omega_V(Delta_l, Delta_k) dx_k^dx_l.
    """
    sig = conn.sig
    n, m = sig.n, sig.m
    _vertical_part(alpha_h, 1, 1)
    _vertical_part(omega_v, 0, 2)
    if not d_vertical(alpha_h).is_zero():
        raise ClosureError("alpha_H is not vertically closed")
    W = _vertical_matrix(omega_v)
    Winv = _constant_inverse(W, "omega_V")
    alpha = _components_of_block(alpha_h, 1)
    zero = Expr.const(sig, 0)
    deltas = []
    for i in range(n):
        comps = []
        for b in range(m):
            acc = zero
            for a in range(m):
                acc = acc + Winv[b][a] * alpha.get((i, a), zero)
            comps.append(acc)
        deltas.append(VerticalField(sig, comps))
    new_conn = Connection(sig, [a + d for a, d in zip(conn.a, deltas)])
    terms = {}
    for k, l in combinations(range(n), 2):
        val = omega_v.evaluate_on([deltas[l].as_vector(), deltas[k].as_vector()])
        if val:
            terms[(k, l)] = val
    return new_conn, Decomposition(sig, 2, terms)


def gauge_shift(comps, delta: Decomposition, conn: Connection):
    """Add (d^V Delta, d^H Delta, d^C Delta) blockwise."""
    if isinstance(comps, Components2Form):
        _vertical_part(delta, 0, 1)
        return Components2Form(
            comps.omega_v + d_vertical(delta),
            comps.alpha_h + d_horizontal(delta, conn),
            comps.omega_h + d_curvature(delta, conn),
        )
    if isinstance(comps, Components3Form):
        _vertical_part(delta, 0, 2)
        return Components3Form(
            comps.phi_v + d_vertical(delta),
            comps.alpha_h + d_horizontal(delta, conn),
            comps.omega_h + d_curvature(delta, conn),
            comps.phi_h,
        )
    raise ClosureError("gauge shifts act on Components2Form or Components3Form")


# basic residual ----------------------------------------------------------


@dataclass
class BasicResidual:
    phi: CoordForm
    closed: bool


def residual_basic_form(comps, conn: Connection, points=None) -> BasicResidual:
    """The last closedness residual, returned as a closed form on the base."""
    report = analyze_2form(comps, conn, points) if isinstance(comps, Components2Form) else analyze_3form(
        comps, conn, points)
    *earlier, last = report.equations
    failing = [e.equation for e in earlier if not e.zero]
    if failing:
        raise ClosureError(f"earlier equations not satisfied: {', '.join(failing)}")
    sig = conn.sig
    for key, c in last.residual.items():
        for j in range(sig.m):
            dc = c.diff(sig.n + j)
            if dc:
                raise ClosureError(
                    f"residual not basic: d/d{sig.fiber_names[j]} of coefficient {key} is {dc}")
    phi = CoordForm._raw(sig, last.residual.degree, dict(last.residual.items()))
    return BasicResidual(phi, exterior_derivative(phi).is_zero())


def poincare_primitive(phi: CoordForm) -> CoordForm:
    """Homotopy-operator primitive of a closed polynomial base form (centre 0)."""
    sig = phi.sig
    n = sig.n
    out = CoordForm.zero(sig, max(phi.degree - 1, 0))
    if phi.degree == 0:
        raise ClosureError("0-forms have no primitive")
    for key, c in phi.items():
        if any(g >= n for g in key):
            raise ClosureError("primitive is only computed for base forms")
        if not c.is_polynomial() or any(i >= n for i in c.free_indices()):
            raise ClosureError("primitive needs polynomial coefficients in base variables")
        for (exps, _), coeff in c.terms():
            weight = Fraction(1, sum(exps) + phi.degree)
            mono = Expr.const(sig, coeff * weight)
            for i, e in enumerate(exps):
                if e:
                    mono = mono * Expr.var(sig, i) ** e
            for s, g in enumerate(key):
                rest = key[:s] + key[s + 1:]
                term = mono * Expr.var(sig, g)
                if s % 2:
                    term = -term
                out = out + CoordForm._raw(sig, phi.degree - 1, {rest: term})
    return out


# invariant complex -------------------------------------------------------


_PROBLEMS = {
    # kind: (known blocks, unknowns [(name, p, q)], equation bidegree, terms [(op, block)])
    "closed2:3": (("omega_v",), (("alpha_h", 1, 1), ("omega_h", 2, 0)), (2, 1),
                  (("C", "omega_v"), ("H", "alpha_h"), ("V", "omega_h"))),
    "phi:closed3": (("phi_v",), (("alpha_h", 1, 2), ("omega_h", 2, 1)), (2, 2),
                    (("C", "phi_v"), ("H", "alpha_h"), ("V", "omega_h"))),
    "phi:closed4": (("alpha_h", "omega_h"), (("phi_h", 3, 0),), (3, 1),
                    (("C", "alpha_h"), ("H", "omega_h"), ("V", "phi_h"))),
}


@dataclass
class InvariantProblem:
    """Restricted equation  M x = rhs  on constant-coefficient blocks."""

    kind: str
    sig: ChartSignature
    unknowns: list[tuple[str, tuple]]
    equations: list[tuple]
    matrix: list[list[Fraction]]
    rhs: list[Fraction]
    torus: bool

    def __post_init__(self):
        if len(self.matrix) != len(self.equations) or len(self.rhs) != len(self.equations):
            raise ClosureError("problem matrix rows do not match the equation space")
        if any(len(r) != len(self.unknowns) for r in self.matrix):
            raise ClosureError("problem matrix columns do not match the unknowns")


@dataclass
class InvariantSolution:
    feasible: bool
    solution: dict[str, Decomposition] | None
    certificate: dict[tuple, Fraction] | None
    pairing: Fraction | None

    def to_json(self) -> dict:
        out: dict = {"feasible": self.feasible, "subcomplex": "constant-coefficient (invariant)"}
        if self.solution is not None:
            out["solution"] = {k: v.to_literal() for k, v in self.solution.items()}
        if self.certificate is not None:
            out["certificate"] = [
                {"dx": [i + 1 for i in I], "dy": [j + 1 for j in J], "value": str(v)}
                for (I, J), v in self.certificate.items()
            ]
            out["pairing"] = str(self.pairing)
        return out


def _keys(sig, p, q):
    n = sig.n
    return [I + tuple(n + j for j in J) for I in combinations(range(n), p) for J in combinations(range(sig.m), q)]


def _constant_vector(D: Decomposition, keys, what: str) -> list[Fraction]:
    vec = []
    index = set(keys)
    for key, c in D.items():
        if key not in index:
            raise ClosureError(f"{what} leaves the expected block")
        if not c.is_constant():
            raise ClosureError(f"{what} has non-constant coefficient {c}; the operator does not preserve "
                               "constant-coefficient blocks")
    coeffs = dict(D.items())
    for key in keys:
        c = coeffs.get(key)
        vec.append(c.constant_value() if c is not None else Fraction(0))
    return vec


def build_invariant_problem(kind: str, known: dict[str, Decomposition], conn: Connection) -> InvariantProblem:
    """Matrices of the restricted operators for one obstruction equation."""
    if kind not in _PROBLEMS:
        raise ClosureError(f"unknown invariant problem {kind!r}")
    known_names, unknowns, (ep, eq), terms = _PROBLEMS[kind]
    sig = conn.sig
    ops = _ops(conn)
    eq_keys = _keys(sig, ep, eq)
    rhs = [Fraction(0)] * len(eq_keys)
    for op, name in terms:
        if name in known_names:
            blk = known.get(name)
            if blk is None:
                raise ClosureError(f"problem {kind} needs block {name!r}")
            for key, c in blk.items():
                if not c.is_constant():
                    raise ClosureError(f"block {name} is not constant-coefficient")
            img = _constant_vector(ops[op](blk), eq_keys, f"d^{op} {name}")
            rhs = [r - v for r, v in zip(rhs, img)]
    columns, labels = [], []
    op_for = {name: op for op, name in terms}
    one = Expr.const(sig, 1)
    for name, p, q in unknowns:
        for key in _keys(sig, p, q):
            basis = Decomposition._raw(sig, p + q, {key: one})
            columns.append(_constant_vector(ops[op_for[name]](basis), eq_keys, f"d^{op_for[name]} on {name}"))
            labels.append((name, key))
    matrix = [[col[r] for col in columns] for r in range(len(eq_keys))]
    return InvariantProblem(kind, sig, labels, eq_keys, matrix, rhs, all(sig.periodic))


def invariant_solve(problem: InvariantProblem) -> InvariantSolution:
    """Exact solve, or a cokernel functional certifying infeasibility."""
    sig = problem.sig
    x = linalg.solve(problem.matrix, problem.rhs) if problem.unknowns else (
        [] if all(r == 0 for r in problem.rhs) else None)
    if x is not None:
        sol: dict[str, dict] = {}
        for (name, key), v in zip(problem.unknowns, x):
            sol.setdefault(name, {})
            if v:
                sol[name][key] = Expr.const(sig, v)
        degrees = {name: len(key) for name, key in problem.unknowns}
        return InvariantSolution(
            True,
            {name: Decomposition(sig, degrees[name], terms) for name, terms in sol.items()},
            None,
            None,
        )
    matrix = problem.matrix if problem.unknowns else [[] for _ in problem.rhs]
    y = linalg.cokernel_certificate(matrix, problem.rhs)
    cert = {}
    for key, v in zip(problem.equations, y):
        if v:
            I = tuple(g for g in key if g < sig.n)
            J = tuple(g - sig.n for g in key if g >= sig.n)
            cert[(I, J)] = v
    pairing = sum(a * b for a, b in zip(y, problem.rhs))
    return InvariantSolution(False, None, cert, pairing)


# 2- and 3-connections ----------------------------------------------------


def _value(D: Decomposition, I: tuple) -> Decomposition:
    """The vertical form D(d_I) of a (p, q) block at base multi-index I."""
    p = len(I)
    return Decomposition._raw(D.sig, D.degree - p, {key[p:]: c for key, c in D.items() if key[:p] == I})


def _base_coefficient(D: Decomposition, I: tuple) -> Expr:
    return dict(D.items()).get(I, Expr.const(D.sig, 0))


def _x_dependence(D: Decomposition):
    for key, c in D.items():
        for i in range(D.sig.n):
            dc = c.diff(i)
            if dc:
                return key, i, dc
    return None


def _cyclic(indices):
    i, j, k = indices
    return ((i, j, k), (j, k, i), (k, i, j))


@dataclass
class PairResidual:
    """A residual valued in pairs (vertical field, vertical form or function)."""

    field: VerticalField
    value: object

    @property
    def zero(self) -> bool:
        v = self.value
        return self.field.is_zero() and (v.is_zero() if hasattr(v, "is_zero") else v == 0)

    def to_json(self) -> dict:
        v = self.value
        return {
            "field": [str(c) for c in self.field.components],
            "value": v.to_literal() if hasattr(v, "to_literal") else str(v),
        }


@dataclass
class TwoConnection:
    """A = (a, alpha'), B = (C, b) with structural residuals."""

    omega_f: Decomposition
    A: dict[int, tuple[VerticalField, Decomposition]]
    B: dict[tuple, tuple[VerticalField, Expr]]
    fake_curvature: dict[tuple, PairResidual]
    curvature3: dict[tuple, PairResidual]

    @property
    def fake_zero(self) -> bool:
        return all(r.zero for r in self.fake_curvature.values())

    @property
    def curvature3_zero(self) -> bool:
        return all(r.zero for r in self.curvature3.values())

    @property
    def all_zero(self) -> bool:
        return self.fake_zero and self.curvature3_zero

    def curvature3_form(self) -> CoordForm:
        """Function part of the curvature 3-form as a form on the chart."""
        sig = self.omega_f.sig
        terms = {key: r.value for key, r in self.curvature3.items() if r.value}
        return CoordForm(sig, 3, terms)


def extract_2connection(comps: Components2Form, conn: Connection, delta: Decomposition | None = None
                        ) -> TwoConnection:
    sig = conn.sig
    n = sig.n
    if delta is None:
        delta = Decomposition.zero(sig, 1)
    shifted = gauge_shift(comps, delta, conn)
    bad = _x_dependence(shifted.omega_v)
    if bad:
        key, i, dc = bad
        raise ClosureError(f"shifted omega_V depends on {sig.base_names[i]}: derivative {dc} at {key}")
    omega_f = shifted.omega_v
    curv = conn.curvature()
    A = {i: (conn.a[i], _value(shifted.alpha_h, (i,))) for i in range(n)}
    B = {(i, j): (curv(i, j), _base_coefficient(shifted.omega_h, (i, j))) for i, j in combinations(range(n), 2)}

    fake = {}
    for i, j in combinations(range(n), 2):
        ai, alpha_i = A[i]
        aj, alpha_j = A[j]
        C, b = B[(i, j)]
        first = aj.partial(i) - ai.partial(j) + ai.bracket(aj) - C
        second = (alpha_j.partial(i) - alpha_i.partial(j) + alpha_j.lie_vertical(ai) - alpha_i.lie_vertical(aj)
                  - (omega_f.interior(C) - _scalar_form(b).fiber_d()))
        fake[(i, j)] = PairResidual(first, second)

    curv3 = {}
    for triple in combinations(range(n), 3):
        first = VerticalField.zero(sig)
        second = Expr.const(sig, 0)
        for a, b, k in _cyclic(triple):
            key = tuple(sorted((a, b)))
            sign = 1 if (a, b) == key else -1
            C, f = B[key]
            C, f = (C, f) if sign > 0 else (-C, -f)
            ak, alpha_k = A[k]
            first = first + C.partial(k) + ak.bracket(C)
            second = second + f.diff(k) + ak(f) + _pair(alpha_k, C)
        curv3[triple] = PairResidual(first, second)
    return TwoConnection(omega_f, A, B, fake, curv3)


def _scalar_form(f: Expr) -> Decomposition:
    return Decomposition._raw(f.sig, 0, {(): f} if f else {})


def _pair(alpha: Decomposition, X: VerticalField) -> Expr:
    """alpha(X) for a vertical 1-form."""
    contracted = alpha.interior(X)
    return dict(contracted.items()).get((), Expr.const(X.sig, 0))


@dataclass
class ThreeConnection:
    phi_f: Decomposition
    a: dict[int, tuple[VerticalField, Decomposition]]
    m: dict[tuple, tuple[VerticalField, Decomposition]]
    theta: dict[tuple, Expr]
    fake_curvature: dict[tuple, PairResidual]
    structure: dict[tuple, PairResidual]
    curvature4: dict[tuple, Expr]

    @property
    def all_zero(self) -> bool:
        return (all(r.zero for r in self.fake_curvature.values())
                and all(r.zero for r in self.structure.values())
                and all(not v for v in self.curvature4.values()))


def _perm_sign(seq) -> int:
    sign = 1
    s = list(seq)
    for a in range(len(s)):
        for b in range(a + 1, len(s)):
            if s[a] > s[b]:
                sign = -sign
    return sign


def extract_3connection(comps: Components3Form, conn: Connection, delta: Decomposition | None = None
                        ) -> ThreeConnection:
    sig = conn.sig
    n = sig.n
    if delta is None:
        delta = Decomposition.zero(sig, 2)
    shifted = gauge_shift(comps, delta, conn)
    bad = _x_dependence(shifted.phi_v)
    if bad:
        key, i, dc = bad
        raise ClosureError(f"shifted Phi_V depends on {sig.base_names[i]}: derivative {dc} at {key}")
    phi_f = shifted.phi_v
    curv = conn.curvature()
    a = {i: (conn.a[i], _value(shifted.alpha_h, (i,))) for i in range(n)}
    mm = {(i, j): (curv(i, j), _value(shifted.omega_h, (i, j))) for i, j in combinations(range(n), 2)}
    theta = {I: _base_coefficient(shifted.phi_h, I) for I in combinations(range(n), 3)}

    fake = {}
    for i, j in combinations(range(n), 2):
        ai, al_i = a[i]
        aj, al_j = a[j]
        C, w = mm[(i, j)]
        curv_field = aj.partial(i) - ai.partial(j) + ai.bracket(aj)
        curv_form = al_j.partial(i) - al_i.partial(j) + al_j.lie_vertical(ai) - al_i.lie_vertical(aj)
        fake[(i, j)] = PairResidual(C - curv_field, phi_f.interior(C) - w.fiber_d() - curv_form)

    structure = {}
    for triple in combinations(range(n), 3):
        first = VerticalField.zero(sig)
        second = Decomposition.zero(sig, 1)
        for p, q, k in _cyclic(triple):
            key = tuple(sorted((p, q)))
            C, w = mm[key]
            if (p, q) != key:
                C, w = -C, -w
            ak, al_k = a[k]
            first = first + C.partial(k) + ak.bracket(C)
            second = second + w.partial(k) + w.lie_vertical(ak) + al_k.interior(C)
        second = second - _scalar_form(theta[triple]).fiber_d()
        structure[triple] = PairResidual(first, second)

    curv4 = {}
    for quad in combinations(range(n), 4):
        total = Expr.const(sig, 0)
        for s, g in enumerate(quad):
            rest = quad[:s] + quad[s + 1:]
            term = conn.horizontal_derivative(g, theta[rest])
            total = total + (term if s % 2 == 0 else -term)
        for pa in combinations(quad, 2):
            pc = tuple(x for x in quad if x not in pa)
            C, _ = mm[pa]
            _, w = mm[pc]
            total = total - _pair(w, C) * _perm_sign(pa + pc)
        curv4[quad] = total
    return ThreeConnection(phi_f, a, mm, theta, fake, structure, curv4)
