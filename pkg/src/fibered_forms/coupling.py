"""Coupling constructions: minimal coupling, moment cocycles, canonical 2-plectic fibrations."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Sequence

from . import linalg
from .closure import Components2Form, Components3Form, _constant_inverse, _vertical_matrix
from .connection import Connection, d_curvature, d_horizontal
from .expr import ChartSignature, Expr
from .forms import CoordForm, Decomposition, VerticalField, _check_sig, d_vertical, exterior_derivative

__all__ = [
    "CouplingError",
    "LieAlgebraData",
    "ActionData",
    "PrincipalConnectionData",
    "verify_moment",
    "MomentReport",
    "minimal_coupling",
    "Coupling",
    "poisson_bracket",
    "moment_cocycle",
    "CocycleReport",
    "canonical_2plectic",
    "Canonical2Plectic",
    "invariant_splitting_check",
    "SplittingReport",
]


class CouplingError(ValueError):
    pass


def _q(v) -> Fraction:
    return Fraction(str(v)) if isinstance(v, str) else Fraction(v)


@dataclass(frozen=True)
class LieAlgebraData:
    """Structure constants c[k][i][j] = c^k_ij, so [e_i, e_j] = sum_k c^k_ij e_k."""

    dim: int
    c: tuple
    g: tuple | None = None

    def __post_init__(self):
        d = self.dim
        c = tuple(tuple(tuple(_q(v) for v in row) for row in mat) for mat in self.c)
        object.__setattr__(self, "c", c)
        if len(c) != d or any(len(mat) != d or any(len(r) != d for r in mat) for mat in c):
            raise CouplingError("structure constants must be d x d x d")
        for k in range(d):
            for i in range(d):
                for j in range(d):
                    if c[k][i][j] != -c[k][j][i]:
                        raise CouplingError("structure constants are not antisymmetric")
        if any(v != 0 for v in self.jacobi_residual()):
            raise CouplingError("structure constants violate the Jacobi identity")
        if self.g is not None:
            g = tuple(tuple(_q(v) for v in row) for row in self.g)
            object.__setattr__(self, "g", g)
            if len(g) != d or any(len(r) != d for r in g):
                raise CouplingError("invariant product must be d x d")
            if any(g[a][b] != g[b][a] for a in range(d) for b in range(d)):
                raise CouplingError("invariant product is not symmetric")
            for x in range(d):
                for y in range(d):
                    for z in range(d):
                        val = self.product(self.bracket_basis(x, y), _e(d, z)) + self.product(
                            _e(d, y), self.bracket_basis(x, z))
                        if val != 0:
                            raise CouplingError("product is not ad-invariant")

    @classmethod
    def from_literal(cls, data: dict) -> "LieAlgebraData":
        d = int(data["dim"])
        c = [[[Fraction(0)] * d for _ in range(d)] for _ in range(d)]
        for i, j, k, v in data.get("c", []):
            val = _q(v)
            c[k - 1][i - 1][j - 1] = val
            c[k - 1][j - 1][i - 1] = -val
        return cls(d, c, data.get("g"))

    @classmethod
    def abelian(cls, d: int, g=None) -> "LieAlgebraData":
        return cls(d, [[[0] * d for _ in range(d)] for _ in range(d)], g)

    def bracket(self, u: Sequence[Fraction], v: Sequence[Fraction]) -> list[Fraction]:
        d = self.dim
        return [sum((self.c[k][i][j] * u[i] * v[j] for i in range(d) for j in range(d)), Fraction(0))
                for k in range(d)]

    def bracket_basis(self, i: int, j: int) -> list[Fraction]:
        return [self.c[k][i][j] for k in range(self.dim)]

    def product(self, u, v) -> Fraction:
        if self.g is None:
            raise CouplingError("no invariant product given")
        d = self.dim
        return sum((self.g[a][b] * u[a] * v[b] for a in range(d) for b in range(d)), Fraction(0))

    def jacobi_residual(self) -> list[Fraction]:
        d = self.dim
        out = []
        for i, j, k in combinations(range(d), 3):
            e = lambda a: _e(d, a)  # noqa: E731
            t = [Fraction(0)] * d
            for a, b, cc in ((i, j, k), (j, k, i), (k, i, j)):
                v = self.bracket(self.bracket(e(a), e(b)), e(cc))
                t = [x + y for x, y in zip(t, v)]
            out.extend(t)
        return out

    def to_json(self) -> dict:
        d = self.dim
        entries = [[i + 1, j + 1, k + 1, str(self.c[k][i][j])]
                   for i, j in combinations(range(d), 2) for k in range(d) if self.c[k][i][j]]
        out = {"dim": d, "c": entries}
        if self.g is not None:
            out["g"] = [[str(v) for v in r] for r in self.g]
        return out


def _e(d: int, a: int) -> list[Fraction]:
    return [Fraction(int(k == a)) for k in range(d)]


@dataclass(frozen=True)
class ActionData:
    """Infinitesimal action rho(e_b) and moment data J(e_b) (functions or vertical 1-forms)."""

    rho: tuple
    J: tuple

    def __post_init__(self):
        object.__setattr__(self, "rho", tuple(self.rho))
        object.__setattr__(self, "J", tuple(self.J))
        if len(self.rho) != len(self.J):
            raise CouplingError("rho and J need one entry per basis element")

    @property
    def dim(self) -> int:
        return len(self.rho)

    def convention_residual(self, alg: LieAlgebraData) -> list[VerticalField]:
        """[rho(e_a), rho(e_b)] + rho([e_a, e_b]); zero for an anti-homomorphism."""
        d = alg.dim
        out = []
        for a, b in combinations(range(d), 2):
            r = self.rho[a].bracket(self.rho[b])
            for k, ck in enumerate(alg.bracket_basis(a, b)):
                if ck:
                    r = r + self.rho[k] * ck
            out.append(r)
        return out

    def is_antihomomorphism(self, alg: LieAlgebraData) -> bool:
        return all(r.is_zero() for r in self.convention_residual(alg))


@dataclass(frozen=True)
class PrincipalConnectionData:
    """Local connection form A = sum_i A_i^b dx_i (x) e_b with base-only coefficients."""

    A: tuple

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.A)
        object.__setattr__(self, "A", rows)
        for r in rows:
            for c in r:
                sig = c.sig
                if any(i >= sig.n for i in c.free_indices()):
                    raise CouplingError(f"connection coefficient {c} depends on fiber variables")

    def curvature(self, alg: LieAlgebraData) -> dict[tuple, list[Expr]]:
        """omega_theta(d_i, d_j)^b = d_i A_j^b - d_j A_i^b + c^b_cd A_i^c A_j^d."""
        n = len(self.A)
        d = alg.dim
        out = {}
        for i, j in combinations(range(n), 2):
            comps = []
            for b in range(d):
                v = self.A[j][b].diff(i) - self.A[i][b].diff(j)
                for c1 in range(d):
                    for c2 in range(d):
                        k = alg.c[b][c1][c2]
                        if k:
                            v = v + self.A[i][c1] * self.A[j][c2] * k
                comps.append(v)
            out[(i, j)] = comps
        return out


# moment maps -------------------------------------------------------------


def _fn(f: Expr) -> Decomposition:
    return Decomposition._raw(f.sig, 0, {(): f} if f else {})


def _as_form(J) -> Decomposition:
    return _fn(J) if isinstance(J, Expr) else J


@dataclass
class MomentReport:
    residuals: list[Decomposition]

    @property
    def ok(self) -> bool:
        return all(r.is_zero() for r in self.residuals)

    def to_json(self) -> list[dict]:
        return [{"basis": b + 1, "residual_zero": r.is_zero(), "residual_terms": r.to_literal()}
                for b, r in enumerate(self.residuals)]


def verify_moment(act: ActionData, background: Decomposition) -> MomentReport:
    """Residuals -i_{rho(e_b)} background - d J(e_b)."""
    out = []
    for rho, J in zip(act.rho, act.J):
        _check_sig(rho.sig, background.sig)
        Jf = _as_form(J)
        if Jf.degree != background.degree - 2 and Jf:
            raise CouplingError("moment data has the wrong degree for this background")
        out.append(-background.interior(rho) - Jf.fiber_d())
    return MomentReport(out)


@dataclass
class Coupling:
    connection: Connection
    components: Components2Form | Components3Form
    omega_theta: dict


def minimal_coupling(alg: LieAlgebraData, act: ActionData, pc: PrincipalConnectionData,
                     background: Decomposition) -> Coupling:
    """Connection a_i = -sum_b A_i^b rho(e_b) and omega_H = <J, omega_theta>.

    With a 2-form background the result is (omega_F, 0, <J, omega_theta>); with
    a 3-form background and 1-form valued J it is (Phi_F, 0, <J, omega_theta>, 0).
    """
    sig = background.sig
    if alg.dim != act.dim or any(len(r) != alg.dim for r in pc.A) or len(pc.A) != sig.n:
        raise CouplingError("dimension mismatch between algebra, action and connection data")
    if not verify_moment(act, background).ok:
        raise CouplingError("moment map verification failed")
    if not act.is_antihomomorphism(alg):
        raise CouplingError("rho is not an anti-homomorphism for the given structure constants")
    for key, c in background.items():
        if any(i < sig.n for i in c.free_indices()):
            raise CouplingError("background fiber form depends on base variables")
    fields = []
    for i in range(sig.n):
        v = VerticalField.zero(sig)
        for b in range(alg.dim):
            if pc.A[i][b]:
                v = v - act.rho[b] * pc.A[i][b]
        fields.append(v)
    conn = Connection(sig, fields)
    omega_theta = pc.curvature(alg)
    if background.degree == 2:
        terms = {}
        for (i, j), comps in omega_theta.items():
            val = Expr.const(sig, 0)
            for b, w in enumerate(comps):
                val = val + act.J[b] * w
            if val:
                terms[(i, j)] = val
        z = Decomposition.zero(sig, 2)
        return Coupling(conn, Components2Form(background, z, Decomposition(sig, 2, terms)), omega_theta)
    if background.degree == 3:
        out = Decomposition.zero(sig, 3)
        for (i, j), comps in omega_theta.items():
            dxdx = Decomposition._raw(sig, 2, {(i, j): Expr.const(sig, 1)})
            val = Decomposition.zero(sig, 1)
            for b, w in enumerate(comps):
                if w:
                    val = val + act.J[b] * w
            if val:
                out = out + dxdx.wedge(val)
        z = Decomposition.zero(sig, 3)
        return Coupling(conn, Components3Form(background, z, out, z), omega_theta)
    raise CouplingError("background must be a vertical 2-form or 3-form")


def hamiltonian_field(f: Expr, omega_f: Decomposition) -> VerticalField:
    """X_f with i_{X_f} omega_F = -df."""
    sig = f.sig
    W = _vertical_matrix(omega_f)
    Winv = _constant_inverse(W, "omega_F")
    grad = [f.diff(sig.n + b) for b in range(sig.m)]
    comps = []
    for a in range(sig.m):
        acc = Expr.const(sig, 0)
        for b in range(sig.m):
            acc = acc + Winv[a][b] * grad[b]
        comps.append(acc)
    return VerticalField(sig, comps)


def poisson_bracket(f: Expr, g: Expr, omega_f: Decomposition) -> Expr:
    """{f, g} = omega_F(X_g, X_f) = X_g(f)."""
    return hamiltonian_field(g, omega_f)(f)


@dataclass
class CocycleReport:
    matrix: list[list[Expr]]
    antisymmetric: bool
    vertically_constant: bool
    cyclic_identity: bool

    @property
    def vanishes(self) -> bool:
        return all(e.is_zero() for row in self.matrix for e in row)

    @property
    def ok(self) -> bool:
        return self.antisymmetric and self.vertically_constant and self.cyclic_identity

    def to_json(self) -> dict:
        return {
            "matrix": [[str(e) for e in row] for row in self.matrix],
            "antisymmetric": self.antisymmetric,
            "vertically_constant": self.vertically_constant,
            "cyclic_identity": self.cyclic_identity,
            "vanishes": self.vanishes,
        }


def moment_cocycle(alg: LieAlgebraData, act: ActionData, omega_f: Decomposition) -> CocycleReport:
    """Lambda(e_a, e_b) = {J_a, J_b} - J_[e_a, e_b]."""
    if not verify_moment(act, omega_f).ok:
        raise CouplingError("moment map verification failed")
    d = alg.dim
    sig = omega_f.sig
    L = [[Expr.const(sig, 0)] * d for _ in range(d)]
    for a in range(d):
        for b in range(d):
            v = poisson_bracket(act.J[a], act.J[b], omega_f)
            for k, ck in enumerate(alg.bracket_basis(a, b)):
                if ck:
                    v = v - act.J[k] * ck
            L[a][b] = v
    antisym = all((L[a][b] + L[b][a]).is_zero() for a in range(d) for b in range(d))
    vconst = all(not L[a][b].diff(sig.n + j) for a in range(d) for b in range(d) for j in range(sig.m))
    cyclic = True
    for a, b, c in combinations(range(d), 3):
        total = Expr.const(sig, 0)
        for x, y, z in ((a, b, c), (b, c, a), (c, a, b)):
            for k, ck in enumerate(alg.bracket_basis(x, y)):
                if ck:
                    total = total + L[k][z] * ck
        if total:
            cyclic = False
    return CocycleReport(L, antisym, vconst, cyclic)


# canonical 2-plectic fibration -------------------------------------------


@dataclass
class Canonical2Plectic:
    small: ChartSignature
    sig: ChartSignature
    connection: Connection
    omega2_v: Decomposition
    components: Components3Form
    eta_index: dict[tuple, int]

    def lift_expr(self, e: Expr) -> Expr:
        n, m = self.small.n, self.small.m
        return e.transfer(self.sig, {k: k for k in range(n + m)})

    def pullback(self, F, beta: Decomposition) -> CoordForm:
        """Pull a big-chart form back along the section eta = beta of Lambda^2 V*."""
        small = self.small
        n, m = small.n, small.m
        if beta.sig != small:
            raise CouplingError("section must live on the small chart")
        bcoef = dict(beta.items())
        values = {}
        for (j, k), idx in self.eta_index.items():
            values[idx] = bcoef.get((n + j, n + k), Expr.const(small, 0))
        index_map = {g: g for g in range(n + m)}
        one = Expr.const(small, 1)
        images = [CoordForm._raw(small, 1, {(g,): one}) for g in range(n + m)]
        for _, idx in sorted(self.eta_index.items(), key=lambda t: t[1]):
            images.append(_full_d(values[idx]))
        out = CoordForm.zero(small, F.degree)
        for key, c in F.items():
            coeff = c.transfer(small, index_map, values)
            prod = CoordForm._raw(small, 0, {(): one})
            for g in key:
                prod = prod.wedge(images[g])
            out = out + prod * coeff
        return out


def _full_d(f: Expr) -> CoordForm:
    return exterior_derivative(CoordForm._raw(f.sig, 0, {(): f} if f else {}))


def canonical_2plectic(base_conn: Connection) -> Canonical2Plectic:
    """Lambda^2 V* over the chart, with omega^2_V = sum eta_jk dy_j ^ dy_k and the lifted connection."""
    small = base_conn.sig
    n, m = small.n, small.m
    if m < 2:
        raise CouplingError("the canonical 2-plectic fibration needs fiber dimension >= 2")
    pairs = list(combinations(range(m), 2))
    eta_names = tuple(f"eta{j + 1}_{k + 1}" for j, k in pairs)
    clash = set(eta_names) & set(small.names)
    if clash:
        raise CouplingError(f"variable names {sorted(clash)} clash with the fibre coordinates")
    sig = ChartSignature(small.base_names, small.fiber_names + eta_names,
                         small.periodic + (False,) * len(pairs))
    eta_index = {pair: n + m + r for r, pair in enumerate(pairs)}
    index_map = {g: g for g in range(n + m)}
    omega2 = Decomposition(sig, 2, {(n + j, n + k): Expr.var(sig, eta_index[(j, k)]) for j, k in pairs})

    fields = []
    for i in range(n):
        ycomps = [c.transfer(sig, index_map) for c in base_conn.a[i].components]
        a_tilde = VerticalField(sig, ycomps + [Expr.const(sig, 0)] * len(pairs))
        lie = dict(omega2.lie_vertical(a_tilde).items())
        eta_comps = [-lie.get((n + j, n + k), Expr.const(sig, 0)) for j, k in pairs]
        fields.append(VerticalField(sig, ycomps + eta_comps))
    conn = Connection(sig, fields)
    z = Decomposition.zero(sig, 3)
    comps = Components3Form(d_vertical(omega2), d_horizontal(omega2, conn), d_curvature(omega2, conn), z)
    return Canonical2Plectic(small, sig, conn, omega2, comps, eta_index)


# compact-group splitting -------------------------------------------------


@dataclass
class SplittingReport:
    complement: list[list[Fraction]]
    mixed: list[Fraction]
    restricted_nondegenerate: bool
    semisimple: bool

    @property
    def mixed_zero(self) -> bool:
        return all(v == 0 for v in self.mixed)

    @property
    def consistent(self) -> bool:
        return self.restricted_nondegenerate == self.semisimple

    def to_json(self) -> dict:
        return {
            "complement": [[str(v) for v in r] for r in self.complement],
            "mixed_contractions": [str(v) for v in self.mixed],
            "mixed_zero": self.mixed_zero,
            "restricted_nondegenerate": self.restricted_nondegenerate,
            "semisimple": self.semisimple,
        }


def invariant_splitting_check(alg: LieAlgebraData, subalgebra: Sequence) -> SplittingReport:
    """Check g(h, [k1, k2]) = 0 for h = k^perp, and the 2-plectic non-degeneracy of Phi_e on k.

    ``subalgebra`` is a list of basis indices (0-based) or a list of vectors.
    """
    if alg.g is None:
        raise CouplingError("the splitting check needs an invariant product")
    d = alg.dim
    for r in range(1, d + 1):
        if linalg.det([[alg.g[a][b] for b in range(r)] for a in range(r)]) <= 0:
            raise CouplingError("invariant product is not positive definite")
    K = [_e(d, s) if isinstance(s, int) else [_q(v) for v in s] for s in subalgebra]
    if linalg.rank(K) != len(K):
        raise CouplingError("subalgebra vectors are linearly dependent")
    for a, b in combinations(range(len(K)), 2):
        br = alg.bracket(K[a], K[b])
        if linalg.rank(K + [br]) != len(K):
            raise CouplingError("subalgebra is not closed under the bracket")
    gK = [[alg.product(k, _e(d, c)) for c in range(d)] for k in K]
    H = linalg.nullspace(gK, d) if K else [_e(d, c) for c in range(d)]
    mixed = [alg.product(h, alg.bracket(K[a], K[b])) for h in H for a in range(len(K)) for b in range(len(K))]
    pairs = list(combinations(range(len(K)), 2))
    eta = [[alg.product(K[a], alg.bracket(K[b], K[c])) for b, c in pairs] for a in range(len(K))]
    nondeg = bool(K) and bool(pairs) and linalg.rank(eta) == len(K)
    # Killing form of k in its own coordinates
    coords = []
    for a in range(len(K)):
        row = []
        for b in range(len(K)):
            br = alg.bracket(K[a], K[b])
            x = linalg.solve([[K[r][c] for r in range(len(K))] for c in range(d)], br)
            row.append(x)
        coords.append(row)
    kd = len(K)
    killing = [[sum(coords[a][r][s] * coords[b][s][r] for r in range(kd) for s in range(kd))
                for b in range(kd)] for a in range(kd)]
    semisimple = kd > 0 and linalg.rank(killing) == kd
    return SplittingReport(H, mixed, nondeg, semisimple)
