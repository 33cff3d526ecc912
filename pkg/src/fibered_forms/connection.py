"""Local Ehresmann connections h(d_i) = d_i + a_i and the operators d^H, d^C."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .expr import ChartSignature, Expr
from .forms import Decomposition, FormError, VerticalField, _check_sig, d_vertical

__all__ = [
    "Connection",
    "CurvatureForm",
    "d_horizontal",
    "d_curvature",
    "full_differential",
    "IdentityResidual",
    "CommutationReport",
    "commutation_check",
    "HolonomyReport",
    "holonomy_transport_check",
    "COMMUTATION_IDENTITIES",
]


class Connection:
    """Connection coefficients a_i = sum_j a_i^j d/dy_j for each base direction."""

    __slots__ = ("sig", "a", "_curvature")

    def __init__(self, sig: ChartSignature, a: Sequence[VerticalField]):
        if len(a) != sig.n:
            raise FormError(f"connection needs {sig.n} vertical fields, got {len(a)}")
        for v in a:
            _check_sig(v.sig, sig)
        self.sig = sig
        self.a = tuple(a)
        self._curvature = None

    @classmethod
    def flat(cls, sig: ChartSignature) -> "Connection":
        return cls(sig, [VerticalField.zero(sig) for _ in range(sig.n)])

    @classmethod
    def from_strings(cls, sig: ChartSignature, rows: Sequence[Sequence[str]]) -> "Connection":
        from .expr import parse

        if len(rows) != sig.n or any(len(r) != sig.m for r in rows):
            raise FormError(f"connection literal must be {sig.n} x {sig.m}")
        return cls(sig, [VerticalField(sig, [parse(str(e), sig) for e in row]) for row in rows])

    def lift(self, i: int) -> list[Expr]:
        """Full tangent vector of h(d_i)."""
        vec = [Expr.const(self.sig, int(k == i)) for k in range(self.sig.n)]
        return vec + list(self.a[i].components)

    def horizontal_derivative(self, i: int, f: Expr) -> Expr:
        """h(d_i) applied to a function."""
        return f.diff(i) + self.a[i](f)

    def curvature(self) -> "CurvatureForm":
        if self._curvature is None:
            self._curvature = CurvatureForm.of(self)
        return self._curvature

    def is_flat(self) -> bool:
        return self.curvature().is_zero()

    def __add__(self, shift: Sequence[VerticalField]) -> "Connection":
        return Connection(self.sig, [a + d for a, d in zip(self.a, shift)])

    def __eq__(self, other):
        if not isinstance(other, Connection):
            return NotImplemented
        return self.sig == other.sig and self.a == other.a

    def __hash__(self):
        return hash(self.a)

    def to_literal(self) -> list[list[str]]:
        return [[str(c) for c in v.components] for v in self.a]

    def __repr__(self):
        return f"Connection({self.to_literal()})"


@dataclass(frozen=True)
class CurvatureForm:
    """C_ij = d_i a_j - d_j a_i + [a_i, a_j], stored for i < j."""

    sig: ChartSignature
    upper: dict = field(hash=False)

    @classmethod
    def of(cls, conn: Connection) -> "CurvatureForm":
        upper = {}
        for i, j in combinations(range(conn.sig.n), 2):
            upper[(i, j)] = conn.a[j].partial(i) - conn.a[i].partial(j) + conn.a[i].bracket(conn.a[j])
        return cls(conn.sig, upper)

    def __call__(self, i: int, j: int) -> VerticalField:
        if i == j:
            return VerticalField.zero(self.sig)
        if i < j:
            return self.upper[(i, j)]
        return -self.upper[(j, i)]

    def is_zero(self) -> bool:
        return all(v.is_zero() for v in self.upper.values())


def _dx(sig: ChartSignature, k: int) -> Decomposition:
    return Decomposition._raw(sig, 1, {(k,): Expr.const(sig, 1)})


def d_horizontal(D: Decomposition, conn: Connection) -> Decomposition:
    """Covariant derivative: sum_k dx_k ^ (d/dx_k + L_{a_k}) on the values."""
    _check_sig(D.sig, conn.sig)
    out = Decomposition.zero(D.sig, D.degree + 1)
    for k in range(D.sig.n):
        inner = D.partial(k)
        if not conn.a[k].is_zero():
            inner = inner + D.lie_vertical(conn.a[k])
        if inner:
            out = out + _dx(D.sig, k).wedge(inner)
    return out


def d_curvature(D: Decomposition, conn: Connection) -> Decomposition:
    """Curvature insertion, block (p, q) -> (p + 2, q - 1).

    On a block dx_I (x) lambda this is (-1)^(p+1) sum_{k<l} dx_k^dx_l^dx_I (x) i_{C_kl} lambda,
    which on the shared storage is -sum_{k<l} dx_k^dx_l ^ i_{C_kl}(D).  The sign is
    the one forced by d = d^V + d^H + d^C.
    """
    _check_sig(D.sig, conn.sig)
    curv = conn.curvature()
    out = Decomposition.zero(D.sig, D.degree + 1)
    for (k, l), C in curv.upper.items():
        if C.is_zero():
            continue
        contracted = D.interior(C)
        if contracted:
            out = out - _dx(D.sig, k).wedge(_dx(D.sig, l)).wedge(contracted)
    return out


def full_differential(D: Decomposition, conn: Connection) -> Decomposition:
    return d_vertical(D) + d_horizontal(D, conn) + d_curvature(D, conn)


COMMUTATION_IDENTITIES = (
    ("dV.dV", (("V", "V"),)),
    ("dV.dH+dH.dV", (("V", "H"), ("H", "V"))),
    ("dV.dC+dH.dH+dC.dV", (("V", "C"), ("H", "H"), ("C", "V"))),
    ("dH.dC+dC.dH", (("H", "C"), ("C", "H"))),
    ("dC.dC", (("C", "C"),)),
)


@dataclass
class IdentityResidual:
    identity: str
    sample: int
    residual: Decomposition
    numeric_max: float

    @property
    def zero(self) -> bool:
        return self.residual.is_zero()


@dataclass
class CommutationReport:
    entries: list[IdentityResidual]

    @property
    def all_zero(self) -> bool:
        return all(e.zero for e in self.entries)

    @property
    def numeric_max(self) -> float:
        return max((e.numeric_max for e in self.entries), default=0.0)


def _vectorised_max(forms: Sequence[Decomposition], points: np.ndarray) -> float:
    """max over keys and points of |sum of the forms' coefficients|, evaluated term by term."""
    if points is None or len(points) == 0:
        return 0.0
    cols = points.T
    totals: dict = {}
    for F in forms:
        for key, c in F.items():
            val = np.broadcast_to(np.asarray(c.compile(np)(cols), dtype=float), (points.shape[0],))
            totals[key] = totals.get(key, 0.0) + val
    if not totals:
        return 0.0
    return float(max(np.max(np.abs(v)) for v in totals.values()))


def commutation_check(
    conn: Connection,
    samples: Sequence[Decomposition],
    points: np.ndarray | None = None,
) -> CommutationReport:
    """Evaluate the five identities making (d^V, d^H, d^C) square to zero.

    The symbolic residual is exact.  The numeric residual evaluates each
    composed term separately in floating point and sums at the points, so it
    is an independent check that the individual terms cancel.
    """
    ops = {
        "V": d_vertical,
        "H": lambda D: d_horizontal(D, conn),
        "C": lambda D: d_curvature(D, conn),
    }
    entries = []
    for s_idx, D in enumerate(samples):
        _check_sig(D.sig, conn.sig)
        first = {name: op(D) for name, op in ops.items()}
        for label, pairs in COMMUTATION_IDENTITIES:
            parts = [ops[outer](first[inner]) for outer, inner in pairs]
            residual = parts[0]
            for p in parts[1:]:
                residual = residual + p
            entries.append(IdentityResidual(label, s_idx, residual, _vectorised_max(parts, points)))
    return CommutationReport(entries)


@dataclass
class HolonomyReport:
    max_deviation: float
    escaped: list[int]
    steps: int

    @property
    def ok(self) -> bool:
        return not self.escaped


def _pullback_matrix(J: np.ndarray, subsets: list[tuple]) -> np.ndarray:
    """Matrix of Lambda^q J in the basis of sorted q-subsets: M[L, K] = det J[L, K]."""
    q = len(subsets[0]) if subsets else 0
    npts = J.shape[0]
    out = np.empty((npts, len(subsets), len(subsets)))
    for a, L in enumerate(subsets):
        for b, K in enumerate(subsets):
            if q == 0:
                out[:, a, b] = 1.0
            else:
                out[:, a, b] = np.linalg.det(J[:, list(L)][:, :, list(K)])
    return out


def holonomy_transport_check(
    conn: Connection,
    omega_v: Decomposition,
    alpha_h: Decomposition,
    direction: int,
    t: float,
    points: Sequence[Sequence[float]],
    step: float = 1e-3,
    box: float = 1e8,
) -> HolonomyReport:
    """Compare phi_t^* omega_V with omega_V + int_0^t phi_s^*(d_y alpha_k) ds numerically.

    ``phi_s`` is the flow of h(d_k) for k = ``direction`` (0-based).  Along the
    flow the base point moves by s e_k, and the fiber point Y, its Jacobian
    dY/dy and the integral are advanced together by classical RK4.  The
    identity holds whenever d^H omega_V + d^V alpha_H = 0.
    """
    sig = conn.sig
    n, m = sig.n, sig.m
    q = omega_v.degree
    if omega_v.bidegrees() - {(0, q)}:
        raise FormError("omega_v must be a (0, q) block")
    if alpha_h.bidegrees() - {(1, q - 1)}:
        raise FormError("alpha_h must be a (1, q-1) block")
    k = direction
    subsets = list(combinations(range(m), q))

    # alpha_k as a vertical (q-1)-form, then its fiber differential
    alpha_k_terms = {key[1:]: c for key, c in alpha_h.items() if key[0] == k}
    alpha_k = Decomposition._raw(sig, q - 1, alpha_k_terms)
    beta = alpha_k.fiber_d()

    def compile_block(F):
        fns = []
        for L in subsets:
            key = tuple(n + j for j in L)
            c = dict(F.items()).get(key)
            fns.append(c.compile(np) if c is not None else None)
        return fns

    omega_fns = compile_block(omega_v)
    beta_fns = compile_block(beta)
    a_fns = [c.compile(np) for c in conn.a[k].components]
    da_fns = [[c.diff(n + l).compile(np) for l in range(m)] for c in conn.a[k].components]

    pts = np.asarray(points, dtype=float)
    npts = pts.shape[0]
    x0 = pts[:, :n]
    y0 = pts[:, n:]

    def full(s, Y):
        x = x0.copy()
        x[:, k] += s
        return np.concatenate([x, Y], axis=1).T

    def ev(fn, P):
        if fn is None:
            return np.zeros(npts)
        return np.broadcast_to(np.asarray(fn(P), dtype=float), (npts,)).copy()

    def block_values(fns, P):
        return np.stack([ev(f, P) for f in fns], axis=1)

    def rhs(s, Y, J):
        P = full(s, Y)
        dY = np.stack([ev(f, P) for f in a_fns], axis=1)
        A = np.stack([np.stack([ev(f, P) for f in row], axis=1) for row in da_fns], axis=1)
        dJ = A @ J
        b = block_values(beta_fns, P)
        dI = np.einsum("pl,plk->pk", b, _pullback_matrix(J, subsets))
        return dY, dJ, dI

    Y = y0.copy()
    J = np.repeat(np.eye(m)[None, :, :], npts, axis=0)
    I = np.zeros((npts, len(subsets)))
    steps = 0 if t == 0 else max(1, int(np.ceil(abs(t) / step - 1e-12)))
    h = t / steps if steps else 0.0
    s = 0.0
    escaped: set[int] = set()
    for _ in range(steps):
        k1 = rhs(s, Y, J)
        k2 = rhs(s + h / 2, Y + h / 2 * k1[0], J + h / 2 * k1[1])
        k3 = rhs(s + h / 2, Y + h / 2 * k2[0], J + h / 2 * k2[1])
        k4 = rhs(s + h, Y + h * k3[0], J + h * k3[1])
        Y = Y + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        J = J + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        I = I + h / 6 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        s += h
        bad = ~np.isfinite(Y).all(axis=1) | (np.abs(Y) > box).any(axis=1)
        escaped.update(int(i) for i in np.nonzero(bad)[0])
        if len(escaped) == npts:
            break

    lhs = np.einsum("pl,plk->pk", block_values(omega_fns, full(s, Y)), _pullback_matrix(J, subsets))
    rhs_val = block_values(omega_fns, full(0.0, y0)) + I
    dev = np.abs(lhs - rhs_val)
    keep = [i for i in range(npts) if i not in escaped]
    max_dev = float(dev[keep].max()) if keep and dev.size else 0.0
    return HolonomyReport(max_dev, sorted(escaped), steps)
