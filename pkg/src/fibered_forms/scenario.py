"""Scenario files: JSON schema validation and construction of chart objects."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema

from .closure import Components2Form, Components3Form
from .connection import Connection
from .coupling import ActionData, CouplingError, LieAlgebraData, PrincipalConnectionData
from .expr import ChartSignature, Expr, ExprError, parse
from .forms import CoordForm, Decomposition, FormError, VerticalField
from .algebroid import CourantSection, PrequantSection

__all__ = ["CHECKS", "Scenario", "ScenarioError", "load_scenario", "parse_scenario", "SCHEMA"]

CHECKS = (
    "decompose",
    "assemble-roundtrip",
    "commutation",
    "analyze-2form",
    "analyze-3form",
    "fiber-nondegeneracy",
    "induced-connection",
    "gauge-shift",
    "residual-basic",
    "invariant-solve",
    "extract-2connection",
    "extract-3connection",
    "bracket-axioms",
    "derivation-check",
    "verify-moment",
    "minimal-coupling",
    "moment-cocycle",
    "canonical-2plectic",
    "splitting-check",
    "holonomy-transport",
)

_expr = {"type": ["string", "number"]}
_term = {
    "type": "object",
    "required": ["coeff"],
    "properties": {
        "coeff": _expr,
        "dx": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "dy": {"type": "array", "items": {"type": "integer", "minimum": 1}},
    },
    "additionalProperties": False,
}
_form = {
    "oneOf": [
        {"type": "array", "items": _term},
        {
            "type": "object",
            "required": ["degree", "terms"],
            "properties": {"degree": {"type": "integer", "minimum": 0}, "terms": {"type": "array", "items": _term}},
            "additionalProperties": False,
        },
        {"type": "string"},
    ]
}
_names = {"type": "array", "items": {"type": "string", "pattern": "^[A-Za-z_][A-Za-z_0-9]*$"}, "minItems": 1}
_matrix = {"type": "array", "items": {"type": "array", "items": _expr}}

SCHEMA: dict = {
    "type": "object",
    "required": ["chart", "checks"],
    "properties": {
        "chart": {
            "type": "object",
            "required": ["base", "fiber"],
            "properties": {
                "base": _names,
                "fiber": _names,
                "periodic": {"type": "array", "items": {"type": "string"}},
            },
            "additionalProperties": False,
        },
        "connection": {
            "type": "object",
            "required": ["a"],
            "properties": {"a": _matrix},
            "additionalProperties": False,
        },
        "forms": {"type": "object", "additionalProperties": _form},
        "components2": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["omega_v"],
                "properties": {k: _form for k in ("omega_v", "alpha_h", "omega_h")},
                "additionalProperties": False,
            },
        },
        "components3": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["phi_v"],
                "properties": {k: _form for k in ("phi_v", "alpha_h", "omega_h", "phi_h")},
                "additionalProperties": False,
            },
        },
        "sections": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["X"],
                "properties": {"X": {"type": "array", "items": _expr}, "f": _expr, "alpha": _form},
                "additionalProperties": False,
            },
        },
        "lie": {
            "type": "object",
            "required": ["dim"],
            "properties": {
                "dim": {"type": "integer", "minimum": 1},
                "c": {"type": "array", "items": {
                    "type": "array", "minItems": 4, "maxItems": 4,
                    "prefixItems": [{"type": "integer", "minimum": 1}] * 3 + [_expr]}},
                "g": _matrix,
            },
            "additionalProperties": False,
        },
        "action": {
            "type": "object",
            "required": ["rho", "J"],
            "properties": {"rho": _matrix, "J": {"type": "array", "items": {"anyOf": [_expr, _form]}}},
            "additionalProperties": False,
        },
        "principal": {
            "type": "object",
            "required": ["A"],
            "properties": {"A": _matrix},
            "additionalProperties": False,
        },
        "checks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["check"],
                "properties": {"check": {"enum": list(CHECKS)}},
            },
        },
    },
    "additionalProperties": False,
}


class ScenarioError(ValueError):
    """Validation failure carrying a JSON pointer to the offending value."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
        self.message = message


def _pointer(parts) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


@dataclass
class Scenario:
    sig: ChartSignature
    connection: Connection
    forms: dict[str, list] = field(default_factory=dict)
    components2: dict[str, Components2Form] = field(default_factory=dict)
    components3: dict[str, Components3Form] = field(default_factory=dict)
    sections: dict[str, PrequantSection | CourantSection] = field(default_factory=dict)
    lie: LieAlgebraData | None = None
    action: ActionData | None = None
    principal: PrincipalConnectionData | None = None
    checks: list[dict] = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    def expr(self, value, path: tuple) -> Expr:
        try:
            return parse(str(value), self.sig)
        except ExprError as exc:
            raise ScenarioError(_pointer(path), str(exc)) from None

    def form(self, value, path: tuple, cls=Decomposition, degree: int | None = None):
        """Form literal (inline or by name) as a CoordForm or Decomposition."""
        if isinstance(value, str):
            if value not in self.forms:
                raise ScenarioError(_pointer(path), f"undefined form {value!r}")
            return self.form(self.forms[value], ("forms", value), cls, degree)
        if isinstance(value, dict):
            terms, deg, path = value["terms"], value["degree"], path + ("terms",)
        else:
            terms, deg = value, None
        items = []
        for k, t in enumerate(terms):
            I = [i - 1 for i in t.get("dx", [])]
            J = [j - 1 for j in t.get("dy", [])]
            if any(i >= self.sig.n for i in I) or any(j >= self.sig.m for j in J):
                raise ScenarioError(_pointer(path + (k,)), "index out of range for the chart")
            items.append((self.expr(t["coeff"], path + (k, "coeff")), I, J))
            if deg is None:
                deg = len(I) + len(J)
        if deg is None:
            if degree is None:
                raise ScenarioError(_pointer(path), "empty form literal needs an explicit degree")
            deg = degree
        if degree is not None and deg != degree:
            raise ScenarioError(_pointer(path), f"expected a {degree}-form, got degree {deg}")
        try:
            return cls.from_indices(self.sig, items, deg)
        except FormError as exc:
            raise ScenarioError(_pointer(path), str(exc)) from None

    def field_(self, values, path: tuple) -> VerticalField:
        if len(values) != self.sig.m:
            raise ScenarioError(_pointer(path), f"vertical field needs {self.sig.m} components")
        return VerticalField(self.sig, [self.expr(v, path + (k,)) for k, v in enumerate(values)])

    def named(self, table: str, name, path: tuple):
        store = getattr(self, table)
        if name not in store:
            raise ScenarioError(_pointer(path), f"undefined {table} entry {name!r}")
        return store[name]


def _component_forms(sc: Scenario, data: dict, path: tuple, spec, cls):
    sig = sc.sig
    out = []
    for key, (p, q) in spec:
        if key in data:
            D = sc.form(data[key], path + (key,), degree=p + q)
            bad = [k for k, _ in D.items() if sum(1 for g in k if g < sig.n) != p]
            if bad:
                raise ScenarioError(_pointer(path + (key,)), f"{key} must be a ({p},{q}) block")
            out.append(D)
        else:
            out.append(Decomposition.zero(sig, p + q))
    return cls(*out)


def parse_scenario(data: Any) -> Scenario:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        err = errors[0]
        raise ScenarioError(_pointer(err.absolute_path), err.message)
    chart = data["chart"]
    names = list(chart["base"]) + list(chart["fiber"])
    if len(set(names)) != len(names):
        raise ScenarioError("/chart", "variable names must be distinct")
    periodic = chart.get("periodic", [])
    for k, p in enumerate(periodic):
        if p not in names:
            raise ScenarioError(f"/chart/periodic/{k}", f"unknown variable {p!r}")
    try:
        sig = ChartSignature(tuple(chart["base"]), tuple(chart["fiber"]), tuple(v in periodic for v in names))
    except ExprError as exc:
        raise ScenarioError("/chart", str(exc)) from None
    sc = Scenario(sig, Connection.flat(sig), raw=data)
    sc.forms = dict(data.get("forms", {}))
    for name, lit in sc.forms.items():
        if isinstance(lit, str):
            raise ScenarioError(_pointer(("forms", name)), "form table entries must be literals")
        if lit:
            sc.form(lit, ("forms", name))

    if "connection" in data:
        rows = data["connection"]["a"]
        if len(rows) != sig.n:
            raise ScenarioError("/connection/a", f"expected {sig.n} rows")
        sc.connection = Connection(sig, [sc.field_(r, ("connection", "a", i)) for i, r in enumerate(rows)])

    spec2 = (("omega_v", (0, 2)), ("alpha_h", (1, 1)), ("omega_h", (2, 0)))
    spec3 = (("phi_v", (0, 3)), ("alpha_h", (1, 2)), ("omega_h", (2, 1)), ("phi_h", (3, 0)))
    for name, c in data.get("components2", {}).items():
        sc.components2[name] = _component_forms(sc, c, ("components2", name), spec2, Components2Form)
    for name, c in data.get("components3", {}).items():
        sc.components3[name] = _component_forms(sc, c, ("components3", name), spec3, Components3Form)

    for name, s in data.get("sections", {}).items():
        path = ("sections", name)
        X = sc.field_(s["X"], path + ("X",))
        if ("f" in s) == ("alpha" in s):
            raise ScenarioError(_pointer(path), "a section has exactly one of 'f' or 'alpha'")
        if "f" in s:
            sc.sections[name] = PrequantSection(X, sc.expr(s["f"], path + ("f",)))
        else:
            alpha = sc.form(s["alpha"], path + ("alpha",), degree=1)
            if any(g < sig.n for k, _ in alpha.items() for g in k):
                raise ScenarioError(_pointer(path + ("alpha",)), "alpha must be vertical")
            sc.sections[name] = CourantSection(X, alpha)

    if "lie" in data:
        lie = data["lie"]
        d = lie["dim"]
        for k, entry in enumerate(lie.get("c", [])):
            if any(v > d for v in entry[:3]):
                raise ScenarioError(f"/lie/c/{k}", "basis index exceeds dim")
        if "g" in lie and (len(lie["g"]) != d or any(len(r) != d for r in lie["g"])):
            raise ScenarioError("/lie/g", f"product must be {d} x {d}")
        try:
            sc.lie = LieAlgebraData.from_literal(lie)
        except (CouplingError, ValueError, ZeroDivisionError) as exc:
            raise ScenarioError("/lie", str(exc)) from None

    if "action" in data:
        act = data["action"]
        rho = [sc.field_(r, ("action", "rho", k)) for k, r in enumerate(act["rho"])]
        J = []
        for k, j in enumerate(act["J"]):
            path = ("action", "J", k)
            J.append(sc.expr(j, path) if isinstance(j, (int, float)) or (
                isinstance(j, str) and j not in sc.forms) else sc.form(j, path, degree=1))
        try:
            sc.action = ActionData(rho, J)
        except CouplingError as exc:
            raise ScenarioError("/action", str(exc)) from None

    if "principal" in data:
        A = data["principal"]["A"]
        if len(A) != sig.n:
            raise ScenarioError("/principal/A", f"expected {sig.n} rows")
        rows = [[sc.expr(v, ("principal", "A", i, b)) for b, v in enumerate(r)] for i, r in enumerate(A)]
        try:
            sc.principal = PrincipalConnectionData(rows)
        except CouplingError as exc:
            raise ScenarioError("/principal/A", str(exc)) from None

    sc.checks = list(data["checks"])
    return sc


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ScenarioError("", f"not valid UTF-8: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("", f"invalid JSON: {exc}") from None
    return parse_scenario(data)
