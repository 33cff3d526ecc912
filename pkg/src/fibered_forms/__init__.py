"""Symbolic exterior calculus on fibered charts.

Forms on a chart U x F are split into (p, q) blocks by an Ehresmann
connection; the exterior derivative splits as d^V + d^H + d^C.  The package
analyzes closedness of 2- and 3-forms, extracts higher connections, checks
the prequantization and Courant brackets, and builds coupling examples.
"""

from .expr import ChartSignature, Expr, ExprError, ParseError, UnknownVariableError, parse
from .forms import CoordForm, Decomposition, FormError, VerticalField, assemble, decompose, exterior_derivative
from .connection import Connection, commutation_check, d_curvature, d_horizontal, holonomy_transport_check
from .closure import (
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
    residual_basic_form,
)
from .algebroid import CourantSection, DerivationDatum, PrequantSection, courant_bracket, prequant_bracket
from .coupling import (
    ActionData,
    CouplingError,
    LieAlgebraData,
    PrincipalConnectionData,
    canonical_2plectic,
    invariant_splitting_check,
    minimal_coupling,
    moment_cocycle,
    verify_moment,
)

__version__ = "0.1.0"
