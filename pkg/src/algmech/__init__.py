"""Mechanics on skew-symmetric algebroids.

Connection computation from a bundle metric, geodesic and forced dynamics,
and the verification battery for kinematic reduction, decoupling sections and
Hamilton-Jacobi solutions of nonholonomic control systems.
"""

from .expr import (
    EvalError,
    Expr,
    ExprError,
    ParseError,
    fd_directional,
    fd_gradient,
    fd_partial,
    fd_step,
    parse,
    partial,
    set_fd_step,
)
from .algebroid import (
    AlgebroidStructure,
    ChartDomain,
    Exclusion,
    OneForm,
    Section,
    Trajectory,
    admissibility_residual,
    anchor_apply,
    bracket,
    d_function,
    d_oneform,
    jacobiator,
    lie_closure_rank,
    span_rank,
    vector_field_bracket,
)
from .geometry import (
    BundleMetric,
    ChristoffelTensor,
    ForceField,
    Potential,
    SingularMetricError,
    christoffel,
    christoffel_field,
    covariant_derivative,
    covariant_derivative_along,
    flat,
    gradient,
    gradient_section,
    metric_eval,
    sharp,
    symmetric_product,
    symprod_via_lifts,
)
from .dynamics import (
    ControlSignal,
    TotalPoint,
    base_flow,
    controlled_field,
    controlled_field_fn,
    energy,
    forced_field,
    forced_field_fn,
    geodesic_spray,
    integrate,
    lift,
    spray_field,
)
from .reduction import (
    Projector,
    Subbundle,
    VerificationReport,
    geodesic_invariance_check,
    hj_residual,
    hj_trajectory_equivalence,
    is_decoupling,
    kinematic_reduction_check,
    maximal_reducibility_check,
    project,
    recover_controls,
    reparam_admissible,
    symmetric_closure,
)
from .systems import (
    BUILTINS,
    SpecError,
    SystemDefinition,
    builtin,
    dump_spec,
    euclidean,
    induced_algebroid,
    load_spec,
    load_spec_file,
    planar_body,
    robotic_leg,
    snakeboard,
    suslov,
)
from .report import christoffel_table, hj_algebraic_check, render_text, run_battery

__version__ = "0.1.0"
