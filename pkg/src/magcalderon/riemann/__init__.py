"""Riemannian magnetic DN maps, linearization, Runge fitting and metric equality."""
from .decision import (
    BOperatorField,
    DecisionResult,
    GaugeResult,
    b_operator,
    gauge_tilde_check,
    metric_equality_decision,
    reference_metric,
)
from .grid import (
    FACES,
    DnSample,
    GridDomain,
    GridField,
    MagneticOperator,
    SolverError,
    boundary_functional,
    dn_map,
    solve_magnetic_dirichlet,
)
from .linearize import (
    CoupledGradient,
    RiemannOracle,
    approximate_identity_form,
    linearized_response,
    recover_coupled_gradient,
    scaled_one_form,
)
from .runge import (
    HessianProbeResult,
    RungeBasis,
    RungeFit,
    RungeTarget,
    hessian_probe,
    runge_fit,
    probe_matrices,
    trace_free_basis,
    trace_free_part,
)
