"""Boundary determination experiments for magnetic wave and Laplace operators.

The Lorentzian side traces null bicharacteristics on a cylinder, simulates
the principal symbol of the boundary map and reconstructs light rays from
it.  The Riemannian side solves magnetic Laplace equations on the unit cube
and decides metric equality from linearized Dirichlet-to-Neumann data.
"""
from .bicharacteristics import (
    Bicharacteristic,
    BoundaryCovector,
    LensResult,
    TraceOptions,
    boundary_covector,
    classify_and_lift,
    geodesic_through,
    integrate_null,
    lens_relation,
)
from .geometry import Ball, Domain, MetricField, PreconditionError, admissibility_check
from .oracle import ElectromagneticScenario, SymbolOracle
from .perturbations import GenericSampler, ck_norm, make_aligned_one_form, make_exact_form, make_sym_tensor
from .reconstruction import conformal_check, membership_test, scan_trajectory, shrink_test
from .scenarios import catalog, get_scenario, scenario_ids

__version__ = "0.1.0"
