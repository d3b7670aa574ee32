"""Numerical harness for intrinsic Harnack estimates of degenerate parabolic equations."""
from .core import (Cylinder, DomainError, EllipticityParams, Grid, NumericError, ParaboloidSet, ScalarField,
                   intrinsic_rescale, region_measure, theta_from_value)
from .operators import OperatorSpec, SymMatrix, degenerate_rhs, field_B, pucci_minus, pucci_plus, sqrt_B
from .solutions import (BarenblattSpec, BarrierSpec, ContactFnSpec, ExampleSpec, barenblatt_eval, barrier_eval,
                        contact_fn_eval, example_eval)
from .solver import SolverConfig, evolve, inf_convolution, step

__version__ = "0.1.0"

__all__ = [
    "BarenblattSpec", "BarrierSpec", "ContactFnSpec", "Cylinder", "DomainError", "EllipticityParams",
    "ExampleSpec", "Grid", "NumericError", "OperatorSpec", "ParaboloidSet", "ScalarField", "SolverConfig",
    "SymMatrix", "barenblatt_eval", "barrier_eval", "contact_fn_eval", "degenerate_rhs", "evolve",
    "example_eval", "field_B", "inf_convolution", "intrinsic_rescale", "pucci_minus", "pucci_plus",
    "region_measure", "sqrt_B", "step", "theta_from_value", "__version__",
]
