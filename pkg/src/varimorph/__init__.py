"""Registration of discrete varifolds with joint deformation and weight change.

Three models are provided: pure LDDMM, LDDMM with a static L2 weight
rescaling, and LDDMM-Fisher-Rao metamorphosis.  Solutions are computed by
Hamiltonian geodesic shooting with exact discrete adjoint gradients and a
bound-constrained L-BFGS optimiser.
"""

from __future__ import annotations

from .analytic import geodesic_dirac0, geodesic_dirac1, implicit_nu_residual, optimal_eta_fixed_flow
from .dynamics import Costate, ShootingObjective, ShootingState, rk4_shoot, shoot_cost_and_grad
from .errors import VarimorphError
from .evaluation import chamfer, gamma_sweep, weight_histogram
from .fidelity import terminal_cost_and_grad, wstar_dist2, wstar_inner
from .kernels import DeformKernelSpec, FidelityKernelSpec
from .optimizer import OptimizerConfig, minimize
from .registration import RegistrationProblem, RegistrationResult, register, synth_circle_ellipse, synth_partial
from .varifold import (
    DiracAtom,
    DiracVarifold,
    Polyline,
    TriMesh,
    curve_to_varifold,
    frame_volume,
    grassmann_inner,
    mesh_to_varifold,
    pushforward_affine,
    total_mass,
)

__version__ = "0.1.0"

__all__ = [
    "Costate",
    "DeformKernelSpec",
    "DiracAtom",
    "DiracVarifold",
    "FidelityKernelSpec",
    "OptimizerConfig",
    "Polyline",
    "RegistrationProblem",
    "RegistrationResult",
    "ShootingObjective",
    "ShootingState",
    "TriMesh",
    "VarimorphError",
    "chamfer",
    "curve_to_varifold",
    "frame_volume",
    "gamma_sweep",
    "geodesic_dirac0",
    "geodesic_dirac1",
    "grassmann_inner",
    "implicit_nu_residual",
    "mesh_to_varifold",
    "minimize",
    "optimal_eta_fixed_flow",
    "pushforward_affine",
    "register",
    "rk4_shoot",
    "shoot_cost_and_grad",
    "synth_circle_ellipse",
    "synth_partial",
    "terminal_cost_and_grad",
    "total_mass",
    "weight_histogram",
    "wstar_dist2",
    "wstar_inner",
]
