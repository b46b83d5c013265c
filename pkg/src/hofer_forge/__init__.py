"""Hofer-length shortening of circle actions near an isolated maximum."""
from .calculus import (
    LoopGenerator,
    compose_generators,
    conjugate,
    hofer_length,
    reparametrize,
    verify_loop_closure,
)
from .core import (
    EllipsoidModel,
    Rotation,
    SymplecticMapChain,
    Translation,
    WeightVector,
    apply_chain,
    invert_chain,
    momentum,
)
from .flows import FlowConfig, audit_symplectic, integrate_flow
from .hamiltonians import QuadraticAffine, QuadraticSlice

__version__ = "0.1.0"

__all__ = [
    "EllipsoidModel",
    "FlowConfig",
    "LoopGenerator",
    "QuadraticAffine",
    "QuadraticSlice",
    "Rotation",
    "SymplecticMapChain",
    "Translation",
    "WeightVector",
    "apply_chain",
    "audit_symplectic",
    "compose_generators",
    "conjugate",
    "hofer_length",
    "integrate_flow",
    "invert_chain",
    "momentum",
    "reparametrize",
    "verify_loop_closure",
]
