"""mgtlab: FEM laboratory for boundary-feedback stabilization of MGT acoustics.

Discretizes the linear third-order-in-time acoustic model with Robin-type
velocity feedback on part of the boundary, builds the first-order semigroup
generators in both the physical and the z-variables, and verifies energy
identities, dissipativity, resolvent bounds and exponential decay as
machine-checkable properties.
"""

from ._stepping import HAVE_COMPILED
from .model import (AlphaField, PhysicalParams, StateTriple, ZStateTriple,
                    derive_params, from_z_state, to_z_state,
                    validate_stability_assumptions)

__all__ = [
    "AlphaField", "PhysicalParams", "StateTriple", "ZStateTriple",
    "derive_params", "to_z_state", "from_z_state",
    "validate_stability_assumptions", "HAVE_COMPILED",
]

__version__ = "0.1.0"
