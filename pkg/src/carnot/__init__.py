"""Numerical geometric function theory on Carnot groups.

Moduli of curve families, p-capacities of condensers, foliation measures
and distortion coefficients on the abelian groups R^n and the Heisenberg
groups H^n, with checks of the inequalities and identities relating them.
"""

from .groups import GroupInputError, GroupModel, abelian, heisenberg, model_from_name
from .modulus import SolveOptions, SolveReport, modulus
from .capacity import Condenser, p_capacity

__all__ = [
    "GroupInputError",
    "GroupModel",
    "abelian",
    "heisenberg",
    "model_from_name",
    "SolveOptions",
    "SolveReport",
    "modulus",
    "Condenser",
    "p_capacity",
]
__version__ = "0.1.0"
