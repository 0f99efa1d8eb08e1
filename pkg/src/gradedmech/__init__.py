"""Higher order mechanics on Lie algebroids via weighted (graded) bundles.

Quick start::

    from gradedmech import lie_algebra, so3_constants, LagrangianSpec, integrate, HigherPoint
    L = LagrangianSpec(lie_algebra(so3_constants()), 2, "0.5*(y2_1^2 + 2*y2_2^2 + 3*y2_3^2)")
"""
from .algebroid import (AlgebroidSpec, ConnectionSpec, atiyah_trivial, check_almost_lie, check_jacobi,
                        curvature, deformed_atiyah, lie_algebra, so3_constants, tangent)
from .expr import TaylorScalar, parse
from .graded import (HigherPoint, MironianPoint, PhasePoint, convert_convention, epsilon_apply,
                     equivariance_error, holonomic_embed, lie_algebroid_structure, tangent_structure)
from .hamilton import (HamiltonianSpec, consistency_check, hamiltonian_from_lagrangian, integrate_hamiltonian,
                       inverse_legendre, legendre)
from .lagrange import (CurveJet, LagrangianSpec, SingularHessianError, el_residual, energy, integrate,
                       jacobi_ostrogradski, reduce_to_explicit, tulczyjew_differential)
from .reduce import (conserved_momentum_monitor, euler_poincare_residual, euler_poincare_system, hamel_residual,
                     hamel_system, lagrange_poincare_residual, lagrange_poincare_system)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
