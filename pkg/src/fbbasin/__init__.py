"""Normal forms, quantitative bounds and basins for attracting sequences of
polynomial automorphisms of C^n fixing the origin."""

from .basin import (GridSpec, Perturbation, SequenceSpec, basin_membership, grid_classify,
                    orbit_compose, psi_approx, psi_convergence_report, verify_hypotheses)
from .bounds import AttractionParams, C_constant, gamma_proof_estimate, minimal_p, q_bounds
from .errors import (BoundOverflowError, ConvergenceError, DimensionError, DivergedError, FBError,
                     NearResonanceError, NotAttractingError, ScenarioError)
from .normalform import NormalFormResult, normal_form, residual_jets, sabiini_check
from .polyalg import HomogeneousMap, PolyJetMap, compose_truncated, evaluate
from .resonance import commutator_apply, commutator_solve, special_basis
from .spectral import Spectrum, schur_lower
from .triangular import LowerTriangularAuto, compose_chain, invert_exact

__version__ = "0.1.0"
