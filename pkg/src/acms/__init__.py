"""Multiscale skeleton finite elements for 2D heterogeneous elliptic problems.

Implements the ACMS family of Galerkin methods on a two-level
triangulation of the unit square: corrected coarse-vertex bases (NLOD
and its patch-localized variant LOD) and their contrast-robust spectral
counterparts (NLSD/LSD) built from edge generalized eigenmodes, plus an
element-interior spectral bubble approximation.
"""

from .assembly import FineSystem, assemble, fine_solve, local_mass, local_stiffness
from .coefficient import CoefficientField, build_field, local_bounds
from .corrector import CorrectorContext, MultiscaleBasis, build_multiscale_basis
from .errors import (GeometryError, InvalidParameterError, NotApplicableError,
                     NumericalError, UsageError)
from .geometry import (CoarseMesh, Patch, TwoLevelMesh, build_coarse_mesh,
                       patch, refine)
from .harness import RunConfig
from .methods import (ErrorReport, MultiscaleSolution, diagnostics,
                      energy_error, solve_bubble_ms, solve_multiscale,
                      solve_skeleton, weighted_l2_error)
from .spectral import (BubbleSpectralBasis, EdgeSpectralBasis, SpaceSplit,
                       bubble_eigensolve, compute_bubble_bases,
                       compute_edge_bases, edge_eigensolve,
                       split_skeleton_spaces)
from .substructure import EdgeBlocks, HarmonicExtender

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
