"""Direct solves with a residual contract.

High-contrast Schur complements can be ill-conditioned enough that one
factorized solve leaves a residual above the package-wide 1e-10
contract; a few rounds of iterative refinement on the factorized
operator restore it.  Residuals are measured as normwise backward
errors |b - Ax| / (|b| + |A| |x|): at contrast 1e6 the residual of an
exact solution cannot even be evaluated below eps*|A||x|, so scaling
by |b| alone would reject correct answers.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError


def _operator_norm(matrix):
    if sp.issparse(matrix):
        return abs(matrix).sum(axis=1).max()
    return np.linalg.norm(matrix, np.inf)


def refined_solve(apply_inverse, matrix, rhs, rtol=1e-10, max_rounds=4,
                  what="linear solve"):
    """Solve matrix @ x = rhs given an approximate inverse application.

    ``apply_inverse`` maps residual vectors to corrections (e.g. an LU
    ``solve``); refinement stops once the backward error meets rtol.
    Raises NumericalError when refinement stalls above the tolerance.
    """
    x = apply_inverse(rhs)
    rhs_norm = np.linalg.norm(rhs)
    if rhs_norm == 0:
        return np.zeros_like(x)
    norm_a = _operator_norm(matrix)

    def backward_error(y):
        scale = rhs_norm + norm_a * np.linalg.norm(y)
        return np.linalg.norm(rhs - matrix @ y) / scale

    for _ in range(max_rounds):
        if backward_error(x) <= rtol:
            return x
        x = x + apply_inverse(rhs - matrix @ x)
    err = backward_error(x)
    if err > rtol:
        raise NumericalError(f"{what} missed its tolerance", err)
    return x
