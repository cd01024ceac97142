"""Edge generalized eigenproblems, the Pi/triangle split, and interior
bubble eigenproblems.

Edge pencils pair the series sum of the two neighbors' S_hat blocks
against the sum of their reduced Schur complements; eigenvalues come out
larger than one and the modes at or above the stability threshold join
the coarse space.  Pencils are solved densely after a congruence
reduction through the SPD right-hand matrix (scipy.linalg.eigh).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import InvalidParameterError, NumericalError


@dataclass(eq=False)
class EdgeSpectralBasis:
    edge: int
    alphas: np.ndarray        # descending, all > 1 (possibly inf)
    vectors: np.ndarray       # (m, m); columns orthonormal in sum-of-S_hat
    alpha_stab: float
    H_target: float
    pi_count: int             # columns 0..pi_count-1 have alpha >= alpha_stab
    has_infinite_modes: bool = False

    @property
    def delta_count(self):
        return len(self.alphas) - self.pi_count

    def pi_vectors(self):
        return self.vectors[:, :self.pi_count]

    def delta_vectors(self):
        return self.vectors[:, self.pi_count:]


@dataclass(eq=False)
class BubbleSpectralBasis:
    tau: int
    eigenvalues: np.ndarray   # ascending, all < 1/H_target^2
    vectors: np.ndarray       # (n_interior, N_tau), rho-mass orthonormal
    H_target: float

    @property
    def count(self):
        return self.vectors.shape[1]


@dataclass(eq=False)
class SpaceSplit:
    """Basis bookkeeping for Lambda_h^Pi and the triangle corrector space."""

    alpha_stab: float
    H_target: float
    bases: dict                        # edge id -> EdgeSpectralBasis
    vertex_dofs: np.ndarray            # skeleton dofs of interior coarse vertices
    pi_matrix: sp.csc_matrix           # skeleton x (total Pi edge modes)
    delta_matrix: sp.csc_matrix        # skeleton x (total triangle modes)
    pi_edge_columns: dict = field(default_factory=dict)    # edge -> column slice
    delta_edge_columns: dict = field(default_factory=dict)

    @property
    def pi_dim(self):
        return len(self.vertex_dofs) + self.pi_matrix.shape[1]

    @property
    def delta_dim(self):
        return self.delta_matrix.shape[1]


def pencil_residual(a, b, w, v) -> float:
    """Worst per-pair relative residual |Av - wBv| / ((|A| + w|B|)|v|)."""
    norm_a = np.linalg.norm(a, 2)
    norm_b = np.linalg.norm(b, 2)
    res = a @ v - (b @ v) * w[None, :]
    col = np.linalg.norm(res, axis=0)
    scale = (norm_a + np.abs(w) * norm_b) * np.linalg.norm(v, axis=0)
    return float(np.max(col / np.maximum(scale, 1e-300), initial=0.0))


def edge_eigensolve(blocks, alpha_stab: float, residual_tol: float = 1e-8) -> EdgeSpectralBasis:
    """Solve the edge pencil and split its spectrum at alpha_stab.

    The reduced Schur blocks are only positive semidefinite: when both
    neighbors are interior elements the constant edge trace extends at
    zero energy, so the pencil has genuinely infinite eigenvalues.  We
    therefore solve the reversed pencil beta = 1/alpha against the SPD
    S_hat sum, which also hands back eigenvectors orthonormal in that
    product.  Ties alpha == alpha_stab go to the Pi side.
    """
    if alpha_stab < 1:
        raise InvalidParameterError("alpha_stab must be at least 1")
    a = blocks.S_hat[0] + blocks.S_hat[1]
    b = blocks.S_tilde[0] + blocks.S_tilde[1]
    a = 0.5 * (a + a.T)
    b = 0.5 * (b + b.T)

    scale = max(np.trace(b) / len(b), 1e-300)
    min_b = la.eigvalsh(b)[0]
    if min_b < -1e-8 * scale:
        raise NumericalError("edge pencil right matrix is indefinite",
                             residual=min_b)

    try:
        beta, v = la.eigh(b, a)
    except la.LinAlgError as exc:
        raise NumericalError(f"edge eigensolve failed: {exc}") from exc

    residual = pencil_residual(b, a, beta, v)
    if residual > residual_tol:
        raise NumericalError("edge eigensolve residual too large", residual)

    # beta ascending <=> alpha descending; beta ~ 0 is an infinite mode
    tiny = np.finfo(float).eps * max(abs(beta).max(), 1.0)
    with np.errstate(divide="ignore"):
        alphas = np.where(beta > tiny, 1.0 / np.maximum(beta, tiny), np.inf)
    pi_count = int(np.sum(alphas >= alpha_stab))
    return EdgeSpectralBasis(edge=blocks.edge, alphas=alphas, vectors=v,
                             alpha_stab=float(alpha_stab),
                             H_target=float(blocks.H_target),
                             pi_count=pi_count,
                             has_infinite_modes=bool(np.any(beta <= tiny)))


def compute_edge_bases(extender, H_target: float, alpha_stab: float) -> dict:
    """Eigenbases for every interior coarse edge."""
    return {
        int(e): edge_eigensolve(extender.edge_blocks(int(e), H_target), alpha_stab)
        for e in extender.mesh.interior_edge_ids
    }


def split_skeleton_spaces(bases: dict, mesh) -> SpaceSplit:
    """Assemble the Pi / triangle basis matrices over skeleton dofs."""
    n = mesh.num_skeleton_dofs
    some = next(iter(bases.values()))
    split = SpaceSplit(
        alpha_stab=some.alpha_stab, H_target=some.H_target, bases=bases,
        vertex_dofs=np.arange(mesh.vertex_dof_count),
        pi_matrix=None, delta_matrix=None,
    )

    def build(side):
        rows, cols, vals = [], [], []
        columns = {}
        offset = 0
        for e in mesh.interior_edge_ids:
            basis = bases[int(e)]
            block = basis.pi_vectors() if side == "pi" else basis.delta_vectors()
            k = block.shape[1]
            sl = mesh.edge_dof_slice(int(e))
            dofs = np.arange(sl.start, sl.stop)
            if k:
                rows.append(np.repeat(dofs, k))
                cols.append(np.tile(np.arange(offset, offset + k), len(dofs)))
                vals.append(block.ravel())
            columns[int(e)] = slice(offset, offset + k)
            offset += k
        if rows:
            mat = sp.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(n, offset)).tocsc()
        else:
            mat = sp.csc_matrix((n, offset))
        return mat, columns

    split.pi_matrix, split.pi_edge_columns = build("pi")
    split.delta_matrix, split.delta_edge_columns = build("delta")
    return split


def bubble_eigensolve(extender, tau: int, H_target: float,
                      residual_tol: float = 1e-8) -> BubbleSpectralBasis:
    """Interior pencil (stiffness, rho-mass); keep eigenvalues below 1/H_target^2."""
    ed = extender.elements[tau]
    ni = len(ed.i_nodes)
    if ni == 0:
        return BubbleSpectralBasis(tau=tau, eigenvalues=np.empty(0),
                                   vectors=np.empty((0, 0)), H_target=H_target)
    nb = ed.nb
    k_ii = ed.k_ii
    m_ii = ed.m_full[nb:, nb:]
    w, v = la.eigh(k_ii, m_ii)
    cutoff = 1.0 / H_target ** 2 if np.isfinite(H_target) else 0.0
    keep = w < cutoff
    w, v = w[keep], v[:, keep]
    if len(w):
        residual = pencil_residual(k_ii, m_ii, w, v)
        if residual > residual_tol:
            raise NumericalError("bubble eigensolve residual too large", residual)
    return BubbleSpectralBasis(tau=tau, eigenvalues=w, vectors=v,
                               H_target=float(H_target))


def compute_bubble_bases(extender, H_target: float) -> list:
    return [bubble_eigensolve(extender, tau, H_target)
            for tau in range(extender.mesh.coarse.num_triangles)]


def spectrum_rows(bases: dict) -> list:
    """(edge, index, alpha, tag) rows for the spectrum dump."""
    rows = []
    for e in sorted(bases):
        basis = bases[e]
        for i, alpha in enumerate(basis.alphas):
            tag = "pi" if i < basis.pi_count else "delta"
            rows.append((e, i + 1, float(alpha), tag))
    return rows
