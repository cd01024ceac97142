"""Ideal and patch-localized corrector operators and the multiscale bases.

A corrector problem projects one element's skeleton energy onto a
fine-scale subspace: either the full edge-interior space or, for the
high-contrast methods, the span of the below-threshold edge eigenmodes.
Localized variants restrict the subspace to edges interior to a patch
around the source element; patch factorizations are cached by their
edge set, so recurring patches (and the saturated full-mesh patch) are
factorized once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidParameterError
from .geometry import patch as make_patch
from .linsolve import refined_solve
from .substructure import hat_function


@dataclass(eq=False)
class MultiscaleBasis:
    method: str                    # NLOD | LOD | NLSD | LSD
    matrix: np.ndarray             # (n_skeleton_dofs, n_basis)
    labels: list                   # ('vertex', v) or ('edge', e, mode)
    subspace: str                  # corrector subspace: 'fine' or 'delta'
    j: int = None
    alpha_stab: float = None
    H_target: float = None
    split: object = None

    @property
    def size(self):
        return self.matrix.shape[1]


class CorrectorContext:
    """Galerkin solves over a fine-scale corrector subspace.

    ``split=None`` selects the full edge-interior space; otherwise the
    triangle side of the given spectral split is used.
    """

    def __init__(self, extender, split=None, rtol: float = 1e-10):
        self.extender = extender
        self.mesh = extender.mesh
        self.split = split
        self.rtol = rtol
        mesh = self.mesh
        if split is None:
            self.subspace = "fine"
            n_fine = mesh.num_skeleton_dofs - mesh.vertex_dof_count
            rows = np.arange(mesh.vertex_dof_count, mesh.num_skeleton_dofs)
            self.basis = sp.coo_matrix(
                (np.ones(n_fine), (rows, np.arange(n_fine))),
                shape=(mesh.num_skeleton_dofs, n_fine)).tocsc()
            m = mesh.nodes_per_edge
            self.edge_columns = {
                int(e): slice(mesh.edge_dof_start[int(e)] - mesh.vertex_dof_count,
                              mesh.edge_dof_start[int(e)] - mesh.vertex_dof_count + m)
                for e in mesh.interior_edge_ids
            }
        else:
            self.subspace = "delta"
            self.basis = split.delta_matrix
            self.edge_columns = split.delta_edge_columns
        self.dim = self.basis.shape[1]
        self.gram = (self.basis.T @ extender.schur @ self.basis).tocsc()
        self._ideal_lu = None
        self._patch_cache = {}

    # -- rhs assembly -----------------------------------------------------

    def _element_rhs(self, K, nu):
        return self.basis.T @ self.extender.element_form_vector(K, nu)

    def sources(self, nu, tol=0.0):
        """Elements whose boundary sees nonzero values of nu."""
        out = []
        for ed in self.extender.elements:
            if len(ed.free_dofs) and np.any(np.abs(nu[ed.free_dofs]) > tol):
                out.append(ed.tau)
        return out

    # -- ideal (non-localized) solves --------------------------------------

    def _solve_ideal(self, rhs):
        if self.dim == 0:
            return np.zeros(0)
        if self._ideal_lu is None:
            self._ideal_lu = spla.splu(self.gram)
        return refined_solve(self._ideal_lu.solve, self.gram, rhs,
                             rtol=self.rtol, what="ideal corrector solve")

    def ideal(self, K, nu):
        """P^K nu over the full corrector subspace."""
        return self.basis @ self._solve_ideal(self._element_rhs(K, nu))

    def ideal_sum(self, nu):
        """Sum over all elements, computed as a single projection."""
        rhs = self.basis.T @ (self.extender.schur @ nu)
        return self.basis @ self._solve_ideal(rhs)

    # -- localized solves ---------------------------------------------------

    def patch_columns(self, elements):
        """Subspace columns of edges interior to a set of coarse elements."""
        inside = np.zeros(self.mesh.coarse.num_triangles, dtype=bool)
        inside[elements] = True
        cols = []
        edge_tris = self.mesh.coarse.edge_tris
        for e in self.mesh.interior_edge_ids:
            t0, t1 = edge_tris[e]
            if inside[t0] and inside[t1]:
                sl = self.edge_columns[int(e)]
                cols.append(np.arange(sl.start, sl.stop))
        if cols:
            return np.concatenate(cols)
        return np.zeros(0, dtype=np.int64)

    def _patch_solver(self, elements):
        key = frozenset(int(t) for t in elements)
        cached = self._patch_cache.get(key)
        if cached is None:
            cols = self.patch_columns(elements)
            gram = self.gram[cols][:, cols].tocsc() if len(cols) else None
            lu = spla.splu(gram) if len(cols) else None
            cached = (cols, gram, lu)
            self._patch_cache[key] = cached
        return cached

    def localized(self, K, nu, j):
        """P^{K,j} nu: Galerkin solve on the patch-supported subspace."""
        if j is None or j < 1:
            raise InvalidParameterError(f"patch layers must be >= 1, got {j}")
        p = make_patch(self.mesh.coarse, K, j)
        cols, gram, lu = self._patch_solver(p.elements)
        out = np.zeros(self.mesh.num_skeleton_dofs)
        if not len(cols):
            return out
        rhs = self._element_rhs(K, nu)[cols]
        x = refined_solve(lu.solve, gram, rhs, rtol=self.rtol,
                          what="patch corrector solve")
        full = np.zeros(self.dim)
        full[cols] = x
        return self.basis @ full

    def localized_sum(self, nu, j):
        out = np.zeros(self.mesh.num_skeleton_dofs)
        for K in self.sources(nu):
            out += self.localized(K, nu, j)
        return out


def build_multiscale_basis(method, extender, j=None, split=None) -> MultiscaleBasis:
    """Corrected basis for one of the four skeleton methods.

    NLOD/LOD correct the coarse hat functions over the full fine-scale
    space; NLSD/LSD correct the coarse-vertex indicators plus the Pi
    edge modes over the triangle space (``split`` required).  LOD/LSD
    additionally need the patch width ``j``.
    """
    method = method.upper()
    mesh = extender.mesh
    localized = method in ("LOD", "LSD")
    spectralized = method in ("NLSD", "LSD")
    if method not in ("NLOD", "LOD", "NLSD", "LSD"):
        raise InvalidParameterError(f"unknown method {method!r}")
    if localized and (j is None or j < 1):
        raise InvalidParameterError(f"method {method} needs patch layers j >= 1")
    if spectralized and split is None:
        raise InvalidParameterError(f"method {method} needs an edge spectral split")

    members = []
    labels = []
    if spectralized:
        for d, v in enumerate(mesh.skeleton_nodes_NH):
            mu = np.zeros(mesh.num_skeleton_dofs)
            mu[d] = 1.0
            members.append(mu)
            labels.append(("vertex", int(v)))
        for e in mesh.interior_edge_ids:
            basis = split.bases[int(e)]
            sl = mesh.edge_dof_slice(int(e))
            for k in range(basis.pi_count):
                mu = np.zeros(mesh.num_skeleton_dofs)
                mu[sl] = basis.vectors[:, k]
                members.append(mu)
                labels.append(("edge", int(e), k))
    else:
        for v in mesh.skeleton_nodes_NH:
            members.append(hat_function(mesh, int(v)))
            labels.append(("vertex", int(v)))

    ctx = CorrectorContext(extender, split=split if spectralized else None)
    columns = []
    for mu in members:
        corr = ctx.localized_sum(mu, j) if localized else ctx.ideal_sum(mu)
        columns.append(mu - corr)

    return MultiscaleBasis(
        method=method,
        matrix=np.column_stack(columns) if columns else
        np.zeros((mesh.num_skeleton_dofs, 0)),
        labels=labels,
        subspace=ctx.subspace,
        j=j if localized else None,
        alpha_stab=None if split is None else split.alpha_stab,
        H_target=None if split is None else split.H_target,
        split=split,
    )


def corrector_tail_energies(extender, K, nu, j_values, split=None):
    """Energy of the ideal corrector outside T_{j+1}(K), per requested j."""
    ctx = CorrectorContext(extender, split=split)
    phi = ctx.ideal(K, nu)
    _, per_element = extender.skeleton_form(phi, phi)
    tails = []
    for j in j_values:
        p = make_patch(extender.mesh.coarse, K, j + 1)
        outside = np.setdiff1d(np.arange(extender.mesh.coarse.num_triangles),
                               p.elements)
        tails.append(float(per_element[outside].sum()))
    return tails, float(per_element.sum())


def fit_geometric_ratio(values, drop_below=1e-14, floor=0.0):
    """Least-squares ratio exp(slope) of log(values) against their index.

    Saturated entries (below ``drop_below`` times the first value, or
    below the absolute ``floor``) are excluded; returns NaN when fewer
    than two usable points remain.
    """
    values = np.asarray(values, dtype=float)
    if len(values) == 0 or values[0] <= 0:
        return float("nan")
    keep = values > max(drop_below * values[0], floor)
    idx = np.flatnonzero(keep)
    if len(idx) < 2:
        return float("nan")
    slope = np.polyfit(idx, np.log(values[idx]), 1)[0]
    return float(np.exp(slope))


def export_basis_csv(basis: MultiscaleBasis, extender, path) -> None:
    """Fine-node dump of every corrected basis function."""
    fine = [extender.extend(basis.matrix[:, k]) for k in range(basis.size)]
    with open(path, "w") as f:
        f.write("node,x,y," + ",".join(f"b{k}" for k in range(basis.size)) + "\n")
        verts = extender.mesh.fine_vertices
        for i in range(len(verts)):
            vals = ",".join(f"{u[i]:.12g}" for u in fine)
            f.write(f"{i},{verts[i, 0]:.12g},{verts[i, 1]:.12g},{vals}\n")
