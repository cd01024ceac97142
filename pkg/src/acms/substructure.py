"""Interior/skeleton splitting of the fine problem.

Per coarse element we factorize the interior stiffness block once; that
yields the discrete harmonic extension, the element Schur complements
that realize the skeleton form s_tau, the exact bubble solve, and the
edge blocks feeding the high-contrast eigenproblems.  Skeleton functions
are plain vectors over the skeleton degree-of-freedom layout defined by
the mesh (interior coarse vertices first, then the interior nodes of
each interior coarse edge).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidParameterError, NotApplicableError
from .linsolve import refined_solve


@dataclass(eq=False)
class EdgeBlocks:
    """Dense edge operators for one interior coarse edge.

    Lists hold the two neighbor contributions in ``tris`` order:
    ``S`` the Schur energy of zero-extended edge traces, ``M`` the
    rho-weighted mass of their harmonic extensions, ``S_hat = M/HH^2 + S``
    and ``S_tilde`` the reduced Schur complement, which bounds the energy
    of any boundary function matching the trace on the edge from below.
    """

    edge: int
    tris: tuple
    m: int
    H_target: float
    S: list
    M: list
    S_hat: list
    S_tilde: list


class _ElementData:
    __slots__ = (
        "tau", "b_nodes", "i_nodes", "nb", "k_ii", "cho_ii", "w", "m_full",
        "schur_full", "free_pos", "free_dofs", "schur_free",
        "edge_ids", "edge_bpos", "edge_free_idx", "vertex_free_idx",
    )


class HarmonicExtender:
    """Element-local harmonic extension and the assembled skeleton form."""

    def __init__(self, mesh, system):
        self.mesh = mesh
        self.system = system
        self.elements = []
        n_dofs = mesh.num_skeleton_dofs
        rows, cols, vals = [], [], []
        for tau in range(mesh.coarse.num_triangles):
            ed = self._build_element(tau)
            self.elements.append(ed)
            if len(ed.free_dofs):
                r = np.repeat(ed.free_dofs, len(ed.free_dofs))
                c = np.tile(ed.free_dofs, len(ed.free_dofs))
                rows.append(r)
                cols.append(c)
                vals.append(ed.schur_free.ravel())
        self.schur = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_dofs, n_dofs)).tocsr()
        self._schur_lu = None
        self._skeleton_mass = None

    # -- construction ---------------------------------------------------

    def _build_element(self, tau):
        mesh = self.mesh
        coarse = mesh.coarse
        ed = _ElementData()
        ed.tau = tau
        verts = coarse.triangles[tau]
        ed.edge_ids = coarse.tri_edges[tau]
        b_nodes = list(verts)
        ed.edge_bpos = []
        for e in ed.edge_ids:
            start = len(b_nodes)
            b_nodes.extend(mesh.edge_nodes[e])
            ed.edge_bpos.append(np.arange(start, len(b_nodes)))
        ed.b_nodes = np.asarray(b_nodes, dtype=np.int64)
        ed.i_nodes = mesh.interior_nodes[tau]
        ed.nb = len(ed.b_nodes)

        loc_nodes = np.concatenate([ed.b_nodes, ed.i_nodes])
        nloc = len(loc_nodes)
        loc_of = {int(g): l for l, g in enumerate(loc_nodes)}
        fts = mesh.tri_fine_tris[tau]
        tri_loc = np.array(
            [[loc_of[int(v)] for v in mesh.fine_triangles[t]] for t in fts],
            dtype=np.int64)
        k = np.zeros((nloc, nloc))
        m = np.zeros((nloc, nloc))
        r = np.repeat(tri_loc, 3, axis=1).ravel()
        c = np.tile(tri_loc, (1, 3)).ravel()
        np.add.at(k, (r, c), self.system.k_loc[fts].ravel())
        np.add.at(m, (r, c), self.system.m_loc[fts].ravel())
        ed.m_full = m

        nb = ed.nb
        k_bb = k[:nb, :nb]
        k_bi = k[:nb, nb:]
        k_ii = k[nb:, nb:]
        ed.k_ii = k_ii
        ed.cho_ii = la.cho_factor(k_ii)
        ed.w = la.cho_solve(ed.cho_ii, k_bi.T)     # interior = -w @ boundary
        schur = k_bb - k_bi @ ed.w
        ed.schur_full = 0.5 * (schur + schur.T)

        free_mask = ~mesh.fine_boundary[ed.b_nodes]
        ed.free_pos = np.flatnonzero(free_mask)
        ed.free_dofs = mesh.dof_of_fine_node[ed.b_nodes[ed.free_pos]]
        ed.schur_free = ed.schur_full[np.ix_(ed.free_pos, ed.free_pos)]
        pos_in_free = np.full(nb, -1, dtype=np.int64)
        pos_in_free[ed.free_pos] = np.arange(len(ed.free_pos))
        ed.edge_free_idx = [pos_in_free[bp] for bp in ed.edge_bpos]
        ed.vertex_free_idx = pos_in_free[:3]
        return ed

    # -- extension and forms ---------------------------------------------

    def extend(self, mu: np.ndarray) -> np.ndarray:
        """Discrete harmonic extension of skeleton values into all elements."""
        mesh = self.mesh
        u = np.zeros(mesh.num_fine_vertices)
        u[mesh.skeleton_fine_nodes] = mu
        for ed in self.elements:
            if len(ed.i_nodes):
                u[ed.i_nodes] = -ed.w @ u[ed.b_nodes]
        return u

    def extension_matrix(self) -> sp.csr_matrix:
        """Sparse fine-by-skeleton matrix representing the extension."""
        mesh = self.mesh
        rows = [mesh.skeleton_fine_nodes]
        cols = [np.arange(mesh.num_skeleton_dofs)]
        vals = [np.ones(mesh.num_skeleton_dofs)]
        for ed in self.elements:
            if not len(ed.i_nodes) or not len(ed.free_dofs):
                continue
            block = -ed.w[:, ed.free_pos]
            rows.append(np.repeat(ed.i_nodes, len(ed.free_dofs)))
            cols.append(np.tile(ed.free_dofs, len(ed.i_nodes)))
            vals.append(block.ravel())
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(mesh.num_fine_vertices, mesh.num_skeleton_dofs)).tocsr()

    def element_form(self, tau, mu, nu) -> float:
        """s_tau(mu, nu) through the element Schur complement."""
        ed = self.elements[tau]
        if not len(ed.free_dofs):
            return 0.0
        return float(mu[ed.free_dofs] @ ed.schur_free @ nu[ed.free_dofs])

    def skeleton_form(self, mu, nu):
        """s(mu, nu) together with the per-element values s_tau."""
        per = np.array([self.element_form(t, mu, nu)
                        for t in range(len(self.elements))])
        return float(per.sum()), per

    def element_form_vector(self, tau, nu) -> np.ndarray:
        """Vector of s_tau(nu, basis_d) over all skeleton dofs d."""
        ed = self.elements[tau]
        out = np.zeros(self.mesh.num_skeleton_dofs)
        if len(ed.free_dofs):
            out[ed.free_dofs] = ed.schur_free @ nu[ed.free_dofs]
        return out

    # -- solves -----------------------------------------------------------

    def bubble_solve(self, load: np.ndarray) -> np.ndarray:
        """Element-interior solves; zero on the skeleton."""
        u = np.zeros(self.mesh.num_fine_vertices)
        for ed in self.elements:
            if len(ed.i_nodes):
                u[ed.i_nodes] = la.cho_solve(ed.cho_ii, load[ed.i_nodes])
        return u

    def condensed_load(self, load: np.ndarray) -> np.ndarray:
        """(rho g, T basis_d) for every skeleton dof d (static condensation)."""
        c = load[self.mesh.skeleton_fine_nodes].astype(float).copy()
        for ed in self.elements:
            if len(ed.i_nodes) and len(ed.free_dofs):
                c[ed.free_dofs] -= (ed.w.T @ load[ed.i_nodes])[ed.free_pos]
        return c

    def schur_factor(self):
        if self._schur_lu is None:
            self._schur_lu = spla.splu(self.schur.tocsc())
        return self._schur_lu

    def skeleton_solve(self, condensed: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
        """Exact substructured skeleton solution of s(lambda, .) = (rho g, T .)."""
        return refined_solve(self.schur_factor().solve, self.schur, condensed,
                             rtol=rtol, what="skeleton solve")

    def skeleton_mass_matrix(self) -> sp.csr_matrix:
        """Gram matrix of harmonic extensions in the rho-weighted L2 product."""
        if self._skeleton_mass is None:
            t = self.extension_matrix()
            self._skeleton_mass = (t.T @ self.system.mass_rho @ t).tocsr()
        return self._skeleton_mass

    # -- edge operators ----------------------------------------------------

    def _edge_side_blocks(self, ed, e_local, H_target):
        idx = ed.edge_free_idx[e_local]
        s_loc = ed.schur_free
        comp = np.setdiff1d(np.arange(len(ed.free_dofs)), idx)
        s_ee = s_loc[np.ix_(idx, idx)]
        if len(comp):
            s_ec = s_loc[np.ix_(idx, comp)]
            s_cc = s_loc[np.ix_(comp, comp)]
            s_tilde = s_ee - s_ec @ la.solve(s_cc, s_ec.T, assume_a="pos")
        else:
            s_tilde = s_ee.copy()
        s_tilde = 0.5 * (s_tilde + s_tilde.T)

        # harmonic extension of each unit edge-trace, zero elsewhere on the boundary
        bpos = ed.edge_bpos[e_local]
        nloc = ed.m_full.shape[0]
        z = np.zeros((nloc, len(bpos)))
        z[bpos, np.arange(len(bpos))] = 1.0
        if len(ed.i_nodes):
            z[ed.nb:, :] = -ed.w[:, bpos]
        m_ee = z.T @ ed.m_full @ z
        m_ee = 0.5 * (m_ee + m_ee.T)
        return s_ee, m_ee, m_ee / H_target ** 2 + s_ee, s_tilde

    def edge_blocks(self, edge: int, H_target: float) -> EdgeBlocks:
        """S, M, S_hat and S_tilde blocks for an interior coarse edge."""
        coarse = self.mesh.coarse
        if coarse.edge_on_boundary[edge]:
            raise NotApplicableError(
                f"edge {edge} lies on the domain boundary and carries no eigenproblem")
        if H_target <= 0:
            raise InvalidParameterError("target precision must be positive")
        t0, t1 = coarse.edge_tris[edge]
        S, M, S_hat, S_tilde = [], [], [], []
        for tau in (t0, t1):
            ed = self.elements[tau]
            e_local = int(np.flatnonzero(ed.edge_ids == edge)[0])
            s, m, sh, st = self._edge_side_blocks(ed, e_local, H_target)
            S.append(s)
            M.append(m)
            S_hat.append(sh)
            S_tilde.append(st)
        return EdgeBlocks(
            edge=int(edge), tris=(int(t0), int(t1)), m=self.mesh.nodes_per_edge,
            H_target=float(H_target), S=S, M=M, S_hat=S_hat, S_tilde=S_tilde)

    def element_trace_mass(self, tau, free_idx) -> np.ndarray:
        """rho-weighted L2 Gram of harmonic extensions of selected trace dofs."""
        ed = self.elements[tau]
        bpos = ed.free_pos[free_idx]
        nloc = ed.m_full.shape[0]
        z = np.zeros((nloc, len(bpos)))
        z[bpos, np.arange(len(bpos))] = 1.0
        if len(ed.i_nodes):
            z[ed.nb:, :] = -ed.w[:, bpos]
        g = z.T @ ed.m_full @ z
        return 0.5 * (g + g.T)


# -- skeleton-function helpers ------------------------------------------


def is_fine_scale(mu, mesh, tol=0.0) -> bool:
    """Member of the fine-scale subspace: vanishes at all interior coarse vertices."""
    return bool(np.all(np.abs(mu[:mesh.vertex_dof_count]) <= tol))


def is_coarse(mu, mesh, tol=1e-12) -> bool:
    """Member of the coarse trace space: linear along every interior edge."""
    return bool(np.max(np.abs(mu - coarse_interpolant(mu, mesh)), initial=0.0) <= tol)


def vertex_value(mu, mesh, coarse_vertex) -> float:
    dof = mesh.dof_of_fine_node[coarse_vertex]
    return float(mu[dof]) if dof >= 0 else 0.0


def coarse_interpolant(mu, mesh) -> np.ndarray:
    """Nodal interpolation onto the coarse trace space (linear along edges)."""
    out = np.zeros_like(mu)
    out[:mesh.vertex_dof_count] = mu[:mesh.vertex_dof_count]
    m = mesh.nodes_per_edge
    t = np.arange(1, m + 1) / (m + 1)
    for e in mesh.interior_edge_ids:
        v0, v1 = mesh.coarse.edges[e]
        mu0 = vertex_value(mu, mesh, v0)
        mu1 = vertex_value(mu, mesh, v1)
        out[mesh.edge_dof_slice(int(e))] = (1 - t) * mu0 + t * mu1
    return out


def hat_function(mesh, coarse_vertex) -> np.ndarray:
    """Coarse hat: 1 at one interior coarse vertex, linear along its edges."""
    mu = np.zeros(mesh.num_skeleton_dofs)
    dof = mesh.dof_of_fine_node[coarse_vertex]
    if dof < 0 or dof >= mesh.vertex_dof_count:
        raise NotApplicableError(f"vertex {coarse_vertex} is not an interior coarse vertex")
    mu[dof] = 1.0
    return coarse_interpolant(mu, mesh)


def write_block(path, block) -> None:
    """Coordinate text dump of one dense edge block."""
    with open(path, "w") as f:
        for i in range(block.shape[0]):
            for j in range(block.shape[1]):
                f.write(f"{i} {j} {block[i, j]:.17g}\n")
