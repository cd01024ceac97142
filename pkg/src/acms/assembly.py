"""P1 assembly of the weighted stiffness and mass forms on the fine mesh.

Coefficients are constant per fine element, so one-point quadrature is
exact and local matrices are bit-reproducible.  The load uses the
consistent (not lumped) weighted mass matrix applied to the P1
interpolant of the source.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GeometryError, InvalidParameterError
from .linsolve import refined_solve

_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


@dataclass(eq=False)
class FineSystem:
    stiffness: sp.csr_matrix
    mass_rho: sp.csr_matrix
    load: np.ndarray
    dirichlet: np.ndarray               # True on boundary nodes
    k_loc: np.ndarray = field(repr=False, default=None)  # (nft, 3, 3)
    m_loc: np.ndarray = field(repr=False, default=None)
    g_values: np.ndarray = field(repr=False, default=None)


def _gradients(verts):
    """P1 shape-function gradients (2, 3) and the signed area."""
    m = np.array([
        [verts[1][0] - verts[0][0], verts[2][0] - verts[0][0]],
        [verts[1][1] - verts[0][1], verts[2][1] - verts[0][1]],
    ])
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if det == 0:
        raise GeometryError("degenerate triangle")
    g = np.empty((2, 3))
    g[:, 1] = (m[1, 1] / det, -m[0, 1] / det)
    g[:, 2] = (-m[1, 0] / det, m[0, 0] / det)
    g[:, 0] = -g[:, 1] - g[:, 2]
    return g, 0.5 * det


def local_stiffness(verts, tensor):
    """Exact element stiffness for a constant tensor."""
    g, area = _gradients(np.asarray(verts, dtype=float))
    if area <= 0:
        raise GeometryError("triangle is not positively oriented")
    return area * g.T @ np.asarray(tensor, dtype=float) @ g


def local_mass(verts, rho):
    """Exact element weighted mass for constant rho."""
    if rho <= 0:
        raise InvalidParameterError("rho must be positive")
    _, area = _gradients(np.asarray(verts, dtype=float))
    if area <= 0:
        raise GeometryError("triangle is not positively oriented")
    return rho * area * _MASS_REF


def _all_local_matrices(mesh, field_):
    p = mesh.fine_vertices[mesh.fine_triangles]      # (nft, 3, 2)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if np.any(det <= 0):
        raise GeometryError("fine mesh contains degenerate or flipped triangles")
    area = 0.5 * det
    grads = np.empty((len(p), 2, 3))
    grads[:, 0, 1] = e2[:, 1] / det
    grads[:, 1, 1] = -e2[:, 0] / det
    grads[:, 0, 2] = -e1[:, 1] / det
    grads[:, 1, 2] = e1[:, 0] / det
    grads[:, :, 0] = -grads[:, :, 1] - grads[:, :, 2]
    k_loc = np.einsum("nai,nab,nbj->nij", grads, field_.tensors, grads)
    k_loc *= area[:, None, None]
    m_loc = (field_.rho * area)[:, None, None] * _MASS_REF
    return k_loc, m_loc


def assemble(mesh, field_, g=None) -> FineSystem:
    """Global stiffness/mass and the load vector (rho g, phi_i)."""
    if len(field_.tensors) != mesh.num_fine_triangles:
        raise InvalidParameterError("field does not match the fine mesh")
    k_loc, m_loc = _all_local_matrices(mesh, field_)
    tris = mesh.fine_triangles
    n = mesh.num_fine_vertices
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    stiffness = sp.coo_matrix((k_loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mass = sp.coo_matrix((m_loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()

    if g is None:
        g_vals = np.zeros(n)
    elif callable(g):
        g_vals = np.asarray(g(mesh.fine_vertices[:, 0], mesh.fine_vertices[:, 1]),
                            dtype=float)
        g_vals = np.broadcast_to(g_vals, (n,)).copy()
    else:
        g_vals = np.asarray(g, dtype=float)
        if g_vals.shape != (n,):
            raise InvalidParameterError("g values do not match the fine node count")
    load = mass @ g_vals

    return FineSystem(
        stiffness=stiffness, mass_rho=mass, load=load,
        dirichlet=mesh.fine_boundary.copy(),
        k_loc=k_loc, m_loc=m_loc, g_values=g_vals,
    )


def fine_solve(system: FineSystem, rtol: float = 1e-10) -> np.ndarray:
    """Monolithic reference solve with homogeneous Dirichlet data."""
    free = np.flatnonzero(~system.dirichlet)
    k_ff = system.stiffness[free][:, free].tocsc()
    b = system.load[free]
    u = np.zeros(len(system.load))
    if len(free):
        lu = spla.splu(k_ff)
        u[free] = refined_solve(lu.solve, k_ff, b, rtol=rtol, what="fine solve")
    return u


def energy_norm_sq(u, system: FineSystem) -> float:
    return float(u @ (system.stiffness @ u))


def weighted_l2_norm_sq(u, system: FineSystem) -> float:
    return float(u @ (system.mass_rho @ u))


def element_energy_sq(u, mesh, system: FineSystem) -> np.ndarray:
    """|u|^2_{H^1_A(tau)} per coarse element."""
    vals = u[mesh.fine_triangles]
    per_fine = np.einsum("ni,nij,nj->n", vals, system.k_loc, vals)
    out = np.zeros(mesh.coarse.num_triangles)
    np.add.at(out, mesh.parent_triangle, per_fine)
    return out


def element_weighted_l2_sq(u, mesh, system: FineSystem) -> np.ndarray:
    vals = u[mesh.fine_triangles]
    per_fine = np.einsum("ni,nij,nj->n", vals, system.m_loc, vals)
    out = np.zeros(mesh.coarse.num_triangles)
    np.add.at(out, mesh.parent_triangle, per_fine)
    return out


def write_coo(path, matrix) -> None:
    """Coordinate-format text dump (row, col, value) for external checks."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w") as f:
        for r, c, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{r} {c} {v:.17g}\n")
