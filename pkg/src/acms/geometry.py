"""Structured two-level triangulations of the unit square.

The coarse mesh splits an n x n grid of cells into two triangles each (all
cells use the same diagonal); the fine mesh is obtained by uniform red
(4-way) refinement, which keeps every coarse edge a union of fine edges.
Fine nodes are classified combinatorially during refinement, so skeleton /
interior bookkeeping is exact (no geometric tolerances).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, InvalidParameterError


@dataclass(eq=False)
class CoarseMesh:
    vertices: np.ndarray          # (nv, 2)
    triangles: np.ndarray         # (nt, 3), counterclockwise
    edges: np.ndarray             # (ne, 2), each row sorted
    edge_tris: np.ndarray         # (ne, 2), -1 when the edge has one neighbor
    tri_edges: np.ndarray         # (nt, 3), edge id of (v0,v1), (v1,v2), (v2,v0)
    vertex_on_boundary: np.ndarray
    edge_on_boundary: np.ndarray
    H: float
    n: int
    vertex_tris: list = field(repr=False, default=None)  # vertex -> incident triangles

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_triangles(self):
        return len(self.triangles)

    @property
    def num_edges(self):
        return len(self.edges)

    def interior_vertices(self):
        """Coarse vertex ids not on the domain boundary (the N_H set)."""
        return np.flatnonzero(~self.vertex_on_boundary)

    def interior_edges(self):
        return np.flatnonzero(~self.edge_on_boundary)


@dataclass(eq=False)
class Patch:
    center: int
    j: int
    elements: np.ndarray  # sorted coarse triangle ids

    def contains(self, tri):
        return bool(np.isin(tri, self.elements))


# fine-node classification codes
HOME_VERTEX = 0   # coincides with a coarse vertex
HOME_EDGE = 1     # interior of a coarse edge
HOME_INTERIOR = 2 # strictly inside a coarse triangle


@dataclass(eq=False)
class TwoLevelMesh:
    coarse: CoarseMesh
    r: int
    h: float
    fine_vertices: np.ndarray    # (nfv, 2); the first coarse.num_vertices rows are the coarse vertices
    fine_triangles: np.ndarray   # (nft, 3)
    parent_triangle: np.ndarray  # (nft,) coarse triangle of each fine triangle
    home_kind: np.ndarray        # (nfv,) HOME_* code
    home_index: np.ndarray       # (nfv,) coarse vertex / edge / triangle id
    fine_boundary: np.ndarray    # (nfv,) True on the domain boundary
    skeleton_nodes_NH: np.ndarray        # fine node ids of interior coarse vertices
    edge_nodes: list             # per coarse edge: fine node ids interior to it, in order
    interior_nodes: list         # per coarse triangle: fine node ids strictly inside
    tri_fine_tris: list          # per coarse triangle: its fine triangle ids

    # skeleton degree-of-freedom layout: N_H vertices first, then the interior
    # nodes of each interior coarse edge (edges in ascending id order)
    skeleton_fine_nodes: np.ndarray = None
    dof_of_fine_node: np.ndarray = None
    vertex_dof_count: int = 0
    interior_edge_ids: np.ndarray = None
    edge_dof_start: dict = None

    @property
    def num_fine_vertices(self):
        return len(self.fine_vertices)

    @property
    def num_fine_triangles(self):
        return len(self.fine_triangles)

    @property
    def num_skeleton_dofs(self):
        return len(self.skeleton_fine_nodes)

    @property
    def nodes_per_edge(self):
        return 2 ** self.r - 1

    def skeleton_nodes_Nh(self):
        """All fine nodes on the skeleton (coarse interior vertices + interior-edge nodes)."""
        return self.skeleton_fine_nodes.copy()

    def edge_dof_slice(self, edge_id):
        start = self.edge_dof_start[edge_id]
        return slice(start, start + self.nodes_per_edge)


def build_coarse_mesh(n: int) -> CoarseMesh:
    """Triangulate the unit square with n x n cells, two triangles per cell."""
    if n < 1:
        raise InvalidParameterError(f"cells per side must be >= 1, got {n}")
    xs = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    tris = []
    for j in range(n):
        for i in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))  # below the diagonal
            tris.append((v00, v11, v01))  # above the diagonal
    triangles = np.asarray(tris, dtype=np.int64)
    _check_orientation(vertices, triangles)

    edges, edge_tris, tri_edges = _build_edge_tables(triangles)
    vertex_on_boundary = (
        (vertices[:, 0] == 0.0) | (vertices[:, 0] == 1.0)
        | (vertices[:, 1] == 0.0) | (vertices[:, 1] == 1.0)
    )
    edge_on_boundary = edge_tris[:, 1] < 0

    vertex_tris = [[] for _ in range(len(vertices))]
    for t, tri in enumerate(triangles):
        for v in tri:
            vertex_tris[v].append(t)
    vertex_tris = [np.asarray(ts, dtype=np.int64) for ts in vertex_tris]

    return CoarseMesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        edge_tris=edge_tris,
        tri_edges=tri_edges,
        vertex_on_boundary=vertex_on_boundary,
        edge_on_boundary=edge_on_boundary,
        H=1.0 / n,
        n=n,
        vertex_tris=vertex_tris,
    )


def _check_orientation(vertices, triangles):
    p = vertices[triangles]
    cross = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) \
        - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
    if np.any(cross <= 0):
        raise GeometryError("triangulation contains non-positively-oriented triangles")


def _build_edge_tables(triangles):
    edge_ids = {}
    edges = []
    edge_tris = []
    tri_edges = np.empty((len(triangles), 3), dtype=np.int64)
    for t, (a, b, c) in enumerate(triangles):
        for k, (u, v) in enumerate(((a, b), (b, c), (c, a))):
            key = (u, v) if u < v else (v, u)
            e = edge_ids.get(key)
            if e is None:
                e = len(edges)
                edge_ids[key] = e
                edges.append(key)
                edge_tris.append([t, -1])
            else:
                if edge_tris[e][1] != -1:
                    raise GeometryError(f"edge {key} has more than two neighbors")
                edge_tris[e][1] = t
            tri_edges[t, k] = e
    return (
        np.asarray(edges, dtype=np.int64),
        np.asarray(edge_tris, dtype=np.int64),
        tri_edges,
    )


def refine(coarse: CoarseMesh, r: int) -> TwoLevelMesh:
    """Uniform red refinement applied r times; tracks node provenance."""
    if r < 1:
        raise InvalidParameterError(f"refinement levels must be >= 1, got {r}")

    coarse_edge_of_pair = {tuple(e): i for i, e in enumerate(coarse.edges)}
    verts = [tuple(p) for p in coarse.vertices]
    home_kind = [HOME_VERTEX] * len(verts)
    home_index = list(range(len(verts)))
    tris = [tuple(t) for t in coarse.triangles]
    parents = list(range(len(tris)))

    for _level in range(r):
        midpoint = {}

        def mid(u, v, parent):
            key = (u, v) if u < v else (v, u)
            m = midpoint.get(key)
            if m is not None:
                return m
            m = len(verts)
            verts.append((
                0.5 * (verts[u][0] + verts[v][0]),
                0.5 * (verts[u][1] + verts[v][1]),
            ))
            kind, idx = _midpoint_home(
                home_kind[u], home_index[u], home_kind[v], home_index[v],
                parent, coarse, coarse_edge_of_pair,
            )
            home_kind.append(kind)
            home_index.append(idx)
            midpoint[key] = m
            return m

        new_tris, new_parents = [], []
        for (a, b, c), p in zip(tris, parents):
            mab, mbc, mca = mid(a, b, p), mid(b, c, p), mid(c, a, p)
            new_tris.extend([(a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)])
            new_parents.extend([p, p, p, p])
        tris, parents = new_tris, new_parents

    fine_vertices = np.asarray(verts)
    fine_triangles = np.asarray(tris, dtype=np.int64)
    parent_triangle = np.asarray(parents, dtype=np.int64)
    home_kind = np.asarray(home_kind, dtype=np.int8)
    home_index = np.asarray(home_index, dtype=np.int64)
    _check_orientation(fine_vertices, fine_triangles)

    fine_boundary = np.zeros(len(fine_vertices), dtype=bool)
    on_vertex = home_kind == HOME_VERTEX
    fine_boundary[on_vertex] = coarse.vertex_on_boundary[home_index[on_vertex]]
    on_edge = home_kind == HOME_EDGE
    fine_boundary[on_edge] = coarse.edge_on_boundary[home_index[on_edge]]

    edge_nodes = _group_edge_nodes(coarse, fine_vertices, home_kind, home_index)
    interior_nodes = _group_by_index(
        home_kind, home_index, HOME_INTERIOR, coarse.num_triangles)
    tri_fine_tris = _group_parents(parent_triangle, coarse.num_triangles)

    mesh = TwoLevelMesh(
        coarse=coarse,
        r=r,
        h=coarse.H / 2 ** r,
        fine_vertices=fine_vertices,
        fine_triangles=fine_triangles,
        parent_triangle=parent_triangle,
        home_kind=home_kind,
        home_index=home_index,
        fine_boundary=fine_boundary,
        skeleton_nodes_NH=coarse.interior_vertices().astype(np.int64),
        edge_nodes=edge_nodes,
        interior_nodes=interior_nodes,
        tri_fine_tris=tri_fine_tris,
    )
    _index_skeleton_dofs(mesh)
    return mesh


def _midpoint_home(kind_u, idx_u, kind_v, idx_v, parent, coarse, edge_of_pair):
    if kind_u == HOME_VERTEX and kind_v == HOME_VERTEX:
        e = edge_of_pair.get((idx_u, idx_v) if idx_u < idx_v else (idx_v, idx_u))
        if e is not None:
            return HOME_EDGE, e
    elif kind_u == HOME_VERTEX and kind_v == HOME_EDGE:
        if idx_u in coarse.edges[idx_v]:
            return HOME_EDGE, idx_v
    elif kind_u == HOME_EDGE and kind_v == HOME_VERTEX:
        if idx_v in coarse.edges[idx_u]:
            return HOME_EDGE, idx_u
    elif kind_u == HOME_EDGE and kind_v == HOME_EDGE and idx_u == idx_v:
        return HOME_EDGE, idx_u
    return HOME_INTERIOR, parent


def _group_edge_nodes(coarse, fine_vertices, home_kind, home_index):
    groups = [[] for _ in range(coarse.num_edges)]
    for node in np.flatnonzero(home_kind == HOME_EDGE):
        groups[home_index[node]].append(node)
    ordered = []
    for e, nodes in enumerate(groups):
        nodes = np.asarray(nodes, dtype=np.int64)
        if len(nodes):
            v0, v1 = coarse.edges[e]
            d = coarse.vertices[v1] - coarse.vertices[v0]
            t = (fine_vertices[nodes] - coarse.vertices[v0]) @ d
            nodes = nodes[np.argsort(t)]
        ordered.append(nodes)
    return ordered


def _group_by_index(home_kind, home_index, kind, count):
    groups = [[] for _ in range(count)]
    for node in np.flatnonzero(home_kind == kind):
        groups[home_index[node]].append(node)
    return [np.asarray(g, dtype=np.int64) for g in groups]


def _group_parents(parent_triangle, count):
    order = np.argsort(parent_triangle, kind="stable")
    splits = np.searchsorted(parent_triangle[order], np.arange(1, count))
    return [g for g in np.split(order, splits)]


def _index_skeleton_dofs(mesh):
    coarse = mesh.coarse
    nodes = list(mesh.skeleton_nodes_NH)
    mesh.vertex_dof_count = len(nodes)
    mesh.interior_edge_ids = coarse.interior_edges().astype(np.int64)
    mesh.edge_dof_start = {}
    for e in mesh.interior_edge_ids:
        mesh.edge_dof_start[int(e)] = len(nodes)
        nodes.extend(mesh.edge_nodes[e])
    mesh.skeleton_fine_nodes = np.asarray(nodes, dtype=np.int64)
    mesh.dof_of_fine_node = np.full(mesh.num_fine_vertices, -1, dtype=np.int64)
    mesh.dof_of_fine_node[mesh.skeleton_fine_nodes] = np.arange(len(nodes))


def patch(coarse: CoarseMesh, K: int, j: int) -> Patch:
    """T_j(K): j layers of vertex-touching coarse elements around K."""
    if not 0 <= K < coarse.num_triangles:
        raise InvalidParameterError(f"element index {K} out of range")
    if j < 1:
        raise InvalidParameterError(f"layer count must be >= 1, got {j}")
    current = {int(K)}
    for _ in range(j - 1):
        grown = set(current)
        for t in current:
            for v in coarse.triangles[t]:
                grown.update(coarse.vertex_tris[v].tolist())
        if grown == current:
            break
        current = grown
    return Patch(center=int(K), j=j,
                 elements=np.asarray(sorted(current), dtype=np.int64))


def saturation_layers(coarse: CoarseMesh) -> int:
    """Smallest j with T_j(K) = T_H for every K."""
    j = 1
    while True:
        if all(len(patch(coarse, K, j).elements) == coarse.num_triangles
               for K in range(coarse.num_triangles)):
            return j
        j += 1


def patch_overlap_counts(coarse: CoarseMesh, j: int) -> np.ndarray:
    """Per element tau: number of K with tau in T_{j+1}(K)."""
    counts = np.zeros(coarse.num_triangles, dtype=np.int64)
    for K in range(coarse.num_triangles):
        counts[patch(coarse, K, j + 1).elements] += 1
    return counts


def fit_overlap_constant(coarse: CoarseMesh, j_max: int = 4) -> float:
    """Smallest c with overlap counts <= (c*j)^2 for j = 1..j_max."""
    c = 0.0
    for j in range(1, j_max + 1):
        c = max(c, np.sqrt(patch_overlap_counts(coarse, j).max()) / j)
    return float(c)


def export_mesh(mesh: TwoLevelMesh, directory: str) -> None:
    """Plain-text node/element dumps of both levels, for external inspection."""
    os.makedirs(directory, exist_ok=True)
    specs = [
        ("coarse", mesh.coarse.vertices, mesh.coarse.triangles),
        ("fine", mesh.fine_vertices, mesh.fine_triangles),
    ]
    for tag, verts, tris in specs:
        with open(os.path.join(directory, f"{tag}_nodes.txt"), "w") as f:
            for i, (x, y) in enumerate(verts):
                f.write(f"{i} {x:.17g} {y:.17g}\n")
        with open(os.path.join(directory, f"{tag}_elements.txt"), "w") as f:
            for i, (a, b, c) in enumerate(tris):
                f.write(f"{i} {a} {b} {c}\n")
