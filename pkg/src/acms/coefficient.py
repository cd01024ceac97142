"""Piecewise-constant coefficient fields over the fine mesh.

Each fine element carries a symmetric 2x2 tensor and a positive scalar
weight.  Built-in patterns cover the benchmark cases: constants, diagonal
tensors, checkerboards, square inclusions (optionally straddling coarse
edges) and horizontal channels.  Patterns are sampled at fine-element
centroids, so the discrete field is the exact problem data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError


@dataclass(eq=False)
class CoefficientField:
    tensors: np.ndarray  # (nft, 2, 2) symmetric
    rho: np.ndarray      # (nft,) positive
    a_min: float
    a_max: float
    rho_min: float
    rho_max: float
    description: str = ""

    def eigen_range(self):
        """Per-element (smallest, largest) tensor eigenvalues, closed form."""
        t = self.tensors
        mean = 0.5 * (t[:, 0, 0] + t[:, 1, 1])
        disc = np.sqrt((0.5 * (t[:, 0, 0] - t[:, 1, 1])) ** 2 + t[:, 0, 1] ** 2)
        return mean - disc, mean + disc


@dataclass(eq=False)
class LocalCoefficientSummary:
    a_minus: np.ndarray   # per coarse element inf of smallest eigenvalue
    a_plus: np.ndarray    # per coarse element sup of largest eigenvalue
    kappa_tau: np.ndarray
    rho_minus: np.ndarray
    rho_plus: np.ndarray
    kappa: float


def parse_pattern(text: str):
    """Parse 'name:arg:...' descriptors used by the run configuration."""
    parts = str(text).strip().split(":")
    name = parts[0].lower()
    args = parts[1:]
    try:
        if name == "constant":
            (c,) = map(float, args)
            return ("constant", c)
        if name == "diag":
            ax, ay = map(float, args)
            return ("diag", ax, ay)
        if name == "checkerboard":
            lo, hi = float(args[0]), float(args[1])
            cells = int(args[2])
            return ("checkerboard", lo, hi, cells)
        if name == "inclusions":
            bg, contrast = float(args[0]), float(args[1])
            grid = int(args[2])
            cross = len(args) > 3 and args[3].lower() == "cross"
            if len(args) > 3 and args[3].lower() not in ("cross", "aligned"):
                raise ValueError(f"unknown inclusion placement {args[3]!r}")
            return ("inclusions", bg, contrast, grid, cross)
        if name == "channel":
            bg, contrast = float(args[0]), float(args[1])
            rows = int(args[2])
            return ("channel", bg, contrast, rows)
    except (TypeError, ValueError) as exc:
        raise InvalidParameterError(f"bad pattern descriptor {text!r}: {exc}") from exc
    raise InvalidParameterError(f"unknown pattern {name!r}")


def _scalar_values(pattern, centroids):
    """Isotropic pattern value at each centroid, plus (min, max) extremes."""
    kind = pattern[0]
    x, y = centroids[:, 0], centroids[:, 1]
    if kind == "constant":
        c = pattern[1]
        return np.full(len(centroids), c), c, c
    if kind == "checkerboard":
        _, lo, hi, cells = pattern
        ix = np.floor(x * cells).astype(int)
        iy = np.floor(y * cells).astype(int)
        vals = np.where((ix + iy) % 2 == 0, lo, hi)
        return vals, min(lo, hi), max(lo, hi)
    if kind == "inclusions":
        _, bg, contrast, grid, cross = pattern
        if cross:
            # squares of side 1/(2*grid) centered on the interior grid
            # corners, so they straddle any mesh line through those corners
            ix, iy = np.rint(x * grid), np.rint(y * grid)
            inside = (
                (np.abs(x * grid - ix) < 0.25) & (np.abs(y * grid - iy) < 0.25)
                & (ix >= 1) & (ix <= grid - 1) & (iy >= 1) & (iy <= grid - 1)
            )
        else:
            # squares tucked inside the below-diagonal half of each grid
            # cell; for grid == n they avoid every coarse edge
            fx = x * grid - np.floor(x * grid)
            fy = y * grid - np.floor(y * grid)
            inside = (0.55 < fx) & (fx < 0.85) & (0.15 < fy) & (fy < 0.45)
        vals = np.where(inside, bg * contrast, bg)
        lo, hi = bg * min(1.0, contrast), bg * max(1.0, contrast)
        return vals, lo, hi
    if kind == "channel":
        _, bg, contrast, rows = pattern
        bands = 2 * rows + 1
        band = np.floor(y * bands).astype(int)
        vals = np.where(band % 2 == 1, bg * contrast, bg)
        lo, hi = bg * min(1.0, contrast), bg * max(1.0, contrast)
        return vals, lo, hi
    raise InvalidParameterError(f"pattern {kind!r} is not scalar-valued")


def build_field(mesh, spec, rho_spec="constant:1") -> CoefficientField:
    """Sample a pattern descriptor into a per-fine-element field.

    ``spec`` and ``rho_spec`` may be descriptor strings or parsed tuples;
    ``rho_spec`` additionally accepts ``"amin"`` for rho = a_-(x).
    """
    pattern = parse_pattern(spec) if isinstance(spec, str) else spec
    centroids = mesh.fine_vertices[mesh.fine_triangles].mean(axis=1)
    nft = mesh.num_fine_triangles

    if pattern[0] == "diag":
        _, ax, ay = pattern
        if ax <= 0 or ay <= 0:
            raise InvalidParameterError("diagonal entries must be positive")
        tensors = np.zeros((nft, 2, 2))
        tensors[:, 0, 0] = ax
        tensors[:, 1, 1] = ay
        a_min, a_max = min(ax, ay), max(ax, ay)
    else:
        vals, a_min, a_max = _scalar_values(pattern, centroids)
        if a_min <= 0:
            raise InvalidParameterError("coefficient values must be positive")
        tensors = vals[:, None, None] * np.eye(2)

    if isinstance(rho_spec, str) and rho_spec.strip().lower() == "amin":
        lo, _hi = CoefficientField(tensors, np.ones(nft), 1, 1, 1, 1).eigen_range()
        rho = lo.copy()
        rho_min, rho_max = float(rho.min()), float(rho.max())
    else:
        rpat = parse_pattern(rho_spec) if isinstance(rho_spec, str) else rho_spec
        rho, rho_min, rho_max = _scalar_values(rpat, centroids)
        rho = np.asarray(rho, dtype=float)
    if rho_min <= 0:
        raise InvalidParameterError("rho must be positive")

    return CoefficientField(
        tensors=tensors, rho=rho,
        a_min=float(a_min), a_max=float(a_max),
        rho_min=float(rho_min), rho_max=float(rho_max),
        description=f"A={spec} rho={rho_spec}",
    )


def field_from_tensors(mesh, tensors, rho) -> CoefficientField:
    """Wrap explicit per-element data (mostly for tests)."""
    tensors = np.asarray(tensors, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if tensors.shape != (mesh.num_fine_triangles, 2, 2) or rho.shape != (mesh.num_fine_triangles,):
        raise InvalidParameterError("tensor/rho arrays do not match the fine mesh")
    if np.any(rho <= 0):
        raise InvalidParameterError("rho must be positive")
    field = CoefficientField(tensors, rho, 0, 0, float(rho.min()), float(rho.max()),
                             description="explicit")
    lo, hi = field.eigen_range()
    if lo.min() <= 0:
        raise InvalidParameterError("tensors must be positive definite")
    field.a_min, field.a_max = float(lo.min()), float(hi.max())
    return field


def local_bounds(field: CoefficientField, mesh) -> LocalCoefficientSummary:
    """Per-coarse-element coefficient extremes and contrast kappa."""
    lo, hi = field.eigen_range()
    nt = mesh.coarse.num_triangles
    a_minus = np.empty(nt)
    a_plus = np.empty(nt)
    rho_minus = np.empty(nt)
    rho_plus = np.empty(nt)
    for tau in range(nt):
        fts = mesh.tri_fine_tris[tau]
        a_minus[tau] = lo[fts].min()
        a_plus[tau] = hi[fts].max()
        rho_minus[tau] = field.rho[fts].min()
        rho_plus[tau] = field.rho[fts].max()
    kappa_tau = a_plus / a_minus
    return LocalCoefficientSummary(
        a_minus=a_minus, a_plus=a_plus, kappa_tau=kappa_tau,
        rho_minus=rho_minus, rho_plus=rho_plus, kappa=float(kappa_tau.max()),
    )


def dump_field_csv(field: CoefficientField, path: str) -> None:
    """Per-element dump: element id, tensor entries, rho."""
    with open(path, "w") as f:
        f.write("element,a11,a12,a22,rho\n")
        for i, (t, r) in enumerate(zip(field.tensors, field.rho)):
            f.write(f"{i},{t[0, 0]:.12g},{t[0, 1]:.12g},{t[1, 1]:.12g},{r:.12g}\n")
