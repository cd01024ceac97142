"""Figure rendering for the benchmark reports.

Every report CSV gets a companion PNG written next to it.  Uses the Agg
backend so runs work headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.tri as mtri  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams.update({
    "figure.figsize": (5.2, 3.6),
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
})


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def field_figure(mesh, values, path, title="", nodal=True, log_color=False):
    """Tripcolor plot of a nodal or per-element fine field."""
    tri = mtri.Triangulation(mesh.fine_vertices[:, 0], mesh.fine_vertices[:, 1],
                             mesh.fine_triangles)
    fig, ax = plt.subplots()
    vals = np.asarray(values, dtype=float)
    if log_color:
        vals = np.log10(np.maximum(vals, 1e-300))
    if nodal:
        img = ax.tripcolor(tri, vals, shading="gouraud")
    else:
        img = ax.tripcolor(tri, facecolors=vals)
    fig.colorbar(img, ax=ax)
    ax.set_aspect("equal")
    ax.set_title(title)
    ax.grid(False)
    return _finish(fig, path)


def convergence_figure(H_values, errors, bounds, path):
    fig, ax = plt.subplots()
    ax.loglog(H_values, errors, "o-", label="energy error")
    ax.loglog(H_values, bounds, "s--", label="theory bound")
    ref = [errors[0] * h / H_values[0] for h in H_values]
    ax.loglog(H_values, ref, "k:", label="O(H)")
    ax.set_xlabel("H")
    ax.set_ylabel("|u_ref - u_ms| (energy)")
    ax.invert_xaxis()
    ax.legend()
    return _finish(fig, path)


def decay_figure(j_values, loc_errors, tails, path):
    fig, ax = plt.subplots()
    pos = [max(e, 1e-300) for e in loc_errors]
    ax.semilogy(j_values, pos, "o-", label="localization error")
    if tails is not None:
        ax.semilogy(j_values, [max(t, 1e-300) for t in tails], "s--",
                    label="corrector tail energy")
    ax.set_xlabel("patch layers j")
    ax.legend()
    return _finish(fig, path)


def contrast_figure(contrasts, lod_errors, lsd_errors, path):
    fig, ax = plt.subplots()
    ax.loglog(contrasts, lod_errors, "o-", label="LOD")
    ax.loglog(contrasts, lsd_errors, "s-", label="LSD")
    ax.set_xlabel("coefficient contrast")
    ax.set_ylabel("relative energy error")
    ax.legend()
    return _finish(fig, path)


def spectrum_figure(rows, alpha_stab, path):
    fig, ax = plt.subplots()
    edges = [r[0] for r in rows]
    alphas = [min(r[2], 1e16) for r in rows]
    tags = [r[3] for r in rows]
    for tag, marker in (("pi", "^"), ("delta", ".")):
        xs = [e for e, t in zip(edges, tags) if t == tag]
        ys = [a for a, t in zip(alphas, tags) if t == tag]
        if xs:
            ax.semilogy(xs, ys, marker, linestyle="none", label=tag)
    ax.axhline(alpha_stab, color="k", linestyle=":", label="alpha_stab")
    ax.set_xlabel("edge id")
    ax.set_ylabel("alpha")
    ax.legend()
    return _finish(fig, path)


def diagnostics_figure(log_factors, cpl_squared, path):
    fig, ax = plt.subplots()
    ax.plot(log_factors, cpl_squared, "o-", label="c_PL^2")
    if len(log_factors) >= 2:
        coef = np.polyfit(log_factors, cpl_squared, 1)
        ax.plot(log_factors, np.polyval(coef, log_factors), "k--",
                label=f"fit slope {coef[0]:.3g}")
    ax.set_xlabel("1 + log(H/h)")
    ax.legend()
    return _finish(fig, path)
