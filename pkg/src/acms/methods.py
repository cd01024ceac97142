"""Assemble and solve the multiscale methods, recombine fields, and
measure every norm and bound the benchmark reports.

The reference for all error reports is the fine Galerkin solution,
recovered through the substructured solve (bubble part plus harmonic
extension of the exact skeleton solution); the monolithic fine solve is
kept as an independent cross-check of that identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from . import assembly, spectral
from .coefficient import local_bounds
from .corrector import build_multiscale_basis
from .errors import InvalidParameterError, NumericalError
from .linsolve import refined_solve
from .substructure import HarmonicExtender, coarse_interpolant


@dataclass(eq=False)
class MultiscaleSolution:
    method: str
    skeleton: np.ndarray      # multiscale skeleton solution
    harmonic: np.ndarray      # its harmonic extension (fine nodes)
    bubble: np.ndarray        # exact or spectral bubble part (fine nodes)
    combined: np.ndarray
    bubble_mode: str
    params: dict


@dataclass(eq=False)
class ErrorReport:
    method: str
    params: dict
    g_norm: float
    ref_energy: float                 # |u_h|_{H^1_A}
    harmonic_energy: float            # |T lambda_h|_{H^1_A}
    err_energy: float                 # |u_h - u_ms|_{H^1_A}, combined fields
    err_energy_rel: float
    err_harmonic: float               # |T(lambda_h - lambda_ms)|_{H^1_A}
    err_harmonic_rel: float
    err_l2rho: float
    err_l2rho_rel: float
    err_bubble: float
    bound_low_contrast: float         # c_PL * H * ||g||
    bound_high_contrast: float        # sqrt(9 alpha_stab) * HH * ||g||
    c_PL: float
    kappa: float
    extras: dict = field(default_factory=dict)


@dataclass(eq=False)
class DiagnosticsRecord:
    c_PL: float
    c_PL_per_element: np.ndarray
    C_PG: float
    kappa: float
    log_factor: float                 # 1 + log(H/h)
    face_ratio_max: float
    interp_ratio_max: float
    samples: int


def solve_skeleton(basis, extender, load, rtol: float = 1e-10) -> np.ndarray:
    """Galerkin solve of the skeleton problem in the multiscale basis."""
    if basis.size == 0:
        raise InvalidParameterError("multiscale basis is empty")
    b = basis.matrix
    gram = b.T @ (extender.schur @ b)
    gram = 0.5 * (gram + gram.T)
    rhs = b.T @ extender.condensed_load(load)
    try:
        coeffs = la.cho_factor(gram)
    except la.LinAlgError as exc:
        worst = int(np.argmin(np.diag(gram)))
        raise NumericalError(
            f"multiscale system is not SPD near basis function {basis.labels[worst]}"
        ) from exc
    x = refined_solve(lambda v: la.cho_solve(coeffs, v), gram, rhs,
                      rtol=rtol, what="skeleton method solve")
    return b @ x


def solve_bubble_ms(bubble_bases, extender, load) -> np.ndarray:
    """Per-element Galerkin solve in the retained bubble eigenmodes."""
    mesh = extender.mesh
    u = np.zeros(mesh.num_fine_vertices)
    for basis in bubble_bases:
        if basis.count == 0:
            continue
        i_nodes = extender.elements[basis.tau].i_nodes
        coeffs = (basis.vectors.T @ load[i_nodes]) / basis.eigenvalues
        u[i_nodes] = basis.vectors @ coeffs
    return u


def energy_error(u, v, system) -> float:
    return float(np.sqrt(max(assembly.energy_norm_sq(u - v, system), 0.0)))


def weighted_l2_error(u, v, system) -> float:
    return float(np.sqrt(max(assembly.weighted_l2_norm_sq(u - v, system), 0.0)))


def local_poincare_constants(extender) -> np.ndarray:
    """c_PL per coarse element from the trace pencil (mass, Schur energy)."""
    mesh = extender.mesh
    H = mesh.coarse.H
    out = np.zeros(mesh.coarse.num_triangles)
    for ed in extender.elements:
        idx = np.concatenate([fi for fi in ed.edge_free_idx if len(fi)]) \
            if any(len(fi) for fi in ed.edge_free_idx) else np.empty(0, dtype=int)
        idx = idx[idx >= 0] if len(idx) else idx
        if len(idx) == 0:
            continue
        s_loc = ed.schur_free[np.ix_(idx, idx)]
        m_loc = extender.element_trace_mass(ed.tau, idx)
        lam_max = la.eigh(m_loc, s_loc, eigvals_only=True)[-1]
        out[ed.tau] = np.sqrt(max(lam_max, 0.0)) / H
    return out


def global_poincare_constant(extender, tol=1e-10, max_iter=200, seed=0) -> float:
    """C_PG by power iteration on the pencil (extension mass, Schur)."""
    mesh = extender.mesh
    n = mesh.num_skeleton_dofs
    mass = extender.skeleton_mass_matrix()
    lu = extender.schur_factor()
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = lu.solve(mass @ x)
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0
        y /= norm
        lam_new = float(y @ (mass @ y)) / float(y @ (extender.schur @ y))
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-300):
            lam = lam_new
            break
        lam, x = lam_new, y
    return float(np.sqrt(lam))


def diagnostics(mesh, field_, extender, samples: int = 20, seed: int = 0,
                summary=None) -> DiagnosticsRecord:
    """Realized constants of the decay/error machinery.

    Face-lemma ratios compare the energy of single-edge restrictions of
    random fine-scale traces against the full trace energy, per element;
    interpolation ratios compare coarse nodal interpolants against the
    original skeleton function, per element and globally.
    """
    if summary is None:
        summary = local_bounds(field_, mesh)
    c_pl_tau = local_poincare_constants(extender)
    c_pg = global_poincare_constant(extender, seed=seed)

    rng = np.random.default_rng(seed + 1)
    face_max = 0.0
    for _ in range(samples):
        mu = rng.standard_normal(mesh.num_skeleton_dofs)
        mu[:mesh.vertex_dof_count] = 0.0
        for ed in extender.elements:
            denom = extender.element_form(ed.tau, mu, mu)
            if denom <= 0:
                continue
            for idx in ed.edge_free_idx:
                if not len(idx):
                    continue
                chi = np.zeros(len(ed.free_dofs))
                chi[idx] = mu[ed.free_dofs][idx]
                num = float(chi @ ed.schur_free @ chi)
                face_max = max(face_max, num / denom)

    interp_max = 0.0
    for _ in range(samples):
        mu = rng.standard_normal(mesh.num_skeleton_dofs)
        imu = coarse_interpolant(mu, mesh)
        num, per_num = extender.skeleton_form(imu, imu)
        den, per_den = extender.skeleton_form(mu, mu)
        if den > 0:
            interp_max = max(interp_max, num / den)
        good = per_den > 1e-14 * max(den, 1e-300)
        if np.any(good):
            interp_max = max(interp_max, float((per_num[good] / per_den[good]).max()))

    return DiagnosticsRecord(
        c_PL=float(c_pl_tau.max()),
        c_PL_per_element=c_pl_tau,
        C_PG=c_pg,
        kappa=summary.kappa,
        log_factor=1.0 + np.log(mesh.coarse.H / mesh.h),
        face_ratio_max=face_max,
        interp_ratio_max=interp_max,
        samples=samples,
    )


def solve_multiscale(mesh, field_, system, method, j=None, alpha_stab=None,
                     H_target=None, bubble_mode="exact", extender=None,
                     split=None, basis=None):
    """Full pipeline for one method: basis, skeleton solve, bubble, errors."""
    method = method.upper()
    if extender is None:
        extender = HarmonicExtender(mesh, system)
    if H_target is None:
        H_target = mesh.coarse.H
    needs_split = method in ("NLSD", "LSD")
    if needs_split and split is None:
        bases = spectral.compute_edge_bases(extender, H_target, alpha_stab)
        split = spectral.split_skeleton_spaces(bases, mesh)
    if basis is None:
        basis = build_multiscale_basis(method, extender,
                                       j=j if method in ("LOD", "LSD") else None,
                                       split=split if needs_split else None)

    lam_ms = solve_skeleton(basis, extender, system.load)
    u_ms_harm = extender.extend(lam_ms)
    if bubble_mode == "spectral":
        bubble_bases = spectral.compute_bubble_bases(extender, H_target)
        u_bubble = solve_bubble_ms(bubble_bases, extender, system.load)
    elif bubble_mode == "exact":
        u_bubble = extender.bubble_solve(system.load)
    else:
        raise InvalidParameterError(f"unknown bubble mode {bubble_mode!r}")

    params = dict(method=method, j=j, alpha_stab=alpha_stab, H_target=H_target,
                  bubble=bubble_mode, n=mesh.coarse.n, r=mesh.r,
                  H=mesh.coarse.H, h=mesh.h)
    solution = MultiscaleSolution(
        method=method, skeleton=lam_ms, harmonic=u_ms_harm, bubble=u_bubble,
        combined=u_ms_harm + u_bubble, bubble_mode=bubble_mode, params=params)

    report = error_report(solution, mesh, field_, system, extender,
                          alpha_stab=alpha_stab)
    return solution, report


def error_report(solution, mesh, field_, system, extender,
                 alpha_stab=None) -> ErrorReport:
    lam_exact = extender.skeleton_solve(extender.condensed_load(system.load))
    u_harm = extender.extend(lam_exact)
    u_bubble_exact = extender.bubble_solve(system.load)
    u_ref = u_harm + u_bubble_exact

    g_norm = float(np.sqrt(max(system.g_values @ (system.mass_rho @ system.g_values), 0.0)))
    ref_energy = float(np.sqrt(max(assembly.energy_norm_sq(u_ref, system), 0.0)))
    harm_energy = float(np.sqrt(max(assembly.energy_norm_sq(u_harm, system), 0.0)))

    err_energy = energy_error(u_ref, solution.combined, system)
    err_harm = energy_error(u_harm, solution.harmonic, system)
    err_l2 = weighted_l2_error(u_ref, solution.combined, system)
    err_bubble = energy_error(u_bubble_exact, solution.bubble, system)

    summary = local_bounds(field_, mesh)
    c_pl = float(local_poincare_constants(extender).max())
    H_target = solution.params.get("H_target") or mesh.coarse.H
    a_stab = alpha_stab if alpha_stab else float("nan")

    l2_ref = float(np.sqrt(max(assembly.weighted_l2_norm_sq(u_ref, system), 0.0)))
    return ErrorReport(
        method=solution.method,
        params=solution.params,
        g_norm=g_norm,
        ref_energy=ref_energy,
        harmonic_energy=harm_energy,
        err_energy=err_energy,
        err_energy_rel=err_energy / ref_energy if ref_energy > 0 else 0.0,
        err_harmonic=err_harm,
        err_harmonic_rel=err_harm / harm_energy if harm_energy > 0 else 0.0,
        err_l2rho=err_l2,
        err_l2rho_rel=err_l2 / l2_ref if l2_ref > 0 else 0.0,
        err_bubble=err_bubble,
        bound_low_contrast=c_pl * mesh.coarse.H * g_norm,
        bound_high_contrast=float(np.sqrt(9.0 * a_stab) * H_target * g_norm),
        c_PL=c_pl,
        kappa=summary.kappa,
    )
