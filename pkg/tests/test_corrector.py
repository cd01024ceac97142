import numpy as np
import pytest

from acms import corrector, geometry, spectral, substructure
from acms.errors import InvalidParameterError
from acms.substructure import hat_function
from conftest import Problem, sin_load


def central_element(coarse):
    centroids = coarse.vertices[coarse.triangles].mean(axis=1)
    return int(np.argmin(np.abs(centroids - 0.5).sum(axis=1)))


def hat_at_element(mesh, K):
    interior = set(int(v) for v in mesh.skeleton_nodes_NH)
    vertex = next(int(v) for v in mesh.coarse.triangles[K] if int(v) in interior)
    return hat_function(mesh, vertex)


def delta_split(problem, alpha_stab=4.0):
    bases = spectral.compute_edge_bases(problem.extender,
                                        problem.mesh.coarse.H, alpha_stab)
    return spectral.split_skeleton_spaces(bases, problem.mesh)


# -- ideal correctors ----------------------------------------------------------

def test_constant_source_trace_gives_zero_corrector(checker_42):
    mesh, ext = checker_42.mesh, checker_42.extender
    ctx = corrector.CorrectorContext(ext)
    K = central_element(mesh.coarse)
    nu = np.zeros(mesh.num_skeleton_dofs)
    nu[ext.elements[K].free_dofs] = 2.0   # constant trace on this element
    out = ctx.ideal(K, nu)
    assert np.linalg.norm(out) <= 1e-10


def test_sum_of_element_correctors_is_one_shot_projection(checker_42):
    mesh, ext = checker_42.mesh, checker_42.extender
    ctx = corrector.CorrectorContext(ext)
    rng = np.random.default_rng(2)
    nu = rng.standard_normal(mesh.num_skeleton_dofs)
    total = np.zeros_like(nu)
    for K in range(mesh.coarse.num_triangles):
        total += ctx.ideal(K, nu)
    one_shot = ctx.ideal_sum(nu)
    scale = np.linalg.norm(one_shot)
    assert np.linalg.norm(total - one_shot) <= 1e-9 * scale


def test_corrector_energy_bound(checker_42):
    """s(P^K nu, P^K nu) <= s_K(nu, nu), the Cauchy-Schwarz step of the
    localization analysis."""
    mesh, ext = checker_42.mesh, checker_42.extender
    ctx = corrector.CorrectorContext(ext)
    rng = np.random.default_rng(3)
    for K in (0, 9, central_element(mesh.coarse)):
        nu = rng.standard_normal(mesh.num_skeleton_dofs)
        phi = ctx.ideal(K, nu)
        lhs = ext.skeleton_form(phi, phi)[0]
        rhs = ext.element_form(K, nu, nu)
        assert lhs <= rhs * (1 + 1e-9)


def test_ideal_corrector_is_fine_scale(checker_42):
    mesh, ext = checker_42.mesh, checker_42.extender
    ctx = corrector.CorrectorContext(ext)
    nu = hat_at_element(mesh, central_element(mesh.coarse))
    phi = ctx.ideal_sum(nu)
    assert substructure.is_fine_scale(phi, mesh)


# -- localized correctors -------------------------------------------------------

def test_localized_equals_ideal_on_saturated_patch(checker_42):
    mesh, ext = checker_42.mesh, checker_42.extender
    ctx = corrector.CorrectorContext(ext)
    j_sat = geometry.saturation_layers(mesh.coarse)
    K = central_element(mesh.coarse)
    rng = np.random.default_rng(4)
    nu = rng.standard_normal(mesh.num_skeleton_dofs)
    ideal = ctx.ideal(K, nu)
    localized = ctx.localized(K, nu, j_sat)
    assert np.allclose(ideal, localized, atol=1e-10 * max(np.abs(ideal).max(), 1))


def test_localized_support(checker_42):
    mesh, ext = checker_42.mesh, checker_42.extender
    ctx = corrector.CorrectorContext(ext)
    K = central_element(mesh.coarse)
    nu = hat_at_element(mesh, K)
    # j=1: the single-element patch has no interior edges, corrector vanishes
    assert np.all(ctx.localized(K, nu, 1) == 0.0)
    out = ctx.localized(K, nu, 2)
    p = geometry.patch(mesh.coarse, K, 2)
    allowed = set()
    inside = set(p.elements.tolist())
    for e in mesh.interior_edge_ids:
        t0, t1 = mesh.coarse.edge_tris[e]
        if t0 in inside and t1 in inside:
            sl = mesh.edge_dof_slice(int(e))
            allowed.update(range(sl.start, sl.stop))
    assert set(np.flatnonzero(out != 0).tolist()) <= allowed


def test_localized_rejects_bad_j(checker_42):
    ctx = corrector.CorrectorContext(checker_42.extender)
    with pytest.raises(InvalidParameterError):
        ctx.localized(0, np.zeros(checker_42.mesh.num_skeleton_dofs), 0)


def test_tail_energy_decreases(identity_83):
    mesh, ext = identity_83.mesh, identity_83.extender
    K = central_element(mesh.coarse)
    nu = hat_at_element(mesh, K)
    tails, total = corrector.corrector_tail_energies(ext, K, nu, [1, 2, 3, 4])
    assert total > 0
    assert all(tails[k + 1] <= tails[k] for k in range(3))
    theta = corrector.fit_geometric_ratio(tails, floor=1e-12 * total)
    assert theta < 1.0


def test_localization_error_decreases(identity_83):
    mesh, ext = identity_83.mesh, identity_83.extender
    ctx = corrector.CorrectorContext(ext)
    K = central_element(mesh.coarse)
    nu = hat_at_element(mesh, K)
    ideal = ctx.ideal(K, nu)
    errors = []
    for j in (1, 2, 3, 4):
        diff = ideal - ctx.localized(K, nu, j)
        errors.append(np.sqrt(ext.skeleton_form(diff, diff)[0]))
    assert all(errors[k + 1] <= errors[k] for k in range(3))
    slope = np.polyfit(range(4), np.log(np.maximum(errors, 1e-300)), 1)[0]
    assert slope < 0


def test_delta_corrector_decay_contrast_robust():
    """Corollary 6' realized: the triangle-subspace corrector decay ratio at
    contrast 1e6 stays within a factor two of the contrast-1 ratio."""
    thetas = {}
    for contrast in (1.0, 1e-6):
        prob = Problem(8, 2, ("inclusions", 1.0, contrast, 4, True), g=sin_load)
        split = delta_split(prob)
        mesh = prob.mesh
        K = central_element(mesh.coarse)
        nu = hat_at_element(mesh, K)
        tails, total = corrector.corrector_tail_energies(
            prob.extender, K, nu, [1, 2, 3, 4], split=split)
        thetas[contrast] = corrector.fit_geometric_ratio(
            tails, floor=1e-12 * total)
    assert thetas[1.0] < 1.0 and thetas[1e-6] < 1.0
    ratio = thetas[1e-6] / thetas[1.0]
    assert 0.5 <= ratio <= 2.0


# -- multiscale bases ------------------------------------------------------------

def test_nlod_basis_kronecker_property(checker_42):
    mesh, ext = checker_42.mesh, checker_42.extender
    basis = corrector.build_multiscale_basis("NLOD", ext)
    assert basis.size == len(mesh.skeleton_nodes_NH)
    vertex_block = basis.matrix[:mesh.vertex_dof_count, :]
    assert np.allclose(vertex_block, np.eye(mesh.vertex_dof_count), atol=1e-12)


def test_nlod_basis_orthogonal_to_fine_space(checker_42):
    mesh, ext = checker_42.mesh, checker_42.extender
    basis = corrector.build_multiscale_basis("NLOD", ext)
    rng = np.random.default_rng(5)
    for k in range(basis.size):
        col = basis.matrix[:, k]
        col_norm = np.sqrt(ext.skeleton_form(col, col)[0])
        mu = rng.standard_normal(mesh.num_skeleton_dofs)
        mu[:mesh.vertex_dof_count] = 0.0
        mu_norm = np.sqrt(ext.skeleton_form(mu, mu)[0])
        s, _ = ext.skeleton_form(col, mu)
        assert abs(s) <= 1e-9 * col_norm * mu_norm


def test_lod_matches_nlod_on_single_vertex_mesh():
    prob = Problem(2, 2, "checkerboard:1:50:3", g=sin_load)
    j_sat = geometry.saturation_layers(prob.coarse)
    nlod = corrector.build_multiscale_basis("NLOD", prob.extender)
    lod = corrector.build_multiscale_basis("LOD", prob.extender, j=j_sat)
    assert nlod.size == lod.size == 1
    assert np.allclose(nlod.matrix, lod.matrix, atol=1e-10)


def test_lsd_with_unit_threshold_spans_everything(checker_42):
    mesh, ext = checker_42.mesh, checker_42.extender
    bases = spectral.compute_edge_bases(ext, mesh.coarse.H, 1.0)
    split = spectral.split_skeleton_spaces(bases, mesh)
    basis = corrector.build_multiscale_basis("LSD", ext, j=2, split=split)
    assert basis.size == mesh.num_skeleton_dofs
    assert np.linalg.matrix_rank(basis.matrix) == mesh.num_skeleton_dofs


def test_nlsd_basis_orthogonal_to_delta_space(checker_42):
    mesh, ext = checker_42.mesh, checker_42.extender
    split = delta_split_from(ext, mesh)
    basis = corrector.build_multiscale_basis("NLSD", ext, split=split)
    if split.delta_dim == 0:
        pytest.skip("empty triangle space")
    rng = np.random.default_rng(6)
    mu = split.delta_matrix @ rng.standard_normal(split.delta_dim)
    mu_norm = np.sqrt(ext.skeleton_form(mu, mu)[0])
    for k in range(0, basis.size, 7):
        col = basis.matrix[:, k]
        col_norm = np.sqrt(ext.skeleton_form(col, col)[0])
        s, _ = ext.skeleton_form(col, mu)
        assert abs(s) <= 1e-9 * col_norm * mu_norm


def delta_split_from(ext, mesh, alpha_stab=4.0):
    bases = spectral.compute_edge_bases(ext, mesh.coarse.H, alpha_stab)
    return spectral.split_skeleton_spaces(bases, mesh)


def test_build_basis_validation(checker_42):
    ext = checker_42.extender
    with pytest.raises(InvalidParameterError):
        corrector.build_multiscale_basis("LOD", ext)          # missing j
    with pytest.raises(InvalidParameterError):
        corrector.build_multiscale_basis("NLSD", ext)         # missing split
    with pytest.raises(InvalidParameterError):
        corrector.build_multiscale_basis("XYZ", ext)


def test_export_basis_csv(tmp_path):
    prob = Problem(2, 1, "constant:1", g=sin_load)
    basis = corrector.build_multiscale_basis("NLOD", prob.extender)
    path = tmp_path / "basis.csv"
    corrector.export_basis_csv(basis, prob.extender, str(path))
    lines = path.read_text().strip().splitlines()
    assert len(lines) == prob.mesh.num_fine_vertices + 1
