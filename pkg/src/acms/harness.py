"""Run configuration, experiment orchestration and CSV/figure emission.

Configs are flat key=value text files with command-line overrides.  All
report tables are CSV with a header row and 12-significant-digit
decimals; every row repeats the full parameter set so rows are
self-describing.  Each report also renders a companion PNG figure.
"""

from __future__ import annotations

import dataclasses
import os
import tempfile

import numpy as np

from . import assembly, coefficient, corrector, geometry, methods, plotting, spectral
from .errors import UsageError
from .substructure import HarmonicExtender, hat_function

METHODS = ("NLOD", "LOD", "NLSD", "LSD")


@dataclasses.dataclass
class RunConfig:
    n: int = 8
    r: int = 3
    method: str = "LOD"
    j: int = 2
    alpha_stab: float = 4.0
    H_target: str = "H"            # "H", "H/2" or a number
    coefficient: str = "constant:1"
    rho: str = "constant:1"
    g: str = "sinpi"
    bubble: str = "exact"
    rtol: float = 1e-10
    seed: int = 0
    output_dir: str = "out"
    contrast_mode: str = "soft"    # sweep inclusions by dividing (soft) or multiplying
    n_list: tuple = (4, 8, 16)
    j_list: tuple = (1, 2, 3, 4)
    contrast_list: tuple = (1.0, 1e3, 1e6)
    r_list: tuple = (1, 2, 3, 4)
    dump_mesh: bool = False
    dump_field: bool = False
    dump_matrices: bool = False
    dump_basis: bool = False

    _INT = ("n", "r", "j", "seed")
    _FLOAT = ("alpha_stab", "rtol")
    _BOOL = ("dump_mesh", "dump_field", "dump_matrices", "dump_basis")
    _INT_LIST = ("n_list", "j_list", "r_list")
    _FLOAT_LIST = ("contrast_list",)

    @classmethod
    def from_file(cls, path):
        config = cls()
        try:
            with open(path) as f:
                lines = f.readlines()
        except OSError as exc:
            raise UsageError("config", f"cannot read {path}: {exc}") from exc
        for lineno, line in enumerate(lines, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError("config", f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            config.set(key, value)
        return config

    def set(self, key, value):
        if not hasattr(self, key) or key.startswith("_"):
            raise UsageError(key, "unknown configuration key")
        if key in self._INT:
            try:
                value = int(value)
            except ValueError as exc:
                raise UsageError(key, f"expected an integer, got {value!r}") from exc
        elif key in self._FLOAT:
            try:
                value = float(value)
            except ValueError as exc:
                raise UsageError(key, f"expected a number, got {value!r}") from exc
        elif key in self._BOOL:
            value = str(value).lower() in ("1", "true", "yes", "on")
        elif key in self._INT_LIST:
            value = tuple(int(v) for v in str(value).split(","))
        elif key in self._FLOAT_LIST:
            value = tuple(float(v) for v in str(value).split(","))
        setattr(self, key, value)

    def apply_overrides(self, overrides):
        for key, value in overrides.items():
            self.set(key, value)

    def validate(self):
        if self.n < 2:
            raise UsageError("n", "coarse cells per side must be >= 2")
        if self.r < 1:
            raise UsageError("r", "refinement levels must be >= 1")
        if self.method.upper() not in METHODS:
            raise UsageError("method", f"must be one of {', '.join(METHODS)}")
        if self.method.upper() in ("LOD", "LSD") and self.j < 1:
            raise UsageError("j", "patch layers must be >= 1")
        if self.alpha_stab < 1:
            raise UsageError("alpha_stab", "threshold must be >= 1")
        if self.resolve_H_target(1.0) <= 0:
            raise UsageError("H_target", "target precision must be positive")
        if self.bubble not in ("exact", "spectral"):
            raise UsageError("bubble", "must be 'exact' or 'spectral'")
        if self.contrast_mode not in ("soft", "stiff"):
            raise UsageError("contrast_mode", "must be 'soft' or 'stiff'")
        try:
            coefficient.parse_pattern(self.coefficient)
        except Exception as exc:
            raise UsageError("coefficient", str(exc)) from exc
        return self

    def resolve_H_target(self, H):
        text = str(self.H_target).strip()
        if text.upper() == "H":
            return H
        if text.upper() in ("H/2", "0.5H", "H2"):
            return 0.5 * H
        try:
            return float(text)
        except ValueError as exc:
            raise UsageError("H_target", f"cannot parse {text!r}") from exc

    def uses_j(self):
        return self.method.upper() in ("LOD", "LSD")


def g_values(config, mesh):
    spec = str(config.g).strip().lower()
    x, y = mesh.fine_vertices[:, 0], mesh.fine_vertices[:, 1]
    if spec == "sinpi":
        return 2 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)
    if spec in ("zero", "0"):
        return np.zeros(len(x))
    if spec == "random":
        rng = np.random.default_rng(config.seed)
        return rng.standard_normal(len(x))
    if spec.startswith("constant:"):
        return float(spec.split(":", 1)[1]) * np.ones(len(x))
    raise UsageError("g", f"unknown source spec {config.g!r}")


def fmt(value):
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return ""
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_csv(path, header, rows):
    """Atomic CSV write: temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(",".join(header) + "\n")
            for row in rows:
                f.write(",".join(fmt(v) for v in row) + "\n")
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return path


def append_csv(path, header, row):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    new = not os.path.exists(path)
    with open(path, "a") as f:
        if new:
            f.write(",".join(header) + "\n")
        f.write(",".join(fmt(v) for v in row) + "\n")
    return path


PARAM_COLUMNS = ("method", "n", "r", "H", "h", "j", "alpha_stab", "H_target",
                 "coefficient", "rho", "g", "bubble", "seed")
REPORT_COLUMNS = ("g_norm", "ref_energy", "harmonic_energy",
                  "err_energy", "err_energy_rel", "err_harmonic",
                  "err_harmonic_rel", "err_l2rho", "err_l2rho_rel",
                  "err_bubble", "bound_low_contrast", "bound_high_contrast",
                  "c_PL", "kappa")


def _param_row(config, mesh, H_target, coefficient_spec=None):
    return [config.method.upper(), config.n, config.r,
            float(mesh.coarse.H), float(mesh.h),
            config.j if config.uses_j() else "",
            float(config.alpha_stab), float(H_target),
            coefficient_spec or config.coefficient, config.rho, config.g,
            config.bubble, config.seed]


def _report_row(report):
    return [report.g_norm, report.ref_energy, report.harmonic_energy,
            report.err_energy, report.err_energy_rel, report.err_harmonic,
            report.err_harmonic_rel, report.err_l2rho, report.err_l2rho_rel,
            report.err_bubble, report.bound_low_contrast,
            report.bound_high_contrast, report.c_PL, report.kappa]


def _build_problem(config, n=None, r=None, coefficient_spec=None):
    mesh = geometry.refine(geometry.build_coarse_mesh(n or config.n),
                           r or config.r)
    field = coefficient.build_field(mesh, coefficient_spec or config.coefficient,
                                    config.rho)
    system = assembly.assemble(mesh, field, g_values(config, mesh))
    return mesh, field, system


def run_solve(config: RunConfig):
    """One full method run; appends a row to runs.csv and renders figures."""
    config.validate()
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    mesh, field, system = _build_problem(config)
    H_target = config.resolve_H_target(mesh.coarse.H)
    extender = HarmonicExtender(mesh, system)
    solution, report = methods.solve_multiscale(
        mesh, field, system, config.method,
        j=config.j if config.uses_j() else None,
        alpha_stab=config.alpha_stab, H_target=H_target,
        bubble_mode=config.bubble, extender=extender)

    header = list(PARAM_COLUMNS) + list(REPORT_COLUMNS)
    row = _param_row(config, mesh, H_target) + _report_row(report)
    append_csv(os.path.join(out, "runs.csv"), header, row)

    plotting.field_figure(mesh, solution.combined,
                          os.path.join(out, "solution.png"),
                          title=f"{config.method} solution")
    low, _hi = field.eigen_range()
    plotting.field_figure(mesh, low, os.path.join(out, "coefficient.png"),
                          title="coefficient (log10 smallest eigenvalue)",
                          nodal=False, log_color=True)

    if config.dump_mesh:
        geometry.export_mesh(mesh, os.path.join(out, "mesh"))
    if config.dump_field:
        coefficient.dump_field_csv(field, os.path.join(out, "field.csv"))
    if config.dump_matrices:
        assembly.write_coo(os.path.join(out, "stiffness.txt"), system.stiffness)
        assembly.write_coo(os.path.join(out, "mass_rho.txt"), system.mass_rho)
    if config.dump_basis:
        basis = corrector.build_multiscale_basis(
            config.method, extender,
            j=config.j if config.uses_j() else None,
            split=_split_for(config, extender, H_target))
        corrector.export_basis_csv(basis, extender,
                                   os.path.join(out, "basis.csv"))
    return report


def _split_for(config, extender, H_target):
    if config.method.upper() not in ("NLSD", "LSD"):
        return None
    bases = spectral.compute_edge_bases(extender, H_target, config.alpha_stab)
    return spectral.split_skeleton_spaces(bases, extender.mesh)


def run_convergence(config: RunConfig):
    """Fixed H/h sweep over coarse resolutions with consecutive rates."""
    config.validate()
    rows = []
    errors, bounds, Hs = [], [], []
    for n in config.n_list:
        cfg_n = dataclasses.replace(config, n=n)
        mesh, field, system = _build_problem(cfg_n)
        H_target = config.resolve_H_target(mesh.coarse.H)
        extender = HarmonicExtender(mesh, system)
        _, report = methods.solve_multiscale(
            mesh, field, system, config.method,
            j=config.j if config.uses_j() else None,
            alpha_stab=config.alpha_stab, H_target=H_target,
            bubble_mode=config.bubble, extender=extender)
        rate = ""
        if errors and errors[-1] > 0 and report.err_harmonic > 0:
            rate = float(np.log2(errors[-1] / report.err_harmonic))
        errors.append(report.err_harmonic)
        bounds.append(report.bound_low_contrast)
        Hs.append(mesh.coarse.H)
        rows.append(_param_row(cfg_n, mesh, H_target)
                    + _report_row(report) + [rate])
    header = list(PARAM_COLUMNS) + list(REPORT_COLUMNS) + ["rate"]
    out = config.output_dir
    write_csv(os.path.join(out, "convergence.csv"), header, rows)
    if all(e > 0 for e in errors):
        plotting.convergence_figure(Hs, errors, bounds,
                                    os.path.join(out, "convergence.png"))
    return rows


def run_decay(config: RunConfig):
    """Localization error and corrector tail energies against patch width."""
    config.validate()
    mesh, field, system = _build_problem(config)
    H_target = config.resolve_H_target(mesh.coarse.H)
    extender = HarmonicExtender(mesh, system)
    split = _split_for(config, extender, H_target)
    ideal_method = "NLSD" if config.method.upper() in ("NLSD", "LSD") else "NLOD"
    local_method = "LSD" if ideal_method == "NLSD" else "LOD"

    ideal_basis = corrector.build_multiscale_basis(ideal_method, extender,
                                                   split=split)
    lam_ideal = methods.solve_skeleton(ideal_basis, extender, system.load)
    ref = float(np.sqrt(max(extender.skeleton_form(lam_ideal, lam_ideal)[0], 0.0)))

    # tail energies of one ideal corrector at the most central element
    centroids = mesh.coarse.vertices[mesh.coarse.triangles].mean(axis=1)
    K = int(np.argmin(np.abs(centroids - 0.5).sum(axis=1)))
    interior = set(int(v) for v in mesh.skeleton_nodes_NH)
    vertex = next(int(v) for v in mesh.coarse.triangles[K] if int(v) in interior)
    nu = hat_function(mesh, vertex)
    tails, _total = corrector.corrector_tail_energies(
        extender, K, nu, config.j_list, split=split)

    loc_errors = []
    for j in config.j_list:
        basis_j = corrector.build_multiscale_basis(local_method, extender,
                                                   j=j, split=split)
        lam_j = methods.solve_skeleton(basis_j, extender, system.load)
        diff = lam_ideal - lam_j
        loc_errors.append(float(np.sqrt(max(
            extender.skeleton_form(diff, diff)[0], 0.0))))
    ratio = corrector.fit_geometric_ratio(loc_errors)

    out = config.output_dir
    header = list(PARAM_COLUMNS) + ["loc_error", "loc_error_rel",
                                    "tail_energy", "fitted_ratio"]
    rows = []
    for j, err, tail in zip(config.j_list, loc_errors, tails):
        cfg_j = dataclasses.replace(config, j=j, method=local_method)
        mesh_row = _param_row(cfg_j, mesh, H_target)
        rows.append(mesh_row + [err, err / ref if ref > 0 else 0.0, tail, ratio])
    write_csv(os.path.join(out, "decay.csv"), header, rows)
    plotting.decay_figure(list(config.j_list), loc_errors, tails,
                          os.path.join(out, "decay.png"))
    return rows


def _sweep_pattern(config, contrast):
    pattern = coefficient.parse_pattern(config.coefficient)
    multiplier = 1.0 / contrast if config.contrast_mode == "soft" else contrast
    if pattern[0] == "inclusions":
        return ("inclusions", pattern[1], multiplier, pattern[3], pattern[4])
    if pattern[0] == "channel":
        return ("channel", pattern[1], multiplier, pattern[3])
    if pattern[0] == "checkerboard":
        return ("checkerboard", pattern[1], pattern[1] * multiplier, pattern[3])
    raise UsageError("coefficient",
                     f"pattern {pattern[0]!r} has no contrast parameter to sweep")


def run_contrast_sweep(config: RunConfig):
    """Paired LOD/LSD errors across coefficient contrasts, plus Pi counts."""
    config.validate()
    rows = []
    lod_errors, lsd_errors = [], []
    for contrast in config.contrast_list:
        spec = _sweep_pattern(config, contrast)
        mesh, field, system = _build_problem(config, coefficient_spec=spec)
        H_target = config.resolve_H_target(mesh.coarse.H)
        extender = HarmonicExtender(mesh, system)
        bases = spectral.compute_edge_bases(extender, H_target,
                                            config.alpha_stab)
        split = spectral.split_skeleton_spaces(bases, mesh)
        _, rep_lod = methods.solve_multiscale(
            mesh, field, system, "LOD", j=config.j,
            H_target=H_target, bubble_mode=config.bubble, extender=extender)
        _, rep_lsd = methods.solve_multiscale(
            mesh, field, system, "LSD", j=config.j,
            alpha_stab=config.alpha_stab, H_target=H_target,
            bubble_mode=config.bubble, extender=extender, split=split)
        pi_counts = [b.pi_count for b in bases.values()]
        cfg_c = dataclasses.replace(config, method="LSD")
        desc = f"{spec[0]}:{spec[1]:g}:{spec[2]:g}:{spec[3]}" + \
            (":cross" if spec[0] == "inclusions" and spec[4] else "")
        rows.append(_param_row(cfg_c, mesh, H_target, coefficient_spec=desc)
                    + [contrast, rep_lod.err_harmonic_rel,
                       rep_lsd.err_harmonic_rel, int(np.sum(pi_counts)),
                       int(np.max(pi_counts)), rep_lod.err_harmonic,
                       rep_lsd.err_harmonic])
        lod_errors.append(rep_lod.err_harmonic_rel)
        lsd_errors.append(rep_lsd.err_harmonic_rel)
    header = list(PARAM_COLUMNS) + ["contrast", "lod_err_rel", "lsd_err_rel",
                                    "pi_modes_total", "pi_modes_max_edge",
                                    "lod_err", "lsd_err"]
    out = config.output_dir
    write_csv(os.path.join(out, "contrast.csv"), header, rows)
    plotting.contrast_figure(list(config.contrast_list), lod_errors, lsd_errors,
                             os.path.join(out, "contrast.png"))
    return rows


def run_spectrum(config: RunConfig):
    """Per-edge eigenvalue dump with Pi/triangle tags."""
    config.validate()
    mesh, field, system = _build_problem(config)
    H_target = config.resolve_H_target(mesh.coarse.H)
    extender = HarmonicExtender(mesh, system)
    bases = spectral.compute_edge_bases(extender, H_target, config.alpha_stab)
    rows_raw = spectral.spectrum_rows(bases)
    rows = [list(r) for r in rows_raw]
    out = config.output_dir
    write_csv(os.path.join(out, "spectrum.csv"),
              ["edge", "mode", "alpha", "side"], rows)
    plotting.spectrum_figure(rows_raw, config.alpha_stab,
                             os.path.join(out, "spectrum.png"))
    return rows


def run_diagnostics(config: RunConfig):
    """Constants of the theory across refinement levels at fixed H."""
    config.validate()
    rows = []
    logs, cpl2 = [], []
    c_gamma = geometry.fit_overlap_constant(geometry.build_coarse_mesh(config.n))
    for r in config.r_list:
        mesh, field, system = _build_problem(config, r=r)
        extender = HarmonicExtender(mesh, system)
        record = methods.diagnostics(mesh, field, extender, seed=config.seed)
        logs.append(record.log_factor)
        cpl2.append(record.c_PL ** 2)
        cfg_r = dataclasses.replace(config, r=r)
        rows.append([config.n, r, float(mesh.coarse.H), float(mesh.h),
                     record.log_factor, record.c_PL, record.c_PL ** 2,
                     record.C_PG, record.kappa, record.face_ratio_max,
                     record.interp_ratio_max, c_gamma,
                     config.coefficient, config.rho, config.seed])
    header = ["n", "r", "H", "h", "log_factor", "c_PL", "c_PL_sq", "C_PG",
              "kappa", "face_ratio_max", "interp_ratio_max", "c_gamma",
              "coefficient", "rho", "seed"]
    out = config.output_dir
    write_csv(os.path.join(out, "diagnostics.csv"), header, rows)
    plotting.diagnostics_figure(logs, cpl2,
                                os.path.join(out, "diagnostics.png"))
    return rows
