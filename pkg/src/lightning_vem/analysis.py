"""Linear solves, error norms, convergence studies and assembly timings."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import GlobalSystem, assemble_from_locals, interpolate_dirichlet, local_matrices
from .geometry import Mesh, generate_cvt
from .lightning import ElementBasis, FitConfig, fit_element_basis, fit_mesh_bases
from .problems import PDEProblem, get_problem
from .quadrature import DEFAULT_DEGREE, DEFAULT_GRADING, polygon_rule
from .vanilla import assemble_vanilla, vanilla_errors, vanilla_local

CSV_COLUMNS = ("n_cells", "h_max", "e_L2", "e_H1", "rate_L2", "rate_H1", "assembly_s", "solve_s")
TIMING_COLUMNS = ("n_cells", "vanilla_avg_s", "lightning_avg_s")
BACKENDS = ("lightning", "vanilla")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class StudyConfig:
    fit: FitConfig = field(default_factory=FitConfig)
    backend: str = "lightning"
    rng_seed: int = 0
    lloyd_iters: int = 100
    move_tol: float = 1e-8
    degree: int = DEFAULT_DEGREE
    grading_levels: int = DEFAULT_GRADING
    rtol: float = 1e-12
    workers: int = 1

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")


@dataclass
class ConvergenceRecord:
    n_cells: int
    h_max: float
    e_L2: float
    e_H1: float
    assembly_time_s: float
    solve_time_s: float
    rate_L2: float | None = None
    rate_H1: float | None = None
    backend: str = "lightning"


@lru_cache(maxsize=16)
def cvt_mesh(n_cells: int, rng_seed: int = 0, lloyd_iters: int = 100, move_tol: float = 1e-8) -> Mesh:
    """Memoized :func:`generate_cvt`; meshes are treated as immutable."""
    return generate_cvt(n_cells, rng_seed, lloyd_iters, move_tol)


def solve_linear(system, rhs=None, rtol: float = 1e-12) -> np.ndarray:
    """Direct sparse solve with a relative-residual check.

    Accepts a :class:`GlobalSystem` or a matrix plus right-hand side. One
    step of iterative refinement is applied if the first residual misses
    `rtol`.
    """
    if isinstance(system, GlobalSystem):
        A, b = system.matrix, system.rhs
    else:
        A, b = system, rhs
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] == 0:
        return np.zeros(0)
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    x = lu.solve(b)
    bnorm = np.linalg.norm(b)

    def relres(x):
        return np.linalg.norm(A @ x - b) / bnorm if bnorm > 0 else np.linalg.norm(A @ x)

    if relres(x) > rtol:
        x = x + lu.solve(b - A @ x)
    if not np.all(np.isfinite(x)) or relres(x) > rtol:
        raise SolverError(f"relative residual {relres(x):.2e} exceeds {rtol:.1e}")
    return x


def lightning_errors(
    mesh: Mesh,
    bases: list[ElementBasis],
    u_vertices,
    prob: PDEProblem,
    degree: int = DEFAULT_DEGREE,
    grading_levels: int = DEFAULT_GRADING,
) -> tuple[float, float]:
    """Broken L2 and H1-seminorm errors of sum_i u_i phi_i, by element quadrature."""
    prob.require_exact()
    u_vertices = np.asarray(u_vertices, dtype=float)
    e0 = e1 = 0.0
    for cell, basis in zip(mesh.cells, bases):
        quad = polygon_rule(basis.element, degree, grading_levels)
        x, y = quad.points[:, 0], quad.points[:, 1]
        phi, grad = basis.values_and_gradients(quad.points)
        c = u_vertices[cell]
        uh = c @ phi
        guh = np.einsum("i,iqd->qd", c, grad)
        ux, uy = prob.exact_grad(x, y)
        e0 += quad.integrate((prob.exact_u(x, y) - uh) ** 2)
        e1 += quad.integrate((ux - guh[:, 0]) ** 2 + (uy - guh[:, 1]) ** 2)
    return float(np.sqrt(e0)), float(np.sqrt(e1))


def evaluate_solution(mesh: Mesh, bases: list[ElementBasis], u_vertices, point) -> float:
    """Pointwise value of the discrete solution through the basis of the containing cell."""
    k = mesh.locate(point)
    if k < 0:
        raise ValueError(f"point {tuple(point)} is outside the domain")
    vals = bases[k].values(np.atleast_2d(point))[:, 0]
    return float(np.asarray(u_vertices)[mesh.cells[k]] @ vals)


@dataclass
class Solution:
    mesh: Mesh
    u: np.ndarray  # vertex values
    system: GlobalSystem
    bases: list[ElementBasis] | None
    assembly_s: float
    solve_s: float
    element_times: list[float]


def solve_problem(mesh: Mesh, prob: PDEProblem, cfg: StudyConfig = StudyConfig(), bases=None) -> Solution:
    """Assemble and solve on one mesh with the configured backend.

    Pre-fitted lightning `bases` may be passed in; their fitting time is
    then not counted.
    """
    times: list[float] = []
    t0 = time.perf_counter()
    if cfg.backend == "vanilla":
        system = assemble_vanilla(mesh, prob, timings=times)
        bases = None
    else:
        fit_times: list[float] = []
        if bases is None:
            bases = fit_mesh_bases(mesh.polygons, cfg.fit, cfg.workers, fit_times)
        else:
            fit_times = [0.0] * mesh.n_cells
        locals_ = []
        for b, tf in zip(bases, fit_times):
            t1 = time.perf_counter()
            locals_.append(local_matrices(b, prob, polygon_rule(b.element, cfg.degree, cfg.grading_levels)))
            times.append(tf + time.perf_counter() - t1)
        system = assemble_from_locals(mesh, locals_, interpolate_dirichlet(prob, mesh))
    t1 = time.perf_counter()
    x = solve_linear(system, rtol=cfg.rtol)
    t2 = time.perf_counter()
    return Solution(mesh, system.expand(x), system, bases, t1 - t0, t2 - t1, times)


def compute_errors(sol: Solution, prob: PDEProblem, cfg: StudyConfig = StudyConfig()) -> tuple[float, float]:
    if sol.bases is None:
        return vanilla_errors(sol.mesh, sol.u, prob)
    return lightning_errors(sol.mesh, sol.bases, sol.u, prob, cfg.degree, cfg.grading_levels)


def fill_rates(records: list[ConvergenceRecord]) -> list[ConvergenceRecord]:
    for prev, cur in zip(records, records[1:]):
        lh = math.log(prev.h_max / cur.h_max)
        cur.rate_L2 = math.log(prev.e_L2 / cur.e_L2) / lh
        cur.rate_H1 = math.log(prev.e_H1 / cur.e_H1) / lh
    return records


def fitted_slope(h, e) -> float:
    """Least-squares slope of log e against log h."""
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def run_convergence(
    problem_id: str, cell_counts, cfg: StudyConfig = StudyConfig(), basis_cache: dict | None = None
) -> list[ConvergenceRecord]:
    """Solve `problem_id` on CVT meshes with the given cell counts.

    `basis_cache`, when given, maps cell count to fitted bases and is
    filled in, so several problems on the same meshes fit only once.
    """
    prob = get_problem(problem_id)
    records = []
    for n in cell_counts:
        mesh = cvt_mesh(n, cfg.rng_seed, cfg.lloyd_iters, cfg.move_tol)
        cached = None
        if basis_cache is not None and cfg.backend == "lightning":
            cached = basis_cache.get((n, cfg.rng_seed, cfg.fit))
        sol = solve_problem(mesh, prob, cfg, bases=cached)
        if basis_cache is not None and sol.bases is not None:
            basis_cache[(n, cfg.rng_seed, cfg.fit)] = sol.bases
        e0, e1 = compute_errors(sol, prob, cfg)
        records.append(ConvergenceRecord(n, mesh.h_max, e0, e1, sol.assembly_s, sol.solve_s, backend=cfg.backend))
    return fill_rates(records)


def timing_compare(
    cell_counts, cfg: StudyConfig = StudyConfig(), problem_id: str = "adr", min_timings: int = 64, samples=None
) -> list[tuple[int, float, float]]:
    """Average per-element local assembly time of both backends on each mesh.

    Each element contributes one sample per backend; the lightning sample
    includes fitting the element basis. On meshes with fewer than
    `min_timings` cells an element's sample is itself the mean of
    ceil(min_timings / n) repeated timings, to damp timer noise. If
    `samples` is a dict it receives the per-element samples by cell count.
    """
    prob = get_problem(problem_id)
    rows = []
    for n in cell_counts:
        mesh = cvt_mesh(n, cfg.rng_seed, cfg.lloyd_iters, cfg.move_tol)
        repeats = max(1, math.ceil(min_timings / n))
        tv, tl = np.zeros(n), np.zeros(n)
        for _ in range(repeats):
            for k, poly in enumerate(mesh.polygons):
                t0 = time.perf_counter()
                vanilla_local(poly, prob)
                t1 = time.perf_counter()
                basis = fit_element_basis(poly, cfg.fit)
                local_matrices(basis, prob, polygon_rule(poly, cfg.degree, cfg.grading_levels))
                t2 = time.perf_counter()
                tv[k] += (t1 - t0) / repeats
                tl[k] += (t2 - t1) / repeats
        if samples is not None:
            samples[n] = (tv, tl)
        rows.append((n, float(tv.mean()), float(tl.mean())))
    return rows


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6e}"
    return str(v)


def records_to_csv(records: list[ConvergenceRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(
            [_cell(v) for v in (r.n_cells, r.h_max, r.e_L2, r.e_H1, r.rate_L2, r.rate_H1, r.assembly_time_s, r.solve_time_s)]
        )
    return buf.getvalue()


def timings_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TIMING_COLUMNS)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()
