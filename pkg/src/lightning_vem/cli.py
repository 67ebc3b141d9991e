"""Command-line interface: ``lvem {mesh,solve,converge,compare}``.

Settings come from built-in defaults, then an optional ``--config`` file
of ``key = value`` lines, then command-line flags (highest precedence).
Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import (
    StudyConfig,
    SolverError,
    evaluate_solution,
    records_to_csv,
    run_convergence,
    solve_problem,
    timing_compare,
    timings_to_csv,
)
from .geometry import GeometryError, MeshFormatError, generate_cvt, load_mesh, save_mesh
from .lightning import FitConfig, FitConvergenceError, LeastSquaresError, load_bases, save_bases
from .plotting import convergence_svg
from .problems import PROBLEM_IDS, PDEProblem, UnsupportedRequest, get_problem

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
SOLVE_PROBLEMS = PROBLEM_IDS + ("zero",)


class ValidationError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    cells: list[int] = field(default_factory=lambda: [4, 16, 64, 256, 1024])
    seed: int = 0
    lloyd_iters: int = 100
    move_tol: float = 1e-8
    problem: str | None = None  # laplace, or adr for compare
    backend: str = "lightning"
    eps: float = 1e-8
    sigma: float = 4.0
    n_max: int = 64
    svd_rtol: float = 1e-12
    mesh: str | None = None
    output: str | None = None
    plot: str | None = None
    probe: tuple[float, float] | None = None
    basis_cache: str | None = None
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)

    def validate(self):
        if self.problem is None:
            self.problem = "adr" if self.command == "compare" else "laplace"
        if any(c < 1 for c in self.cells):
            raise ValidationError("--cells: cell counts must be positive integers")
        if self.command == "mesh" and len(self.cells) != 1:
            raise ValidationError("--cells: mesh takes a single cell count")
        if self.lloyd_iters < 0:
            raise ValidationError("--lloyd-iters must be >= 0")
        if self.backend not in ("lightning", "vanilla"):
            raise ValidationError(f"--backend must be lightning or vanilla, got {self.backend!r}")
        allowed = SOLVE_PROBLEMS if self.command == "solve" else PROBLEM_IDS
        if self.problem not in allowed:
            raise ValidationError(f"--problem must be one of {', '.join(allowed)}, got {self.problem!r}")
        if not self.eps > 0:
            raise ValidationError("--eps must be positive")
        if self.threads < 1:
            raise ValidationError("--threads must be >= 1")
        if self.command == "solve" and not self.mesh:
            raise ValidationError("--mesh is required for solve")
        if self.command == "mesh" and not self.output:
            raise ValidationError("-o/--output is required for mesh")

    def fit_config(self) -> FitConfig:
        return FitConfig(eps=self.eps, sigma=self.sigma, n_max=self.n_max, svd_rtol=self.svd_rtol)

    def study_config(self) -> StudyConfig:
        return StudyConfig(
            fit=self.fit_config(),
            backend=self.backend,
            rng_seed=self.seed,
            lloyd_iters=self.lloyd_iters,
            move_tol=self.move_tol,
            workers=self.threads,
        )


def _parse_cells(text: str) -> list[int]:
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ValidationError(f"--cells: expected comma-separated integers, got {text!r}") from None


def _parse_probe(text: str) -> tuple[float, float]:
    try:
        x, y = (float(t) for t in str(text).split(","))
    except ValueError:
        raise ValidationError(f"--probe: expected x,y, got {text!r}") from None
    return x, y


_CONVERTERS = {
    "cells": _parse_cells,
    "probe": _parse_probe,
    "seed": int,
    "lloyd_iters": int,
    "move_tol": float,
    "eps": float,
    "sigma": float,
    "n_max": int,
    "svd_rtol": float,
    "threads": int,
}


def read_config(path) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment. Unknown keys are rejected."""
    known = {f.name for f in dataclasses.fields(RunConfig)} - {"command"}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="file of key = value settings")
    common.add_argument("--threads", help="worker processes for element fits")
    common.add_argument("--eps", help="boundary tolerance of the lightning fits")
    common.add_argument("--sigma", help="pole clustering rate")
    common.add_argument("--n-max", dest="n_max", help="largest number of poles per corner")
    common.add_argument("--svd-rtol", dest="svd_rtol", help="relative singular value cutoff")
    common.add_argument("--seed", help="CVT seed")
    common.add_argument("--lloyd-iters", dest="lloyd_iters")
    common.add_argument("--move-tol", dest="move_tol")

    p = argparse.ArgumentParser(prog="lvem", description="Lightning virtual element method")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("mesh", parents=[common], argument_default=argparse.SUPPRESS, help="generate a CVT mesh")
    m.add_argument("--cells", help="number of cells")
    m.add_argument("-o", "--output", help="mesh JSON file")

    s = sub.add_parser("solve", parents=[common], argument_default=argparse.SUPPRESS, help="solve on a mesh file")
    s.add_argument("--mesh", help="mesh JSON file")
    s.add_argument("--problem", help=f"one of {', '.join(SOLVE_PROBLEMS)}")
    s.add_argument("--backend", help="lightning or vanilla")
    s.add_argument("-o", "--output", help="solution JSON file")
    s.add_argument("--probe", help="x,y point at which to print the discrete solution")
    s.add_argument("--basis-cache", dest="basis_cache", help="JSON file to reuse fitted bases")

    c = sub.add_parser("converge", parents=[common], argument_default=argparse.SUPPRESS, help="convergence study")
    c.add_argument("--problem")
    c.add_argument("--cells", help="comma-separated cell counts")
    c.add_argument("--backend")
    c.add_argument("-o", "--output", help="CSV file (default: stdout)")
    c.add_argument("--plot", help="SVG file for a log-log error chart")

    t = sub.add_parser("compare", parents=[common], argument_default=argparse.SUPPRESS, help="assembly timings")
    t.add_argument("--cells", help="comma-separated cell counts")
    t.add_argument("--problem")
    t.add_argument("-o", "--output", help="CSV file (default: stdout)")
    return p


def make_config(argv) -> RunConfig:
    ns = vars(_build_parser().parse_args(argv))
    command = ns.pop("command")
    settings = read_config(ns.pop("config")) if "config" in ns else {}
    settings.update(ns)
    kwargs = {}
    for key, value in settings.items():
        conv = _CONVERTERS.get(key)
        try:
            kwargs[key] = conv(value) if conv is not None else value
        except ValueError:
            flag = "--" + key.replace("_", "-")
            raise ValidationError(f"{flag}: invalid value {value!r}") from None
    cfg = RunConfig(command=command, **kwargs)
    cfg.validate()
    return cfg


def _zero_problem() -> PDEProblem:
    return PDEProblem(f=lambda x, y: np.zeros(np.shape(x)), g=lambda x, y: np.zeros(np.shape(x)), name="zero")


def _write(path, text):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_mesh(cfg: RunConfig) -> int:
    mesh = generate_cvt(cfg.cells[0], cfg.seed, cfg.lloyd_iters, cfg.move_tol)
    save_mesh(mesh, cfg.output)
    print(f"wrote {mesh.n_cells} cells, {mesh.n_vertices} vertices to {cfg.output}")
    return EXIT_OK


def cmd_solve(cfg: RunConfig) -> int:
    if not Path(cfg.mesh).is_file():
        raise ValidationError(f"--mesh: no such file {cfg.mesh!r}")
    if cfg.probe is not None and cfg.backend == "vanilla":
        raise UnsupportedRequest(
            "--probe is not available with the vanilla backend: it only computes vertex values and "
            "has no pointwise basis (reconstruction is not implemented)"
        )
    mesh = load_mesh(cfg.mesh)
    if cfg.probe is not None and mesh.locate(cfg.probe) < 0:
        raise ValidationError(f"--probe: point {cfg.probe} is outside the unit square")
    prob = _zero_problem() if cfg.problem == "zero" else get_problem(cfg.problem)
    study = cfg.study_config()
    bases = None
    if cfg.backend == "lightning" and cfg.basis_cache and Path(cfg.basis_cache).is_file():
        bases = load_bases(cfg.basis_cache, mesh.polygons, study.fit)
    sol = solve_problem(mesh, prob, study, bases=bases)
    if cfg.backend == "lightning" and cfg.basis_cache and bases is None:
        save_bases(cfg.basis_cache, sol.bases, study.fit)
    values = ", ".join(f"{v:.17g}" for v in sol.u)
    doc = f'{{"problem": {json.dumps(cfg.problem)}, "backend": {json.dumps(cfg.backend)}, "values": [{values}]}}\n'
    if cfg.output:
        Path(cfg.output).write_text(doc)
    else:
        print(f"solved {sol.system.n_free} free DOFs on {mesh.n_cells} cells")
    if cfg.probe is not None:
        print(f"u_h({cfg.probe[0]:g}, {cfg.probe[1]:g}) = {evaluate_solution(mesh, sol.bases, sol.u, cfg.probe):.12g}")
    return EXIT_OK


def cmd_converge(cfg: RunConfig) -> int:
    records = run_convergence(cfg.problem, cfg.cells, cfg.study_config())
    _write(cfg.output, records_to_csv(records))
    if cfg.plot:
        label = "broken" if cfg.backend == "lightning" else "projected"
        Path(cfg.plot).write_text(convergence_svg(records, f"{cfg.problem}, {cfg.backend} ({label} norms)"))
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    rows = timing_compare(cfg.cells, cfg.study_config(), cfg.problem)
    _write(cfg.output, timings_to_csv(rows))
    return EXIT_OK


COMMANDS = {"mesh": cmd_mesh, "solve": cmd_solve, "converge": cmd_converge, "compare": cmd_compare}


def main(argv=None) -> int:
    try:
        cfg = make_config(sys.argv[1:] if argv is None else argv)
        return COMMANDS[cfg.command](cfg)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except (ValidationError, GeometryError, MeshFormatError, UnsupportedRequest, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FitConvergenceError, SolverError, LeastSquaresError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
