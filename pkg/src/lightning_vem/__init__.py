"""Lightning virtual element method on polygonal meshes of the unit square.

Element basis functions are harmonic functions fitted to hat-function
boundary data by rational (lightning) least squares. They are then used
directly in a broken Galerkin assembly.
"""

from .analysis import (
    ConvergenceRecord,
    SolverError,
    StudyConfig,
    run_convergence,
    solve_linear,
    solve_problem,
    timing_compare,
)
from .geometry import (
    EmptyCellError,
    GeometryError,
    Mesh,
    MeshFormatError,
    Polygon,
    generate_cvt,
    load_mesh,
    save_mesh,
)
from .lightning import (
    ElementBasis,
    FitConfig,
    FitConvergenceError,
    RationalHarmonicFn,
    fit_element_basis,
    fit_hat_basis,
)
from .problems import PDEProblem, UnsupportedRequest, get_problem

__all__ = [
    "ConvergenceRecord",
    "ElementBasis",
    "EmptyCellError",
    "FitConfig",
    "FitConvergenceError",
    "GeometryError",
    "Mesh",
    "MeshFormatError",
    "PDEProblem",
    "Polygon",
    "RationalHarmonicFn",
    "SolverError",
    "StudyConfig",
    "UnsupportedRequest",
    "fit_element_basis",
    "fit_hat_basis",
    "generate_cvt",
    "get_problem",
    "load_mesh",
    "run_convergence",
    "save_mesh",
    "solve_linear",
    "solve_problem",
    "timing_compare",
]
