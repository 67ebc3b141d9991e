"""Lightning fits of the local virtual basis functions.

Each basis function of an element is the harmonic extension of a hat
function on the element boundary. It is approximated by the real part of

    F(z) = sum_j a_j / (z - z_j) + sum_{j=1}^{N_Z} b_j ((z - z_*) / h)^j + c

with poles z_j clustered exponentially toward the corners along the
exterior bisectors. The coefficients come from an oversampled boundary
least-squares problem; the number of poles per corner grows through a
sequence with uniformly spaced square roots until the boundary error on a
held-out point set drops below the tolerance.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .geometry import Polygon


class FitConvergenceError(RuntimeError):
    """The pole sequence was exhausted before reaching the tolerance."""

    def __init__(self, message, best_error, best=None):
        super().__init__(message)
        self.best_error = best_error
        self.best = best


class LeastSquaresError(RuntimeError):
    pass


@dataclass(frozen=True)
class FitConfig:
    eps: float = 1e-8
    sigma: float = 4.0
    n_sequence: tuple[int, ...] = (4, 9, 16, 25, 36, 49, 64)
    n_max: int = 64
    svd_rtol: float = 1e-12
    validation_density: int = 2

    def __post_init__(self):
        object.__setattr__(self, "n_sequence", tuple(int(n) for n in self.n_sequence))
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        seq = self.n_sequence
        if not seq or seq[0] < 1 or any(b <= a for a, b in zip(seq, seq[1:])):
            raise ValueError("n_sequence must be a strictly increasing sequence of positive counts")
        if self.validation_density < 2:
            raise ValueError("validation_density must be >= 2")

    @property
    def active_sequence(self) -> tuple[int, ...]:
        return tuple(n for n in self.n_sequence if n <= self.n_max)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_sequence"] = list(self.n_sequence)
        return d


@dataclass(frozen=True)
class FitDiagnostics:
    n: int
    n_poles: int
    boundary_error: float
    sv_floor: float  # smallest retained singular value relative to the largest
    n_truncated: int
    history: tuple = ()  # (n, N_P, boundary error) per attempted n


@dataclass(frozen=True, eq=False)
class RationalHarmonicFn:
    """u(z) = Re F(z) with F as in the module docstring.

    ``coeffs`` holds 2 N_P + 2 N_Z + 1 reals: real parts of the pole
    coefficients, their negated imaginary parts, the same for the monomial
    coefficients, then the constant. This matches the column layout of
    :func:`assemble_ls`.
    """

    poles: np.ndarray
    center: complex
    scale: float
    coeffs: np.ndarray
    diagnostics: FitDiagnostics | None = None

    @property
    def n_poles(self) -> int:
        return len(self.poles)

    @property
    def degree(self) -> int:
        return (len(self.coeffs) - 1 - 2 * len(self.poles)) // 2

    def complex_coeffs(self):
        """(a, b, c): complex pole and monomial coefficients and the constant."""
        npol, nz = self.n_poles, self.degree
        x = self.coeffs
        a = x[:npol] - 1j * x[npol : 2 * npol]
        b = x[2 * npol : 2 * npol + nz] - 1j * x[2 * npol + nz : 2 * npol + 2 * nz]
        return a, b, float(x[-1])

    def __call__(self, pts):
        return evaluate(self, pts)


@dataclass(eq=False)
class ElementBasis:
    element: Polygon
    functions: list[RationalHarmonicFn]

    @property
    def diagnostics(self) -> list[FitDiagnostics | None]:
        return [f.diagnostics for f in self.functions]

    @property
    def boundary_error(self) -> float:
        return max(d.boundary_error for d in self.diagnostics if d is not None)

    def values(self, pts) -> np.ndarray:
        """All basis functions at `pts`, shape (N_K, Q)."""
        return evaluate_many(self.functions, pts)[0]

    def gradients(self, pts) -> np.ndarray:
        """All basis gradients at `pts`, shape (N_K, Q, 2)."""
        return evaluate_many(self.functions, pts, gradient=True)[1]

    def values_and_gradients(self, pts):
        return evaluate_many(self.functions, pts, gradient=True)


def _as_complex(pts) -> np.ndarray:
    p = np.asarray(pts)
    if np.iscomplexobj(p):
        return p.ravel()
    p = np.atleast_2d(p.astype(float))
    return p[:, 0] + 1j * p[:, 1]


def place_poles(poly: Polygon, n_per_corner: int, sigma: float = 4.0) -> np.ndarray:
    """Poles w_k + b_k h exp(-sigma (sqrt(n) - sqrt(j))), j = 1..n, per corner k."""
    if n_per_corner < 1:
        raise ValueError("n_per_corner must be >= 1")
    h = poly.diameter
    j = np.arange(1, n_per_corner + 1)
    dist = h * np.exp(-sigma * (np.sqrt(n_per_corner) - np.sqrt(j)))
    if dist[0] < 1e-14 * h:
        raise ValueError(
            f"innermost pole distance {dist[0] / h:.1e}*h is below double precision; reduce sigma or n"
        )
    b = poly.bisectors[:, 0] + 1j * poly.bisectors[:, 1]
    poles = (poly.complex_vertices[:, None] + b[:, None] * dist[None, :]).ravel()
    pts = np.column_stack([poles.real, poles.imag])
    if np.any(poly.contains(pts)):
        raise AssertionError("pole placed inside the element")
    return poles


class BoundarySamples(NamedTuple):
    points: np.ndarray  # complex
    edge: np.ndarray  # edge index of each point
    s: np.ndarray  # parameter in (0, 1) along the edge


def _edge_parameters(m: int, n: int, sigma: float) -> np.ndarray:
    k = m // 3
    filler = m - 2 * k
    s = (np.arange(filler) + 0.5) / filler
    if k:
        # log-spaced distances from each endpoint down to ~ exp(-sigma sqrt(n))
        d = 0.5 * np.exp(-sigma * np.sqrt(n) * (1.0 - np.arange(k) / k))
        s = np.concatenate([d, s, 1.0 - d])
    return np.sort(s)


def sample_boundary(poly: Polygon, M: int, n: int | None = None, sigma: float = 4.0) -> BoundarySamples:
    """M boundary points, clustered exponentially toward both ends of each edge.

    Edge k gets floor(M / N_K) points, plus one for the first M mod N_K
    edges. A third of an edge's points are clustered toward each endpoint on
    a log scale reaching exp(-sigma sqrt(n)) of the edge length; the rest
    are spread uniformly. `n` defaults to the pole count per corner implied
    by M = 6 N_P + 6 N_Z + 1 with N_Z = N_K.
    """
    nk = len(poly)
    if M < nk:
        raise ValueError(f"need at least one sample per edge (M >= {nk})")
    if n is None:
        n = max(1, round((M - 1) / (6 * nk)) - 1)
    base, extra = divmod(M, nk)
    pts, edge, ss = [], [], []
    for e in range(nk):
        s = _edge_parameters(base + (e < extra), n, sigma)
        a = poly.complex_vertices[e]
        b = poly.complex_vertices[(e + 1) % nk]
        pts.append(a + s * (b - a))
        edge.append(np.full(len(s), e))
        ss.append(s)
    return BoundarySamples(np.concatenate(pts), np.concatenate(edge), np.concatenate(ss))


def validation_points(poly: Polygon, samples: BoundarySamples, density: int = 2) -> BoundarySamples:
    """Held-out boundary points: the vertices plus `density - 1` points in each gap between samples."""
    nk = len(poly)
    frac = np.arange(1, density) / density
    pts, edge, ss = [], [], []
    for e in range(nk):
        s = np.concatenate([[0.0], np.sort(samples.s[samples.edge == e]), [1.0]])
        sv = np.concatenate([[0.0], (s[:-1, None] + np.diff(s)[:, None] * frac[None, :]).ravel()])
        a = poly.complex_vertices[e]
        b = poly.complex_vertices[(e + 1) % nk]
        pts.append(a + sv * (b - a))
        edge.append(np.full(len(sv), e))
        ss.append(sv)
    return BoundarySamples(np.concatenate(pts), np.concatenate(edge), np.concatenate(ss))


def hat_trace(n_vertices: int, i: int, edge: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Boundary values of the hat of vertex i: 1 at vertex i, linear on its two edges, 0 elsewhere."""
    d = np.zeros(len(s))
    d[edge == i] = 1.0 - s[edge == i]
    prev = (i - 1) % n_vertices
    d[edge == prev] = s[edge == prev]
    return d


class ColumnInfo(NamedTuple):
    n_poles: int
    degree: int

    @property
    def n_columns(self) -> int:
        return 2 * self.n_poles + 2 * self.degree + 1


def _basis_columns(z, poles, center, scale, degree):
    r = 1.0 / (z[:, None] - poles[None, :])
    w = ((z - center) / scale)[:, None] ** np.arange(1, degree + 1)[None, :]
    return np.hstack([r.real, r.imag, w.real, w.imag, np.ones((len(z), 1))])


def assemble_ls(poly: Polygon, poles, center: complex, degree: int, samples) -> tuple[np.ndarray, ColumnInfo]:
    """Least-squares matrix whose columns are the real basis traces at the samples."""
    z = samples.points if isinstance(samples, BoundarySamples) else _as_complex(samples)
    poles = np.asarray(poles, dtype=complex)
    if len(poles) and np.min(np.abs(z[:, None] - poles[None, :])) == 0.0:
        raise LeastSquaresError("sample point coincides with a pole")
    return _basis_columns(z, poles, complex(center), poly.diameter, degree), ColumnInfo(len(poles), degree)


def solve_ls_tsvd(A: np.ndarray, d: np.ndarray, svd_rtol: float = 1e-12):
    """Minimum-norm least squares with singular values below svd_rtol * s_max dropped.

    Returns (x, n_truncated, sv_floor) where sv_floor is the smallest kept
    singular value relative to the largest.
    """
    if A.shape[0] < A.shape[1]:
        raise LeastSquaresError("least-squares matrix must have at least as many rows as columns")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > svd_rtol * s[0] if s.size and s[0] > 0 else np.zeros(len(s), bool)
    r = int(np.count_nonzero(keep))
    if r == 0:
        raise LeastSquaresError("all singular values truncated")
    x = Vt[:r].T @ ((U[:, :r].T @ d) / (s[:r, None] if np.ndim(d) == 2 else s[:r]))
    return x, len(s) - r, float(s[r - 1] / s[0])


def _fit_at(poly: Polygon, n: int, cfg: FitConfig, which):
    nk = len(poly)
    poles = place_poles(poly, n, cfg.sigma)
    degree = nk
    M = 6 * len(poles) + 6 * degree + 1
    samples = sample_boundary(poly, M, n, cfg.sigma)
    center = complex(*poly.centroid)
    A, info = assemble_ls(poly, poles, center, degree, samples)
    D = np.stack([hat_trace(nk, i, samples.edge, samples.s) for i in which], axis=1)
    norms = np.linalg.norm(A, axis=0)
    y, ntrunc, floor = solve_ls_tsvd(A / norms, D, cfg.svd_rtol)
    X = y / norms[:, None]
    val = validation_points(poly, samples, cfg.validation_density)
    Av, _ = assemble_ls(poly, poles, center, degree, val)
    Dv = np.stack([hat_trace(nk, i, val.edge, val.s) for i in which], axis=1)
    err = np.max(np.abs(Av @ X - Dv), axis=0)
    return poles, center, X, err, ntrunc, floor


def _fit(poly: Polygon, which, cfg: FitConfig, stop: bool = True):
    """Joint fit of the hats in `which`; stops at the first n where all meet eps."""
    h = poly.diameter
    history = []
    best = None
    for n in cfg.active_sequence:
        poles, center, X, err, ntrunc, floor = _fit_at(poly, n, cfg, which)
        history.append((n, len(poles), float(np.max(err))))
        if best is None or np.max(err) < best[3].max():
            best = (n, poles, X, err, ntrunc, floor)
        if stop and np.all(err <= cfg.eps):
            break
    n, poles, X, err, ntrunc, floor = best
    fns = []
    for col, e in enumerate(err):
        diag = FitDiagnostics(n, len(poles), float(e), floor, ntrunc, tuple(history))
        fns.append(RationalHarmonicFn(poles, center, h, np.ascontiguousarray(X[:, col]), diag))
    worst = float(np.max(err))
    if stop and worst > cfg.eps:
        raise FitConvergenceError(
            f"boundary error {worst:.3e} > eps={cfg.eps:.1e} after n = {cfg.active_sequence[-1]}", worst, fns
        )
    return fns, history


def fit_hat_basis(poly: Polygon, vertex_index: int, cfg: FitConfig = FitConfig()) -> RationalHarmonicFn:
    """Lightning fit of the harmonic extension of the hat of one vertex."""
    if not 0 <= vertex_index < len(poly):
        raise IndexError(f"vertex index {vertex_index} out of range for {len(poly)} vertices")
    fns, _ = _fit(poly, [vertex_index], cfg)
    return fns[0]


def fit_element_basis(poly: Polygon, cfg: FitConfig = FitConfig()) -> ElementBasis:
    """All N_K hats of an element, sharing poles and the least-squares factorization.

    The pole count is increased until every hat meets the tolerance.
    """
    fns, _ = _fit(poly, list(range(len(poly))), cfg)
    return ElementBasis(poly, fns)


def fit_history(poly: Polygon, cfg: FitConfig = FitConfig(), which=None):
    """Boundary error after each n of the sequence, without early stopping.

    Returns a list of (n, N_P, max boundary error over the hats in `which`).
    """
    which = list(range(len(poly))) if which is None else list(which)
    _, history = _fit(poly, which, cfg, stop=False)
    return history


def evaluate_many(fns, pts, gradient: bool = False):
    """Values (and optionally gradients) of several functions at `pts`.

    Functions sharing the same pole array are evaluated with one Cauchy
    matrix. Returns (values (F, Q), gradients (F, Q, 2) or None).
    """
    z = _as_complex(pts)
    vals = np.empty((len(fns), len(z)))
    grads = np.empty((len(fns), len(z), 2)) if gradient else None
    groups: dict[int, list[int]] = {}
    for k, f in enumerate(fns):
        key = next((g for g in groups if _same_expansion(fns[g], f)), k)
        groups.setdefault(key, []).append(k)
    for lead, members in groups.items():
        f0 = fns[lead]
        r = z[:, None] - f0.poles[None, :]
        if f0.n_poles and np.any(r == 0):
            raise ZeroDivisionError("evaluation point coincides with a pole")
        np.reciprocal(r, out=r)  # in place: this array dominates the cost
        w = (z - f0.center) / f0.scale
        powers = w[:, None] ** np.arange(0, f0.degree + 1)[None, :]
        coef = [f.complex_coeffs() for f in (fns[m] for m in members)]
        a = np.stack([c[0] for c in coef], axis=1)
        b = np.stack([c[1] for c in coef], axis=1)
        const = np.array([c[2] for c in coef])
        F = r @ a + powers[:, 1:] @ b + const[None, :]
        vals[members] = F.real.T
        if gradient:
            jj = np.arange(1, f0.degree + 1)
            np.multiply(r, r, out=r)
            dF = (powers[:, :-1] * jj[None, :]) @ b / f0.scale - r @ a
            grads[members, :, 0] = dF.real.T
            grads[members, :, 1] = -dF.imag.T
    return vals, grads


def _same_expansion(f, g) -> bool:
    return (
        f.poles is g.poles or (f.poles.shape == g.poles.shape and np.array_equal(f.poles, g.poles))
    ) and f.center == g.center and f.scale == g.scale and f.degree == g.degree


def evaluate(f: RationalHarmonicFn, pts) -> np.ndarray:
    return evaluate_many([f], pts)[0][0]


def evaluate_gradient(f: RationalHarmonicFn, pts) -> np.ndarray:
    """(du/dx, du/dy) = (Re F', -Im F'), shape (Q, 2)."""
    return evaluate_many([f], pts, gradient=True)[1][0]


def _fn_to_json(f: RationalHarmonicFn) -> dict:
    return {
        "poles": [[float(p.real), float(p.imag)] for p in f.poles],
        "center": [float(f.center.real), float(f.center.imag)],
        "scale": float(f.scale),
        "coeffs": [float(c) for c in f.coeffs],
        "boundary_error": None if f.diagnostics is None else f.diagnostics.boundary_error,
        "n": None if f.diagnostics is None else f.diagnostics.n,
    }


def _fmt(obj) -> str:
    # 17 significant digits, same convention as the mesh files
    if isinstance(obj, float):
        return f"{obj:.17g}"
    if isinstance(obj, list):
        return "[" + ", ".join(_fmt(o) for o in obj) + "]"
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_fmt(v)}" for k, v in obj.items()) + "}"
    return json.dumps(obj)


def save_bases(path, bases: list[ElementBasis], cfg: FitConfig) -> None:
    """Write fitted bases for every (cell, vertex) as JSON text."""
    lines = [f'{{"fit_config": {_fmt(cfg.to_dict())},', ' "cells": [']
    body = []
    for b in bases:
        fns = ",\n   ".join(_fmt(_fn_to_json(f)) for f in b.functions)
        body.append(f'  {{"vertices": {_fmt(b.element.vertices.tolist())},\n   "functions": [\n   {fns}]}}')
    lines.append(",\n".join(body))
    lines.append("]}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_bases(path, polygons, cfg: FitConfig) -> list[ElementBasis] | None:
    """Read a basis cache; None if it was fitted with another config or mesh."""
    data = json.loads(Path(path).read_text())
    if FitConfig(**{**data["fit_config"], "n_sequence": tuple(data["fit_config"]["n_sequence"])}) != cfg:
        return None
    if len(data["cells"]) != len(polygons):
        return None
    out = []
    for poly, cell in zip(polygons, data["cells"]):
        if not np.array_equal(np.array(cell["vertices"], dtype=float), poly.vertices):
            return None
        fns = []
        shared = None
        for fj in cell["functions"]:
            poles = np.array([complex(*p) for p in fj["poles"]], dtype=complex)
            if shared is not None and np.array_equal(shared, poles):
                poles = shared
            shared = poles
            diag = None
            if fj.get("n") is not None:
                diag = FitDiagnostics(fj["n"], len(poles), fj["boundary_error"], float("nan"), 0)
            fns.append(RationalHarmonicFn(poles, complex(*fj["center"]), fj["scale"], np.array(fj["coeffs"]), diag))
        out.append(ElementBasis(poly, fns))
    return out


def _timed_fit(args):
    import time

    poly, cfg = args
    t0 = time.perf_counter()
    basis = fit_element_basis(poly, cfg)
    return basis, time.perf_counter() - t0


def fit_mesh_bases(polygons, cfg: FitConfig = FitConfig(), workers: int = 1, timings: list | None = None):
    """Fit every element independently; results come back in element order.

    With ``workers > 1`` the fits run in a process pool. Per-element wall
    times are appended to `timings` when given.
    """
    jobs = [(p, cfg) for p in polygons]
    if workers > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_timed_fit, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_timed_fit(j) for j in jobs]
    if timings is not None:
        timings.extend(t for _, t in results)
    return [b for b, _ in results]
