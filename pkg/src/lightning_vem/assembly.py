"""Element matrices from the fitted basis and broken-form global assembly.

The local forms are integrated directly with the pointwise basis values,
so there is no projector and no stabilization. Since the fitted basis is
only continuous up to the fit tolerance across interfaces, the global form
is the sum of element contributions (a broken form) over shared vertex
degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import Mesh
from .lightning import ElementBasis
from .problems import PDEProblem
from .quadrature import DEFAULT_DEGREE, DEFAULT_GRADING, QuadratureRule, polygon_rule


@dataclass
class LocalMatrices:
    K_stiff: np.ndarray
    M_mass: np.ndarray
    B_adv: np.ndarray
    F_load: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.K_stiff + self.M_mass + self.B_adv


@dataclass
class GlobalSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dof_map: np.ndarray  # vertex -> free index, -1 for Dirichlet vertices
    dirichlet: np.ndarray  # vertex -> boundary value, nan on free vertices

    @property
    def n_free(self) -> int:
        return self.matrix.shape[0]

    def expand(self, x) -> np.ndarray:
        """Full vertex vector from the free-DOF solution."""
        u = self.dirichlet.copy()
        free = self.dof_map >= 0
        u[free] = np.asarray(x)[self.dof_map[free]]
        return u


def local_matrices(basis: ElementBasis, prob: PDEProblem, quad: QuadratureRule | None = None) -> LocalMatrices:
    if quad is None:
        quad = polygon_rule(basis.element)
    elif quad.region is not None and not (
        quad.region.shape == basis.element.vertices.shape and np.array_equal(quad.region, basis.element.vertices)
    ):
        raise ValueError("quadrature rule was built on a different element")
    x, y = quad.points[:, 0], quad.points[:, 1]
    w = quad.weights
    phi, grad = basis.values_and_gradients(quad.points)
    wg = grad * w[None, :, None]
    K = prob.epsilon * np.einsum("iqd,jqd->ij", wg, grad)
    K = 0.5 * (K + K.T)
    gamma = prob.gamma_at(x, y)
    M = (phi * (gamma * w)) @ phi.T
    bx, by = prob.beta_at(x, y)
    b_grad = grad[:, :, 0] * bx + grad[:, :, 1] * by  # (j, q): beta . grad phi_j
    B = (phi * w) @ b_grad.T
    F = phi @ (prob.f(x, y) * w)
    return LocalMatrices(K, M, B, F)


def interpolate_dirichlet(prob: PDEProblem, mesh: Mesh) -> np.ndarray:
    """Boundary vertex values g(v); nan on interior vertices."""
    vals = np.full(mesh.n_vertices, np.nan)
    b = mesh.boundary_vertex
    vals[b] = prob.g(mesh.vertices[b, 0], mesh.vertices[b, 1])
    return vals


def assemble_from_locals(mesh: Mesh, locals_: list[LocalMatrices], dirichlet: np.ndarray) -> GlobalSystem:
    """Sum element matrices over vertex DOFs and eliminate Dirichlet vertices."""
    if len(locals_) != mesh.n_cells:
        raise ValueError(f"got {len(locals_)} element contributions for {mesh.n_cells} cells")
    free = np.isnan(dirichlet)
    dof_map = np.full(mesh.n_vertices, -1)
    dof_map[free] = np.arange(np.count_nonzero(free))
    n = int(np.count_nonzero(free))
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    for cell, loc in zip(mesh.cells, locals_):
        A = loc.total
        d = dof_map[cell]
        fr = d >= 0
        g = np.where(fr, 0.0, dirichlet[cell])
        r = loc.F_load - A @ g
        np.add.at(rhs, d[fr], r[fr])
        ii, jj = np.meshgrid(d[fr], d[fr], indexing="ij")
        rows.append(ii.ravel())
        cols.append(jj.ravel())
        vals.append(A[np.ix_(fr, fr)].ravel())
    if rows:
        matrix = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
    else:
        matrix = sp.csr_matrix((n, n))
    matrix.sum_duplicates()
    return GlobalSystem(matrix, rhs, dof_map, dirichlet)


def assemble_global(
    mesh: Mesh,
    bases: list[ElementBasis],
    prob: PDEProblem,
    degree: int = DEFAULT_DEGREE,
    grading_levels: int = DEFAULT_GRADING,
) -> GlobalSystem:
    if len(bases) != mesh.n_cells:
        raise ValueError(f"got {len(bases)} element bases for {mesh.n_cells} cells")
    locals_ = [local_matrices(b, prob, polygon_rule(b.element, degree, grading_levels)) for b in bases]
    return assemble_from_locals(mesh, locals_, interpolate_dirichlet(prob, mesh))
