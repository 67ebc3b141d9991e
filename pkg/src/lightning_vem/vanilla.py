"""Lowest-order (k = 1) virtual element method with projector and stabilization.

This is the baseline the lightning discretization is compared against:
the H1 projector onto linears is computed from vertex values alone,
the stiffness is consistency plus dofi-dofi stabilization, advection is
skew-symmetrized, and the load uses the cell mean of f against the vertex
average of the test function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import GlobalSystem, LocalMatrices, assemble_from_locals, interpolate_dirichlet
from .geometry import Mesh, Polygon
from .problems import PDEProblem
from .quadrature import QuadratureRule, polygon_rule

# Vanilla integrands are smooth; no corner grading needed.
VANILLA_DEGREE = 10
VANILLA_GRADING = 0


@dataclass
class ProjectorData:
    PiNabla: np.ndarray  # (3, N_K): vertex values -> coefficients of 1, (x - x_K)/h, (y - y_K)/h
    D: np.ndarray  # (N_K, 3): monomials at the vertices
    B: np.ndarray  # (3, N_K)
    G: np.ndarray  # (3, 3) = B D
    center: np.ndarray
    h: float

    @property
    def projection(self) -> np.ndarray:
        """Pi in the vertex-value basis, (N_K, N_K)."""
        return self.D @ self.PiNabla

    def polynomial(self, dofs, pts):
        """Values and gradients of Pi(v) at `pts` for vertex values `dofs`."""
        c = self.PiNabla @ np.asarray(dofs, dtype=float)
        rel = (np.atleast_2d(pts) - self.center) / self.h
        vals = c[0] + c[1] * rel[:, 0] + c[2] * rel[:, 1]
        return vals, np.array([c[1], c[2]]) / self.h


def pi_nabla(poly: Polygon) -> ProjectorData:
    if not isinstance(poly, Polygon):
        poly = Polygon(poly)
    v = poly.vertices
    n = len(v)
    h = poly.diameter
    xc = poly.centroid
    D = np.column_stack([np.ones(n), (v - xc) / h])
    L = poly.edge_lengths
    nrm = poly.normals
    # hat traces integrate to |e|/2 on each adjacent edge
    Lprev = np.roll(L, 1)
    B = np.empty((3, n))
    B[0] = 0.5 * (Lprev + L) / L.sum()
    B[1:] = 0.5 * (np.roll(nrm * L[:, None], 1, axis=0) + nrm * L[:, None]).T / h
    G = B @ D
    return ProjectorData(np.linalg.solve(G, B), D, B, G, xc, h)


def local_stiffness_vanilla(poly: Polygon, proj: ProjectorData | None = None) -> np.ndarray:
    proj = pi_nabla(poly) if proj is None else proj
    Gt = proj.G.copy()
    Gt[0] = 0.0
    consistency = proj.PiNabla.T @ Gt @ proj.PiNabla
    S = np.eye(len(poly)) - proj.projection
    K = consistency + S.T @ S
    return 0.5 * (K + K.T)


def stabilization(proj: ProjectorData, u, v) -> float:
    """dofi-dofi stabilization S((I - Pi) u, (I - Pi) v)."""
    S = np.eye(len(proj.D)) - proj.projection
    return float((S @ u) @ (S @ v))


def local_mass_vanilla(poly: Polygon, proj: ProjectorData, gamma, quad: QuadratureRule | None = None) -> np.ndarray:
    """Reaction term with the H1 projector standing in for the L2 one, plus a scaled stabilization."""
    quad = polygon_rule(poly, VANILLA_DEGREE, VANILLA_GRADING) if quad is None else quad
    x, y = quad.points[:, 0], quad.points[:, 1]
    g = np.broadcast_to(gamma(x, y), x.shape) if gamma is not None else np.zeros_like(x)
    rel = (quad.points - proj.center) / proj.h
    m = np.vstack([np.ones_like(x), rel[:, 0], rel[:, 1]])
    Mm = (m * (g * quad.weights)) @ m.T
    S = np.eye(len(poly)) - proj.projection
    gbar = quad.integrate(g) / poly.area
    return proj.PiNabla.T @ Mm @ proj.PiNabla + gbar * poly.area * S.T @ S


def local_advection_vanilla(poly: Polygon, proj: ProjectorData, beta, quad: QuadratureRule | None = None) -> np.ndarray:
    """Skew part of int_K (beta . grad Pi u) * mean_vertex(v); exactly antisymmetric."""
    n = len(poly)
    if beta is None:
        return np.zeros((n, n))
    quad = polygon_rule(poly, VANILLA_DEGREE, VANILLA_GRADING) if quad is None else quad
    bx, by = beta(quad.points[:, 0], quad.points[:, 1])
    ibx = quad.integrate(np.broadcast_to(bx, quad.weights.shape))
    iby = quad.integrate(np.broadcast_to(by, quad.weights.shape))
    c = (ibx * proj.PiNabla[1] + iby * proj.PiNabla[2]) / proj.h
    Bfull = np.tile(c / n, (n, 1))  # row i: test vertex i, column j: trial vertex j
    return 0.5 * (Bfull - Bfull.T)


def local_load_vanilla(poly: Polygon, f, quad: QuadratureRule | None = None) -> np.ndarray:
    quad = polygon_rule(poly, VANILLA_DEGREE, VANILLA_GRADING) if quad is None else quad
    mean_f = quad.integrate(f(quad.points[:, 0], quad.points[:, 1])) / poly.area
    return np.full(len(poly), mean_f * poly.area / len(poly))


def vanilla_local(poly: Polygon, prob: PDEProblem) -> LocalMatrices:
    proj = pi_nabla(poly)
    quad = polygon_rule(poly, VANILLA_DEGREE, VANILLA_GRADING)
    K = prob.epsilon * local_stiffness_vanilla(poly, proj)
    M = local_mass_vanilla(poly, proj, prob.gamma, quad) if prob.gamma is not None else np.zeros_like(K)
    B = local_advection_vanilla(poly, proj, prob.beta, quad)
    F = local_load_vanilla(poly, prob.f, quad)
    return LocalMatrices(K, M, B, F)


def assemble_vanilla(mesh: Mesh, prob: PDEProblem, timings: list | None = None) -> GlobalSystem:
    import time

    locals_ = []
    for poly in mesh.polygons:
        t0 = time.perf_counter()
        locals_.append(vanilla_local(poly, prob))
        if timings is not None:
            timings.append(time.perf_counter() - t0)
    return assemble_from_locals(mesh, locals_, interpolate_dirichlet(prob, mesh))


def vanilla_errors(mesh: Mesh, u_vertices, prob: PDEProblem) -> tuple[float, float]:
    """Errors of the projected solution: ||u - Pi u_h|| and ||grad(u - Pi u_h)|| summed over cells."""
    prob.require_exact()
    u_vertices = np.asarray(u_vertices, dtype=float)
    e0 = e1 = 0.0
    for cell, poly in zip(mesh.cells, mesh.polygons):
        proj = pi_nabla(poly)
        quad = polygon_rule(poly, VANILLA_DEGREE, VANILLA_GRADING)
        x, y = quad.points[:, 0], quad.points[:, 1]
        vals, grad = proj.polynomial(u_vertices[cell], quad.points)
        ux, uy = prob.exact_grad(x, y)
        e0 += quad.integrate((prob.exact_u(x, y) - vals) ** 2)
        e1 += quad.integrate((ux - grad[0]) ** 2 + (uy - grad[1]) ** 2)
    return float(np.sqrt(e0)), float(np.sqrt(e1))
