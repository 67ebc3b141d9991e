"""Model problems on the unit square with manufactured solutions.

All fields are vectorized callables ``field(x, y)``. The reference solution
for the studies is u = sin(pi x) sin(pi y) + log(1 + x y).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]

PROBLEM_IDS = ("laplace", "diffusion_reaction", "adr")


class UnsupportedRequest(RuntimeError):
    """The requested quantity needs data the problem does not carry."""


@dataclass(frozen=True)
class PDEProblem:
    """-eps Lap u + beta . grad u + gamma u = f in the unit square, u = g on its boundary."""

    f: Field
    g: Field
    epsilon: float = 1.0
    gamma: Field | None = None
    beta: Callable | None = None  # returns (bx, by)
    exact_u: Field | None = None
    exact_grad: Callable | None = None  # returns (ux, uy)
    name: str = "custom"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.beta is not None:
            div = divergence_spot_check(self.beta)
            if div > 1e-10:
                raise ValueError(f"beta is not divergence free: max |div beta| = {div:.2e}")

    @property
    def symmetric(self) -> bool:
        return self.beta is None

    def gamma_at(self, x, y):
        return np.zeros_like(x) if self.gamma is None else np.broadcast_to(self.gamma(x, y), np.shape(x))

    def beta_at(self, x, y):
        if self.beta is None:
            return np.zeros_like(x), np.zeros_like(x)
        bx, by = self.beta(x, y)
        return np.broadcast_to(bx, np.shape(x)), np.broadcast_to(by, np.shape(x))

    def require_exact(self):
        if self.exact_u is None or self.exact_grad is None:
            raise UnsupportedRequest(f"problem {self.name!r} has no exact solution; errors cannot be computed")


def divergence_spot_check(beta, n_points: int = 100, seed: int = 12345) -> float:
    """max |div beta| at random points of the unit square, by complex-step differentiation."""
    rng = np.random.default_rng(seed)
    x, y = rng.random(n_points), rng.random(n_points)
    h = 1e-30
    try:
        dbx = np.imag(beta(x + 1j * h, y + 0j)[0]) / h
        dby = np.imag(beta(x + 0j, y + 1j * h)[1]) / h
    except (TypeError, ValueError):
        # real-only fields: fourth-order central differences
        s = 1e-3
        dbx = (-beta(x + 2 * s, y)[0] + 8 * beta(x + s, y)[0] - 8 * beta(x - s, y)[0] + beta(x - 2 * s, y)[0]) / (12 * s)
        dby = (-beta(x, y + 2 * s)[1] + 8 * beta(x, y + s)[1] - 8 * beta(x, y - s)[1] + beta(x, y - 2 * s)[1]) / (12 * s)
    return float(np.max(np.abs(np.real(dbx + dby))))


def exact_u(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y) + np.log(1 + x * y)


def exact_grad(x, y):
    ux = np.pi * np.cos(np.pi * x) * np.sin(np.pi * y) + y / (1 + x * y)
    uy = np.pi * np.sin(np.pi * x) * np.cos(np.pi * y) + x / (1 + x * y)
    return ux, uy


def minus_laplacian(x, y):
    return 2 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y) + (x**2 + y**2) / (1 + x * y) ** 2


def adr_beta(x, y):
    s = np.sin(np.pi * (x + 2 * y))
    return -2 * np.pi * s, np.pi * s


def laplace_problem() -> PDEProblem:
    return PDEProblem(f=minus_laplacian, g=exact_u, exact_u=exact_u, exact_grad=exact_grad, name="laplace")


def diffusion_reaction_problem(epsilon: float = 1.0, gamma: float = 1.0) -> PDEProblem:
    def f(x, y):
        return epsilon * minus_laplacian(x, y) + gamma * exact_u(x, y)

    return PDEProblem(
        f=f,
        g=exact_u,
        epsilon=epsilon,
        gamma=lambda x, y: np.full(np.shape(x), gamma),
        exact_u=exact_u,
        exact_grad=exact_grad,
        name="diffusion_reaction",
    )


def adr_problem(epsilon: float = 1.0, gamma: float = 1.0) -> PDEProblem:
    def f(x, y):
        ux, uy = exact_grad(x, y)
        bx, by = adr_beta(x, y)
        return epsilon * minus_laplacian(x, y) + bx * ux + by * uy + gamma * exact_u(x, y)

    return PDEProblem(
        f=f,
        g=exact_u,
        epsilon=epsilon,
        gamma=lambda x, y: np.full(np.shape(x), gamma),
        beta=adr_beta,
        exact_u=exact_u,
        exact_grad=exact_grad,
        name="adr",
    )


def linear_problem(c0: float = 1.0, cx: float = 2.0, cy: float = -3.0) -> PDEProblem:
    """Patch-test problem: u = c0 + cx x + cy y, f = 0."""

    def u(x, y):
        return c0 + cx * x + cy * y

    def grad(x, y):
        return np.full(np.shape(x), cx), np.full(np.shape(x), cy)

    return PDEProblem(f=lambda x, y: np.zeros(np.shape(x)), g=u, exact_u=u, exact_grad=grad, name="linear")


def get_problem(problem_id: str) -> PDEProblem:
    try:
        return {"laplace": laplace_problem, "diffusion_reaction": diffusion_reaction_problem, "adr": adr_problem}[
            problem_id
        ]()
    except KeyError:
        raise ValueError(f"unknown problem {problem_id!r}; choose from {', '.join(PROBLEM_IDS)}") from None
