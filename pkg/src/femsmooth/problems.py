"""Benchmark boundary value problems."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .assembly import BilinearForm
from .mesh import make_lshape, make_structured_square


@dataclass(frozen=True)
class ExactSolution:
    value: Callable      # u(x, y)
    gradient: Callable   # (u_x, u_y)(x, y)
    singular_points: tuple = ()


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    make_mesh: Callable
    form: BilinearForm
    f: object
    g: object = 0.0
    exact: Optional[ExactSolution] = None
    check_mesh: Optional[Callable] = None

    @property
    def symmetric(self):
        return self.form.symmetric

    def initial_mesh(self):
        mesh = self.make_mesh()
        if self.check_mesh is not None:
            self.check_mesh(mesh)
        return mesh


def lshape_angle(x, y):
    """Polar angle in [0, 2*pi); the L-shape occupies [0, 3*pi/2]."""
    return np.mod(np.arctan2(y, x), 2.0 * np.pi)


def lshape_u(x, y):
    r = np.hypot(x, y)
    return r ** (2.0 / 3.0) * np.sin(2.0 * lshape_angle(x, y) / 3.0)


def lshape_grad(x, y):
    r = np.hypot(x, y)
    t = lshape_angle(x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (2.0 / 3.0) * r ** (-1.0 / 3.0)
    return -c * np.sin(t / 3.0), c * np.cos(t / 3.0)


def poisson_lshape(n=1):
    """``-Laplace u = 0`` on the L-shape with ``u = r^{2/3} sin(2 theta/3)``."""
    return ProblemSpec(
        name="poisson_lshape",
        make_mesh=lambda: make_lshape(n),
        form=BilinearForm(),
        f=0.0,
        g=lshape_u,
        exact=ExactSolution(lshape_u, lshape_grad, singular_points=((0.0, 0.0),)),
    )


def _sin_u(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def _sin_grad(x, y):
    return (np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
            np.pi * np.sin(np.pi * x) * np.cos(np.pi * y))


def _sin_f(x, y):
    return 2.0 * np.pi ** 2 * _sin_u(x, y)


def poisson_square_smooth(n=4):
    """``u = sin(pi x) sin(pi y)`` on the unit square, homogeneous Dirichlet data."""
    return ProblemSpec(
        name="poisson_square_smooth",
        make_mesh=lambda: make_structured_square(n),
        form=BilinearForm(),
        f=_sin_f,
        g=0.0,
        exact=ExactSolution(_sin_u, _sin_grad),
    )


INTERFACE_X = 0.5
CONVECTION = (1.0, 2.0)


def interface_diffusion(x, y):
    return np.where(np.asarray(x) <= INTERFACE_X, 1.0, 1e-3)


def check_interface_alignment(mesh, tol=1e-12):
    """Reject meshes with an element straddling the line ``x = 0.5``."""
    x = mesh.vertices[mesh.elements][..., 0]
    straddle = np.flatnonzero((x.min(axis=1) < INTERFACE_X - tol) & (x.max(axis=1) > INTERFACE_X + tol))
    if straddle.size:
        raise ValueError(f"mesh is not aligned with the interface x = {INTERFACE_X}: "
                         f"{straddle.size} elements cross it")


def convection_diffusion_interface(n=16, diffusion=interface_diffusion, convection=CONVECTION):
    """``(alpha grad u, grad v) + (beta u, grad v) = (1, v)`` on the unit square.

    ``alpha`` is 1 left of ``x = 0.5`` and 1e-3 right of it, ``beta = (1, 2)``.
    ``n`` must be even so that the initial mesh resolves the interface.
    """
    return ProblemSpec(
        name="convection_diffusion_interface",
        make_mesh=lambda: make_structured_square(n),
        form=BilinearForm(diffusion=diffusion, convection=convection),
        f=1.0,
        g=0.0,
        exact=None,
        check_mesh=check_interface_alignment,
    )


PROBLEMS = {
    "poisson_lshape": poisson_lshape,
    "poisson_square_smooth": poisson_square_smooth,
    "convection_diffusion_interface": convection_diffusion_interface,
}


def get_problem(name, **kwargs):
    try:
        return PROBLEMS[name](**kwargs)
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


def layer_distance(xy):
    """Distance to the interface ``x = 0.5`` or the outflow edges ``x = 0``, ``y = 0``.

    The transport velocity of ``-div(alpha grad u) - beta . grad u`` is
    ``-beta``, so material leaves through the left and bottom edges.
    """
    xy = np.atleast_2d(xy)
    return np.minimum.reduce([np.abs(xy[:, 0] - INTERFACE_X), xy[:, 0], xy[:, 1]])
