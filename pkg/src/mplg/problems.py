"""Problem data for the convection-diffusion equation

    dphi/dt + div(u phi) - nu * Laplace(phi) = f      in the box,
    nu * dphi/dn - phi * u.n = g                      on its boundary,

plus the built-in smooth travelling-wave benchmark and a few trivial cases
used by the tests.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .characteristics import VelocityField
from .mesh import Domain


@dataclass(frozen=True)
class ProblemData:
    domain: Domain
    nu: float
    T: float
    velocity: VelocityField
    phi0: Callable
    f: Callable | None = None
    g: Callable | None = None
    exact: Callable | None = None
    # d(phi)/dt of the exact solution, for the discrete H1(L2) error
    exact_dt: Callable | None = None
    # d(phi)/dt + div(u phi) of the exact solution, for truncation probes
    material_rate: Callable | None = None

    def __post_init__(self):
        if not 0.0 < self.nu <= 1.0:
            raise ValueError(f"viscosity must lie in (0, 1], got {self.nu!r}")
        if self.T <= 0.0:
            raise ValueError("final time must be positive")

    @property
    def dim(self) -> int:
        return self.domain.dim


def travelling_wave(dim: int, nu: float = 1e-2, T: float = 0.5,
                    consistent_flux: bool = False) -> ProblemData:
    """Smooth exact solution transported by ``u_i = 1 + sin(t - x_i)``.

    ``phi = prod_i exp(-(1 - cos(t - x_i)) / nu)`` solves the equation with
    ``f = 0``.  By default ``g = 0``, which the exact solution only satisfies
    up to a term of size ``phi`` on the boundary (negligible for small ``nu``).

    ``consistent_flux=True`` supplies the diffusive flux ``nu dphi/dn`` of the
    exact solution as boundary data.  The characteristic term already moves
    mass across the boundary through the extended upwind feet, so this is the
    part of the flux the scheme still needs.
    """

    def velocity(x, t):
        return 1.0 + np.sin(t - x)

    def gradient(x, t):
        out = np.zeros(x.shape + (x.shape[-1],))
        idx = np.arange(x.shape[-1])
        out[..., idx, idx] = -np.cos(t - x)
        return out

    def exact(x, t):
        return np.exp(-np.sum(1.0 - np.cos(t - x), axis=-1) / nu)

    def exact_dt(x, t):
        return exact(x, t) * np.sum(-np.sin(t - x), axis=-1) / nu

    def material_rate(x, t):
        s = t - x
        return exact(x, t) * np.sum(np.sin(s) ** 2 / nu - np.cos(s), axis=-1)

    def flux(x, t):
        # nu dphi/dx_i = phi sin(t - x_i)
        normal = np.where(x >= 1.0 - 1e-12, 1.0, 0.0) - np.where(x <= -1.0 + 1e-12, 1.0, 0.0)
        return exact(x, t) * np.sum(normal * np.sin(t - x), axis=-1)

    return ProblemData(
        domain=Domain.cube(dim),
        nu=nu,
        T=T,
        velocity=VelocityField(velocity, gradient, 1.0),
        phi0=lambda x: exact(x, 0.0),
        g=flux if consistent_flux else None,
        exact=exact,
        exact_dt=exact_dt,
        material_rate=material_rate,
    )


def pure_diffusion(dim: int, phi0: Callable, nu: float = 1e-2, T: float = 0.5,
                   f: Callable | None = None, g: Callable | None = None) -> ProblemData:
    """Zero velocity; with f = g = 0 the total mass is exactly conserved."""
    return ProblemData(Domain.cube(dim), nu, T, VelocityField.zero(dim), phi0, f=f, g=g)
