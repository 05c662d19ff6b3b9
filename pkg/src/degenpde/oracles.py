"""Self-similar reference solution for the porous-medium benchmark.

The biomass equation with the power law D(M) = M^a and no reactions reads

    dM/dt = Laplacian(M^(a+1)) / (a+1),

i.e. the porous-medium equation with exponent mu = a + 1 run at 1/mu of its
usual clock.  The source-type self-similar solution of dw/ds = Laplacian(w^mu)
in d dimensions is

    w(x, s) = s^(-alpha) * (C - kappa |x|^2 s^(-2 alpha / d))_+^(1/(mu-1)),
    alpha = d / (d (mu - 1) + 2),   kappa = (mu - 1) alpha / (2 d mu),

so M(x, t) = w(x, s0 + t/mu) solves the benchmark equation with a smooth
profile at t = 0.  The constants are validated numerically by substituting
into the PDE (finite differences away from the front); that residual check is
the oracle's certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BarenblattSolution:
    """Closed-form reference for the PDE dM/dt = Laplacian(M^(a+1))/(a+1)."""

    a: float
    dim: int = 1
    peak: float = 0.6  # maximum density at t = 0
    s0: float = 1.0  # internal self-similar time at t = 0

    def __post_init__(self):
        if self.a <= 0 or self.dim not in (1, 2) or not 0 < self.peak < 1 or self.s0 <= 0:
            raise ValueError("invalid Barenblatt parameters")

    @property
    def mu(self):
        return self.a + 1.0

    @property
    def alpha(self):
        d = self.dim
        return d / (d * (self.mu - 1.0) + 2.0)

    @property
    def kappa(self):
        return (self.mu - 1.0) * self.alpha / (2.0 * self.dim * self.mu)

    @property
    def C(self):
        # peak = s0^-alpha C^(1/(mu-1)) at the center
        return (self.peak * self.s0**self.alpha) ** (self.mu - 1.0)

    def _internal_time(self, t):
        return self.s0 + np.asarray(t, dtype=float) / self.mu

    def __call__(self, x, t, y=None):
        """Density at positions x (and y in 2D) and time t."""
        s = self._internal_time(t)
        r2 = np.asarray(x, dtype=float) ** 2
        if self.dim == 2:
            if y is None:
                raise ValueError("2D solution needs both coordinates")
            r2 = r2 + np.asarray(y, dtype=float) ** 2
        core = self.C - self.kappa * r2 * s ** (-2.0 * self.alpha / self.dim)
        return s**-self.alpha * np.clip(core, 0.0, None) ** (1.0 / (self.mu - 1.0))

    def front_radius(self, t):
        s = self._internal_time(t)
        return float(np.sqrt(self.C / self.kappa) * s ** (self.alpha / self.dim))

    def pde_residual(self, x, t, dx=1e-4, dt=1e-6):
        """Finite-difference residual of dM/dt - Laplacian(M^mu)/mu (1D points)."""
        if self.dim != 1:
            raise ValueError("residual check implemented for the 1D benchmark")
        phi = lambda m: m**self.mu / self.mu
        m_t = (self(x, t + dt) - self(x, t - dt)) / (2.0 * dt)
        lap = (phi(self(x + dx, t)) - 2.0 * phi(self(x, t)) + phi(self(x - dx, t))) / dx**2
        return m_t - lap

    def cell_average_initial(self, grid):
        """Initial field sampled at cell centers (midpoint projection)."""
        if grid.dim == 1:
            return self(grid.centers(0), 0.0)
        xs, ys = grid.meshgrid()
        return self(xs, 0.0, y=ys)
