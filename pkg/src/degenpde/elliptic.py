"""Nonlinear solves for one implicit time step and the linear Poisson barrier.

Each backward-Euler step of the transformed biomass equation demands a root of

    R(u) = beta(u) - m_prev + tau * L u - tau * f0(beta(u), s),

with L the two-point-flux operator including the step's Dirichlet data.  The
operator is strictly monotone when tau < 1/C_L, so a damped Newton iteration
with a floored diagonal converges from any starting point in practice; a
robust L-scheme (fixed linearization weight) serves as fallback when a Newton
step stalls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NonConvergence, SingularSystem, TauTooLarge
from .grid import check_finite, diffusion_op


@dataclass
class EllipticConfig:
    tol_newton: float = 1e-10  # L-infinity tolerance on the algebraic residual
    max_iter: int = 60
    damping: float = 0.5  # line-search shrink factor
    fallback: bool = True  # enable the damped L-scheme fallback
    fd_delta: float = 1e-7  # forward-difference increment for the reaction Jacobian
    max_halvings: int = 30
    dump: Optional[Callable] = None  # hook receiving (iteration, u) for debugging

    def __post_init__(self):
        if self.tol_newton <= 0 or self.max_iter < 1 or not 0 < self.damping < 1:
            raise ValueError("invalid elliptic solver configuration")


def _semilinear_residual(beta, stiff_tau, bval, m_prev, tau, reaction, u, m=None):
    if m is None:
        m = beta(u)
    return m - m_prev + stiff_tau.apply(u, bval) - tau * reaction(m), m


def solve_semilinear(
    beta,
    beta_prime_of_m,
    stiff,
    bval,
    m_prev,
    tau,
    reaction,
    reaction_C_L,
    diag_floor,
    cfg,
    u0,
):
    """Damped-Newton solve of beta(u) - m_prev + tau*(L u - b) - tau*f(beta(u)) = 0.

    ``beta`` and ``beta_prime_of_m`` are vectorized; ``stiff`` is the unscaled
    diffusion/advection operator (with its Dirichlet load); ``reaction`` maps a
    density field to the rate field.  Returns (u, info).
    """
    stiff_tau = stiff.scaled(tau)
    u = np.array(u0, dtype=float)
    fd = cfg.fd_delta
    inner_tol = 1e-2 * cfg.tol_newton
    residuals = []
    strategy = "newton"
    iterations = 0

    res, m = _semilinear_residual(beta, stiff_tau, bval, m_prev, tau, reaction, u)
    for it in range(cfg.max_iter):
        iterations = it
        rnorm = float(np.max(np.abs(res)))
        residuals.append(rnorm)
        if cfg.dump is not None:
            cfg.dump(it, u)
        if rnorm <= cfg.tol_newton:
            return u, {"iterations": it, "residuals": residuals, "strategy": strategy}

        f = reaction(m)
        dfdm = (reaction(m + fd) - f) / fd
        bp = beta_prime_of_m(m)
        dvec = bp * (1.0 - tau * dfdm)
        # monotonicity guard from the tau < 1/C_L regime
        dvec = np.maximum(dvec, diag_floor)

        if strategy == "newton":
            du = stiff_tau.solve_shifted(dvec.ravel(), -res.ravel(), inner_tol).reshape(u.shape)
            r1_old = float(np.sum(np.abs(res)))
            alpha = 1.0
            accepted = False
            for _ in range(cfg.max_halvings + 1):
                u_try = u + alpha * du
                res_try, m_try = _semilinear_residual(
                    beta, stiff_tau, bval, m_prev, tau, reaction, u_try
                )
                if float(np.sum(np.abs(res_try))) < r1_old:
                    u, res, m = u_try, res_try, m_try
                    accepted = True
                    break
                alpha *= cfg.damping
            if accepted:
                continue
            if not cfg.fallback:
                raise NonConvergence(
                    "Newton stalled and fallback disabled", residual=rnorm, iterations=it
                )
            strategy = "picard"

        # damped L-scheme: fixed weight dominating beta' keeps the map contractive
        lam = float(np.max(bp)) * (1.0 + tau * reaction_C_L) + 1e-30
        du = stiff_tau.solve_shifted(
            np.full(u.size, lam), -res.ravel(), inner_tol
        ).reshape(u.shape)
        r1_old = float(np.sum(np.abs(res)))
        alpha = 1.0
        for _ in range(cfg.max_halvings + 1):
            u_try = u + alpha * du
            res_try, m_try = _semilinear_residual(
                beta, stiff_tau, bval, m_prev, tau, reaction, u_try
            )
            if float(np.sum(np.abs(res_try))) < r1_old:
                u, res, m = u_try, res_try, m_try
                break
            alpha *= cfg.damping
        else:
            raise NonConvergence(
                "L-scheme failed to reduce the residual", residual=rnorm, iterations=it
            )

    rnorm = float(np.max(np.abs(res)))
    residuals.append(rnorm)
    if rnorm <= cfg.tol_newton:
        return u, {"iterations": cfg.max_iter, "residuals": residuals, "strategy": strategy}
    raise NonConvergence(
        f"semilinear solve exhausted {cfg.max_iter} iterations (residual {rnorm:.3e})",
        residual=rnorm,
        iterations=cfg.max_iter,
    )


def solve_time_step(reg, grid, m_prev, s_snapshot, tau, kin, cfg=None, h0=None, op=None, u0=None):
    """One backward-Euler step of the biomass equation in the Kirchhoff variable.

    Parameters
    ----------
    reg : RegularizedTransform
    grid : StructuredGrid
    m_prev : ndarray
        Density at the previous step (beta of the previous Kirchhoff field).
    s_snapshot : sequence of ndarray
        Substrate fields at the new time level.
    tau : float
        Step size; must satisfy tau < 1/C_L.
    kin : Kinetics
    h0 : float, optional
        Dirichlet biomass value on gamma1 (ignored for all-Neumann grids).
    op : StencilOp, optional
        Pre-assembled diffusion operator (cached by the time stepper).
    u0 : ndarray, optional
        Warm start for the Kirchhoff field.

    Returns
    -------
    (u, info) : the Kirchhoff field solving the step and solver diagnostics.
    """
    if cfg is None:
        cfg = EllipticConfig()
    if kin.C_L > 0 and tau >= 1.0 / kin.C_L:
        raise TauTooLarge(f"tau = {tau} >= 1/C_L = {1.0 / kin.C_L}")
    if op is None:
        op = diffusion_op(grid)
    bval = reg.phi(h0) if (grid.gamma1 and h0 is not None) else 0.0
    reaction = lambda m: kin.eval_f0(m, s_snapshot)
    diag_floor = reg.eps * (1.0 - tau * kin.C_L)
    if u0 is None:
        u0 = reg.phi(m_prev)
    u, info = solve_semilinear(
        reg.beta,
        reg.beta_prime_of_m,
        op,
        bval,
        m_prev,
        tau,
        reaction,
        kin.C_L,
        diag_floor,
        cfg,
        u0,
    )
    check_finite(u)
    return u, info


def time_step_residual(reg, grid, m_prev, s_snapshot, tau, kin, u, h0=None, op=None):
    """Independent re-evaluation of the algebraic residual of a computed step."""
    if op is None:
        op = diffusion_op(grid)
    bval = reg.phi(h0) if (grid.gamma1 and h0 is not None) else 0.0
    m = reg.beta(u)
    res = m - m_prev + tau * op.apply(u, bval) - tau * kin.eval_f0(m, s_snapshot)
    return float(np.max(np.abs(res)))


def solve_poisson_barrier(grid, c_hat, dirichlet_sides=None):
    """Solve (grad u, grad phi) = (c_hat, phi) with zero trace on the Dirichlet part."""
    if dirichlet_sides is None:
        dirichlet_sides = grid.gamma1
    if not dirichlet_sides:
        raise SingularSystem("Poisson barrier needs a nonempty Dirichlet boundary")
    op = diffusion_op(grid, dirichlet_sides=dirichlet_sides)
    rhs = np.full(grid.size, float(c_hat))
    u = op.solve_shifted(np.zeros(grid.size), rhs, inner_tol=1e-14)
    return u.reshape(grid.shape)
