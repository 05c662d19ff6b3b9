"""Rothe time loop for the biomass equation given a substrate trajectory.

Backward Euler in the Kirchhoff variable: one monotone elliptic solve per
step, piecewise-constant (hat) and density-linear (bar) interpolants between
step times, a regularization-continuation driver, and the blow-up sentinel
that truncates trajectories once the density reaches 1 - ETA_STOP.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .elliptic import EllipticConfig, solve_time_step
from .errors import NonCauchyWarning, RangeError, TauTooLarge
from .grid import check_finite, diffusion_op, gradient_energy, integrate
from .model import ETA_STOP, RegularizedTransform


@dataclass(frozen=True)
class TimeGrid:
    """Uniform step partition of [0, T] with tau = T/N."""

    T: float
    N: int

    def __post_init__(self):
        if self.T <= 0 or self.N < 1:
            raise ValueError("TimeGrid needs T > 0 and N >= 1")

    @property
    def tau(self):
        return self.T / self.N

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.N + 1)

    def validate_against(self, kin):
        if kin.C_L > 0 and self.tau >= 1.0 / kin.C_L:
            raise TauTooLarge(
                f"tau = {self.tau:.6g} >= 1/C_L = {1.0 / kin.C_L:.6g}; refine the time grid"
            )


@dataclass(frozen=True)
class EpsSchedule:
    """Strictly decreasing sequence of regularization parameters."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals or any(v <= 0 for v in vals) or any(np.diff(vals) >= 0):
            raise ValueError("EpsSchedule must be strictly decreasing and positive")
        object.__setattr__(self, "values", vals)

    @classmethod
    def geometric(cls, start, ratio, num):
        return cls(tuple(start * ratio**i for i in range(num)))

    @property
    def finest(self):
        return self.values[-1]


@dataclass
class Trajectory:
    """Time-indexed biomass fields with both Rothe interpolants.

    Stored fields satisfy M_n <= 1 - ETA_STOP except possibly the final one,
    which carries the blow-up flag when the sentinel fired; the trajectory is
    truncated there.
    """

    grid: object
    reg: RegularizedTransform
    times: np.ndarray
    us: list
    Ms: list
    h0: float | None = None
    blown_up: bool = False
    t_blowup: float | None = None
    energy_increments: list = field(default_factory=list)
    mode: str = "bar"

    @property
    def eps(self):
        return self.reg.eps

    @property
    def n_steps(self):
        return len(self.times) - 1

    def mass_series(self):
        return np.array([integrate(self.grid, m, "mass") for m in self.Ms])

    def eval_interpolant(self, t, mode=None):
        """Value of the hat or bar interpolant of the Kirchhoff field at time t."""
        mode = mode or self.mode
        times = self.times
        if t < times[0] - 1e-14 or t > times[-1] + 1e-14:
            raise RangeError(f"t = {t} outside the stored span [{times[0]}, {times[-1]}]")
        t = min(max(t, times[0]), times[-1])
        n = int(np.searchsorted(times, t - 1e-14 * (1 + abs(t)), side="left"))
        n = min(max(n, 0), len(times) - 1)
        if mode == "hat":
            return self.us[n]
        if mode == "bar":
            if n == 0:
                return self.us[0]
            t0, t1 = times[n - 1], times[n]
            w = (t - t0) / (t1 - t0)
            m = (1.0 - w) * self.Ms[n - 1] + w * self.Ms[n]
            return self.reg.phi(m)
        raise ValueError(f"unknown interpolation mode {mode!r}")

    def energy_total(self):
        return float(np.sum(self.energy_increments))


def _substrate_sampler(s_traj):
    if s_traj is None:
        return lambda t: ()
    if callable(s_traj):
        return s_traj
    if hasattr(s_traj, "at"):
        return s_traj.at
    raise TypeError("substrate trajectory must be None, callable, or expose .at(t)")


def run_M_given_S(spec, s_traj, eps, tg, cfg=None, warm=None, op=None):
    """Advance the biomass equation over [0, T] with substrates prescribed.

    Parameters
    ----------
    spec : ProblemSpec
    s_traj : None, callable t -> sequence of fields, or object with .at(t)
    eps : float or RegularizedTransform
    tg : TimeGrid
    warm : Trajectory, optional
        Previous regularization level; its densities remapped through the new
        transform seed each Newton solve.
    op : StencilOp, optional
        Cached diffusion operator.

    Returns a (possibly truncated) Trajectory; blow-up is a flagged result,
    not an error.
    """
    if cfg is None:
        cfg = EllipticConfig()
    tg.validate_against(spec.kinetics)
    reg = eps if isinstance(eps, RegularizedTransform) else RegularizedTransform(spec.law, eps)
    grid = spec.grid
    if op is None:
        op = diffusion_op(grid)
    sample = _substrate_sampler(s_traj)
    times = tg.times
    bval = reg.phi(spec.h0) if (grid.gamma1 and spec.h0 is not None) else 0.0

    M = np.asarray(spec.M0, dtype=float).copy()
    u = reg.phi(M)
    us, Ms, energies = [u], [M], []
    blown_up, t_blowup = False, None
    stored_times = [times[0]]
    for n in range(1, len(times)):
        t = times[n]
        svec = sample(t)
        if warm is not None and n < len(warm.Ms):
            u_guess = reg.phi(warm.Ms[n])
        else:
            u_guess = u
        u, _ = solve_time_step(
            reg, grid, M, svec, tg.tau, spec.kinetics, cfg, h0=spec.h0, op=op, u0=u_guess
        )
        M = reg.beta(u)
        check_finite(M)
        us.append(u)
        Ms.append(M)
        stored_times.append(t)
        energies.append(tg.tau * gradient_energy(grid, u, bval))
        if float(np.max(M)) >= 1.0 - ETA_STOP:
            blown_up, t_blowup = True, t
            break
    return Trajectory(
        grid=grid,
        reg=reg,
        times=np.asarray(stored_times),
        us=us,
        Ms=Ms,
        h0=spec.h0,
        blown_up=blown_up,
        t_blowup=t_blowup,
        energy_increments=energies,
    )


def eval_interpolant(traj, t, mode="bar"):
    return traj.eval_interpolant(t, mode)


def trajectory_distance_l1(traj_a, traj_b, tau):
    """L1(Q) distance between two trajectories over their common steps."""
    n = min(len(traj_a.Ms), len(traj_b.Ms))
    total = 0.0
    for i in range(1, n):
        total += tau * integrate(traj_a.grid, traj_a.Ms[i] - traj_b.Ms[i], "L1")
    return total


def run_eps_continuation(spec, s_traj, sched, tg, cfg=None, op=None):
    """Run the M-equation across the regularization schedule, warm-starting.

    Returns (finest trajectory, distances d_k between consecutive levels).
    Warns with NonCauchyWarning when the distances fail to decrease twice in
    a row.
    """
    prev = None
    distances = []
    for eps in sched.values:
        traj = run_M_given_S(spec, s_traj, eps, tg, cfg=cfg, warm=prev, op=op)
        if prev is not None:
            distances.append(trajectory_distance_l1(traj, prev, tg.tau))
        prev = traj
    bad = sum(1 for a, b in zip(distances, distances[1:]) if b >= a and a > 0)
    if len(distances) >= 3 and bad >= 2:
        warnings.warn(
            f"continuation distances not Cauchy: {distances}", NonCauchyWarning
        )
    return prev, distances
