"""Full-system driver: substrate advances and the M/S fixed-point coupling.

The horizon is partitioned into windows sized by the growth function

    E(t) = k * C_L * t * (1 + C_L * t * exp(C_L * t)),

whose sub-unity range makes the substrate-to-substrate composition a strict
contraction.  On each window the solver alternates (i) the biomass Rothe run
with the current substrate iterate and (ii) implicit substrate advances with
the fresh biomass, until the L1(Q) distance between successive substrate
iterates drops below tolerance; windows are then concatenated.  In picard
mode (general D_j(M, S)) there is no contraction guarantee; sweeps are capped
and a stall is reported rather than claimed convergent.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .elliptic import EllipticConfig, solve_semilinear, solve_time_step
from .errors import DomainError, FixedPointStall, NonConvergence
from .grid import advection_op, check_finite, diffusion_op, face_velocities, gradient_energy, integrate
from .model import (
    ConstantD,
    ETA_STOP,
    MixedD,
    RegularizedTransform,
    SubstrateD,
)
from .stepper import Trajectory, run_M_given_S, trajectory_distance_l1


@dataclass(frozen=True)
class CouplingConfig:
    theta_c: float = 0.25  # target contraction factor for window sizing
    tol_fp: float = 1e-10  # fixed-point L1(Q) tolerance
    max_sweeps: int = 60
    mode: str = "auto"  # banach | picard | auto
    eps_substrate: float = 1e-6  # regularization for Kirchhoff-transformed substrates

    def __post_init__(self):
        if not 0.0 < self.theta_c < 1.0:
            raise DomainError("theta_c must lie in (0, 1)")
        if self.mode not in ("auto", "banach", "picard"):
            raise DomainError(f"unknown coupling mode {self.mode!r}")


def growth_function(t, C_L, k):
    return k * C_L * t * (1.0 + C_L * t * math.exp(C_L * t))


def contraction_window(C_L, k, theta_c):
    """Largest t with E(t) <= theta_c; infinite when the coupling is inert."""
    if C_L <= 0 or k == 0:
        return math.inf
    hi = 1.0 / (k * C_L)
    while growth_function(hi, C_L, k) <= theta_c:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if growth_function(mid, C_L, k) <= theta_c:
            lo = mid
        else:
            hi = mid
    return lo


def banach_eligible(spec):
    """Contraction route applies when every D_j ignores M (or the substrate is immobile)."""
    return all(
        sub.nu == 0 or isinstance(sub.D, (ConstantD, SubstrateD)) for sub in spec.substrates
    )


def resolve_mode(spec, cc):
    if cc.mode != "auto":
        return cc.mode
    return "banach" if banach_eligible(spec) else "picard"


@dataclass
class SubstrateHistory:
    """Substrate fields stored at the step times, with exact node lookup."""

    times: np.ndarray
    fields: list

    def at(self, t):
        idx = int(np.searchsorted(self.times, t - 1e-12 * (1 + abs(t))))
        idx = min(idx, len(self.fields) - 1)
        return self.fields[idx]


@dataclass
class FixedPointRecord:
    window: int
    sweep: int
    l1_distance: float
    wall_time: float


@dataclass
class CoupledResult:
    M: Trajectory
    S: list
    fp_log: list
    eps_distances: list = field(default_factory=list)

    @property
    def blown_up(self):
        return self.M.blown_up

    @property
    def t_blowup(self):
        return self.M.t_blowup


# ---------------------------------------------------------------------------
# Single-substrate advances
# ---------------------------------------------------------------------------


def step_substrate_ode(sub, kin, j, s_prev, m_snapshot, s_others, tau, tol=1e-13, max_iter=60):
    """Per-cell implicit step s = s_prev + tau * f_j(m, s with own component implicit).

    Vectorized scalar Newton; the derivative 1 - tau * df/ds stays positive
    for tau < 1/C_L, so the iteration is safe without bracketing.
    """
    if sub.nu != 0:
        raise DomainError("ODE substrate step requires nu = 0")
    s = np.asarray(s_prev, dtype=float).copy()
    fd = 1e-8

    def resid(sval):
        svec = [sval if i == j else s_others[i] for i in range(len(s_others))]
        return sval - s_prev - tau * kin.eval_fj(j, m_snapshot, svec)

    for _ in range(max_iter):
        r = resid(s)
        if float(np.max(np.abs(r))) <= tol * (1.0 + float(np.max(np.abs(s)))):
            return s
        d = (resid(s + fd) - r) / fd
        d = np.where(np.abs(d) < 1e-12, 1.0, d)
        s = s - r / d
    r = resid(s)
    worst = int(np.argmax(np.abs(r)))
    raise NonConvergence(
        f"substrate ODE step failed to converge at cell {worst}",
        residual=float(np.max(np.abs(r))),
    )


class _IdentityTransform:
    """beta = id; reduces the semilinear core to a linear-diffusion solve."""

    @staticmethod
    def beta(u):
        return u

    @staticmethod
    def beta_prime_of_m(m):
        return np.ones_like(np.asarray(m, dtype=float))


def step_substrate_pde(
    grid,
    sub,
    kin,
    j,
    s_prev,
    m_snapshot,
    s_others,
    tau,
    mode="picard",
    ecfg=None,
    eps_substrate=1e-6,
    reg_cache=None,
    op_cache=None,
):
    """Implicit backward-Euler step of one mobile substrate.

    The diffusive flux is either frozen at the supplied (m_snapshot, s_others)
    snapshot (picard mode / constant and mixed laws) or Kirchhoff-transformed
    through the substrate law (monotone D_j(S_j) without flow, which covers
    the degenerate-substrate route).  Advection is first-order upwind and the
    whole boundary carries the Dirichlet value h_j.
    """
    if sub.nu <= 0:
        raise DomainError("PDE substrate step requires nu > 0")
    if ecfg is None:
        ecfg = EllipticConfig(tol_newton=1e-11)
    all_sides = frozenset(grid.sides)
    s_prev = np.asarray(s_prev, dtype=float)

    def reaction(sval):
        svec = [sval if i == j else s_others[i] for i in range(len(s_others))]
        return kin.eval_fj(j, m_snapshot, svec)

    has_flow = sub.v is not None and np.any(np.asarray(sub.v, dtype=float) != 0)
    kirchhoff_route = isinstance(sub.D, SubstrateD) and not has_flow

    if kirchhoff_route:
        key = ("reg", j)
        if reg_cache is not None and key in reg_cache:
            reg_j = reg_cache[key]
        else:
            reg_j = RegularizedTransform(sub.D.law, eps_substrate)
            if reg_cache is not None:
                reg_cache[key] = reg_j
        okey = ("op-unit", j)
        if op_cache is not None and okey in op_cache:
            op = op_cache[okey]
        else:
            op = diffusion_op(grid, dirichlet_sides=all_sides).scaled(sub.nu)
            if op_cache is not None:
                op_cache[okey] = op
        bval = reg_j.phi(sub.h)
        floor = reg_j.eps * max(1.0 - tau * kin.C_L, 1e-12)
        u0 = reg_j.phi(s_prev)
        u, _ = solve_semilinear(
            reg_j.beta, reg_j.beta_prime_of_m, op, bval, s_prev, tau,
            reaction, kin.C_L, floor, ecfg, u0,
        )
        return reg_j.beta(u)

    # frozen-coefficient route
    if isinstance(sub.D, ConstantD):
        coeff = sub.D.value
    elif isinstance(sub.D, MixedD):
        coeff = np.asarray(sub.D.func(np.clip(m_snapshot, 0.0, 1.0), s_others), dtype=float)
    elif isinstance(sub.D, SubstrateD):
        # monotone D(S) with flow: freeze at the previous substrate values
        coeff = np.clip(sub.D.law.D_ext(s_prev), 1e-14, None)
    else:
        raise DomainError(f"substrate {j}: unsupported diffusion spec {sub.D!r}")
    op = diffusion_op(grid, dirichlet_sides=all_sides, coeff=coeff).scaled(sub.nu)
    if has_flow:
        # the flux term nu*div(v s) transports along -nu*v
        vf = face_velocities(grid, sub.v)
        op = op + advection_op(grid, [-sub.nu * w for w in vf])
    floor = 1e-12
    u, _ = solve_semilinear(
        _IdentityTransform.beta,
        _IdentityTransform.beta_prime_of_m,
        op, sub.h, s_prev, tau, reaction, kin.C_L,
        max(1.0 - tau * kin.C_L, floor), ecfg, s_prev,
    )
    return u


# ---------------------------------------------------------------------------
# Coupled driver
# ---------------------------------------------------------------------------


def _advance_substrates(spec, grid, tau, m_window, s_start, n_steps, mode, ecfg, cc, caches):
    """Advance all substrates over a window given the biomass fields.

    Gauss-Seidel in substrate index within each step: fresh values feed
    forward.  Returns per-step lists of substrate fields (index 0 = first new
    time level).
    """
    reg_cache, op_cache = caches
    current = [np.asarray(s, dtype=float).copy() for s in s_start]
    out = []
    for n in range(n_steps):
        m_snap = m_window[n]
        new = list(current)
        for j, sub in enumerate(spec.substrates):
            if sub.nu == 0:
                new[j] = step_substrate_ode(sub, spec.kinetics, j, current[j], m_snap, new, tau)
            else:
                new[j] = step_substrate_pde(
                    grid, sub, spec.kinetics, j, current[j], m_snap, new, tau,
                    mode=mode, ecfg=ecfg, eps_substrate=cc.eps_substrate,
                    reg_cache=reg_cache, op_cache=op_cache,
                )
            check_finite(new[j])
        out.append([s.copy() for s in new])
        current = new
    return out


def _window_m_run(spec, reg, grid, op, tau, t0, M_start, s_steps, n_steps, ecfg, u_start):
    """Rothe run across one window; returns fields and the truncation point."""
    M = M_start.copy()
    u = u_start
    us, Ms, energies = [], [], []
    bval = reg.phi(spec.h0) if (grid.gamma1 and spec.h0 is not None) else 0.0
    blown = False
    for n in range(n_steps):
        svec = s_steps[n] if s_steps else ()
        u, _ = solve_time_step(
            reg, grid, M, svec, tau, spec.kinetics, ecfg, h0=spec.h0, op=op, u0=u
        )
        M = reg.beta(u)
        check_finite(M)
        us.append(u)
        Ms.append(M)
        energies.append(tau * gradient_energy(grid, u, bval))
        if float(np.max(M)) >= 1.0 - ETA_STOP:
            blown = True
            break
    return us, Ms, energies, blown


def run_coupled(spec, tg, eps, cc=None, ecfg=None):
    """Solve the coupled system over [0, T].

    ``eps`` is a single regularization parameter or an EpsSchedule; with a
    schedule the coupled solve is repeated per level (warm-starting the
    substrate iterates) and the L1(Q) distances between consecutive biomass
    trajectories are recorded.

    Returns a CoupledResult; a blow-up truncates the trajectories and sets
    the flag rather than raising.
    """
    if cc is None:
        cc = CouplingConfig()
    if ecfg is None:
        ecfg = EllipticConfig()
    values = eps.values if hasattr(eps, "values") else (float(eps),)
    prev_result = None
    distances = []
    for eps_k in values:
        result = _run_coupled_single(spec, tg, eps_k, cc, ecfg, warm=prev_result)
        if prev_result is not None:
            distances.append(trajectory_distance_l1(result.M, prev_result.M, tg.tau))
        prev_result = result
    prev_result.eps_distances = distances
    return prev_result


def _run_coupled_single(spec, tg, eps, cc, ecfg, warm=None):
    tg.validate_against(spec.kinetics)
    grid = spec.grid
    reg = RegularizedTransform(spec.law, eps)
    op = diffusion_op(grid)
    tau = tg.tau
    times = tg.times
    k = spec.k
    mode = resolve_mode(spec, cc)

    if k == 0:
        traj = run_M_given_S(spec, None, reg, tg, cfg=ecfg, op=op,
                             warm=warm.M if warm is not None else None)
        return CoupledResult(M=traj, S=[], fp_log=[])

    window_len = contraction_window(spec.kinetics.C_L, k, cc.theta_c)
    steps_per_window = max(1, int(math.floor(window_len / tau))) if math.isfinite(window_len) else tg.N

    M_cur = np.asarray(spec.M0, dtype=float).copy()
    u_cur = reg.phi(M_cur)
    S_cur = [spec.substrate_initial(j) for j in range(k)]

    all_times = [times[0]]
    all_us, all_Ms = [u_cur], [M_cur]
    all_energy = []
    S_hist = [[S_cur[j].copy()] for j in range(k)]
    fp_log = []
    blown_up = False
    t_blowup = None

    n0 = 0
    window = 0
    caches = ({}, {})  # substrate transforms and operators persist across sweeps
    t_start = time.perf_counter()
    while n0 < tg.N and not blown_up:
        n1 = min(n0 + steps_per_window, tg.N)
        n_steps = n1 - n0
        # initial substrate iterate: warm start from the previous eps level,
        # else constant extension of the window-start values
        if warm is not None and len(warm.S) == k:
            s_iter = []
            for n in range(n_steps):
                idx = n0 + 1 + n
                frame = [
                    warm.S[j].fields[idx] if idx < len(warm.S[j].fields) else warm.S[j].fields[-1]
                    for j in range(k)
                ]
                s_iter.append(frame)
        else:
            s_iter = [[S_cur[j].copy() for j in range(k)] for _ in range(n_steps)]

        converged = False
        us_w = Ms_w = en_w = None
        window_blown = False
        for sweep in range(1, cc.max_sweeps + 1):
            us_w, Ms_w, en_w, window_blown = _window_m_run(
                spec, reg, grid, op, tau, times[n0], M_cur, s_iter, n_steps, ecfg, u_cur
            )
            n_eff = len(Ms_w)
            s_next = _advance_substrates(
                spec, grid, tau, Ms_w, S_cur, n_eff, mode, ecfg, cc, caches
            )
            dist = 0.0
            for n in range(n_eff):
                for j in range(k):
                    dist += tau * integrate(grid, s_next[n][j] - s_iter[n][j], "L1")
            fp_log.append(FixedPointRecord(window, sweep, dist, time.perf_counter() - t_start))
            s_iter = s_iter[:n_eff]
            for n in range(n_eff):
                s_iter[n] = s_next[n]
            if dist <= cc.tol_fp:
                converged = True
                break
        if not converged:
            raise FixedPointStall(
                f"window {window}: fixed point above tolerance after {cc.max_sweeps} sweeps",
                window=window,
                sweep=cc.max_sweeps,
                distance=fp_log[-1].l1_distance,
            )

        n_eff = len(Ms_w)
        for n in range(n_eff):
            all_times.append(times[n0 + 1 + n])
            all_us.append(us_w[n])
            all_Ms.append(Ms_w[n])
            all_energy.append(en_w[n])
            for j in range(k):
                S_hist[j].append(s_iter[n][j])
        M_cur = Ms_w[-1]
        u_cur = us_w[-1]
        S_cur = [s_iter[-1][j] for j in range(k)]
        if window_blown:
            blown_up = True
            t_blowup = all_times[-1]
            break
        n0 = n1
        window += 1

    traj = Trajectory(
        grid=grid,
        reg=reg,
        times=np.asarray(all_times),
        us=all_us,
        Ms=all_Ms,
        h0=spec.h0,
        blown_up=blown_up,
        t_blowup=t_blowup,
        energy_increments=all_energy,
    )
    S_out = [SubstrateHistory(np.asarray(all_times), S_hist[j]) for j in range(k)]
    return CoupledResult(M=traj, S=S_out, fp_log=fp_log)
