"""Built-in verification suites run by the CLI and the acceptance tests.

Each suite exercises one family of structural properties (maximum principle,
L1 contraction, comparison sandwich, conservation, regularity) on seeded
scenarios and reports one pass/fail row per check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import bounds_report, hat_M
from .coupling import CouplingConfig, run_coupled
from .elliptic import EllipticConfig, solve_poisson_barrier
from .grid import StructuredGrid, integrate
from .model import (
    KirchhoffTransform,
    PowerLaw,
    PowerLawSingular,
    ProblemSpec,
    SubstrateSpec,
    ConstantD,
    preset_eberl2001,
    preset_cellulolytic2017,
    preset_pme,
)
from .regularity import psi_eps, theoretical_exponent, weighted_gradient_functional
from .stepper import TimeGrid, run_M_given_S


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def tol_mp(C_L, tau):
    """Discrete maximum-principle slack: 1e-8 + 2 C_L tau."""
    return 1e-8 + 2.0 * C_L * tau


def random_scenario(seed, T=0.2):
    """Seeded mixed-BC Monod scenario for the randomized suites."""
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 3))
    if dim == 1:
        grid_n = int(rng.integers(12, 33))
        n = (grid_n,)
    else:
        n = (int(rng.integers(8, 13)), int(rng.integers(8, 13)))
    sides = ("left", "right") if dim == 1 else ("left", "right", "bottom", "top")
    gamma1 = frozenset(s for s in sides if rng.random() < 0.4)
    grid = StructuredGrid(n, ((0.0, 1.0),) * dim, gamma1)

    preset = preset_eberl2001(
        k1=float(rng.uniform(0.2, 1.0)),
        k2=float(rng.uniform(0.05, 0.3)),
        k3=float(rng.uniform(0.5, 1.5)),
        k4=float(rng.uniform(0.4, 1.0)),
        d1=float(rng.uniform(0.2, 1.0)),
        d2=float(rng.uniform(1e-3, 1e-1)),
        a=float(rng.uniform(1.0, 4.0)),
        b=float(rng.uniform(1.0, 4.0)),
    )
    M0 = rng.uniform(0.05, 0.55, size=grid.shape)
    s_lo, s_hi = 0.4, 1.0
    S0 = rng.uniform(s_lo, s_hi, size=grid.shape)
    nu = float(rng.choice([0.0, rng.uniform(0.1, 0.6)]))
    v = None
    if nu > 0 and rng.random() < 0.5:
        v = tuple(float(rng.uniform(-0.3, 0.3)) for _ in range(dim))
    sub = SubstrateSpec(
        nu=nu,
        D=ConstantD(float(rng.uniform(0.2, 1.0))),
        v=v,
        h=float(0.5 * (S0.min() + S0.max())),
        S0=S0,
    )
    spec = ProblemSpec(
        grid=grid, M0=M0, kinetics=preset.kinetics, law=preset.law, T=T,
        substrates=(sub,), h0=float(np.max(M0)),
    )
    C_L = preset.kinetics.C_L
    tau = min(5e-3, 0.4 / C_L)
    tg = TimeGrid(T, max(8, int(np.ceil(T / tau))))
    return spec, tg


def suite_max_principle(n_scenarios=10, seed0=1000, eps=1e-4):
    """Envelope bounds on randomized scenarios plus the Dirichlet barrier checks."""
    checks = []
    worst_min, worst_gap = 0.0, -np.inf
    cc = CouplingConfig(tol_fp=1e-9, theta_c=0.25)
    ecfg = EllipticConfig(tol_newton=1e-11)
    for i in range(n_scenarios):
        spec, tg = random_scenario(seed0 + i)
        res = run_coupled(spec, tg, eps, cc, ecfg)
        env = hat_M(spec.M_bounds[1], spec.kinetics.eval_f_max, spec.T)
        slack = tol_mp(spec.kinetics.C_L, tg.tau)
        for nn, t in enumerate(res.M.times):
            m = res.M.Ms[nn]
            worst_min = min(worst_min, float(np.min(m)))
            worst_gap = max(worst_gap, float(np.max(m)) - (float(env(t)) + slack))
    checks.append(
        CheckResult(
            "max-principle/lower",
            worst_min >= -1e-10,
            f"min over suite = {worst_min:.3e} (allowed >= -1e-10)",
        )
    )
    checks.append(
        CheckResult(
            "max-principle/upper",
            worst_gap <= 0.0,
            f"worst max-M excess over hatM+tol = {worst_gap:.3e}",
        )
    )

    # Dirichlet barrier: full-boundary scenario stays below 1 - delta
    spec, tg = _barrier_scenario()
    res = run_coupled(spec, tg, 1e-5, cc, ecfg)
    kt = KirchhoffTransform(spec.law)
    rep = bounds_report(spec, transform=kt)
    peak = max(float(np.max(m)) for m in res.M.Ms)
    slack = tol_mp(spec.kinetics.C_L, tg.tau)
    ok = rep.delta is not None and peak <= 1.0 - rep.delta + slack
    checks.append(
        CheckResult(
            "max-principle/dirichlet-barrier",
            ok,
            f"peak M = {peak:.6f} vs 1-delta = {1.0 - rep.delta:.6f}",
        )
    )

    # closed-form barrier: max u = C/8 on the unit interval, Dirichlet ends
    g = StructuredGrid(256, (0.0, 1.0), gamma1=("left", "right"))
    u = solve_poisson_barrier(g, 1.0)
    rel = abs(float(np.max(u)) - 0.125) / 0.125
    checks.append(
        CheckResult(
            "max-principle/poisson-closed-form",
            rel <= 0.01,
            f"max u = {np.max(u):.6f}, C/8 = 0.125, rel err = {rel:.2%}",
        )
    )
    return checks


def _barrier_scenario():
    # d2 = 0.5 keeps the Kirchhoff transform strong enough that the barrier
    # certifies a margin well below 1 (delta ~ 0.3)
    preset = preset_eberl2001(k3=0.6, k2=0.1, k4=0.5, d2=0.5, a=2.0, b=2.0)
    grid = StructuredGrid(24, (0.0, 1.0), gamma1=("left", "right"))
    rng = np.random.default_rng(7)
    M0 = rng.uniform(0.1, 0.3, size=grid.shape)
    S0 = rng.uniform(0.6, 0.9, size=grid.shape)
    sub = SubstrateSpec(nu=0.4, D=ConstantD(0.5), h=0.75, S0=S0)
    spec = ProblemSpec(
        grid=grid, M0=M0, kinetics=preset.kinetics, law=preset.law, T=0.4,
        substrates=(sub,), h0=float(np.max(M0)),
    )
    tau = min(2e-3, 0.4 / preset.kinetics.C_L)
    return spec, TimeGrid(0.4, int(np.ceil(0.4 / tau)))


def contraction_experiment(n=64, tau=1e-3, T=0.5, eps=1e-4, bump_height=0.3):
    """Two prescribed substrate trajectories differing by a bump.

    Returns (lhs, rhs) of the discrete L1-contraction estimate at the final
    time: ||M1 - M2||_L1(T) vs C_L e^(C_L T) * integral ||s1 - s2||_L1.
    """
    preset = preset_cellulolytic2017(lam=0.0)
    grid = StructuredGrid(n, (0.0, 1.0))
    M0 = 0.3 + 0.1 * np.sin(2 * np.pi * grid.centers(0))
    spec = ProblemSpec(
        grid=grid, M0=M0, kinetics=preset.kinetics, law=preset.law, T=T,
        substrates=(SubstrateSpec(nu=0.0, S0=1.0),),
    )
    x = grid.centers(0)
    bump = bump_height * np.clip(1.0 - ((x - 0.5) / 0.25) ** 2, 0.0, None) ** 2
    s_base = np.full(grid.shape, 1.0)
    tg = TimeGrid(T, int(round(T / tau)))
    traj1 = run_M_given_S(spec, lambda t: (s_base,), eps, tg,
                          cfg=EllipticConfig(tol_newton=1e-12))
    traj2 = run_M_given_S(spec, lambda t: (s_base + bump,), eps, tg,
                          cfg=EllipticConfig(tol_newton=1e-12))
    C_L = preset.kinetics.C_L
    lhs = integrate(grid, traj1.Ms[-1] - traj2.Ms[-1], "L1")
    ds_l1 = integrate(grid, bump, "L1")  # constant in time
    rhs = C_L * np.exp(C_L * T) * ds_l1 * T
    return lhs, rhs


def suite_contraction(taus=(2e-3, 1e-3, 5e-4), n=64, T=0.5):
    checks = []
    margins = []
    for tau in taus:
        lhs, rhs = contraction_experiment(n=n, tau=tau, T=T)
        margins.append(max(0.0, lhs - rhs))
        if tau == taus[0]:
            checks.append(
                CheckResult(
                    "contraction/bound",
                    lhs <= rhs * 1.1,
                    f"lhs = {lhs:.4e} vs 1.1*rhs = {1.1 * rhs:.4e}",
                )
            )
    mono = all(margins[i + 1] <= margins[i] + 1e-15 for i in range(len(margins) - 1))
    checks.append(
        CheckResult(
            "contraction/margin-monotone",
            mono,
            f"violation margins over tau halvings: {['%.3e' % m for m in margins]}",
        )
    )
    return checks


def sandwich_experiment(seed=11, T=1.0, tau=1e-3, n=16, eps=1e-5,
                        m_range=(0.2, 0.4), s_range=(0.5, 1.0)):
    """Heterogeneous cellulolytic run bracketed by the comparison system."""
    preset = preset_cellulolytic2017(lam=0.0)
    grid = StructuredGrid(n, (0.0, 1.0))
    rng = np.random.default_rng(seed)
    M0 = rng.uniform(*m_range, size=grid.shape)
    S0 = rng.uniform(*s_range, size=grid.shape)
    spec = ProblemSpec(
        grid=grid, M0=M0, kinetics=preset.kinetics, law=preset.law, T=T,
        substrates=(SubstrateSpec(nu=0.0, S0=S0),),
    )
    tg = TimeGrid(T, int(round(T / tau)))
    res = run_coupled(spec, tg, eps, CouplingConfig(tol_fp=1e-10),
                      EllipticConfig(tol_newton=1e-11))
    rep = bounds_report(spec)
    slack = tol_mp(preset.kinetics.C_L, tg.tau)
    worst = -np.inf
    curve = rep.comparison_curve
    for nn, t in enumerate(res.M.times):
        cm, cs, hm, hs = curve(t)
        m = res.M.Ms[nn]
        s = res.S[0].fields[nn]
        worst = max(
            worst,
            cm - slack - float(np.min(m)),
            float(np.max(m)) - (hm + slack),
            cs - slack - float(np.min(s)),
            float(np.max(s)) - (hs + slack),
        )
    return worst, slack, res, rep


def suite_sandwich():
    worst, slack, _, _ = sandwich_experiment(T=0.6)
    return [
        CheckResult(
            "sandwich/cellwise",
            worst <= 0.0,
            f"worst envelope excess = {worst:.3e} (tol_MP = {slack:.2e})",
        )
    ]


def suite_conservation(n_steps=500):
    checks = []
    for name, preset in (("pme", preset_pme(2.0)),
                         ("singular", None)):
        if preset is None:
            law = PowerLawSingular(d2=0.5, a=2.0, b=2.0)
            kin = preset_pme(1.0).kinetics  # zero kinetics
        else:
            law, kin = preset.law, preset.kinetics
        grid = StructuredGrid(16, (0.0, 1.0))
        rng = np.random.default_rng(3)
        M0 = rng.uniform(0.1, 0.6, size=grid.shape)
        spec = ProblemSpec(grid=grid, M0=M0, kinetics=kin, law=law, T=0.5)
        tg = TimeGrid(0.5, n_steps)
        traj = run_M_given_S(spec, None, 1e-4, tg, cfg=EllipticConfig(tol_newton=1e-13))
        masses = traj.mass_series()
        drift = float(np.max(np.abs(np.diff(masses))))
        checks.append(
            CheckResult(
                f"conservation/{name}",
                drift <= 1e-12,
                f"max per-step mass drift = {drift:.3e} over {traj.n_steps} steps",
            )
        )
    return checks


def suite_regularity():
    checks = []
    cases = [(1.5, 0.0, 1.0), (4.0, 0.0, 0.5), (4.0, 0.1, 1.0)]
    ok = all(theoretical_exponent(a, lo) == r for a, lo, r in cases)
    checks.append(
        CheckResult(
            "regularity/theoretical-exponents",
            ok,
            "r(1.5, .)=1, r(4, 0)=1/2, r(4, >0)=1",
        )
    )

    # growth inequality |m Psi(m)| <= C (1 + int_1^m Psi) on a random sample
    rng = np.random.default_rng(5)
    from scipy.integrate import quad

    ratios = []
    for _ in range(120):
        alpha = float(rng.uniform(0.3, 4.0))
        eps = float(rng.choice([0.0, 1e-1, 1e-2, 1e-4]))
        m = float(rng.uniform(0.0, 3.0))
        lhs = abs(m * psi_eps(alpha, eps, m))
        integral = quad(lambda r: psi_eps(alpha, eps, r), 1.0, m)[0] if m != 1.0 else 0.0
        rhs = 1.0 + integral
        ratios.append(lhs / rhs)
    c_obs = max(ratios)
    checks.append(
        CheckResult(
            "regularity/psi-growth",
            np.isfinite(c_obs) and c_obs < 50.0,
            f"observed constant C = {c_obs:.3f} over 120 samples",
        )
    )

    # weighted functional bounded under refinement (two levels, cheap variant)
    from .oracles import BarenblattSolution

    a = 1.5
    sol = BarenblattSolution(a=a, dim=1, peak=0.6)
    vals = []
    for n, steps in ((48, 160), (96, 320)):
        L = 1.25 * sol.front_radius(0.4)
        grid = StructuredGrid(n, (-L, L))
        spec = ProblemSpec(
            grid=grid, M0=sol.cell_average_initial(grid),
            kinetics=preset_pme(a).kinetics, law=PowerLaw(a), T=0.4,
        )
        traj = run_M_given_S(spec, None, 1e-5, TimeGrid(0.4, steps))
        vals.append(weighted_gradient_functional(traj, a, a))
    growth = vals[1] / vals[0] - 1.0
    checks.append(
        CheckResult(
            "regularity/weighted-gradient-refinement",
            growth <= 0.10,
            f"functional {vals[0]:.5f} -> {vals[1]:.5f} (growth {growth:+.2%})",
        )
    )
    return checks


SUITES = {
    "max-principle": suite_max_principle,
    "contraction": suite_contraction,
    "sandwich": suite_sandwich,
    "conservation": suite_conservation,
    "regularity": suite_regularity,
}


def run_suite(name):
    if name == "all":
        results = []
        for key in SUITES:
            results.extend(SUITES[key]())
        return results
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name]()
