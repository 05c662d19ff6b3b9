import math

import numpy as np
import pytest

from degenpde.coupling import (
    CouplingConfig,
    banach_eligible,
    contraction_window,
    growth_function,
    run_coupled,
    step_substrate_ode,
    step_substrate_pde,
)
from degenpde.elliptic import EllipticConfig
from degenpde.errors import DomainError, FixedPointStall
from degenpde.grid import StructuredGrid
from degenpde.model import (
    ConstantD,
    MixedD,
    PowerLaw,
    ProblemSpec,
    SubstrateD,
    SubstrateSpec,
    preset_cellulolytic2017,
    preset_eberl2001,
    zero_kinetics,
)
from degenpde.stepper import TimeGrid


# ---------------------------------------------------------------------------
# contraction window
# ---------------------------------------------------------------------------


def test_growth_function_values():
    assert growth_function(0.0, 1.0, 1) == 0.0
    assert growth_function(0.0, 3.7, 4) == 0.0
    val = growth_function(0.5, 1.0, 1)
    assert val == pytest.approx(0.5 * (1.0 + 0.5 * math.exp(0.5)), rel=1e-14)
    assert round(val, 4) == 0.9122


def test_contraction_window_inverts_closed_form():
    theta = 0.5 * (1.0 + 0.5 * math.exp(0.5))
    assert contraction_window(1.0, 1, theta) == pytest.approx(0.5, abs=1e-9)
    # monotone: tighter target gives a shorter window, more substrates too
    assert contraction_window(1.0, 1, 0.3) < contraction_window(1.0, 1, 0.6)
    assert contraction_window(1.0, 3, 0.5) < contraction_window(1.0, 1, 0.5)
    assert math.isinf(contraction_window(0.0, 1, 0.5))
    assert math.isinf(contraction_window(1.0, 0, 0.5))


# ---------------------------------------------------------------------------
# substrate steps
# ---------------------------------------------------------------------------


def test_ode_step_zero_reaction_identity():
    kin = zero_kinetics()
    kin = type(kin)(f0=kin.f0, fj=(lambda m, s: np.zeros_like(m),), f_max=kin.f_max,
                    C_L=0.0)
    sub = SubstrateSpec(nu=0.0, S0=1.0)
    s_prev = np.array([0.3, 0.7])
    out = step_substrate_ode(sub, kin, 0, s_prev, np.zeros(2), [s_prev], 0.1)
    assert np.allclose(out, s_prev)


def test_ode_step_linear_decay_closed_form():
    from degenpde.model import Kinetics

    kin = Kinetics(f0=lambda m, s: np.zeros_like(m), fj=(lambda m, s: -s[0],), C_L=1.0)
    sub = SubstrateSpec(nu=0.0, S0=1.0)
    s_prev = np.full(5, 1.0)
    out = step_substrate_ode(sub, kin, 0, s_prev, np.zeros(5), [s_prev], 0.1)
    assert np.allclose(out, 1.0 / 1.1, atol=1e-11)


def test_ode_step_monod_inert_without_biomass():
    kin = preset_cellulolytic2017(lam=0.0).kinetics
    sub = SubstrateSpec(nu=0.0, S0=1.0)
    s_prev = np.linspace(0.5, 1.5, 4)
    out = step_substrate_ode(sub, kin, 0, s_prev, np.zeros(4), [s_prev], 0.05)
    assert np.allclose(out, s_prev, atol=1e-12)


def test_pde_step_constant_state_unchanged():
    g = StructuredGrid(8, (0, 1))
    kin = preset_eberl2001().kinetics
    sub = SubstrateSpec(nu=0.5, D=ConstantD(1.0), h=0.8, S0=0.8)
    s_prev = np.full(8, 0.8)
    out = step_substrate_pde(g, sub, kin, 0, s_prev, np.zeros(8), [s_prev], 0.01)
    assert np.allclose(out, 0.8, atol=1e-10)


def test_pde_step_two_cell_hand_solve():
    # (I + tau nu d1 L) s = s_prev with ghost-Dirichlet stencil
    g = StructuredGrid(2, (0, 2))
    kin = zero_kinetics()
    from degenpde.model import Kinetics

    kin = Kinetics(f0=kin.f0, fj=(lambda m, s: np.zeros_like(s[0]),), C_L=0.0)
    sub = SubstrateSpec(nu=1.0, D=ConstantD(1.0), h=0.0, S0=1.0)
    out = step_substrate_pde(g, sub, kin, 0, np.array([1.0, 1.0]), np.zeros(2),
                             [np.array([1.0, 1.0])], 1.0,
                             ecfg=EllipticConfig(tol_newton=1e-13))
    assert np.allclose(out, [0.5, 0.5], atol=1e-12)


def test_pde_step_positivity_with_flow(rng):
    g = StructuredGrid(24, (0, 1))
    kin = preset_eberl2001().kinetics
    sub = SubstrateSpec(nu=0.6, D=ConstantD(0.3), v=(0.8,), h=0.2, S0=1.0)
    s_prev = rng.uniform(0.0, 1.0, 24)
    m = rng.uniform(0.0, 0.8, 24)
    out = step_substrate_pde(g, sub, kin, 0, s_prev, m, [s_prev], 0.02)
    assert np.min(out) >= -1e-12


def test_pde_step_requires_mobility():
    g = StructuredGrid(4, (0, 1))
    kin = preset_eberl2001().kinetics
    sub = SubstrateSpec(nu=0.0, S0=1.0)
    with pytest.raises(DomainError):
        step_substrate_pde(g, sub, kin, 0, np.ones(4), np.zeros(4), [np.ones(4)], 0.01)


def test_degenerate_substrate_kirchhoff_route(rng):
    # degenerate-substrate mode: D(s) = s, no flow, nonnegative data stay nonnegative
    g = StructuredGrid(24, (0, 1))
    kin = preset_eberl2001(k3=0.5).kinetics
    sub = SubstrateSpec(nu=0.5, D=SubstrateD(PowerLaw(a=1.0)), h=0.4, S0=1.0)
    s_prev = np.concatenate([np.zeros(8), rng.uniform(0.2, 1.0, 16)])
    m = rng.uniform(0.0, 0.5, 24)
    out = step_substrate_pde(g, sub, kin, 0, s_prev, m, [s_prev], 0.02)
    assert np.min(out) >= -1e-10
    assert np.all(np.isfinite(out))


# ---------------------------------------------------------------------------
# coupled driver
# ---------------------------------------------------------------------------


def test_trivial_kinetics_one_sweep():
    from degenpde.model import Kinetics

    kin = Kinetics(
        f0=lambda m, s: np.zeros_like(np.asarray(m, dtype=float)),
        fj=(lambda m, s: np.zeros_like(np.asarray(m, dtype=float)),),
        C_L=0.0,
    )
    law = PowerLaw(a=2.0)
    g = StructuredGrid(8, (0, 1))
    spec = ProblemSpec(grid=g, M0=np.full(8, 0.4), kinetics=kin, law=law, T=0.2,
                       substrates=(SubstrateSpec(nu=0.0, S0=0.7),))
    res = run_coupled(spec, TimeGrid(0.2, 20), 1e-4)
    # stationary M and S; single sweep with zero recorded distance
    assert np.allclose(res.M.Ms[-1], 0.4, atol=1e-10)
    assert np.allclose(res.S[0].fields[-1], 0.7)
    windows = {r.window for r in res.fp_log}
    for w in windows:
        rows = [r for r in res.fp_log if r.window == w]
        assert len(rows) == 1
        assert rows[0].l1_distance == 0.0


def test_coupled_uniform_matches_implicit_ode_recurrence():
    p = preset_cellulolytic2017(lam=0.0)
    g = StructuredGrid(8, (0, 1))
    spec = ProblemSpec(grid=g, M0=np.full(8, 0.5), kinetics=p.kinetics, law=p.law, T=0.3,
                       substrates=(SubstrateSpec(nu=0.0, S0=1.0),))
    tg = TimeGrid(0.3, 300)
    res = run_coupled(spec, tg, 1e-5, CouplingConfig(tol_fp=1e-13),
                      EllipticConfig(tol_newton=1e-13))

    # independent oracle: 2x2 implicit BE recurrence solved by bisected Newton
    m, s = 0.5, 1.0
    for _ in range(300):
        mm, ss = m, s
        for _ in range(80):
            sig = max(ss, 0.0) / (1.0 + max(ss, 0.0))
            f = np.array([mm - m - tg.tau * sig * mm, ss - s + tg.tau * sig * mm])
            dsig = 1.0 / (1.0 + max(ss, 0.0)) ** 2
            J = np.array([[1.0 - tg.tau * sig, -tg.tau * dsig * mm],
                          [tg.tau * sig, 1.0 + tg.tau * dsig * mm]])
            step = np.linalg.solve(J, f)
            mm, ss = mm - step[0], ss - step[1]
            if np.max(np.abs(step)) < 1e-15:
                break
        m, s = mm, ss
    assert np.max(np.abs(res.M.Ms[-1] - m)) <= 1e-10
    assert np.max(np.abs(res.S[0].fields[-1] - s)) <= 1e-10


def test_banach_mode_resolution():
    p = preset_eberl2001()
    g = StructuredGrid(8, (0, 1))
    sub_const = SubstrateSpec(nu=0.5, D=ConstantD(1.0), h=1.0, S0=1.0)
    sub_mixed = SubstrateSpec(nu=0.5, D=MixedD(lambda m, s: 0.5 + 0.1 * np.clip(m, 0, 1),
                                               0.5, 0.6), h=1.0, S0=1.0)
    spec_b = ProblemSpec(grid=g, M0=np.full(8, 0.3), kinetics=p.kinetics, law=p.law,
                         T=0.1, substrates=(sub_const,))
    spec_p = ProblemSpec(grid=g, M0=np.full(8, 0.3), kinetics=p.kinetics, law=p.law,
                         T=0.1, substrates=(sub_mixed,))
    assert banach_eligible(spec_b)
    assert not banach_eligible(spec_p)


def test_sweep_distances_decay_geometrically():
    # banach mode on the Monod preset: inter-sweep distances contract
    theta = 0.5
    p = preset_cellulolytic2017(lam=0.0)
    g = StructuredGrid(12, (0, 1))
    rng = np.random.default_rng(4)
    spec = ProblemSpec(grid=g, M0=rng.uniform(0.2, 0.5, 12), kinetics=p.kinetics,
                       law=p.law, T=0.35,
                       substrates=(SubstrateSpec(nu=0.0, S0=rng.uniform(0.6, 1.0, 12)),))
    res = run_coupled(spec, TimeGrid(0.35, 350), 1e-4,
                      CouplingConfig(tol_fp=1e-12, theta_c=theta))
    for w in sorted({r.window for r in res.fp_log}):
        d = [r.l1_distance for r in res.fp_log if r.window == w]
        # asymptotic regime: skip the first gap, ignore rounding-level tails
        for i in range(1, len(d) - 1):
            if d[i] > 1e-14 and d[i + 1] > 0:
                assert d[i + 1] <= (theta + 0.1) * d[i]


def test_identical_iterates_have_zero_distance():
    # kinetics independent of the substrates: first comparison already agrees
    from degenpde.model import Kinetics

    kin = Kinetics(
        f0=lambda m, s: 0.2 * np.clip(m, 0.0, 1.0),
        fj=(lambda m, s: np.zeros_like(np.asarray(m, dtype=float)),),
        f_max=lambda m: 0.2 * np.clip(m, 0.0, 1.0),
        C_L=0.2,
    )
    g = StructuredGrid(8, (0, 1))
    spec = ProblemSpec(grid=g, M0=np.full(8, 0.3), kinetics=kin, law=PowerLaw(2.0),
                       T=0.2, substrates=(SubstrateSpec(nu=0.0, S0=1.0),))
    res = run_coupled(spec, TimeGrid(0.2, 40), 1e-4)
    first = min(res.fp_log, key=lambda r: (r.window, r.sweep))
    assert first.l1_distance == 0.0


def test_fixed_point_stall_raises():
    p = preset_cellulolytic2017(lam=0.0)
    g = StructuredGrid(8, (0, 1))
    spec = ProblemSpec(grid=g, M0=np.full(8, 0.4), kinetics=p.kinetics, law=p.law,
                       T=0.2, substrates=(SubstrateSpec(nu=0.0, S0=1.0),))
    with pytest.raises(FixedPointStall):
        run_coupled(spec, TimeGrid(0.2, 100), 1e-4,
                    CouplingConfig(tol_fp=1e-300, max_sweeps=2))


def test_picard_mode_mixed_diffusion_runs():
    p = preset_eberl2001(k3=0.8, d2=1e-2, a=2.0, b=2.0)
    g = StructuredGrid(16, (0, 1))
    rng = np.random.default_rng(9)
    sub = SubstrateSpec(
        nu=0.5,
        D=MixedD(lambda m, s: 0.4 + 0.4 * np.clip(m, 0.0, 1.0), 0.4, 0.8),
        v=(0.2,),
        h=0.8,
        S0=rng.uniform(0.6, 1.0, 16),
    )
    spec = ProblemSpec(grid=g, M0=rng.uniform(0.1, 0.4, 16), kinetics=p.kinetics,
                       law=p.law, T=0.2, substrates=(sub,), h0=None)
    res = run_coupled(spec, TimeGrid(0.2, 100), 1e-4, CouplingConfig(tol_fp=1e-9))
    assert not res.blown_up
    assert all(np.min(m) >= -1e-10 and np.max(m) < 1.0 for m in res.M.Ms)
    assert np.min(res.S[0].fields[-1]) >= -1e-10


def test_substrate_comparison_bounds():
    # substrates stay inside [min(S_lo, h), hatS(t)] for the Monod kinetics
    from degenpde.verify import sandwich_experiment

    worst, slack, res, rep = sandwich_experiment(T=0.5)
    s_lo = float(np.min(res.S[0].fields[0]))
    for n, t in enumerate(res.M.times):
        s = res.S[0].fields[n]
        assert np.min(s) >= min(s_lo, 0.0) - slack
        assert np.max(s) <= rep.comparison_curve(t)[3] + slack


def test_l1_contraction_estimate():
    from degenpde.verify import contraction_experiment

    lhs, rhs = contraction_experiment(n=32, tau=2e-3, T=0.3)
    assert lhs <= 1.1 * rhs
