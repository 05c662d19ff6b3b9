import numpy as np
import pytest

from degenpde.elliptic import (
    EllipticConfig,
    solve_poisson_barrier,
    solve_semilinear,
    solve_time_step,
    time_step_residual,
)
from degenpde.errors import NonConvergence, SingularSystem, TauTooLarge
from degenpde.grid import StructuredGrid, diffusion_op
from degenpde.model import (
    PowerLaw,
    PowerLawSingular,
    RegularizedTransform,
    preset_cellulolytic2017,
    zero_kinetics,
)

IDENTITY = (lambda u: u, lambda m: np.ones_like(np.asarray(m, dtype=float)))
NO_REACTION = lambda m: np.zeros_like(m)


def _solve_linear(grid, dirichlet_sides, m_prev, tau=1.0):
    beta, bprime = IDENTITY
    op = diffusion_op(grid, dirichlet_sides=dirichlet_sides)
    u, info = solve_semilinear(
        beta, bprime, op, 0.0, m_prev, tau, NO_REACTION, 0.0, 1e-12,
        EllipticConfig(tol_newton=1e-13), np.zeros_like(m_prev),
    )
    return u, info


def test_constant_state_is_steady():
    reg = RegularizedTransform(PowerLawSingular(d2=1.0, a=2.0, b=2.0), 1e-3)
    g = StructuredGrid(12, (0, 1))
    m_prev = np.full(12, 0.41)
    u, info = solve_time_step(reg, g, m_prev, (), 0.01, zero_kinetics(),
                              EllipticConfig(tol_newton=1e-13))
    assert np.allclose(u, reg.phi(0.41), atol=1e-12)
    assert np.allclose(reg.beta(u), 0.41, atol=1e-12)


def test_linear_identity_steady():
    # (w, z) + (grad w, grad z) = (F, z) with constant F has w = F
    g = StructuredGrid(6, (0, 1))
    F = np.full(6, 1.3)
    u, _ = _solve_linear(g, frozenset(), F)
    assert np.allclose(u, 1.3, atol=1e-12)


def test_two_cell_neumann_hand_solve():
    g = StructuredGrid(2, (0, 2))
    u, _ = _solve_linear(g, frozenset(), np.array([0.0, 2.0]))
    assert np.allclose(u, [2.0 / 3.0, 4.0 / 3.0], atol=1e-12)


def test_two_cell_dirichlet_hand_solve():
    g = StructuredGrid(2, (0, 2))
    u, _ = _solve_linear(g, frozenset(("left", "right")), np.array([1.0, 1.0]))
    assert np.allclose(u, [0.5, 0.5], atol=1e-12)


def test_tau_guard():
    reg = RegularizedTransform(PowerLaw(a=2.0), 1e-3)
    g = StructuredGrid(8, (0, 1))
    kin = preset_cellulolytic2017(lam=0.0).kinetics  # C_L = 1
    with pytest.raises(TauTooLarge):
        solve_time_step(reg, g, np.full(8, 0.3), (np.full(8, 1.0),), 1.0, kin)


def test_monotone_dependence(rng):
    # comparison structure: larger previous state gives larger new state
    reg = RegularizedTransform(PowerLawSingular(d2=0.5, a=1.0, b=2.0), 1e-3)
    g = StructuredGrid(24, (0, 1), gamma1=("left",))
    cfg = EllipticConfig(tol_newton=1e-13)
    m2 = rng.uniform(0.05, 0.5, 24)
    m1 = m2 + rng.uniform(0.0, 0.3, 24)
    kin = zero_kinetics()
    u1, _ = solve_time_step(reg, g, m1, (), 0.01, kin, cfg, h0=0.2)
    u2, _ = solve_time_step(reg, g, m2, (), 0.01, kin, cfg, h0=0.2)
    assert np.min(reg.beta(u1) - reg.beta(u2)) >= -1e-10


@pytest.mark.parametrize("dim", [1, 2])
def test_residual_certificate(rng, dim):
    shape = (24,) if dim == 1 else (9, 9)
    g = StructuredGrid(shape, ((0, 1),) * dim, gamma1=("left",))
    reg = RegularizedTransform(PowerLawSingular(d2=1.0, a=4.0, b=4.0), 1e-4)
    kin = preset_cellulolytic2017(lam=0.2).kinetics
    cfg = EllipticConfig(tol_newton=1e-11)
    m_prev = rng.uniform(0.1, 0.6, shape)
    s = (rng.uniform(0.5, 1.0, shape),)
    tau = 5e-3
    u, _ = solve_time_step(reg, g, m_prev, s, tau, kin, cfg, h0=float(m_prev.max()))
    res = time_step_residual(reg, g, m_prev, s, tau, kin, u, h0=float(m_prev.max()))
    assert res <= cfg.tol_newton


def test_local_quadratic_convergence(rng):
    # cold start forces several Newton iterations; the tail is quadratic
    reg = RegularizedTransform(PowerLawSingular(d2=1.0, a=2.0, b=3.0), 1e-2)
    g = StructuredGrid(32, (0, 1))
    m_prev = 0.3 + 0.25 * np.sin(2 * np.pi * g.centers(0))
    cfg = EllipticConfig(tol_newton=1e-13)
    op = diffusion_op(g)
    u, info = solve_semilinear(
        reg.beta, reg.beta_prime_of_m, op, 0.0, m_prev, 0.05, NO_REACTION, 0.0,
        1e-12, cfg, np.zeros(32),
    )
    res = [r for r in info["residuals"] if r > 0]
    assert res[-1] <= cfg.tol_newton
    assert len(res) >= 3
    tail = res[-3:]
    ratios = [tail[i + 1] / tail[i] ** 2 for i in range(2) if tail[i] > 1e-300]
    c_obs = max(ratios)
    assert np.isfinite(c_obs)
    # superlinear tail: each residual collapses relative to its predecessor
    assert tail[-1] <= 0.25 * tail[-2]


def test_nonconvergence_reported():
    reg = RegularizedTransform(PowerLaw(a=2.0), 1e-2)
    g = StructuredGrid(8, (0, 1))
    cfg = EllipticConfig(tol_newton=1e-30, max_iter=3, fallback=True)
    with pytest.raises(NonConvergence):
        solve_time_step(reg, g, np.full(8, 0.4), (), 0.01, zero_kinetics(), cfg,
                        u0=np.linspace(0, 1, 8))


# ---------------------------------------------------------------------------
# Poisson barrier
# ---------------------------------------------------------------------------


def test_barrier_zero_source():
    g = StructuredGrid(64, (0, 1), gamma1=("left", "right"))
    u = solve_poisson_barrier(g, 0.0)
    assert np.allclose(u, 0.0, atol=1e-14)


def test_barrier_dirichlet_both_ends_closed_form():
    g = StructuredGrid(256, (0, 1), gamma1=("left", "right"))
    u = solve_poisson_barrier(g, 1.0)
    assert abs(np.max(u) - 0.125) / 0.125 <= 0.01
    g2 = StructuredGrid(1024, (0, 1), gamma1=("left", "right"))
    u2 = solve_poisson_barrier(g2, 1.0)
    assert abs(np.max(u2) - 0.125) < abs(np.max(u) - 0.125)


def test_barrier_dirichlet_neumann_closed_form():
    g = StructuredGrid(256, (0, 1), gamma1=("left",))
    u = solve_poisson_barrier(g, 1.0)
    assert abs(np.max(u) - 0.5) / 0.5 <= 0.01


def test_barrier_2d_positive_bounded():
    g = StructuredGrid((16, 16), ((0, 1), (0, 1)), gamma1=("left", "right", "bottom", "top"))
    u = solve_poisson_barrier(g, 1.0)
    assert np.min(u) >= 0.0
    # dominated by the 1D barrier in each direction
    assert np.max(u) <= 0.125 + 1e-3


def test_barrier_needs_dirichlet_part():
    g = StructuredGrid(16, (0, 1))
    with pytest.raises(SingularSystem):
        solve_poisson_barrier(g, 1.0)
