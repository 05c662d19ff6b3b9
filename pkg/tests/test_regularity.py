import numpy as np
import pytest
from scipy.integrate import quad

from degenpde.errors import NoFront
from degenpde.grid import StructuredGrid
from degenpde.model import PowerLaw, PowerLawSingular, ProblemSpec, RegularizedTransform, preset_pme
from degenpde.oracles import BarenblattSolution
from degenpde.regularity import (
    RegularityConfig,
    fit_front_exponent,
    psi_eps,
    theoretical_exponent,
    weighted_gradient_functional,
)
from degenpde.stepper import TimeGrid, Trajectory, run_M_given_S


def _synthetic_trajectory(Ms, times=None, n=None, extent=(-1.0, 1.0)):
    n = n if n is not None else len(Ms[0])
    grid = StructuredGrid(n, extent)
    reg = RegularizedTransform(PowerLaw(a=1.0), 1e-2)
    times = np.arange(len(Ms), dtype=float) if times is None else np.asarray(times)
    return Trajectory(grid=grid, reg=reg, times=times,
                      us=[reg.phi(m) for m in Ms], Ms=[np.asarray(m, float) for m in Ms])


# ---------------------------------------------------------------------------
# psi_eps
# ---------------------------------------------------------------------------


def test_psi_examples():
    assert psi_eps(1.3, 1e-2, 1.0) == 0.0
    # integrand is 1 above rho = 1
    assert psi_eps(0.7, 1e-3, 2.0) == pytest.approx(1.0, abs=1e-14)
    # alpha=2, eps=0: closed form 1 - 1/m
    assert psi_eps(2.0, 0.0, 0.5) == pytest.approx(-1.0, abs=1e-14)


def test_psi_matches_quadrature(rng):
    for _ in range(25):
        alpha = float(rng.uniform(0.3, 3.5))
        eps = float(rng.choice([1e-1, 1e-2, 1e-3]))
        m = float(rng.uniform(0.0, 2.5))
        integrand = lambda r: 1.0 / min(max(eps, r**alpha), 1.0)
        oracle = quad(integrand, 1.0, m)[0]
        assert psi_eps(alpha, eps, m) == pytest.approx(oracle, rel=1e-8, abs=1e-10)


def test_psi_monotone_nonpositive_below_one(rng):
    m = np.sort(rng.uniform(0.0, 3.0, 200))
    for alpha, eps in ((0.5, 1e-2), (1.0, 1e-3), (2.7, 1e-1)):
        vals = psi_eps(alpha, eps, m)
        assert np.all(np.diff(vals) >= -1e-12)
        assert np.all(vals[m < 1.0] <= 0.0)


def test_psi_growth_inequality_sample(rng):
    # |m Psi(m)| <= C (1 + int_1^m Psi) with one finite constant per sample
    ratios = []
    for _ in range(1000):
        alpha = float(rng.uniform(0.3, 4.0))
        eps = float(rng.choice([0.0, 1e-1, 1e-2, 1e-3, 1e-6]))
        m = float(rng.uniform(0.0, 3.0))
        if m == 0.0 and eps == 0.0 and alpha >= 1.0:
            continue  # Psi = -inf exactly at the degenerate corner
        lhs = abs(m * psi_eps(alpha, eps, m))
        rhs = 1.0 + quad(lambda r: psi_eps(alpha, eps, r), 1.0, m, limit=200)[0]
        assert rhs > 0
        ratios.append(lhs / rhs)
    c_obs = max(ratios)
    assert np.isfinite(c_obs)
    assert c_obs < 100.0


def test_weight_sandwich_inequality(rng):
    # Phi_eps' * Psi_eps' >= c * min(1, m^(a - alpha)) with a uniform c per law
    for law, c_law in ((PowerLaw(a=2.0), 1.0),
                       (PowerLawSingular(d2=0.7, a=2.0, b=2.0), 0.7),
                       (PowerLawSingular(d2=1.0, a=3.0, b=1.0), 1.0)):
        a = law.a
        for alpha in (a, 2.0 - 1e-2):
            for eps in (1e-1, 1e-3, 1e-5):
                reg = RegularizedTransform(law, eps)
                m = rng.uniform(0.0, 2.0, 400)
                phi_p = reg.phi_prime(m)
                psi_p = 1.0 / np.minimum(np.maximum(eps, m**alpha), 1.0)
                target = np.minimum(1.0, np.where(m > 0, m ** (a - alpha), 1.0))
                ratio = phi_p * psi_p / np.maximum(target, 1e-300)
                assert np.min(ratio) >= 0.4 * min(1.0, c_law)


# ---------------------------------------------------------------------------
# weighted gradient functional
# ---------------------------------------------------------------------------


def test_weighted_functional_constant_fields_zero():
    Ms = [np.full(8, 0.3), np.full(8, 0.5), np.full(8, 0.9)]
    traj = _synthetic_trajectory(Ms)
    assert weighted_gradient_functional(traj, 1.5, 1.5) == 0.0


def test_weighted_functional_alpha_equals_a_is_plain_dirichlet_energy():
    rng = np.random.default_rng(0)
    Ms = [rng.uniform(1.0, 2.0, 16) for _ in range(3)]  # all values above 1
    traj = _synthetic_trajectory(Ms)
    # min(M^0, 1) = 1 and min(M^(a-alpha), 1) = 1 for a = alpha or M >= 1
    val_eq = weighted_gradient_functional(traj, 2.0, 2.0)
    grid = traj.grid
    plain = sum(
        float(np.sum((np.diff(m) / grid.h[0]) ** 2)) * grid.cell_volume
        for m in Ms[1:]
    )
    assert val_eq == pytest.approx(plain, rel=1e-12)


def test_weighted_functional_two_cell_hand_value():
    # M = (0.25, 0.25 + h), one step, tau = h = 1, a - alpha = 2:
    # face value 0.25, weight 0.25^2, gradient 1 -> 0.0625
    grid = StructuredGrid(2, (0.0, 2.0))
    assert grid.h[0] == 1.0
    reg = RegularizedTransform(PowerLaw(a=1.0), 1e-2)
    Ms = [np.array([0.25, 1.25]), np.array([0.25, 1.25])]
    traj = Trajectory(grid=grid, reg=reg, times=np.array([0.0, 1.0]),
                      us=[reg.phi(m) for m in Ms], Ms=Ms)
    val = weighted_gradient_functional(traj, 3.0, 1.0)
    assert val == pytest.approx(0.0625, rel=1e-12)


def test_weighted_functional_degenerate_faces():
    # zero face values contribute nothing for positive exponent, full weight
    # for negative exponent
    grid = StructuredGrid(2, (0.0, 2.0))
    reg = RegularizedTransform(PowerLaw(a=1.0), 1e-2)
    Ms = [np.array([0.0, 1.0]), np.array([0.0, 1.0])]
    traj = Trajectory(grid=grid, reg=reg, times=np.array([0.0, 1.0]),
                      us=[reg.phi(m) for m in Ms], Ms=Ms)
    assert weighted_gradient_functional(traj, 2.0, 1.0) == 0.0
    assert weighted_gradient_functional(traj, 1.0, 2.0) == pytest.approx(1.0)


def test_weighted_functional_bounded_under_refinement():
    a = 1.5
    sol = BarenblattSolution(a=a, dim=1, peak=0.6)
    L = 1.25 * sol.front_radius(0.3)
    p = preset_pme(a)
    vals = []
    for n, steps in ((40, 120), (80, 240), (160, 480)):
        grid = StructuredGrid(n, (-L, L))
        spec = ProblemSpec(grid=grid, M0=sol.cell_average_initial(grid),
                           kinetics=p.kinetics, law=p.law, T=0.3)
        traj = run_M_given_S(spec, None, 1e-5, TimeGrid(0.3, steps))
        vals.append(weighted_gradient_functional(traj, a, a))
    for lo, hi in zip(vals, vals[1:]):
        assert hi <= lo * 1.10


# ---------------------------------------------------------------------------
# exponents
# ---------------------------------------------------------------------------


def test_theoretical_exponent_values():
    assert theoretical_exponent(1.5, 0.0) == 1.0
    assert theoretical_exponent(4.0, 0.0) == 0.5
    assert theoretical_exponent(4.0, 0.1) == 1.0
    assert theoretical_exponent(1.99, 0.0) == 1.0
    assert theoretical_exponent(2.0, 0.0) == 1.0  # 2/a = 1 at the threshold
    with pytest.raises(ValueError):
        theoretical_exponent(0.0, 0.0)


def test_regularity_config_defaults():
    cfg = RegularityConfig(a=1.5)
    assert cfg.alpha == 1.5
    cfg2 = RegularityConfig(a=3.0)
    assert cfg2.alpha == pytest.approx(2.0 - 1e-2)
    with pytest.raises(ValueError):
        RegularityConfig(a=-1.0)


# ---------------------------------------------------------------------------
# front fitting
# ---------------------------------------------------------------------------


def _front_field(grid, gamma):
    x = grid.centers(0)
    return np.clip(x, 0.0, None) ** gamma


def test_fit_front_linear_profile():
    grid = StructuredGrid(400, (-1.0, 1.0))
    M = _front_field(grid, 1.0)
    traj = _synthetic_trajectory([M, M], n=400)
    fit = fit_front_exponent(traj, 1.0)
    assert fit.gamma == pytest.approx(1.0, abs=0.05)
    assert fit.r_hat == 1.0
    assert fit.n_points >= 3


def test_fit_front_quadratic_profile_capped():
    grid = StructuredGrid(800, (-1.0, 1.0))
    M = _front_field(grid, 2.0)
    traj = _synthetic_trajectory([M, M], n=800)
    fit = fit_front_exponent(traj, 1.0)
    assert fit.gamma == pytest.approx(2.0, abs=0.1)
    assert fit.r_hat == 1.0  # min(1, gamma + 1/2)


def test_fit_front_no_front():
    traj = _synthetic_trajectory([np.full(64, 0.5)], n=64)
    with pytest.raises(NoFront):
        fit_front_exponent(traj, 0.0)


def test_fit_front_on_exact_barenblatt_profile():
    # profile behaves like dist^(1/a) near the front; exact samples, fine grid
    a = 2.0
    sol = BarenblattSolution(a=a, dim=1, peak=0.6)
    grid = StructuredGrid(4000, (-3.0, 3.0))
    M = sol(grid.centers(0), 0.2)
    traj = _synthetic_trajectory([M, M], n=4000, extent=(-3.0, 3.0))
    fit = fit_front_exponent(traj, 0.0)
    assert fit.gamma == pytest.approx(1.0 / a, abs=0.05)
    assert fit.r_hat == pytest.approx(1.0, abs=0.05)


def test_fit_front_on_barenblatt_run():
    # computed front: smeared over a few cells, exponent recovered loosely
    a = 1.0
    sol = BarenblattSolution(a=a, dim=1, peak=0.6)
    L = 1.4 * sol.front_radius(0.25)
    p = preset_pme(a)
    grid = StructuredGrid(512, (-L, L))
    spec = ProblemSpec(grid=grid, M0=sol.cell_average_initial(grid),
                       kinetics=p.kinetics, law=p.law, T=0.25)
    traj = run_M_given_S(spec, None, 1e-6, TimeGrid(0.25, 120))
    fit = fit_front_exponent(traj, 0.25)
    assert 0.7 <= fit.gamma <= 1.6
    assert fit.r_hat == 1.0
