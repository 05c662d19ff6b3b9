"""Executable a-priori diagnostics: envelopes, comparison system, blow-up, barrier.

The growth envelope integrates hatM' = f_max(hatM) from the initial supremum;
the four-component comparison system brackets a single-substrate run between
spatially uniform sub-/supersolutions; the delta-barrier certifies an upper
bound strictly below 1 whenever part of the boundary is Dirichlet; and the
constant-state reduction yields a closed-form blow-up time used as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .elliptic import solve_poisson_barrier
from .errors import MonotonicityViolation, RangeError
from .model import ETA_STOP

BLOWUP_THRESHOLD = 1.0 - ETA_STOP


class ODECurve:
    """Dense RK4 output with cubic-Hermite evaluation between nodes."""

    def __init__(self, ts, ys, dys):
        self.ts = np.asarray(ts)
        self.ys = np.asarray(ys)
        self.dys = np.asarray(dys)

    def __call__(self, t):
        t_arr, scalar = np.asarray(t, dtype=float), np.ndim(t) == 0
        t_arr = np.atleast_1d(t_arr)
        ts = self.ts
        idx = np.clip(np.searchsorted(ts, t_arr) - 1, 0, len(ts) - 2)
        h = ts[idx + 1] - ts[idx]
        w = np.clip((t_arr - ts[idx]) / h, 0.0, 1.0)
        h00 = (1 + 2 * w) * (1 - w) ** 2
        h10 = w * (1 - w) ** 2
        h01 = w**2 * (3 - 2 * w)
        h11 = w**2 * (w - 1)
        shape_extra = (Ellipsis,) + (None,) * (self.ys.ndim - 1)
        out = (
            h00[shape_extra] * self.ys[idx]
            + h10[shape_extra] * h[shape_extra] * self.dys[idx]
            + h01[shape_extra] * self.ys[idx + 1]
            + h11[shape_extra] * h[shape_extra] * self.dys[idx + 1]
        )
        return out[0] if scalar else out

    @property
    def t_end(self):
        return float(self.ts[-1])

    def max_value(self, component=None):
        ys = self.ys if component is None else self.ys[:, component]
        return float(np.max(ys))


def _rk4(f, y0, t0, T, n):
    ts = np.linspace(t0, T, n + 1)
    h = (T - t0) / n
    if np.ndim(y0) == 0:
        # scalar fast path: plain floats keep the loop cheap
        ys = np.empty(n + 1)
        dys = np.empty(n + 1)
        y = float(y0)
        ys[0] = y
        dys[0] = float(f(y))
        for i in range(n):
            k1 = float(f(y))
            k2 = float(f(y + 0.5 * h * k1))
            k3 = float(f(y + 0.5 * h * k2))
            k4 = float(f(y + h * k3))
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            ys[i + 1] = y
            dys[i + 1] = float(f(y))
        return ODECurve(ts, ys, dys)
    ys = np.empty((n + 1,) + np.shape(y0))
    dys = np.empty_like(ys)
    y = np.array(y0, dtype=float)
    ys[0] = y
    dys[0] = f(y)
    for i in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[i + 1] = y
        dys[i + 1] = f(y)
    return ODECurve(ts, ys, dys)


def _rk4_adaptive(f, y0, T, n0=2000, endpoint_tol=1e-9, max_tol=1e-6, extra_doublings=4):
    """Fixed-step RK4 with a halving check; no adaptive machinery needed for
    the smooth, cheap envelope ODEs.

    Halving must move the endpoint by < endpoint_tol and the running maximum
    by < max_tol (Richardson safeguard for the boundedness margin); the step
    keeps halving until both hold.
    """
    curve = _rk4(f, y0, 0.0, T, n0)
    n = n0
    for _ in range(1 + extra_doublings):
        finer = _rk4(f, y0, 0.0, T, 2 * n)
        end_gap = float(np.max(np.abs(finer.ys[-1] - curve.ys[-1])))
        max_gap = abs(np.max(finer.ys) - np.max(curve.ys))
        curve, n = finer, 2 * n
        if end_gap < endpoint_tol and max_gap < max_tol:
            break
    return curve


def hat_M(M_bar, f_max, T):
    """Growth envelope hatM' = f_max(hatM), hatM(0) = sup M0.

    Values above 1 are information (the envelope no longer certifies a
    bound), not an error.
    """
    rhs = lambda y: np.asarray(f_max(y), dtype=float)
    return _rk4_adaptive(rhs, float(M_bar), float(T))


@dataclass
class Classification:
    kind: str  # BlowUpPredicted | BoundedBy | Indeterminate
    t_star: float | None = None
    bound: float | None = None

    def __str__(self):
        if self.kind == "BlowUpPredicted":
            return f"BlowUpPredicted(t*={self.t_star:.6g})"
        if self.kind == "BoundedBy":
            return f"BoundedBy({self.bound:.6g})"
        return "Indeterminate"


@dataclass
class BoundsReport:
    """Envelopes, comparison curves (k = 1 only), classification, barrier margin."""

    t_grid: np.ndarray
    hatM: np.ndarray
    checkM: np.ndarray | None = None
    checkS: np.ndarray | None = None
    hatS: np.ndarray | None = None
    classification: Classification | None = None
    delta: float | None = None
    hat_curve: ODECurve | None = None
    comparison_curve: ODECurve | None = None
    t_star: float | None = None


def _check_monotonicity(f0, f1, m_range, s_range, n=25):
    ms = np.linspace(*m_range, n)
    ss = np.linspace(*s_range, n)
    M, S = np.meshgrid(ms, ss, indexing="ij")
    v0 = np.asarray(f0(M, S))
    if np.any(np.diff(v0, axis=1) < -1e-10):
        raise MonotonicityViolation("f0 is not nondecreasing in s on the sampled range")
    v1 = np.asarray(f1(M, S))
    if np.any(np.diff(v1, axis=0) > 1e-10):
        raise MonotonicityViolation("f1 is not nonincreasing in m on the sampled range")


def _first_crossing(curve, component, level):
    """Hermite-refined first time a curve component reaches a level."""
    ys = curve.ys[:, component] if curve.ys.ndim > 1 else curve.ys
    above = np.nonzero(ys >= level)[0]
    if above.size == 0:
        return None
    i = int(above[0])
    if i == 0:
        return float(curve.ts[0])
    lo, hi = curve.ts[i - 1], curve.ts[i]
    getter = (lambda t: curve(t)[component]) if curve.ys.ndim > 1 else curve
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if getter(mid) >= level:
            hi = mid
        else:
            lo = mid
    return float(0.5 * (lo + hi))


def comparison_system(M_lo, S_lo, M_hi, S_hi, f0, f1, T, validate=True):
    """Solve the four-ODE bracket system for a single substrate.

    checkM' = f0(checkM, checkS),  checkS' = f1(hatM, checkS),
    hatM'   = f0(hatM, hatS),      hatS'   = f1(checkM, hatS),

    from (inf M0, inf S0, sup M0, sup S0).  Requires f0 nondecreasing in s
    and f1 nonincreasing in m (validated by sampling).  Integration is
    reported up to the first time checkM or hatM reaches 1 - ETA_STOP.
    """
    if not (M_lo <= M_hi and S_lo <= S_hi):
        raise MonotonicityViolation("initial bounds must be ordered")
    if validate:
        _check_monotonicity(
            f0, f1,
            (0.0, max(1.1, M_hi + 0.1)),
            (min(S_lo, 0.0) - 0.1, S_hi + 0.1),
        )

    def rhs(y):
        # batched: f0 on (checkM, Sc), (hatM, Sh); f1 on (hatM, Sc), (checkM, Sh)
        s_pair = y[1::2]
        g = np.asarray(f0(y[0::2], s_pair), dtype=float)
        h = np.asarray(f1(y[2::-2], s_pair), dtype=float)
        return np.array([g[0], h[0], g[1], h[1]])

    curve = _rk4_adaptive(rhs, np.array([M_lo, S_lo, M_hi, S_hi]), float(T))
    t_hit = [
        t for t in (_first_crossing(curve, 0, BLOWUP_THRESHOLD),
                    _first_crossing(curve, 2, BLOWUP_THRESHOLD))
        if t is not None
    ]
    t_star = min(t_hit) if t_hit else None
    return curve, t_star


def classify(curve_or_report, gamma1_nonempty=False, delta=None, margin=None):
    """Blow-up / boundedness rules applied to computed envelope curves.

    With a Dirichlet part and a barrier margin the solution is globally
    bounded by 1 - delta.  Otherwise: if the lower comparison component
    reaches 1 - ETA_STOP the run must blow up; if hatM stays below 1 minus a
    positive margin the run is global; in between the rules are silent.
    """
    if isinstance(curve_or_report, BoundsReport):
        hat_max = float(np.max(curve_or_report.hatM))
        t_star = curve_or_report.t_star
    else:
        curve, t_star = curve_or_report
        hat_max = (
            float(np.max(curve.ys[:, 2])) if curve.ys.ndim > 1 else float(np.max(curve.ys))
        )
    if gamma1_nonempty and delta is not None:
        return Classification("BoundedBy", bound=1.0 - delta)
    if t_star is not None:
        return Classification("BlowUpPredicted", t_star=t_star)
    used_margin = (1.0 - hat_max) if margin is None else margin
    if used_margin > 0 and hat_max <= 1.0 - used_margin + 1e-14:
        return Classification("BoundedBy", bound=1.0 - used_margin)
    return Classification("Indeterminate")


def barrier_delta(grid, transform, f_max, hat_curve, M_bar):
    """Margin delta with M <= 1 - delta certified by the elliptic barrier.

    C_hat bounds the reaction by the envelope maximum; the Poisson solution
    with zero Dirichlet trace then dominates the Kirchhoff variable shifted
    by sup M0, and delta falls out through the inverse transform.
    """
    c_hat = float(np.max(np.asarray(f_max(hat_curve.ys), dtype=float)))
    u_hat = solve_poisson_barrier(grid, c_hat)
    u_max = float(np.max(u_hat)) + float(M_bar)
    if u_max > transform.phi_cap:
        raise RangeError(
            f"barrier level {u_max:.4g} exceeds the Kirchhoff range "
            f"{transform.phi_cap:.4g}; the barrier cannot certify a bound"
        )
    return 1.0 - transform.inverse(u_max)


def constant_state_blowup_time(M_bar, S_bar, lam, t_max=100.0):
    """Blow-up time of the spatially uniform two-ODE reduction, or None.

    For lam = 0 the sum M + S =: c is conserved, giving the quadrature

        t* = integral_{M_bar}^{1} (1 + c - M) / (M (c - M)) dM    (c > 1),

    and no blow-up when c <= 1.  For lam > 0 the system is integrated until
    M reaches 1 or growth becomes impossible (the substrate only decreases,
    so sigma(S) <= lam with M < 1 rules blow-up out).
    """
    if not (0.0 < M_bar < 1.0) or S_bar <= 0:
        raise ValueError("need M_bar in (0, 1) and S_bar > 0")
    if lam == 0.0:
        c = M_bar + S_bar
        if c <= 1.0:
            return None
        val, _ = quad(lambda m: (1.0 + c - m) / (m * (c - m)), M_bar, 1.0)
        return float(val)

    sigma = lambda s: max(s, 0.0) / (1.0 + max(s, 0.0))

    def rhs(y):
        m, s = y
        return np.array([(sigma(s) - lam) * m, -sigma(s) * m])

    # stop-growth threshold: sigma(S) <= lam
    s_thresh = lam / (1.0 - lam) if lam < 1 else np.inf
    y = np.array([M_bar, S_bar])
    t = 0.0
    chunk = min(1.0, t_max / 10.0)
    while t < t_max:
        curve = _rk4(rhs, y, t, t + chunk, 2000)
        hit = _first_crossing(curve, 0, 1.0)
        if hit is not None:
            return hit
        y = curve.ys[-1]
        t += chunk
        if y[1] <= s_thresh and y[0] < 1.0:
            return None
    return None


def bounds_report(spec, transform=None, T=None):
    """Assemble the full report for a problem description.

    The comparison section requires a single substrate; with more substrates
    only the envelope and barrier parts are filled.  The barrier needs a
    Kirchhoff transform and a Dirichlet boundary part.
    """
    kin = spec.kinetics
    T = float(T if T is not None else spec.T)
    M_lo, M_hi = spec.M_bounds
    hat_curve = hat_M(M_hi, kin.eval_f_max, T)

    checkM = checkS = hatS = None
    comparison_curve = None
    t_star = None
    if spec.k == 1:
        S_lo, S_hi = spec.S_bounds
        f0 = lambda m, s: kin.eval_f0(m, [np.asarray(s, dtype=float)])
        f1 = lambda m, s: kin.eval_fj(0, m, [np.asarray(s, dtype=float)])
        comparison_curve, t_star = comparison_system(M_lo, S_lo, M_hi, S_hi, f0, f1, T)
        checkM = comparison_curve.ys[:, 0]
        checkS = comparison_curve.ys[:, 1]
        hatS = comparison_curve.ys[:, 3]

    delta = None
    if spec.grid.gamma1 and transform is not None:
        delta = barrier_delta(spec.grid, transform, kin.eval_f_max, hat_curve, M_hi)

    # for k = 1 the report's hatM is the comparison upper component; the
    # f_max envelope remains available separately as hat_curve
    if comparison_curve is not None:
        t_grid = comparison_curve.ts
        hatM_vals = comparison_curve.ys[:, 2]
    else:
        t_grid = hat_curve.ts
        hatM_vals = hat_curve.ys
    report = BoundsReport(
        t_grid=t_grid,
        hatM=np.asarray(hatM_vals, dtype=float),
        checkM=checkM,
        checkS=checkS,
        hatS=hatS,
        delta=delta,
        hat_curve=hat_curve,
        comparison_curve=comparison_curve,
        t_star=t_star,
    )
    report.classification = classify(report, bool(spec.grid.gamma1), delta)
    return report
