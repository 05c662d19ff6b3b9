"""Coefficient laws, Kirchhoff transforms, regularization, and kinetics.

The biomass diffusion coefficient D0 is degenerate (D0(0) = 0) and, for the
singular laws, blows up as the density approaches 1.  All transport of the
biomass density is expressed through the Kirchhoff transform

    Phi(m) = integral_0^m D0(rho) d rho,

and the uniformly parabolic regularization clamps the integrand to the band
[eps, 1/eps]:

    Phi_eps(m) = integral_0^m min(max(eps, D0(rho)), 1/eps) d rho.

Phi_eps is globally Lipschitz (constant 1/eps) and strongly monotone
(constant eps) on all of R, where the clamped integrand is extended by a
constant outside the law's native domain.  Its inverse beta_eps shares the
same derivative band with the roles of eps and 1/eps exchanged.

Evaluation strategy: every law exposes an exact primitive (closed form for
power laws, hypergeometric form for the singular power law, exact
antiderivative of the monotone cubic interpolant for tabulated laws).
Phi_eps is then assembled piecewise from the primitive and affine clamp
segments, so evaluations and inversions are vectorized and accurate to
rounding; an adaptive-quadrature reference lives in the test-suite oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, RangeError

# Density cap for Kirchhoff tables: the singular tail above 1 - ETA_CAP is
# never visited by bounded solutions.
ETA_CAP = 1e-8
# Blow-up sentinel: integration halts once the density reaches 1 - ETA_STOP.
ETA_STOP = 1e-4


def tol_inv(u):
    """Residual tolerance for scalar inversions of monotone maps."""
    return 1e-12 * (1.0 + np.abs(u))


def _asarray(m):
    arr = np.asarray(m, dtype=float)
    return arr, arr.ndim == 0


def _bisect_increasing(f, target, lo, hi, iters=200):
    """Root of f(x) = target for scalar increasing f on [lo, hi]."""
    flo, fhi = f(lo) - target, f(hi) - target
    if flo > 0:
        return lo
    if fhi < 0:
        return hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if f(mid) - target <= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _invert_monotone(F, dF, lo, hi, target, x0=None, xtol=2e-14, max_iter=120):
    """Vectorized safeguarded Newton for increasing F on brackets [lo, hi]."""
    target = np.asarray(target, dtype=float)
    a = np.broadcast_to(np.asarray(lo, float), target.shape).copy()
    b = np.broadcast_to(np.asarray(hi, float), target.shape).copy()
    x = 0.5 * (a + b) if x0 is None else np.clip(np.asarray(x0, float), a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(max_iter):
            f = F(x) - target
            a = np.where(f <= 0, x, a)
            b = np.where(f > 0, x, b)
            d = dF(x)
            xn = x - f / d
            bad = ~np.isfinite(xn) | (xn < np.minimum(a, b)) | (xn > np.maximum(a, b))
            xn = np.where(bad, 0.5 * (a + b), xn)
            if np.all(np.abs(xn - x) <= xtol * (1.0 + np.abs(xn))):
                x = xn
                break
            x = xn
    return x


# ---------------------------------------------------------------------------
# Coefficient laws
# ---------------------------------------------------------------------------


class CoefficientLaw:
    """Common interface of biomass/substrate diffusion laws.

    Subclasses provide vectorized ``D`` on the native domain, a constant
    extension ``D_ext`` on all of R, an exact primitive, and the interior
    points where the clamped integrand of the regularization switches
    branches.
    """

    #: threshold below which D is guaranteed strictly increasing
    eps0: float = 1.0
    #: whether D blows up at the upper end of the domain (m = 1)
    singular: bool = False

    def D(self, m):
        raise NotImplementedError

    def D_ext(self, m):
        raise NotImplementedError

    def primitive(self, m):
        raise NotImplementedError

    def clamp_breakpoints(self, eps):
        """Sorted interior points of (0, inf) where clip(D, eps, 1/eps) switches."""
        raise NotImplementedError

    def validate(self, n_sample=512):
        """Sampling checks of the structural requirements on D."""
        ms = np.linspace(0.0, self.eps0 * (1.0 - 1e-9), n_sample)
        vals = self.D_ext(ms)
        if abs(float(self.D_ext(np.array(0.0)))) > 0.0:
            raise DomainError(f"{self!r}: D(0) must vanish, got {vals[0]}")
        if np.any(np.diff(vals) <= 0):
            raise DomainError(f"{self!r}: D not strictly increasing on [0, eps0)")
        interior = np.linspace(1e-6, 1.0 - 1e-6, n_sample)
        if np.any(self.D_ext(interior) <= 0):
            raise DomainError(f"{self!r}: D must be positive on (0, 1)")
        if self.singular:
            if not self.D_ext(np.array(1.0 - 1e-6)) > 1e3 * self.D_ext(np.array(0.5)):
                raise DomainError(f"{self!r}: no singular growth toward m = 1")


@dataclass(frozen=True)
class PowerLawSingular(CoefficientLaw):
    """D(m) = d2 * m^a / (1-m)^b on [0, 1), the biofilm law."""

    d2: float
    a: float
    b: float
    eps0: float = 1.0
    singular: bool = True

    def __post_init__(self):
        if self.d2 <= 0 or self.a < 1 or self.b < 1:
            raise DomainError("PowerLawSingular requires d2 > 0 and a, b >= 1")

    def D(self, m):
        m, scalar = _asarray(m)
        if np.any(m < 0) or np.any(m >= 1):
            raise DomainError("singular law evaluated outside [0, 1)")
        out = self.d2 * m**self.a / (1.0 - m) ** self.b
        return float(out) if scalar else out

    def D_ext(self, m):
        m = np.asarray(m, dtype=float)
        mm = np.clip(m, 0.0, 1.0 - 1e-15)
        out = self.d2 * mm**self.a / (1.0 - mm) ** self.b
        return np.where(m >= 1.0, np.inf, out)

    def primitive(self, m):
        # integral_0^m rho^a (1-rho)^-b = m^(a+1)/(a+1) * 2F1(b, a+1; a+2; m)
        m = np.asarray(m, dtype=float)
        out = self.d2 * m ** (self.a + 1.0) / (self.a + 1.0)
        return out * special.hyp2f1(self.b, self.a + 1.0, self.a + 2.0, m)

    def clamp_breakpoints(self, eps):
        d = lambda m: float(self.D_ext(np.array(m)))
        m_lo = _bisect_increasing(d, eps, 0.0, 1.0 - 1e-15)
        m_hi = _bisect_increasing(d, 1.0 / eps, m_lo, 1.0 - 1e-15)
        return [m_lo, m_hi]


@dataclass(frozen=True)
class PowerLaw(CoefficientLaw):
    """D(m) = m^a, the porous-medium law (degenerate, not singular)."""

    a: float
    eps0: float = 1.0
    singular: bool = False

    def __post_init__(self):
        if self.a <= 0:
            raise DomainError("PowerLaw requires a > 0")

    def D(self, m):
        m, scalar = _asarray(m)
        if np.any(m < 0):
            raise DomainError("density below 0")
        out = m**self.a
        return float(out) if scalar else out

    def D_ext(self, m):
        m = np.asarray(m, dtype=float)
        return np.clip(m, 0.0, None) ** self.a

    def primitive(self, m):
        m = np.asarray(m, dtype=float)
        return m ** (self.a + 1.0) / (self.a + 1.0)

    def clamp_breakpoints(self, eps):
        return [eps ** (1.0 / self.a), eps ** (-1.0 / self.a)]


@dataclass(frozen=True)
class Tabulated(CoefficientLaw):
    """Law given by samples on a grid of [0, 1), interpolated monotone-cubically.

    The first sample must pin D(0) = 0.  Beyond the last sample the law is
    extended by the constant D(ms[-1]); strict monotonicity is only required
    up to eps0, matching the structural assumption on D.
    """

    ms: tuple
    ds: tuple
    eps0: float = field(default=0.0)
    singular: bool = False

    def __post_init__(self):
        ms = np.asarray(self.ms, dtype=float)
        ds = np.asarray(self.ds, dtype=float)
        if ms.ndim != 1 or ms.shape != ds.shape or ms.size < 3:
            raise DomainError("Tabulated law needs matching 1-d sample arrays (>= 3 points)")
        if ms[0] != 0.0 or ds[0] != 0.0 or ms[-1] >= 1.0:
            raise DomainError("Tabulated samples must start at (0, 0) and end below m = 1")
        if np.any(np.diff(ms) <= 0):
            raise DomainError("Tabulated grid must be strictly increasing")
        if np.any(ds[1:] <= 0):
            raise DomainError("Tabulated D must be positive away from 0")
        object.__setattr__(self, "ms", tuple(ms))
        object.__setattr__(self, "ds", tuple(ds))
        interp = PchipInterpolator(ms, ds, extrapolate=False)
        object.__setattr__(self, "_interp", interp)
        object.__setattr__(self, "_anti", interp.antiderivative())
        if self.eps0 == 0.0:
            # largest prefix of strictly increasing samples
            inc = np.nonzero(np.diff(ds) <= 0)[0]
            object.__setattr__(self, "eps0", float(ms[inc[0]] if inc.size else ms[-1]))

    @property
    def m_last(self):
        return self.ms[-1]

    @property
    def d_last(self):
        return self.ds[-1]

    def D(self, m):
        m, scalar = _asarray(m)
        if np.any(m < 0) or np.any(m >= 1):
            raise DomainError("tabulated law evaluated outside [0, 1)")
        out = self.D_ext(m)
        return float(out) if scalar else out

    def D_ext(self, m):
        m = np.asarray(m, dtype=float)
        mm = np.clip(m, 0.0, self.m_last)
        return np.asarray(self._interp(mm), dtype=float)

    def primitive(self, m):
        m = np.asarray(m, dtype=float)
        mm = np.clip(m, 0.0, self.m_last)
        base = np.asarray(self._anti(mm), dtype=float)
        return base + self.d_last * np.clip(m - self.m_last, 0.0, None)

    def affine_tail_start(self):
        return self.m_last

    def clamp_breakpoints(self, eps):
        knots = np.asarray(self.ms)
        fine = np.unique(np.concatenate([
            knots,
            np.linspace(0.0, self.m_last, 16 * len(knots)),
        ]))
        vals = self.D_ext(fine)
        breaks = []
        d = lambda m: float(self.D_ext(np.array(m)))
        for level in (eps, 1.0 / eps):
            sgn = np.sign(vals - level)
            for i in np.nonzero(np.diff(sgn) != 0)[0]:
                lo, hi = fine[i], fine[i + 1]
                if d(lo) > d(hi):
                    # decreasing through the level: reflect to an increasing solve
                    root = -_bisect_increasing(lambda x: d(-x), level, -hi, -lo)
                else:
                    root = _bisect_increasing(d, level, lo, hi)
                breaks.append(root)
        return sorted(breaks)


@dataclass(frozen=True)
class AffineLaw:
    """Nondegenerate substrate-diffusion law D(s) = c0 + c1 s (increasing)."""

    c0: float
    c1: float = 0.0
    eps0: float = np.inf
    singular: bool = False

    def __post_init__(self):
        if self.c0 < 0 or self.c1 < 0 or (self.c0 == 0 and self.c1 == 0):
            raise DomainError("AffineLaw requires c0, c1 >= 0, not both zero")

    def D(self, s):
        s, scalar = _asarray(s)
        out = self.c0 + self.c1 * s
        return float(out) if scalar else out

    def D_ext(self, s):
        s = np.asarray(s, dtype=float)
        return self.c0 + self.c1 * np.clip(s, 0.0, None)

    def primitive(self, s):
        s = np.asarray(s, dtype=float)
        return self.c0 * s + 0.5 * self.c1 * s * s

    def clamp_breakpoints(self, eps):
        breaks = []
        if self.c1 > 0:
            if self.c0 < eps:
                breaks.append((eps - self.c0) / self.c1)
            if self.c0 < 1.0 / eps:
                breaks.append((1.0 / eps - self.c0) / self.c1)
        return breaks

    def validate(self, n_sample=0):
        return None


def eval_D0(law, m):
    """Evaluate the biomass diffusion coefficient with domain checks."""
    return law.D(m)


# ---------------------------------------------------------------------------
# Kirchhoff transform and its regularization
# ---------------------------------------------------------------------------


class KirchhoffTransform:
    """Cached strictly increasing map m -> Phi(m) on [0, 1 - ETA_CAP].

    The cache is a graded grid refined geometrically toward m = 1; it brackets
    the Newton/bisection inversions.  Values come from the law's exact
    primitive.
    """

    def __init__(self, law, n_table=257):
        self.law = law
        w = np.geomspace(1.0, ETA_CAP, n_table)
        self.m_table = 1.0 - w
        self.m_table[0] = 0.0
        self.phi_table = np.asarray(law.primitive(self.m_table), dtype=float)
        if np.any(np.diff(self.phi_table) <= 0):
            raise DomainError("Kirchhoff table is not strictly increasing")

    @property
    def cap(self):
        return self.m_table[-1]

    @property
    def phi_cap(self):
        return self.phi_table[-1]

    def __call__(self, m):
        m, scalar = _asarray(m)
        if np.any(m < 0) or np.any(m >= 1):
            raise DomainError("Kirchhoff transform evaluated outside [0, 1)")
        out = np.asarray(self.law.primitive(m), dtype=float)
        return float(out) if scalar else out

    def inverse(self, u):
        u, scalar = _asarray(u)
        if np.any(u < -tol_inv(0.0)):
            raise RangeError("Kirchhoff inverse of a negative value")
        if np.any(u > self.phi_cap * (1.0 + 1e-12) + tol_inv(self.phi_cap)):
            raise RangeError(
                "value exceeds the Kirchhoff table range (density approaching 1)"
            )
        uu = np.clip(u, 0.0, self.phi_cap)
        idx = np.clip(np.searchsorted(self.phi_table, uu) - 1, 0, len(self.m_table) - 2)
        m = _invert_monotone(
            self.law.primitive,
            self.law.D_ext,
            self.m_table[idx],
            self.m_table[idx + 1],
            uu,
            x0=np.interp(uu, self.phi_table, self.m_table),
        )
        m = np.where(uu <= 0.0, 0.0, m)
        return float(m) if scalar else m


def kirchhoff(transform, m):
    return transform(m)


def kirchhoff_inv(transform, u):
    return transform.inverse(u)


class RegularizedTransform:
    """Piecewise-exact evaluation of Phi_eps and its inverse beta_eps.

    The clamped integrand clip(D, eps, 1/eps) switches branches at finitely
    many points; between them Phi_eps is either affine or an exact shift of
    the law's primitive.  The final piece and the extension to m < 0 are
    affine with slopes in [eps, 1/eps], so both maps are defined on all of R.
    """

    def __init__(self, law, eps):
        if not 0.0 < eps < 1.0:
            raise DomainError("regularization parameter must lie in (0, 1)")
        self.law = law
        self.eps = float(eps)

        interior = [b for b in law.clamp_breakpoints(eps) if b > 0.0]
        # beyond a constant-extension point the clamped integrand is affine;
        # splitting there keeps the unbounded final piece exactly affine
        tail_start = getattr(law, "affine_tail_start", lambda: None)()
        if tail_start is not None:
            interior.append(float(tail_start))
        interior = sorted(set(interior))
        breaks = [0.0] + interior
        # probe each piece to classify the clamp branch
        kinds = []
        domain_end = 1.0 if law.singular else np.inf
        for i, start in enumerate(breaks):
            end = breaks[i + 1] if i + 1 < len(breaks) else min(domain_end, start + 1.0)
            if end <= start:
                end = start * (1 + 1e-9) + 1e-12
            probe = 0.5 * (start + min(end, domain_end))
            d = float(law.D_ext(np.array(probe)))
            if d <= eps:
                kinds.append("lo")
            elif d >= 1.0 / eps:
                kinds.append("hi")
            else:
                kinds.append("mid")

        self.breaks = np.asarray(breaks)
        self.kinds = kinds
        self.prim = np.asarray(law.primitive(self.breaks), dtype=float)
        slopes = {"lo": eps, "hi": 1.0 / eps}
        cum = [0.0]
        for i in range(len(breaks) - 1):
            w = breaks[i + 1] - breaks[i]
            if kinds[i] == "mid":
                cum.append(cum[-1] + self.prim[i + 1] - self.prim[i])
            else:
                cum.append(cum[-1] + slopes[kinds[i]] * w)
        self.cum = np.asarray(cum)
        self.head_slope = float(np.clip(law.D_ext(np.array(0.0)), eps, 1.0 / eps))
        tail_kind = kinds[-1]
        self.tail_slope = slopes.get(tail_kind, None)
        if self.tail_slope is None:
            # constant-D tail (tabulated flat extension): exact affine slope
            self.tail_slope = float(
                np.clip(law.D_ext(np.array(self.breaks[-1] + 1.0)), eps, 1.0 / eps)
            )
            self.kinds[-1] = "tailmid"
        # inverse seed tables for the exact pieces: np.interp on (phi, m)
        # samples puts Newton within a bracket cell, so it converges in a
        # couple of steps even where the primitive has huge curvature
        self._seed = {}
        for i, kind in enumerate(self.kinds):
            if kind != "mid" or i + 1 >= len(self.breaks):
                continue
            ms = np.linspace(self.breaks[i], self.breaks[i + 1], 2049)
            us = self.cum[i] + np.asarray(law.primitive(ms), dtype=float) - self.prim[i]
            self._seed[i] = (ms, us)

    def __call__(self, m):
        return self.phi(m)

    def phi(self, m):
        m, scalar = _asarray(m)
        out = np.empty_like(m)
        neg = m < 0
        out[neg] = self.head_slope * m[neg]
        pos = ~neg
        if np.any(pos):
            mp = m[pos]
            idx = np.clip(np.searchsorted(self.breaks, mp, side="right") - 1, 0, None)
            vals = np.empty_like(mp)
            for i, kind in enumerate(self.kinds):
                sel = idx == i
                if not np.any(sel):
                    continue
                base = self.cum[i]
                if kind == "mid" or kind == "tailmid":
                    vals[sel] = base + self.law.primitive(mp[sel]) - self.prim[i]
                elif kind == "lo":
                    vals[sel] = base + self.eps * (mp[sel] - self.breaks[i])
                else:
                    vals[sel] = base + (mp[sel] - self.breaks[i]) / self.eps
            out[pos] = vals
        return float(out) if scalar else out

    def phi_prime(self, m):
        m, scalar = _asarray(m)
        out = np.clip(self.law.D_ext(m), self.eps, 1.0 / self.eps)
        out = np.where(m < 0, self.head_slope, out)
        last = self.breaks[-1]
        if self.kinds[-1] in ("hi", "tailmid"):
            out = np.where(m >= last, self.tail_slope, out)
        return float(out) if scalar else out

    def beta(self, u):
        """Inverse of phi; Newton on the monotone pieces, affine elsewhere."""
        u, scalar = _asarray(u)
        out = np.empty_like(u)
        neg = u < 0
        out[neg] = u[neg] / self.head_slope
        pos = ~neg
        if np.any(pos):
            up = u[pos]
            idx = np.clip(np.searchsorted(self.cum, up, side="right") - 1, 0, None)
            vals = np.empty_like(up)
            tail = idx >= len(self.kinds)
            if np.any(tail):
                vals[tail] = self.breaks[-1] + (up[tail] - self.cum[-1]) / self.tail_slope
            for i, kind in enumerate(self.kinds):
                sel = idx == i
                if not np.any(sel):
                    continue
                du = up[sel] - self.cum[i]
                if kind == "lo":
                    vals[sel] = self.breaks[i] + du / self.eps
                elif kind == "hi":
                    vals[sel] = self.breaks[i] + du * self.eps
                elif kind == "tailmid":
                    vals[sel] = self.breaks[i] + du / self.tail_slope
                else:
                    target = self.prim[i] + du
                    ms_tab, us_tab = self._seed[i]
                    cell = np.clip(np.searchsorted(us_tab, up[sel]) - 1, 0, len(ms_tab) - 2)
                    seed = np.interp(up[sel], us_tab, ms_tab)
                    vals[sel] = _invert_monotone(
                        self.law.primitive,
                        lambda x: np.clip(self.law.D_ext(x), self.eps, 1.0 / self.eps),
                        ms_tab[cell],
                        ms_tab[cell + 1],
                        target,
                        x0=seed,
                        max_iter=30,
                    )
            out[pos] = vals
        return float(out) if scalar else out

    def beta_prime(self, u):
        return 1.0 / self.phi_prime(self.beta(u))

    def beta_prime_of_m(self, m):
        """beta_eps'(phi_eps(m)) without the round trip."""
        return 1.0 / self.phi_prime(m)


def phi_eps(reg, m):
    return reg.phi(m)


def beta_eps(reg, u):
    return reg.beta(u)


# ---------------------------------------------------------------------------
# Kinetics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Kinetics:
    """Reaction terms of the coupled system.

    ``f0`` grows the biomass, ``fj[j]`` drives substrate j; all take
    ``(m, svec)`` with svec a sequence of k arrays.  Outside m in [0, 1] the
    functions are extended constantly in m (the clamp preserves the Lipschitz
    constant and the f_max bound).  ``C_L`` bounds every partial difference
    quotient; the implicit time step requires tau < 1/C_L.
    """

    f0: Callable
    fj: tuple = ()
    f_max: Callable = staticmethod(lambda m: np.zeros_like(np.asarray(m, dtype=float)))
    C_L: float = 0.0
    name: str = "custom"

    @property
    def k(self):
        return len(self.fj)

    @staticmethod
    def _clamp_m(m):
        return np.clip(np.asarray(m, dtype=float), 0.0, 1.0)

    def eval_f0(self, m, svec=()):
        return np.asarray(self.f0(self._clamp_m(m), svec), dtype=float)

    def eval_fj(self, j, m, svec):
        return np.asarray(self.fj[j](self._clamp_m(m), svec), dtype=float)

    def eval_f_max(self, m):
        return np.asarray(self.f_max(np.asarray(m, dtype=float)), dtype=float)


def monod(s, K=1.0):
    """Saturating uptake factor s/(K+s), clamped to s >= 0 for a global Lipschitz bound."""
    sp = np.clip(np.asarray(s, dtype=float), 0.0, None)
    return sp / (K + sp)


def zero_kinetics():
    return Kinetics(
        f0=lambda m, s: np.zeros_like(np.asarray(m, dtype=float)),
        fj=(),
        f_max=lambda m: np.zeros_like(np.asarray(m, dtype=float)),
        C_L=0.0,
        name="zero",
    )


def estimate_lipschitz(kin, m_range=(0.0, 1.0), s_ranges=None, n_grid=33, delta=2.0**-20):
    """Largest sampled difference quotient of f0 and all fj over a box.

    Used as C_L when a preset has no closed form.  Forward differences on a
    regular grid; delta is a power of two so exact slopes of affine kinetics
    are recovered to rounding.
    """
    if s_ranges is None:
        s_ranges = [(0.0, 1.0)] * kin.k
    axes = [np.linspace(*m_range, n_grid)] + [np.linspace(*r, n_grid) for r in s_ranges]
    mesh = np.meshgrid(*axes, indexing="ij")
    m = mesh[0]
    svec = mesh[1:]
    funcs = [kin.eval_f0] + [
        (lambda mm, ss, jj=j: kin.eval_fj(jj, mm, ss)) for j in range(kin.k)
    ]
    best = 0.0
    for f in funcs:
        base = f(m, svec)
        step = delta * np.maximum(1.0, np.abs(m))
        best = max(best, float(np.max(np.abs(f(m + step, svec) - base) / step)))
        for j in range(kin.k):
            sj = svec[j]
            step = delta * np.maximum(1.0, np.abs(sj))
            pert = [s if i != j else s + step for i, s in enumerate(svec)]
            best = max(best, float(np.max(np.abs(f(m, pert) - base) / step)))
    return best


# ---------------------------------------------------------------------------
# Substrate and problem descriptions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantD:
    """Substrate diffusion frozen to a constant."""

    value: float

    def __post_init__(self):
        if self.value <= 0:
            raise DomainError("constant substrate diffusion must be positive")


@dataclass(frozen=True)
class SubstrateD:
    """Diffusion depending on the substrate only, D_j = D_j(S_j).

    Eligible for the Kirchhoff-transformed (contraction) route; a degenerate
    law (D(0) = 0, increasing) selects the degenerate-substrate mode, which
    additionally requires nu > 0, v = 0 and nonnegative data.
    """

    law: object  # CoefficientLaw or AffineLaw

    @property
    def degenerate(self):
        return float(self.law.D_ext(np.array(0.0))) == 0.0


@dataclass(frozen=True)
class MixedD:
    """General bounded Lipschitz diffusion D_j(m, svec) in [d_min, d_max]."""

    func: Callable
    d_min: float
    d_max: float

    def __post_init__(self):
        if not 0 < self.d_min <= self.d_max:
            raise DomainError("MixedD requires 0 < d_min <= d_max")


@dataclass(frozen=True)
class SubstrateSpec:
    """One substrate: mobility, diffusion, flow, boundary and initial data.

    With nu = 0 the substrate is immobile (a per-cell ODE) and D, v, h are
    ignored.
    """

    nu: float
    D: object = None
    v: object = None
    h: float = 0.0
    S0: object = 0.0

    def __post_init__(self):
        if self.nu < 0:
            raise DomainError("mobility must be nonnegative")
        if self.nu > 0 and self.D is None:
            raise DomainError("mobile substrate needs a diffusion specification")


@dataclass(frozen=True)
class Preset:
    law: object
    kinetics: Kinetics
    substrate_defaults: dict = field(default_factory=dict)


def preset_eberl2001(k1=1.0, k2=0.1, k3=1.0, k4=0.5, d1=1.0, d2=1e-4, a=4.0, b=4.0,
                     n_substrates=1, k5=None):
    """Aqueous biofilm model: Monod growth, singular diffusion.

    With two substrates the growth rate is dual-Monod limited (both nutrients
    saturating) and the second substrate is consumed at rate k5 (default k1).
    """
    if n_substrates not in (1, 2):
        raise DomainError("preset supports one or two substrates")
    k5 = k1 if k5 is None else k5

    if n_substrates == 1:
        uptake = lambda s: monod(s[0], k4)
    else:
        uptake = lambda s: monod(s[0], k4) * monod(s[1], k4)

    def f0(m, s):
        return k3 * uptake(s) * m - k2 * m

    def f1(m, s):
        return -k1 * uptake(s) * m

    def f2(m, s):
        return -k5 * uptake(s) * m

    def f_max(m):
        return k3 * np.clip(m, 0.0, 1.0)

    rates = (k1,) if n_substrates == 1 else (k1, k5)
    C_L = max(k2, abs(k3 - k2), k3 / k4, *rates, *(r / k4 for r in rates))
    kin = Kinetics(
        f0=f0,
        fj=(f1,) if n_substrates == 1 else (f1, f2),
        f_max=f_max,
        C_L=C_L,
        name="eberl2001",
    )
    return Preset(
        law=PowerLawSingular(d2=d2, a=a, b=b),
        kinetics=kin,
        substrate_defaults={"D": ConstantD(d1)},
    )


def preset_cellulolytic2017(lam=0.0, d2=1.0, a=4.0, b=4.0):
    """Immobile-substrate cellulolytic model, nondimensional Monod kinetics."""

    def f0(m, s):
        return (monod(s[0], 1.0) - lam) * m

    def f1(m, s):
        return -monod(s[0], 1.0) * m

    def f_max(m):
        return max(1.0 - lam, 0.0) * np.clip(m, 0.0, 1.0)

    kin = Kinetics(f0=f0, fj=(f1,), f_max=f_max, C_L=max(1.0, lam), name="cellulolytic2017")
    return Preset(law=PowerLawSingular(d2=d2, a=a, b=b), kinetics=kin)


def preset_pme(a=2.0):
    """Porous-medium law with no reactions (benchmark preset)."""
    return Preset(law=PowerLaw(a=a), kinetics=zero_kinetics())


PRESETS = {
    "eberl2001": preset_eberl2001,
    "cellulolytic2017": preset_cellulolytic2017,
    "pme": preset_pme,
}


@dataclass(frozen=True)
class ProblemSpec:
    """Validated description of the full coupled system on a box."""

    grid: object  # StructuredGrid
    M0: np.ndarray
    kinetics: Kinetics
    law: object
    T: float
    substrates: tuple = ()
    h0: float | None = None

    def __post_init__(self):
        M0 = np.asarray(self.M0, dtype=float)
        if M0.shape != self.grid.shape:
            raise DomainError(f"M0 shape {M0.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "M0", M0)
        object.__setattr__(self, "substrates", tuple(self.substrates))
        m_lo, m_hi = float(M0.min()), float(M0.max())
        if m_lo < 0 or m_hi >= 1:
            raise DomainError("initial biomass must satisfy 0 <= M0 < 1")
        if self.T <= 0:
            raise DomainError("horizon T must be positive")
        if self.grid.gamma1:
            if self.h0 is None:
                raise DomainError("Dirichlet part of the boundary needs h0")
            if not (m_lo - 1e-12 <= self.h0 <= m_hi + 1e-12):
                raise DomainError(
                    f"h0 = {self.h0} outside the initial-data range [{m_lo}, {m_hi}]"
                )
        if self.kinetics.k != len(self.substrates):
            raise DomainError(
                f"kinetics defines {self.kinetics.k} substrates, spec lists {len(self.substrates)}"
            )
        s_lo, s_hi = self.S_bounds
        rng = np.random.default_rng(0)
        s_sample = [rng.uniform(min(s_lo, 0.0) - 1.0, s_hi + 1.0, 1000) for _ in self.substrates]
        if self.substrates:
            if np.any(self.kinetics.eval_f0(np.zeros(1000), s_sample) < -1e-12):
                raise DomainError("kinetics violate f0(0, s) >= 0")
        for j, sub in enumerate(self.substrates):
            S0 = self.substrate_initial(j)
            if sub.nu == 0:
                continue
            if not (s_lo - 1e-12 <= sub.h <= s_hi + 1e-12):
                raise DomainError(f"substrate {j}: boundary value outside [{s_lo}, {s_hi}]")
            if isinstance(sub.D, MixedD):
                mm = rng.uniform(0.0, 1.0, 400)
                ss = [rng.uniform(s_lo, s_hi, 400) for _ in self.substrates]
                vals = np.asarray(sub.D.func(mm, ss), dtype=float)
                if np.any(vals < sub.D.d_min - 1e-12) or np.any(vals > sub.D.d_max + 1e-12):
                    raise DomainError(f"substrate {j}: D(m, s) leaves [d_min, d_max]")
            if isinstance(sub.D, SubstrateD) and sub.D.degenerate:
                # degenerate-substrate route: no flow, nonnegative data
                if sub.v is not None and np.any(np.asarray(sub.v) != 0):
                    raise DomainError(f"substrate {j}: degenerate D(S) requires v = 0")
                if float(np.min(S0)) < 0 or sub.h < 0:
                    raise DomainError(f"substrate {j}: degenerate D(S) requires nonnegative data")

    @property
    def k(self):
        return len(self.substrates)

    @property
    def M_bounds(self):
        return float(self.M0.min()), float(self.M0.max())

    @property
    def S_bounds(self):
        if not self.substrates:
            return 0.0, 0.0
        los, his = [], []
        for j, _ in enumerate(self.substrates):
            S0 = self.substrate_initial(j)
            los.append(float(np.min(S0)))
            his.append(float(np.max(S0)))
        return min(los), max(his)

    def substrate_initial(self, j):
        S0 = self.substrates[j].S0
        arr = np.asarray(S0, dtype=float)
        if arr.ndim == 0:
            return np.full(self.grid.shape, float(arr))
        if arr.shape != self.grid.shape:
            raise DomainError(f"substrate {j}: S0 shape mismatch")
        return arr.copy()
