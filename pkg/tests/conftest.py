import numpy as np
import pytest


def adaptive_simpson(f, a, b, tol=1e-12, depth=40):
    """Independent quadrature oracle for the transform tests."""

    def simpson(lo, hi):
        mid = 0.5 * (lo + hi)
        return (hi - lo) / 6.0 * (f(lo) + 4.0 * f(mid) + f(hi)), mid

    def recurse(lo, hi, whole, d):
        mid = 0.5 * (lo + hi)
        left, _ = simpson(lo, mid)
        right, _ = simpson(mid, hi)
        if d <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(lo, mid, left, d - 1) + recurse(mid, hi, right, d - 1)

    if a == b:
        return 0.0
    whole, _ = simpson(a, b)
    return recurse(a, b, whole, depth)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
