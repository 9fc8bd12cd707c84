"""One-dimensional root and maximum finders.

All routines are deterministic and dependency free.  Root finders work on
functions that are *decreasing* across the bracket (``f(lo) >= 0 >= f(hi)``),
which is the shape of every stationarity condition in the solvers.
"""

import math
from dataclasses import dataclass
from typing import Callable

from .errors import BracketError, InvalidInputError, NonConvergenceError, UnboundedError

STATIONARITY_TOL = 1e-10
GOLDEN_TOL = 1e-8

_INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class BracketedRootProblem:
    f: Callable[[float], float]
    lo: float
    hi: float
    tol_x: float = STATIONARITY_TOL
    max_iter: int = 400

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidInputError(f"empty bracket [{self.lo}, {self.hi}]")
        if not self.tol_x > 0:
            raise InvalidInputError("tol_x must be positive")


def expand_upper_bracket(f, lo, hi0):
    """Double ``hi0`` until ``f(hi) < 0``.

    Raises
    ------
    UnboundedError
        If no sign change appears before ``2**64 * hi0``.
    """
    if f(lo) < 0:
        raise BracketError(f"f(lo) < 0 at lo={lo}")
    if not hi0 > 0:
        raise InvalidInputError("hi0 must be positive")
    hi = hi0
    cap = hi0 * 2.0 ** 64
    while f(hi) >= 0:
        hi *= 2.0
        if hi > cap:
            raise UnboundedError(f"no sign change below {cap:g}")
    return hi


def bisect_decreasing_root(p):
    """Root of a decreasing function by plain bisection.

    The upper end is expanded by doubling if ``f(hi) > 0``.  Returns ``x``
    with ``|x - x*| <= tol_x``.
    """
    f, lo, hi = p.f, p.lo, p.hi
    flo = f(lo)
    if flo < 0:
        raise BracketError(f"f(lo) = {flo} < 0 at lo = {lo}")
    if flo == 0:
        return lo
    fhi = f(hi)
    if fhi > 0:
        hi = expand_upper_bracket(f, lo, hi if hi > 0 else 1.0)
    elif fhi == 0:
        return hi
    for _ in range(p.max_iter):
        if hi - lo <= 2 * p.tol_x:
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return mid
        fm = f(mid)
        if fm > 0:
            lo = mid
        elif fm < 0:
            hi = mid
        else:
            return mid
    raise NonConvergenceError(f"bisection did not reach tol {p.tol_x} in {p.max_iter} steps",
                              best=0.5 * (lo + hi))


def newton_decreasing_root(f, df, lo, hi, tol_x=STATIONARITY_TOL, x0=None, max_iter=200):
    """Safeguarded Newton iteration for a decreasing ``f`` on ``[lo, hi]``.

    Steps leaving the current bracket are replaced by bisection, so the
    method never does worse than bisection.  ``lo`` may be an open end
    (``f`` singular there) as long as ``f`` is positive just inside.
    """
    if not lo < hi:
        raise InvalidInputError(f"empty bracket [{lo}, {hi}]")
    x = 0.5 * (lo + hi) if x0 is None or not lo < x0 < hi else x0
    for _ in range(max_iter):
        fx = f(x)
        if fx == 0:
            return x
        if fx > 0:
            lo = x
        else:
            hi = x
        d = df(x)
        xn = x - fx / d if d < 0 and math.isfinite(d) else math.nan
        if not lo < xn < hi:
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= tol_x or hi - lo <= tol_x or xn == x:
            return xn
        x = xn
    raise NonConvergenceError(f"Newton iteration did not converge in {max_iter} steps", best=x)


def maximize_concave_1d(g, lo, hi, tol_x=GOLDEN_TOL):
    """Golden-section search for the maximum of a concave ``g`` on ``[lo, hi]``.

    The endpoints are compared against the interior estimate, so boundary
    maxima are returned exactly.
    """
    if lo > hi:
        raise InvalidInputError(f"lo = {lo} > hi = {hi}")
    if hi - lo <= tol_x:
        x = 0.5 * (lo + hi)
        return x, g(x)
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    gc, gd = g(c), g(d)
    while b - a > tol_x:
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - _INV_PHI * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _INV_PHI * (b - a)
            gd = g(d)
    x = 0.5 * (a + b)
    best = (g(x), x)
    for edge in (lo, hi):
        ge = g(edge)
        if ge > best[0]:
            best = (ge, edge)
    return best[1], best[0]
