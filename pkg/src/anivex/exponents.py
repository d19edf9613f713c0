"""Variable exponents p(.), the modular, and the Luxemburg quasi-norm.

The Luxemburg norm inf{lam > 0: modular(f/lam) <= 1} is computed by
exponential bracketing plus bisection; on a finite grid the modular is
continuous and strictly decreasing in lam wherever it is positive, so the
bracket always closes.  Log-Holder checking is diagnostic only and never
gates any other operation.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, NonFinite, NotConjugable
from .grid import GridFunction, ball_lattice_mask

BISECTION_RTOL = 1e-12
BISECTION_MAX_ITER = 200


@dataclass
class LogHolderReport:
    c_log: float
    c_infinity: float | None
    shell_constants: dict
    unstable: bool
    sample_pairs: int
    truncated_domain: bool = True


class Exponent:
    """A variable exponent sampled on a grid.

    p_infinity is user-declared (the asymptotic condition is invisible on a
    bounded box); underline_p = min(p_minus, 1).
    """

    def __init__(self, values, p_infinity=None):
        if not isinstance(values, GridFunction):
            raise TypeError("values must be a GridFunction")
        arr = np.asarray(values.values, dtype=float)
        if np.any(arr <= 0.0):
            raise ValueError("exponent values must be strictly positive")
        self.values = values
        self.grid = values.grid
        self.p_minus = float(arr.min())
        self.p_plus = float(arr.max())
        self.p_infinity = None if p_infinity is None else float(p_infinity)
        self.underline_p = min(self.p_minus, 1.0)
        self.log_holder_report = None
        self._indicator_cache = {}

    @property
    def is_constant(self):
        return self.p_minus == self.p_plus


def constant_exponent(grid, q, p_infinity=None):
    if p_infinity is None:
        p_infinity = q
    return Exponent(GridFunction(grid, np.full(grid.resolution, float(q))), p_infinity)


def exponent_from_callable(grid, fn, p_infinity=None):
    from .grid import sample

    return Exponent(sample(grid, fn), p_infinity)


def modular(f, p):
    """integral of |f(x)|^p(x) over the box."""
    if f.grid.key() != p.grid.key():
        raise ValueError("function and exponent live on different grids")
    a = np.abs(f.values)
    with np.errstate(over="ignore"):
        return float(np.sum(a**p.values.values) * f.grid.cell_volume)


def _modular_of_scaled(abs_vals, p_vals, cell_volume, lam):
    with np.errstate(over="ignore", divide="ignore"):
        return float(np.sum((abs_vals / lam) ** p_vals) * cell_volume)


def luxemburg_norm(f, p):
    """inf{lam > 0: modular(f/lam) <= 1}; 0 iff f vanishes on the lattice.

    Returns the upper end of the final bracket, so the unit-modular property
    modular(f/norm) <= 1 holds by construction.
    """
    if f.grid.key() != p.grid.key():
        raise ValueError("function and exponent live on different grids")
    a = np.abs(np.asarray(f.values))
    if not np.any(a > 0.0):
        return 0.0
    pv = p.values.values
    cv = f.grid.cell_volume

    lam = float(np.max(a))
    if lam <= 0.0 or not np.isfinite(lam):
        raise NonFinite("no finite bracket start")
    val = _modular_of_scaled(a, pv, cv, lam)
    if val <= 1.0:
        hi = lam
        lo = lam
        for _ in range(2000):
            lo /= 2.0
            if _modular_of_scaled(a, pv, cv, lo) > 1.0:
                break
            hi = lo
        else:
            return 0.0
    else:
        lo = lam
        hi = lam
        for _ in range(2000):
            hi *= 2.0
            if _modular_of_scaled(a, pv, cv, hi) <= 1.0:
                break
            lo = hi
        else:
            raise NonFinite("modular stayed above one for every bracket")

    for _ in range(BISECTION_MAX_ITER):
        if hi - lo <= BISECTION_RTOL * hi:
            break
        mid = 0.5 * (lo + hi)
        if _modular_of_scaled(a, pv, cv, mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return hi


def indicator_norm(d, ball, p):
    """Luxemburg norm of the ball indicator, cached per (ball, exponent)."""
    key = ball.key()
    cache = p._indicator_cache
    if key not in cache:
        mask = ball_lattice_mask(p.grid, d, ball)
        if not mask.any():
            raise EmptyMask(f"ball at scale {ball.scale} misses every lattice point")
        cache[key] = luxemburg_norm(GridFunction(p.grid, mask.astype(float)), p)
    return cache[key]


def conjugate(p):
    """Pointwise conjugate p' = p/(p-1); requires p_minus > 1."""
    if p.p_minus <= 1.0:
        raise NotConjugable(f"p_minus = {p.p_minus} <= 1")
    vals = p.values.values
    conj_vals = vals / (vals - 1.0)
    p_inf = None
    if p.p_infinity is not None and p.p_infinity > 1.0:
        p_inf = p.p_infinity / (p.p_infinity - 1.0)
    return Exponent(GridFunction(p.grid, conj_vals), p_inf)


def check_log_holder(p, d, sample_pairs=4000, seed=20):
    """Smallest observed constants in the two log-Holder inequalities.

    Shell constants track pairs at lattice separations of 1, 4, 16, and 64
    cells; a jump discontinuity shows up as constants that keep growing as
    the separation shrinks, which sets the unstable flag.  Everything here is
    a truncated-domain diagnostic, never an assertion about the exponent.
    """
    rng = np.random.default_rng(seed)
    pts = p.grid.points()
    vals = p.values.values.ravel()
    npts = pts.shape[0]

    i = rng.integers(0, npts, size=sample_pairs)
    j = rng.integers(0, npts, size=sample_pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    rho = d.step_quasi_norm_many(pts[i] - pts[j])
    c_log = float(np.max(np.abs(vals[i] - vals[j]) * np.log(np.e + 1.0 / rho)))

    # Shell constants scan every axis-aligned pair at fixed lattice offsets,
    # so even a single straddling pair at a jump is seen.
    shells = {}
    grid_vals = p.values.values
    res = np.array(p.grid.resolution)
    for cells in (1, 4, 16, 64):
        if np.any(cells >= res):
            continue
        worst = 0.0
        for axis in range(p.grid.n):
            sl_lo = [slice(None)] * p.grid.n
            sl_hi = [slice(None)] * p.grid.n
            sl_lo[axis] = slice(None, -cells)
            sl_hi[axis] = slice(cells, None)
            diff = np.max(np.abs(grid_vals[tuple(sl_hi)] - grid_vals[tuple(sl_lo)]))
            offset = np.zeros(p.grid.n)
            offset[axis] = cells * p.grid.spacing[axis]
            rho_off = d.step_quasi_norm_many(offset[None, :])[0]
            worst = max(worst, diff * np.log(np.e + 1.0 / rho_off))
        shells[cells] = float(worst)

    keys = sorted(shells)
    unstable = (
        len(keys) >= 3
        and shells[keys[0]] > 1.15 * shells[keys[1]]
        and shells[keys[1]] > 1.15 * shells[keys[2]]
    )

    c_inf = None
    if p.p_infinity is not None:
        rho_x = d.step_quasi_norm_many(pts)
        c_inf = float(np.max(np.abs(vals - p.p_infinity) * np.log(np.e + rho_x)))

    report = LogHolderReport(
        c_log=c_log,
        c_infinity=c_inf,
        shell_constants=shells,
        unstable=bool(unstable),
        sample_pairs=int(sample_pairs),
    )
    p.log_holder_report = report
    return report
