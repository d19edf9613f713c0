"""Anisotropic dilation geometry.

An expansive matrix A (all eigenvalue moduli > 1) generates a one-parameter
family of ellipsoidal balls B_k = A^k Delta, where Delta = {x: x'Px < c} is
an open ellipsoid of volume one chosen so that Delta subset r*Delta subset
A*Delta for an expansion factor r > 1.  The step quasi-norm rho takes the
value b^k on B_{k+1} \\ B_k, with b = |det A|, and scales exactly by b under
A.  Everything downstream (masks, tents, maximal averages) rides on this
family.
"""

from dataclasses import dataclass
from math import gamma, pi

import numpy as np

from .errors import NotExpansive, ScaleOverflow, SeriesDivergence

DEFAULT_LEVEL_CAP = 40

_SERIES_TOL = 1e-14
_SERIES_MAX_TERMS = 20000


def unit_ball_volume(n):
    """Volume of the Euclidean unit ball in R^n."""
    return pi ** (n / 2.0) / gamma(n / 2.0 + 1.0)


@dataclass(frozen=True)
class DilatedBall:
    """A translate center + B_k of the canonical ball at scale k."""

    center: np.ndarray
    scale: int

    def __post_init__(self):
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))

    def key(self):
        """Hashable identity used by norm caches."""
        return (int(self.scale), self.center.tobytes())


class Dilation:
    """An expansive matrix together with its derived ball geometry.

    Immutable after construction; all methods are pure, so instances can be
    shared freely across threads.
    """

    def __init__(self, matrix, level_cap=DEFAULT_LEVEL_CAP, h_sample_pairs=4000, h_seed=2718):
        A = np.asarray(matrix, dtype=float)
        if A.ndim == 0:
            A = A.reshape(1, 1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("dilation matrix must be square")
        if not np.all(np.isfinite(A)):
            raise ValueError("dilation matrix must have finite entries")

        self.matrix = A
        self.n = A.shape[0]
        eigvals = np.linalg.eigvals(A)
        moduli = np.abs(eigvals)
        if moduli.min() <= 1.0:
            raise NotExpansive(f"min eigenvalue modulus {moduli.min():.6g} <= 1")
        self.b = float(abs(np.linalg.det(A)))

        self.lambda_minus, self.lambda_plus = self._eigen_bounds(A, moduli)
        self.level_cap = int(level_cap)

        # Expansion factor: r = s with A'PA - s^2 P = A'A >= 0 by the series below.
        s = np.sqrt(self.lambda_minus)
        s = min(max(s, 1.05), 0.999 * self.lambda_minus)
        self.r = float(s)

        self.shape = self._lyapunov_shape(A, self.r)
        # |Delta| = c^(n/2) V_n / sqrt(det P) = 1.
        det_p = float(np.linalg.det(self.shape))
        self.level_c = (np.sqrt(det_p) / unit_ball_volume(self.n)) ** (2.0 / self.n)

        gram = A.T @ self.shape @ A - self.r**2 * self.shape
        if np.linalg.eigvalsh(0.5 * (gram + gram.T)).min() < -1e-9 * np.linalg.norm(self.shape):
            raise SeriesDivergence("shape matrix violates the dilation inequality")
        vol = self.level_c ** (self.n / 2.0) * unit_ball_volume(self.n) / np.sqrt(det_p)
        assert abs(vol - 1.0) <= 1e-10

        omega = 1
        while self.r**omega < 2.0:
            omega += 1
        self.omega = omega

        self._chol = np.linalg.cholesky(self.shape)  # P = L L'
        self._powers = self._build_powers(A, self.level_cap + self.omega + 2)
        self._bpow = self._build_bpow_chain(self.b, self.level_cap + self.omega + 2)
        self._form_maps = {}

        self.quasi_triangle_H = self.estimate_quasi_triangle(pairs=h_sample_pairs, seed=h_seed)

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _eigen_bounds(A, moduli):
        lo, hi = float(moduli.min()), float(moduli.max())
        # Non-diagonalizable matrices need strict inequalities; nudge by 0.1%.
        _, vecs = np.linalg.eig(A)
        diagonalizable = np.linalg.cond(vecs) < 1e8
        if diagonalizable:
            return lo, hi
        lo_adj = max(0.999 * lo, 1.0 + 0.5 * (lo - 1.0))
        return lo_adj, 1.001 * hi

    @staticmethod
    def _lyapunov_shape(A, s):
        n = A.shape[0]
        a_inv = np.linalg.inv(A)
        term = np.eye(n)
        total = np.zeros((n, n))
        factor = s * s
        prev_norm = np.inf
        for k in range(_SERIES_MAX_TERMS):
            total += term
            term = factor * (a_inv.T @ term @ a_inv)
            norm = np.linalg.norm(term)
            if norm < _SERIES_TOL:
                break
            if k > 50 and norm > prev_norm * 1.0000001:
                raise SeriesDivergence("Lyapunov series terms stopped decaying")
            prev_norm = norm
        else:
            raise SeriesDivergence("Lyapunov series did not reach tolerance")
        return 0.5 * (total + total.T)

    @staticmethod
    def _build_powers(A, cap):
        powers = {0: np.eye(A.shape[0])}
        a_inv = np.linalg.inv(A)
        for k in range(1, cap + 1):
            powers[k] = A @ powers[k - 1]
            powers[-k] = a_inv @ powers[-(k - 1)]
        return powers

    @staticmethod
    def _build_bpow_chain(b, cap):
        # Built upward so that bpow[k+1] == fl(b * bpow[k]) exactly at every
        # level; this is what makes rho(Ax) == b*rho(x) hold with zero float
        # error.  Values drift from b**k by at most ~1e-15 relative.
        vals = np.empty(2 * cap + 1)
        vals[0] = b ** float(-cap)
        for i in range(2 * cap):
            vals[i + 1] = b * vals[i]
        return {k: float(vals[k + cap]) for k in range(-cap, cap + 1)}

    # -- basic queries ---------------------------------------------------------

    def power(self, k):
        """Matrix power A^k from the consistent cached chain."""
        try:
            return self._powers[k]
        except KeyError:
            raise ScaleOverflow(f"scale {k} exceeds level cap {self.level_cap}") from None

    def bpow(self, k):
        """b^k from the homogeneity-exact chain."""
        try:
            return self._bpow[k]
        except KeyError:
            raise ScaleOverflow(f"scale {k} exceeds level cap {self.level_cap}") from None

    def _form_map(self, k):
        # Rows of L' A^-k; the quadratic form of B_k is |form_map(k) @ x|^2.
        if k not in self._form_maps:
            self._form_maps[k] = self._chol.T @ self.power(-k)
        return self._form_maps[k]

    def form_values(self, points, scale):
        """Quadratic-form values of points against the ball B_scale."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = pts @ self._form_map(scale).T
        return np.einsum("ij,ij->i", w, w)

    def ball(self, center, scale):
        return DilatedBall(np.asarray(center, dtype=float), int(scale))

    def ball_volume(self, ball):
        """|center + B_k| = b^k, analytic."""
        return self.b ** float(ball.scale)

    def ball_contains(self, ball, x):
        """Strict membership x in center + B_k (boundaries are null sets)."""
        pts = np.atleast_2d(np.asarray(x, dtype=float)) - ball.center
        vals = self.form_values(pts, ball.scale)
        out = vals < self.level_c
        return bool(out[0]) if np.isscalar(x) or np.asarray(x).ndim <= 1 else out

    def ball_contains_many(self, ball, points):
        pts = np.asarray(points, dtype=float) - ball.center
        return self.form_values(pts, ball.scale) < self.level_c

    def ball_bounding_halfwidths(self, scale):
        """Per-axis half-widths of the bounding box of B_scale."""
        q_inv = np.linalg.inv(self._form_map(scale).T @ self._form_map(scale))
        return np.sqrt(self.level_c * np.diag(q_inv))

    # -- step quasi-norm -------------------------------------------------------

    def step_levels(self, points):
        """Integer levels k with x in B_{k+1} \\ B_k, vectorized.

        Returns (levels, zero_mask); levels are undefined where zero_mask is
        set (the origin has rho = 0 by convention).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        npts = pts.shape[0]
        zero = np.all(pts == 0.0, axis=1)
        levels = np.zeros(npts, dtype=int)
        undecided = ~zero
        cap = self.level_cap
        if undecided.any():
            idx = np.nonzero(undecided)[0]
            too_deep = self.form_values(pts[idx], -cap) < self.level_c
            if too_deep.any():
                raise ScaleOverflow("point inside B_k at the bottom of the level cap")
        m = -cap + 1
        while m <= cap and undecided.any():
            idx = np.nonzero(undecided)[0]
            inside = self.form_values(pts[idx], m) < self.level_c
            hit = idx[inside]
            levels[hit] = m - 1
            undecided[hit] = False
            m += 1
        if undecided.any():
            raise ScaleOverflow("point outside B_k for every k within the level cap")
        return levels, zero

    def step_quasi_norm(self, x):
        """rho(x): 0 at the origin, else b^k on B_{k+1} \\ B_k."""
        arr = np.asarray(x, dtype=float)
        scalar = arr.ndim <= 1
        levels, zero = self.step_levels(arr)
        vals = np.array([0.0 if z else self.bpow(int(k)) for k, z in zip(levels, zero)])
        return float(vals[0]) if scalar else vals

    def step_quasi_norm_many(self, points):
        levels, zero = self.step_levels(points)
        out = np.empty(len(levels))
        for k in np.unique(levels):
            out[levels == k] = self.bpow(int(k))
        out[zero] = 0.0
        return out

    # -- containment of dilated balls ------------------------------------------

    def containment_max_values(self, inner_scale, outer_scale, offsets):
        """Max of the outer ball's quadratic form over closures of inner balls.

        offsets holds inner-center minus outer-center, one row per query; the
        result is comparable against level_c: value <= c iff the closed inner
        ball sits inside the closed outer ball.
        """
        offs = np.atleast_2d(np.asarray(offsets, dtype=float))
        m = inner_scale - outer_scale
        c_map = self._form_map(0)  # L'
        e = offs @ (c_map @ self.power(-outer_scale)).T
        mat = c_map @ self.power(m) @ np.linalg.inv(c_map)
        lam, vecs = np.linalg.eigh(mat.T @ mat)
        ghat = e @ (mat @ vecs)
        return _max_shifted_quadratic(lam, ghat, np.sqrt(self.level_c)) + np.einsum(
            "ij,ij->i", e, e
        )

    def ball_containment(self, inner, outer):
        """Exact test: closure(inner) inside closure(outer)."""
        vals = self.containment_max_values(
            inner.scale, outer.scale, (inner.center - outer.center)[None, :]
        )
        return bool(vals[0] <= self.level_c * (1.0 + 1e-9))

    # -- quasi-triangle estimate -----------------------------------------------

    def estimate_quasi_triangle(self, pairs=4000, seed=2718):
        """Empirical H = max rho(x+y) / (rho(x)+rho(y)) over sampled pairs."""
        rng = np.random.default_rng(seed)
        half = self.ball_bounding_halfwidths(min(3, self.level_cap))
        x = rng.uniform(-1.0, 1.0, size=(pairs, self.n)) * half
        y = rng.uniform(-1.0, 1.0, size=(pairs, self.n)) * half
        rx = self.step_quasi_norm_many(x)
        ry = self.step_quasi_norm_many(y)
        rs = self.step_quasi_norm_many(x + y)
        denom = rx + ry
        ok = denom > 0
        return float(np.max(rs[ok] / denom[ok]))


def _max_shifted_quadratic(lam, ghat, radius):
    """Vectorized max of w'diag(lam)w + 2 ghat.w over ||w|| <= radius.

    lam is ascending (from eigh); ghat has one row per query.  Solves the
    secular equation sum ghat_i^2/(nu-lam_i)^2 = radius^2 on nu > lam_max by
    bisection, with the degenerate top-component case handled at nu = lam_max.
    """
    lam = np.asarray(lam, dtype=float)
    ghat = np.atleast_2d(np.asarray(ghat, dtype=float))
    lmax = lam[-1]
    scale = max(abs(lmax), 1e-280)
    g2 = ghat * ghat
    total = g2.sum(axis=1)
    rr = radius * radius

    def w_norm2(nu, rows):
        denom = nu[:, None] - lam[None, :]
        denom = np.maximum(denom, 1e-300)
        return (g2[rows] / (denom * denom)).sum(axis=1)

    # The secular root lives in (lmax, lmax + |ghat|/radius]; if the norm is
    # already below radius just above lmax, the maximizer pads the top
    # eigenspace and nu = lmax.
    probe = lmax + 1e-13 * scale
    nu = np.full(ghat.shape[0], lmax)
    all_rows = np.arange(ghat.shape[0])
    bis = w_norm2(np.full_like(total, probe), all_rows) > rr
    if bis.any():
        rows = np.nonzero(bis)[0]
        a_lo = np.full(rows.shape, probe)
        a_hi = lmax + np.sqrt(total[rows]) / radius
        a_hi = np.maximum(a_hi, a_lo)
        for _ in range(90):
            mid = 0.5 * (a_lo + a_hi)
            grow = w_norm2(mid, rows) > rr
            a_lo = np.where(grow, mid, a_lo)
            a_hi = np.where(grow, a_hi, mid)
        nu[rows] = a_hi

    denom = nu[:, None] - lam[None, :]
    safe = denom > 1e-250
    contrib = np.where(safe, g2 / np.where(safe, denom, 1.0), 0.0)
    return nu * rr + contrib.sum(axis=1)


def new_dilation(matrix, level_cap=DEFAULT_LEVEL_CAP):
    """Validate an expansive matrix and build its ball geometry."""
    return Dilation(matrix, level_cap=level_cap)
