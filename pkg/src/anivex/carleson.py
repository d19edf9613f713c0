"""Carleson functionals on scale-space densities, analyzing functions, and
the reproducing-pair checks tying pairings to tent masses.

The Carleson value of a density mu is the supremum over weighted ball
configurations of the aggregation quotient built from square roots of tent
masses; as with the oscillation norms, the search reports a certified lower
bound.  Analyzing functions are derivative tensors of a smooth bump, so
their moments vanish analytically, and their Fourier transforms stay
bounded below on the step-norm annulus by construction (measured, with one
retry at a narrower width).
"""

from dataclasses import dataclass

import numpy as np

from .errors import FourierBoundFailure, ZeroDenominator
from .exponents import indicator_norm, luxemburg_norm
from .grid import GridFunction, convolve_scaled, integrate, kernel_grid, sample
from .search import default_scale_window, supremum_search
from .tent import ScaleFunction, lusin_area, tent_atomic_decomposition

__all__ = [
    "tent_mass",
    "carleson_functional",
    "carleson_prefix_check",
    "build_analyzing_function",
    "carleson_from_function",
    "carleson_duality_check",
    "band_limited_pair",
]


def tent_mass(mu, d, ball):
    """integral of mu over the tent of the ball (counting x Lebesgue)."""
    grid = mu.grid
    pts = grid.points()
    total = 0.0
    ball_mask = d.form_values(pts - ball.center, ball.scale) < d.level_c
    for ell in mu.scales():
        if d.bpow(ell) > d.bpow(ball.scale) * (1.0 + 1e-12):
            continue
        layer = mu.layer(ell).ravel()
        candidates = np.nonzero(ball_mask & (layer != 0.0))[0]
        if len(candidates) == 0:
            continue
        offs = pts[candidates] - ball.center
        inside = d.containment_max_values(ell, ball.scale, offs) <= d.level_c * (1.0 + 1e-9)
        total += float(layer[candidates[inside]].sum())
    return total * grid.cell_volume


def carleson_functional(mu, p, d, eta=None, budget=200, seed=0, scale_window=None, max_balls=8):
    """Certified lower bound of the Carleson configuration supremum for a
    nonnegative density mu."""
    if np.any(mu.values < 0.0):
        raise ValueError("carleson density must be nonnegative")
    if eta is None:
        eta = p.underline_p
    if scale_window is None:
        scale_window = default_scale_window(d, mu.grid, min_points=1)

    from .campanato import aggregate_norm

    cache = {}

    def per_ball(ball):
        key = ball.key()
        if key not in cache:
            vol = d.ball_volume(ball)
            cache[key] = np.sqrt(vol) / indicator_norm(d, ball, p) * np.sqrt(
                tent_mass(mu, d, ball)
            )
        return cache[key]

    def config_value(config):
        denom = aggregate_norm(config, p, eta, d)
        if denom == 0.0:
            raise ZeroDenominator("aggregate norm vanished")
        total = sum(w * per_ball(ball) for ball, w in config.entries if w > 0.0)
        return total / denom

    return supremum_search(config_value, d, mu.grid, budget, seed, scale_window, max_balls)


def carleson_prefix_check(mu, entries, p, d, eta=None, tol=1e-6, tail_window=20):
    """Finite-vs-countable agreement along a truncated configuration family."""
    from .campanato import aggregate_norm
    from .grid import ball_lattice_mask

    if eta is None:
        eta = p.underline_p
    acc = np.zeros(p.grid.resolution)
    numer = 0.0
    values = []
    for ball, weight in entries:
        if weight > 0.0:
            mask = ball_lattice_mask(p.grid, d, ball)
            acc[mask] += (weight / indicator_norm(d, ball, p)) ** eta
            vol = d.ball_volume(ball)
            numer += (
                weight * np.sqrt(vol) / indicator_norm(d, ball, p) * np.sqrt(tent_mass(mu, d, ball))
            )
        if numer == 0.0:
            values.append(0.0)
            continue
        denom = luxemburg_norm(GridFunction(p.grid, acc ** (1.0 / eta)), p)
        values.append(numer / denom if denom > 0 else np.inf)
    values = np.array(values)
    tail = float(np.max(np.abs(values[-tail_window:] - values[-1]))) if len(values) else 0.0
    return values, bool(tail < tol), tail


# -- analyzing functions --------------------------------------------------------

_BUMP_DERIVATIVES = {}


def _bump_derivative(order):
    """order-th derivative of exp(-1/(1-u^2)) on (-1,1), zero outside."""
    if order not in _BUMP_DERIVATIVES:
        import sympy as sp

        u = sp.symbols("u")
        expr = sp.diff(sp.exp(-1 / (1 - u**2)), u, order)
        raw = sp.lambdify(u, expr, "numpy")

        def fn(x, raw=raw):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            inside = np.abs(x) < 1.0 - 1e-9
            with np.errstate(over="ignore", invalid="ignore"):
                vals = raw(x[inside])
            out[inside] = np.nan_to_num(vals, nan=0.0, posinf=0.0, neginf=0.0)
            return out

        _BUMP_DERIVATIVES[order] = fn
    return _BUMP_DERIVATIVES[order]


@dataclass
class AnalyzingReport:
    moments: np.ndarray
    fourier_lower_bound: float
    annulus: tuple
    width: float


def _fourier_at(phi, freqs):
    """Semidiscrete transform of a kernel grid function at given frequencies."""
    pts = phi.grid.points()
    vals = phi.values.ravel()
    phase = np.exp(-2j * np.pi * (pts @ np.atleast_2d(freqs).T))
    return phase.T @ vals * phi.grid.cell_volume


def build_analyzing_function(d, s, grid, width_factor=0.9, annulus_samples=64, seed=77):
    """Compactly supported kernel with s vanishing moments and a measured
    Fourier lower bound on the step-norm annulus.

    The kernel is a tensor product of (s+1)-fold bump derivatives scaled
    into the unit ball B_0; moments through order s vanish analytically per
    axis, and the sampled kernel is corrected so the discrete moments vanish
    exactly on its own lattice.
    """
    from .grid import _cancel_discrete_moments
    from .polyproj import moments as poly_moments

    a_norm = float(np.linalg.norm(d.matrix))  # Frobenius
    rho_lo = 1.0 / (2.0 * a_norm)

    lam_max = float(np.linalg.eigvalsh(d.shape).max())
    base_width = width_factor * np.sqrt(d.level_c / (d.n * lam_max))

    deriv = _bump_derivative(s + 1)
    last_error = None
    for attempt, shrink in enumerate((1.0, 0.7)):
        w = base_width * shrink
        kg = kernel_grid(grid.spacing, np.full(d.n, w))

        def tensor(*axes, w=w):
            out = np.ones_like(axes[0])
            for ax in axes:
                out = out * deriv(ax / w)
            return out

        phi = sample(kg, tensor)
        peak = float(np.max(np.abs(phi.values)))
        if peak == 0.0:
            raise FourierBoundFailure("kernel sampled to zero; grid too coarse")
        phi = phi.with_values(phi.values / peak)
        corrected = _cancel_discrete_moments(
            phi.values, kg.points(), s
        )
        phi = phi.with_values(corrected)

        rng = np.random.default_rng(seed)
        half1 = d.ball_bounding_halfwidths(1)
        samples = []
        while len(samples) < annulus_samples:
            xi = rng.uniform(-1.0, 1.0, size=d.n) * half1
            rho = d.step_quasi_norm_many(xi[None, :])[0]
            if rho_lo <= rho <= 1.0:
                samples.append(xi)
        samples = np.array(samples)
        c_measured = float(np.min(np.abs(_fourier_at(phi, samples))))
        if c_measured >= 1e-6:
            report = AnalyzingReport(
                moments=poly_moments(phi, s),
                fourier_lower_bound=c_measured,
                annulus=(rho_lo, 1.0),
                width=w,
            )
            return phi, report
        last_error = c_measured
    raise FourierBoundFailure(
        f"Fourier lower bound {last_error:.3g} < 1e-6 after width retry"
    )


def carleson_from_function(b, phi, d, scale_window, moment_cancel=None):
    """Density (y, l) -> |(phi_-l * b)(y)|^2 as a scale function."""
    l_min, l_max = scale_window
    layers = []
    for ell in range(l_min, l_max + 1):
        conv = convolve_scaled(b, phi, d, -ell, moment_cancel=moment_cancel)
        layers.append(np.abs(conv.values) ** 2)
    return ScaleFunction(b.grid, l_min, l_max, np.stack(layers))


# -- reproducing pair check -----------------------------------------------------


def _fft_frequencies(grid):
    axes = [np.fft.fftfreq(r, d=h) for r, h in zip(grid.resolution, grid.spacing)]
    meshes = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in meshes], axis=1)


def _semidiscrete_fft(f):
    """Transform values at the grid's FFT frequencies, with midpoint phases."""
    grid = f.grid
    freqs = _fft_frequencies(grid)
    spectrum = np.fft.fftn(f.values).ravel()
    x0 = np.array([ax[0] for ax in grid.axes()])
    phase = np.exp(-2j * np.pi * (freqs @ x0))
    return spectrum * phase * grid.cell_volume, freqs


def _synthesize(grid, coefficients):
    """Inverse of _semidiscrete_fft for coefficient arrays on FFT frequencies."""
    freqs = _fft_frequencies(grid)
    x0 = np.array([ax[0] for ax in grid.axes()])
    phase = np.exp(2j * np.pi * (freqs @ x0))
    shaped = (coefficients * phase).reshape(grid.resolution)
    return np.fft.ifftn(shaped) / grid.cell_volume


def band_limited_pair(grid, seed=0, mode_span=(0.3, 1.0), width=1.8, correlated=False):
    """Two modulated bumps with spectra concentrated in a mid band.

    With correlated=True the second function shares the first one's carrier,
    which keeps the pairing itself well away from zero.
    """
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-0.5, 0.5, size=grid.n)
    x1 = rng.uniform(-0.5, 0.5, size=grid.n)
    f0 = rng.uniform(*mode_span)
    f1 = f0 if correlated else rng.uniform(*mode_span)

    def envelope(meshes, center):
        r2 = sum((m - c) ** 2 for m, c in zip(meshes, center))
        return np.exp(-r2 / (2.0 * width**2))

    def make(center, freq, phase):
        def fn(*meshes):
            wave = np.cos(2 * np.pi * freq * sum(meshes) + phase)
            return envelope(meshes, center) * wave

        return sample(grid, fn)

    phase0 = rng.uniform(0, np.pi)
    phase1 = phase0 if correlated else rng.uniform(0, np.pi)
    return make(x0, f0, phase0), make(x1, f1, phase1)


@dataclass
class ReproducingReport:
    pairing: float
    truncated_pairing: float
    defect: float
    defect_normalized: float
    triangle_slack: float
    cauchy_schwarz_slack: float
    reconstruction_residual: float
    leak_fraction: float
    fubini_ratio_range: tuple
    size_ratio_max: float
    tent_bound_total: float
    leakage_ratio: float
    phi_side_interior_max: float

    @property
    def passed(self):
        return (
            self.triangle_slack >= -1e-8
            and self.cauchy_schwarz_slack >= -1e-8
            and self.reconstruction_residual <= 1e-8
        )


def carleson_duality_check(
    f_rep,
    b,
    phi,
    d,
    p,
    scale_window,
    moment_cancel=None,
    gamma=0.5,
    level_floor=40,
    denominator_floor=1e-8,
):
    """Reproducing defect and pairing-vs-tent-mass chain for a pair (f, b).

    The synthesis partner is built in the discrete frequency domain as
    conj(phi-hat) over the windowed squared sum, zero where that sum is
    negligible, so the measured defect is exactly the truncation error of
    the window.  The chain steps asserted with signed slack are the ones
    that are identities or finite-sum inequalities on the lattice; Fubini
    and atom-size ratios are measured and reported.
    """
    grid = b.grid
    f = f_rep.function()
    l_min, l_max = scale_window

    pairing = float(integrate(f * b))

    # phi side: physical convolutions (these also define the density d-mu).
    phi_layers = []
    for ell in range(l_min, l_max + 1):
        conv = convolve_scaled(b, phi, d, -ell, moment_cancel=moment_cancel)
        phi_layers.append(conv.values)
    phi_side = ScaleFunction(grid, l_min, l_max, np.stack(phi_layers))
    mu = phi_side.with_values(np.abs(phi_side.values) ** 2)

    # Interior maximum of the phi-side field, outside all convolution edges.
    from .grid import boundary_margin

    kernel_half = np.array(
        [0.5 * (u - l) for l, u in zip(phi.grid.lower, phi.grid.upper)]
    )
    extent = 0.0
    for ell in range(l_min, l_max + 1):
        corners = np.array(np.meshgrid(*[(-w, w) for w in kernel_half], indexing="ij"))
        corners = corners.reshape(len(kernel_half), -1)
        extent = max(extent, float(np.abs(d.power(ell) @ corners).max()))
    box_half = 0.5 * float(
        np.min(np.asarray(grid.upper) - np.asarray(grid.lower))
    )
    interior = boundary_margin(grid, min(1.05 * extent, 0.9 * box_half)).values > 0
    phi_interior_max = float(np.max(np.abs(phi_side.values[:, interior]), initial=0.0))

    # psi side: truncated frequency-domain partner applied to f.
    f_hat, freqs = _semidiscrete_fft(f)
    at_mat = d.matrix.T
    window_sq = np.zeros(len(freqs))
    phi_hat_per_ell = {}
    for ell in range(l_min, l_max + 1):
        scaled = freqs @ np.linalg.matrix_power(at_mat, ell).T
        vals = _fourier_at(phi, scaled)
        phi_hat_per_ell[ell] = vals
        window_sq += np.abs(vals) ** 2
    floor = denominator_floor * float(window_sq.max())
    usable = window_sq > floor

    psi_layers = []
    for ell in range(l_min, l_max + 1):
        psi_hat = np.zeros(len(freqs), dtype=complex)
        psi_hat[usable] = np.conj(phi_hat_per_ell[ell][usable]) / window_sq[usable]
        psi_layers.append(np.real(_synthesize(grid, f_hat * psi_hat)))
    psi_side = ScaleFunction(grid, l_min, l_max, np.stack(psi_layers))

    cv = grid.cell_volume
    truncated = float(np.sum(psi_side.values * np.conj(phi_side.values)).real * cv)
    # Two defect scales: relative to the pairing itself (meaningful when the
    # pairing is nontrivial) and to the Cauchy-Schwarz bound (always finite).
    cs_scale = float(
        np.sqrt(np.sum(f.values**2) * cv) * np.sqrt(np.sum(b.values**2) * cv)
    )
    defect = abs(pairing - truncated) / max(abs(pairing), 1e-12)
    defect_normalized = abs(pairing - truncated) / max(cs_scale, 1e-12)

    # Chain: |T| <= S1 (triangle) = covered + leaked (atoms rebuild G there),
    # and each covered piece obeys Cauchy-Schwarz against its tent mass.
    s1 = float(np.sum(np.abs(psi_side.values) * np.abs(phi_side.values)) * cv)
    triangle_slack = s1 - abs(truncated)

    atoms = tent_atomic_decomposition(
        psi_side,
        p,
        d,
        gamma=gamma,
        level_floor=level_floor,
        leakage_bound=np.inf,
    )
    covered = atoms.covered_mask()
    recon = atoms.reconstruction().values
    reconstruction_residual = float(
        np.max(np.abs(recon[covered] - psi_side.values[covered]), initial=0.0)
    )
    s1_covered = float(np.sum(np.abs(psi_side.values)[covered] * np.abs(phi_side.values)[covered]) * cv)
    leak_fraction = (s1 - s1_covered) / s1 if s1 > 0 else 0.0

    cs_slack = np.inf
    tent_bound_total = 0.0
    fub_lo, fub_hi = np.inf, -np.inf
    size_max = 0.0
    abs_phi = np.abs(phi_side.values)
    for entry in atoms.entries:
        lhs = float(
            np.sum(np.abs(entry.node_values) * abs_phi.ravel()[entry.node_indices]) * cv
        )
        a_l2 = float(np.sqrt(np.sum(np.abs(entry.node_values) ** 2) * cv))
        mass = tent_mass(mu, d, entry.ball)
        rhs = a_l2 * np.sqrt(mass)
        cs_slack = min(cs_slack, entry.weight * (rhs - lhs))
        tent_bound_total += entry.weight * rhs

        atom_sf = entry.scale_function(atoms.template)
        area_l2 = float(np.sqrt(np.sum(lusin_area(atom_sf, d).values ** 2) * cv))
        if a_l2 > 0:
            ratio = area_l2 / a_l2
            fub_lo, fub_hi = min(fub_lo, ratio), max(fub_hi, ratio)
        bound = np.sqrt(d.ball_volume(entry.ball)) / indicator_norm(d, entry.ball, p)
        size_max = max(size_max, area_l2 / bound)

    if not atoms.entries:
        cs_slack = 0.0
        fub_lo, fub_hi = 1.0, 1.0

    return ReproducingReport(
        pairing=pairing,
        truncated_pairing=truncated,
        defect=float(defect),
        defect_normalized=float(defect_normalized),
        triangle_slack=float(triangle_slack),
        cauchy_schwarz_slack=float(cs_slack),
        reconstruction_residual=float(reconstruction_residual),
        leak_fraction=float(leak_fraction),
        fubini_ratio_range=(float(fub_lo), float(fub_hi)),
        size_ratio_max=float(size_max),
        tent_bound_total=float(tent_bound_total),
        leakage_ratio=float(atoms.leakage_ratio),
        phi_side_interior_max=phi_interior_max,
    )
