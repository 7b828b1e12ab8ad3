"""Probability measures on the unit torus: grid densities, empirical clouds,
and the information functionals (entropy, Fisher information, KL divergence,
circular Wasserstein distances) used throughout the lab.

Conventions
-----------
The torus has length 1.  A grid measure with M cells stores the density at
the cell centers x_j = (j + 1/2) h, h = 1/M.  All integrals against a grid
measure use the midpoint rule  h * sum_j f(x_j) rho_j, so a valid density
satisfies h * sum(rho) == 1 exactly (up to 1e-12).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DENSITY_FLOOR = 1e-12
NORMALIZATION_TOL = 1e-12

_WRAP_IMAGES = 6  # wrapped-Gaussian truncation; error < 1e-15 for sigma <= 0.25


class AbsoluteContinuityViolation(Exception):
    """p puts mass where q has none; the KL divergence is +inf."""


def cell_centers(cells: int) -> np.ndarray:
    h = 1.0 / cells
    return (np.arange(cells) + 0.5) * h


def central_difference(values: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Periodic central difference (f_{j+1} - f_{j-1}) / 2h along an axis."""
    return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * h)


@dataclass(frozen=True)
class GridMeasure:
    """Probability density on M equal cells of the unit torus."""

    density: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.density, dtype=float)
        object.__setattr__(self, "density", rho)
        if rho.ndim != 1 or rho.size < 1:
            raise ValueError("density must be a one-dimensional array")
        if np.any(rho < 0.0):
            raise ValueError("density must be nonnegative")
        mass = self.h * float(rho.sum())
        if abs(mass - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"density not normalized: h*sum = {mass!r}")

    @property
    def cells(self) -> int:
        return self.density.size

    @property
    def h(self) -> float:
        return 1.0 / self.density.size

    @property
    def centers(self) -> np.ndarray:
        return cell_centers(self.cells)

    @staticmethod
    def uniform(cells: int) -> "GridMeasure":
        return GridMeasure(np.ones(cells))

    @staticmethod
    def from_unnormalized(values: np.ndarray) -> "GridMeasure":
        values = np.asarray(values, dtype=float)
        if np.any(values < 0.0):
            raise ValueError("values must be nonnegative")
        mass = values.sum() / values.size
        if mass <= 0.0:
            raise ValueError("values must carry positive mass")
        return GridMeasure(values / mass)

    @staticmethod
    def wrapped_gaussian(cells: int, mean: float, sigma: float) -> "GridMeasure":
        x = cell_centers(cells)
        rho = wrapped_gaussian_density(x, mean, sigma)
        return GridMeasure.from_unnormalized(rho)

    @staticmethod
    def gaussian_mixture(
        cells: int,
        components: list[tuple[float, float, float]],
        uniform_weight: float = 0.0,
    ) -> "GridMeasure":
        """Mixture of wrapped Gaussians (weight, mean, sigma) plus a uniform part."""
        x = cell_centers(cells)
        rho = np.full(cells, float(uniform_weight))
        for weight, mean, sigma in components:
            rho += weight * wrapped_gaussian_density(x, mean, sigma)
        return GridMeasure.from_unnormalized(rho)

    def cdf_at_right_edges(self) -> np.ndarray:
        """F evaluated at cell right edges (last entry is exactly 1)."""
        cdf = np.cumsum(self.density) * self.h
        cdf[-1] = 1.0
        return cdf

    def quantiles(self, levels: np.ndarray) -> np.ndarray:
        """Inverse CDF of the piecewise-constant density at the given levels."""
        cdf = self.cdf_at_right_edges()
        idx = np.searchsorted(cdf, levels, side="left")
        idx = np.clip(idx, 0, self.cells - 1)
        left_cdf = np.where(idx > 0, cdf[idx - 1], 0.0)
        rho = self.density[idx]
        inner = np.where(rho > 0.0, (levels - left_cdf) / np.maximum(rho, DENSITY_FLOOR), 0.0)
        return (idx * self.h + np.clip(inner, 0.0, self.h)) % 1.0


def wrapped_gaussian_density(x: np.ndarray, mean: float, sigma: float) -> np.ndarray:
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rho = np.zeros_like(x, dtype=float)
    for k in range(-_WRAP_IMAGES, _WRAP_IMAGES + 1):
        z = (x - mean + k) / sigma
        rho += np.exp(-0.5 * z * z)
    return rho / (sigma * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class GridMeasure2:
    """Probability density on the M x M product torus (two-particle state space)."""

    density: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.density, dtype=float)
        object.__setattr__(self, "density", rho)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("density must be a square two-dimensional array")
        if np.any(rho < 0.0):
            raise ValueError("density must be nonnegative")
        mass = self.h * self.h * float(rho.sum())
        if abs(mass - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"density not normalized: h^2*sum = {mass!r}")

    @property
    def cells(self) -> int:
        return self.density.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.density.shape[0]

    @staticmethod
    def product(p: GridMeasure, q: GridMeasure) -> "GridMeasure2":
        if p.cells != q.cells:
            raise ValueError("product factors must share the grid")
        return GridMeasure2(np.outer(p.density, q.density))

    @staticmethod
    def from_unnormalized(values: np.ndarray) -> "GridMeasure2":
        values = np.asarray(values, dtype=float)
        if np.any(values < 0.0):
            raise ValueError("values must be nonnegative")
        mass = values.sum() / values.size
        if mass <= 0.0:
            raise ValueError("values must carry positive mass")
        return GridMeasure2(values / mass)

    def marginal(self, axis: int) -> GridMeasure:
        """Marginal on the kept axis: axis=0 keeps the first particle."""
        other = 1 - axis
        return GridMeasure(self.density.sum(axis=other) * self.h)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform atoms at N torus positions."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 1:
            raise ValueError("points must be a nonempty one-dimensional array")
        if np.any(pts < 0.0) or np.any(pts >= 1.0):
            raise ValueError("points must lie in [0, 1)")

    @property
    def size(self) -> int:
        return self.points.size

    def quantiles(self, levels: np.ndarray) -> np.ndarray:
        xs = np.sort(self.points)
        idx = np.minimum((levels * self.size).astype(int), self.size - 1)
        return xs[idx]


@dataclass(frozen=True)
class MeasureFlow:
    """Grid measures at K+1 equally spaced instants on [0, T]."""

    times: np.ndarray
    densities: np.ndarray  # shape (K+1, M)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        dens = np.asarray(self.densities, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "densities", dens)
        if dens.ndim != 2 or times.ndim != 1 or dens.shape[0] != times.size:
            raise ValueError("densities must be (K+1, M) matching times")
        if times.size < 2:
            raise ValueError("a flow needs at least two instants")
        steps = np.diff(times)
        if not np.allclose(steps, steps[0], rtol=0.0, atol=1e-12 * max(1.0, times[-1])):
            raise ValueError("times must be equally spaced")

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def cells(self) -> int:
        return self.densities.shape[1]

    @property
    def h(self) -> float:
        return 1.0 / self.cells

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def measure(self, k: int) -> GridMeasure:
        return GridMeasure(self.densities[k])


# ---------------------------------------------------------------------------
# Information functionals
# ---------------------------------------------------------------------------

def entropy(mu: GridMeasure) -> float:
    """h * sum rho log rho with the 0 log 0 = 0 convention (nats)."""
    rho = mu.density
    mask = rho > 0.0
    return float(mu.h * np.sum(rho[mask] * np.log(rho[mask])))


def entropy_pair(mu2: GridMeasure2) -> float:
    rho = mu2.density
    mask = rho > 0.0
    return float(mu2.h * mu2.h * np.sum(rho[mask] * np.log(rho[mask])))


def fisher_information(mu: GridMeasure, floor: float = DENSITY_FLOOR) -> float:
    """h * sum (D_c rho)^2 / max(rho, floor), D_c the periodic central difference."""
    if floor <= 0.0:
        raise ValueError("floor must be positive")
    grad = central_difference(mu.density, mu.h)
    return float(mu.h * np.sum(grad * grad / np.maximum(mu.density, floor)))


def fisher_information_pair(mu2: GridMeasure2, floor: float = DENSITY_FLOOR) -> float:
    """Unnormalized two-particle Fisher information on the product torus."""
    if floor <= 0.0:
        raise ValueError("floor must be positive")
    rho = mu2.density
    g1 = central_difference(rho, mu2.h, axis=0)
    g2 = central_difference(rho, mu2.h, axis=1)
    denom = np.maximum(rho, floor)
    return float(mu2.h * mu2.h * np.sum((g1 * g1 + g2 * g2) / denom))


def kl_grid(p: GridMeasure, q: GridMeasure) -> float:
    """KL(p | q) in nats; +inf when p is not absolutely continuous w.r.t. q."""
    if p.cells != q.cells:
        raise ValueError("measures must share the grid")
    rho, kappa = p.density, q.density
    mask = rho > 0.0
    if np.any(kappa[mask] <= 0.0):
        return math.inf
    return float(p.h * np.sum(rho[mask] * np.log(rho[mask] / kappa[mask])))


def symmetrize_pair(mu2: GridMeasure2) -> GridMeasure2:
    """Average over the particle exchange; the output is swap-invariant."""
    return GridMeasure2(0.5 * (mu2.density + mu2.density.T))


def bin_empirical(emp: EmpiricalMeasure, cells: int) -> GridMeasure:
    """Histogram density of the atom cloud; exactly normalized."""
    if cells < 2:
        raise ValueError("cells must be at least 2")
    counts = np.bincount((emp.points * cells).astype(int), minlength=cells)
    return GridMeasure(counts * (cells / emp.size))


# ---------------------------------------------------------------------------
# Circular Wasserstein distances
# ---------------------------------------------------------------------------

def circle_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = np.abs(np.asarray(x) - np.asarray(y)) % 1.0
    return np.minimum(d, 1.0 - d)


def _cdf_pieces(measure):
    """CDF evaluator and breakpoint list of a torus measure on [0, 1]."""
    if isinstance(measure, GridMeasure):
        edges = np.linspace(0.0, 1.0, measure.cells + 1)
        cdf = np.concatenate([[0.0], measure.cdf_at_right_edges()])
        return (lambda x: np.interp(x, edges, cdf)), edges
    if isinstance(measure, EmpiricalMeasure):
        pts = np.sort(measure.points)
        n = pts.size
        breakpoints = np.unique(np.concatenate([[0.0], pts, [1.0]]))
        return (lambda x: np.searchsorted(pts, x, side="right") / n), breakpoints
    raise TypeError(f"unsupported measure type {type(measure)!r}")


def _w1_circle_cdf(p, q) -> float:
    """Exact W1 on the circle: min_s integral |F_p - F_q - s| dx.

    Between consecutive merged breakpoints the integrand G = F_p - F_q is
    linear, so each segment integral has a closed form; atoms only move the
    CDF vertically and contribute nothing to the dx integral.  The objective
    is convex in s and is minimized by golden-section search.
    """
    fp, xs_p = _cdf_pieces(p)
    fq, xs_q = _cdf_pieces(q)
    xs = np.unique(np.concatenate([xs_p, xs_q]))
    x0, x1 = xs[:-1], xs[1:]
    keep = (x1 - x0) > 0.0
    x0, x1 = x0[keep], x1[keep]
    lengths = x1 - x0
    # G is linear inside each segment: recover its endpoint limits from
    # interior samples (quarter points), which avoids jump ambiguity.
    q1 = 0.75 * x0 + 0.25 * x1
    q2 = 0.50 * x0 + 0.50 * x1
    q3 = 0.25 * x0 + 0.75 * x1
    g1 = fp(q1) - fq(q1)
    g2 = fp(q2) - fq(q2)
    g3 = fp(q3) - fq(q3)
    g_left = 2.0 * g1 - g2
    g_right = 2.0 * g3 - g2

    def objective(s: float) -> float:
        a = g_left - s
        b = g_right - s
        same = a * b >= 0.0
        seg = np.where(
            same,
            0.5 * (np.abs(a) + np.abs(b)),
            0.5 * (a * a + b * b) / np.maximum(np.abs(b - a), 1e-300),
        )
        return float(np.sum(seg * lengths))

    lo = float(min(g_left.min(), g_right.min()))
    hi = float(max(g_left.max(), g_right.max()))
    return _golden_section(objective, lo, hi)


def _golden_section(fn, lo: float, hi: float, iters: int = 200) -> float:
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if b - a < 1e-14 * max(1.0, abs(a) + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
    return min(fc, fd)


def _level_breakpoints(measure) -> np.ndarray:
    """Levels in [0, 1] where the quantile function changes slope or jumps."""
    if isinstance(measure, GridMeasure):
        return np.concatenate([[0.0], measure.cdf_at_right_edges()])
    return np.linspace(0.0, 1.0, measure.size + 1)


def _w2_circle_quantile(p, q) -> float:
    """W2 on the circle: min over the cut shift s of the quantile L2 cost

        F(s) = integral_0^1 ( Q_p(t) - [Q_q((t - s) mod 1) + floor(t - s)] )^2 dt.

    F is convex in s, so a golden-section search over s in [-1, 1] finds the
    minimum; each evaluation is exact because between merged level
    breakpoints the integrand is a quadratic, integrated by the open
    three-point Newton-Cotes rule.
    """
    bp_p = _level_breakpoints(p)
    bp_q = _level_breakpoints(q)

    def cost(s: float) -> float:
        # breakpoints of t -> Q_q(t - s) are the q-levels shifted by s
        shifted = np.concatenate([bp_q + s - 1.0, bp_q + s, bp_q + s + 1.0])
        shifted = shifted[(shifted > 0.0) & (shifted < 1.0)]
        ts = np.unique(np.concatenate([bp_p, shifted, [0.0, 1.0]]))
        t0, t1 = ts[:-1], ts[1:]
        keep = (t1 - t0) > 1e-300
        t0, t1 = t0[keep], t1[keep]
        lengths = t1 - t0
        samples = []
        for alpha in (0.25, 0.5, 0.75):
            t = t0 + alpha * (t1 - t0)
            tau = t - s
            q_val = q.quantiles(tau % 1.0) + np.floor(tau)
            d = p.quantiles(t) - q_val
            samples.append(d * d)
        seg = (2.0 * samples[0] - samples[1] + 2.0 * samples[2]) / 3.0
        return float(np.sum(seg * lengths))

    return math.sqrt(max(_golden_section(cost, -1.0, 1.0), 0.0))


def _wp_empirical_cyclic(p: EmpiricalMeasure, q: EmpiricalMeasure, order: int) -> float:
    """Equal-size empirical W_p: sorted points, best cyclic assignment."""
    xs = np.sort(p.points)
    ys = np.sort(q.points)
    n = xs.size
    shifts = np.arange(n)
    matched = ys[(shifts[:, None] + np.arange(n)[None, :]) % n]
    d = circle_distance(xs[None, :], matched)
    costs = np.mean(d ** order, axis=1)
    return float(costs.min() ** (1.0 / order))


def wasserstein_circle(p, q, order: int = 1) -> float:
    """Circular W_p between two torus measures of the same representation class
    (grid/grid, empirical/empirical) or mixed grid/empirical.

    order 1 uses the exact CDF-shift characterization; order 2 minimizes the
    quantile L2 cost over cut shifts (equal-size empirical clouds are matched
    exactly by the optimal cyclic assignment).
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if isinstance(p, EmpiricalMeasure) and isinstance(q, EmpiricalMeasure):
        if p.size == q.size and p.size <= 4096:
            return _wp_empirical_cyclic(p, q, order)
    if order == 1:
        return _w1_circle_cdf(p, q)
    return _w2_circle_quantile(p, q)
