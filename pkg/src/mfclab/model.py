"""Problem data: drift field, running and terminal costs, and the convex
interacting family.

Every scalar shape (external drift, interaction kernels, potentials) is a
finite trigonometric series

    f(x) = c0 + sum_q  a_q cos(2 pi q x) + b_q sin(2 pi q x),

which keeps all shapes exactly 1-periodic, makes derivatives exact, and lets
mean-field convolutions against grid or empirical measures be evaluated in
closed form through the measure's trigonometric moments.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .measures import EmpiricalMeasure, GridMeasure, cell_centers

SPEC_VERSION = 1
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TrigSeries:
    """Finite series c0 + sum_q a_q cos(2 pi q x) + b_q sin(2 pi q x)."""

    cos: np.ndarray  # cos[0] is the constant, cos[q] multiplies cos(2 pi q x)
    sin: np.ndarray  # sin[0] is unused and must be zero

    def __post_init__(self):
        cos = np.atleast_1d(np.asarray(self.cos, dtype=float))
        sin = np.atleast_1d(np.asarray(self.sin, dtype=float))
        width = max(cos.size, sin.size)
        cos = np.pad(cos, (0, width - cos.size))
        sin = np.pad(sin, (0, width - sin.size))
        if sin[0] != 0.0:
            raise ValueError("sin[0] has no meaning; it must be zero")
        object.__setattr__(self, "cos", cos)
        object.__setattr__(self, "sin", sin)

    @staticmethod
    def zero() -> "TrigSeries":
        return TrigSeries(np.zeros(1), np.zeros(1))

    @staticmethod
    def constant(c: float) -> "TrigSeries":
        return TrigSeries(np.array([float(c)]), np.zeros(1))

    @staticmethod
    def harmonics(cos=(), sin=(), constant: float = 0.0) -> "TrigSeries":
        """Build from q >= 1 amplitude lists plus the constant term."""
        cos = np.concatenate([[constant], np.asarray(cos, dtype=float)])
        sin = np.concatenate([[0.0], np.asarray(sin, dtype=float)])
        return TrigSeries(cos, sin)

    @property
    def max_harmonic(self) -> int:
        return self.cos.size - 1

    def is_zero(self) -> bool:
        return not (np.any(self.cos != 0.0) or np.any(self.sin != 0.0))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.cos[0])
        for q in range(1, self.cos.size):
            if self.cos[q] != 0.0 or self.sin[q] != 0.0:
                ang = TWO_PI * q * x
                out = out + self.cos[q] * np.cos(ang) + self.sin[q] * np.sin(ang)
        return out

    def derivative(self) -> "TrigSeries":
        q = np.arange(self.cos.size)
        return TrigSeries(TWO_PI * q * self.sin, -TWO_PI * q * self.cos * (q > 0))

    def antiderivative(self) -> "TrigSeries":
        """Periodic antiderivative with zero mean; requires zero constant term."""
        if self.cos[0] != 0.0:
            raise ValueError("a series with nonzero mean has no periodic antiderivative")
        cos = np.zeros_like(self.cos)
        sin = np.zeros_like(self.sin)
        for q in range(1, self.cos.size):
            cos[q] = -self.sin[q] / (TWO_PI * q)
            sin[q] = self.cos[q] / (TWO_PI * q)
        return TrigSeries(cos, sin)

    def __add__(self, other: "TrigSeries") -> "TrigSeries":
        width = max(self.cos.size, other.cos.size)
        return TrigSeries(
            np.pad(self.cos, (0, width - self.cos.size)) + np.pad(other.cos, (0, width - other.cos.size)),
            np.pad(self.sin, (0, width - self.sin.size)) + np.pad(other.sin, (0, width - other.sin.size)),
        )

    def scale(self, factor: float) -> "TrigSeries":
        return TrigSeries(factor * self.cos, factor * self.sin)

    def samples(self, cells: int) -> np.ndarray:
        return self(cell_centers(cells))

    def sup_norm_bound(self) -> float:
        return float(abs(self.cos[0]) + np.sum(np.hypot(self.cos[1:], self.sin[1:])))

    def to_json(self) -> dict:
        return {"cos": self.cos.tolist(), "sin": self.sin.tolist()}

    @staticmethod
    def from_json(data: dict) -> "TrigSeries":
        return TrigSeries(np.asarray(data["cos"], float), np.asarray(data["sin"], float))


def trig_moments(mu, max_harmonic: int) -> tuple[np.ndarray, np.ndarray]:
    """Moments C_q = int cos(2 pi q y) mu(dy), S_q likewise, q = 0..Q.

    Grid measures integrate with the midpoint rule (the convention used by
    every functional in this package), empirical measures with the exact
    atom average; shapes broadcast so particle clouds of shape (..., N)
    yield per-cloud moments of shape (..., Q+1).
    """
    if isinstance(mu, GridMeasure):
        y = mu.centers
        weights = mu.h * mu.density
        q = np.arange(max_harmonic + 1)
        ang = TWO_PI * np.outer(q, y)
        return np.cos(ang) @ weights, np.sin(ang) @ weights
    if isinstance(mu, EmpiricalMeasure):
        points = mu.points
    else:
        points = np.asarray(mu, dtype=float)
    q = np.arange(max_harmonic + 1).reshape((max_harmonic + 1,) + (1,) * points.ndim)
    ang = TWO_PI * q * points[None, ...]
    return np.mean(np.cos(ang), axis=-1), np.mean(np.sin(ang), axis=-1)


def convolve_series(kernel: TrigSeries, moments: tuple[np.ndarray, np.ndarray], x) -> np.ndarray:
    """(kernel * mu)(x) from the measure's trigonometric moments.

    cos(2 pi q (x - y)) splits by the angle-addition formula, so the
    convolution is again a finite series with measure-dependent amplitudes.
    """
    C, S = moments
    x = np.asarray(x, dtype=float)
    out = np.broadcast_to(kernel.cos[0] * np.asarray(C[0]), np.broadcast_shapes(x.shape, np.asarray(C[0]).shape)).copy()
    for q in range(1, kernel.cos.size):
        a, b = kernel.cos[q], kernel.sin[q]
        if a == 0.0 and b == 0.0:
            continue
        ang = TWO_PI * q * x
        out += np.cos(ang) * (a * C[q] - b * S[q]) + np.sin(ang) * (a * S[q] + b * C[q])
    return out


def convolve_grid(kernel: TrigSeries, density: np.ndarray) -> np.ndarray:
    """(kernel * mu)(x_j) for a grid density, via circular convolution.

    Cell-center differences are exact multiples of h, so FFT convolution of
    the sampled kernel reproduces the trigonometric formula exactly whenever
    the series is resolved on the grid (max harmonic < M/2).
    """
    cells = density.shape[-1]
    h = 1.0 / cells
    kernel_at_lags = kernel(np.arange(cells) * h)
    return np.fft.irfft(
        np.fft.rfft(density, axis=-1) * np.fft.rfft(kernel_at_lags), cells, axis=-1
    ) * h


class Mode(str, enum.Enum):
    FINITE_HORIZON = "finite_horizon"
    SCHRODINGER = "schrodinger"


class SplitUnavailableError(Exception):
    """The external drift is not a periodic gradient (nonzero mean)."""


@dataclass(frozen=True)
class InteractionField:
    """Drift b(x, mu) = b0(x) + (k_b * mu)(x) with exact stored divergence."""

    b0: TrigSeries = field(default_factory=TrigSeries.zero)
    kb: TrigSeries = field(default_factory=TrigSeries.zero)

    @property
    def div_b0(self) -> TrigSeries:
        return self.b0.derivative()

    @property
    def div_kb(self) -> TrigSeries:
        return self.kb.derivative()

    @property
    def max_harmonic(self) -> int:
        return max(self.b0.max_harmonic, self.kb.max_harmonic)

    def sup_norm_bound(self) -> float:
        # |k_b * mu| <= sup|k_b| for any probability measure
        return self.b0.sup_norm_bound() + self.kb.sup_norm_bound()

    def confinement_potential(self) -> TrigSeries:
        """Psi with b0 = -grad Psi; exists on the torus iff b0 has zero mean."""
        if self.b0.cos[0] != 0.0:
            raise SplitUnavailableError(
                "b0 has a nonzero mean, so it is not the gradient of a periodic potential"
            )
        return self.b0.antiderivative().scale(-1.0)

    def eval(self, x, mu) -> np.ndarray:
        """b(x, mu); mu may be a GridMeasure, EmpiricalMeasure, or point cloud."""
        out = self.b0(x)
        if not self.kb.is_zero():
            out = out + convolve_series(self.kb, trig_moments(mu, self.kb.max_harmonic), x)
        return out

    def divergence(self, x, mu) -> np.ndarray:
        out = self.div_b0(x)
        if not self.kb.is_zero():
            out = out + convolve_series(self.div_kb, trig_moments(mu, self.kb.max_harmonic), x)
        return out

    def grid_values(self, density: np.ndarray) -> np.ndarray:
        """b(x_j, mu) for all cells at once (density may be a batch)."""
        cells = density.shape[-1]
        out = np.broadcast_to(self.b0.samples(cells), density.shape).copy()
        if not self.kb.is_zero():
            out += convolve_grid(self.kb, density)
        return out

    def grid_divergence(self, density: np.ndarray) -> np.ndarray:
        cells = density.shape[-1]
        out = np.broadcast_to(self.div_b0.samples(cells), density.shape).copy()
        if not self.kb.is_zero():
            out += convolve_grid(self.div_kb, density)
        return out


@dataclass(frozen=True)
class RunningCost:
    """V(x, mu) = v_ext(x) + (v1 * mu)(x) - c |(v0' * mu)(x)|^2."""

    v_ext: TrigSeries = field(default_factory=TrigSeries.zero)
    v1: TrigSeries = field(default_factory=TrigSeries.zero)
    v0: TrigSeries = field(default_factory=TrigSeries.zero)
    grad_pair_sq_coeff: float = 0.0

    @property
    def dv0(self) -> TrigSeries:
        return self.v0.derivative()

    def is_zero(self) -> bool:
        return self.v_ext.is_zero() and self.v1.is_zero() and (
            self.grad_pair_sq_coeff == 0.0 or self.v0.is_zero()
        )

    def sup_norm_bound(self) -> float:
        return (
            self.v_ext.sup_norm_bound()
            + self.v1.sup_norm_bound()
            + abs(self.grad_pair_sq_coeff) * self.dv0.sup_norm_bound() ** 2
        )

    def eval(self, x, mu) -> np.ndarray:
        out = self.v_ext(x)
        if not self.v1.is_zero():
            out = out + convolve_series(self.v1, trig_moments(mu, self.v1.max_harmonic), x)
        if self.grad_pair_sq_coeff != 0.0 and not self.v0.is_zero():
            grad = convolve_series(self.dv0, trig_moments(mu, self.v0.max_harmonic), x)
            out = out - self.grad_pair_sq_coeff * grad * grad
        return out

    def grid_values(self, density: np.ndarray) -> np.ndarray:
        cells = density.shape[-1]
        out = np.broadcast_to(self.v_ext.samples(cells), density.shape).copy()
        if not self.v1.is_zero():
            out += convolve_grid(self.v1, density)
        if self.grad_pair_sq_coeff != 0.0 and not self.v0.is_zero():
            grad = convolve_grid(self.dv0, density)
            out -= self.grad_pair_sq_coeff * grad * grad
        return out


class TerminalKind(str, enum.Enum):
    NONE = "none"
    LINEAR = "linear"


@dataclass(frozen=True)
class TerminalCost:
    """G(mu) = int g dmu (LINEAR) or absent (NONE, Schrodinger mode)."""

    kind: TerminalKind = TerminalKind.NONE
    g: TrigSeries = field(default_factory=TrigSeries.zero)

    @staticmethod
    def none() -> "TerminalCost":
        return TerminalCost(TerminalKind.NONE, TrigSeries.zero())

    @staticmethod
    def linear(g: TrigSeries) -> "TerminalCost":
        return TerminalCost(TerminalKind.LINEAR, g)

    def eval(self, mu) -> float:
        if self.kind is TerminalKind.NONE:
            return 0.0
        if isinstance(mu, GridMeasure):
            return float(mu.h * np.sum(self.g.samples(mu.cells) * mu.density))
        return float(np.mean(self.g(mu.points)))

    def grid_values(self, cells: int) -> np.ndarray:
        if self.kind is TerminalKind.NONE:
            return np.zeros(cells)
        return self.g.samples(cells)


@dataclass(frozen=True)
class MeasureSpec:
    """Grid-resolution-free description of a probability measure."""

    kind: str  # uniform | wrapped_gaussian | gaussian_mixture | grid
    params: dict = field(default_factory=dict)

    @staticmethod
    def uniform() -> "MeasureSpec":
        return MeasureSpec("uniform")

    @staticmethod
    def wrapped_gaussian(mean: float, sigma: float) -> "MeasureSpec":
        return MeasureSpec("wrapped_gaussian", {"mean": mean, "sigma": sigma})

    @staticmethod
    def gaussian_mixture(components, uniform_weight: float = 0.0) -> "MeasureSpec":
        comps = [
            {"weight": w, "mean": m, "sigma": s} for (w, m, s) in components
        ]
        return MeasureSpec(
            "gaussian_mixture", {"components": comps, "uniform_weight": uniform_weight}
        )

    def materialize(self, cells: int) -> GridMeasure:
        if self.kind == "uniform":
            return GridMeasure.uniform(cells)
        if self.kind == "wrapped_gaussian":
            return GridMeasure.wrapped_gaussian(cells, self.params["mean"], self.params["sigma"])
        if self.kind == "gaussian_mixture":
            comps = [
                (c["weight"], c["mean"], c["sigma"]) for c in self.params["components"]
            ]
            return GridMeasure.gaussian_mixture(cells, comps, self.params.get("uniform_weight", 0.0))
        if self.kind == "grid":
            density = np.asarray(self.params["density"], dtype=float)
            if density.size != cells:
                raise ValueError(
                    f"grid measure has {density.size} cells, requested {cells}"
                )
            return GridMeasure(density)
        raise ValueError(f"unknown measure kind {self.kind!r}")

    def to_json(self) -> dict:
        return {"kind": self.kind, **self.params}

    @staticmethod
    def from_json(data: dict) -> "MeasureSpec":
        data = dict(data)
        kind = data.pop("kind")
        return MeasureSpec(kind, data)


@dataclass(frozen=True)
class ProblemSpec:
    """Full problem data for one control problem on the torus."""

    drift: InteractionField
    running: RunningCost
    terminal: TerminalCost
    mu0: MeasureSpec
    horizon: float
    mode: Mode = Mode.FINITE_HORIZON
    muT: MeasureSpec | None = None

    def __post_init__(self):
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        if self.mode is Mode.SCHRODINGER:
            if self.muT is None:
                raise ValueError("Schrodinger mode requires a target measure muT")
            if self.terminal.kind is not TerminalKind.NONE:
                raise ValueError("Schrodinger mode uses a hard terminal marginal, not G")

    def mu0_grid(self, cells: int) -> GridMeasure:
        return self.mu0.materialize(cells)

    def muT_grid(self, cells: int) -> GridMeasure:
        if self.muT is None:
            raise ValueError("problem has no terminal marginal")
        muT = self.muT.materialize(cells)
        if self.mode is Mode.SCHRODINGER and np.any(muT.density <= 0.0):
            raise ValueError("Schrodinger terminal marginal must be strictly positive")
        return muT

    def to_json(self) -> dict:
        payload = {
            "spec_version": SPEC_VERSION,
            "mode": self.mode.value,
            "T": self.horizon,
            "mu0": self.mu0.to_json(),
            "b0": self.drift.b0.to_json(),
            "kb": self.drift.kb.to_json(),
            "vext": self.running.v_ext.to_json(),
            "v1": self.running.v1.to_json(),
            "v0": self.running.v0.to_json(),
            "grad_pair_sq_coeff": self.running.grad_pair_sq_coeff,
            "g": self.terminal.g.to_json(),
            "terminal_kind": self.terminal.kind.value,
        }
        if self.muT is not None:
            payload["muT"] = self.muT.to_json()
        return payload

    @staticmethod
    def from_json(data: dict) -> "ProblemSpec":
        version = data.get("spec_version")
        if version != SPEC_VERSION:
            raise ValueError(f"unsupported spec_version {version!r}")
        drift = InteractionField(
            b0=TrigSeries.from_json(data["b0"]), kb=TrigSeries.from_json(data["kb"])
        )
        running = RunningCost(
            v_ext=TrigSeries.from_json(data["vext"]),
            v1=TrigSeries.from_json(data["v1"]),
            v0=TrigSeries.from_json(data["v0"]),
            grad_pair_sq_coeff=float(data.get("grad_pair_sq_coeff", 0.0)),
        )
        terminal = TerminalCost(
            kind=TerminalKind(data.get("terminal_kind", "none")),
            g=TrigSeries.from_json(data["g"]),
        )
        return ProblemSpec(
            drift=drift,
            running=running,
            terminal=terminal,
            mu0=MeasureSpec.from_json(data["mu0"]),
            horizon=float(data["T"]),
            mode=Mode(data["mode"]),
            muT=MeasureSpec.from_json(data["muT"]) if "muT" in data else None,
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def eval_drift(field_: InteractionField, x, mu) -> np.ndarray:
    """b(x, mu) = b0(x) + int k_b(x - y) mu(dy)."""
    return field_.eval(x, mu)


def eval_running_cost(rc: RunningCost, x, mu) -> np.ndarray:
    """V(x, mu) including the -c |(grad v0) * mu|^2 interaction term."""
    return rc.eval(x, mu)


def make_convex_instance(
    v0_amplitudes,
    v1_amplitudes,
    b0: TrigSeries | None = None,
    v_ext: TrigSeries | None = None,
    g: TrigSeries | None = None,
    mu0: MeasureSpec | None = None,
    muT: MeasureSpec | None = None,
    horizon: float = 0.1,
    mode: Mode = Mode.FINITE_HORIZON,
) -> ProblemSpec:
    """Interacting instance with a strictly convex interaction energy.

    v0 and v1 are pure cosine series (amplitudes for q = 1, 2, ...), both with
    nonnegative coefficients; the drift picks up the interaction through

        b(x, mu) = b0(x) + grad dU/dmu (x, mu),     U(mu) = iint v0(x - y) mu mu,

    i.e. k_b = 2 v0', and the running cost carries the compensating
    -4 |(grad v0) * mu|^2 term so the effective interaction energy

        K(mu) = iint [v1 + 2 lap v0](x - y) mu(dx) mu(dy)

    stays convex.  Each retained harmonic must satisfy
    2 v1_q - 4 (2 pi q)^2 v0_q >= 0, which makes the Hessian kernel
    2 v1 + 4 lap v0 positive semidefinite on the resolved band.
    """
    v0_amplitudes = np.atleast_1d(np.asarray(v0_amplitudes, dtype=float))
    v1_amplitudes = np.atleast_1d(np.asarray(v1_amplitudes, dtype=float))
    if np.any(v0_amplitudes < 0.0) or np.any(v1_amplitudes < 0.0):
        raise ValueError("cosine amplitudes must be nonnegative")
    width = max(v0_amplitudes.size, v1_amplitudes.size)
    v0_amp = np.pad(v0_amplitudes, (0, width - v0_amplitudes.size))
    v1_amp = np.pad(v1_amplitudes, (0, width - v1_amplitudes.size))
    if np.any((v0_amp > 0.0) & (v1_amp <= 0.0)):
        raise ValueError("every harmonic carried by v0 needs a positive v1 amplitude")
    q = np.arange(1, width + 1)
    hessian = 2.0 * v1_amp - 4.0 * (TWO_PI * q) ** 2 * v0_amp
    if np.any(hessian < 0.0):
        raise ValueError(
            "interaction energy not convex: need 2 v1_q >= 4 (2 pi q)^2 v0_q per harmonic"
        )
    v0 = TrigSeries.harmonics(cos=v0_amp)
    v1 = TrigSeries.harmonics(cos=v1_amp)
    drift = InteractionField(
        b0=b0 if b0 is not None else TrigSeries.zero(),
        kb=v0.derivative().scale(2.0),
    )
    running = RunningCost(
        v_ext=v_ext if v_ext is not None else TrigSeries.zero(),
        v1=v1,
        v0=v0,
        grad_pair_sq_coeff=4.0,
    )
    terminal = TerminalCost.linear(g) if g is not None else TerminalCost.none()
    if mode is Mode.SCHRODINGER:
        terminal = TerminalCost.none()
    return ProblemSpec(
        drift=drift,
        running=running,
        terminal=terminal,
        mu0=mu0 if mu0 is not None else MeasureSpec.wrapped_gaussian(0.5, 0.1),
        horizon=horizon,
        mode=mode,
        muT=muT,
    )


def interaction_energy(spec: ProblemSpec, mu: GridMeasure) -> float:
    """K(mu) = int [V(x, mu) + |k_b * mu|^2 / ... ] as in the convex family.

    Evaluates int (V + |grad dU/dmu|^2 + lap dU/dmu) dmu with
    grad dU/dmu = k_b * mu and lap dU/dmu = k_b' * mu; for instances from
    make_convex_instance this is the convex functional whose midpoint
    inequality certifies uniqueness.
    """
    x = mu.centers
    v_val = spec.running.eval(x, mu)
    grad = convolve_grid(spec.drift.kb, mu.density)
    lap = convolve_grid(spec.drift.kb.derivative(), mu.density)
    return float(mu.h * np.sum((v_val + grad * grad + lap) * mu.density))
