"""Fokker-Planck and continuity-equation machinery on the torus grid.

The controlled density solves

    d/dt rho = lap rho - div( (A + b(x, rho)) rho ),

discretized by a Strang step: half of the diffusion semigroup (exact in
time, FFT-diagonalized three-point Laplacian), an explicit central-difference
advection step with the drift frozen at the mid-state, then the second
diffusion half.  Every stage is smooth in (rho, A), which is what makes the
discrete adjoint in the solver module exact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .measures import DENSITY_FLOOR, GridMeasure, MeasureFlow, central_difference
from .model import ProblemSpec

CFL_SAFETY = 0.4


class CFLViolation(Exception):
    """The advective CFL margin was exceeded; carries the required step count."""

    def __init__(self, max_speed: float, steps: int, required_steps: int):
        self.max_speed = max_speed
        self.steps = steps
        self.required_steps = required_steps
        super().__init__(
            f"advective CFL violated: max |A + b| = {max_speed:.4g} needs "
            f"K >= {required_steps}, got K = {steps}"
        )


class FieldKind(str, enum.Enum):
    CONTROL = "control"
    VELOCITY = "velocity"


@dataclass(frozen=True)
class FieldFlow:
    """Scalar field on the space-time grid: control A(t_k, x_j) or velocity w."""

    times: np.ndarray
    values: np.ndarray  # shape (K+1, M)
    kind: FieldKind

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[0] != times.size:
            raise ValueError("values must be (K+1, M) matching times")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def cells(self) -> int:
        return self.values.shape[1]

    @property
    def h(self) -> float:
        return 1.0 / self.cells

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @staticmethod
    def zero_control(horizon: float, steps: int, cells: int) -> "FieldFlow":
        return FieldFlow(
            np.linspace(0.0, horizon, steps + 1),
            np.zeros((steps + 1, cells)),
            FieldKind.CONTROL,
        )

    def with_values(self, values: np.ndarray) -> "FieldFlow":
        return FieldFlow(self.times, values, self.kind)

    def interp_time(self, t: float) -> np.ndarray:
        """Linear interpolation between time nodes."""
        if t <= self.times[0]:
            return self.values[0]
        if t >= self.times[-1]:
            return self.values[-1]
        pos = (t - self.times[0]) / self.dt
        k = min(int(pos), self.steps - 1)
        frac = pos - k
        return (1.0 - frac) * self.values[k] + frac * self.values[k + 1]

    def interp_space(self, k: int, x: np.ndarray) -> np.ndarray:
        """Periodic linear interpolation of time-node k values at positions x."""
        return periodic_linear_interp(self.values[k], x)


def periodic_linear_interp(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Interpolate cell-center samples linearly, wrapping around the torus."""
    cells = values.shape[-1]
    pos = x * cells - 0.5
    base = np.floor(pos).astype(int)
    frac = pos - base
    lo = values[..., base % cells]
    hi = values[..., (base + 1) % cells]
    return (1.0 - frac) * lo + frac * hi


def heat_semigroup_factors(cells: int, tau: float) -> np.ndarray:
    """Fourier multipliers of exp(tau * L3), L3 the periodic 3-point Laplacian."""
    h = 1.0 / cells
    freq = np.arange(cells // 2 + 1)
    eigen = -4.0 / (h * h) * np.sin(np.pi * freq / cells) ** 2
    return np.exp(tau * eigen)


def apply_heat(density: np.ndarray, factors: np.ndarray) -> np.ndarray:
    cells = density.shape[-1]
    return np.fft.irfft(np.fft.rfft(density, axis=-1) * factors, cells, axis=-1)


@dataclass
class FPStepTrace:
    """Intermediates of one Strang step, kept for the adjoint sweep."""

    rho_mid: np.ndarray      # after the first diffusion half
    speed: np.ndarray        # u = A_mid + b(x, rho_mid)
    rho_advected: np.ndarray
    clip_mask: np.ndarray    # 1 where the final clip was inactive


@dataclass
class FPSolution:
    flow: MeasureFlow
    traces: list  # FPStepTrace per step; consumed by the adjoint


def _check_cfl(max_speed: float, dt: float, h: float, steps: int, horizon: float):
    if max_speed * dt > CFL_SAFETY * h:
        required = int(math.ceil(horizon * max_speed / (CFL_SAFETY * h)))
        raise CFLViolation(max_speed, steps, required)


def solve_fokker_planck(
    spec: ProblemSpec,
    control: FieldFlow,
    keep_traces: bool = False,
) -> MeasureFlow | FPSolution:
    """March the controlled Fokker-Planck equation from spec.mu0.

    The control grid fixes (K, M); each step conserves mass to 1e-12 and
    keeps the density nonnegative.  The advective CFL margin
    dt <= 0.4 h / max|A + b| is enforced stepwise (diffusion is integrated
    exactly, so it imposes no step restriction); violations raise
    CFLViolation carrying the required K.
    """
    if control.kind is not FieldKind.CONTROL:
        raise ValueError("solve_fokker_planck expects a CONTROL field")
    cells, steps = control.cells, control.steps
    h, dt = control.h, control.dt
    mu0 = spec.mu0_grid(cells)
    half = heat_semigroup_factors(cells, 0.5 * dt)

    densities = np.empty((steps + 1, cells))
    densities[0] = mu0.density
    traces: list[FPStepTrace] = []
    mass0 = h * densities[0].sum()
    for k in range(steps):
        rho = densities[k]
        rho_mid = apply_heat(rho, half)
        a_mid = 0.5 * (control.values[k] + control.values[k + 1])
        speed = a_mid + spec.drift.grid_values(rho_mid)
        _check_cfl(float(np.abs(speed).max()), dt, h, steps, control.horizon)
        rho_adv = rho_mid - dt * central_difference(speed * rho_mid, h)
        rho_next = apply_heat(rho_adv, half)
        clip_mask = rho_next > 0.0
        rho_next = np.where(clip_mask, rho_next, 0.0)
        mass = h * rho_next.sum()
        if abs(mass - mass0) > 1e-12:
            raise FloatingPointError(f"mass drifted to {mass!r} at step {k}")
        densities[k + 1] = rho_next
        if keep_traces:
            traces.append(FPStepTrace(rho_mid, speed, rho_adv, clip_mask))
    flow = MeasureFlow(control.times, densities)
    if keep_traces:
        return FPSolution(flow, traces)
    return flow


def heat_flow(mu0: GridMeasure, horizon: float, steps: int) -> MeasureFlow:
    """Pure heat flow of mu0 (the zero-drift, zero-control solution)."""
    cells = mu0.cells
    times = np.linspace(0.0, horizon, steps + 1)
    densities = np.empty((steps + 1, cells))
    densities[0] = mu0.density
    factors = heat_semigroup_factors(cells, horizon / steps)
    for k in range(steps):
        # FFT roundoff can push vanishing tails a hair below zero
        densities[k + 1] = np.maximum(apply_heat(densities[k], factors), 0.0)
    return MeasureFlow(times, densities)


def grad_log_density(density: np.ndarray, floor: float = DENSITY_FLOOR) -> np.ndarray:
    """Discrete grad log rho := D_c rho / max(rho, floor) (contract of eq. w = A + b - grad log).

    The ratio form (rather than D_c of log rho) makes the kinetic term of a
    reconstructed velocity match the grid Fisher information exactly.
    """
    h = 1.0 / density.shape[-1]
    return central_difference(density, h) / np.maximum(density, floor)


def control_to_velocity(
    flow: MeasureFlow, control: FieldFlow, spec: ProblemSpec, floor: float = DENSITY_FLOOR
) -> FieldFlow:
    """w = A + b(x, mu_t) - grad log mu_t, the continuity-equation velocity."""
    if control.kind is not FieldKind.CONTROL:
        raise ValueError("expected a CONTROL field")
    drift = spec.drift.grid_values(flow.densities)
    w = control.values + drift - grad_log_density(flow.densities, floor)
    return FieldFlow(flow.times, w, FieldKind.VELOCITY)


def velocity_to_control(
    flow: MeasureFlow, velocity: FieldFlow, spec: ProblemSpec, floor: float = DENSITY_FLOOR
) -> FieldFlow:
    """A = w - b(x, mu_t) + grad log mu_t, the exact inverse of control_to_velocity."""
    if velocity.kind is not FieldKind.VELOCITY:
        raise ValueError("expected a VELOCITY field")
    drift = spec.drift.grid_values(flow.densities)
    a = velocity.values - drift + grad_log_density(flow.densities, floor)
    return FieldFlow(flow.times, a, FieldKind.CONTROL)


def continuity_residual(flow: MeasureFlow, velocity: FieldFlow) -> float:
    """Discrete L2 norm of  d/dt rho + D_c(w rho)  over the interior steps.

    The flux is averaged between the two time levels of each step, so for a
    smooth pair the residual decays at second order under (h, dt ~ h^2)
    refinement; a small residual certifies membership in the admissible set
    of continuity-equation pairs.
    """
    if velocity.kind is not FieldKind.VELOCITY:
        raise ValueError("expected a VELOCITY field")
    if velocity.values.shape != flow.densities.shape:
        raise ValueError("flow and velocity must share the space-time grid")
    h, dt = flow.h, flow.dt
    momentum = velocity.values * flow.densities
    time_derivative = (flow.densities[1:] - flow.densities[:-1]) / dt
    flux_div = central_difference(0.5 * (momentum[1:] + momentum[:-1]), h)
    residual = time_derivative + flux_div
    return float(np.sqrt(dt * h * np.sum(residual * residual)))
