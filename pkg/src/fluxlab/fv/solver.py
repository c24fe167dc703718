"""Reference solver driving the step kernels: CFL control and save-time grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import CFLViolationError, ConfigError, DivergenceError, ShapeError
from . import kernels
from .models import FluxModel, H_FLOOR

BLOWUP_THRESHOLD = 1e6
_SPEED_FLOOR = 1e-12  # avoids dt = inf on zero-flux states


@dataclass(frozen=True)
class SolverConfig:
    """MUSCL/MC/Rusanov/SSP-RK2 scheme parameters; only CFL numbers vary."""

    cfl_desired: float = 0.5
    cfl_max: float = 0.9
    limiter: str = "MC"
    reconstruction: str = "MUSCL"
    time_integrator: str = "SSP-RK2"

    def __post_init__(self):
        if not (0.0 < self.cfl_desired <= self.cfl_max < 1.0):
            raise ConfigError(
                f"need 0 < cfl_desired <= cfl_max < 1, got "
                f"{self.cfl_desired}, {self.cfl_max}"
            )
        if self.limiter != "MC" or self.reconstruction != "MUSCL" \
                or self.time_integrator != "SSP-RK2":
            raise ConfigError("only the MUSCL/MC/SSP-RK2 scheme is implemented")


def max_wave_speed(model: FluxModel, state) -> float:
    """Largest characteristic speed over all cells."""
    state = np.ascontiguousarray(state, dtype=np.float64)
    if state.size == 0:
        raise ShapeError("max_wave_speed of an empty field")
    if state.ndim != 2 or state.shape[0] != model.d:
        raise ShapeError(f"state must be [d={model.d}, N], got {state.shape}")
    return kernels.max_wave_speed(model.kind_code, model.coeff_array, state)


def step(model: FluxModel, state, dt, dx, config: SolverConfig = None):
    """One SSP-RK2 step; validates the CFL bound against the current state."""
    if config is None:
        config = SolverConfig()
    state = np.ascontiguousarray(state, dtype=np.float64)
    s = max_wave_speed(model, state)
    if dt * s / dx > config.cfl_max:
        raise CFLViolationError(
            f"dt={dt:g} gives CFL {dt * s / dx:.3f} > cfl_max={config.cfl_max}"
        )
    return kernels.rk2_step(model.kind_code, model.coeff_array, state, dt, dx)


def solve(model: FluxModel, ic, t_save, config: SolverConfig = None):
    """Integrate from the initial field to every save time.

    ic: [d, N] on the periodic unit domain (dx = 1/N). t_save: increasing
    times, t_save[0] may be 0 (the IC is stored as-is). Internal steps follow
    cfl_desired, with the diffusive bound added for viscous Burgers, and the
    last step before each save time is shortened to land exactly.

    Returns the trajectory as [N_t, N_x, d].
    """
    if config is None:
        config = SolverConfig()
    u = np.ascontiguousarray(ic, dtype=np.float64).copy()
    if u.ndim != 2 or u.shape[0] != model.d:
        raise ShapeError(f"initial condition must be [d={model.d}, N], got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise DivergenceError("non-finite initial condition", step=0)
    if model.kind == "shallow_water" and np.any(u[0] <= 0.0):
        raise ConfigError("shallow-water initial height must be positive")
    t_save = np.asarray(t_save, dtype=np.float64)
    if t_save.ndim != 1 or len(t_save) == 0 or np.any(np.diff(t_save) <= 0):
        raise ConfigError("t_save must be a nonempty increasing 1-D grid")
    n = u.shape[1]
    dx = 1.0 / n
    kind = model.kind_code
    coeffs = model.coeff_array
    nu = model.nu
    out = np.empty((len(t_save), n, model.d))
    t = 0.0
    n_steps = 0
    for j, ts in enumerate(t_save):
        while t < ts - 1e-12:
            s = kernels.max_wave_speed(kind, coeffs, u)
            dt = config.cfl_desired * dx / max(s, _SPEED_FLOOR)
            if nu > 0.0:
                dt = min(dt, config.cfl_desired * dx * dx / (2.0 * nu))
            dt = min(dt, ts - t)
            u = kernels.rk2_step(kind, coeffs, u, dt, dx)
            n_steps += 1
            t += dt
            if np.max(np.abs(u)) > BLOWUP_THRESHOLD:
                raise DivergenceError(
                    f"solution exceeded {BLOWUP_THRESHOLD:g} at internal step "
                    f"{n_steps} (t={t:.6f})",
                    step=n_steps,
                )
        t = float(ts)
        out[j] = u.T
    return out
