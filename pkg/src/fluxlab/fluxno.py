"""Generated flux operator and the conservative finite-volume update.

Interface fluxes are produced once, on the right-shifted stencil features;
the left-interface flux of cell i is the right-interface flux of cell i-1,
obtained by a circular shift. The update changes the state only through
flux differences, so the per-channel cell sum is conserved to roundoff for
any parameter vector - the architecture's core inductive bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import ConfigError

_GELU = T.gelu


@dataclass(frozen=True)
class FluxNOConfig:
    stencil_half_width: int = 2  # cells taken from each side of an interface
    width: int = 16  # lifted channel count
    layers: int = 2  # residual spectral layers
    modes: int = 8  # retained Fourier modes
    coord_channel: bool = False

    def __post_init__(self):
        if self.stencil_half_width < 1 or self.width < 1 or self.modes < 1:
            raise ConfigError("stencil_half_width, width, modes must be >= 1")
        if self.layers < 0:
            raise ConfigError("layers must be >= 0")

    def in_dim(self, d):
        return d * 2 * self.stencil_half_width + (1 if self.coord_channel else 0)


def build_stencil(u, config: FluxNOConfig):
    """Right-interface stencil features: [..., d, N] -> [..., feat, N].

    Column i stacks cells i-s+1 .. i+s around interface i+1/2 with periodic
    wrap, channel-minor within each cell. With the coordinate channel on,
    the interface position (i+1)/N is appended as the last feature row.
    The left-interface features are the one-cell circular shift of the
    result: V_left = roll(V_right, 1, axis=-1).
    """
    u = T.as_tensor(u)
    s = config.stencil_half_width
    n = u.shape[-1]
    if n < 2 * s:
        raise ConfigError(f"grid size {n} smaller than stencil span {2 * s}")
    rows = [T.roll(u, -o, axis=-1) for o in range(-s + 1, s + 1)]
    v = T.concat(rows, axis=-2)
    if config.coord_channel:
        coords = ((np.arange(n) + 1.0) / n)[None, :]
        coords = np.broadcast_to(coords, u.shape[:-2] + (1, n))
        v = T.concat([v, T.as_tensor(coords.copy())], axis=-2)
    return v


def flux_eval(theta, stencil, layout):
    """Interface fluxes from stencil features, [..., feat, N] -> [..., d, N].

    theta [..., q] is sliced by the layout: a pointwise lift, residual
    spectral-convolution layers z + gelu(conv(z)), and a pointwise
    projection to one flux per conserved channel. Evaluated once on the
    right-shifted features; the left-interface values are a circular shift
    of the result, never a second evaluation.
    """
    theta = T.as_tensor(theta)
    stencil = T.as_tensor(stencil)
    if stencil.shape[-2] != layout.stencil_features:
        raise ConfigError(
            f"stencil has {stencil.shape[-2]} features, layout expects "
            f"{layout.stencil_features}"
        )
    lift = layout.slice(theta, "lift")
    z = T.matmul(lift, stencil)
    for i in range(layout.layers):
        modes = layout.slice(theta, f"spectral[{i}]")
        z = z + _GELU(T.circular_spectral_conv(z, modes))
    proj = layout.slice(theta, "proj")
    return T.matmul(proj, z)


def conservative_update(u, fluxes, dt, dx):
    """u_i - (dt/dx) (f_{i+1/2} - f_{i-1/2}) with periodic interfaces."""
    if dt <= 0 or dx <= 0:
        raise ConfigError("dt and dx must be positive")
    u = T.as_tensor(u)
    fluxes = T.as_tensor(fluxes)
    left = T.roll(fluxes, 1, axis=-1)
    return u - (dt / dx) * (fluxes - left)


def step_with_theta(theta, u, layout, config: FluxNOConfig, dt, dx):
    """One generated-operator step on states [..., d, N]."""
    v = build_stencil(u, config)
    f = flux_eval(theta, v, layout)
    return conservative_update(u, f, dt, dx)
