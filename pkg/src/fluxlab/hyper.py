"""Hypernetwork: map a context vector to the flat flux-operator parameters.

The final linear layer starts at zero with a learnable base vector, so the
generated operator is initially context-independent, and because the base's
projection slot is zero the initial one-step map is the identity - a stable
starting point for a conservative scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import ConfigError
from .fluxno import FluxNOConfig
from .tensor import Tensor

BOTTLENECK_RATIO = 4  # require e <= q / BOTTLENECK_RATIO


@dataclass(frozen=True)
class ParamLayout:
    """Slot layout of the flat parameter vector.

    slots: tuple of (name, offset, shape); offsets are contiguous and cover
    [0, total). Spectral slots store complex mode weights as a leading
    re/im axis of length 2.
    """

    channels: int
    stencil_features: int
    width: int
    layers: int
    modes: int
    slots: tuple
    total: int

    def slot(self, name):
        for slot_name, offset, shape in self.slots:
            if slot_name == name:
                return offset, shape
        raise KeyError(f"no slot {name!r}")

    def slice(self, theta, name):
        """Extract one slot from theta [..., q] as a [..., *shape] tensor."""
        offset, shape = self.slot(name)
        size = int(np.prod(shape))
        flat = theta[..., offset:offset + size]
        return T.reshape(flat, theta.shape[:-1] + shape)


def param_layout(config: FluxNOConfig, d) -> ParamLayout:
    """Deterministic slot layout for a flux-operator configuration."""
    in_dim = config.in_dim(d)
    w, m = config.width, config.modes
    slots = [("lift", 0, (w, in_dim))]
    offset = w * in_dim
    for i in range(config.layers):
        slots.append((f"spectral[{i}]", offset, (2, w, w, m)))
        offset += 2 * w * w * m
    slots.append(("proj", offset, (d, w)))
    offset += d * w
    return ParamLayout(
        channels=d,
        stencil_features=in_dim,
        width=w,
        layers=config.layers,
        modes=m,
        slots=tuple(slots),
        total=offset,
    )


@dataclass
class HyperParams:
    w1: Tensor  # [e, 2e]
    b1: Tensor
    w2: Tensor  # [2e, 2e]
    b2: Tensor
    w_out: Tensor  # [2e, q], zero at init
    base: Tensor  # [q]


def validate_bottleneck(layout: ParamLayout, context_dim):
    if context_dim > layout.total // BOTTLENECK_RATIO:
        raise ConfigError(
            f"context dim {context_dim} too large for q={layout.total} "
            f"(need e <= q/{BOTTLENECK_RATIO})"
        )


def init_hyper_params(layout: ParamLayout, context_dim, rng) -> HyperParams:
    validate_bottleneck(layout, context_dim)
    e = context_dim
    hidden = 2 * e

    base = np.zeros(layout.total)
    off, shape = layout.slot("lift")
    size = int(np.prod(shape))
    base[off:off + size] = rng.standard_normal(size) / math.sqrt(layout.stencil_features)
    mode_scale = 1.0 / math.sqrt(layout.width * layout.modes)
    for i in range(layout.layers):
        off, shape = layout.slot(f"spectral[{i}]")
        size = int(np.prod(shape))
        base[off:off + size] = rng.standard_normal(size) * mode_scale
    # proj slot stays zero: the generated operator starts as the identity map.

    return HyperParams(
        w1=T.param(rng, (e, hidden), scale=1.0 / math.sqrt(e)),
        b1=Tensor(np.zeros(hidden), requires_grad=True),
        w2=T.param(rng, (hidden, hidden), scale=1.0 / math.sqrt(hidden)),
        b2=Tensor(np.zeros(hidden), requires_grad=True),
        w_out=Tensor(np.zeros((hidden, layout.total)), requires_grad=True),
        base=Tensor(base, requires_grad=True),
    )


def generate(params: HyperParams, c):
    """Context vector(s) [..., e] -> flat parameter vector(s) [..., q]."""
    c = T.as_tensor(c)
    h = T.gelu(T.matmul(c, params.w1) + params.b1)
    h = T.gelu(T.matmul(h, params.w2) + params.b2)
    return T.matmul(h, params.w_out) + params.base
