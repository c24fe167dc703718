"""Temporally recurrent vision-transformer encoder.

A context window of k snapshots is tokenized per time slice by a patch
embedding, then L layers alternate a causal temporal mixer per spatial token
(gated linear recurrence behind a depthwise causal convolution) with
self-attention per time step. The context vector is the spatial mean of the
normalized tokens at the final time step.

Attention mixes space only and the temporal path is strictly causal, so
changing the input at time j can never affect internal states before j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .exceptions import ConfigError
from .tensor import Tensor

GATE_SHARPNESS = 8.0  # exponent scale of the decay gate
_DECAY_INIT_RANGE = (0.9, 0.999)  # initial sigmoid(decay_logit) band


@dataclass(frozen=True)
class EncoderConfig:
    patch_size: int = 4
    embed_dim: int = 64
    layers: int = 2
    heads: int = 4
    conv_width: int = 4
    coord_channel: bool = False

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by heads {self.heads}"
            )
        if self.patch_size < 1 or self.conv_width < 1 or self.layers < 0:
            raise ConfigError("patch_size, conv_width >= 1 and layers >= 0 required")

    def n_patches(self, n_x):
        if n_x % self.patch_size != 0:
            raise ConfigError(
                f"grid size {n_x} not divisible by patch_size {self.patch_size}"
            )
        return n_x // self.patch_size

    def in_dim(self, d):
        return d * self.patch_size + (1 if self.coord_channel else 0)


@dataclass
class TemporalParams:
    ln_gain: Tensor
    ln_bias: Tensor
    conv_kernel: Tensor  # [e, w_t]
    w_decay_gate: Tensor  # [e, e]
    w_input_gate: Tensor  # [e, e]
    decay_logit: Tensor  # [e]
    w_out: Tensor  # [e, e]


@dataclass
class SpatialParams:
    ln_attn_gain: Tensor
    ln_attn_bias: Tensor
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    ln_mlp_gain: Tensor
    ln_mlp_bias: Tensor
    w_mlp1: Tensor  # [e, 4e]
    b_mlp1: Tensor
    w_mlp2: Tensor  # [4e, e]
    b_mlp2: Tensor


@dataclass
class EncoderLayerParams:
    temporal: TemporalParams
    spatial: SpatialParams


@dataclass
class EncoderParams:
    patch_weight: Tensor  # [in_dim, e]
    patch_bias: Tensor  # [e]
    pos_embed: Tensor  # [P, e]
    layers: list
    final_gain: Tensor
    final_bias: Tensor


def init_encoder_params(config: EncoderConfig, n_x, d, rng) -> EncoderParams:
    e = config.embed_dim
    p = config.n_patches(n_x)
    in_dim = config.in_dim(d)

    def w(shape, fan_in):
        return T.param(rng, shape, scale=1.0 / math.sqrt(fan_in))

    def ones(shape):
        return Tensor(np.ones(shape), requires_grad=True)

    def zeros(shape):
        return Tensor(np.zeros(shape), requires_grad=True)

    layers = []
    for _ in range(config.layers):
        lo, hi = _DECAY_INIT_RANGE
        decay = rng.uniform(lo, hi, size=e)
        temporal = TemporalParams(
            ln_gain=ones(e),
            ln_bias=zeros(e),
            conv_kernel=w((e, config.conv_width), config.conv_width),
            w_decay_gate=w((e, e), e),
            w_input_gate=w((e, e), e),
            decay_logit=Tensor(np.log(decay / (1.0 - decay)), requires_grad=True),
            w_out=w((e, e), e),
        )
        spatial = SpatialParams(
            ln_attn_gain=ones(e),
            ln_attn_bias=zeros(e),
            w_q=w((e, e), e),
            w_k=w((e, e), e),
            w_v=w((e, e), e),
            w_o=w((e, e), e),
            ln_mlp_gain=ones(e),
            ln_mlp_bias=zeros(e),
            w_mlp1=w((e, 4 * e), e),
            b_mlp1=zeros(4 * e),
            w_mlp2=w((4 * e, e), 4 * e),
            b_mlp2=zeros(e),
        )
        layers.append(EncoderLayerParams(temporal=temporal, spatial=spatial))

    return EncoderParams(
        patch_weight=w((in_dim, e), in_dim),
        patch_bias=zeros(e),
        pos_embed=T.param(rng, (p, e), scale=0.02),
        layers=layers,
        final_gain=ones(e),
        final_bias=zeros(e),
    )


def patch_embed(params: EncoderParams, config: EncoderConfig, u):
    """Tokenize snapshots: [..., k, N_x, d] -> [..., k, P, e]."""
    x = T.as_tensor(u)
    n_x, d = x.shape[-2], x.shape[-1]
    p = config.n_patches(n_x)
    lead = x.shape[:-2]
    x = T.reshape(x, lead + (p, config.patch_size * d))
    if config.coord_channel:
        centers = (np.arange(p) * config.patch_size + config.patch_size / 2.0) / n_x
        coord = np.broadcast_to(centers[:, None], lead + (p, 1))
        x = T.concat([x, T.as_tensor(coord.copy())], axis=-1)
    tokens = T.matmul(x, params.patch_weight) + params.patch_bias
    return tokens + params.pos_embed


def temporal_block(tp: TemporalParams, x):
    """Residual causal mixer along the second-to-last (time) axis [..., k, e]."""
    h = T.layer_norm(x, tp.ln_gain, tp.ln_bias)
    h = T.causal_depthwise_conv1d(h, tp.conv_kernel)
    # decay in (0,1): sigmoid(decay_logit) ** (sharpness * sigmoid(gate));
    # computed in log space so the amplitude sqrt(1-a^2) stays in-domain.
    log_unit = T.log(T.sigmoid(tp.decay_logit))
    decay_gate = T.sigmoid(T.matmul(h, tp.w_decay_gate))
    log_a = T.mul(T.mul(decay_gate, GATE_SHARPNESS), log_unit)
    a = T.exp(log_a)
    amp = T.sqrt(T.clamp_min(1.0 - a * a, 1e-30))
    gate_in = T.sigmoid(T.matmul(h, tp.w_input_gate))
    drive = amp * (gate_in * h)
    k = x.shape[-2]
    state = None
    states = []
    for t in range(k):
        idx = (Ellipsis, t, slice(None))
        xt = drive[idx]
        if state is None:
            state = xt
        else:
            state = a[idx] * state + xt
        states.append(state)
    rec = T.stack(states, axis=-2)
    return x + T.matmul(rec, tp.w_out)


def spatial_block(sp: SpatialParams, x, heads):
    """Pre-norm self-attention + MLP over the second-to-last (token) axis."""
    e = x.shape[-1]
    e_h = e // heads
    h = T.layer_norm(x, sp.ln_attn_gain, sp.ln_attn_bias)

    def split_heads(t):
        t = T.reshape(t, t.shape[:-1] + (heads, e_h))
        nd = t.ndim
        perm = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
        return T.transpose(t, perm)

    q = split_heads(T.matmul(h, sp.w_q))
    k = split_heads(T.matmul(h, sp.w_k))
    v = split_heads(T.matmul(h, sp.w_v))
    att = T.softmax_attention(q, k, v)  # [..., heads, P, e_h]
    nd = att.ndim
    perm = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
    att = T.transpose(att, perm)
    att = T.reshape(att, att.shape[:-2] + (e,))
    x = x + T.matmul(att, sp.w_o)

    h2 = T.layer_norm(x, sp.ln_mlp_gain, sp.ln_mlp_bias)
    inner = T.gelu(T.matmul(h2, sp.w_mlp1) + sp.b_mlp1)
    return x + T.matmul(inner, sp.w_mlp2) + sp.b_mlp2


def _run_layers(params, config, tokens, collect=None):
    """tokens [B, k, P, e] through all alternating layers."""
    for layer in params.layers:
        t = T.transpose(tokens, (0, 2, 1, 3))  # [B, P, k, e]
        t = temporal_block(layer.temporal, t)
        tokens = T.transpose(t, (0, 2, 1, 3))
        if collect is not None:
            collect.append(tokens.data.copy())
        tokens = spatial_block(layer.spatial, tokens, config.heads)
        if collect is not None:
            collect.append(tokens.data.copy())
    return tokens


def encode(params: EncoderParams, config: EncoderConfig, u):
    """Context windows to context vectors: [B, k, N_x, d] -> [B, e].

    An unbatched [k, N_x, d] window yields an [e] vector.
    """
    x = T.as_tensor(u)
    unbatched = x.ndim == 3
    if unbatched:
        x = T.reshape(x, (1,) + x.shape)
    if x.shape[1] < 1:
        raise ConfigError("context window must hold at least one snapshot")
    tokens = patch_embed(params, config, x)
    tokens = _run_layers(params, config, tokens)
    normed = T.layer_norm(tokens, params.final_gain, params.final_bias)
    last = normed[:, tokens.shape[1] - 1]  # [B, P, e]
    c = T.tmean(last, axis=-2)
    if unbatched:
        c = T.reshape(c, (c.shape[-1],))
    return c


def encode_with_states(params: EncoderParams, config: EncoderConfig, u):
    """encode plus the raw token states after every half-layer (for tests)."""
    x = T.as_tensor(u)
    if x.ndim == 3:
        x = T.reshape(x, (1,) + x.shape)
    states = []
    tokens = patch_embed(params, config, x)
    states.append(tokens.data.copy())
    tokens = _run_layers(params, config, tokens, collect=states)
    normed = T.layer_norm(tokens, params.final_gain, params.final_bias)
    states.append(normed.data.copy())
    last = normed[:, tokens.shape[1] - 1]
    c = T.tmean(last, axis=-2)
    return c, states
