"""The assembled context-conditioned flux operator model."""

from __future__ import annotations

import itertools

import numpy as np

from . import tensor as T
from .encoder import EncoderConfig, encode, init_encoder_params
from .exceptions import ConfigError, RolloutError
from .fluxno import FluxNOConfig, step_with_theta
from .hyper import generate, init_hyper_params, param_layout
from .params import named_tensors
from .tensor import Tensor


class HFluxNO:
    """Encoder + hypernetwork + generated conservative flux operator.

    Given a context window of k snapshots the encoder produces a context
    vector, the hypernetwork turns it into the parameters of the flux
    operator, and the state is advanced by a flux-difference update.
    """

    def __init__(self, encoder_config: EncoderConfig, fluxno_config: FluxNOConfig,
                 n_x, d, rng):
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        self.encoder_config = encoder_config
        self.fluxno_config = fluxno_config
        self.n_x = int(n_x)
        self.d = int(d)
        encoder_config.n_patches(n_x)  # validates divisibility early
        self.layout = param_layout(fluxno_config, d)
        self.encoder_params = init_encoder_params(encoder_config, n_x, d, rng)
        self.hyper_params = init_hyper_params(
            self.layout, encoder_config.embed_dim, rng
        )

    # ----- parameters -----------------------------------------------------
    def named_parameters(self):
        return itertools.chain(
            named_tensors(self.encoder_params, "encoder"),
            named_tensors(self.hyper_params, "hyper"),
        )

    def parameters(self):
        return [t for _, t in self.named_parameters()]

    def n_parameters(self):
        return sum(t.size for t in self.parameters())

    # ----- forward --------------------------------------------------------
    def context_params(self, u_context):
        """Generated flat parameter vector(s) from windows [B, k, N_x, d]."""
        c = encode(self.encoder_params, self.encoder_config, u_context)
        return generate(self.hyper_params, c)

    def predict_next(self, u_context, dt, dx, theta=None):
        """One-step prediction [B, k, N_x, d] -> [B, N_x, d] (batched only)."""
        u_context = T.as_tensor(u_context)
        if u_context.ndim != 4:
            raise ConfigError(f"expected [B, k, N_x, d] context, got {u_context.shape}")
        if theta is None:
            theta = self.context_params(u_context)
        k = u_context.shape[1]
        u_n = u_context[:, k - 1]  # [B, N_x, d]
        state = T.transpose(u_n, (0, 2, 1))  # [B, d, N_x]
        nxt = step_with_theta(theta, state, self.layout, self.fluxno_config, dt, dx)
        return T.transpose(nxt, (0, 2, 1))

    def rollout(self, u_context, n_steps, dt, dx, mode="refresh"):
        """Autoregressive prediction from one context window [k, N_x, d].

        mode="refresh" regenerates the operator from the sliding window after
        every step; mode="frozen" keeps the parameters from the initial
        context. Returns the predicted snapshots [n_steps, N_x, d].
        """
        if n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if mode not in ("refresh", "frozen"):
            raise ConfigError(f"unknown rollout mode {mode!r}")
        window = np.asarray(u_context, dtype=np.float64)
        if window.ndim != 3:
            raise ConfigError(f"expected [k, N_x, d] context, got {window.shape}")
        out = np.empty((n_steps,) + window.shape[1:])
        theta = None
        for j in range(n_steps):
            if theta is None or mode == "refresh":
                theta = self.context_params(window[None])
            pred = self.predict_next(
                T.as_tensor(window[None]), dt, dx, theta=theta
            ).data[0]
            if not np.all(np.isfinite(pred)):
                raise RolloutError(f"non-finite prediction at rollout step {j}", step=j)
            out[j] = pred
            window = np.concatenate([window[1:], pred[None]], axis=0)
        return out
