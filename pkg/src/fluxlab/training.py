"""Single-step MSE training: AdamW, warmup-cosine schedule, checkpoints."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .datasets import sample_batch
from .encoder import EncoderConfig
from .exceptions import ConfigError, FormatError
from .fluxno import FluxNOConfig
from .model import HFluxNO
from .tensor import Tape


@dataclass(frozen=True)
class OptimizerConfig:
    peak_lr: float = 1e-3
    floor_lr: float = 1e-5
    warmup_frac: float = 0.05
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0


def lr_schedule(step, warmup_steps, total_steps, peak, floor):
    """Linear 0 -> peak over the warmup, then cosine peak -> floor."""
    if not (0 <= step <= total_steps):
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    if warmup_steps >= total_steps:
        raise ConfigError("warmup must be shorter than the total schedule")
    if warmup_steps > 0 and step < warmup_steps:
        return peak * step / warmup_steps
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return floor + (peak - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Decoupled weight decay Adam over named parameter tensors."""

    def __init__(self, named_params, config: OptimizerConfig):
        self.config = config
        self.names = [name for name, _ in named_params]
        self.params = {name: t for name, t in named_params}
        self.m = {name: np.zeros_like(t.data) for name, t in self.params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in self.params.items()}
        self.step_count = 0

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def clip_gradients(self):
        """Scale all gradients to the configured global norm; returns the norm."""
        total = 0.0
        for t in self.params.values():
            if t.grad is not None:
                total += float(np.sum(t.grad * t.grad))
        norm = math.sqrt(total)
        clip = self.config.clip_norm
        if clip > 0 and norm > clip:
            scale = clip / norm
            for t in self.params.values():
                if t.grad is not None:
                    t.grad = t.grad * scale
        return norm

    def step(self, lr):
        cfg = self.config
        self.step_count += 1
        b1c = 1.0 - cfg.beta1 ** self.step_count
        b2c = 1.0 - cfg.beta2 ** self.step_count
        for name in self.names:
            t = self.params[name]
            g = t.grad
            if g is None:
                g = np.zeros_like(t.data)
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            update = (m / b1c) / (np.sqrt(v / b2c) + cfg.eps)
            t.data -= lr * (update + cfg.weight_decay * t.data)


def stack_windows(windows):
    """List of ContextWindow -> (U [B,k,Nx,d], target [B,Nx,d], dt, dx)."""
    u = np.stack([w.u for w in windows])
    target = np.stack([w.target for w in windows])
    return u, target, windows[0].dt, windows[0].dx


def mse_loss(model: HFluxNO, u, target, dt, dx):
    pred = model.predict_next(T.as_tensor(u), dt, dx)
    diff = pred - T.as_tensor(target)
    return T.tmean(diff * diff)


def train_step(model: HFluxNO, optimizer: AdamW, windows, lr):
    """One optimizer update on a batch of context windows; returns the loss."""
    u, target, dt, dx = stack_windows(windows)
    optimizer.zero_grad()
    with Tape():
        loss = mse_loss(model, u, target, dt, dx)
    value = loss.item()
    if not math.isfinite(value):
        norms = {n: float(np.abs(t.data).max()) for n, t in list(optimizer.params.items())[:5]}
        raise FloatingPointError(
            f"non-finite training loss {value}; leading param norms {norms}"
        )
    loss.backward()
    optimizer.clip_gradients()
    optimizer.step(lr)
    return value


def train(model, dataset, optimizer_config, steps, batch_size, k, rng,
          log_every=1, on_step=None):
    """Plain training loop over uniformly sampled windows.

    on_step(step, lr, loss) fires after every optimizer update. Returns the
    optimizer and the (step, lr, loss) history.
    """
    optimizer = AdamW(list(model.named_parameters()), optimizer_config)
    warmup = int(round(optimizer_config.warmup_frac * steps))
    history = []
    for step in range(steps):
        lr = lr_schedule(step, warmup, steps, optimizer_config.peak_lr,
                         optimizer_config.floor_lr)
        windows = sample_batch(dataset, batch_size, k, rng)
        loss = train_step(model, optimizer, windows, lr)
        history.append((step, lr, loss))
        if on_step is not None and step % log_every == 0:
            on_step(step, lr, loss)
    return optimizer, history


# --------------------------------------------------------------------------
# checkpoints: params.f64 (flat little-endian) + checkpoint.json
# --------------------------------------------------------------------------

def _flat_layout(named):
    layout = []
    offset = 0
    for name, t in named:
        layout.append({"name": name, "shape": list(t.shape), "offset": offset})
        offset += t.size
    return layout, offset


def save_checkpoint(out_dir, model: HFluxNO, optimizer: AdamW, step,
                    data_meta=None, sampler_state=None,
                    optimizer_config: OptimizerConfig = None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    named = list(model.named_parameters())
    layout, total = _flat_layout(named)
    flat = np.empty(total)
    for entry, (_, t) in zip(layout, named):
        off = entry["offset"]
        flat[off:off + t.size] = t.data.reshape(-1)
    flat.astype("<f8").tofile(out_dir / "params.f64")

    moments = np.empty(2 * total)
    for entry, (name, _) in zip(layout, named):
        off = entry["offset"]
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        moments[off:off + size] = optimizer.m[name].reshape(-1)
        moments[total + off:total + off + size] = optimizer.v[name].reshape(-1)
    moments.astype("<f8").tofile(out_dir / "moments.f64")

    doc = {
        "step": int(step),
        "optimizer_steps": int(optimizer.step_count),
        "n_parameters": int(total),
        "layout": layout,
        "params_file": "params.f64",
        "moments_file": "moments.f64",
        "configs": {
            "encoder": asdict(model.encoder_config),
            "fluxno": asdict(model.fluxno_config),
            "n_x": model.n_x,
            "d": model.d,
        },
        "optimizer": asdict(optimizer_config or optimizer.config),
        "data": data_meta or {},
        "sampler_state": sampler_state,
    }
    with open(out_dir / "checkpoint.json", "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return out_dir


def load_checkpoint(ckpt_dir):
    """Rebuild (model, optimizer, doc) from a checkpoint directory."""
    ckpt_dir = Path(ckpt_dir)
    path = ckpt_dir / "checkpoint.json"
    if not path.exists():
        raise FormatError(f"no checkpoint.json in {ckpt_dir}")
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    cfgs = doc["configs"]
    model = HFluxNO(
        EncoderConfig(**cfgs["encoder"]),
        FluxNOConfig(**cfgs["fluxno"]),
        n_x=cfgs["n_x"],
        d=cfgs["d"],
        rng=np.random.default_rng(0),
    )
    named = list(model.named_parameters())
    total = doc["n_parameters"]
    flat = np.fromfile(ckpt_dir / doc["params_file"], dtype="<f8")
    if flat.size != total:
        raise FormatError(
            f"params.f64 holds {flat.size} values, checkpoint says {total}"
        )
    by_name = {entry["name"]: entry for entry in doc["layout"]}
    for name, t in named:
        entry = by_name.get(name)
        if entry is None or tuple(entry["shape"]) != t.shape:
            raise FormatError(f"checkpoint layout mismatch at {name}")
        off = entry["offset"]
        t.data = flat[off:off + t.size].reshape(t.shape).copy()

    optimizer = AdamW(named, OptimizerConfig(**doc["optimizer"]))
    optimizer.step_count = doc["optimizer_steps"]
    moments = np.fromfile(ckpt_dir / doc["moments_file"], dtype="<f8")
    if moments.size != 2 * total:
        raise FormatError("moments.f64 size mismatch")
    for name, t in named:
        off = by_name[name]["offset"]
        optimizer.m[name] = moments[off:off + t.size].reshape(t.shape).copy()
        optimizer.v[name] = moments[total + off:total + off + t.size].reshape(t.shape).copy()
    return model, optimizer, doc
