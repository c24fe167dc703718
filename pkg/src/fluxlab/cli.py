"""Command-line pipeline: datagen -> train -> eval -> export-plot."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from .config import ENV_SEED, RunConfig, echo_config, load_config
from .datasets import Dataset, DatasetManifest, generate_split, SPLITS
from .encoder import EncoderConfig
from .evaluation import PROTOCOLS, evaluate
from .exceptions import FluxLabError
from .fluxno import FluxNOConfig
from .model import HFluxNO
from .training import (
    AdamW,
    OptimizerConfig,
    load_checkpoint,
    lr_schedule,
    save_checkpoint,
    train_step,
)
from .datasets import sample_batch


def _fail(exc):
    raise click.ClickException(str(exc))


def _write_invocation(out_dir, **kwargs):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "invocation.json", "w", encoding="utf-8") as f:
        json.dump(kwargs, f, indent=2, sort_keys=True)
        f.write("\n")


@click.group()
def main():
    """Conservative neural flux operators: data, training, evaluation."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--split", required=True, type=click.Choice(SPLITS))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--jobs", default=1, show_default=True, help="parallel workers")
def datagen(config_path, split, out_dir, jobs):
    """Generate one dataset split (train/val/test or an OOD variant)."""
    try:
        cfg = load_config(config_path)
        ds = cfg.dataset
        manifest = DatasetManifest.create(
            ds.equation, split, ds.n_coeffs, ds.n_ics, ds.n_t, ds.n_x, ds.dt,
            seed=cfg.seed,
        )
        generate_split(manifest, out_dir, jobs=jobs)
        echo_config(cfg, out_dir)
        _write_invocation(out_dir, command="datagen", split=split, jobs=jobs,
                          seed=cfg.seed)
    except FluxLabError as e:
        _fail(e)
    click.echo(f"wrote {manifest.split} split ({manifest.equation}, "
               f"{manifest.ic_family}) to {out_dir}")


def _model_rng(seed):
    return np.random.default_rng(np.random.SeedSequence([seed, 0x6D6F64]))


def _sampler_rng(seed):
    return np.random.default_rng(np.random.SeedSequence([seed, 0x73616D]))


def _latest_checkpoint(out_dir):
    ckpts = sorted(Path(out_dir).glob("checkpoints/step-*"))
    return ckpts[-1] if ckpts else None


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--steps", default=None, type=int, help="override [train].steps")
@click.option("--seed", default=None, type=int, help="override config/env seed")
@click.option("--resume", is_flag=True, help="continue from the latest checkpoint")
def train(config_path, data_dir, out_dir, steps, seed, resume):
    """Train on a generated split; writes checkpoints and a loss CSV."""
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg = RunConfig(seed=seed, dataset=cfg.dataset, encoder=cfg.encoder,
                            fluxno=cfg.fluxno, train=cfg.train)
        out_dir = Path(out_dir)
        loss_path = out_dir / "loss.csv"
        if loss_path.exists() and not resume:
            _fail(f"{loss_path} exists; pass --resume to continue")
        dataset = Dataset(data_dir)
        m = dataset.manifest
        total_steps = cfg.train.steps if steps is None else steps
        opt_cfg = OptimizerConfig(
            peak_lr=cfg.train.peak_lr,
            floor_lr=cfg.train.floor_lr,
            warmup_frac=cfg.train.warmup_frac,
            weight_decay=cfg.train.weight_decay,
            clip_norm=cfg.train.clip_norm,
        )
        data_meta = {"equation": m.equation, "n_x": m.n_x, "n_q": m.n_q,
                     "dt": m.dt, "dx": m.dx, "k": cfg.train.context_len}

        start_step = 0
        history = []
        ckpt = _latest_checkpoint(out_dir) if resume else None
        if ckpt is not None:
            model, optimizer, doc = load_checkpoint(ckpt)
            start_step = doc["step"]
            rng = _sampler_rng(cfg.seed)
            if doc.get("sampler_state"):
                rng.bit_generator.state = doc["sampler_state"]
            if loss_path.exists():
                with open(loss_path, newline="") as f:
                    history = [row for row in csv.reader(f)][1:]
                history = [r for r in history if int(r[0]) < start_step]
        else:
            model = HFluxNO(
                EncoderConfig(**asdict(cfg.encoder)),
                FluxNOConfig(**asdict(cfg.fluxno)),
                n_x=m.n_x, d=m.n_q, rng=_model_rng(cfg.seed),
            )
            optimizer = AdamW(list(model.named_parameters()), opt_cfg)
            rng = _sampler_rng(cfg.seed)

        warmup = int(round(opt_cfg.warmup_frac * total_steps)) if total_steps else 0
        k = cfg.train.context_len
        every = max(1, cfg.train.checkpoint_every)
        out_dir.mkdir(parents=True, exist_ok=True)
        for step in range(start_step, total_steps):
            lr = lr_schedule(step, warmup, max(total_steps, 1),
                             opt_cfg.peak_lr, opt_cfg.floor_lr)
            windows = sample_batch(dataset, cfg.train.batch_size, k, rng)
            loss = train_step(model, optimizer, windows, lr)
            history.append([step, f"{lr:.10e}", f"{loss:.10e}"])
            if (step + 1) % every == 0 and step + 1 < total_steps:
                save_checkpoint(
                    out_dir / "checkpoints" / f"step-{step + 1:06d}",
                    model, optimizer, step + 1, data_meta,
                    sampler_state=rng.bit_generator.state,
                    optimizer_config=opt_cfg,
                )
        save_checkpoint(
            out_dir / "checkpoints" / f"step-{total_steps:06d}",
            model, optimizer, total_steps, data_meta,
            sampler_state=rng.bit_generator.state, optimizer_config=opt_cfg,
        )
        with open(loss_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "lr", "loss"])
            writer.writerows(history)
        echo_config(cfg, out_dir)
        _write_invocation(out_dir, command="train", data=str(data_dir),
                          steps=total_steps, seed=cfg.seed, resume=bool(resume))
    except FluxLabError as e:
        _fail(e)
    click.echo(f"trained {total_steps} steps; artifacts in {out_dir}")


@main.command("eval")
@click.option("--checkpoint", "ckpt_dir", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--protocol", required=True, type=click.Choice(PROTOCOLS))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--rollout-steps", default=20, show_default=True)
@click.option("--mode", default="refresh", type=click.Choice(["refresh", "frozen"]),
              show_default=True)
@click.option("--max-windows", default=None, type=int,
              help="cap single-step windows per trajectory")
@click.option("--max-trajectories", default=None, type=int,
              help="cap trajectories for rollout protocols")
def eval_cmd(ckpt_dir, data_dir, protocol, out_dir, rollout_steps, mode,
             max_windows, max_trajectories):
    """Evaluate a checkpoint on a dataset split (no fine-tuning)."""
    try:
        model, _, doc = load_checkpoint(ckpt_dir)
        dataset = Dataset(data_dir)
        m = dataset.manifest
        meta = doc.get("data", {})
        if m.n_q != doc["configs"]["d"]:
            _fail(f"checkpoint expects d={doc['configs']['d']} channels, "
                  f"dataset has {m.n_q}")
        if m.n_x != doc["configs"]["n_x"]:
            _fail(f"checkpoint trained on N_x={doc['configs']['n_x']}, "
                  f"dataset has {m.n_x}")
        k = int(meta.get("k", 20))
        report, example = evaluate(
            model, dataset, protocol, k, n_steps=rollout_steps, mode=mode,
            max_windows=max_windows, max_trajectories=max_trajectories,
        )
        report["checkpoint"] = Path(ckpt_dir).name  # path-free for bit-exact reruns
        report["dataset"] = m.to_json()
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if example is not None:
            example["pred"].astype("<f4").tofile(out_dir / "pred.f32")
            example["truth"].astype("<f4").tofile(out_dir / "true.f32")
            report["example"] = {
                "c_idx": example["c_idx"],
                "ic_idx": example["ic_idx"],
                "shape": list(example["pred"].shape),
                "pred_file": "pred.f32",
                "true_file": "true.f32",
            }
        with open(out_dir / "metrics.json", "w", encoding="utf-8") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
        _write_invocation(out_dir, command="eval", checkpoint=str(ckpt_dir),
                          data=str(data_dir), protocol=protocol, mode=mode,
                          rollout_steps=rollout_steps)
    except FluxLabError as e:
        _fail(e)
    click.echo(
        f"{protocol}: rel_l2 {report['rel_l2']['mean']:.4e} "
        f"+- {report['rel_l2']['std']:.4e} -> {out_dir}/metrics.json"
    )


@main.command("export-plot")
@click.option("--eval-dir", required=True, type=click.Path(exists=True))
@click.option("--kind", required=True,
              type=click.Choice(["error_curve", "trajectory_heatmap"]))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--svg", "svg_path", default=None, type=click.Path(),
              help="also render a standalone SVG")
@click.option("--channel", default=0, show_default=True,
              help="state channel for heatmaps")
def export_plot(eval_dir, kind, out_path, svg_path, channel):
    """Convert eval artifacts to plot-ready CSV (and optionally SVG)."""
    eval_dir = Path(eval_dir)
    metrics_path = eval_dir / "metrics.json"
    if not metrics_path.exists():
        _fail(f"no metrics.json in {eval_dir}")
    with open(metrics_path, encoding="utf-8") as f:
        report = json.load(f)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    if kind == "error_curve":
        per_time = report.get("per_time")
        if per_time is None:
            _fail("metrics.json has no per-time curve; run a rollout protocol")
        rows = list(zip(per_time["time"], per_time["rel_l2_mean"],
                        per_time["rel_l2_std"]))
        with open(out_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["time", "mean", "std"])
            writer.writerows(rows)
        if svg_path:
            _render_error_curve(per_time, svg_path)
    else:
        example = report.get("example")
        if example is None:
            _fail("metrics.json has no example rollout; run a rollout protocol")
        shape = tuple(example["shape"])
        pred = np.fromfile(eval_dir / example["pred_file"], dtype="<f4").reshape(shape)
        true = np.fromfile(eval_dir / example["true_file"], dtype="<f4").reshape(shape)
        if not (0 <= channel < shape[2]):
            _fail(f"channel {channel} outside [0, {shape[2]})")
        times = report["per_time"]["time"]
        dx = report["dataset"]["dx"]
        with open(out_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["t", "x", "value", "prediction", "abs_error"])
            for ti in range(shape[0]):
                for xi in range(shape[1]):
                    v = float(true[ti, xi, channel])
                    p = float(pred[ti, xi, channel])
                    writer.writerow([times[ti], (xi + 0.5) * dx, v, p, abs(p - v)])
        if svg_path:
            _render_heatmap(pred[..., channel], true[..., channel], svg_path)
    _write_invocation(out_path.parent, command="export-plot", kind=kind,
                      eval_dir=str(eval_dir))
    click.echo(f"wrote {out_path}" + (f" and {svg_path}" if svg_path else ""))


def _render_error_curve(per_time, svg_path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = np.asarray(per_time["time"])
    mean = np.asarray(per_time["rel_l2_mean"])
    std = np.asarray(per_time["rel_l2_std"])
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(t, mean, lw=1.5)
    ax.fill_between(t, mean - std, mean + std, alpha=0.3)
    ax.set_xlabel("time")
    ax.set_ylabel("relative l2 error")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)


def _render_heatmap(pred, true, svg_path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 3, figsize=(10, 3), sharey=True)
    for ax, arr, title in zip(
        axes, [true, pred, np.abs(pred - true)],
        ["reference", "prediction", "abs error"],
    ):
        im = ax.imshow(arr, aspect="auto", origin="lower", cmap="viridis")
        ax.set_title(title)
        ax.set_xlabel("x index")
        fig.colorbar(im, ax=ax)
    axes[0].set_ylabel("step")
    fig.tight_layout()
    fig.savefig(svg_path, format="svg")
    plt.close(fig)


if __name__ == "__main__":
    main()
