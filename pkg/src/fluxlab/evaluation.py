"""Evaluation protocols: single step, short rollout, long-time rollout.

All protocols report mean +- std over trajectories, alongside the identity
baseline (next state := current state). Evaluation never mutates the model;
forward passes run outside any tape.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .datasets import Dataset
from .exceptions import ConfigError
from .metrics import rel_metrics
from .model import HFluxNO

PROTOCOLS = ("single_step", "rollout", "long_time")


def _trajectories(dataset: Dataset):
    m = dataset.manifest
    for c in range(m.n_coeffs):
        for i in range(m.n_ics):
            yield c, i, dataset.trajectory(c, i)


def _window_starts(n_t, k, max_windows):
    starts = np.arange(n_t - k)
    if max_windows is not None and len(starts) > max_windows:
        idx = np.linspace(0, len(starts) - 1, max_windows).round().astype(int)
        starts = starts[np.unique(idx)]
    return starts


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


def evaluate_single_step(model, dataset: Dataset, k, max_windows=None):
    """Every valid window of every trajectory, one prediction step each."""
    m = dataset.manifest
    if k + 1 > m.n_t:
        raise ConfigError(f"context k={k} needs k+1 <= N_t={m.n_t}")
    starts = _window_starts(m.n_t, k, max_windows)
    per_traj = {"rel_l2": [], "rel_linf": [], "id_rel_l2": [], "id_rel_linf": []}
    for _, _, traj in _trajectories(dataset):
        windows = np.stack([traj[s:s + k] for s in starts])  # [W, k, Nx, d]
        targets = np.stack([traj[s + k] for s in starts])  # [W, Nx, d]
        preds = model.predict_next(T.as_tensor(windows), m.dt, m.dx).data
        rep = rel_metrics(preds, targets, "per_time_mean")
        per_traj["rel_l2"].append(rep.rel_l2)
        per_traj["rel_linf"].append(rep.rel_linf)
        id_rep = rel_metrics(windows[:, -1], targets, "per_time_mean")
        per_traj["id_rel_l2"].append(id_rep.rel_l2)
        per_traj["id_rel_linf"].append(id_rep.rel_linf)
    return {
        "protocol": "single_step",
        "k": int(k),
        "n_trajectories": dataset.n_trajectories,
        "n_windows_per_trajectory": int(len(starts)),
        "rel_l2": _mean_std(per_traj["rel_l2"]),
        "rel_linf": _mean_std(per_traj["rel_linf"]),
        "identity": {
            "rel_l2": _mean_std(per_traj["id_rel_l2"]),
            "rel_linf": _mean_std(per_traj["id_rel_linf"]),
        },
    }


def evaluate_rollout(model, dataset: Dataset, k, n_steps, mode="refresh",
                     max_trajectories=None):
    """Autoregressive rollout from the first k snapshots of each trajectory."""
    m = dataset.manifest
    if k + n_steps > m.n_t:
        raise ConfigError(
            f"rollout needs k+n <= N_t: {k}+{n_steps} > {m.n_t}"
        )
    scalars = {"rel_l2": [], "rel_linf": [], "l2_full": [], "linf_full": [],
               "id_rel_l2": [], "id_rel_linf": []}
    curves_l2 = []
    curves_linf = []
    mass_drift = []
    example = None
    count = 0
    for c, i, traj in _trajectories(dataset):
        if max_trajectories is not None and count >= max_trajectories:
            break
        count += 1
        context = traj[:k]
        pred = model.rollout(context, n_steps, m.dt, m.dx, mode=mode)
        truth = traj[k:k + n_steps]
        rep = rel_metrics(pred, truth, "per_time_mean")
        full = rel_metrics(pred, truth, "full_grid")
        scalars["rel_l2"].append(rep.rel_l2)
        scalars["rel_linf"].append(rep.rel_linf)
        scalars["l2_full"].append(full.rel_l2)
        scalars["linf_full"].append(full.rel_linf)
        curves_l2.append(rep.per_time_l2)
        curves_linf.append(rep.per_time_linf)
        id_rep = rel_metrics(
            np.broadcast_to(context[-1], truth.shape), truth, "per_time_mean"
        )
        scalars["id_rel_l2"].append(id_rep.rel_l2)
        scalars["id_rel_linf"].append(id_rep.rel_linf)
        mass0 = context[-1].sum(axis=0)
        drift = np.abs(pred.sum(axis=1) - mass0).max()
        mass_drift.append(float(drift))
        if example is None:
            example = {"c_idx": c, "ic_idx": i, "pred": pred, "truth": truth}
    curves_l2 = np.stack(curves_l2)
    curves_linf = np.stack(curves_linf)
    times = (k + np.arange(n_steps)) * m.dt
    return {
        "protocol": "rollout",
        "mode": mode,
        "k": int(k),
        "n_steps": int(n_steps),
        "n_trajectories": count,
        "rel_l2": _mean_std(scalars["rel_l2"]),
        "rel_linf": _mean_std(scalars["rel_linf"]),
        "rel_l2_full_grid": _mean_std(scalars["l2_full"]),
        "rel_linf_full_grid": _mean_std(scalars["linf_full"]),
        "identity": {
            "rel_l2": _mean_std(scalars["id_rel_l2"]),
            "rel_linf": _mean_std(scalars["id_rel_linf"]),
        },
        "max_mass_drift": float(max(mass_drift)),
        "per_time": {
            "time": times.tolist(),
            "rel_l2_mean": curves_l2.mean(axis=0).tolist(),
            "rel_l2_std": curves_l2.std(axis=0).tolist(),
            "rel_linf_mean": curves_linf.mean(axis=0).tolist(),
            "rel_linf_std": curves_linf.std(axis=0).tolist(),
        },
    }, example


def evaluate(model: HFluxNO, dataset: Dataset, protocol, k, n_steps=20,
             mode="refresh", max_windows=None, max_trajectories=None):
    """Dispatch to a protocol; returns (report dict, example rollout or None).

    "single_step" scores every valid window; "rollout" predicts n_steps from
    the first k snapshots; "long_time" rolls to the final saved time.
    """
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}; expected {PROTOCOLS}")
    if protocol == "single_step":
        return evaluate_single_step(model, dataset, k, max_windows=max_windows), None
    if protocol == "long_time":
        n_steps = dataset.manifest.n_t - k
    report, example = evaluate_rollout(
        model, dataset, k, n_steps, mode=mode, max_trajectories=max_trajectories
    )
    if protocol == "long_time":
        report["protocol"] = "long_time"
    return report, example
