"""Relative error metrics with the two aggregation modes.

rel l2 and rel linf are computed over space at each time and then averaged
over time ("per_time_mean"), or over the full spatiotemporal grid
("full_grid"). Inputs are [T, ...] arrays; reshape a single state to
[1, ...] (both aggregations then coincide).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, ShapeError

AGGREGATIONS = ("per_time_mean", "full_grid")


@dataclass(frozen=True)
class MetricReport:
    rel_l2: float
    rel_linf: float
    per_time_l2: np.ndarray  # [T]
    per_time_linf: np.ndarray  # [T]
    aggregation: str


def rel_metrics(u, u_target, aggregation="per_time_mean") -> MetricReport:
    if aggregation not in AGGREGATIONS:
        raise DomainError(f"unknown aggregation {aggregation!r}")
    u = np.asarray(u, dtype=np.float64)
    t = np.asarray(u_target, dtype=np.float64)
    if u.shape != t.shape:
        raise ShapeError(f"shape mismatch {u.shape} vs {t.shape}")
    if u.ndim < 2:
        raise ShapeError("expected [T, ...] arrays; reshape single states to [1, ...]")
    flat_u = u.reshape(u.shape[0], -1)
    flat_t = t.reshape(t.shape[0], -1)
    den_l2 = np.linalg.norm(flat_t, axis=1)
    den_linf = np.abs(flat_t).max(axis=1)
    if np.any(den_l2 == 0.0) or np.any(den_linf == 0.0):
        raise DomainError("relative metrics undefined for a zero-norm target")
    per_l2 = np.linalg.norm(flat_u - flat_t, axis=1) / den_l2
    per_linf = np.abs(flat_u - flat_t).max(axis=1) / den_linf
    if aggregation == "per_time_mean":
        rel_l2 = float(per_l2.mean())
        rel_linf = float(per_linf.mean())
    else:
        rel_l2 = float(np.linalg.norm(flat_u - flat_t) / np.linalg.norm(flat_t))
        rel_linf = float(np.abs(flat_u - flat_t).max() / np.abs(flat_t).max())
    return MetricReport(
        rel_l2=rel_l2,
        rel_linf=rel_linf,
        per_time_l2=per_l2,
        per_time_linf=per_linf,
        aggregation=aggregation,
    )
