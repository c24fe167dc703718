"""Trajectory dataset generation, persistence, and batch sampling.

A dataset is a directory holding

    manifest.json   the DatasetManifest fields (UTF-8 JSON)
    data.f32        little-endian float32, row-major [N_c, N_init, N_t, N_x, N_q]
    coeffs.f32      little-endian float32, row-major [N_c, n_params]

Storage is float32; everything is widened to float64 in memory. Generation
is a pure function of the manifest, and per-trajectory seeds are disjoint
functions of (global seed, split name, coefficient index, IC index).
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DivergenceError, FormatError
from .fv import FluxModel, SolverConfig, solve
from .random_fields import (
    CovarianceKernel,
    StepFunctionSpec,
    sample_grf,
    sample_lognormal,
    sample_steps,
)

SPLITS = ("train", "val", "test", "ood-shock", "ood-sine", "ood-sine-shock")

COEFF_TABLE = {
    "cubic": (("c1", -1.0, 1.0), ("c2", -1.0, 1.0), ("c3", -1.0, 1.0)),
    "sine": (("a", -1.0, 1.0), ("b", -1.0, 1.0)),
    "shallow_water": (("alpha", 0.5, 1.5), ("gamma", 0.5, 1.5), ("beta", 8.0, 12.0)),
    "viscous_burgers": (("a", 0.5, 1.5), ("nu", 0.005, 0.015)),
}

N_CHANNELS = {"cubic": 1, "sine": 1, "shallow_water": 2, "viscous_burgers": 1}

# CFL per family: 0.4 for the diffusive problem, 0.5 elsewhere.
CFL_DESIRED = {"viscous_burgers": 0.4}
DEFAULT_CFL = 0.5

SCALAR_GRF_KERNEL = CovarianceKernel("cosine_exp")
SW_KERNEL = CovarianceKernel("gaussian", sigma2=0.5, length=0.3)
SCALAR_STEPS = StepFunctionSpec((1, 5), (-1.0, 1.0))
SW_HEIGHT_STEPS = StepFunctionSpec((1, 5), (0.5, 4.5))

_MAX_RETRIES = 5


def split_family(equation, split):
    """(flux kind, ic_family) actually used for a named split."""
    if split not in SPLITS:
        raise ConfigError(f"unknown split {split!r}; expected one of {SPLITS}")
    if split in ("ood-sine", "ood-sine-shock"):
        if equation != "cubic":
            raise ConfigError("sine-flux OOD splits apply to the cubic family only")
        return "sine", ("grf" if split == "ood-sine" else "steps")
    if split == "ood-shock":
        return equation, ("steps+grf" if equation == "shallow_water" else "steps")
    return equation, ("lognormal+grf" if equation == "shallow_water" else "grf")


@dataclass(frozen=True)
class DatasetManifest:
    equation: str
    split: str
    ic_family: str
    n_coeffs: int
    n_ics: int
    n_t: int
    n_x: int
    n_q: int
    dt: float
    dx: float
    seed: int
    coeff_names: tuple = ()
    coeff_ranges: tuple = ()

    def __post_init__(self):
        if self.equation not in COEFF_TABLE:
            raise ConfigError(f"unknown equation {self.equation!r}")
        if self.n_q != N_CHANNELS[self.equation]:
            raise ConfigError(
                f"{self.equation} has {N_CHANNELS[self.equation]} channels, "
                f"manifest says {self.n_q}"
            )
        table = COEFF_TABLE[self.equation]
        object.__setattr__(self, "coeff_names", tuple(t[0] for t in table))
        object.__setattr__(self, "coeff_ranges", tuple((t[1], t[2]) for t in table))

    @classmethod
    def create(cls, equation, split, n_coeffs, n_ics, n_t, n_x, dt, seed):
        flux_kind, ic_family = split_family(equation, split)
        return cls(
            equation=flux_kind,
            split=split,
            ic_family=ic_family,
            n_coeffs=int(n_coeffs),
            n_ics=int(n_ics),
            n_t=int(n_t),
            n_x=int(n_x),
            n_q=N_CHANNELS[flux_kind],
            dt=float(dt),
            dx=1.0 / int(n_x),
            seed=int(seed),
        )

    @property
    def shape(self):
        return (self.n_coeffs, self.n_ics, self.n_t, self.n_x, self.n_q)

    @property
    def n_bytes(self):
        return 4 * int(np.prod(self.shape))

    def to_json(self):
        doc = asdict(self)
        doc["coeff_names"] = list(self.coeff_names)
        doc["coeff_ranges"] = [list(r) for r in self.coeff_ranges]
        return doc

    @classmethod
    def from_json(cls, doc):
        try:
            return cls(
                equation=doc["equation"],
                split=doc["split"],
                ic_family=doc["ic_family"],
                n_coeffs=doc["n_coeffs"],
                n_ics=doc["n_ics"],
                n_t=doc["n_t"],
                n_x=doc["n_x"],
                n_q=doc["n_q"],
                dt=doc["dt"],
                dx=doc["dx"],
                seed=doc["seed"],
            )
        except KeyError as e:
            raise FormatError(f"manifest missing field {e}") from e


def _split_token(split):
    return int.from_bytes(hashlib.sha256(split.encode()).digest()[:4], "little")


def _coeff_rng(manifest):
    return np.random.default_rng(
        np.random.SeedSequence([manifest.seed, _split_token(manifest.split), 0])
    )


def _trajectory_seed(manifest, c_idx, ic_idx, retry):
    return np.random.SeedSequence(
        [manifest.seed, _split_token(manifest.split), 1, c_idx, ic_idx, retry]
    )


def draw_coefficients(manifest):
    """Uniform coefficient draws for the split, [N_c, n_params] float64."""
    rng = _coeff_rng(manifest)
    lo = np.array([r[0] for r in manifest.coeff_ranges])
    hi = np.array([r[1] for r in manifest.coeff_ranges])
    return rng.uniform(lo, hi, size=(manifest.n_coeffs, len(lo)))


def _make_ic(manifest, seed_seq):
    """Initial field [d, N] for the manifest's ic_family."""
    n = manifest.n_x
    fam = manifest.ic_family
    if manifest.equation == "shallow_water":
        h_seed, m_seed = seed_seq.spawn(2)
        m0 = sample_grf(SW_KERNEL, n, m_seed)
        if fam == "lognormal+grf":
            h0 = sample_lognormal(SW_KERNEL, n, h_seed)
        elif fam == "steps+grf":
            h0 = sample_steps(SW_HEIGHT_STEPS, n, h_seed)
        else:
            raise ConfigError(f"shallow water does not support ic_family {fam!r}")
        return np.stack([h0, m0])
    if fam == "grf":
        return sample_grf(SCALAR_GRF_KERNEL, n, seed_seq)[None, :]
    if fam == "steps":
        return sample_steps(SCALAR_STEPS, n, seed_seq)[None, :]
    raise ConfigError(f"{manifest.equation} does not support ic_family {fam!r}")


def _solver_config(equation):
    return SolverConfig(cfl_desired=CFL_DESIRED.get(equation, DEFAULT_CFL))


def make_trajectory(manifest, coeff_row, c_idx, ic_idx):
    """Simulate one trajectory, resampling the IC on divergence."""
    model = FluxModel(manifest.equation, tuple(coeff_row))
    t_save = np.arange(manifest.n_t) * manifest.dt
    config = _solver_config(manifest.equation)
    last_err = None
    for retry in range(_MAX_RETRIES + 1):
        seed = _trajectory_seed(manifest, c_idx, ic_idx, retry)
        ic = _make_ic(manifest, seed)
        try:
            return solve(model, ic, t_save, config)
        except DivergenceError as e:
            last_err = e
    raise DivergenceError(
        f"trajectory (c={c_idx}, ic={ic_idx}) diverged for {_MAX_RETRIES + 1} "
        f"IC draws; last failure: {last_err}",
        step=last_err.step,
    )


def _worker(args):
    manifest_doc, coeff_row, c_idx, ic_idx = args
    manifest = DatasetManifest.from_json(manifest_doc)
    return c_idx, ic_idx, make_trajectory(manifest, coeff_row, c_idx, ic_idx)


def generate_split(manifest: DatasetManifest, out_dir, jobs=1):
    """Generate and persist one split; returns the dataset directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    coeffs = draw_coefficients(manifest)
    data = np.empty(manifest.shape, dtype=np.float32)
    tasks = [
        (manifest.to_json(), coeffs[c], c, i)
        for c in range(manifest.n_coeffs)
        for i in range(manifest.n_ics)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for c, i, traj in pool.map(_worker, tasks, chunksize=4):
                data[c, i] = traj.astype(np.float32)
    else:
        for doc, row, c, i in tasks:
            data[c, i] = make_trajectory(manifest, row, c, i).astype(np.float32)
    data.astype("<f4").tofile(out_dir / "data.f32")
    coeffs.astype("<f4").tofile(out_dir / "coeffs.f32")
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")
    return out_dir


@dataclass(frozen=True)
class ContextWindow:
    """k consecutive snapshots plus the next-step target."""

    u: np.ndarray  # [k, N_x, d]
    target: np.ndarray  # [N_x, d]
    dt: float
    dx: float


class Dataset:
    """Read-only view of a generated split."""

    def __init__(self, path):
        self.path = Path(path)
        mpath = self.path / "manifest.json"
        if not mpath.exists():
            raise FormatError(f"no manifest.json in {self.path}")
        with open(mpath, encoding="utf-8") as f:
            self.manifest = DatasetManifest.from_json(json.load(f))
        dpath = self.path / "data.f32"
        actual = dpath.stat().st_size
        if actual != self.manifest.n_bytes:
            raise FormatError(
                f"data.f32 holds {actual} bytes, manifest implies "
                f"{self.manifest.n_bytes}"
            )
        self._data = np.memmap(dpath, dtype="<f4", mode="r", shape=self.manifest.shape)
        cpath = self.path / "coeffs.f32"
        n_par = len(self.manifest.coeff_names)
        expected = 4 * self.manifest.n_coeffs * n_par
        if cpath.stat().st_size != expected:
            raise FormatError(f"coeffs.f32 holds {cpath.stat().st_size} bytes, "
                              f"expected {expected}")
        self._coeffs = np.memmap(
            cpath, dtype="<f4", mode="r", shape=(self.manifest.n_coeffs, n_par)
        )

    @property
    def n_trajectories(self):
        return self.manifest.n_coeffs * self.manifest.n_ics

    def coefficients(self):
        return np.asarray(self._coeffs, dtype=np.float64)

    def trajectory(self, c_idx, ic_idx):
        """One trajectory widened to float64, [N_t, N_x, d]."""
        m = self.manifest
        if not (0 <= c_idx < m.n_coeffs and 0 <= ic_idx < m.n_ics):
            raise IndexError(
                f"trajectory ({c_idx}, {ic_idx}) outside "
                f"[{m.n_coeffs}, {m.n_ics}]"
            )
        return np.asarray(self._data[c_idx, ic_idx], dtype=np.float64)

    def window(self, c_idx, ic_idx, start, k):
        traj = self.trajectory(c_idx, ic_idx)
        if start < 0 or start + k > self.manifest.n_t - 1:
            raise IndexError(f"window [{start}, {start + k}] outside trajectory")
        return ContextWindow(
            u=traj[start:start + k],
            target=traj[start + k],
            dt=self.manifest.dt,
            dx=self.manifest.dx,
        )


def load_trajectory(dataset: Dataset, c_idx, ic_idx):
    return dataset.trajectory(c_idx, ic_idx)


def sample_batch(dataset: Dataset, batch_size, k, rng):
    """Uniform windows over (coefficient, IC, start); start+k is the target."""
    m = dataset.manifest
    if k + 1 > m.n_t:
        raise ConfigError(f"context k={k} needs k+1 <= N_t={m.n_t}")
    out = []
    for _ in range(batch_size):
        c = int(rng.integers(0, m.n_coeffs))
        i = int(rng.integers(0, m.n_ics))
        start = int(rng.integers(0, m.n_t - k))
        out.append(dataset.window(c, i, start, k))
    return out
