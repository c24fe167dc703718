import numpy as np
import pytest

from fluxlab.datasets import DatasetManifest, Dataset, generate_split
from fluxlab.encoder import EncoderConfig
from fluxlab.fluxno import FluxNOConfig
from fluxlab.model import HFluxNO


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TINY_ENCODER = dict(patch_size=2, embed_dim=8, layers=1, heads=2, conv_width=2)
TINY_FLUXNO = dict(stencil_half_width=1, width=8, layers=1, modes=4)


def tiny_model(n_x=8, d=1, seed=5, **overrides):
    enc = {**TINY_ENCODER, **overrides.get("encoder", {})}
    fno = {**TINY_FLUXNO, **overrides.get("fluxno", {})}
    return HFluxNO(
        EncoderConfig(**enc), FluxNOConfig(**fno), n_x=n_x, d=d,
        rng=np.random.default_rng(seed),
    )


def make_dataset(path, equation="cubic", split="train", n_coeffs=2, n_ics=2,
                 n_t=30, n_x=32, dt=0.005, seed=0, jobs=1):
    manifest = DatasetManifest.create(equation, split, n_coeffs, n_ics, n_t,
                                      n_x, dt, seed)
    generate_split(manifest, path, jobs=jobs)
    return Dataset(path)
