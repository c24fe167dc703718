"""Periodic random initial conditions.

Gaussian fields are drawn by circulant embedding on the N-point lattice of
the unit interval: the covariance row's DFT gives the circulant eigenvalues,
and the field is the real part of the inverse DFT of eigenvalue-scaled
complex white noise. Lognormal fields exponentiate a Gaussian field; step
fields are piecewise-constant with a random number of plateaus.

All samplers are pure functions of (spec, N, seed).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError

# Rescale convention for the squared-exponential kernel: C(r) declines to
# sigma2*exp(-pi/4 * (r/l)^2)-style widths used by common field generators.
GAUSSIAN_RESCALE = math.sqrt(math.pi) / 2.0


@dataclass(frozen=True)
class CovarianceKernel:
    """Stationary covariance on the periodic unit interval.

    cosine_exp:  k(r) = exp(-(1 - cos(2 pi r)))          (parameter-free)
    gaussian:    C(r) = sigma2 * exp(-(s * r_per / l)^2) with the periodic
                 distance r_per = min(|r|, 1 - |r|) and rescale s.
    """

    kind: str
    sigma2: float = 1.0
    length: float = 0.3
    rescale: float = GAUSSIAN_RESCALE

    def __post_init__(self):
        if self.kind not in ("cosine_exp", "gaussian"):
            raise ConfigError(f"unknown covariance kernel {self.kind!r}")
        if self.sigma2 < 0 or self.length <= 0:
            raise ConfigError("need sigma2 >= 0 and length > 0")

    def __call__(self, r):
        """Covariance at lag(s) r (in units of the domain length)."""
        r = np.asarray(r, dtype=np.float64)
        if self.kind == "cosine_exp":
            return np.exp(-(1.0 - np.cos(2.0 * np.pi * r)))
        r_per = np.minimum(np.abs(r) % 1.0, 1.0 - np.abs(r) % 1.0)
        return self.sigma2 * np.exp(-((self.rescale * r_per / self.length) ** 2))

    def row(self, n):
        """First row of the covariance circulant on the n-point lattice."""
        return self(np.arange(n) / n)


@dataclass(frozen=True)
class StepFunctionSpec:
    """Random periodic piecewise-constant fields.

    n breakpoints are drawn uniformly on the grid and split [0, 1) into n+1
    plateaus with iid uniform heights; the periodic wrap joins the first and
    last plateau at x=0.
    """

    n_steps_range: tuple = (1, 5)
    height_range: tuple = (-1.0, 1.0)

    def __post_init__(self):
        lo, hi = self.n_steps_range
        if not (1 <= lo <= hi):
            raise ConfigError(f"invalid n_steps_range {self.n_steps_range}")
        if not (self.height_range[0] <= self.height_range[1]):
            raise ConfigError(f"empty height_range {self.height_range}")


def _circulant_eigenvalues(kernel, n):
    lam = np.fft.fft(kernel.row(n)).real
    if lam.min() < -1e-12 * max(lam.max(), 1.0):
        warnings.warn(
            f"covariance circulant has negative eigenvalues "
            f"(min {lam.min():.3e}); clipping to zero",
            stacklevel=3,
        )
    return np.clip(lam, 0.0, None)


def sample_grf(kernel: CovarianceKernel, n, seed):
    """Mean-zero periodic Gaussian field with the given covariance, shape [n]."""
    if n < 4:
        raise ConfigError(f"grid size must be >= 4, got {n}")
    rng = np.random.default_rng(seed)
    lam = _circulant_eigenvalues(kernel, n)
    noise = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    z = np.fft.ifft(np.sqrt(lam) * noise)
    return z.real * math.sqrt(n)


def sample_lognormal(kernel: CovarianceKernel, n, seed):
    """exp of a Gaussian field with the given log-covariance; strictly positive."""
    return np.exp(sample_grf(kernel, n, seed))


def sample_steps(spec: StepFunctionSpec, n, seed):
    """Random periodic step function on n grid points."""
    rng = np.random.default_rng(seed)
    lo, hi = spec.n_steps_range
    n_steps = int(rng.integers(lo, hi + 1))
    breaks = np.sort(rng.integers(0, n, size=n_steps))
    heights = rng.uniform(spec.height_range[0], spec.height_range[1], size=n_steps + 1)
    edges = np.concatenate([[0], breaks, [n]])
    u = np.empty(n)
    for i in range(n_steps + 1):
        u[edges[i]:edges[i + 1]] = heights[i]
    return u
