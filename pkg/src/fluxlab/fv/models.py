"""Flux functions and characteristic speeds for the four equation families."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigError

KIND_CUBIC = 0
KIND_SINE = 1
KIND_SHALLOW_WATER = 2
KIND_VISCOUS_BURGERS = 3

_KIND_NAMES = {
    "cubic": KIND_CUBIC,
    "sine": KIND_SINE,
    "shallow_water": KIND_SHALLOW_WATER,
    "viscous_burgers": KIND_VISCOUS_BURGERS,
}

H_FLOOR = 1e-8  # shallow-water height floor for divisions


@dataclass(frozen=True)
class FluxModel:
    """One instance of a parametric conservation law (plus viscous Burgers).

    kind        flux F(u)                      coefficients
    ----        ---------                      ------------
    cubic       c3 u^3 + c2 u^2 + c1 u         (c1, c2, c3)
    sine        a sin(b u)                     (a, b)
    shallow_water  (alpha m, gamma m^2/h + beta h^2/2)   (alpha, gamma, beta)
    viscous_burgers  a u^2, diffusion nu u_xx  (a, nu)
    """

    kind: str
    coeffs: tuple

    def __post_init__(self):
        if self.kind not in _KIND_NAMES:
            raise ConfigError(f"unknown flux kind {self.kind!r}")
        n_expected = {"cubic": 3, "sine": 2, "shallow_water": 3, "viscous_burgers": 2}
        if len(self.coeffs) != n_expected[self.kind]:
            raise ConfigError(
                f"{self.kind} takes {n_expected[self.kind]} coefficients, "
                f"got {len(self.coeffs)}"
            )
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @classmethod
    def cubic(cls, c1, c2, c3):
        return cls("cubic", (c1, c2, c3))

    @classmethod
    def sine(cls, a, b):
        return cls("sine", (a, b))

    @classmethod
    def shallow_water(cls, alpha, gamma, beta):
        return cls("shallow_water", (alpha, gamma, beta))

    @classmethod
    def viscous_burgers(cls, a, nu):
        return cls("viscous_burgers", (a, nu))

    @property
    def d(self):
        return 2 if self.kind == "shallow_water" else 1

    @property
    def kind_code(self):
        return _KIND_NAMES[self.kind]

    @property
    def coeff_array(self):
        return np.asarray(self.coeffs, dtype=np.float64)

    @property
    def nu(self):
        if self.kind != "viscous_burgers":
            return 0.0
        return self.coeffs[1]

    def flux(self, u):
        """Physical flux at states u [d, N] -> [d, N]."""
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "cubic":
            c1, c2, c3 = self.coeffs
            return ((c3 * u + c2) * u + c1) * u
        if self.kind == "sine":
            a, b = self.coeffs
            return a * np.sin(b * u)
        if self.kind == "viscous_burgers":
            a, _ = self.coeffs
            return a * u * u
        alpha, gamma, beta = self.coeffs
        h = np.maximum(u[0], H_FLOOR)
        m = u[1]
        return np.stack([alpha * m, gamma * m * m / h + 0.5 * beta * u[0] * u[0]])

    def char_speed(self, u):
        """Pointwise largest |eigenvalue| of the flux Jacobian, [d, N] -> [N]."""
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "cubic":
            c1, c2, c3 = self.coeffs
            return np.abs((3.0 * c3 * u[0] + 2.0 * c2) * u[0] + c1)
        if self.kind == "sine":
            a, b = self.coeffs
            return np.abs(a * b * np.cos(b * u[0]))
        if self.kind == "viscous_burgers":
            a, _ = self.coeffs
            return np.abs(2.0 * a * u[0])
        alpha, gamma, beta = self.coeffs
        h = np.maximum(u[0], H_FLOOR)
        vel = u[1] / h
        disc = gamma * (gamma - alpha) * vel * vel + alpha * beta * u[0]
        return np.abs(gamma * vel) + np.sqrt(np.maximum(disc, 0.0))
