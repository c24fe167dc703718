"""fluxlab: context-conditioned conservative neural flux operators in 1D.

Reference finite-volume solvers generate trajectories of parametric
conservation laws; a recurrent vision-transformer encoder reads a short
solution history, a hypernetwork turns the resulting context vector into the
weights of a spectral flux operator, and the state is advanced through an
exactly conservative flux-difference update.
"""

__version__ = "0.1.0"

from .tensor import Tape, Tensor

__all__ = ["Tape", "Tensor", "__version__"]
