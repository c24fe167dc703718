"""Finite-difference gradient oracle.

Independent of the tape: only repeated forward evaluations. Used by the test
suite to validate every differentiable op and the end-to-end model.
"""

import numpy as np

from .tensor import Tape, Tensor


def _scalar(v):
    if isinstance(v, Tensor):
        return v.item()
    return float(v)


def fd_gradients(f, tensors, eps=1e-6):
    """Central-difference gradients of scalar f() w.r.t. each tensor's data.

    f is a zero-argument callable returning a scalar (float or 0-d tensor)
    that reads the current .data of the given tensors; each element is
    perturbed in place by +-eps.
    """
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = _scalar(f())
            flat[i] = orig - eps
            fm = _scalar(f())
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * eps)
        grads.append(g)
    return grads


def tape_gradients(f, tensors):
    """Reverse-mode gradients of scalar f() w.r.t. the given leaf tensors."""
    for t in tensors:
        t.grad = None
    with Tape():
        loss = f()
    loss.backward()
    return [np.zeros_like(t.data) if t.grad is None else t.grad for t in tensors]


def max_rel_err(approx, oracle):
    """max |a-o| normalized by the oracle's largest magnitude (floored)."""
    approx = np.asarray(approx, dtype=float)
    oracle = np.asarray(oracle, dtype=float)
    denom = max(float(np.max(np.abs(oracle))), 1e-12)
    return float(np.max(np.abs(approx - oracle))) / denom


def check_gradients(f, tensors, eps=1e-6):
    """Worst-case relative error between tape and finite-difference grads."""
    ad = tape_gradients(f, tensors)
    fd = fd_gradients(f, tensors, eps=eps)
    return max(max_rel_err(a, o) for a, o in zip(ad, fd))
