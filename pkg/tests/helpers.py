"""Shared test utilities: finite-difference gradients and small fixtures."""
from __future__ import annotations

import numpy as np

from eegsr.nn.tensor import Tensor, grad


def fd_grad(fn, arrays, index, h=1e-5):
    """Central-difference gradient of scalar fn(*arrays) wrt arrays[index]."""
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    x = arrays[index]
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(fn(*arrays))
        flat[i] = orig - h
        fm = float(fn(*arrays))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def check_grads(fn, arrays, rtol=1e-4, h=1e-5):
    """Compare autodiff gradients of scalar fn against finite differences.

    fn is called with Tensor arguments when differentiating and numpy arrays
    when evaluating for finite differences. Returns the worst relative error.
    """
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(*tensors)
    gs = grad(out, tensors)

    def numeric_fn(*args):
        return fn(*[Tensor(a) for a in args]).item()

    worst = 0.0
    for i, gt in enumerate(gs):
        gn = fd_grad(numeric_fn, arrays, i, h=h)
        err = np.abs(gt.data - gn) / (1.0 + np.abs(gn))
        worst = max(worst, float(err.max()) if err.size else 0.0)
        assert err.max() < rtol, (
            f"gradient {i} mismatch: max rel err {err.max():.3e} (rtol {rtol:.1e})"
        )
    return worst
