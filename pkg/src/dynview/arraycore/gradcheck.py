"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor
from . import ops


def grad_check(op, inputs, eps: float = 1e-3, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    `op` maps a list of Tensors to a Tensor; non-scalar outputs are reduced
    to a scalar via a fixed random projection. Everything runs in float64.
    """
    rng = np.random.default_rng(seed)
    base = [np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
            for x in inputs]

    proj = None

    def scalar_fn(arrays):
        nonlocal proj
        tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
        out = op(tensors)
        if proj is None:
            proj = rng.standard_normal(out.shape)
        if out.size == 1:
            return out, tensors
        return ops.weighted_sum(out, proj), tensors

    out, tensors = scalar_fn(base)
    out.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]

    max_rel = 0.0
    for i, a in enumerate(base):
        flat = a.reshape(-1)
        num = np.zeros_like(flat)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            fp = scalar_fn(base)[0].item()
            flat[j] = orig - eps
            fm = scalar_fn(base)[0].item()
            flat[j] = orig
            num[j] = (fp - fm) / (2 * eps)
        ana = analytic[i].reshape(-1)
        denom = np.maximum(np.abs(num), np.abs(ana))
        denom = np.where(denom < 1e-6, 1.0, denom)
        rel = np.abs(num - ana) / denom
        max_rel = max(max_rel, float(rel.max()) if rel.size else 0.0)
    return max_rel
