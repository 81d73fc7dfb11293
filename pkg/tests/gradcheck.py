"""Central finite-difference gradient checking shared by tests."""

import numpy as np

from vmmatch.nn import Tensor


def numeric_grad(fn, tensor: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar fn() w.r.t. tensor.data."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn()
        flat[i] = orig - eps
        lo = fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def check_grads(fn, tensors, eps=1e-5, rtol=1e-4, atol=1e-6, sample=None, rng=None):
    """Compare analytic grads of scalar-valued fn(tensors...) to central diffs.

    `sample` limits the number of coordinates checked per tensor (for big
    parameter blocks); coordinates are chosen with `rng`.
    """
    if isinstance(tensors, dict):
        named = list(tensors.items())
    else:
        named = [(f"t{i}", t) for i, t in enumerate(tensors)]
    for _, t in named:
        t.zero_grad()
    loss = fn()
    loss.backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for _, t in named]

    def scalar():
        return fn().item()

    for (name, t), a in zip(named, analytic):
        if sample is not None and t.data.size > sample:
            idx = rng.choice(t.data.size, size=sample, replace=False)
        else:
            idx = np.arange(t.data.size)
        flat = t.data.reshape(-1)
        aflat = a.reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            hi = scalar()
            flat[i] = orig - eps
            lo = scalar()
            flat[i] = orig
            num = (hi - lo) / (2 * eps)
            # pass on either absolute closeness (finite-difference noise
            # floor) or relative closeness for well-scaled gradients
            tol = atol + rtol * max(abs(num), abs(aflat[i]))
            assert abs(num - aflat[i]) <= tol, (
                f"grad mismatch for {name!r} at flat index {i}: "
                f"numeric {num} vs analytic {aflat[i]}"
            )
