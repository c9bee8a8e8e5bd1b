"""Central finite-difference verification of analytic gradients.

The numeric side perturbs raw float64 buffers and re-runs the forward
function, so it never touches the reverse-mode machinery it is checking.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import GradTape, Tensor


def numeric_gradient(f: Callable[[], Tensor], param: Tensor, h: float = 1e-3) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. every element of ``param``.

    ``param.data`` should be float64; the forward is evaluated 2x per element.
    """
    grad = np.zeros_like(param.data, dtype=np.float64)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f().data)
        flat[i] = orig - h
        lo = float(f().data)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute difference scaled by the combined gradient magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    diff = np.abs(analytic - numeric).max()
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    return float(diff / scale)


def check_gradients(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-3,
    rtol: float = 1e-3,
) -> float:
    """Run tape backward on ``f()`` and compare against central differences.

    Returns the worst relative error over ``params``; raises AssertionError
    when it exceeds ``rtol``.
    """
    for p in params:
        p.zero_grad()
    with GradTape() as tape:
        loss = f()
    tape.backward(loss)
    worst = 0.0
    for p in params:
        assert p.grad is not None, f"no gradient reached {p.name or p}"
        num = numeric_gradient(f, p, h=h)
        err = relative_error(p.grad, num)
        worst = max(worst, err)
        assert err < rtol, f"gradient mismatch for {p.name or 'param'}: rel err {err:.3e} >= {rtol}"
    return worst


def sampled_gradient_errors(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    coords_per_param: int,
    rng: np.random.Generator,
    h: float = 1e-3,
) -> float:
    """Spot-check a few coordinates per parameter; for large end-to-end graphs
    where full finite differencing is too slow. Returns the worst relative error."""
    for p in params:
        p.zero_grad()
    with GradTape() as tape:
        loss = f()
    tape.backward(loss)
    worst = 0.0
    for p in params:
        assert p.grad is not None, f"no gradient reached {p.name or p}"
        flat = p.data.reshape(-1)
        gflat = p.grad.reshape(-1)
        idx = rng.choice(flat.size, size=min(coords_per_param, flat.size), replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            hi = float(f().data)
            flat[i] = orig - h
            lo = float(f().data)
            flat[i] = orig
            num = (hi - lo) / (2.0 * h)
            scale = max(abs(float(gflat[i])), abs(num), 1e-6)
            worst = max(worst, abs(float(gflat[i]) - num) / scale)
    return worst
