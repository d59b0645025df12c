"""Central finite-difference gradient oracle.

The oracle only calls a black-box loss function, so it is independent of the
reverse-mode path it validates. Parameters should be float64 for the check:
with h = 1e-3 the difference quotient needs more headroom than f32 offers.

Leaky-ReLU and max-pooling make the loss piecewise smooth. When the +-h
interval straddles a kink, the central difference at h and at h/2 disagree;
such elements are detected from the quotients alone and re-evaluated at a
finer step, where the interval no longer crosses the kink. Everything else is
checked at the requested h.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor

KINK_RTOL = 1e-5
FINE_STEP = 1e-5


def finite_difference_gradients(loss_fn, params: dict[str, Tensor],
                                h: float = 1e-3,
                                kink_refine: bool = True) -> dict[str, np.ndarray]:
    """Central differences: (L(p+h) - L(p-h)) / 2h per parameter element."""
    grads: dict[str, np.ndarray] = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        g = np.zeros(flat.size, dtype=np.float64)

        def quotient(i: int, step: float) -> float:
            orig = flat[i]
            flat[i] = orig + step
            plus = float(loss_fn())
            flat[i] = orig - step
            minus = float(loss_fn())
            flat[i] = orig
            return (plus - minus) / (2.0 * step)

        for i in range(flat.size):
            d_full = quotient(i, h)
            if kink_refine:
                d_half = quotient(i, h / 2)
                scale = max(1.0, abs(d_full), abs(d_half))
                if abs(d_full - d_half) > KINK_RTOL * scale:
                    # nonsmooth inside +-h: measure where the interval is clean
                    d_full = quotient(i, FINE_STEP)
            g[i] = d_full
        grads[name] = g.reshape(p.data.shape)
    return grads


ABS_FLOOR = 1e-8


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a||, ||b||).

    Differences below ABS_FLOOR count as zero: a structurally-zero gradient
    (e.g. a bias feeding a shift-invariant softmax) leaves both sides at
    round-off noise, where a ratio is meaningless.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    diff = np.linalg.norm(a - b)
    if diff <= ABS_FLOOR:
        return 0.0
    return float(diff / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def check_gradients(loss_fn, params: dict[str, Tensor], h: float = 1e-3,
                    tol: float = 1e-3) -> dict[str, float]:
    """Run loss_fn once with backward(), compare against the oracle.

    Returns per-parameter relative errors; raises AssertionError naming the
    first parameter that exceeds ``tol``.
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {name: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}
    numeric = finite_difference_gradients(lambda: loss_fn().item(), params, h)
    errors = {name: relative_error(analytic[name], numeric[name]) for name in params}
    for name, err in errors.items():
        if err >= tol:
            raise AssertionError(
                f"gradient mismatch on {name!r}: relative error {err:.3e} >= {tol}")
    return errors
