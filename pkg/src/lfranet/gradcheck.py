"""Finite-difference validation of the reverse-mode gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import Tensor


class GradientCheckError(AssertionError):
    """Raised when an explicit tolerance is passed and exceeded."""


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-5,
    tolerance: float | None = None,
) -> float:
    """Compare analytic gradients of a scalar function against central differences.

    Returns max over elements of |analytic - numeric| / max(1, |analytic|).
    Run in float64; float32 rounding drowns the difference signal.
    """
    if x.dtype != np.float64:
        raise ValueError("finite_diff_check requires a float64 input tensor")
    probe = Tensor(x.data.copy(), requires_grad=True)
    y = f(probe)
    if y.size != 1:
        raise ValueError(f"finite_diff_check needs a scalar-valued function, got shape {y.shape}")
    y.backward()
    analytic = probe.grad.copy()

    numeric = np.zeros_like(analytic)
    flat = x.data.reshape(-1)
    for i in range(flat.size):
        xp = flat.copy()
        xp[i] += eps
        fp = f(Tensor(xp.reshape(x.shape))).item()
        xm = flat.copy()
        xm[i] -= eps
        fm = f(Tensor(xm.reshape(x.shape))).item()
        numeric.reshape(-1)[i] = (fp - fm) / (2.0 * eps)

    err = float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))
    if tolerance is not None and err > tolerance:
        raise GradientCheckError(f"gradient check failed: max relative error {err:.3e} > {tolerance:.3e}")
    return err
