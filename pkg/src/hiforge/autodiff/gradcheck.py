"""Central finite-difference verification of autodiff gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def numerical_grad(fn, tensors, target, eps=1e-5, entries=None):
    """Central-difference gradient of scalar ``fn()`` w.r.t. ``target``.

    ``fn`` is re-evaluated with ``target.data`` perturbed in place, so it must
    be a pure function of the tensors it closes over. When ``entries`` is
    given only those flat indices are estimated; others are returned as NaN
    placeholders that the caller must skip.
    """
    flat = target.data.reshape(-1)
    idx = range(flat.size) if entries is None else entries
    out = np.full(flat.size, np.nan)
    for i in idx:
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = fn().item()
        flat[i] = orig - eps
        f_minus = fn().item()
        flat[i] = orig
        out[i] = (f_plus - f_minus) / (2.0 * eps)
    return out.reshape(target.data.shape)


def relative_error(analytic, numeric, floor=1e-3):
    """Max elementwise relative error with a denominator floor.

    The floor turns the comparison into an absolute one for near-zero
    gradients, where a plain ratio would amplify finite-difference noise.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(fn, tensors, eps=1e-5, floor=1e-3, rng=None, max_entries=None):
    """Compare backward gradients of scalar ``fn()`` against central differences.

    Returns the max relative error over all requested entries of every tensor
    in ``tensors``. With ``max_entries`` set, that many flat indices per
    tensor are sampled via ``rng`` instead of sweeping the full tensor.
    """
    for t in tensors:
        t.zero_grad()
    loss = fn()
    loss.backward()
    worst = 0.0
    for t in tensors:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad
        if max_entries is not None and t.data.size > max_entries:
            entries = sorted(rng.choice(t.data.size, size=max_entries, replace=False))
        else:
            entries = None
        numeric = numerical_grad(fn, tensors, t, eps=eps, entries=entries)
        mask = ~np.isnan(numeric)
        if not mask.any():
            continue
        err = relative_error(analytic[mask], numeric[mask], floor=floor)
        worst = max(worst, err)
    return worst
