"""Central finite-difference gradient checking."""

import numpy as np

from .tensor import Tape, backward, current_precision


def relative_error(analytic, numeric):
    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return np.abs(analytic - numeric) / denom


def numeric_gradient(f, tensor, eps=1e-5, coords=None):
    """Central differences of scalar ``f()`` w.r.t. ``tensor.data`` entries."""
    flat = tensor.data.reshape(-1)
    coords = range(flat.size) if coords is None else coords
    out = {}
    for k in coords:
        orig = flat[k]
        flat[k] = orig + eps
        fp = float(f().data)
        flat[k] = orig - eps
        fm = float(f().data)
        flat[k] = orig
        out[k] = (fp - fm) / (2 * eps)
    return out


def grad_check(f, params, eps=1e-5, max_coords=None, rng=None, details=False):
    """Max relative error between tape gradients and central differences.

    ``f`` builds a scalar Tensor from the current values in ``params``.
    ``max_coords`` caps the coordinates checked per parameter (sampled with
    ``rng``); by default every coordinate is checked.
    """
    if current_precision() != "double":
        raise RuntimeError("grad_check requires double precision")
    with Tape() as tape:
        out = f()
    if not np.isfinite(out.data).all():
        raise FloatingPointError("grad_check: non-finite function value")
    grads = backward(tape, out, params)
    worst = 0.0
    report = {}
    for name, t in params.items():
        size = t.data.size
        if max_coords is not None and size > max_coords:
            rng = rng if rng is not None else np.random.default_rng(0)
            coords = rng.choice(size, max_coords, replace=False)
        else:
            coords = range(size)
        numeric = numeric_gradient(f, t, eps, coords)
        ana = grads[name].reshape(-1)
        num = np.array([numeric[k] for k in coords])
        if not (np.isfinite(num).all() and np.isfinite(ana).all()):
            raise FloatingPointError(f"grad_check: non-finite gradient for {name!r}")
        if len(num):
            err = float(relative_error(ana[list(coords)], num).max())
            report[name] = err
            worst = max(worst, err)
    return (worst, report) if details else worst
