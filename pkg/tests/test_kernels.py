import os
import subprocess
import sys

import numpy as np
import pytest

from treesent import kernels
from treesent.kernels import _pure

fast = pytest.importorskip("treesent.kernels._fast", reason="compiled kernels not built")


@pytest.mark.parametrize("dtype,tol", [(np.float32, 2e-6), (np.float64, 1e-13)])
@pytest.mark.parametrize("n,h", [(1, 1), (7, 3), (64, 32)])
def test_compiled_kernels_match_numpy(dtype, tol, n, h):
    rng = np.random.default_rng(n * 31 + h)
    z4 = (rng.normal(size=(n, 4 * h)) * 4).astype(dtype)
    z5 = (rng.normal(size=(n, 5 * h)) * 4).astype(dtype)
    c1, c2 = (rng.normal(size=(n, h)).astype(dtype) for _ in range(2))
    g = rng.normal(size=(n, 2 * h)).astype(dtype)
    z4[0, 0], z5[0, 0] = 300, -300  # saturated gates stay finite
    for a, b in zip(fast.lstm_forward(z4, c1), _pure.lstm_forward(z4, c1)):
        np.testing.assert_allclose(a, b, rtol=tol, atol=tol)
    _, acts, tc = _pure.lstm_forward(z4, c1)
    for a, b in zip(fast.lstm_backward(acts, c1, tc, g), _pure.lstm_backward(acts, c1, tc, g)):
        np.testing.assert_allclose(a, b, rtol=tol, atol=tol)
    for a, b in zip(fast.tree_forward(z5, c1, c2), _pure.tree_forward(z5, c1, c2)):
        np.testing.assert_allclose(a, b, rtol=tol, atol=tol)
    _, acts, tc = _pure.tree_forward(z5, c1, c2)
    for a, b in zip(fast.tree_backward(acts, c1, c2, tc, g), _pure.tree_backward(acts, c1, c2, tc, g)):
        np.testing.assert_allclose(a, b, rtol=tol, atol=tol)
    assert fast.lstm_forward(z4, c1)[0].dtype == dtype


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


def test_environment_forces_pure_fallback():
    env = dict(os.environ, TREESENT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import treesent.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
