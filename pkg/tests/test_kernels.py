import numpy as np
import pytest

from broomscan import kernels

pytestmark = pytest.mark.skipif(kernels.compiled_backend is None, reason="compiled extension not built")


def test_backends_agree(rng):
    c, p = kernels.compiled_backend, kernels.python_backend
    z = rng.normal(0, 4, (7, 4 * 9))
    z[0, :5] = [800, -800, 0, 40, -40]
    cp = rng.normal(size=(7, 9))
    fc = c.lstm_gates_forward(z, cp)
    fp = p.lstm_gates_forward(z, cp)
    for a, b in zip(fc, fp):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    dh, dc = rng.normal(size=(7, 9)), rng.normal(size=(7, 9))
    gates, _, tanh_c, _ = fp
    for a, b in zip(c.lstm_gates_backward(dh, dc, gates, cp, tanh_c), p.lstm_gates_backward(dh, dc, gates, cp, tanh_c)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    x = rng.normal(0, 30, 1000)
    np.testing.assert_allclose(c.sigmoid(x), p.sigmoid(x), rtol=1e-12, atol=1e-300)


def test_histogram_backends_identical(rng):
    for lo, hi in [(0.0, 1.5), (0.0, 60.0)]:
        v = rng.uniform(lo - 1, hi + 1, 5000)
        v[:3] = [lo, hi, (lo + hi) / 2]
        a = kernels.compiled_backend.histogram_counts(v, lo, hi, 64)
        b = kernels.python_backend.histogram_counts(v, lo, hi, 64)
        assert a.tolist() == b.tolist() and a.sum() == 5000
