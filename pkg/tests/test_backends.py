import os
import subprocess
import sys

import numpy as np
import pytest

from entanglekit import _backend, datagen
from entanglekit.kernels import AMPLITUDE, gram_matrix, normalize_rows
from entanglekit.qstate import BipartiteDims

from .conftest import BACKENDS

both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")


def test_unknown_backend():
    with pytest.raises(ValueError):
        _backend.get_backend("fortran")


def test_backend_env_selects_fallback():
    code = "import entanglekit._backend as b; print(b.BACKEND)"
    env = dict(os.environ, ENTANGLEKIT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@both
def test_default_backend_is_compiled():
    code = "import entanglekit._backend as b; print(b.BACKEND)"
    env = {k: v for k, v in os.environ.items() if k != "ENTANGLEKIT_PURE_PYTHON"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "compiled"


def test_jacobi_on_each_backend(backend):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((12, 12)) + 1j * rng.standard_normal((12, 12))
    h = (a + a.conj().T) / 2
    w, v, sweeps = backend.jacobi_eigh(h)
    assert sweeps <= 100
    np.testing.assert_allclose(h @ v, v * w, atol=1e-12 * np.linalg.norm(h, 2))
    np.testing.assert_allclose(np.sort(w), np.linalg.eigvalsh(h), atol=1e-12)


@both
def test_jacobi_parity():
    py, cc = (_backend.get_backend(n) for n in ("python", "compiled"))
    rng = np.random.default_rng(1)
    for d in (2, 9, 30):
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        h = (a + a.conj().T) / 2
        np.testing.assert_allclose(np.sort(py.jacobi_eigh(h)[0]), np.sort(cc.jacobi_eigh(h)[0]), atol=1e-12)
        s = a.real + a.real.T
        np.testing.assert_allclose(np.sort(py.jacobi_eigh(s)[0]), np.sort(cc.jacobi_eigh(s)[0]), atol=1e-12)


@both
@pytest.mark.parametrize("sweeps", [0, 1])
def test_frank_wolfe_parity(sweeps):
    py, cc = (_backend.get_backend(n) for n in ("python", "compiled"))
    rng = np.random.default_rng(2)
    for dA, dB in ((2, 2), (3, 3), (2, 4)):
        rho = datagen.random_mixture(dA * dB, 3, rng)
        a0, b0 = datagen.random_pure(dA, rng), datagen.random_pure(dB, rng)
        # the argmax oracle amplifies last-bit differences, so the bound loosens with T
        for T, bound in ((1, 1e-12), (7, 1e-12), (20, 1e-10)):
            s1, d1 = py.frank_wolfe(rho, dA, dB, a0, b0, T, sweeps)
            s2, d2 = cc.frank_wolfe(rho, dA, dB, a0, b0, T, sweeps)
            assert np.max(np.abs(s1 - s2)) <= bound
            assert abs(d1 - d2) <= bound


@both
def test_frank_wolfe_long_runs_agree_in_outcome():
    py, cc = (_backend.get_backend(n) for n in ("python", "compiled"))
    rng = np.random.default_rng(3)
    dims = BipartiteDims(3, 3)
    for _ in range(10):
        rho = datagen.random_separable(dims, 8, rng)
        a0, b0 = datagen.random_pure(3, rng), datagen.random_pure(3, rng)
        d1 = py.frank_wolfe(rho, 3, 3, a0, b0, 1000, 0)[1]
        d2 = cc.frank_wolfe(rho, 3, 3, a0, b0, 1000, 0)[1]
        assert d1 < 0.01 and d2 < 0.01


@both
def test_smo_parity():
    py, cc = (_backend.get_backend(n) for n in ("python", "compiled"))
    rng = np.random.default_rng(3)
    X = normalize_rows(rng.standard_normal((60, 8)))
    y = np.where(X[:, 0] + 0.3 * rng.standard_normal(60) > 0, 1.0, -1.0)
    K = gram_matrix(AMPLITUDE, X)
    a1, g1, it1, ok1, tr1 = py.smo(K, y, 10.0, 1e-3, 10 ** 6, True)
    a2, g2, it2, ok2, tr2 = cc.smo(K, y, 10.0, 1e-3, 10 ** 6, True)
    assert (it1, ok1) == (it2, ok2)
    np.testing.assert_allclose(a1, a2, atol=1e-10)
    np.testing.assert_allclose(g1, g2, atol=1e-10)
    np.testing.assert_allclose(tr1, tr2, rtol=1e-12)


@both
def test_dot_matrix_parity():
    py, cc = (_backend.get_backend(n) for n in ("python", "compiled"))
    rng = np.random.default_rng(4)
    X, Y = rng.standard_normal((20, 81)), rng.standard_normal((15, 81))
    a, b = py.dot_matrix(X, Y), cc.dot_matrix(X, Y)
    np.testing.assert_allclose(a, b, rtol=1e-15, atol=1e-15)
