import subprocess
import sys

import numpy as np
import pytest

from kwasr import _kernels

_HAS_NUMBA = _kernels.HAS_NUMBA


def _seq(rng, n):
    return rng.integers(0, 5, size=n).astype(np.int64)


class TestBackendSelection:
    def test_backend_reported(self):
        assert _kernels.BACKEND in ("numba", "numpy")

    def test_forced_numpy_via_env(self):
        code = (
            "import kwasr._kernels as k; "
            "assert k.BACKEND == 'numpy', k.BACKEND; "
            "assert k.levenshtein_ops is k.levenshtein_ops_numpy"
        )
        subprocess.run([sys.executable, "-c", code], check=True,
                       env={"KWASR_BACKEND": "numpy", "PATH": "/usr/bin:/bin"})

    def test_invalid_backend_raises_at_import(self):
        proc = subprocess.run(
            [sys.executable, "-c", "import kwasr._kernels"],
            env={"KWASR_BACKEND": "fortran", "PATH": "/usr/bin:/bin"},
            capture_output=True, text=True,
        )
        assert proc.returncode != 0
        assert "KWASR_BACKEND" in proc.stderr

    def test_empty_env_is_auto(self):
        code = "import kwasr._kernels as k; assert k.BACKEND in ('numba', 'numpy')"
        subprocess.run([sys.executable, "-c", code], check=True,
                       env={"KWASR_BACKEND": "", "PATH": "/usr/bin:/bin"})


class TestLevenshteinAgreement:
    @pytest.mark.skipif(not _HAS_NUMBA, reason="numba unavailable")
    def test_backends_agree_elementwise(self, rng):
        for _ in range(300):
            a = _seq(rng, int(rng.integers(0, 30)))
            b = _seq(rng, int(rng.integers(0, 30)))
            assert _kernels.levenshtein_ops_numba(a, b) == tuple(
                _kernels.levenshtein_ops_numpy(a, b))

    def test_numpy_path_known_cases(self):
        ref = np.frombuffer("kitten".encode(), dtype=np.uint8).astype(np.int64)
        hyp = np.frombuffer("sitting".encode(), dtype=np.uint8).astype(np.int64)
        assert _kernels.levenshtein_ops_numpy(ref, hyp) == (1, 0, 2)

    def test_numpy_path_empty_inputs(self):
        empty = np.empty(0, dtype=np.int64)
        ab = np.array([1, 2], dtype=np.int64)
        assert _kernels.levenshtein_ops_numpy(ab, empty) == (0, 2, 0)
        assert _kernels.levenshtein_ops_numpy(empty, ab) == (2, 0, 0)
        assert _kernels.levenshtein_ops_numpy(empty, empty) == (0, 0, 0)


class TestAdamWAgreement:
    @pytest.mark.skipif(not _HAS_NUMBA, reason="numba unavailable")
    def test_backends_agree_elementwise(self, rng):
        n = 1000
        p1 = rng.normal(size=n)
        p2 = p1.copy()
        m1 = np.zeros(n)
        m2 = np.zeros(n)
        v1 = np.zeros(n)
        v2 = np.zeros(n)
        for t in range(1, 6):
            g = rng.normal(size=n)
            bc1 = 1 - 0.9 ** t
            bc2 = 1 - 0.95 ** t
            _kernels.adamw_step_numba(p1, g, m1, v1, 1e-3, 0.9, 0.95, 1e-8, bc1, bc2)
            _kernels.adamw_step_numpy(p2, g, m2, v2, 1e-3, 0.9, 0.95, 1e-8, bc1, bc2)
        np.testing.assert_allclose(p1, p2, rtol=0, atol=1e-15)
        np.testing.assert_allclose(m1, m2, rtol=0, atol=1e-15)
        np.testing.assert_allclose(v1, v2, rtol=0, atol=1e-15)

    def test_numpy_path_updates_in_place(self, rng):
        p = np.ones(4)
        m = np.zeros(4)
        v = np.zeros(4)
        g = np.full(4, 2.0)
        _kernels.adamw_step_numpy(p, g, m, v, 0.1, 0.9, 0.95, 1e-8, 0.1, 0.05)
        assert np.all(p < 1.0)
        assert np.all(m != 0) and np.all(v != 0)
