import numpy as np
import pytest

from pcaglue import kernels
from pcaglue.dp import DpParams

compiled = kernels.compiled_backend
python = kernels.python_backend
needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def _inputs(rng, m=40, l=6, params=DpParams(3, 1, 0.5, 5)):
    f = np.asfortranarray(rng.standard_normal((m, l)))
    g = np.asfortranarray(rng.standard_normal((m, l)))
    st = params.states()
    return f, g, np.ascontiguousarray(st[:, 0]), np.ascontiguousarray(st[:, 1]), params


def test_python_data_table_matches_definition(rng):
    f, g, sa, st, params = _inputs(rng)
    m, l = g.shape
    half = params.data_window // 2
    D = python.data_table(np.ascontiguousarray(f[:, 2]), g, 2, sa, st, half)

    def mirror(v):
        return -v if v < 0 else (2 * (m - 1) - v if v > m - 1 else v)

    for i in (0, 1, 17, m - 1):
        for s in range(len(sa)):
            col = min(max(2 + st[s], 0), l - 1)
            d = [f[mirror(i + k), 2] - g[mirror(i + k + sa[s]), col] for k in range(-half, half + 1)]
            assert D[i, s] == pytest.approx(np.mean(np.square(d)), rel=1e-12)


def test_python_dp_solve_first_minimum_on_ties():
    D = np.zeros((3, 3))
    trans = np.zeros((3, 3))
    path, cost = python.dp_solve(D, trans)
    assert cost == 0.0
    np.testing.assert_array_equal(path, [0, 0, 0])


@needs_compiled
def test_backends_agree_bit_for_bit_on_dp(rng):
    for trial in range(5):
        f, g, sa, st, params = _inputs(rng)
        col = np.ascontiguousarray(f[:, trial])
        Dp = python.data_table(col, g, trial, sa, st, 2)
        Dc = compiled.data_table(col, g, trial, sa, st, 2)
        np.testing.assert_array_equal(Dp, Dc)
        trans = params.transition_costs(params.states())
        pp, cp = python.dp_solve(Dp, trans)
        pc, cc = compiled.dp_solve(Dc, trans)
        np.testing.assert_array_equal(pp, pc)
        assert cp == cc


@needs_compiled
def test_backends_agree_on_render(rng):
    z = rng.uniform(-5, 45, 500)
    x = rng.uniform(-3, 13, 500)
    amp = rng.standard_normal(500)
    args = (z, x, amp, 40, 10, 0.25, 2.0, 1.0, 6.0, 3.0)
    np.testing.assert_allclose(python.render(*args), compiled.render(*args), rtol=0, atol=1e-12)


def test_render_single_scatterer_is_the_psf():
    out = python.render(np.array([10.0]), np.array([4.0]), np.array([2.0]), 21, 9, 0.25, 2.0, 1.0, 6.0, 3.0)
    i, j = np.meshgrid(np.arange(21), np.arange(9), indexing="ij")
    dz, dx = i - 10.0, j - 4.0
    psf = 2.0 * np.exp(-dz ** 2 / 8) * np.cos(2 * np.pi * 0.25 * dz) * np.exp(-dx ** 2 / 2)
    psf[(np.abs(dz) > 6) | (np.abs(dx) > 3)] = 0
    np.testing.assert_allclose(out, psf, atol=1e-14)
    assert kernels.BACKEND_NAME in ("compiled", "python")


def test_pure_backend_can_be_forced():
    import os
    import subprocess
    import sys

    env = dict(os.environ, PCAGLUE_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from pcaglue import kernels; print(kernels.BACKEND_NAME)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
