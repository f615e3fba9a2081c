import time

import numpy as np
import pytest

from pcaglue import _pykernels
from pcaglue.dp import (
    DpLineResult,
    DpParams,
    brute_force_line,
    choose_lines,
    dp_line,
    full_dp_field,
    normalized_pair,
    sparse_correspondences,
    subsample_refine,
)
from pcaglue.phantom import SceneSpec, _scatterers, render_scatterers
from pcaglue.types import RFFrame, ValidationError


def random_instance(rng, m, l):
    return RFFrame(rng.standard_normal((m, l))), RFFrame(rng.standard_normal((m, l)))


BRUTE_CASES = [
    (10, 3, DpParams(1, 0, 0.3, 1)),
    (10, 3, DpParams(1, 0, 1.0, 3)),
    (8, 3, DpParams(2, 0, 0.5, 1)),
    (6, 4, DpParams(2, 1, 0.2, 1)),
    (5, 4, DpParams(1, 1, 0.7, 1)),
    (7, 3, DpParams(1, 1, 0.0, 3)),
]


@pytest.mark.parametrize("m,l,params", BRUTE_CASES)
def test_dp_matches_brute_force(m, l, params):
    rng = np.random.default_rng(m * 100 + params.max_axial_disp * 10 + params.max_lateral_disp)
    for _ in range(5):
        f, g = random_instance(rng, m, l)
        j = int(rng.integers(l))
        dp = dp_line(f, g, j, params)
        bf = brute_force_line(f, g, j, params)
        assert dp.cost == bf.cost
        # Continuous random data has no ties, so the optimal path is unique.
        np.testing.assert_array_equal(dp.axial, bf.axial)
        np.testing.assert_array_equal(dp.lateral, bf.lateral)


def test_brute_force_guard():
    f, g = random_instance(np.random.default_rng(0), 8, 4)
    with pytest.raises(ValidationError):
        brute_force_line(f, g, 0, DpParams(2, 1, 0.1, 1))


def test_zero_smoothness_is_per_sample_argmin(rng):
    f, g = random_instance(rng, 40, 6)
    params = DpParams(3, 1, 0.0, 5)
    res = dp_line(f, g, 2, params)
    fn, gn = normalized_pair(f, g)
    st = params.states()
    D = _pykernels.data_table(np.ascontiguousarray(fn[:, 2]), gn, 2, st[:, 0], st[:, 1], 2)
    best = st[np.argmin(D, axis=1)]
    np.testing.assert_array_equal(res.axial, best[:, 0])
    np.testing.assert_array_equal(res.lateral, best[:, 1])


def test_dp_is_deterministic_and_bounded(compression_pair):
    f, g, _ = compression_pair
    params = DpParams()
    a = dp_line(f, g, 20, params)
    b = dp_line(f, g, 20, params)
    np.testing.assert_array_equal(a.axial, b.axial)
    assert a.cost == b.cost
    assert np.all(np.abs(a.axial) <= params.max_axial_disp)
    assert np.all(np.abs(a.lateral) <= params.max_lateral_disp)
    assert a.cost >= 0


def test_identical_frames_give_zero_path_and_offsets(compression_pair):
    f = compression_pair[0]
    res = dp_line(f, f, 10)
    assert res.cost == 0.0
    assert not res.axial.any() and not res.lateral.any()
    a, t = subsample_refine(f, f, 10, res)
    assert not a.any() and not t.any()


def _shifted_pair(shift):
    scene = SceneSpec(256, 16, seed=5)
    z, x, amp = _scatterers(scene, np.random.default_rng(5))
    return RFFrame(render_scatterers(scene, z, x, amp)), RFFrame(render_scatterers(scene, z + shift, x, amp))


def test_subsample_recovers_half_sample_shift():
    f, g = _shifted_pair(1.5)
    res = dp_line(f, g, 8)
    a, _ = subsample_refine(f, g, 8, res)
    assert abs(np.median(a[20:-20]) - 1.5) <= 0.15
    # Same shift built by linear resampling of the RF lines.
    rows = np.arange(f.m)
    g_lin = RFFrame(np.column_stack([np.interp(rows - 1.5, rows, col) for col in f.samples.T]))
    a, _ = subsample_refine(f, g_lin, 8, dp_line(f, g_lin, 8))
    assert abs(np.median(a[20:-20]) - 1.5) <= 0.15


def test_subsample_is_zero_at_search_boundary(rng):
    f, g = random_instance(rng, 32, 5)
    params = DpParams(2, 1, 0.1, 3)
    a_int = np.full(32, 2)
    t_int = np.full(32, -1)
    a, t = subsample_refine(f, g, 2, (a_int, t_int), params)
    np.testing.assert_array_equal(a, a_int)
    np.testing.assert_array_equal(t, t_int)
    with pytest.raises(ValidationError):
        subsample_refine(f, g, 2, (np.full(32, 3), t_int), params)


def test_subsample_offsets_within_half_sample(compression_pair):
    f, g, _ = compression_pair
    res = dp_line(f, g, 30)
    a, t = subsample_refine(f, g, 30, res)
    assert np.all(np.abs(a - res.axial) <= 0.5)
    assert np.all(np.abs(t - res.lateral) <= 0.5)


def test_choose_lines():
    np.testing.assert_array_equal(choose_lines(384, 5), [38, 115, 192, 268, 345])
    np.testing.assert_array_equal(choose_lines(7, 7), np.arange(7))
    np.testing.assert_array_equal(choose_lines(10, 1), [5])
    with pytest.raises(ValidationError):
        choose_lines(10, 11)
    with pytest.raises(ValidationError):
        choose_lines(10, 0)


def test_params_validation():
    DpParams().validate(64, 8)
    for bad in (DpParams(0), DpParams(max_lateral_disp=-1), DpParams(smoothness_weight=-1.0),
                DpParams(data_window=4)):
        with pytest.raises(ValidationError):
            bad.validate(64, 8)
    with pytest.raises(ValidationError):
        DpParams(10, 1, 1.0, 9).validate(28, 8)
    with pytest.raises(ValidationError):
        DpParams(2, 2, 1.0, 1).validate(64, 4)


def test_state_order():
    st = DpParams(1, 1).states()
    assert [tuple(s) for s in st[:4]] == [(0, 0), (0, -1), (0, 1), (-1, 0)]


def test_sparse_correspondences_packing(compression_pair):
    f, g, truth = compression_pair
    sc = sparse_correspondences(f, g, 5)
    assert sc.K == 512 * 5
    np.testing.assert_array_equal(sc.lines_used, choose_lines(64, 5))
    np.testing.assert_array_equal(sc.coords[:512, 0], np.arange(512))
    assert np.all(sc.coords[512:1024, 1] == sc.lines_used[1])
    threaded = sparse_correspondences(f, g, 5, threads=3)
    np.testing.assert_array_equal(sc.axial_disp, threaded.axial_disp)
    err = np.abs(sc.axial_disp - truth.axial[sc.coords[:, 0], sc.coords[:, 1]])
    assert np.median(err) < 0.3


def test_full_dp_field_agrees_with_lines(compression_pair):
    f, g, truth = compression_pair
    full = full_dp_field(f, g)
    a, _ = subsample_refine(f, g, 40, dp_line(f, g, 40))
    np.testing.assert_array_equal(full.axial[:, 40], a)
    assert np.median(np.abs(full.axial - truth.axial)) < 0.3


def test_too_small_frame_is_rejected():
    f = RFFrame(np.ones((12, 8)))
    with pytest.raises(ValidationError):
        sparse_correspondences(f, f, 2)


def test_circular_shift_recovered_on_interior(rng):
    f = rng.standard_normal((64, 6))
    params = DpParams(3, 0, 0.01, 5)
    for j in (1, 4):
        res = dp_line(RFFrame(f), RFFrame(np.roll(f, 2, axis=0)), j, params)
        assert np.all(res.axial[8:-8] == 2)
    f8 = rng.standard_normal((8, 4))
    bf = brute_force_line(RFFrame(f8), RFFrame(np.roll(f8, 2, axis=0)), 1, DpParams(2, 0, 0.01, 1))
    dp = dp_line(RFFrame(f8), RFFrame(np.roll(f8, 2, axis=0)), 1, DpParams(2, 0, 0.01, 1))
    assert dp.cost == bf.cost
    np.testing.assert_array_equal(dp.axial, bf.axial)


def test_brute_force_rejects_frame_too_short_for_search():
    f = RFFrame(np.array([[0.0, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 1.0]]))
    g = RFFrame(np.array([[1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 0.0, 0.0]]))
    params = DpParams(1, 0, 0.1, 1)
    with pytest.raises(ValidationError):
        brute_force_line(f, g, 0, params)


def test_identical_frames_give_zero_correspondences(compression_pair):
    f = compression_pair[0]
    sc = sparse_correspondences(f, f, 7)
    assert not sc.c.any() and not sc.lateral_disp.any()


def test_p_equal_l_is_full_dp(rng):
    f = RFFrame(rng.standard_normal((48, 6)))
    g = RFFrame(np.roll(f.samples, 1, axis=0))
    params = DpParams(3, 1, 0.5, 5)
    sc = sparse_correspondences(f, g, 6, params)
    full = full_dp_field(f, g, params)
    np.testing.assert_array_equal(sc.lines_used, np.arange(6))
    np.testing.assert_array_equal(sc.axial_disp, full.axial.ravel(order="F"))
