import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from stereo_decomp.dense import build_cost_volume, dense_match, softargmax_regress
from stereo_decomp.errors import InvalidInputError
from stereo_decomp.sparse import (GradientBundle, candidate_set, candidate_volume, gradcheck,
                                  gradcheck_suite, sparse_backward, sparse_forward)

import oracles


def test_candidate_set_examples():
    lm = np.ones((1, 6), bool)
    assert candidate_set(0, 2, lm, np.zeros((1, 6), bool), 5) == []
    assert candidate_set(0, 2, lm, np.ones((1, 6), bool), 5) == [0, 1, 2]
    with pytest.raises(InvalidInputError):
        candidate_set(0, 2, np.zeros((1, 6), bool), lm, 5)


def test_candidate_set_scattered():
    rng = np.random.default_rng(0)
    lm = np.ones((4, 10), bool)
    rm = rng.random((4, 10)) < 0.5
    vol = candidate_volume(lm, rm, 6)
    for r in range(4):
        for c in range(10):
            scan = [d for d in range(6) if c - d >= 0 and rm[r, c - d]]
            assert candidate_set(r, c, lm, rm, 6) == scan
            assert np.nonzero(vol[r, c])[0].tolist() == scan


def _one_row(values, disparities, width=10):
    """Single-channel features with score ``values[i]`` for candidate ``disparities[i]`` of (0, width-1)."""
    c = width - 1
    fl = np.zeros((1, 1, width))
    fr = np.zeros((1, 1, width))
    fl[0, 0, c] = 1.0
    rm = np.zeros((1, width), bool)
    for v, d in zip(values, disparities):
        fr[0, 0, c - d] = v
        rm[0, c - d] = True
    lm = np.zeros((1, width), bool)
    lm[0, c] = True
    return fl, fr, lm, rm


def test_single_candidate():
    f = sparse_forward(*_one_row([0.3], [7]), 8)
    assert f.disparity.tolist() == [7.0] and f.variance.tolist() == [0.0]


def test_two_equal_candidates():
    f = sparse_forward(*_one_row([1.5, 1.5], [0, 4]), 8)
    assert f.disparity.tolist() == [2.0] and f.variance.tolist() == [4.0]


def test_full_mask_row_matches_dense_regression():
    rng = np.random.default_rng(4)
    fl, fr = rng.normal(size=(2, 3, 1, 8))
    full = np.ones((1, 8), bool)
    f = sparse_forward(fl, fr, full, full, 4)
    disp, var = softargmax_regress(build_cost_volume(fl, fr, 4))
    np.testing.assert_allclose(f.disparity, disp.values[0], atol=1e-12)
    np.testing.assert_allclose(f.variance, var[0], atol=1e-12)


@pytest.mark.parametrize("seed", range(100))
def test_sparse_equals_loop_oracle(seed):
    rng = np.random.default_rng(1000 + seed)
    h, w = (int(x) for x in rng.integers(1, 9, size=2))
    n_disp = int(rng.integers(1, 5))
    c = int(rng.integers(1, 4))
    fl, fr = rng.normal(size=(2, c, h, w))
    lm = rng.random((h, w)) < 0.6
    rm = rng.random((h, w)) < 0.6
    f = sparse_forward(fl, fr, lm, rm, n_disp)
    ref = oracles.sparse_match(fl, fr, lm, rm, n_disp)
    assert len(f) == len(ref)
    for r, c_, d, v, n in zip(f.rows, f.cols, f.disparity, f.variance, f.candidate_count):
        assert ref[(int(r), int(c_))] == (d, v, n)
    assert f.evaluations == sum(n for _, _, n in ref.values())


def test_empty_masks():
    f = np.zeros((2, 3, 5))
    field = sparse_forward(f, f, np.zeros((3, 5), bool), np.ones((3, 5), bool), 3)
    assert len(field) == 0 and field.evaluations == 0


def test_full_masks_count_equals_dense():
    rng = np.random.default_rng(7)
    fl, fr = rng.normal(size=(2, 2, 6, 9))
    full = np.ones((6, 9), bool)
    _, _, dense_count = dense_match(fl, fr, 5)
    f = sparse_forward(fl, fr, full, full, 5)
    assert f.evaluations == dense_count == 6 * (9 * 5 - (0 + 1 + 2 + 3 + 4))
    assert f.evaluations == int(f.candidate_count.sum())


@given(st.integers(0, 10 ** 6), st.floats(-20, 20))
def test_field_invariants(seed, shift):
    rng = np.random.default_rng(seed)
    fl, fr = rng.normal(scale=2.0, size=(2, 2, 3, 7))
    lm = rng.random((3, 7)) < 0.7
    rm = rng.random((3, 7)) < 0.7
    f = sparse_forward(fl, fr, lm, rm, 5)
    sums = np.zeros(len(f))
    np.add.at(sums, f.pair_entry, f.pair_prob)
    np.testing.assert_allclose(sums, 1.0, atol=1e-6)
    for i in range(len(f)):
        ds = f.pair_disp[f.pair_entry == i]
        lo, hi = ds.min(), ds.max()
        assert lo - 1e-9 <= f.disparity[i] <= hi + 1e-9
        assert f.variance[i] <= (hi - lo) ** 2 / 4 + 1e-9
    # a uniform score shift per candidate set: add a constant channel pair
    k = np.sqrt(abs(shift))
    fl2 = np.concatenate([fl, np.full((1, 3, 7), k)])
    fr2 = np.concatenate([fr, np.full((1, 3, 7), np.sign(shift) * k)])
    g = sparse_forward(fl2, fr2, lm, rm, 5)
    np.testing.assert_allclose(g.disparity, f.disparity, atol=1e-6)
    np.testing.assert_allclose(g.variance, f.variance, atol=1e-6)


def test_single_candidate_zero_gradient():
    fl, fr, lm, rm = _one_row([0.8], [3])
    f = sparse_forward(fl, fr, lm, rm, 5)
    g = sparse_backward(f, np.ones(1), fl, fr)
    assert not g.left.any() and not g.right.any()


def test_misaligned_upstream():
    fl, fr, lm, rm = _one_row([0.8, 0.1], [3, 1])
    f = sparse_forward(fl, fr, lm, rm, 5)
    with pytest.raises(InvalidInputError):
        sparse_backward(f, np.ones(2), fl, fr)


def test_two_candidate_closed_form_symbolic():
    # summed form: dD/dFl = sum_d P(d) * (d - D) * Fr(w - d)
    a1, a2, b1, b2, c1, c2, g = sp.symbols("a1 a2 b1 b2 c1 c2 g", real=True)
    fl_ = sp.Matrix([a1, a2])
    fr0 = sp.Matrix([b1, b2])   # candidate d = 0
    fr1 = sp.Matrix([c1, c2])   # candidate d = 1
    s0, s1 = fl_.dot(fr0), fl_.dot(fr1)
    p0 = sp.exp(s0) / (sp.exp(s0) + sp.exp(s1))
    p1 = 1 - p0
    disp = p1
    direct = [g * sp.diff(disp, v) for v in (a1, a2)]
    summed = [g * (p0 * (0 - disp) * fr0[i] + p1 * (1 - disp) * fr1[i]) for i in range(2)]
    for x, y in zip(direct, summed):
        assert sp.simplify(x - y) == 0

    # equal scores: F_left = (1, 1), candidates (1, 0) and (0, 1) -> (-1/4, 1/4) * g
    vals = {a1: 1, a2: 1, b1: 1, b2: 0, c1: 0, c2: 1, g: 3}
    expected = [sp.nsimplify(e.subs(vals)) for e in summed]
    assert expected == [sp.Rational(-3, 4), sp.Rational(3, 4)]

    fl = np.zeros((2, 1, 2))
    fr = np.zeros((2, 1, 2))
    fl[:, 0, 1] = (1.0, 1.0)
    fr[:, 0, 1] = (1.0, 0.0)
    fr[:, 0, 0] = (0.0, 1.0)
    lm = np.array([[False, True]])
    f = sparse_forward(fl, fr, lm, np.ones((1, 2), bool), 2)
    grads = sparse_backward(f, np.array([3.0]), fl, fr)
    np.testing.assert_allclose(grads.left[:, 0, 1], [-0.75, 0.75], atol=1e-15)


def test_backward_is_schedule_independent():
    rng = np.random.default_rng(11)
    fl, fr = rng.normal(size=(2, 3, 6, 8))
    lm = rng.random((6, 8)) < 0.7
    rm = rng.random((6, 8)) < 0.7
    f = sparse_forward(fl, fr, lm, rm, 5)
    up = rng.normal(size=len(f))
    a = sparse_backward(f, up, fl, fr)
    b = sparse_backward(f, up, fl, fr)
    assert a.left.tobytes() == b.left.tobytes() and a.right.tobytes() == b.right.tobytes()


def test_gradcheck_seed0():
    rep = gradcheck(seed=0, height=8, width=8, n_disp=4)
    assert rep.max_rel_error <= 1e-4
    assert rep.max_abs_outside == 0.0


def test_constant_features_zero_left_gradient():
    # every candidate scores the same whatever the left feature, so D does not move;
    # right features still shift single candidates and keep a gradient
    rep = gradcheck(seed=3, constant=True)
    assert rep.rel_error_left == 0.0
    assert rep.rel_error_right <= 1e-4
    fl = np.full((3, 5, 6), 0.7)
    lm = np.random.default_rng(3).random((5, 6)) < 0.7
    f = sparse_forward(fl, fl.copy(), lm, np.ones((5, 6), bool), 4)
    g = sparse_backward(f, np.ones(len(f)), fl, fl.copy())
    assert not g.left.any()


def test_gradcheck_step_1e3_unit_scale():
    rep = gradcheck(seed=5, height=6, width=7, n_disp=3, step=1e-3)
    assert rep.max_rel_error <= 1e-4


def test_gradcheck_detects_sign_flip():
    def flipped(field, upstream, fl, fr):
        g = sparse_backward(field, upstream, fl, fr)
        return GradientBundle(-g.left, g.right)

    assert gradcheck(seed=0, backward=flipped).max_rel_error > 1e-1


def test_gradcheck_size_limit():
    with pytest.raises(InvalidInputError):
        gradcheck(height=17)


def test_gradcheck_suite_reproducible():
    a = gradcheck_suite(4, seed=2)
    b = gradcheck_suite(4, seed=2)
    assert [r.max_rel_error for r in a] == [r.max_rel_error for r in b]
