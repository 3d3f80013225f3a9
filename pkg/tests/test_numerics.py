"""Unit and property tests for the shared numerical primitives."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from zscl.numerics import (
    PROB_FLOOR,
    DegenerateInputError,
    DimensionError,
    cosine_sim,
    cross_entropy,
    entropy,
    finite_diff_grad,
    softmax,
    softmax_rows,
)

finite_floats = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)


class TestSoftmax:
    def test_known_value(self):
        p = softmax([0.0, 0.0])
        np.testing.assert_allclose(p, [0.5, 0.5])

    def test_matches_direct_formula(self):
        z = np.array([1.0, 2.0, 3.0])
        expected = np.exp(z) / np.exp(z).sum()
        np.testing.assert_allclose(softmax(z), expected, rtol=1e-14)

    @given(arrays(np.float64, st.integers(1, 10), elements=finite_floats))
    @settings(max_examples=200, deadline=None)
    def test_simplex(self, z):
        p = softmax(z)
        assert np.all(p >= 0.0)
        assert abs(p.sum() - 1.0) < 1e-12

    @given(arrays(np.float64, st.integers(1, 10), elements=finite_floats), finite_floats)
    @settings(max_examples=200, deadline=None)
    def test_shift_invariance(self, z, c):
        np.testing.assert_allclose(softmax(z), softmax(z + c), atol=1e-12)

    def test_extreme_logits_stay_finite(self):
        p = softmax([1e4, 0.0, -1e4])
        assert np.all(np.isfinite(p))
        assert p[0] == pytest.approx(1.0)

    def test_rejects_empty_and_2d(self):
        with pytest.raises(DimensionError):
            softmax([])
        with pytest.raises(DimensionError):
            softmax([[1.0, 2.0]])

    def test_rejects_nan(self):
        with pytest.raises(DegenerateInputError):
            softmax([np.nan, 0.0])


class TestSoftmaxRows:
    def test_each_row_matches_1d(self):
        rng = np.random.default_rng(0)
        Z = rng.normal(size=(5, 4))
        P = softmax_rows(Z)
        for i in range(5):
            np.testing.assert_allclose(P[i], softmax(Z[i]), atol=1e-14)

    def test_rejects_1d(self):
        with pytest.raises(DimensionError):
            softmax_rows(np.zeros(3))


class TestCosineSim:
    def test_parallel_and_orthogonal(self):
        assert cosine_sim([1.0, 0.0], [2.0, 0.0]) == pytest.approx(1.0)
        assert cosine_sim([1.0, 0.0], [0.0, 3.0]) == pytest.approx(0.0)
        assert cosine_sim([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(-1.0)

    @given(
        arrays(np.float64, 4, elements=st.floats(-10, 10)),
        arrays(np.float64, 4, elements=st.floats(-10, 10)),
    )
    @settings(max_examples=200, deadline=None)
    def test_bounded(self, a, b):
        if np.linalg.norm(a) == 0 or np.linalg.norm(b) == 0:
            with pytest.raises(DegenerateInputError):
                cosine_sim(a, b)
        else:
            assert -1.0 <= cosine_sim(a, b) <= 1.0

    def test_scale_invariance(self):
        a = np.array([1.0, 2.0, -3.0])
        b = np.array([0.5, -1.0, 2.0])
        assert cosine_sim(a, b) == pytest.approx(cosine_sim(10.0 * a, 0.01 * b))

    def test_rejects_zero_vector(self):
        with pytest.raises(DegenerateInputError):
            cosine_sim([0.0, 0.0], [1.0, 0.0])

    def test_rejects_shape_mismatch(self):
        with pytest.raises(DimensionError):
            cosine_sim([1.0, 0.0], [1.0, 0.0, 0.0])


class TestCrossEntropy:
    def test_self_entropy(self):
        p = np.array([0.25, 0.75])
        assert cross_entropy(p, p) == pytest.approx(entropy(p), abs=1e-12)

    def test_hand_value(self):
        # -1 * log(0.5) = log 2
        assert cross_entropy([1.0, 0.0], [0.5, 0.5]) == pytest.approx(np.log(2.0))

    def test_floor_keeps_value_finite(self):
        v = cross_entropy([1.0, 0.0], [0.0, 1.0])
        assert np.isfinite(v)
        assert v == pytest.approx(-np.log(PROB_FLOOR))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(DimensionError):
            cross_entropy([1.0, 0.0], [1.0, 0.0, 0.0])


class TestFiniteDiff:
    def test_quadratic(self):
        # f(x) = sum(x^2), grad = 2x, exact for central differences
        x = np.array([1.0, -2.0, 3.0])
        g = finite_diff_grad(lambda v: float((v**2).sum()), x)
        np.testing.assert_allclose(g, 2.0 * x, rtol=1e-9)

    def test_trig(self):
        x = np.array([0.3, -1.2])
        g = finite_diff_grad(lambda v: float(np.sin(v).sum()), x)
        np.testing.assert_allclose(g, np.cos(x), rtol=1e-8)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            finite_diff_grad(lambda v: 0.0, np.zeros(2), h=0.0)

    def test_rejects_nonfinite_function(self):
        with pytest.raises(DegenerateInputError):
            finite_diff_grad(lambda v: float("nan"), np.zeros(2))
