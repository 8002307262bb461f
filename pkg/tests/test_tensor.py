import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rco import tensor as tk
from rco.errors import InvalidAxisError, ShapeError


def naive_swap(x, a, b):
    """Index-permutation loop oracle for swap_axes."""
    shape = list(x.shape)
    shape[a], shape[b] = shape[b], shape[a]
    out = np.zeros(shape)
    for idx in np.ndindex(x.shape):
        jdx = list(idx)
        jdx[a], jdx[b] = jdx[b], jdx[a]
        out[tuple(jdx)] = x[idx]
    return out


def naive_mode1(p, x):
    """Nested-loop oracle for the first-axis contraction."""
    out = np.zeros_like(x)
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            out[i] += p[i, j] * x[j]
    return out


small_shapes = st.lists(st.integers(1, 6), min_size=1, max_size=4)


@st.composite
def tensor_and_axes(draw):
    shape = tuple(draw(small_shapes))
    seed = draw(st.integers(0, 2**31))
    x = np.random.default_rng(seed).normal(size=shape)
    a = draw(st.integers(0, len(shape) - 1))
    b = draw(st.integers(0, len(shape) - 1))
    return x, a, b


class TestSwapAxes:
    def test_self_swap_is_bitwise_identity(self):
        x = np.random.default_rng(0).normal(size=(2, 3, 4))
        out = tk.swap_axes(x, 1, 1)
        assert out is not x
        npt.assert_array_equal(out, x)

    def test_matrix_transpose(self):
        x = np.array([[1.0, 2, 3], [4, 5, 6]])
        npt.assert_array_equal(tk.swap_axes(x, 0, 1), [[1, 4], [2, 5], [3, 6]])

    def test_3d_against_loop_oracle(self):
        x = np.random.default_rng(1).normal(size=(2, 2, 2))
        npt.assert_array_equal(tk.swap_axes(x, 0, 2), naive_swap(x, 0, 2))

    @given(tensor_and_axes())
    @settings(max_examples=40, deadline=None)
    def test_involution(self, case):
        x, a, b = case
        npt.assert_array_equal(tk.swap_axes(tk.swap_axes(x, a, b), a, b), x)

    @given(tensor_and_axes())
    @settings(max_examples=40, deadline=None)
    def test_matches_oracle(self, case):
        x, a, b = case
        npt.assert_array_equal(tk.swap_axes(x, a, b), naive_swap(x, a, b))

    def test_out_of_range_axis(self):
        x = np.zeros((2, 3))
        with pytest.raises(InvalidAxisError):
            tk.swap_axes(x, 0, 2)
        with pytest.raises(InvalidAxisError):
            tk.swap_axes(x, 5, 0)


class TestMode1Matmul:
    def test_identity(self):
        x = np.random.default_rng(2).normal(size=(3, 4, 2))
        npt.assert_array_equal(tk.mode1_matmul(np.eye(3), x), x)

    def test_row_swap(self):
        p = np.array([[0.0, 1], [1, 0]])
        x = np.array([[1.0, 2], [3, 4]])
        npt.assert_array_equal(tk.mode1_matmul(p, x), [[3, 4], [1, 2]])
        npt.assert_array_equal(tk.mode1_matmul(p, x), naive_mode1(p, x))

    def test_row_duplication(self):
        p = np.array([[1.0, 0], [1, 0]])
        x = np.array([[1.0, 2], [3, 4]])
        npt.assert_array_equal(tk.mode1_matmul(p, x), [[1, 2], [1, 2]])
        npt.assert_array_equal(tk.mode1_matmul(p, x), naive_mode1(p, x))

    @given(st.integers(0, 2**31), small_shapes)
    @settings(max_examples=40, deadline=None)
    def test_matches_oracle_random(self, seed, shape):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=tuple(shape))
        p = rng.normal(size=(shape[0], shape[0]))
        npt.assert_allclose(tk.mode1_matmul(p, x), naive_mode1(p, x), rtol=1e-12)

    def test_hard_right_stochastic_selects_rows(self):
        # Every output row must be exactly one input row.
        rng = np.random.default_rng(3)
        x = rng.normal(size=(5, 3))
        choice = rng.integers(0, 5, size=5)
        p = np.zeros((5, 5))
        p[np.arange(5), choice] = 1.0
        out = tk.mode1_matmul(p, x)
        for i in range(5):
            npt.assert_array_equal(out[i], x[choice[i]])

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            tk.mode1_matmul(np.zeros((2, 3)), np.zeros((3, 2)))
        with pytest.raises(ShapeError):
            tk.mode1_matmul(np.zeros((2, 2)), np.zeros((3, 2)))


class TestKernels:
    def test_sum_axis_of_ones(self):
        npt.assert_array_equal(tk.sum_axis(np.ones((3, 4)), axis=1), [4.0, 4, 4])

    def test_relu(self):
        npt.assert_array_equal(tk.relu(np.array([-1.0, 0, 2])), [0.0, 0, 2])

    def test_exp_zero(self):
        npt.assert_array_equal(tk.exp(np.array([0.0])), [1.0])

    def test_add_mul_scale(self):
        a = np.array([1.0, 2])
        b = np.array([3.0, 4])
        npt.assert_array_equal(tk.add(a, b), [4.0, 6])
        npt.assert_array_equal(tk.mul(a, b), [3.0, 8])
        npt.assert_array_equal(tk.scale(a, -2.0), [-2.0, -4])

    def test_max_axis(self):
        x = np.array([[1.0, 5, 2], [4, 0, 3]])
        npt.assert_array_equal(tk.max_axis(x, axis=1), [5.0, 4])

    def test_binary_shape_mismatch(self):
        with pytest.raises(ShapeError):
            tk.add(np.zeros(3), np.zeros(4))
        with pytest.raises(ShapeError):
            tk.mul(np.zeros((2, 3)), np.zeros((3, 2)))

    @given(st.integers(0, 2**31), small_shapes)
    @settings(max_examples=30, deadline=None)
    def test_reductions_match_loop_oracle(self, seed, shape):
        x = np.random.default_rng(seed).normal(size=tuple(shape))
        for axis in range(x.ndim):
            expected = np.zeros(tuple(n for i, n in enumerate(x.shape) if i != axis))
            for idx in np.ndindex(x.shape):
                jdx = tuple(v for i, v in enumerate(idx) if i != axis)
                expected[jdx] += x[idx]
            npt.assert_allclose(tk.sum_axis(x, axis), expected, rtol=1e-12, atol=1e-14)

    @given(st.integers(0, 2**31), small_shapes)
    @settings(max_examples=30, deadline=None)
    def test_pointwise_kernels_match_loop_oracle(self, seed, shape):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=tuple(shape))
        b = rng.normal(size=tuple(shape))
        for kernel, ref in (
            (lambda: tk.add(a, b), lambda x, y: x + y),
            (lambda: tk.mul(a, b), lambda x, y: x * y),
            (lambda: tk.scale(a, -1.3), lambda x, _: -1.3 * x),
            (lambda: tk.exp(a), lambda x, _: np.exp(x)),
            (lambda: tk.relu(a), lambda x, _: x if x > 0 else 0.0),
        ):
            out = kernel()
            expected = np.zeros(a.shape)
            for idx in np.ndindex(a.shape):
                expected[idx] = ref(a[idx], b[idx])
            npt.assert_allclose(out, expected, rtol=1e-12, atol=0)

    def test_softmax_rows_sum_to_one(self):
        x = np.random.default_rng(4).normal(size=(6, 5)) * 10
        p = tk.softmax_rows(x)
        npt.assert_allclose(p.sum(axis=1), np.ones(6), rtol=0, atol=1e-12)

    def test_softmax_rows_stable_for_huge_logits(self):
        p = tk.softmax_rows(np.array([[1e6, 0.0, -1e6]]))
        assert np.isfinite(p).all()
        npt.assert_allclose(p.sum(), 1.0, atol=1e-12)
