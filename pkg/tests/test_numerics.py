import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from noisomics.numerics import (UndefinedStatisticError, as_image, clamp01, conv2d_same,
                                lag1_autocorr, summary_stats)


def naive_conv_reflect(x, k):
    """Quadruple loop with mirror-reflect indexing (edge sample not repeated)."""
    h, w = x.shape
    kh, kw = k.shape
    ry, rx = kh // 2, kw // 2

    def refl(i, n):
        while i < 0 or i >= n:
            i = -i if i < 0 else 2 * (n - 1) - i
        return i

    out = np.zeros_like(x)
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(kh):
                for b in range(kw):
                    # true convolution: kernel flipped
                    acc += k[kh - 1 - a, kw - 1 - b] * x[refl(i + a - ry, h), refl(j + b - rx, w)]
            out[i, j] = acc
    return out


class TestClamp:
    def test_interior_unchanged(self):
        x = np.full((1, 4, 4), 0.5)
        assert np.array_equal(clamp01(x), x)

    def test_boundaries(self):
        assert clamp01(np.array([-0.2]))[0] == 0.0
        assert clamp01(np.array([1.7]))[0] == 1.0

    def test_scalar_loop_oracle(self, nprng):
        x = nprng.uniform(-2, 2, size=(3, 7, 5))
        out = clamp01(x)
        for idx, v in np.ndenumerate(x):
            assert out[idx] == min(1.0, max(0.0, v))

    @given(arrays(np.float64, (2, 5, 5), elements=st.floats(-5, 5)))
    def test_idempotent(self, x):
        once = clamp01(x)
        assert np.array_equal(clamp01(once), once)


class TestConv:
    def test_identity_kernel(self, nprng):
        x = nprng.uniform(size=(6, 9))
        assert np.array_equal(conv2d_same(x, np.ones((1, 1))), x)

    def test_dc_preserved(self, nprng):
        k = nprng.uniform(size=(5, 3))
        k /= k.sum()
        out = conv2d_same(np.full((1, 8, 8), 0.37), k)
        assert np.allclose(out, 0.37, atol=1e-15, rtol=0)

    def test_naive_oracle(self, nprng):
        for _ in range(5):
            x = nprng.uniform(size=(5, 5))
            k = nprng.normal(size=(3, 3))
            assert np.abs(conv2d_same(x, k) - naive_conv_reflect(x, k)).max() < 1e-12

    def test_naive_oracle_5x5_kernel(self, nprng):
        x = nprng.uniform(size=(7, 6))
        k = nprng.normal(size=(5, 5))
        assert np.abs(conv2d_same(x, k) - naive_conv_reflect(x, k)).max() < 1e-12

    def test_multichannel_per_channel(self, nprng):
        x = nprng.uniform(size=(3, 6, 6))
        k = nprng.normal(size=(3, 3))
        out = conv2d_same(x, k)
        for c in range(3):
            assert np.array_equal(out[c], conv2d_same(x[c], k))

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            conv2d_same(np.zeros((4, 4)), np.ones((2, 3)))

    @settings(max_examples=30)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2 ** 32 - 1))
    def test_linear(self, a, b, seed):
        r = np.random.default_rng(seed)
        x, y = r.normal(size=(2, 6, 7))
        k = r.normal(size=(3, 5))
        lhs = conv2d_same(a * x + b * y, k)
        rhs = a * conv2d_same(x, k) + b * conv2d_same(y, k)
        assert np.abs(lhs - rhs).max() < 1e-12 * max(1.0, abs(a) + abs(b)) * 10


class TestSummary:
    def test_constant(self):
        s = summary_stats([1, 1, 1])
        assert (s.mean, s.stddev, s.mad) == (1.0, 0.0, 0.0)

    def test_two_points(self):
        s = summary_stats([0, 1])
        assert s.mean == 0.5
        assert s.stddev == pytest.approx(np.sqrt(0.5), abs=1e-15)

    def test_normal_clt(self, root):
        s = summary_stats(root.sampler().normal(100_000))
        assert abs(s.mean) < 0.02
        assert 0.98 <= s.stddev <= 1.02

    def test_fields(self):
        s = summary_stats([3.0, 1.0, 2.0, 10.0])
        assert (s.min, s.max, s.median) == (1.0, 10.0, 2.5)
        # |x - 2.5| = 0.5, 1.5, 0.5, 7.5 -> median 1.0
        assert s.mad == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            summary_stats([])


def test_as_image_promotes_2d():
    assert as_image(np.zeros((3, 4))).shape == (1, 3, 4)
    with pytest.raises(ValueError):
        as_image(np.zeros(5))


def test_lag1_of_constant_is_zero():
    assert lag1_autocorr(np.ones((1, 8, 8))) == 0.0


def test_lag1_loop_oracle(nprng):
    f = nprng.normal(size=(12, 10))

    def corr(a, b):
        a, b = a - a.mean(), b - b.mean()
        return (a * b).sum() / np.sqrt((a * a).sum() * (b * b).sum())

    expect = 0.5 * (corr(f[:, :-1].ravel(), f[:, 1:].ravel()) + corr(f[:-1].ravel(), f[1:].ravel()))
    assert lag1_autocorr(f) == pytest.approx(expect, abs=1e-12)


def test_undefined_statistic_is_value_error():
    assert issubclass(UndefinedStatisticError, ValueError)
