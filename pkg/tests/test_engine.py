import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisomics import engine
from noisomics.engine import (ANISO_KERNEL, DEFAULT_ORDER, PRIMITIVES, REGISTRY, NoiseStrengths,
                              apply_anisotropic, apply_clean, apply_gaussian, apply_poisson,
                              apply_quantization, apply_salt_pepper, compose, resynthesize,
                              sample_strengths, softmax, stage_stream)
from noisomics.numerics import conv2d_same, lag1_autocorr
from noisomics.rng import RngStream


def const(v, size=256):
    return np.full((1, size, size), float(v))


# Kernel-derived lag-1 autocorrelation of filtered white noise, computed by
# brute-force summation over kernel overlaps.
def kernel_lag1(k):
    num = sum(k[i, j] * k[i, j + 1] for i in range(5) for j in range(4))
    return num / (k * k).sum()


class TestStrengths:
    def test_zero_logits_uniform(self):
        assert np.allclose(softmax(np.zeros(6)), 1 / 6, rtol=0, atol=1e-15)

    def test_peaked_logits(self):
        eta = softmax([10, 0, 0, 0, 0, 0])
        closed = 1 / (1 + 5 * np.exp(-10))
        assert eta[0] == pytest.approx(closed, abs=1e-15)
        # frozen from the closed form; five zero logits contribute 5 e^-10
        assert eta[0] == pytest.approx(0.9997730518683338, abs=1e-15)
        assert np.allclose(eta[1:], np.exp(-10) * eta[0], rtol=1e-12)

    def test_sampled_positive_and_normalized(self, root):
        for i in range(50):
            v = sample_strengths(root.derive("s", i)).vector()
            assert (v > 0).all() and abs(v.sum() - 1) < 1e-9

    def test_exchangeable_means(self, root):
        # vectorised replica of sample_strengths: softmax of 6 standard normals
        v = np.stack([sample_strengths(root.derive("m", i)).vector() for i in range(100_000)])
        assert np.abs(v.mean(axis=0) - 1 / 6).max() < 0.01

    def test_dominant_tie_rule(self):
        assert NoiseStrengths(0.3, 0.3, 0.2, 0.1, 0.05, 0.05).dominant() == "gaussian"
        assert NoiseStrengths(*[1 / 6] * 6).dominant() == "gaussian"
        assert NoiseStrengths.only("anisotropic", 0.4).dominant() == "anisotropic"

    def test_vector_round_trip(self):
        s = NoiseStrengths(0.1, 0.2, 0.3, 0.15, 0.05, 0.2)
        assert NoiseStrengths.from_vector(s.vector()) == s
        assert list(s.as_dict()) == list(PRIMITIVES)


class TestGaussian:
    def test_residual_std(self, root):
        x = const(0.5)
        out = apply_gaussian(x, 0.1, root)
        # the 5-sigma region of a N(0.5, 0.01) never reaches the clamp at 0 or 1
        std = (out - x).std(ddof=1)
        assert 0.0988 <= std <= 0.1012

    def test_half_normal_mean_at_zero(self, root):
        out = apply_gaussian(const(0.0), 0.1, root)
        expect = 0.1 / np.sqrt(2 * np.pi)  # E[max(N, 0)] for N ~ N(0, 0.1^2)
        assert expect == pytest.approx(0.0399, abs=1e-4)
        assert abs(out.mean() - expect) < 5 * 0.1 * np.sqrt(0.5) / 256

    def test_negative_eta(self, root):
        with pytest.raises(ValueError):
            apply_gaussian(const(0.5, 4), -0.1, root)


class TestSaltPepper:
    def test_fractions(self, root):
        x = const(0.5, 1000)
        out = apply_salt_pepper(x, 0.1, root)
        tol = 5 * np.sqrt(0.1 * 0.9 / 1e6)
        assert abs((out == 0).mean() - 0.1) < tol
        assert abs((out == 1).mean() - 0.1) < tol

    def test_full_coverage(self, root):
        out = apply_salt_pepper(const(0.5, 64), 0.5, root)
        assert set(np.unique(out)) <= {0.0, 1.0}

    def test_cap(self, root):
        with pytest.raises(ValueError):
            apply_salt_pepper(const(0.5, 4), 0.51, root)

    def test_compose_clips_to_cap_but_keeps_label(self, root):
        s = NoiseStrengths(salt_pepper=0.8, clean=0.2)
        sample = compose(const(0.5, 16), s, root)
        assert sample.strengths.salt_pepper == 0.8
        direct = apply_salt_pepper(const(0.5, 16), 0.5, stage_stream(root, "salt_pepper", 1))
        assert np.array_equal(sample.corrupted, direct)


class TestPoisson:
    def test_saturation_fraction(self, root):
        out = apply_poisson(const(0.5, 1000), 0.2, root)
        p = 1 - np.exp(-0.1)
        assert p == pytest.approx(0.09516, abs=1e-5)
        assert abs((out == 1.0).mean() - p) < 5 * np.sqrt(p * (1 - p) / 1e6)

    def test_zero_image(self, root):
        x = const(0.0, 32)
        assert np.array_equal(apply_poisson(x, 0.7, root), x)

    def test_centered_mode_shifts_down(self, root):
        out = apply_poisson(const(0.5, 64), 0.2, root, mode="centered")
        # no event: 0.5 - 0.1; one or more events: clamp to 1
        assert set(np.round(np.unique(out), 12)) <= {0.4, 1.0}

    def test_bad_mode(self, root):
        with pytest.raises(ValueError):
            apply_poisson(const(0.5, 4), 0.1, root, mode="other")


class TestQuantization:
    def test_lattice(self, root, nprng):
        x = nprng.uniform(size=(1, 64, 64))
        out = apply_quantization(x, 0.25, root)
        assert set(np.unique(out)) <= {0.0, 0.25, 0.5, 0.75, 1.0}

    def test_dithering_unbiased(self, root):
        x = const(0.37, 1000)
        out = apply_quantization(x, 0.25, root)
        # no clamping happens: outputs are 0.25 or 0.5
        assert abs(out.mean() - 0.37) < 5 * (0.25 / np.sqrt(12)) / 1e3

    def test_passthrough(self, root, nprng):
        x = nprng.uniform(size=(1, 8, 8))
        assert np.array_equal(apply_quantization(x, 5e-7, root), x)

    def test_additive_mode(self, root):
        x = const(0.2, 32)
        u = root.sampler().uniform(x.shape)
        assert np.array_equal(apply_quantization(x, 0.1, root, mode="additive"),
                              np.clip(x + 0.1 * u, 0, 1))


class TestAnisotropic:
    def test_kernel(self):
        assert abs(ANISO_KERNEL.sum() - 1) < 1e-12
        assert np.array_equal(ANISO_KERNEL, ANISO_KERNEL[::-1])
        assert np.array_equal(ANISO_KERNEL, ANISO_KERNEL[:, ::-1])
        assert not ANISO_KERNEL.flags.writeable

    def test_residual_std(self, root):
        x = const(0.5)
        out = apply_anisotropic(x, 0.2, root)
        sigma = 0.2 * np.sqrt((ANISO_KERNEL ** 2).sum())
        assert sigma == pytest.approx(0.2 * 0.2734, abs=1e-4)
        std = (out - x).std(ddof=1)
        # correlated pixels: effective sample size shrinks by the kernel's
        # variance-inflation factor, bounded here by a generous 1/25
        assert abs(std - sigma) < 5 * sigma / np.sqrt(2 * 65536 / 25)

    def test_lag1_matches_kernel(self, root):
        out = apply_anisotropic(const(0.5), 0.2, root)
        rho = kernel_lag1(ANISO_KERNEL)
        assert rho == pytest.approx(0.8, abs=1e-12)
        assert abs(lag1_autocorr(out - 0.5) - rho) < 0.05

    def test_field_is_filtered_white(self, root):
        out = apply_anisotropic(const(0.5, 16), 0.01, root)
        white = root.sampler().normal((1, 16, 16), std=0.01)
        assert np.allclose(out, 0.5 + conv2d_same(white, ANISO_KERNEL), atol=0, rtol=0)


def test_clean_is_identity(nprng):
    x = nprng.uniform(size=(2, 5, 5))
    for eta in (0.0, 0.3, 1.0):
        assert np.array_equal(apply_clean(x, eta), x)


@pytest.mark.parametrize("name", PRIMITIVES)
def test_zero_eta_identity(name, root, nprng):
    for i in range(5):
        x = nprng.uniform(size=(1, 12, 12))
        assert np.array_equal(REGISTRY[name](x, 0.0, root.derive("z", i)), x)


class TestCompose:
    def test_all_clean(self, root, nprng):
        x = nprng.uniform(size=(1, 16, 16))
        assert np.array_equal(compose(x, NoiseStrengths(clean=1.0), root).corrupted, x)

    @pytest.mark.parametrize("name", PRIMITIVES[:-1])
    def test_single_component_degeneracy(self, name, root, nprng):
        x = nprng.uniform(size=(1, 16, 16))
        s = NoiseStrengths.only(name, 0.3)
        pos = DEFAULT_ORDER.index(name)
        direct = REGISTRY[name](x, 0.3, stage_stream(root, name, pos))
        assert np.array_equal(compose(x, s, root).corrupted, direct)

    def test_sequential_oracle(self, root, nprng):
        x = nprng.uniform(size=(1, 24, 24))
        for i in range(10):
            s = sample_strengths(root.derive("eta", i))
            stream = root.derive("noise", i)
            out = x.copy()
            for pos, name in enumerate(DEFAULT_ORDER):
                eta = getattr(s, name)
                child = stream.derive(name, pos)
                if name == "gaussian":
                    out = np.clip(out + child.sampler().normal(out.shape, std=eta), 0, 1)
                elif name == "salt_pepper":
                    e = min(eta, 0.5)
                    r = child.sampler().uniform(out.shape)
                    out = np.where(r < e, 0.0, np.where(r > 1 - e, 1.0, out))
                elif name == "poisson":
                    out = np.clip(out + child.sampler().poisson(eta * out), 0, 1)
                elif name == "quantization":
                    u = child.sampler().uniform(out.shape)
                    out = np.clip(eta * np.floor(out / eta + u), 0, 1)
                elif name == "anisotropic":
                    w = child.sampler().normal(out.shape, std=eta)
                    out = np.clip(out + conv2d_same(w, ANISO_KERNEL), 0, 1)
            assert np.array_equal(compose(x, s, stream).corrupted, out)

    def test_custom_order_recorded(self, root, nprng):
        x = nprng.uniform(size=(1, 8, 8))
        order = tuple(reversed(PRIMITIVES))
        sample = compose(x, sample_strengths(root), root.derive("n"), order=order)
        assert sample.order == order
        assert np.array_equal(resynthesize(x, sample), sample.corrupted)

    def test_unknown_or_incomplete_order(self, root):
        x = const(0.5, 4)
        with pytest.raises(ValueError):
            compose(x, NoiseStrengths(clean=1), root, order=("gaussian", "blur"))
        with pytest.raises(ValueError):
            compose(x, NoiseStrengths(clean=1), root, order=PRIMITIVES[:-1])

    def test_stage_isolation(self, root, nprng):
        # changing one stage's strength leaves other stages' draws unchanged
        x = nprng.uniform(size=(1, 16, 16))
        a = compose(x, NoiseStrengths(gaussian=0.0, anisotropic=0.1), root).corrupted
        b = compose(x, NoiseStrengths(gaussian=0.0, anisotropic=0.1, clean=0.9), root).corrupted
        assert np.array_equal(a, b)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 63), st.lists(st.floats(-3, 3), min_size=6, max_size=6))
    def test_output_in_unit_range_and_reproducible(self, seed, z):
        rng = RngStream(seed)
        x = rng.derive("img").sampler().uniform((1, 12, 12))
        s = NoiseStrengths.from_vector(softmax(z))
        sample = compose(x, s, rng.derive("noise"))
        assert sample.corrupted.min() >= 0 and sample.corrupted.max() <= 1
        assert np.array_equal(resynthesize(x, sample), sample.corrupted)


@pytest.mark.parametrize("name", PRIMITIVES[:-1])
def test_monotone_intensity_ladder(name, root):
    x = const(0.5, 128) + 0.2 * np.sin(np.arange(128) / 7.0)[None, None, :]
    devs = []
    for eta in (0.0, 0.05, 0.2, 0.5, 0.8):
        e = min(eta, 0.5) if name == "salt_pepper" else eta
        devs.append(np.abs(REGISTRY[name](x, e, root.derive(name)) - x).mean())
    assert all(b >= a for a, b in zip(devs, devs[1:])), devs
