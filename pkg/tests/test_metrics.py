import math

import numpy as np
import pytest

from echokit import SampleBuffer, lsd, measure_snr, mix_at_snr, ssim, stoi
from echokit.metrics import MetricReport

from conftest import speechlike


class TestStoi:
    def test_clean_vs_itself(self, rng):
        clean = speechlike(rng, seconds=1.2)
        assert stoi(clean, clean) == pytest.approx(1.0, abs=1e-6)

    def test_monotone_in_snr(self, rng):
        clean = speechlike(rng, seconds=3.0)
        noise = SampleBuffer(16000, rng.standard_normal(len(clean)))
        scores = [stoi(clean, mix_at_snr(clean, noise, snr))
                  for snr in (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0)]
        assert all(a < b for a, b in zip(scores, scores[1:]))

    def test_scale_invariance(self, rng):
        clean = speechlike(rng, seconds=1.0)
        noise = SampleBuffer(16000, rng.standard_normal(len(clean)))
        noisy = mix_at_snr(clean, noise, 5.0)
        scaled = SampleBuffer(16000, 3.7 * noisy.samples)
        assert stoi(clean, noisy) == pytest.approx(stoi(clean, scaled), abs=1e-6)

    def test_short_input_rejected(self, rng):
        clean = speechlike(rng, seconds=0.3)
        with pytest.raises(ValueError, match="too short"):
            stoi(clean, clean)

    def test_wrong_rate_rejected(self):
        buf = SampleBuffer(8000, np.random.default_rng(0).standard_normal(8000))
        with pytest.raises(ValueError, match="16 kHz"):
            stoi(buf, buf)

    def test_length_mismatch(self, rng):
        clean = speechlike(rng, seconds=1.0)
        shorter = SampleBuffer(16000, clean.samples[:-5])
        with pytest.raises(ValueError, match="equal length"):
            stoi(clean, shorter)

    def test_silent_clean_rejected(self):
        z = SampleBuffer(16000, np.zeros(16000))
        with pytest.raises(ValueError, match="silent"):
            stoi(z, z)


class TestLsd:
    def test_identical_is_zero(self, rng):
        s = np.abs(rng.standard_normal((20, 30))) + 1.0
        assert lsd(s, s) == 0.0

    def test_uniform_gain_ten(self, rng):
        s = rng.uniform(1.0, 2.0, size=(50, 100))
        assert lsd(s, 10.0 * s) == pytest.approx(20.0, abs=1e-9)

    def test_hand_arithmetic_1x2(self):
        ref = np.array([[1.0, 1.0]])
        est = np.array([[10.0, 1.0]])
        assert lsd(ref, est) == pytest.approx(math.sqrt(200.0), abs=1e-6)

    @pytest.mark.parametrize("gain", [0.1, 2.0, 10.0])
    def test_gain_law(self, rng, gain):
        s = rng.uniform(0.5, 2.0, size=(8, 16))
        assert lsd(s, gain * s) == pytest.approx(abs(20 * math.log10(gain)), abs=1e-6)

    def test_symmetric(self, rng):
        a = rng.uniform(0.1, 2.0, size=(10, 12))
        b = rng.uniform(0.1, 2.0, size=(10, 12))
        assert lsd(a, b) == pytest.approx(lsd(b, a), abs=1e-12)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError, match="shape"):
            lsd(np.ones((3, 4)), np.ones((4, 3)))

    def test_negative_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            lsd(np.full((3, 4), -1.0), np.ones((3, 4)))


class TestSsim:
    def test_identical_is_one(self, rng):
        a = rng.standard_normal((32, 40))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_constant_pair_raw_mode(self):
        # luminance (2*0.2*0.8 + C1)/(0.2^2 + 0.8^2 + C1), contrast term 1
        a = np.full((16, 16), 0.2)
        b = np.full((16, 16), 0.8)
        c1 = 1e-4
        expected = (2 * 0.2 * 0.8 + c1) / (0.2 ** 2 + 0.8 ** 2 + c1)
        assert ssim(a, b, rescale=False) == pytest.approx(expected, abs=1e-12)
        assert ssim(a, b, rescale=False) == pytest.approx(0.4707, abs=1e-4)

    def test_inverted_image_scores_low(self, rng):
        a = rng.uniform(0.0, 1.0, size=(24, 24))
        assert ssim(a, 1.0 - a) < 0.5

    def test_bounds(self, rng):
        for _ in range(10):
            a = rng.standard_normal((12, 12))
            b = rng.standard_normal((12, 12))
            val = ssim(a, b)
            assert -1.0 - 1e-9 <= val <= 1.0 + 1e-9

    def test_jointly_constant_equal(self):
        a = np.full((10, 10), 3.3)
        assert ssim(a, a.copy()) == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            ssim(np.ones((9, 9)), np.ones((9, 10)))

    def test_window_larger_than_input(self):
        with pytest.raises(ValueError, match=">="):
            ssim(np.ones((4, 20)), np.ones((4, 20)))


class TestMeasureSnr:
    def test_round_trip_with_mixer(self, rng):
        clean = SampleBuffer(16000, rng.standard_normal(8000) * 0.2)
        noise = SampleBuffer(16000, rng.standard_normal(8000))
        noisy = mix_at_snr(clean, noise, 5.0)
        assert measure_snr(clean, noisy) == pytest.approx(5.0, abs=0.01)

    def test_identical_reports_clean(self, rng):
        c = SampleBuffer(16000, rng.standard_normal(100))
        assert measure_snr(c, c) == math.inf

    def test_noise_equals_clean_is_zero_db(self, rng):
        c = SampleBuffer(16000, rng.standard_normal(100))
        doubled = SampleBuffer(16000, 2.0 * c.samples)
        assert measure_snr(c, doubled) == pytest.approx(0.0, abs=1e-12)

    def test_mismatches(self, rng):
        c = SampleBuffer(16000, rng.standard_normal(100))
        with pytest.raises(ValueError):
            measure_snr(c, SampleBuffer(8000, c.samples))
        with pytest.raises(ValueError):
            measure_snr(c, SampleBuffer(16000, c.samples[:-1]))


class TestMetricReport:
    def test_field_order_is_fixed(self):
        rep = MetricReport("utt1", stoi=0.9, lsd=1.2, ssim=0.8, snr_db=5.0)
        line = rep.to_json_line()
        assert line.index('"id"') < line.index('"stoi"') < line.index('"lsd"') \
            < line.index('"ssim"') < line.index('"snr_db"')

    def test_clean_result_serialized(self):
        rep = MetricReport("utt2", stoi=1.0, lsd=0.0, ssim=1.0, snr_db=math.inf)
        assert '"snr_db": "clean"' in rep.to_json_line()

    def test_pesq_merging(self):
        rep = MetricReport("utt3", stoi=0.9, lsd=1.0, ssim=0.5, snr_db=3.0, pesq=3.2)
        assert rep.to_json_line().rstrip().endswith('"pesq": 3.2}')
