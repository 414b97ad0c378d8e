import numpy as np
import pytest

from echokit import (
    MotionProfile,
    SampleBuffer,
    ToneConfig,
    doppler_shift,
    mix_at_snr,
    simulate_reflection,
    synth_multitone,
)


def rms(x):
    return np.sqrt(np.mean(np.asarray(x) ** 2))


class TestToneConfig:
    def test_defaults(self, tone_cfg):
        assert tone_cfg.f0 == 17250.0
        assert tone_cfg.delta_f == 750.0
        assert tone_cfg.n_tones == 8
        assert tone_cfg.fs == 48000.0
        assert tone_cfg.amplitude == pytest.approx(1 / 8)
        assert list(tone_cfg.tone_freqs) == [17250 + 750 * i for i in range(8)]

    def test_nyquist_guard(self):
        with pytest.raises(ValueError, match="Nyquist"):
            ToneConfig(f0=30000.0, n_tones=1)
        with pytest.raises(ValueError, match="Nyquist"):
            ToneConfig(n_tones=10)  # top tone would hit 24 kHz

    @pytest.mark.parametrize("kw", [dict(f0=0), dict(delta_f=-1),
                                    dict(n_tones=0), dict(fs=0)])
    def test_bad_fields(self, kw):
        with pytest.raises(ValueError):
            ToneConfig(**kw)


class TestSynthMultitone:
    def test_one_second_has_exactly_the_plan_tones(self, tone_cfg):
        tx = synth_multitone(tone_cfg, 1.0)
        assert len(tx) == 48000
        # 1 Hz bin spacing: each tone occupies exactly one bin
        spectrum = np.abs(np.fft.rfft(tx.samples))
        hot = set(np.nonzero(spectrum > 1.0)[0])
        assert hot == {17250 + 750 * i for i in range(8)}

    def test_single_tone_fft_bin(self):
        cfg = ToneConfig(n_tones=1)
        tx = synth_multitone(cfg, 4096 / 48000)
        assert len(tx) == 4096
        spectrum = np.abs(np.fft.rfft(tx.samples))
        assert np.argmax(spectrum) == 1472  # 17250 * 4096 / 48000

    def test_zero_duration(self, tone_cfg):
        assert len(synth_multitone(tone_cfg, 0.0)) == 0

    def test_amplitude_normalization_bounds_sum(self, tone_cfg):
        tx = synth_multitone(tone_cfg, 0.5)
        assert np.max(np.abs(tx.samples)) <= 1.0 + 1e-12

    def test_phase_length_checked(self, tone_cfg):
        with pytest.raises(ValueError, match="phases"):
            synth_multitone(tone_cfg, 0.1, phases=[0.0, 0.0])

    def test_negative_duration(self, tone_cfg):
        with pytest.raises(ValueError):
            synth_multitone(tone_cfg, -1.0)


class TestSimulateReflection:
    def test_static_reflector_keeps_carriers(self, tone_cfg):
        tx = synth_multitone(tone_cfg, 1.0)
        rx = simulate_reflection(tx, MotionProfile.static(0.3), tone_cfg)
        spectrum = np.abs(np.fft.rfft(rx.samples))
        hot = set(np.nonzero(spectrum > 1.0)[0])
        assert hot == {17250 + 750 * i for i in range(8)}

    def test_constant_velocity_bin_offset(self):
        # oracle: FFT of the simulated signal; two-way path doubles the shift
        cfg = ToneConfig(n_tones=1)
        v, c = 0.5, 340.0
        tx = synth_multitone(cfg, 1.0)
        rx = simulate_reflection(tx, MotionProfile.constant_velocity(2.0, v), cfg)
        frame = rx.samples[:4080] * np.hanning(4080)
        spectrum = np.abs(np.fft.rfft(frame, n=4096))
        carrier = 1472
        expected = round(2 * 17250 * v / c / 11.71875)
        assert np.argmax(spectrum) - carrier == expected

    def test_two_reflectors_superpose(self, tone_cfg):
        tx = synth_multitone(tone_cfg, 0.25)
        p1 = MotionProfile.static(0.2, reflectivity=0.7)
        p2 = MotionProfile.constant_velocity(1.0, 0.8, reflectivity=0.4)
        both = simulate_reflection(tx, [p1, p2], tone_cfg)
        split = (simulate_reflection(tx, p1, tone_cfg).samples
                 + simulate_reflection(tx, p2, tone_cfg).samples)
        np.testing.assert_allclose(both.samples, split, atol=1e-12)

    def test_power_scales_with_reflectivity_squared(self, tone_cfg):
        tx = synth_multitone(tone_cfg, 0.25)
        p1 = simulate_reflection(tx, MotionProfile.static(0.3, 1.0), tone_cfg)
        p2 = simulate_reflection(tx, MotionProfile.static(0.3, 2.0), tone_cfg)
        ratio = np.sum(p2.samples ** 2) / np.sum(p1.samples ** 2)
        assert ratio == pytest.approx(4.0, rel=1e-12)

    def test_range_must_stay_positive(self, tone_cfg):
        tx = synth_multitone(tone_cfg, 1.0)
        profile = MotionProfile.constant_velocity(0.5, 1.0)  # hits zero at 0.5 s
        with pytest.raises(ValueError, match="positive"):
            simulate_reflection(tx, profile, tone_cfg)

    def test_scalar_range_callable_is_vectorized(self, tone_cfg):
        tx = synth_multitone(tone_cfg, 0.01)
        profile = MotionProfile(lambda t: 0.3)  # returns a scalar
        rx = simulate_reflection(tx, profile, tone_cfg)
        assert len(rx) == len(tx)

    def test_fs_mismatch(self, tone_cfg):
        tx = SampleBuffer(44100, np.zeros(100))
        with pytest.raises(ValueError):
            simulate_reflection(tx, MotionProfile.static(0.3), tone_cfg)


class TestDopplerShift:
    def test_94hz_bound_at_160cms(self):
        # 1.6 m/s folded velocity near the top of the band -> about 94 Hz
        assert doppler_shift(1.60, 20000.0, 340.0) == pytest.approx(94.1, abs=0.05)

    def test_zero_velocity(self):
        assert doppler_shift(0.0, 21000.0, 340.0) == 0.0

    def test_closed_form(self):
        assert doppler_shift(0.80, 17250.0, 340.0) == pytest.approx(40.59, abs=0.005)

    def test_bad_sound_speed(self):
        with pytest.raises(ValueError):
            doppler_shift(1.0, 20000.0, 0.0)


class TestMixAtSnr:
    def test_gain_half(self):
        clean = SampleBuffer(16000, np.full(1000, 0.1))
        noise = SampleBuffer(16000, np.tile([0.2, -0.2], 500))
        mixed = mix_at_snr(clean, noise, 0.0)
        g = (mixed.samples - clean.samples) / noise.samples
        np.testing.assert_allclose(g, 0.5, rtol=1e-12)

    def test_gain_tenth_at_20db(self, rng):
        x = rng.standard_normal(2000)
        clean = SampleBuffer(8000, x)
        noise = SampleBuffer(8000, x[::-1].copy())  # equal RMS
        mixed = mix_at_snr(clean, noise, 20.0)
        g = (mixed.samples - clean.samples) / noise.samples
        np.testing.assert_allclose(g, 0.1, rtol=1e-12)

    def test_silent_noise_rejected(self):
        clean = SampleBuffer(8000, np.ones(100))
        with pytest.raises(ValueError, match="silent"):
            mix_at_snr(clean, SampleBuffer(8000, np.zeros(100)), 5.0)

    def test_silent_clean_rejected(self):
        noise = SampleBuffer(8000, np.ones(100))
        with pytest.raises(ValueError, match="silent"):
            mix_at_snr(SampleBuffer(8000, np.zeros(100)), noise, 5.0)

    def test_fs_mismatch(self):
        with pytest.raises(ValueError):
            mix_at_snr(SampleBuffer(8000, np.ones(10)),
                       SampleBuffer(16000, np.ones(10)), 0.0)

    def test_short_noise_is_tiled(self, rng):
        clean = SampleBuffer(8000, rng.standard_normal(1000))
        noise = SampleBuffer(8000, rng.standard_normal(300))
        mixed = mix_at_snr(clean, noise, 10.0)
        residual = mixed.samples - clean.samples
        # the tiled pattern repeats with period 300
        np.testing.assert_allclose(residual[:300], residual[300:600], rtol=1e-9)

    def test_long_noise_offset(self, rng):
        clean = SampleBuffer(8000, rng.standard_normal(500))
        noise = SampleBuffer(8000, rng.standard_normal(5000))
        m0 = mix_at_snr(clean, noise, 0.0)
        m1 = mix_at_snr(clean, noise, 0.0, noise_offset=100)
        assert not np.allclose(m0.samples, m1.samples)

    @pytest.mark.parametrize("snr_db", [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0])
    def test_snr_round_trip(self, rng, snr_db):
        clean = SampleBuffer(16000, rng.standard_normal(4000) * 0.3)
        noise = SampleBuffer(16000, rng.standard_normal(4000))
        mixed = mix_at_snr(clean, noise, snr_db)
        scaled = mixed.samples - clean.samples
        measured = 20 * np.log10(rms(clean.samples) / rms(scaled))
        assert measured == pytest.approx(snr_db, abs=0.01)


class TestSampleBuffer:
    def test_immutable(self):
        buf = SampleBuffer(8000, np.zeros(8))
        with pytest.raises(ValueError):
            buf.samples[0] = 1.0

    def test_duration(self):
        assert SampleBuffer(8000, np.zeros(4000)).duration_s == 0.5

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            SampleBuffer(8000, np.zeros((2, 2)))
