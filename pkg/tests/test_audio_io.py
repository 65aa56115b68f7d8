import numpy as np
import pytest
from scipy.io import wavfile

from callfinder.audio_io import (
    AudioClip,
    load_recording,
    normalize_amplitude,
    resample,
)
from callfinder.errors import (
    AudioReadError,
    EmptyAudioError,
    ParameterError,
    SilentSegmentError,
    UnsupportedAudioError,
)

from conftest import make_clip, sine, write_wav_24bit, write_wav_int16


def fft_peak_hz(samples, sr):
    spectrum = np.abs(np.fft.rfft(samples))
    freqs = np.fft.rfftfreq(len(samples), 1.0 / sr)
    return freqs[np.argmax(spectrum)]


class TestLoadRecording:
    def test_stereo_silence_mixes_to_mono(self, tmp_path):
        path = tmp_path / "silence.wav"
        wavfile.write(path, 44100, np.zeros((44100, 2), dtype=np.int16))
        clip = load_recording(path)
        assert clip.sample_rate == 44100
        assert clip.samples.shape == (44100,)
        assert np.all(clip.samples == 0.0)
        assert clip.source_id == "silence"

    def test_int16_square_wave_scaling(self, tmp_path):
        path = tmp_path / "square.wav"
        raw = np.tile(np.array([32767, -32767], dtype=np.int16), 100)
        wavfile.write(path, 22050, raw)
        clip = load_recording(path)
        expected = 32767 / 32768
        assert np.allclose(np.abs(clip.samples), expected)
        assert clip.samples[0] == pytest.approx(expected)

    def test_24bit_symmetric_channels_cancel(self, tmp_path):
        path = tmp_path / "sym.wav"
        frames = np.column_stack([np.full(50, 0.5), np.full(50, -0.5)])
        write_wav_24bit(path, frames)
        clip = load_recording(path)
        assert np.allclose(clip.samples, 0.0, atol=1e-7)

    def test_float32_passthrough(self, tmp_path):
        path = tmp_path / "f32.wav"
        wavfile.write(path, 22050, np.linspace(-0.5, 0.5, 100, dtype=np.float32))
        clip = load_recording(path)
        assert clip.samples[0] == pytest.approx(-0.5)
        assert clip.samples[-1] == pytest.approx(0.5)

    def test_missing_file(self, tmp_path):
        with pytest.raises(AudioReadError) as err:
            load_recording(tmp_path / "nope.wav")
        assert "nope.wav" in str(err.value)

    def test_garbage_file(self, tmp_path):
        path = tmp_path / "garbage.wav"
        path.write_bytes(b"definitely not a wav file")
        with pytest.raises(UnsupportedAudioError) as err:
            load_recording(path)
        assert "garbage.wav" in str(err.value)

    def test_zero_length_audio(self, tmp_path):
        path = tmp_path / "empty.wav"
        wavfile.write(path, 22050, np.zeros(0, dtype=np.int16))
        with pytest.raises(EmptyAudioError) as err:
            load_recording(path)
        assert "empty.wav" in str(err.value)


class TestResample:
    def test_two_to_one_length(self):
        clip = make_clip(np.random.default_rng(0).normal(size=44100), sr=44100)
        out = resample(clip, 22050)
        assert out.sample_rate == 22050
        assert out.samples.size == 22050

    def test_sine_fft_peak_preserved(self):
        clip = make_clip(sine(440.0, 1.0, sr=44100), sr=44100)
        out = resample(clip, 22050)
        peak_in = fft_peak_hz(clip.samples, 44100)
        peak_out = fft_peak_hz(out.samples, 22050)
        assert peak_out == pytest.approx(peak_in, abs=1.5)
        assert peak_out == pytest.approx(440.0, abs=1.5)

    def test_same_rate_identity(self):
        clip = make_clip(sine(440.0, 0.5), sr=22050)
        out = resample(clip, 22050)
        assert out is clip

    def test_idempotent_on_matching_rate(self):
        clip = make_clip(np.random.default_rng(1).normal(size=22050))
        once = resample(clip, 22050)
        twice = resample(once, 22050)
        assert np.array_equal(once.samples, twice.samples)

    def test_peak_survives_for_frequencies_below_10k(self):
        for freq in (150.0, 987.0, 4321.0, 9900.0):
            clip = make_clip(sine(freq, 1.0, sr=44100), sr=44100)
            out = resample(clip, 22050)
            bin_width = 22050 / out.samples.size
            assert fft_peak_hz(out.samples, 22050) == pytest.approx(
                freq, abs=bin_width + 1e-9
            )

    def test_duration_preserved_within_one_sample(self):
        clip = make_clip(np.random.default_rng(2).normal(size=48000), sr=32000)
        out = resample(clip, 22050)
        expected = clip.duration_s
        assert abs(out.duration_s - expected) <= 1.0 / 22050 + 1e-12

    def test_bad_target_rate(self):
        clip = make_clip(sine(100.0, 0.1))
        with pytest.raises(ParameterError):
            resample(clip, 0)


class TestNormalizeAmplitude:
    def test_full_scale_sine_lands_at_rms_0p1(self):
        clip = make_clip(sine(440.0, 1.0, amp=1.0))
        out = normalize_amplitude(clip, target_db=-20.0)
        assert float(np.sqrt(np.mean(out.samples**2))) == pytest.approx(
            0.1, rel=1e-4
        )

    def test_fixed_point(self):
        clip = make_clip(sine(440.0, 1.0, amp=0.1 * np.sqrt(2.0)))
        out = normalize_amplitude(clip, target_db=-20.0)
        assert np.allclose(out.samples, clip.samples, rtol=1e-4)

    def test_dc_signal(self):
        clip = make_clip(np.full(1000, 0.5))
        out = normalize_amplitude(clip, target_db=-20.0)
        assert np.allclose(out.samples, 0.1)

    def test_silent_clip_rejected(self):
        with pytest.raises(SilentSegmentError):
            normalize_amplitude(make_clip(np.zeros(100)))

    def test_idempotent(self):
        clip = make_clip(np.random.default_rng(3).normal(0, 0.3, 5000))
        once = normalize_amplitude(clip)
        twice = normalize_amplitude(once)
        assert np.allclose(twice.samples, once.samples, rtol=1e-4)

    def test_peak_mode(self):
        clip = make_clip(sine(440.0, 0.5, amp=0.7))
        out = normalize_amplitude(clip, target_db=-20.0, mode="peak")
        assert float(np.max(np.abs(out.samples))) == pytest.approx(0.1, rel=1e-4)

    def test_unknown_mode(self):
        with pytest.raises(ParameterError):
            normalize_amplitude(make_clip(sine(440.0, 0.1)), mode="loudness")


class TestAudioClip:
    def test_empty_samples_rejected(self):
        with pytest.raises(ParameterError):
            AudioClip(np.zeros(0), 22050)

    def test_bad_rate_rejected(self):
        with pytest.raises(ParameterError):
            AudioClip(np.zeros(10), 0)

    def test_duration(self):
        assert make_clip(np.zeros(11025)).duration_s == pytest.approx(0.5)
