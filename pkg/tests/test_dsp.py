import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixitse.audio_io import read_wav, write_wav
from mixitse.dsp import (
    ComplexSpectrogram,
    StftConfig,
    Waveform,
    apply_mask,
    compress,
    compress_array,
    istft,
    stft,
)
from mixitse.errors import ConfigError, InvalidInputError

CFG = StftConfig()
SR = 8000


def dft_oracle(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """STFT by explicit DFT sums, frame by frame."""
    L, H = cfg.frame_length, cfg.hop_length
    win = np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * np.arange(L) / L))
    frames = (len(x) - L) // H + 1
    k = np.arange(L // 2 + 1)[:, None]
    n = np.arange(L)[None, :]
    basis = np.exp(-2j * np.pi * k * n / L)
    return np.stack([basis @ (x[i * H : i * H + L] * win) for i in range(frames)], axis=1)


def test_stft_matches_dft_summation():
    x = np.random.default_rng(0).standard_normal(1000)
    spec = stft(Waveform(x, SR), CFG)
    np.testing.assert_allclose(spec.bins, dft_oracle(x, CFG), atol=1e-10)


def test_frame_count():
    for n in (256, 257, 383, 384, 1000):
        assert stft(Waveform(np.zeros(n), SR), CFG).num_frames == (n - 256) // 128 + 1


def test_zero_waveform_gives_zero_spectrogram():
    assert not np.any(stft(Waveform(np.zeros(777), SR), CFG).bins)


def test_sinusoid_peaks_at_its_bin():
    f = 40 * SR / CFG.frame_length  # exact bin center, bin 40
    t = np.arange(2048) / SR
    spec = stft(Waveform(np.sin(2 * np.pi * f * t), SR), CFG)
    peaks = np.argmax(np.abs(spec.bins), axis=0)
    assert np.all(peaks == round(f * CFG.frame_length / SR))
    oracle = dft_oracle(np.sin(2 * np.pi * f * t), CFG)
    assert np.all(np.argmax(np.abs(oracle), axis=0) == peaks)


def test_short_waveform_rejected():
    with pytest.raises(InvalidInputError):
        stft(Waveform(np.zeros(100), SR), CFG)


@pytest.mark.parametrize("cfg", [StftConfig(), StftConfig(62, 31), StftConfig(512, 256), StftConfig(256, 64)])
def test_round_trip_interior(cfg):
    x = np.random.default_rng(1).standard_normal(SR)
    spec = stft(Waveform(x, SR), cfg)
    y = istft(spec).samples
    inner = cfg.interior(spec.num_frames)
    err = np.abs(y[inner] - x[inner]).max()
    assert err < 1e-6 * np.abs(x).max()
    assert np.linalg.norm(y[inner] - x[inner]) / np.linalg.norm(x[inner]) < 1e-6


def test_istft_of_zero_is_zero():
    spec = ComplexSpectrogram(np.zeros((129, 5)), SR, CFG)
    out = istft(spec)
    assert len(out) == 4 * 128 + 256
    assert not np.any(out.samples)


def test_single_frame_inverse_is_windowed_idft():
    rng = np.random.default_rng(2)
    X = rng.standard_normal(129) + 1j * rng.standard_normal(129)
    X[0] = X[0].real
    X[-1] = X[-1].real
    out = istft(ComplexSpectrogram(X[:, None], SR, CFG)).samples
    L = 256
    n = np.arange(L)
    full = np.concatenate([X, np.conj(X[-2:0:-1])])
    idft = np.real(np.exp(2j * np.pi * np.outer(n, np.arange(L)) / L) @ full) / L
    win = np.sqrt(0.5 - 0.5 * np.cos(2 * np.pi * n / L))
    np.testing.assert_allclose(out, idft * win / CFG.cola_gain(), atol=1e-12)


def test_non_cola_config_rejected_by_istft():
    cfg = StftConfig(256, 100)
    spec = stft(Waveform(np.ones(1000), SR), cfg)
    with pytest.raises(ConfigError):
        istft(spec)


def test_config_validation():
    with pytest.raises(ConfigError):
        StftConfig(128, 256)
    with pytest.raises(ConfigError):
        StftConfig(256, 128, "hamming")
    assert StftConfig.for_rate(16000) == StftConfig(512, 256)


def test_waveform_validation():
    with pytest.raises(InvalidInputError):
        Waveform(np.array([0.0, np.nan]), SR)
    with pytest.raises(InvalidInputError):
        Waveform(np.zeros(4), 0)
    with pytest.raises(InvalidInputError):
        ComplexSpectrogram(np.zeros((100, 3)), SR, CFG)
    with pytest.raises(InvalidInputError):
        ComplexSpectrogram(np.full((129, 3), np.inf), SR, CFG)


def test_compress_examples():
    np.testing.assert_allclose(compress_array(np.array([0.0, 1.0, 4.0]), 0.5), [0.0, 1.0, 2.0], atol=1e-12)
    assert compress_array(np.array([1.0 + 0j]), 0.3)[0] == pytest.approx(1.0, abs=1e-12)
    spec = ComplexSpectrogram(np.full((129, 2), 4.0 + 0j), SR, CFG)
    np.testing.assert_allclose(compress(spec, 0.5).bins, 2.0, atol=1e-12)


def test_compress_rejects_bad_exponent():
    with pytest.raises(InvalidInputError):
        compress_array(np.ones(3), 0.0)
    with pytest.raises(InvalidInputError):
        compress_array(np.ones(3), 0.3, eps=0.0)


magnitudes = st.floats(1e-4, 1e4)
phases = st.floats(-np.pi, np.pi)


@settings(max_examples=200, deadline=None)
@given(magnitudes, phases, st.floats(0.05, 1.0))
def test_compress_preserves_phase_and_powers_magnitude(m, phi, c):
    z = m * np.exp(1j * phi)
    out = compress_array(np.array([z]), c)[0]
    assert abs(np.angle(out * np.conj(z))) < 1e-9
    assert abs(out) == pytest.approx(m**c, rel=1e-9)


@settings(max_examples=200, deadline=None)
@given(magnitudes, magnitudes, phases, phases)
def test_compress_is_monotone_in_magnitude(a, b, pa, pb):
    if a == b:
        return
    lo, hi = sorted((a, b))
    za, zb = lo * np.exp(1j * pa), hi * np.exp(1j * pb)
    out = np.abs(compress_array(np.array([za, zb])))
    assert out[0] < out[1]


def test_apply_mask_examples():
    rng = np.random.default_rng(3)
    Y = ComplexSpectrogram(rng.standard_normal((129, 4)) + 1j * rng.standard_normal((129, 4)), SR, CFG)
    np.testing.assert_array_equal(apply_mask(Y, np.ones((129, 4))).bins, Y.bins)
    assert not np.any(apply_mask(Y, np.zeros((129, 4))).bins)
    rotated = apply_mask(Y, np.full((129, 4), 1j)).bins
    np.testing.assert_allclose(np.abs(rotated), np.abs(Y.bins), rtol=1e-15)
    np.testing.assert_allclose(rotated, 1j * Y.bins)
    with pytest.raises(InvalidInputError):
        apply_mask(Y, np.ones((129, 5)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_apply_mask_is_bilinear(seed):
    rng = np.random.default_rng(seed)
    c = lambda: rng.standard_normal((129, 3)) + 1j * rng.standard_normal((129, 3))
    Y = ComplexSpectrogram(c(), SR, CFG)
    g1, g2 = c(), c()
    lhs = apply_mask(Y, g1 + g2).bins
    rhs = apply_mask(Y, g1).bins + apply_mask(Y, g2).bins
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(lhs).max())


def test_wav_round_trip(tmp_path):
    x = 0.5 * np.sin(np.linspace(0, 50, 800))
    w = Waveform(x, SR)
    write_wav(tmp_path / "a.wav", w, "float32")
    back = read_wav(tmp_path / "a.wav", SR)
    np.testing.assert_allclose(back.samples, x, atol=1e-7)
    write_wav(tmp_path / "b.wav", w, "pcm16")
    back = read_wav(tmp_path / "b.wav")
    np.testing.assert_allclose(back.samples, x, atol=1.0 / 32768)
    with pytest.raises(ConfigError):
        read_wav(tmp_path / "b.wav", 16000)
    with pytest.raises(ConfigError):
        write_wav(tmp_path / "c.wav", w, "mp3")
