import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixitse.datagen import (
    DataConfig,
    MixSpec,
    active_rms,
    batch_iter,
    build_corpus,
    load_manifest,
    make_unsupervised,
    measured_snr,
    mix,
    spectral_flatness,
    synth_noise,
    synth_rir,
    synth_speech,
    window_rir,
    write_corpus,
)
from mixitse.dsp import StftConfig, Waveform, stft
from mixitse.errors import ConfigError, InvalidInputError

SR = 8000
STFT = StftConfig()
SMALL = DataConfig(num_clean=6, num_noisy=6, num_noise=4, num_rir=2, num_dev=2, clip_seconds=0.5)


def test_speech_is_deterministic():
    np.testing.assert_array_equal(synth_speech(3, 1.0, SR).samples, synth_speech(3, 1.0, SR).samples)
    assert not np.array_equal(synth_speech(3, 1.0, SR).samples, synth_speech(4, 1.0, SR).samples)


def test_speech_rms_range_over_100_seeds():
    rms = [np.sqrt(np.mean(synth_speech(s, 0.5, SR).samples ** 2)) for s in range(100)]
    assert 0.03 <= min(rms) and max(rms) <= 0.3


def test_speech_is_less_flat_than_broadband_noise():
    for s in range(100):
        speech = spectral_flatness(synth_speech(s, 0.5, SR))
        assert speech < spectral_flatness(synth_noise(s, 0.5, SR, "white"))
        assert speech < spectral_flatness(synth_noise(s, 0.5, SR, "pink"))


@pytest.mark.parametrize("kind", ["white", "pink", "babble_like", "hum"])
def test_noise_is_deterministic(kind):
    a = synth_noise(7, 0.5, SR, kind).samples
    np.testing.assert_array_equal(a, synth_noise(7, 0.5, SR, kind).samples)
    assert len(a) == 4000


def test_white_noise_is_flat():
    assert spectral_flatness(synth_noise(0, 1.0, SR, "white")) > 0.8


@pytest.mark.parametrize("mains", [50.0, 60.0])
def test_hum_peaks_at_mains_frequency(mains):
    x = synth_noise(1, 1.0, SR, "hum", mains_hz=mains).samples
    spectrum = np.abs(np.fft.rfft(x))
    assert np.argmax(spectrum) * SR / len(x) == pytest.approx(mains, abs=1.0)


def test_unknown_noise_kind():
    with pytest.raises(InvalidInputError):
        synth_noise(0, 1.0, SR, "traffic")


def test_rir_windowing():
    rir = synth_rir(0, SR)
    w = window_rir(rir, SR)
    peak = int(np.argmax(np.abs(rir)))
    cut = peak + 400  # 50 ms at 8 kHz
    np.testing.assert_array_equal(w[:cut], rir[:cut])
    assert not np.any(w[cut:])


def _pair(seed=0, seconds=1.0):
    return synth_speech(seed, seconds, SR), synth_noise(seed + 1, seconds, SR, "pink")


@settings(max_examples=40, deadline=None)
@given(st.floats(-10.0, 30.0), st.integers(0, 10_000))
def test_snr_fidelity(snr, seed):
    speech, noise = _pair(seed, 0.5)
    ex = mix(speech, noise, MixSpec(snr, seed))
    residual = ex.input.samples - ex.target.samples
    assert abs(measured_snr(ex.target.samples, residual, SR) - snr) < 0.1


def test_zero_db_mixture():
    speech, noise = _pair(5)
    ex = mix(speech, noise, MixSpec(0.0, 5))
    assert measured_snr(ex.target.samples, ex.input.samples - ex.target.samples, SR) == pytest.approx(0.0, abs=0.1)


def test_infinite_snr_means_no_noise():
    speech, noise = _pair(6)
    ex = mix(speech, noise, MixSpec(float("inf"), 6))
    np.testing.assert_array_equal(ex.input.samples, ex.target.samples)
    np.testing.assert_array_equal(ex.target.samples, speech.samples)


def test_delta_rir_window_target_equals_reverberant_target():
    speech, noise = _pair(7)
    delta = np.zeros(100)
    delta[3] = 1.0
    a = mix(speech, noise, MixSpec(5.0, 7, rir=delta, target_policy="windowed_rir_target"))
    b = mix(speech, noise, MixSpec(5.0, 7, rir=delta, target_policy="reverberant_target"))
    np.testing.assert_array_equal(a.target.samples, b.target.samples)
    np.testing.assert_array_equal(a.input.samples, b.input.samples)


def test_target_policies_with_long_rir():
    speech, noise = _pair(8)
    rir = synth_rir(8, SR, rt60=0.5)
    rev = mix(speech, noise, MixSpec(5.0, 8, rir=rir))
    early = mix(speech, noise, MixSpec(5.0, 8, rir=rir, target_policy="windowed_rir_target"))
    np.testing.assert_array_equal(rev.input.samples, early.input.samples)
    assert not np.allclose(rev.target.samples, early.target.samples)
    # noisy_target keeps the given recording as its own target
    noisy = mix(speech, noise, MixSpec(5.0, 8, target_policy="noisy_target"))
    np.testing.assert_array_equal(noisy.target.samples, speech.samples)


def test_mix_errors():
    speech = synth_speech(0, 0.5, SR)
    with pytest.raises(InvalidInputError):
        mix(speech, synth_noise(0, 0.5, 16000), MixSpec(0.0))
    with pytest.raises(InvalidInputError):
        mix(speech, Waveform(np.zeros(4000), SR), MixSpec(0.0))
    with pytest.raises(ConfigError):
        MixSpec(0.0, target_policy="dry")


def test_unsupervised_example_properties():
    x, n = _pair(9)
    ex = make_unsupervised(x, n)
    np.testing.assert_array_equal(ex.y.samples, x.samples + n.samples)
    zero = make_unsupervised(x, Waveform(np.zeros(len(x)), SR))
    np.testing.assert_array_equal(zero.y.samples, x.samples)
    ey, ex_, en = (float(np.sum(w.samples**2)) for w in (ex.y, ex.x, ex.n))
    assert ey <= (np.sqrt(ex_) + np.sqrt(en)) ** 2
    Y, X, N = (stft(w, STFT).bins for w in (ex.y, ex.x, ex.n))
    np.testing.assert_allclose(Y, X + N, atol=1e-10)
    with pytest.raises(InvalidInputError):
        make_unsupervised(x, Waveform(np.zeros(10), SR))


def test_active_rms_ignores_silence():
    x = np.concatenate([np.zeros(8000), np.ones(8000)])
    assert active_rms(x, SR) == pytest.approx(1.0)


def test_data_config_validation():
    with pytest.raises(ConfigError):
        DataConfig(target_policy="x")
    with pytest.raises(ConfigError):
        DataConfig(source="manifest")
    with pytest.raises(ConfigError):
        DataConfig(noise_kinds=("white", "rain"))


def _collect(mode, seed=0, epochs=2, **kw):
    return list(batch_iter(SMALL, mode, 2, 4, seed, STFT, num_epochs=epochs, **kw))


def test_batch_iter_is_deterministic_and_sized():
    a, b = _collect("supervised"), _collect("supervised")
    assert len(a) == 4  # two epochs of 4 / 2 steps
    assert [(x.epoch, x.step) for x in a] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.supervised.Y, y.supervised.Y)
        np.testing.assert_array_equal(x.supervised.S, y.supervised.S)
    c = _collect("supervised", seed=1)
    assert not np.array_equal(a[0].supervised.Y, c[0].supervised.Y)


def test_semi_supervised_stream_has_both_parts():
    for batch in _collect("semi_supervised"):
        assert batch.supervised is not None and batch.unsupervised is not None
        assert batch.supervised.Y.shape == (2, 129, 30)
        m = batch.unsupervised.mixture
        np.testing.assert_allclose(m.Y, m.X + m.N, rtol=0, atol=1e-12 * np.abs(m.Y).max())
    for batch in _collect("unsupervised"):
        assert batch.supervised is None and batch.unsupervised is not None


def test_batch_iter_errors():
    with pytest.raises(ConfigError):
        next(batch_iter(SMALL, "supervised", 3, 4, 0, STFT))
    with pytest.raises(ConfigError):
        next(batch_iter(SMALL, "reinforcement", 2, 4, 0, STFT))


def test_corpus_round_trip_through_manifest(tmp_path):
    corpus = build_corpus(SMALL, 0)
    manifest = write_corpus(corpus, tmp_path, "float32")
    entries = load_manifest(manifest)
    assert sum(e["role"] == "speech" for e in entries) == 6
    assert json.loads((tmp_path / "dev_pairs.json").read_text())[0]["reference"] == "dev_clean_0000.wav"
    cfg = DataConfig(source="manifest", manifest=str(manifest), clip_seconds=0.5, num_dev=2)
    loaded = build_corpus(cfg, 0)
    assert len(loaded.noise) == 4 and len(loaded.noisy) == 6 and len(loaded.dev) == 2
    assert len(loaded.clean) == 4  # two clips held out for the dev set
    np.testing.assert_allclose(loaded.noise[0].samples, corpus.noise[0].samples, atol=1e-7)
    assert len(list(batch_iter(cfg, "semi_supervised", 2, 4, 0, STFT, num_epochs=1))) == 2


def test_manifest_validation(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text(json.dumps([{"path": "a.wav", "role": "music"}]))
    with pytest.raises(ConfigError):
        load_manifest(bad)
    bad.write_text(json.dumps({"path": "a.wav"}))
    with pytest.raises(ConfigError):
        load_manifest(bad)
