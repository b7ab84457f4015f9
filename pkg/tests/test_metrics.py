import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixitse.dsp import Waveform
from mixitse.errors import InvalidInputError
from mixitse.metrics import (
    MetricReport,
    cepstral_distance,
    evaluate_pair,
    mean_report,
    select_best,
    selection_metric,
    sisdr,
    write_csv,
    write_jsonl,
)


def signal(seed, n=4000):
    return np.random.default_rng(seed).standard_normal(n)


def orthogonal_noise(s, ratio_db, seed=100):
    """Noise orthogonal to ``s`` with energy ||s||^2 / 10^(ratio_db/10)."""
    v = np.random.default_rng(seed).standard_normal(len(s))
    v -= (v @ s) / (s @ s) * s
    v *= np.sqrt((s @ s) / 10 ** (ratio_db / 10) / (v @ v))
    return v


def test_sisdr_constructed_case():
    s = signal(0)
    assert sisdr(s, s + orthogonal_noise(s, 10.0)) == pytest.approx(10.0, abs=0.01)
    assert sisdr(s, s + orthogonal_noise(s, -3.0, seed=5)) == pytest.approx(-3.0, abs=0.01)


def test_sisdr_identity_is_capped_and_scale_free():
    s = 1e-3 * signal(1)
    assert sisdr(s, s) >= 100.0 - 1e-9
    assert sisdr(s, 2.0 * s) == pytest.approx(sisdr(s, s), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 1000))
def test_sisdr_scale_invariance(gain, seed):
    s = signal(seed, 500)
    e = s + 0.5 * signal(seed + 1, 500)
    base = sisdr(s, e)
    assert abs(sisdr(s, gain * e) - base) < 1e-6
    assert abs(sisdr(gain * s, gain * e) - base) < 1e-6


def test_sisdr_errors_and_floor():
    with pytest.raises(InvalidInputError):
        sisdr(np.zeros(10), np.ones(10))
    with pytest.raises(InvalidInputError):
        sisdr(np.ones(10), np.ones(11))
    assert sisdr(np.ones(10), np.zeros(10)) == pytest.approx(-100.0, abs=1e-6)


def test_cd_identity_and_gain():
    s = signal(2)
    assert cepstral_distance(s, s) == 0.0
    gained = cepstral_distance(s, 2.0 * s)
    # a gain of 2 shifts only c0, by ln 2; in the dB convention that is 10/ln10 * ln 2 per frame
    assert gained == pytest.approx(10.0 / np.log(10.0) * np.log(2.0), rel=1e-9)
    assert cepstral_distance(s, 2.0 * s, include_c0=False) == pytest.approx(0.0, abs=1e-9)


def test_cd_distinct_spectra_and_symmetry():
    t = np.arange(4000) / 8000
    tone = np.sin(2 * np.pi * 440 * t)
    noise = signal(3)
    d = cepstral_distance(noise, tone)
    assert d > 0
    assert cepstral_distance(tone, noise) == pytest.approx(d, rel=1e-12)


def test_cd_rejects_silence():
    with pytest.raises(InvalidInputError):
        cepstral_distance(np.zeros(1000), np.zeros(1000))
    with pytest.raises(InvalidInputError):
        cepstral_distance(np.ones(100), np.ones(100))


def test_selection_metric_examples():
    assert selection_metric(10.0, 1.0) == pytest.approx(1.0)
    assert selection_metric(5.0, 0.5, pesq=3.0) == pytest.approx(3.5)
    assert selection_metric(5.1, 0.5, 3.0) > selection_metric(5.0, 0.5, 3.0)
    report = MetricReport(10.0, 1.0)
    assert report.to_dict()["selection_score"] == pytest.approx(1.0)


def test_select_best_prefers_maximum_and_earliest():
    log = [{"step": 1, "selection_score": 0.5}, {"step": 2, "selection_score": 0.9},
           {"step": 3, "selection_score": 0.9}, {"step": 4, "selection_score": 0.1}]
    assert select_best(log)["step"] == 2
    with pytest.raises(InvalidInputError):
        select_best([])


def test_evaluate_pair_and_mean_report():
    s = Waveform(signal(4), 8000)
    e = Waveform(s.samples[:3900] + 0.1 * signal(5, 3900), 8000)
    report = evaluate_pair(s, e, pesq=lambda r, x: 2.0)
    assert report.pesq_proxy == 2.0
    assert report.selection_score == pytest.approx(2.0 + 0.2 * report.sisdr - report.cd)
    avg = mean_report([MetricReport(10.0, 1.0), MetricReport(20.0, 3.0)])
    assert (avg.sisdr, avg.cd, avg.pesq_proxy) == (15.0, 2.0, None)


def test_report_writers(tmp_path):
    rows = [MetricReport(1.0, 2.0).to_dict(), MetricReport(3.0, 4.0).to_dict()]
    write_jsonl(tmp_path / "r.jsonl", rows)
    assert [json.loads(l)["sisdr"] for l in (tmp_path / "r.jsonl").read_text().splitlines()] == [1.0, 3.0]
    write_csv(tmp_path / "r.csv", rows)
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "sisdr,cd,pesq_proxy,selection_score"
