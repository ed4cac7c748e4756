import numpy as np
import pytest

from _oracles import matched_fraction
from ecgkey.ecg_io import Signal, select_lead, synthesize_ecg
from ecgkey.errors import EmptyAfterFilteringError, NoPeaksFoundError, TooFewPeaksError
from ecgkey.ipi import detect_r_peaks, extract_ipis, load_ipis_csv, pair_ipis, save_ipis_csv


def test_noiseless_ten_beats():
    beats = np.arange(1, 11, dtype=float)
    peaks = detect_r_peaks(select_lead(synthesize_ecg(beats), "I"))
    assert len(peaks) == 10
    assert np.all(np.abs(peaks / 1000.0 - beats) <= 0.005)


def test_noisy_detection_few_seeds():
    rng = np.random.default_rng(9)
    beats = 1.0 + np.cumsum(rng.uniform(0.6, 1.1, 30))
    for seed in range(5):
        sig = select_lead(synthesize_ecg(beats, noise_std_mv=0.05, seed=seed), "II")
        peaks = detect_r_peaks(sig)
        assert matched_fraction(beats * 1000, peaks, 10) >= 0.95


def test_amplitude_scale_invariant():
    rec = synthesize_ecg(np.arange(1, 8, dtype=float), noise_std_mv=0.02, seed=2)
    sig = select_lead(rec, "I")
    big = Signal(sig.values * 7.5, sig.fs_hz, "I", "x")
    assert np.array_equal(detect_r_peaks(sig), detect_r_peaks(big))


def test_flat_signal_has_no_peaks():
    with pytest.raises(NoPeaksFoundError):
        detect_r_peaks(Signal(np.zeros(5000), 1000.0, "I", "x"))


def test_extract_ipis_examples():
    seq = extract_ipis([1000, 2000, 3000], 1000)
    assert seq.ipis_ms.tolist() == [1000.0, 1000.0]
    assert seq.mean_ipi_s == 1.0
    assert extract_ipis([0, 750, 1500], 1000).mean_ipi_s == pytest.approx(0.750)
    with pytest.raises(TooFewPeaksError):
        extract_ipis([0, 100], 1000)


def test_extract_ipis_drops_out_of_window():
    seq = extract_ipis([0, 800, 900, 1700], 1000)
    assert seq.ipis_ms.tolist() == [800.0, 800.0]
    assert seq.n_dropped == 1
    for i, k in enumerate(seq.kept):
        assert seq.ipis_ms[i] == seq.peak_indices[k + 1] - seq.peak_indices[k]


def test_pair_ipis_examples():
    p = pair_ipis(np.array([800.0, 810.0]), np.array([805.0, 812.0, 900.0]))
    assert list(zip(p.x_ms, p.y_ms)) == [(800, 805), (810, 812)]
    assert p.truncated == 1
    with pytest.raises(EmptyAfterFilteringError):
        pair_ipis(np.array([800.0]), np.array([1400.0]), outlier_ms=100)
    same = pair_ipis(np.array([700.0, 900.0]), np.array([700.0, 900.0]))
    assert np.all(same.x_ms == same.y_ms)


def test_ipis_csv_roundtrip(tmp_path):
    v = [801.5, 799.0, 1000.25]
    save_ipis_csv(v, tmp_path / "i.csv")
    assert load_ipis_csv(tmp_path / "i.csv").tolist() == v
