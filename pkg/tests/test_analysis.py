"""Amplitude/frequency recovery and motion scoring."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tadbot.actuation import ActuationConfig, MarkerFrame, MarkerStream, simulate_markers, tail_amplitude
from tadbot.analysis import (
    SWEEP_CSV_HEADER,
    GrayFrame,
    InsufficientDataError,
    NoDominantFrequencyError,
    SweepError,
    estimate_amplitude,
    estimate_frequency,
    motion_score,
    sweep_characterization,
    sweep_to_csv,
)

CFG = ActuationConfig()


def _constant_stream(n=480, rate=240.0, tail_y=0.0):
    frames = [MarkerFrame(t_s=k / rate, head_a_mm=(0.0, 2.1), head_b_mm=(0.0, -2.1),
                          tail_mm=(18.0, tail_y)) for k in range(n)]
    return MarkerStream(frames=frames, pivot_mm=(10.0, 0.0), sample_rate_hz=rate)


# ---- estimate_frequency ----

def test_frequency_pure_8hz():
    t = np.arange(480) / 240.0
    f = estimate_frequency(np.sin(2 * np.pi * 8.0 * t), 240.0)
    assert f == pytest.approx(8.0, abs=0.2)


def test_frequency_pure_16hz():
    t = np.arange(480) / 240.0
    f = estimate_frequency(np.sin(2 * np.pi * 16.0 * t), 240.0)
    assert f == pytest.approx(16.0, abs=0.2)


def test_frequency_noisy_16hz_monte_carlo():
    """16 Hz + noise at half the amplitude: within 0.25 Hz in >= 99/100 runs."""
    t = np.arange(480) / 240.0
    sig = np.sin(2 * np.pi * 16.0 * t)
    hits = 0
    for seed in range(100):
        noisy = sig + np.random.default_rng(seed).normal(0.0, 0.5, sig.size)
        if abs(estimate_frequency(noisy, 240.0) - 16.0) <= 0.25:
            hits += 1
    assert hits >= 99


def test_frequency_rejects_constant_signal():
    with pytest.raises(NoDominantFrequencyError):
        estimate_frequency(np.zeros(480), 240.0)
    with pytest.raises(NoDominantFrequencyError):
        estimate_frequency(np.full(480, 3.7), 240.0)


def test_frequency_rejects_short_window():
    with pytest.raises(InsufficientDataError):
        estimate_frequency(np.sin(np.arange(240)), 240.0)


def test_frequency_off_bin_resolution():
    # non-integer frequency between bins still resolves under 0.25 Hz
    t = np.arange(480) / 240.0
    for f0 in (7.3, 12.75, 19.1):
        f = estimate_frequency(np.sin(2 * np.pi * f0 * t), 240.0)
        assert f == pytest.approx(f0, abs=0.25)


# ---- estimate_amplitude ----

def test_amplitude_noiseless_16hz():
    stream = simulate_markers(CFG, 16.0, 2.0)
    est = estimate_amplitude(stream)
    ref = tail_amplitude(CFG, 16.0)
    assert abs(est.amplitude_mm - ref) / ref <= 0.02
    assert est.freq_hz == pytest.approx(16.0, abs=0.25)
    assert est.n_samples == 480
    assert est.periodic


def test_amplitude_constant_stream_flagged():
    est = estimate_amplitude(_constant_stream())
    assert est.amplitude_mm == 0.0
    assert est.freq_hz == 0.0
    assert not est.periodic


def test_amplitude_noisy_8hz_monte_carlo():
    """Mean estimate over 100 seeds lands within 5% of the closed form."""
    ref = tail_amplitude(CFG, 8.0)
    ests = [estimate_amplitude(
        simulate_markers(CFG, 8.0, 2.0, noise_std_mm=0.2, rng=seed)).amplitude_mm
        for seed in range(100)]
    assert abs(np.mean(ests) - ref) / ref <= 0.05


def test_amplitude_rejects_short_stream():
    with pytest.raises(InsufficientDataError):
        estimate_amplitude(_constant_stream(n=120))  # 0.5 s


def test_amplitude_invariant_to_rigid_translation():
    stream = simulate_markers(CFG, 16.0, 2.0, noise_std_mm=0.1, rng=3)
    dx, dy = 123.4, -56.7
    moved = MarkerStream(
        frames=[MarkerFrame(t_s=f.t_s,
                            head_a_mm=(f.head_a_mm[0] + dx, f.head_a_mm[1] + dy),
                            head_b_mm=(f.head_b_mm[0] + dx, f.head_b_mm[1] + dy),
                            tail_mm=(f.tail_mm[0] + dx, f.tail_mm[1] + dy))
                for f in stream.frames],
        pivot_mm=(stream.pivot_mm[0] + dx, stream.pivot_mm[1] + dy),
        sample_rate_hz=stream.sample_rate_hz)
    a = estimate_amplitude(stream)
    b = estimate_amplitude(moved)
    assert b.amplitude_mm == pytest.approx(a.amplitude_mm, abs=1e-9)
    assert b.freq_hz == pytest.approx(a.freq_hz, abs=1e-9)


def test_roundtrip_all_integer_frequencies():
    """Noiseless estimator recovers the commanded point within spec bounds."""
    for f in range(5, 29):
        stream = simulate_markers(CFG, float(f), 2.0)
        est = estimate_amplitude(stream)
        ref = tail_amplitude(CFG, float(f))
        assert abs(est.freq_hz - f) <= 0.25
        assert abs(est.amplitude_mm - ref) / ref <= 0.02


# ---- motion_score ----

def _frame(pixels, w=10, h=10):
    return GrayFrame(width=w, height=h, pixels=np.asarray(pixels))


def test_motion_score_identical_frames():
    f = _frame(np.full(100, 128.0))
    assert motion_score(f, f) == 0.0


def test_motion_score_single_pixel_jump():
    a = np.zeros(100)
    b = a.copy()
    b[37] = 255.0
    assert motion_score(_frame(a), _frame(b)) == pytest.approx(0.01)


def test_motion_score_full_inversion():
    a = _frame(np.zeros(100))
    b = _frame(np.full(100, 255.0))
    assert motion_score(a, b) == pytest.approx(1.0)


def test_motion_score_dimension_mismatch():
    with pytest.raises(ValueError):
        motion_score(_frame(np.zeros(100)), GrayFrame(5, 20, np.zeros(100)))


def test_grayframe_validates_pixel_count_and_range():
    with pytest.raises(ValueError):
        GrayFrame(10, 10, np.zeros(99))
    with pytest.raises(ValueError):
        GrayFrame(2, 2, np.array([0.0, 0.0, 0.0, 300.0]))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_motion_score_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    a = _frame(rng.integers(0, 256, 100).astype(float))
    b = _frame(rng.integers(0, 256, 100).astype(float))
    s_ab = motion_score(a, b)
    s_ba = motion_score(b, a)
    assert s_ab == s_ba
    assert 0.0 <= s_ab <= 1.0
    assert motion_score(a, a) == 0.0


# ---- sweep ----

def test_sweep_noiseless_matches_closed_form():
    results = sweep_characterization(CFG, range(5, 29))
    assert [f for f, _ in results] == [float(f) for f in range(5, 29)]
    for f, est in results:
        ref = tail_amplitude(CFG, f)
        assert abs(est.amplitude_mm - ref) / ref <= 0.02


def test_sweep_single_point_near_five_mm():
    [(_, est)] = sweep_characterization(CFG, [16.0])
    assert est.amplitude_mm == pytest.approx(4.89, abs=0.1)


def test_sweep_empty_input():
    assert sweep_characterization(CFG, []) == []


def test_sweep_deterministic_for_seed():
    a = sweep_characterization(CFG, [8.0, 16.0], noise_std_mm=0.2, seed=11)
    b = sweep_characterization(CFG, [8.0, 16.0], noise_std_mm=0.2, seed=11)
    assert a == b


def test_sweep_order_independent_of_request_order():
    a = sweep_characterization(CFG, [16.0, 8.0], noise_std_mm=0.2, seed=11)
    b = sweep_characterization(CFG, [8.0, 16.0], noise_std_mm=0.2, seed=11)
    assert a == b


def test_sweep_error_carries_frequency():
    with pytest.raises(SweepError) as exc:
        sweep_characterization(CFG, [8.0, 500.0])  # 500 Hz undersampled at 240
    assert exc.value.freq_hz == 500.0


def test_sweep_csv_shape():
    results = sweep_characterization(CFG, [8.0, 16.0])
    text = sweep_to_csv(results)
    lines = text.strip().splitlines()
    assert lines[0] == SWEEP_CSV_HEADER
    assert len(lines) == 3
    freq, amp, est_freq = lines[1].split(",")
    assert float(freq) == 8.0
    assert float(amp) > 0
    assert abs(float(est_freq) - 8.0) <= 0.25
