"""Recover amplitude and frequency from marker streams, and score motion.

The amplitude path mirrors the bench characterization: project the tail
marker onto the median line (head bisection point to pivot), take the
signed perpendicular distance per frame, and reduce the series to a robust
peak estimate. Frequency comes from the discrete Fourier spectrum of the
same series. A small frame-differencing scorer feeds the motion-detection
loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actuation import ActuationConfig, MarkerStream, median_line, signed_distance, simulate_markers

SWEEP_CSV_HEADER = "freq_hz,amplitude_mm,estimated_freq_hz"

# Robust peak statistic: high enough to track the true peak, low enough to
# shrug off isolated noise spikes.
PEAK_PERCENTILE = 95.0


class InsufficientDataError(ValueError):
    """Stream or series too short for a meaningful estimate."""


class NoDominantFrequencyError(ValueError):
    """Signal has no non-DC spectral peak (all-zero or constant input)."""


class SweepError(RuntimeError):
    """A per-frequency failure inside a characterization sweep."""

    def __init__(self, freq_hz: float, cause: Exception):
        super().__init__(f"sweep failed at {freq_hz} Hz: {cause}")
        self.freq_hz = freq_hz


@dataclass(frozen=True)
class AmplitudeEstimate:
    amplitude_mm: float
    freq_hz: float
    window_s: float
    n_samples: int
    periodic: bool = True


@dataclass
class GrayFrame:
    """Row-major 8-bit grayscale frame; intensities in [0, 255]."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        self.pixels = np.asarray(self.pixels, dtype=float).reshape(-1)
        if self.pixels.size != self.width * self.height:
            raise ValueError(
                f"expected {self.width * self.height} pixels, got {self.pixels.size}")
        if self.pixels.size and (self.pixels.min() < 0 or self.pixels.max() > 255):
            raise ValueError("pixel intensities must lie in [0, 255]")


def lateral_offsets(stream: MarkerStream) -> np.ndarray:
    """Signed tail distance to the stream's median line, one value per frame.

    The line is drawn once, from the time-averaged head-marker bisection
    point to the pivot, the way the bench procedure draws it on a static
    head; averaging keeps head-marker noise out of the reference.
    """
    heads_a = np.array([f.head_a_mm for f in stream.frames])
    heads_b = np.array([f.head_b_mm for f in stream.frames])
    line = median_line(tuple(heads_a.mean(axis=0)), tuple(heads_b.mean(axis=0)),
                       stream.pivot_mm)
    out = np.empty(len(stream.frames))
    for i, f in enumerate(stream.frames):
        out[i] = signed_distance(line, f.tail_mm)
    return out


def estimate_frequency(series, sample_rate_hz: float) -> float:
    """Dominant frequency of a sampled scalar signal, in Hz.

    Takes the largest non-DC magnitude in the Hann-windowed discrete Fourier
    spectrum and refines it by quadratic interpolation over the three bins
    around the peak. With a 2 s window at 240 samples/s this resolves well
    under 0.25 Hz.
    """
    x = np.asarray(series, dtype=float)
    if sample_rate_hz <= 0:
        raise ValueError(f"sample_rate_hz must be > 0, got {sample_rate_hz}")
    window_s = len(x) / sample_rate_hz
    if window_s < 2.0:
        raise InsufficientDataError(
            f"need >= 2 s of data, got {window_s:.3f} s ({len(x)} samples)")
    x = x - x.mean()
    if not np.any(np.abs(x) > 1e-12):
        raise NoDominantFrequencyError("signal is constant; no dominant frequency")

    mag = np.abs(np.fft.rfft(x * np.hanning(len(x))))
    mag[0] = 0.0
    k = int(np.argmax(mag))
    if mag[k] == 0.0:
        raise NoDominantFrequencyError("empty spectrum; no dominant frequency")

    # three-point parabolic refinement, clamped to +/- half a bin
    delta = 0.0
    if 1 <= k < len(mag) - 1:
        alpha, beta, gamma = mag[k - 1], mag[k], mag[k + 1]
        denom = alpha - 2.0 * beta + gamma
        if denom != 0.0:
            delta = 0.5 * (alpha - gamma) / denom
            delta = max(-0.5, min(0.5, delta))
    return float((k + delta) * sample_rate_hz / len(x))


def estimate_amplitude(stream: MarkerStream) -> AmplitudeEstimate:
    """Robust tail amplitude and dominant frequency of a marker stream.

    Amplitude is the 95th percentile of absolute tail distance to the
    median line. A constant (motionless) stream yields amplitude 0 with
    the periodic flag cleared rather than an error.
    """
    n = len(stream.frames)
    window_s = n / stream.sample_rate_hz
    if n < 4 or window_s < 1.0:
        raise InsufficientDataError(
            f"need >= 1 s and >= 4 frames, got {window_s:.3f} s ({n} frames)")
    offsets = lateral_offsets(stream)
    amplitude = float(np.percentile(np.abs(offsets), PEAK_PERCENTILE))
    try:
        freq = estimate_frequency(offsets, stream.sample_rate_hz)
    except NoDominantFrequencyError:
        return AmplitudeEstimate(amplitude_mm=0.0, freq_hz=0.0, window_s=window_s,
                                 n_samples=n, periodic=False)
    if freq * window_s < 2.0:
        raise InsufficientDataError(
            f"window {window_s:.2f} s holds fewer than two periods at {freq:.2f} Hz")
    return AmplitudeEstimate(amplitude_mm=amplitude, freq_hz=freq,
                             window_s=window_s, n_samples=n)


def motion_score(prev: GrayFrame, curr: GrayFrame) -> float:
    """Mean absolute pixel difference, normalized to [0, 1].

    0 for identical frames, 1 for a full-scale inversion; symmetric in its
    arguments.
    """
    if (prev.width, prev.height) != (curr.width, curr.height):
        raise ValueError(
            f"frame dimensions differ: {prev.width}x{prev.height} vs "
            f"{curr.width}x{curr.height}")
    if prev.pixels.size == 0:
        return 0.0
    return float(np.mean(np.abs(prev.pixels - curr.pixels)) / 255.0)


def sweep_characterization(
    config: ActuationConfig,
    freqs_hz,
    duration_s: float = 2.0,
    noise_std_mm: float = 0.0,
    sample_rate_hz: float = 240.0,
    seed: int = 0,
) -> list[tuple[float, AmplitudeEstimate]]:
    """Amplitude estimates over a set of drive frequencies.

    Synthesizes one marker stream per frequency and runs the estimator on
    it. Output is sorted by frequency and fully determined by the seed;
    each frequency gets an independent noise substream, so results do not
    depend on evaluation order.
    """
    freqs = sorted(float(f) for f in freqs_hz)
    child_seeds = np.random.default_rng(seed).integers(0, 2**63, size=len(freqs))
    results: list[tuple[float, AmplitudeEstimate]] = []
    for f, s in zip(freqs, child_seeds):
        try:
            stream = simulate_markers(config, f, duration_s,
                                      sample_rate_hz=sample_rate_hz,
                                      noise_std_mm=noise_std_mm,
                                      rng=int(s))
            results.append((f, estimate_amplitude(stream)))
        except Exception as exc:
            raise SweepError(f, exc) from exc
    return results


def sweep_to_csv(results: list[tuple[float, AmplitudeEstimate]]) -> str:
    """Serialize sweep results to CSV for plotting."""
    lines = [SWEEP_CSV_HEADER]
    for f, est in results:
        lines.append(f"{f!r},{est.amplitude_mm!r},{est.freq_hz!r}")
    return "\n".join(lines) + "\n"
