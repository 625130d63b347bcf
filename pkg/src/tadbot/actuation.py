"""Closed-form model of the TadBot actuation chain.

A motor crank pulls a tendon that rocks a tail lever about a pivot. The
model reduces the chain to three maps: crank angle -> tendon displacement,
tendon displacement -> lever angle, and drive frequency -> tail-tip
amplitude. It can also synthesize marker streams (two head markers plus a
tail-tip marker) like the ones a 240 fps tracking camera would produce.

Everything here is pure and side-effect free; functions are safe to call
from any number of threads.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

Point = tuple[float, float]

# Head markers sit this far apart, centered on the body midline.
MARKER_SPACING_MM = 4.2

STREAM_CSV_HEADER = "t_s,head_a_x,head_a_y,head_b_x,head_b_y,tail_x,tail_y,pivot_x,pivot_y"


@dataclass(frozen=True)
class ActuationConfig:
    """Geometric and dynamic constants of the crank-tendon-lever-tail chain.

    Defaults are calibrated so the amplitude curve plateaus at 5.0 mm and
    sits near 2.8 mm at 8 Hz.
    """

    crank_radius_mm: float = 1.0
    tendon_moment_arm_mm: float = 3.0
    tail_arm_mm: float = 8.0
    gain_max: float = 1.9102
    gain_midpoint_hz: float = 11.5
    gain_width_hz: float = 1.5
    buckling_tension_limit_n: float = 2.0

    def __post_init__(self) -> None:
        for name in ("crank_radius_mm", "tendon_moment_arm_mm", "tail_arm_mm",
                     "buckling_tension_limit_n"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.gain_max < 1.0:
            raise ValueError(f"gain_max must be >= 1, got {self.gain_max}")
        if self.gain_width_hz <= 0:
            raise ValueError(f"gain_width_hz must be > 0, got {self.gain_width_hz}")
        # keeps the peak lever angle below pi/2
        if self.crank_radius_mm >= self.tendon_moment_arm_mm:
            raise ValueError(
                "crank_radius_mm must be smaller than tendon_moment_arm_mm "
                f"({self.crank_radius_mm} >= {self.tendon_moment_arm_mm})")


@dataclass(frozen=True)
class MarkerFrame:
    """One tracked camera frame: two head markers and the tail tip, in mm."""

    t_s: float
    head_a_mm: Point
    head_b_mm: Point
    tail_mm: Point


@dataclass
class MarkerStream:
    """Ordered marker frames sampled at a fixed rate, plus the tail pivot."""

    frames: list[MarkerFrame]
    pivot_mm: Point
    sample_rate_hz: float = 240.0

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        t = np.array([f.t_s for f in self.frames])
        if len(t) >= 2:
            dt = np.diff(t)
            if np.any(dt <= 0):
                raise ValueError("frame timestamps must be strictly increasing")
            nominal = 1.0 / self.sample_rate_hz
            if np.max(np.abs(dt - nominal)) > nominal * 1e-6:
                raise ValueError("frame spacing deviates from 1/sample_rate_hz "
                                 "by more than one part in 1e6")

    @property
    def duration_s(self) -> float:
        if len(self.frames) < 2:
            return 0.0
        return self.frames[-1].t_s - self.frames[0].t_s


def tendon_displacement(config: ActuationConfig, crank_angle_rad: float) -> float:
    """Tendon travel s(theta) = r*(1 - cos theta) in mm.

    Periodic in the crank angle; ranges over [0, 2r] with s(0)=0 and
    s(pi)=2r.
    """
    return config.crank_radius_mm * (1.0 - math.cos(crank_angle_rad))


def lever_angle(config: ActuationConfig, tendon_disp_mm: float) -> float:
    """Lever rotation about the pivot for a given tendon displacement.

    Linear small-angle law phi = (s - r)/a, zero at the tensioner-centered
    rest point s = r. Displacements outside [0, 2r] are mechanically
    unreachable and rejected.
    """
    r = config.crank_radius_mm
    if not 0.0 <= tendon_disp_mm <= 2.0 * r:
        raise ValueError(
            f"tendon displacement {tendon_disp_mm} outside reachable [0, {2 * r}] mm")
    return (tendon_disp_mm - r) / config.tendon_moment_arm_mm


def dynamic_gain(config: ActuationConfig, freq_hz: float) -> float:
    """Logistic frequency gain: 1 at DC, rising to gain_max past the midpoint.

    Monotone and non-resonant; models the extra tail excursion that inertia
    adds above roughly 10 Hz without introducing a resonance peak.
    """
    if freq_hz < 0:
        raise ValueError(f"frequency must be >= 0, got {freq_hz}")
    g0, gmax = 1.0, config.gain_max
    x = (freq_hz - config.gain_midpoint_hz) / config.gain_width_hz
    return g0 + (gmax - g0) / (1.0 + math.exp(-x))


def tail_amplitude(config: ActuationConfig, freq_hz: float) -> float:
    """Peak lateral tail-tip displacement in mm at a drive frequency.

    A(f) = tail_arm * sin(r/a) * gain(f): the quasi-static lever excursion
    scaled by the dynamic gain. Monotone non-decreasing in frequency and
    bounded by tail_arm * sin(r/a) * gain_max.
    """
    quasi_static = config.tail_arm_mm * math.sin(
        config.crank_radius_mm / config.tendon_moment_arm_mm)
    return quasi_static * dynamic_gain(config, freq_hz)


def median_line(head_a: Point, head_b: Point, pivot: Point) -> tuple[Point, Point]:
    """Reference line from the head-marker bisection point to the tail pivot.

    Tail amplitude is measured as distance to this line.
    """
    if head_a == head_b:
        raise ValueError("head markers coincide; median line undefined")
    mid = ((head_a[0] + head_b[0]) / 2.0, (head_a[1] + head_b[1]) / 2.0)
    if mid == pivot:
        raise ValueError("pivot coincides with head bisection point; "
                         "median line undefined")
    return mid, pivot


def signed_distance(line: tuple[Point, Point], point: Point) -> float:
    """Perpendicular distance from a point to a line, signed by side.

    Positive to the left of the line's first->second direction.
    """
    (x0, y0), (x1, y1) = line
    dx, dy = x1 - x0, y1 - y0
    norm = math.hypot(dx, dy)
    if norm == 0:
        raise ValueError("degenerate line: endpoints coincide")
    return (dx * (point[1] - y0) - dy * (point[0] - x0)) / norm


def simulate_markers(
    config: ActuationConfig,
    freq_hz: float,
    duration_s: float,
    sample_rate_hz: float = 240.0,
    noise_std_mm: float = 0.0,
    rng: np.random.Generator | int | None = None,
) -> MarkerStream:
    """Synthesize a marker stream for a tail driven at a fixed frequency.

    The tail marker traces a lateral cosine of amplitude tail_amplitude(f)
    about the median line (cosine phase so the first sample sits exactly on
    the peak); the head markers stay put. Gaussian positional noise of the
    given standard deviation is added independently to every marker
    coordinate.

    Layout: head midpoint at the origin, markers split along y, pivot on
    the +x axis 10 mm away, tail tip a further tail_arm_mm out.
    """
    if duration_s <= 0:
        raise ValueError(f"duration_s must be > 0, got {duration_s}")
    if freq_hz < 0:
        raise ValueError(f"freq_hz must be >= 0, got {freq_hz}")
    if sample_rate_hz < 2.0 * freq_hz:
        raise ValueError(
            f"sample rate {sample_rate_hz} Hz undersamples a {freq_hz} Hz drive "
            f"(need >= {2.0 * freq_hz} Hz)")
    if noise_std_mm < 0:
        raise ValueError(f"noise_std_mm must be >= 0, got {noise_std_mm}")

    half = MARKER_SPACING_MM / 2.0
    head_a0 = np.array([0.0, +half])
    head_b0 = np.array([0.0, -half])
    pivot = (10.0, 0.0)
    tail_x = pivot[0] + config.tail_arm_mm

    amp = tail_amplitude(config, freq_hz)
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    tail_y = amp * np.cos(2.0 * math.pi * freq_hz * t)

    if noise_std_mm > 0:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        noise = gen.normal(0.0, noise_std_mm, size=(n, 3, 2))
    else:
        noise = np.zeros((n, 3, 2))

    frames = [
        MarkerFrame(
            t_s=float(t[k]),
            head_a_mm=(float(head_a0[0] + noise[k, 0, 0]), float(head_a0[1] + noise[k, 0, 1])),
            head_b_mm=(float(head_b0[0] + noise[k, 1, 0]), float(head_b0[1] + noise[k, 1, 1])),
            tail_mm=(float(tail_x + noise[k, 2, 0]), float(tail_y[k] + noise[k, 2, 1])),
        )
        for k in range(n)
    ]
    return MarkerStream(frames=frames, pivot_mm=pivot, sample_rate_hz=sample_rate_hz)


def stream_to_csv(stream: MarkerStream) -> str:
    """Serialize a marker stream to CSV (units mm and seconds)."""
    out = io.StringIO()
    out.write(STREAM_CSV_HEADER + "\n")
    px, py = stream.pivot_mm
    for f in stream.frames:
        row = (f.t_s, f.head_a_mm[0], f.head_a_mm[1], f.head_b_mm[0], f.head_b_mm[1],
               f.tail_mm[0], f.tail_mm[1], px, py)
        out.write(",".join(repr(v) for v in row) + "\n")
    return out.getvalue()


def stream_from_csv(text: str) -> MarkerStream:
    """Parse a marker stream from the CSV format written by stream_to_csv."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != STREAM_CSV_HEADER:
        raise ValueError(f"expected header {STREAM_CSV_HEADER!r}")
    frames: list[MarkerFrame] = []
    pivot: Point = (0.0, 0.0)
    for ln in lines[1:]:
        vals = [float(v) for v in ln.split(",")]
        if len(vals) != 9:
            raise ValueError(f"expected 9 columns, got {len(vals)}: {ln!r}")
        frames.append(MarkerFrame(
            t_s=vals[0], head_a_mm=(vals[1], vals[2]), head_b_mm=(vals[3], vals[4]),
            tail_mm=(vals[5], vals[6])))
        pivot = (vals[7], vals[8])
    if len(frames) < 2:
        raise ValueError("stream needs at least two frames to infer a sample rate")
    rate = 1.0 / (frames[1].t_s - frames[0].t_s)
    return MarkerStream(frames=frames, pivot_mm=pivot, sample_rate_hz=rate)
