#!/usr/bin/env python3
"""Sweep the amplitude-frequency curve and print it next to the closed form.

Writes curve.csv in the working directory and prints a quick table with
the analytic model for comparison. Tweak the config constants below to
explore other linkage geometries.
"""

import sys
from pathlib import Path

from tadbot.actuation import ActuationConfig, tail_amplitude
from tadbot.analysis import sweep_characterization, sweep_to_csv


def main() -> int:
    config = ActuationConfig()
    freqs = range(5, 29)
    results = sweep_characterization(config, freqs, noise_std_mm=0.2, seed=7)

    print(f"{'f [Hz]':>7} {'estimate [mm]':>14} {'model [mm]':>11} {'est f [Hz]':>11}")
    for f, est in results:
        print(f"{f:7.1f} {est.amplitude_mm:14.3f} "
              f"{tail_amplitude(config, f):11.3f} {est.freq_hz:11.2f}")

    plateau = [est.amplitude_mm for f, est in results if 15.0 <= f <= 28.0]
    print(f"\nplateau 15-28 Hz: {min(plateau):.2f}..{max(plateau):.2f} mm "
          f"(flatness ratio {max(plateau) / min(plateau):.3f})")

    out = Path("curve.csv")
    out.write_text(sweep_to_csv(results))
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
