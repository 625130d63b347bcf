/** Characterization sweep: CSV parsing and chart geometry.
 *
 * The gateway's /characterization endpoint returns
 * `freq_hz,amplitude_mm,estimated_freq_hz` rows; these helpers turn that
 * into an SVG line chart with the 15-28 Hz plateau band shaded. Geometry
 * is computed here as plain data so it can be tested without a DOM.
 */

export const SWEEP_HEADER = "freq_hz,amplitude_mm,estimated_freq_hz";

export const PLATEAU_MIN_HZ = 15;
export const PLATEAU_MAX_HZ = 28;
export const DOMAIN_MIN_HZ = 5;
export const DOMAIN_MAX_HZ = 28;

export interface SweepPoint {
  freqHz: number;
  amplitudeMm: number;
  estimatedFreqHz: number;
}

export class SweepCsvError extends Error {
  readonly row: number;

  constructor(row: number, detail: string) {
    super(`sweep CSV row ${row}: ${detail}`);
    this.row = row;
  }
}

/** Strict parse; the thrown error names the offending 1-based row. */
export function parseSweepCsv(text: string): SweepPoint[] {
  const lines = text.split(/\r?\n/).filter((ln) => ln.trim().length > 0);
  if (lines.length === 0) {
    return [];
  }
  if (lines[0].trim() !== SWEEP_HEADER) {
    throw new SweepCsvError(1, `expected header "${SWEEP_HEADER}"`);
  }
  const points: SweepPoint[] = [];
  for (let i = 1; i < lines.length; i++) {
    const cells = lines[i].split(",");
    if (cells.length !== 3) {
      throw new SweepCsvError(i + 1, `expected 3 columns, got ${cells.length}`);
    }
    const [freqHz, amplitudeMm, estimatedFreqHz] = cells.map(Number);
    if ([freqHz, amplitudeMm, estimatedFreqHz].some((v) => !Number.isFinite(v))) {
      throw new SweepCsvError(i + 1, `non-numeric value in "${lines[i]}"`);
    }
    points.push({ freqHz, amplitudeMm, estimatedFreqHz });
  }
  return points;
}

export interface ChartGeometry {
  width: number;
  height: number;
  /** SVG polyline points "x,y x,y ..." for the amplitude curve. */
  path: string;
  /** Circle centers for each sweep point. */
  markers: { x: number; y: number; freqHz: number; amplitudeMm: number }[];
  /** Shaded plateau band rectangle. */
  band: { x: number; width: number };
  /** Axis ticks with pixel positions. */
  xTicks: { x: number; label: string }[];
  yTicks: { y: number; label: string }[];
}

const MARGIN = { left: 42, right: 12, top: 12, bottom: 28 };

/** Lay the sweep out in pixel space (5-28 Hz domain, zero-based y axis). */
export function chartGeometry(
  points: SweepPoint[],
  width = 560,
  height = 260,
): ChartGeometry {
  const innerW = width - MARGIN.left - MARGIN.right;
  const innerH = height - MARGIN.top - MARGIN.bottom;
  const fMin = Math.min(DOMAIN_MIN_HZ, ...points.map((p) => p.freqHz));
  const fMax = Math.max(DOMAIN_MAX_HZ, ...points.map((p) => p.freqHz));
  const aMax = Math.max(1, ...points.map((p) => p.amplitudeMm)) * 1.1;

  const px = (f: number) => MARGIN.left + ((f - fMin) / (fMax - fMin)) * innerW;
  const py = (a: number) => MARGIN.top + innerH - (a / aMax) * innerH;

  const ordered = [...points].sort((a, b) => a.freqHz - b.freqHz);
  const markers = ordered.map((p) => ({
    x: px(p.freqHz),
    y: py(p.amplitudeMm),
    freqHz: p.freqHz,
    amplitudeMm: p.amplitudeMm,
  }));
  const bandX0 = px(Math.max(PLATEAU_MIN_HZ, fMin));
  const bandX1 = px(Math.min(PLATEAU_MAX_HZ, fMax));

  const xTicks = [];
  for (let f = Math.ceil(fMin / 5) * 5; f <= fMax; f += 5) {
    xTicks.push({ x: px(f), label: `${f}` });
  }
  const yStep = aMax > 4 ? 1 : 0.5;
  const yTicks = [];
  for (let a = 0; a <= aMax; a += yStep) {
    yTicks.push({ y: py(a), label: a.toFixed(yStep < 1 ? 1 : 0) });
  }

  return {
    width,
    height,
    path: markers.map((m) => `${m.x.toFixed(1)},${m.y.toFixed(1)}`).join(" "),
    markers,
    band: { x: bandX0, width: Math.max(0, bandX1 - bandX0) },
    xTicks,
    yTicks,
  };
}
