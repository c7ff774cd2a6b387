/** RSSI trend verdict for the handheld walk, mirroring the backend's
 * analysis: sign of the least-squares slope of RSSI against sample index,
 * with a dead band for "flat". */

export type Trend = "increasing" | "decreasing" | "flat";

export const DEAD_BAND_DB_PER_SAMPLE = 0.5;

export function rssiTrend(values: number[], deadBand = DEAD_BAND_DB_PER_SAMPLE): Trend {
  const n = values.length;
  if (n < 3) throw new RangeError(`need at least 3 samples, got ${n}`);
  const meanI = (n - 1) / 2;
  const meanY = values.reduce((a, b) => a + b, 0) / n;
  let num = 0;
  let den = 0;
  for (let i = 0; i < n; i++) {
    num += (i - meanI) * (values[i] - meanY);
    den += (i - meanI) ** 2;
  }
  const slope = num / den;
  if (slope > deadBand) return "increasing";
  if (slope < -deadBand) return "decreasing";
  return "flat";
}
