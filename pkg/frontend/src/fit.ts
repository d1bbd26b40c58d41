/**
 * Ordinary least-squares line, used only for visual guide lines.  Figures
 * never report these coefficients as results; headline statistics come from
 * the run summaries written by the simulation package.
 */

export interface FitLine {
  slope: number;
  intercept: number;
}

export function leastSquaresLine(xs: number[], ys: number[]): FitLine {
  if (xs.length !== ys.length) {
    throw new Error("x and y lengths differ");
  }
  if (xs.length < 2) {
    throw new Error("need at least 2 points for a guide line");
  }
  const n = xs.length;
  const meanX = xs.reduce((a, b) => a + b, 0) / n;
  const meanY = ys.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (xs[i] - meanX) * (xs[i] - meanX);
    sxy += (xs[i] - meanX) * (ys[i] - meanY);
  }
  if (sxx === 0) {
    throw new Error("all x values identical; no guide line");
  }
  const slope = sxy / sxx;
  return { slope, intercept: meanY - slope * meanX };
}
