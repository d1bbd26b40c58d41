/**
 * Histogram of the scaled winding samples with a standard-normal overlay.
 *
 * Consumes the per-replica results of the `sigma` and `clt` experiments.
 * The overlay is the fixed reference curve the sample law is compared
 * against; nothing is fitted.
 */
import { standardCaption } from "../caption";
import {
  COLORS,
  linearScale,
  niceTicks,
  renderChart,
  toTicks,
  xRange,
  yRange,
} from "../chart";
import { numericColumn, Table } from "../csv";
import { pathThrough, rect } from "../svg";

export const HISTOGRAM_HEADER = [
  "replica",
  "winding_total",
  "Y_over_sqrtN",
  "second_moment",
  "second_over_N",
  "displacement",
  "log_partition",
  "law_truncation_max",
  "config_hash",
];

interface Bin {
  start: number;
  end: number;
  count: number;
}

function buildBins(values: number[], lo: number, hi: number, nBins: number): Bin[] {
  const width = (hi - lo) / nBins;
  const bins: Bin[] = Array.from({ length: nBins }, (_, i) => ({
    start: lo + i * width,
    end: lo + (i + 1) * width,
    count: 0,
  }));
  for (const value of values) {
    const index = Math.min(Math.floor((value - lo) / width), nBins - 1);
    bins[Math.max(index, 0)].count++;
  }
  return bins;
}

function normalDensity(x: number): number {
  return Math.exp(-0.5 * x * x) / Math.sqrt(2 * Math.PI);
}

export function renderHistogram(table: Table): string {
  const values = numericColumn(table, "Y_over_sqrtN");
  const n = values.length;

  // Symmetric domain wide enough for both the samples and the overlay tails.
  const maxAbs = Math.max(...values.map(Math.abs), 3.5);
  const lo = -maxAbs;
  const hi = maxAbs;
  const nBins = Math.max(13, Math.min(41, 2 * Math.floor(Math.sqrt(n) / 2) + 1));
  const bins = buildBins(values, lo, hi, nBins);
  const binWidth = (hi - lo) / nBins;
  const densities = bins.map((bin) => bin.count / (n * binWidth));

  const yMax = Math.max(...densities, normalDensity(0)) * 1.08;
  const xScale = linearScale([lo, hi], xRange());
  const yScale = linearScale([0, yMax], yRange());

  const marks: string[] = [];
  for (let i = 0; i < bins.length; i++) {
    if (bins[i].count === 0) continue;
    const x0 = xScale.map(bins[i].start);
    const x1 = xScale.map(bins[i].end);
    const yTop = yScale.map(densities[i]);
    const yBase = yScale.map(0);
    marks.push(
      rect(x0, yTop, x1 - x0, yBase - yTop, {
        fill: COLORS.series1,
        "fill-opacity": "0.55",
        stroke: COLORS.series1,
        "stroke-width": 1,
      }),
    );
  }

  const curve: Array<[number, number]> = [];
  const steps = 160;
  for (let i = 0; i <= steps; i++) {
    const x = lo + ((hi - lo) * i) / steps;
    curve.push([xScale.map(x), yScale.map(normalDensity(x))]);
  }
  marks.push(pathThrough(curve, { stroke: COLORS.series2, "stroke-width": 2 }));

  return renderChart({
    title: "Scaled winding distribution",
    xLabel: "winding / sqrt(time horizon)",
    yLabel: "density",
    caption: standardCaption(table, `${nBins} bins`),
    xScale,
    yScale,
    xTicks: toTicks(niceTicks(lo, hi)),
    yTicks: toTicks(niceTicks(0, yMax, 5)),
    marks,
    legend: [
      { label: "sample density", color: COLORS.series1 },
      { label: "standard normal", color: COLORS.series2 },
    ],
  });
}
