/**
 * Contraction-gap decay on a log scale, with a least-squares guide line
 * through the two-start series.
 *
 * Consumes the results of the `mixing` experiment.  Values at or below zero
 * cannot be shown on a log axis and are dropped with a caption note; the
 * guide line uses only the plotted points.
 */
import { standardCaption } from "../caption";
import {
  COLORS,
  LegendEntry,
  linearScale,
  niceTicks,
  renderChart,
  Scale,
  Tick,
  toTicks,
  xRange,
  yRange,
} from "../chart";
import { numericColumn, Table } from "../csv";
import { leastSquaresLine } from "../fit";
import { circle, fmt, line, pathThrough } from "../svg";

export const GAP_HEADER = [
  "time",
  "gap_two_points",
  "gap_two_points_se",
  "gap_uniform",
  "gap_uniform_se",
  "replicas_used",
  "config_hash",
];

interface SeriesPoint {
  time: number;
  value: number;
  se: number;
}

function positivePoints(times: number[], values: number[], ses: number[]): SeriesPoint[] {
  const points: SeriesPoint[] = [];
  for (let i = 0; i < times.length; i++) {
    if (values[i] > 0) {
      points.push({ time: times[i], value: values[i], se: ses[i] });
    }
  }
  return points;
}

function drawSeries(
  points: SeriesPoint[],
  xScale: Scale,
  yScale: Scale,
  color: string,
): string[] {
  const marks: string[] = [];
  marks.push(
    pathThrough(
      points.map((p) => [xScale.map(p.time), yScale.map(Math.log10(p.value))]),
      { stroke: color, "stroke-width": 1.5 },
    ),
  );
  for (const p of points) {
    const x = xScale.map(p.time);
    if (p.se > 0 && p.se < p.value) {
      // Error bar transformed onto the log axis; the lower end is clamped
      // above zero by the se < value condition.
      const yLow = yScale.map(Math.log10(p.value - p.se));
      const yHigh = yScale.map(Math.log10(p.value + p.se));
      marks.push(line(x, yLow, x, yHigh, { stroke: color, "stroke-width": 1 }));
    }
    marks.push(circle(x, yScale.map(Math.log10(p.value)), 3.5, { fill: color }));
  }
  return marks;
}

function decadeTicks(logLo: number, logHi: number): Tick[] {
  const first = Math.ceil(logLo);
  const last = Math.floor(logHi);
  const span = Math.max(last - first, 1);
  const step = Math.max(1, Math.ceil(span / 8));
  const ticks: Tick[] = [];
  for (let d = first; d <= last; d += step) {
    ticks.push({ value: d, label: `1e${d}` });
  }
  return ticks.length > 0 ? ticks : [{ value: logLo, label: `1e${fmt(logLo)}` }];
}

export function renderGap(table: Table): string {
  const times = numericColumn(table, "time");
  const twoStart = positivePoints(
    times,
    numericColumn(table, "gap_two_points"),
    numericColumn(table, "gap_two_points_se"),
  );
  const uniform = positivePoints(
    times,
    numericColumn(table, "gap_uniform"),
    numericColumn(table, "gap_uniform_se"),
  );
  if (twoStart.length === 0 && uniform.length === 0) {
    throw new Error("no positive gap values to plot on a log axis");
  }
  const dropped = 2 * times.length - twoStart.length - uniform.length;

  const logs = [...twoStart, ...uniform].map((p) => Math.log10(p.value));
  const logLo = Math.min(...logs) - 0.4;
  const logHi = Math.max(...logs) + 0.4;
  const tLo = Math.min(...times);
  const tHi = Math.max(...times);
  const tPad = (tHi - tLo || 1) * 0.06;

  const xScale = linearScale([tLo - tPad, tHi + tPad], xRange());
  const yScale = linearScale([logLo, logHi], yRange());

  const marks: string[] = [
    ...drawSeries(twoStart, xScale, yScale, COLORS.series1),
    ...drawSeries(uniform, xScale, yScale, COLORS.series2),
  ];

  const legend: LegendEntry[] = [
    { label: "two starting points", color: COLORS.series1 },
    { label: "uniform vs point", color: COLORS.series2 },
  ];

  let note = dropped > 0 ? `${dropped} non-positive points omitted` : undefined;
  if (twoStart.length >= 2) {
    const fit = leastSquaresLine(
      twoStart.map((p) => p.time),
      twoStart.map((p) => Math.log(p.value)),
    );
    const log10e = Math.LOG10E;
    marks.push(
      pathThrough(
        [
          [xScale.map(tLo), yScale.map((fit.intercept + fit.slope * tLo) * log10e)],
          [xScale.map(tHi), yScale.map((fit.intercept + fit.slope * tHi) * log10e)],
        ],
        { stroke: COLORS.guide, "stroke-width": 1.5, "stroke-dasharray": "5 3" },
      ),
    );
    legend.push({
      label: `guide rate ${fmt(-fit.slope)} / unit`,
      color: COLORS.guide,
      dashed: true,
    });
  }

  return renderChart({
    title: "Endpoint-law contraction gap",
    xLabel: "time (units)",
    yLabel: "gap between endpoint laws",
    caption: standardCaption(table, note),
    xScale,
    yScale,
    xTicks: toTicks(niceTicks(tLo, tHi)),
    yTicks: decadeTicks(logLo, logHi),
    marks,
    legend,
  });
}
