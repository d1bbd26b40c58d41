/**
 * Tail profile of the winding mass: log of the mean squared mass in each
 * winding band, against the squared band offset.  A straight trend on this
 * axis is the expected Gaussian-type tail; the dashed guide line is a
 * least-squares fit to the plotted points.
 *
 * Consumes the results of the `tails` experiment.
 */
import { standardCaption } from "../caption";
import {
  COLORS,
  LegendEntry,
  linearScale,
  niceTicks,
  padded,
  renderChart,
  toTicks,
  xRange,
  yRange,
} from "../chart";
import { numericColumn, Table } from "../csv";
import { leastSquaresLine } from "../fit";
import { circle, fmt, pathThrough } from "../svg";

export const TAILS_HEADER = [
  "winding_offset",
  "mean_square",
  "std_error",
  "log_mean",
  "config_hash",
];

export function renderTails(table: Table): string {
  const offsets = numericColumn(table, "winding_offset");
  const logMeans = numericColumn(table, "log_mean");
  const xs = offsets.map((j) => j * j);

  const [xLo, xHi] = padded(Math.min(...xs), Math.max(...xs));
  const [yLo, yHi] = padded(Math.min(...logMeans), Math.max(...logMeans), 0.1);
  const xScale = linearScale([xLo, xHi], xRange());
  const yScale = linearScale([yLo, yHi], yRange());

  const marks: string[] = [];
  const legend: LegendEntry[] = [{ label: "band mass", color: COLORS.series1 }];

  if (xs.length >= 2) {
    const fit = leastSquaresLine(xs, logMeans);
    marks.push(
      pathThrough(
        [
          [xScale.map(xLo), yScale.map(fit.intercept + fit.slope * xLo)],
          [xScale.map(xHi), yScale.map(fit.intercept + fit.slope * xHi)],
        ],
        { stroke: COLORS.guide, "stroke-width": 1.5, "stroke-dasharray": "5 3" },
      ),
    );
    legend.push({
      label: `guide slope ${fmt(fit.slope)}`,
      color: COLORS.guide,
      dashed: true,
    });
  }

  for (let i = 0; i < xs.length; i++) {
    marks.push(
      circle(xScale.map(xs[i]), yScale.map(logMeans[i]), 4, { fill: COLORS.series1 }),
    );
  }

  // Squared offsets label more readably as the offsets themselves squared.
  const xTicks = xs.map((x, i) => ({ value: x, label: `${offsets[i]}²` }));

  return renderChart({
    title: "Winding tail profile",
    xLabel: "winding offset squared",
    yLabel: "log mean squared mass",
    caption: standardCaption(table),
    xScale,
    yScale,
    xTicks,
    yTicks: toTicks(niceTicks(yLo, yHi, 6)),
    marks,
    legend,
  });
}
