/**
 * Effective diffusivity across cylinder circumferences, with a square-root
 * guide curve anchored at the smallest circumference.
 *
 * Consumes the results of the `sweep-L` experiment.  Both estimation routes
 * are shown: the second-moment identity and the sampled windings.
 */
import { standardCaption } from "../caption";
import {
  COLORS,
  linearScale,
  niceTicks,
  padded,
  renderChart,
  Scale,
  toTicks,
  xRange,
  yRange,
} from "../chart";
import { numericColumn, Table } from "../csv";
import { circle, line, pathThrough } from "../svg";

export const SWEEP_HEADER = [
  "circumference",
  "sigma",
  "sigma_std_error",
  "sigma_sampled",
  "sigma_sampled_std_error",
  "replicas_used",
  "n_units",
  "config_hash",
];

function drawErrorSeries(
  xs: number[],
  values: number[],
  errors: number[],
  xScale: Scale,
  yScale: Scale,
  color: string,
  offset: number,
): string[] {
  const marks: string[] = [];
  marks.push(
    pathThrough(
      xs.map((x, i) => [xScale.map(x) + offset, yScale.map(values[i])]),
      { stroke: color, "stroke-width": 1.5 },
    ),
  );
  for (let i = 0; i < xs.length; i++) {
    const x = xScale.map(xs[i]) + offset;
    if (errors[i] > 0) {
      marks.push(
        line(x, yScale.map(values[i] - 2 * errors[i]), x, yScale.map(values[i] + 2 * errors[i]), {
          stroke: color,
          "stroke-width": 1,
        }),
      );
    }
    marks.push(circle(x, yScale.map(values[i]), 3.5, { fill: color }));
  }
  return marks;
}

export function renderSweep(table: Table): string {
  const circumferences = numericColumn(table, "circumference");
  const sigma = numericColumn(table, "sigma");
  const sigmaSe = numericColumn(table, "sigma_std_error");
  const sampled = numericColumn(table, "sigma_sampled");
  const sampledSe = numericColumn(table, "sigma_sampled_std_error");

  const all = [
    ...sigma.map((v, i) => v - 2 * sigmaSe[i]),
    ...sigma.map((v, i) => v + 2 * sigmaSe[i]),
    ...sampled.map((v, i) => v - 2 * sampledSe[i]),
    ...sampled.map((v, i) => v + 2 * sampledSe[i]),
  ];
  const [xLo, xHi] = padded(Math.min(...circumferences), Math.max(...circumferences));
  const [yLo, yHi] = padded(Math.min(...all, 0), Math.max(...all), 0.08);
  const xScale = linearScale([xLo, xHi], xRange());
  const yScale = linearScale([yLo, yHi], yRange());

  const marks: string[] = [];

  // Square-root guide through the smallest-circumference point.
  let anchorIndex = 0;
  for (let i = 1; i < circumferences.length; i++) {
    if (circumferences[i] < circumferences[anchorIndex]) anchorIndex = i;
  }
  const anchor = sigma[anchorIndex] / Math.sqrt(circumferences[anchorIndex]);
  const guide: Array<[number, number]> = [];
  const steps = 120;
  for (let i = 0; i <= steps; i++) {
    const L = Math.max(xLo, 1e-6) + ((xHi - Math.max(xLo, 1e-6)) * i) / steps;
    guide.push([xScale.map(L), yScale.map(anchor * Math.sqrt(L))]);
  }
  marks.push(
    pathThrough(guide, {
      stroke: COLORS.guide,
      "stroke-width": 1.5,
      "stroke-dasharray": "5 3",
    }),
  );

  marks.push(
    ...drawErrorSeries(circumferences, sigma, sigmaSe, xScale, yScale, COLORS.series1, -3),
    ...drawErrorSeries(circumferences, sampled, sampledSe, xScale, yScale, COLORS.series2, 3),
  );

  const uniqueCircumferences = [...new Set(circumferences)];
  const xTicks = uniqueCircumferences.map((L) => ({ value: L, label: String(L) }));

  return renderChart({
    title: "Diffusivity across circumferences",
    xLabel: "circumference",
    yLabel: "effective diffusivity",
    caption: standardCaption(table, "bars: ±2 std_error; guide anchored at the smallest circumference"),
    xScale,
    yScale,
    xTicks,
    yTicks: toTicks(niceTicks(yLo, yHi, 6)),
    marks,
    legend: [
      { label: "second-moment route", color: COLORS.series1 },
      { label: "sampled windings", color: COLORS.series2 },
      { label: "sqrt(circumference) guide", color: COLORS.guide, dashed: true },
    ],
  });
}
