/**
 * Covariance of stationary winding increments against the lag between them.
 *
 * Consumes the results of the `sigma-stationary` experiment.  Bars show
 * plus/minus two standard errors around each estimate; lags past the first
 * few should be statistically indistinguishable from zero.
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
import { circle, line } from "../svg";

export const COVARIANCE_HEADER = ["lag", "covariance", "std_error", "config_hash"];

export function renderCovariance(table: Table): string {
  const lags = numericColumn(table, "lag");
  const covariances = numericColumn(table, "covariance");
  const stdErrors = numericColumn(table, "std_error");

  const lo = Math.min(...covariances.map((c, i) => c - 2 * stdErrors[i]), 0);
  const hi = Math.max(...covariances.map((c, i) => c + 2 * stdErrors[i]), 0);
  const pad = (hi - lo || 1) * 0.08;

  const xScale = linearScale([Math.min(...lags) - 0.5, Math.max(...lags) + 0.5], xRange());
  const yScale = linearScale([lo - pad, hi + pad], yRange());

  const marks: string[] = [];
  const yZero = yScale.map(0);
  marks.push(
    line(xScale.range[0], yZero, xScale.range[1], yZero, {
      stroke: COLORS.guide,
      "stroke-width": 1,
      "stroke-dasharray": "4 3",
    }),
  );
  for (let i = 0; i < lags.length; i++) {
    const x = xScale.map(lags[i]);
    marks.push(
      line(x, yZero, x, yScale.map(covariances[i]), {
        stroke: COLORS.series1,
        "stroke-width": 1,
      }),
    );
    if (stdErrors[i] > 0) {
      marks.push(
        line(
          x,
          yScale.map(covariances[i] - 2 * stdErrors[i]),
          x,
          yScale.map(covariances[i] + 2 * stdErrors[i]),
          { stroke: COLORS.series2, "stroke-width": 2 },
        ),
      );
    }
    marks.push(circle(x, yScale.map(covariances[i]), 3.5, { fill: COLORS.series1 }));
  }

  const integerLags = lags.filter((lag) => Number.isInteger(lag));
  const step = Math.max(1, Math.ceil(integerLags.length / 13));
  const xTicks = integerLags
    .filter((_, i) => i % step === 0)
    .map((lag) => ({ value: lag, label: String(lag) }));

  return renderChart({
    title: "Stationary increment covariance",
    xLabel: "lag (units)",
    yLabel: "covariance",
    caption: standardCaption(table, "bars: ±2 std_error"),
    xScale,
    yScale,
    xTicks,
    yTicks: toTicks(niceTicks(lo - pad, hi + pad, 6)),
    marks,
    legend: [
      { label: "covariance at lag", color: COLORS.series1 },
      { label: "±2 standard errors", color: COLORS.series2 },
    ],
  });
}
