/**
 * Shared chart scaffolding: scales, tick placement, and the axes/title/
 * caption frame every figure is drawn into.
 */
import { el, fmt, line, px, rect, text } from "./svg";

export interface Scale {
  map: (value: number) => number;
  domain: [number, number];
  range: [number, number];
}

/** Affine map from data domain to pixel range. */
export function linearScale(
  domain: [number, number],
  range: [number, number],
): Scale {
  let [d0, d1] = domain;
  if (d0 === d1) {
    // Degenerate domain: pad so the single value sits mid-range.
    d0 -= 1;
    d1 += 1;
  }
  const [r0, r1] = range;
  const slope = (r1 - r0) / (d1 - d0);
  return {
    map: (value: number) => r0 + (value - d0) * slope,
    domain: [d0, d1],
    range: [r0, r1],
  };
}

/** Round tick positions covering [lo, hi] with a 1/2/5 step. */
export function niceTicks(lo: number, hi: number, target = 6): number[] {
  if (!(hi > lo)) return [lo];
  const rawStep = (hi - lo) / target;
  const magnitude = Math.pow(10, Math.floor(Math.log10(rawStep)));
  const normalized = rawStep / magnitude;
  let step: number;
  if (normalized < 1.5) step = magnitude;
  else if (normalized < 3.5) step = 2 * magnitude;
  else if (normalized < 7.5) step = 5 * magnitude;
  else step = 10 * magnitude;
  const ticks: number[] = [];
  const start = Math.ceil(lo / step - 1e-9) * step;
  for (let v = start; v <= hi + step * 1e-9; v += step) {
    // Snap near-zero accumulation error so labels print cleanly.
    ticks.push(Math.abs(v) < step * 1e-9 ? 0 : Number(v.toPrecision(12)));
  }
  return ticks;
}

/** Pad a data extent so marks do not sit on the frame. */
export function padded(lo: number, hi: number, fraction = 0.06): [number, number] {
  if (lo === hi) return [lo - 1, hi + 1];
  const pad = (hi - lo) * fraction;
  return [lo - pad, hi + pad];
}

export interface Tick {
  value: number;
  label: string;
}

export function toTicks(values: number[], format: (v: number) => string = fmt): Tick[] {
  return values.map((value) => ({ value, label: format(value) }));
}

export interface LegendEntry {
  label: string;
  color: string;
  dashed?: boolean;
}

export interface ChartSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  caption: string;
  xScale: Scale;
  yScale: Scale;
  xTicks: Tick[];
  yTicks: Tick[];
  /** Mark strings already in pixel coordinates; clipped to the plot area. */
  marks: string[];
  legend?: LegendEntry[];
}

export const WIDTH = 720;
export const HEIGHT = 480;
export const MARGIN = { top: 48, right: 24, bottom: 72, left: 76 };

export const PLOT = {
  x0: MARGIN.left,
  x1: WIDTH - MARGIN.right,
  y0: MARGIN.top,
  y1: HEIGHT - MARGIN.bottom,
};

export const COLORS = {
  frame: "#333333",
  grid: "#dddddd",
  label: "#222222",
  muted: "#555555",
  series1: "#3b6ea5",
  series2: "#c2622a",
  guide: "#777777",
};

const FONT = "Helvetica, Arial, sans-serif";

/** Horizontal pixel scale spanning the plot area. */
export function xRange(): [number, number] {
  return [PLOT.x0, PLOT.x1];
}

/** Vertical pixel scale spanning the plot area (origin at the bottom). */
export function yRange(): [number, number] {
  return [PLOT.y1, PLOT.y0];
}

/** Assemble the complete SVG document around the figure's marks. */
export function renderChart(spec: ChartSpec): string {
  const parts: string[] = [];
  parts.push(rect(0, 0, WIDTH, HEIGHT, { fill: "#ffffff" }));

  // Grid.
  for (const tick of spec.xTicks) {
    const x = spec.xScale.map(tick.value);
    parts.push(line(x, PLOT.y0, x, PLOT.y1, { stroke: COLORS.grid, "stroke-width": 1 }));
  }
  for (const tick of spec.yTicks) {
    const y = spec.yScale.map(tick.value);
    parts.push(line(PLOT.x0, y, PLOT.x1, y, { stroke: COLORS.grid, "stroke-width": 1 }));
  }

  // Marks, clipped to the plot area.
  parts.push(
    el("clipPath", { id: "plot-area" }, [
      rect(PLOT.x0, PLOT.y0, PLOT.x1 - PLOT.x0, PLOT.y1 - PLOT.y0, {}),
    ]),
  );
  parts.push(el("g", { "clip-path": "url(#plot-area)" }, spec.marks));

  // Frame.
  parts.push(
    rect(PLOT.x0, PLOT.y0, PLOT.x1 - PLOT.x0, PLOT.y1 - PLOT.y0, {
      fill: "none",
      stroke: COLORS.frame,
      "stroke-width": 1,
    }),
  );

  // Tick marks and labels.
  for (const tick of spec.xTicks) {
    const x = spec.xScale.map(tick.value);
    parts.push(line(x, PLOT.y1, x, PLOT.y1 + 5, { stroke: COLORS.frame, "stroke-width": 1 }));
    parts.push(
      text(tick.label, {
        x: px(x),
        y: px(PLOT.y1 + 19),
        "text-anchor": "middle",
        "font-family": FONT,
        "font-size": 12,
        fill: COLORS.label,
      }),
    );
  }
  for (const tick of spec.yTicks) {
    const y = spec.yScale.map(tick.value);
    parts.push(line(PLOT.x0 - 5, y, PLOT.x0, y, { stroke: COLORS.frame, "stroke-width": 1 }));
    parts.push(
      text(tick.label, {
        x: px(PLOT.x0 - 9),
        y: px(y + 4),
        "text-anchor": "end",
        "font-family": FONT,
        "font-size": 12,
        fill: COLORS.label,
      }),
    );
  }

  // Title and axis labels.
  parts.push(
    text(spec.title, {
      x: px((PLOT.x0 + PLOT.x1) / 2),
      y: px(MARGIN.top - 18),
      "text-anchor": "middle",
      "font-family": FONT,
      "font-size": 16,
      "font-weight": "bold",
      fill: COLORS.label,
    }),
  );
  parts.push(
    text(spec.xLabel, {
      x: px((PLOT.x0 + PLOT.x1) / 2),
      y: px(PLOT.y1 + 40),
      "text-anchor": "middle",
      "font-family": FONT,
      "font-size": 13,
      fill: COLORS.label,
    }),
  );
  parts.push(
    text(spec.yLabel, {
      x: 0,
      y: 0,
      transform: `translate(${px(MARGIN.left - 52)} ${px((PLOT.y0 + PLOT.y1) / 2)}) rotate(-90)`,
      "text-anchor": "middle",
      "font-family": FONT,
      "font-size": 13,
      fill: COLORS.label,
    }),
  );

  // Legend (top-right inside the plot).
  if (spec.legend && spec.legend.length > 0) {
    const entries: string[] = [];
    spec.legend.forEach((entry, i) => {
      const y = PLOT.y0 + 16 + i * 18;
      const x = PLOT.x1 - 150;
      entries.push(
        line(x, y, x + 22, y, {
          stroke: entry.color,
          "stroke-width": 2,
          ...(entry.dashed ? { "stroke-dasharray": "5 3" } : {}),
        }),
      );
      entries.push(
        text(entry.label, {
          x: px(x + 28),
          y: px(y + 4),
          "font-family": FONT,
          "font-size": 12,
          fill: COLORS.label,
        }),
      );
    });
    parts.push(el("g", {}, entries));
  }

  // Caption.
  parts.push(
    text(spec.caption, {
      x: px(PLOT.x0),
      y: px(HEIGHT - 14),
      "font-family": FONT,
      "font-size": 11,
      fill: COLORS.muted,
    }),
  );

  return el(
    "svg",
    {
      xmlns: "http://www.w3.org/2000/svg",
      width: WIDTH,
      height: HEIGHT,
      viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
    },
    parts,
  );
}
