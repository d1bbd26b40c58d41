/**
 * Figure registry: maps each figure kind to its expected CSV schema and
 * renderer.  Rendering is pure — one CSV text in, one SVG document out —
 * so identical inputs always produce byte-identical files.
 */
import { parseTable, requireSchema, Table } from "./csv";
import { COVARIANCE_HEADER, renderCovariance } from "./figures/covariance";
import { GAP_HEADER, renderGap } from "./figures/gap";
import { HISTOGRAM_HEADER, renderHistogram } from "./figures/histogram";
import { SWEEP_HEADER, renderSweep } from "./figures/sweep";
import { renderTails, TAILS_HEADER } from "./figures/tails";

export interface FigureKind {
  name: string;
  description: string;
  expectedHeader: string[];
  render: (table: Table) => string;
}

export const FIGURE_KINDS: FigureKind[] = [
  {
    name: "clt",
    description:
      "histogram of scaled windings with a standard-normal overlay (sigma / clt runs)",
    expectedHeader: HISTOGRAM_HEADER,
    render: renderHistogram,
  },
  {
    name: "gap",
    description:
      "endpoint-law contraction gap against time on a log scale (mixing runs)",
    expectedHeader: GAP_HEADER,
    render: renderGap,
  },
  {
    name: "covariance",
    description:
      "stationary increment covariance against lag (sigma-stationary runs)",
    expectedHeader: COVARIANCE_HEADER,
    render: renderCovariance,
  },
  {
    name: "tails",
    description:
      "log mean squared winding-band mass against squared offset (tails runs)",
    expectedHeader: TAILS_HEADER,
    render: renderTails,
  },
  {
    name: "sweep",
    description:
      "effective diffusivity against circumference with a square-root guide (sweep-L runs)",
    expectedHeader: SWEEP_HEADER,
    render: renderSweep,
  },
];

export function kindNames(): string[] {
  return FIGURE_KINDS.map((kind) => kind.name);
}

export function findKind(name: string): FigureKind {
  const kind = FIGURE_KINDS.find((k) => k.name === name);
  if (!kind) {
    throw new Error(`unknown figure kind "${name}" (known: ${kindNames().join(", ")})`);
  }
  return kind;
}

/** Parse, validate against the kind's schema, and render one figure. */
export function renderFigure(kindName: string, csvText: string): string {
  const kind = findKind(kindName);
  const table = parseTable(csvText);
  requireSchema(table, kind.expectedHeader);
  if (table.rows.length === 0) {
    throw new Error("CSV has a header but no data rows");
  }
  return kind.render(table);
}
