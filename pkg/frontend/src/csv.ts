/**
 * Reading and validating results.csv files.
 *
 * Every figure kind declares the exact header it understands.  Validation
 * reports the first missing column by name, and any extra columns as a
 * schema mismatch, so a renamed or truncated file fails loudly instead of
 * producing a silently wrong figure.
 */
import Papa from "papaparse";

export interface Table {
  columns: string[];
  rows: Array<Record<string, string>>;
}

/** A required column is absent from the file header. */
export class MissingColumnError extends Error {
  readonly column: string;
  readonly found: string[];

  constructor(column: string, found: string[]) {
    super(
      `missing required column "${column}" (found: ${found.join(", ")})`,
    );
    this.name = "MissingColumnError";
    this.column = column;
    this.found = found;
  }
}

/** The header has every required column but does not match the known schema. */
export class SchemaMismatchError extends Error {
  constructor(expected: string[], actual: string[]) {
    const extra = actual.filter((c) => !expected.includes(c));
    super(
      `header does not match the known schema ` +
        `(unexpected columns: ${extra.join(", ") || "none"}; ` +
        `expected: ${expected.join(", ")})`,
    );
    this.name = "SchemaMismatchError";
  }
}

/** Parse CSV text with a header row into string-valued records. */
export function parseTable(text: string): Table {
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
    // The interchange format is comma-separated; never sniff the delimiter
    // (sniffing fails on single-column files and can misread odd content).
    delimiter: ",",
  });
  if (parsed.errors.length > 0) {
    const first = parsed.errors[0];
    const where = first.row === undefined ? "" : ` at data row ${first.row}`;
    throw new Error(`CSV parse error${where}: ${first.message}`);
  }
  const columns = parsed.meta.fields ?? [];
  if (columns.length === 0) {
    throw new Error("CSV has no header row");
  }
  return { columns, rows: parsed.data };
}

/**
 * Check the header against the exact expected column list.
 *
 * Missing columns are reported first (by name); extra columns are a schema
 * mismatch.  Column order is not significant.
 */
export function requireSchema(table: Table, expected: string[]): void {
  for (const column of expected) {
    if (!table.columns.includes(column)) {
      throw new MissingColumnError(column, table.columns);
    }
  }
  if (table.columns.length !== expected.length) {
    throw new SchemaMismatchError(expected, table.columns);
  }
}

/** Extract one column as finite numbers, failing on anything unparseable. */
export function numericColumn(table: Table, name: string): number[] {
  if (!table.columns.includes(name)) {
    throw new MissingColumnError(name, table.columns);
  }
  return table.rows.map((row, index) => {
    const value = Number(row[name]);
    if (!Number.isFinite(value)) {
      throw new Error(
        `column "${name}", data row ${index}: not a finite number: "${row[name]}"`,
      );
    }
    return value;
  });
}

/** The run identifier stamped on every row; "mixed" if rows disagree. */
export function configHash(table: Table): string {
  if (!table.columns.includes("config_hash")) {
    throw new MissingColumnError("config_hash", table.columns);
  }
  const values = new Set(table.rows.map((row) => row["config_hash"]));
  if (values.size === 0) return "empty";
  if (values.size > 1) return "mixed";
  return values.values().next().value as string;
}

/**
 * FNV-1a hash of the joined header, as eight hex digits.
 *
 * Identifies the schema version a figure was rendered from; embedded in the
 * caption next to the config hash.
 */
export function headerHash(columns: string[]): string {
  let hash = 0x811c9dc5;
  const text = columns.join(",");
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash.toString(16).padStart(8, "0");
}
