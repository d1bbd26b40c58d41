/**
 * Standard caption line identifying the run and schema a figure came from.
 */
import { configHash, headerHash, Table } from "./csv";

export function standardCaption(table: Table, note?: string): string {
  const base =
    `config ${configHash(table)} · schema ${headerHash(table.columns)} · ` +
    `${table.rows.length} rows`;
  return note ? `${base} · ${note}` : base;
}
