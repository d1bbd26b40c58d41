/**
 * Minimal SVG string builders.
 *
 * Figures are emitted as self-contained SVG documents with no external
 * references, so that identical inputs give byte-identical files.
 */

export type Attrs = Record<string, string | number>;

/** Round pixel coordinates so output bytes do not depend on FP noise. */
export function px(value: number): string {
  const rounded = Math.round(value * 100) / 100;
  return Object.is(rounded, -0) ? "0" : String(rounded);
}

function attrText(attrs: Attrs): string {
  return Object.entries(attrs)
    .map(([key, value]) => ` ${key}="${value}"`)
    .join("");
}

/** An element with children. */
export function el(tag: string, attrs: Attrs, children: string[] = []): string {
  if (children.length === 0) {
    return `<${tag}${attrText(attrs)}/>`;
  }
  return `<${tag}${attrText(attrs)}>${children.join("")}</${tag}>`;
}

export function escapeText(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

/** A text element; content is escaped. */
export function text(content: string, attrs: Attrs): string {
  return `<text${attrText(attrs)}>${escapeText(content)}</text>`;
}

export function line(
  x1: number,
  y1: number,
  x2: number,
  y2: number,
  attrs: Attrs,
): string {
  return el("line", {
    x1: px(x1),
    y1: px(y1),
    x2: px(x2),
    y2: px(y2),
    ...attrs,
  });
}

export function rect(
  x: number,
  y: number,
  width: number,
  height: number,
  attrs: Attrs,
): string {
  return el("rect", {
    x: px(x),
    y: px(y),
    width: px(Math.max(width, 0)),
    height: px(Math.max(height, 0)),
    ...attrs,
  });
}

export function circle(cx: number, cy: number, r: number, attrs: Attrs): string {
  return el("circle", { cx: px(cx), cy: px(cy), r: px(r), ...attrs });
}

/** A polyline path through the given pixel points. */
export function pathThrough(points: Array<[number, number]>, attrs: Attrs): string {
  if (points.length === 0) return "";
  const d = points
    .map(([x, y], i) => `${i === 0 ? "M" : "L"}${px(x)} ${px(y)}`)
    .join(" ");
  return el("path", { d, fill: "none", ...attrs });
}

/** Compact deterministic tick/annotation label for a number. */
export function fmt(value: number): string {
  if (value === 0) return "0";
  const magnitude = Math.abs(value);
  if (magnitude >= 1e4 || magnitude < 1e-3) {
    return value.toExponential(1).replace("e+", "e");
  }
  const rounded = Number(value.toPrecision(4));
  return String(rounded);
}
