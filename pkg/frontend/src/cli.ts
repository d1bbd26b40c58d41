#!/usr/bin/env node
/**
 * Command-line entry point:
 *
 *   polywind-plot <kind> --in <results.csv> --out <figure.svg>
 *
 * Exit codes follow the simulation CLI: 0 success, 1 data/schema errors
 * (missing column, unparsable values), 2 usage errors (unknown kind,
 * missing file, unsupported output format).
 */
import { readFileSync, writeFileSync } from "fs";
import yargs from "yargs";
import { FIGURE_KINDS, kindNames, renderFigure } from "./figures";

class UsageError extends Error {}

function kindSummary(): string {
  return FIGURE_KINDS.map((kind) => `  ${kind.name.padEnd(12)}${kind.description}`).join(
    "\n",
  );
}

export async function runCli(argv: string[]): Promise<number> {
  try {
    const parser = yargs(argv)
      .scriptName("polywind-plot")
      .usage("$0 <kind> --in <results.csv> --out <figure.svg>\n\nfigure kinds:\n" + kindSummary())
      .command("$0 <kind>", "render one figure from a results.csv file", (y) =>
        y
          .positional("kind", {
            describe: "figure kind",
            type: "string",
            choices: kindNames(),
          })
          .option("in", {
            describe: "input results.csv path",
            type: "string",
            demandOption: true,
          })
          .option("out", {
            describe: "output .svg path",
            type: "string",
            demandOption: true,
          }),
      )
      .strict()
      .exitProcess(false)
      .fail((message, error) => {
        throw error ?? new UsageError(message);
      });

    const args = (await parser.parse()) as unknown as {
      kind: string;
      in: string;
      out: string;
    };

    if (!args.out.endsWith(".svg")) {
      throw new UsageError(
        `unsupported output format "${args.out}": this renderer writes .svg files`,
      );
    }

    let csvText: string;
    try {
      csvText = readFileSync(args.in, "utf8");
    } catch (error) {
      throw new UsageError(`cannot read input file: ${(error as Error).message}`);
    }

    const svg = renderFigure(args.kind, csvText);
    writeFileSync(args.out, svg, "utf8");
    console.log(`wrote ${args.out} (${Buffer.byteLength(svg)} bytes, kind=${args.kind})`);
    return 0;
  } catch (error) {
    if (error instanceof UsageError) {
      console.error(`usage error: ${error.message}`);
      console.error(`run with --help for figure kinds and options`);
      return 2;
    }
    console.error(`error: ${(error as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  runCli(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
