#!/usr/bin/env node
/**
 * Exporter command line.
 *
 * Usage:
 *   tokadapt-export export-toy --out toy.tca [--seed 0] [--samples 32]
 *   tokadapt-export export-weights --source model.safetensors --out w.tca
 *                                  [--names clip|plain] [--heads 12]
 *   tokadapt-export export-text --source text.json --out text.tca
 *   tokadapt-export export-data --source imgdir --out data.tca [--side 224]
 *   tokadapt-export reference-logits --archive toy.tca --out ref.json
 *                                    [--samples 32] [--tau 0.01]
 */

import { ArchiveWriter } from "./archive.js";
import { convertClip, convertPlain } from "./convert.js";
import { exportData, exportText, exportToy, referenceLogits } from "./export.js";
import { SafeTensors } from "./safetensors.js";

type Flags = Record<string, string>;

function parseFlags(argv: string[]): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i++) {
    if (!argv[i].startsWith("--")) throw new Error(`unexpected argument ${argv[i]}`);
    flags[argv[i].slice(2)] = argv[++i] ?? "";
  }
  return flags;
}

function need(flags: Flags, name: string): string {
  const v = flags[name];
  if (v === undefined || v === "") throw new Error(`--${name} is required`);
  return v;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    const flags = parseFlags(rest);
    switch (command) {
      case "export-toy": {
        exportToy(need(flags, "out"), Number(flags.seed ?? 0),
                  Number(flags.samples ?? 32));
        break;
      }
      case "export-weights": {
        const st = new SafeTensors(need(flags, "source"));
        const heads = Number(flags.heads ?? 12);
        const w = new ArchiveWriter();
        if ((flags.names ?? "clip") === "clip") {
          const dropped = convertClip(w, st, heads);
          if (dropped.length) {
            console.error(`dropped ${dropped.length} tensors with no schema slot: `
              + dropped.join(", "));
          }
        } else {
          convertPlain(w, st, heads);
        }
        w.write(need(flags, "out"));
        break;
      }
      case "export-text": {
        exportText(need(flags, "source"), need(flags, "out"));
        break;
      }
      case "export-data": {
        const classes = exportData(need(flags, "source"),
                                   Number(flags.side ?? 224), need(flags, "out"));
        if (classes.length) console.error(`classes: ${classes.join(", ")}`);
        break;
      }
      case "reference-logits": {
        referenceLogits(need(flags, "archive"), Number(flags.samples ?? 32),
                        Number(flags.tau ?? 0.01), need(flags, "out"));
        break;
      }
      default:
        console.error("commands: export-toy | export-weights | export-text "
          + "| export-data | reference-logits");
        return 1;
    }
    return 0;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

const invokedDirectly = process.argv[1]
  && import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
