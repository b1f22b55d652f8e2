#!/usr/bin/env node
/**
 * extract --dataset {covid19sounds|coswara|generic} --layers 3,4,5 --out DIR
 *
 * Reads a metadata CSV, extracts per-layer original and reversed feature
 * files for every listed clip, and writes a manifest next to them.  Usage
 * errors exit 2, data errors exit 1.
 */

import { parseArgs } from "node:util";

import { DatasetName } from "./datasets.js";
import { extract } from "./extract.js";

function usageError(message: string): never {
  console.error(`error: ${message}`);
  console.error(
    "usage: extract --dataset {covid19sounds|coswara|generic} --out DIR " +
    "[--audio-root DIR] [--metadata CSV] [--layers 3,4,5] [--model hubert-large]"
  );
  process.exit(2);
}

export function main(argv: string[]): void {
  let values;
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        dataset: { type: "string" },
        "audio-root": { type: "string", default: "." },
        metadata: { type: "string" },
        layers: { type: "string", default: "3,4,5" },
        model: { type: "string", default: "hubert-large" },
        out: { type: "string" },
      },
    }));
  } catch (error) {
    usageError(error instanceof Error ? error.message : String(error));
  }

  const dataset = values.dataset;
  if (dataset !== "covid19sounds" && dataset !== "coswara" && dataset !== "generic") {
    usageError(`--dataset must be covid19sounds, coswara, or generic, got '${dataset ?? ""}'`);
  }
  if (values.out === undefined) {
    usageError("--out is required");
  }
  const layers = values.layers!.split(",").map((part) => Number(part.trim()));
  if (layers.some((layer) => !Number.isInteger(layer))) {
    usageError(`--layers must be a comma list of integers, got '${values.layers}'`);
  }

  const audioRoot = values["audio-root"]!;
  try {
    const result = extract({
      audioRoot,
      metadataPath: values.metadata ?? `${audioRoot}/metadata.csv`,
      dataset: dataset as DatasetName,
      model: values.model!,
      layers,
      outDir: values.out,
    });
    console.log(
      `wrote ${result.written} sample(s) to ${result.manifestPath}` +
      (result.failed > 0 ? `, ${result.failed} failed` : "")
    );
    if (result.written === 0) {
      console.error("error: no sample extracted successfully");
      process.exit(1);
    }
  } catch (error) {
    console.error(`error: ${error instanceof Error ? error.message : String(error)}`);
    process.exit(1);
  }
}

main(process.argv.slice(2));
