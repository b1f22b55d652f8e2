/**
 * Extraction pipeline: decode -> downmix -> 16 kHz -> original and exactly
 * reversed waveforms -> per-layer frame features -> feature files plus a
 * manifest the screening core ingests as-is.
 *
 * Per-file failures are logged and the sample is excluded, never written
 * half-done; the manifest lists completed samples only.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { DatasetName, SampleMeta, parseMetadata } from "./datasets.js";
import { logMelFrames, resampleTo16k, reverseWaveform } from "./dsp.js";
import { LayerEncoder, MODELS } from "./encoder.js";
import { ChannelName, encodeFeatureFile } from "./features.js";
import { ManifestRecord, manifestText } from "./manifest.js";
import { decodeWav } from "./wav.js";

export interface ExtractionJob {
  audioRoot: string;
  metadataPath: string;
  dataset: DatasetName;
  model: string;
  layers: number[];
  outDir: string;
}

export interface ExtractionResult {
  written: number;
  failed: number;
  failures: { sampleId: string; error: string }[];
  manifestPath: string;
}

export function extract(job: ExtractionJob,
                        log: (line: string) => void = console.error): ExtractionResult {
  const spec = MODELS[job.model];
  if (spec === undefined) {
    throw new Error(`unknown model '${job.model}'; known: ${Object.keys(MODELS).join(", ")}`);
  }
  if (job.layers.length === 0) {
    throw new Error("at least one layer is required");
  }
  const encoders = new Map<number, LayerEncoder>();
  for (const layer of job.layers) {
    encoders.set(layer, new LayerEncoder(job.model, layer));
  }

  const metadata = parseMetadata(
    fs.readFileSync(job.metadataPath, "utf-8"), job.dataset
  );
  fs.mkdirSync(job.outDir, { recursive: true });

  const records: ManifestRecord[] = [];
  const failures: { sampleId: string; error: string }[] = [];
  for (const sample of metadata) {
    try {
      records.push(extractOne(job, sample, encoders));
    } catch (error) {
      const message = error instanceof Error ? error.message : String(error);
      failures.push({ sampleId: sample.sampleId, error: message });
      log(`skipping ${sample.sampleId}: ${message}`);
    }
  }

  const manifestPath = path.join(job.outDir, "manifest.jsonl");
  fs.writeFileSync(manifestPath, manifestText(records), "utf-8");
  return { written: records.length, failed: failures.length, failures, manifestPath };
}

function extractOne(job: ExtractionJob, sample: SampleMeta,
                    encoders: Map<number, LayerEncoder>): ManifestRecord {
  const audioPath = path.resolve(job.audioRoot, sample.audioPath);
  const decoded = decodeWav(fs.readFileSync(audioPath));
  const waveform = resampleTo16k(decoded.samples, decoded.sampleRate);
  if (waveform.length === 0) {
    throw new Error("empty audio");
  }
  const channels: [ChannelName, Float32Array][] = [
    ["original", waveform],
    ["reversed", reverseWaveform(waveform)],
  ];

  // Compute every file first, then write, so a failure leaves nothing behind.
  const outputs: { relPath: string; key: string; buffer: Buffer }[] = [];
  for (const [channel, samples] of channels) {
    const mel = logMelFrames(samples);
    for (const [layer, encoder] of encoders) {
      const frames = encoder.encode(mel);
      const relPath = path.join(
        "features", sample.sampleId, `layer${layer}_${channel}.npsa`
      );
      outputs.push({
        relPath,
        key: `${layer}/${channel}`,
        buffer: encodeFeatureFile(layer, channel, frames),
      });
    }
  }

  const features: Record<string, string> = {};
  for (const output of outputs) {
    const target = path.join(job.outDir, output.relPath);
    fs.mkdirSync(path.dirname(target), { recursive: true });
    fs.writeFileSync(target, output.buffer);
    features[output.key] = output.relPath;
  }
  return {
    sampleId: sample.sampleId,
    label: sample.label,
    ageGroup: sample.ageGroup,
    sex: sample.sex,
    split: sample.split,
    features,
  };
}
