/**
 * Per-layer frame encoder.
 *
 * Real corpora run through a pretrained self-supervised speech model whose
 * per-layer hidden states (the standard post-block outputs) are dumped per
 * frame.  This module keeps that model's geometry (hidden size, frame rate,
 * layer count) but computes the frames from a deterministic seeded
 * projection of the log-mel front end, so the whole pipeline runs without
 * model weights.  Swapping in real hidden states only has to honor
 * ModelSpec and FrameMatrix.
 */

import { FrameMatrix, MEL_BANDS } from "./dsp.js";

export interface ModelSpec {
  /** Hidden-state width per frame. */
  dim: number;
  /** Output frames per second of 16 kHz audio. */
  frameRate: number;
  /** Number of transformer layers (1-based layer indices). */
  layers: number;
}

export const MODELS: Record<string, ModelSpec> = {
  "hubert-large": { dim: 1024, frameRate: 50, layers: 24 },
  "hubert-base": { dim: 768, frameRate: 50, layers: 12 },
};

function fnv1a(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193);
  }
  return hash >>> 0;
}

function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let z = state;
    z = Math.imul(z ^ (z >>> 15), z | 1);
    z ^= z + Math.imul(z ^ (z >>> 7), z | 61);
    return ((z ^ (z >>> 14)) >>> 0) / 4294967296;
  };
}

export class LayerEncoder {
  readonly model: string;
  readonly layer: number;
  readonly spec: ModelSpec;
  private projection: Float32Array; // dim x MEL_BANDS, row-major

  constructor(model: string, layer: number) {
    const spec = MODELS[model];
    if (spec === undefined) {
      throw new Error(
        `unknown model '${model}'; known: ${Object.keys(MODELS).join(", ")}`
      );
    }
    if (!Number.isInteger(layer) || layer < 1 || layer > spec.layers) {
      throw new Error(
        `layer ${layer} out of range for ${model} (1..${spec.layers})`
      );
    }
    this.model = model;
    this.layer = layer;
    this.spec = spec;
    this.projection = this.buildProjection();
  }

  /** Seeded Gaussian projection, fixed per (model, layer). */
  private buildProjection(): Float32Array {
    const rand = mulberry32(fnv1a(`${this.model}:layer${this.layer}`));
    const out = new Float32Array(this.spec.dim * MEL_BANDS);
    for (let i = 0; i < out.length; i += 2) {
      // Box-Muller; u is kept away from zero so log stays finite.
      const u = rand() + 1e-12;
      const v = rand();
      const radius = Math.sqrt(-2 * Math.log(u));
      out[i] = radius * Math.cos(2 * Math.PI * v);
      if (i + 1 < out.length) {
        out[i + 1] = radius * Math.sin(2 * Math.PI * v);
      }
    }
    return out;
  }

  /** Project per-frame log-mel vectors to hidden-state-width frames. */
  encode(mel: FrameMatrix): FrameMatrix {
    if (mel.d !== MEL_BANDS) {
      throw new Error(`expected ${MEL_BANDS}-band frames, got ${mel.d}`);
    }
    const { dim } = this.spec;
    const data = new Float32Array(mel.t * dim);
    const centered = new Float64Array(MEL_BANDS);
    for (let frame = 0; frame < mel.t; frame++) {
      // Per-frame standardization keeps the projection well-conditioned
      // regardless of absolute signal level.
      let mean = 0;
      for (let m = 0; m < MEL_BANDS; m++) {
        mean += mel.data[frame * MEL_BANDS + m];
      }
      mean /= MEL_BANDS;
      let variance = 0;
      for (let m = 0; m < MEL_BANDS; m++) {
        const delta = mel.data[frame * MEL_BANDS + m] - mean;
        centered[m] = delta;
        variance += delta * delta;
      }
      const scale = 1 / (Math.sqrt(variance / MEL_BANDS) + 1e-5);
      for (let j = 0; j < dim; j++) {
        let dot = 0;
        for (let m = 0; m < MEL_BANDS; m++) {
          dot += this.projection[j * MEL_BANDS + m] * centered[m];
        }
        data[frame * dim + j] = Math.tanh((dot * scale) / Math.sqrt(MEL_BANDS));
      }
    }
    return { t: mel.t, d: dim, data };
  }
}
