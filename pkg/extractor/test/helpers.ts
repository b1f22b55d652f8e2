/** Deterministic fixture clips and a generic-schema corpus writer. */

import * as fs from "node:fs";
import * as path from "node:path";

import { encodeWavFloat32, encodeWavPcm16 } from "../src/wav.js";

export function sine(freq: number, seconds: number, rate: number): Float32Array {
  const out = new Float32Array(Math.round(seconds * rate));
  for (let i = 0; i < out.length; i++) {
    out[i] = 0.5 * Math.sin((2 * Math.PI * freq * i) / rate);
  }
  return out;
}

export function chirp(f0: number, f1: number, seconds: number, rate: number): Float32Array {
  const out = new Float32Array(Math.round(seconds * rate));
  for (let i = 0; i < out.length; i++) {
    const t = i / rate;
    const freq = f0 + ((f1 - f0) * t) / seconds;
    out[i] = 0.4 * Math.sin(2 * Math.PI * freq * t);
  }
  return out;
}

/** Linear congruential noise, reproducible across runs. */
export function seededNoise(count: number, seed: number): Float32Array {
  const out = new Float32Array(count);
  let state = seed >>> 0;
  for (let i = 0; i < count; i++) {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
    out[i] = (state / 4294967296) * 0.6 - 0.3;
  }
  return out;
}

export function silence(count: number): Float32Array {
  return new Float32Array(count);
}

/** Even-length palindrome: the second half mirrors the first bit-for-bit. */
export function palindrome(count: number, seed: number): Float32Array {
  const half = Math.floor(count / 2);
  const front = seededNoise(half, seed);
  const out = new Float32Array(half * 2);
  for (let i = 0; i < half; i++) {
    out[i] = front[i];
    out[out.length - 1 - i] = front[i];
  }
  return out;
}

export interface CorpusFixture {
  dir: string;
  metadataPath: string;
  sampleIds: string[];
}

/**
 * Five synthesized clips exercising PCM16/float32 encodings, a non-16k
 * input, empty metadata fields, and the palindrome symmetry case.
 */
export function writeCorpus(dir: string): CorpusFixture {
  fs.mkdirSync(dir, { recursive: true });
  const rows = [
    "sample_id,path,label,age,sex,split",
  ];
  const clips: [string, Buffer, string][] = [
    ["tone440", encodeWavPcm16(sine(440, 1.0, 16000), 16000), "1,29,male,train"],
    ["sweep", encodeWavFloat32(chirp(200, 3000, 1.2, 16000), 16000), "0,45,female,train"],
    ["hiss", encodeWavPcm16(seededNoise(35280, 7), 44100), "1,63,male,test"],
    ["quiet", encodeWavPcm16(silence(16000), 16000), "0,,,validation"],
    ["mirror", encodeWavFloat32(palindrome(16000, 11), 16000), "1,71,female,train"],
  ];
  for (const [id, buffer, meta] of clips) {
    fs.writeFileSync(path.join(dir, `${id}.wav`), buffer);
    rows.push(`${id},${id}.wav,${meta}`);
  }
  const metadataPath = path.join(dir, "metadata.csv");
  fs.writeFileSync(metadataPath, rows.join("\n") + "\n", "utf-8");
  return { dir, metadataPath, sampleIds: clips.map(([id]) => id) };
}
