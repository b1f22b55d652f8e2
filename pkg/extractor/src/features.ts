/**
 * Feature-file serialization.
 *
 * Layout (little-endian), matching the screening core's reader exactly:
 *   bytes 0..3   magic "NPSA"
 *   bytes 4..7   format version (1)
 *   bytes 8..11  layer index
 *   byte  12     channel code (0 original, 1 reversed)
 *   bytes 13..15 zero padding
 *   bytes 16..19 frame count T
 *   bytes 20..23 feature dimension D
 *   bytes 24..   T*D float32 values, row-major
 */

import { FrameMatrix } from "./dsp.js";

export const FEATURE_MAGIC = "NPSA";
export const FEATURE_VERSION = 1;
export const HEADER_BYTES = 24;

export type ChannelName = "original" | "reversed";

export const CHANNEL_CODE: Record<ChannelName, number> = {
  original: 0,
  reversed: 1,
};

export function encodeFeatureFile(layer: number, channel: ChannelName,
                                  frames: FrameMatrix): Buffer {
  if (frames.t < 1 || frames.d < 1) {
    throw new Error(`feature matrix must be at least 1x1, got ${frames.t}x${frames.d}`);
  }
  if (frames.data.length !== frames.t * frames.d) {
    throw new Error(
      `frame data length ${frames.data.length} does not match ${frames.t}x${frames.d}`
    );
  }
  for (let i = 0; i < frames.data.length; i++) {
    if (!Number.isFinite(frames.data[i])) {
      throw new Error(`non-finite value at element ${i}`);
    }
  }
  const buffer = Buffer.alloc(HEADER_BYTES + 4 * frames.t * frames.d);
  buffer.write(FEATURE_MAGIC, 0, "ascii");
  buffer.writeUInt32LE(FEATURE_VERSION, 4);
  buffer.writeUInt32LE(layer, 8);
  buffer.writeUInt8(CHANNEL_CODE[channel], 12);
  buffer.writeUInt32LE(frames.t, 16);
  buffer.writeUInt32LE(frames.d, 20);
  for (let i = 0; i < frames.data.length; i++) {
    buffer.writeFloatLE(frames.data[i], HEADER_BYTES + 4 * i);
  }
  return buffer;
}

/** Header fields of an encoded feature file; used by tests and tools. */
export function readFeatureHeader(buffer: Buffer): {
  layer: number; channel: ChannelName; t: number; d: number;
} {
  if (buffer.length < HEADER_BYTES) {
    throw new Error(`truncated header: ${buffer.length} bytes`);
  }
  if (buffer.toString("ascii", 0, 4) !== FEATURE_MAGIC) {
    throw new Error("bad magic at offset 0");
  }
  if (buffer.readUInt32LE(4) !== FEATURE_VERSION) {
    throw new Error(`unsupported version ${buffer.readUInt32LE(4)} at offset 4`);
  }
  const code = buffer.readUInt8(12);
  const channel = code === 0 ? "original" : code === 1 ? "reversed" : null;
  if (channel === null) {
    throw new Error(`bad channel code ${code} at offset 12`);
  }
  return {
    layer: buffer.readUInt32LE(8),
    channel,
    t: buffer.readUInt32LE(16),
    d: buffer.readUInt32LE(20),
  };
}
