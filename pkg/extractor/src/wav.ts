/**
 * WAV decoding and encoding.
 *
 * Decoding accepts PCM 16/24/32-bit and IEEE float32, any channel count;
 * multi-channel audio is downmixed to mono by the per-sample channel mean.
 * Encoding exists so tests and tools can synthesize fixture clips.
 */

export interface DecodedWav {
  sampleRate: number;
  channels: number;
  /** Mono samples in [-1, 1], downmixed by channel mean. */
  samples: Float32Array;
}

const RIFF = 0x46464952; // "RIFF" little-endian
const WAVE = 0x45564157; // "WAVE"
const FMT = 0x20746d66; // "fmt "
const DATA = 0x61746164; // "data"

export function decodeWav(buffer: Buffer): DecodedWav {
  if (buffer.length < 12) {
    throw new Error(`not a WAV file: ${buffer.length} bytes, need at least 12`);
  }
  if (buffer.readUInt32LE(0) !== RIFF || buffer.readUInt32LE(8) !== WAVE) {
    throw new Error("not a WAV file: missing RIFF/WAVE header");
  }

  let format = 0;
  let channels = 0;
  let sampleRate = 0;
  let bitsPerSample = 0;
  let dataOffset = -1;
  let dataLength = 0;

  let offset = 12;
  while (offset + 8 <= buffer.length) {
    const chunkId = buffer.readUInt32LE(offset);
    const chunkSize = buffer.readUInt32LE(offset + 4);
    const body = offset + 8;
    if (chunkId === FMT) {
      if (chunkSize < 16 || body + 16 > buffer.length) {
        throw new Error(`malformed fmt chunk at byte ${offset}`);
      }
      format = buffer.readUInt16LE(body);
      channels = buffer.readUInt16LE(body + 2);
      sampleRate = buffer.readUInt32LE(body + 4);
      bitsPerSample = buffer.readUInt16LE(body + 14);
    } else if (chunkId === DATA) {
      dataOffset = body;
      dataLength = Math.min(chunkSize, buffer.length - body);
    }
    // Chunks are word-aligned.
    offset = body + chunkSize + (chunkSize % 2);
  }

  if (channels === 0 || sampleRate === 0) {
    throw new Error("no fmt chunk found");
  }
  if (dataOffset < 0) {
    throw new Error("no data chunk found");
  }

  const read = sampleReader(format, bitsPerSample);
  const bytesPerSample = bitsPerSample / 8;
  const frameBytes = bytesPerSample * channels;
  const frames = Math.floor(dataLength / frameBytes);
  const mono = new Float32Array(frames);
  for (let i = 0; i < frames; i++) {
    let sum = 0;
    for (let c = 0; c < channels; c++) {
      sum += read(buffer, dataOffset + i * frameBytes + c * bytesPerSample);
    }
    mono[i] = sum / channels;
  }
  return { sampleRate, channels, samples: mono };
}

function sampleReader(format: number, bits: number): (b: Buffer, at: number) => number {
  if (format === 1 && bits === 16) {
    return (b, at) => b.readInt16LE(at) / 32768;
  }
  if (format === 1 && bits === 24) {
    return (b, at) => {
      const unsigned = b[at] | (b[at + 1] << 8) | (b[at + 2] << 16);
      const signed = unsigned >= 0x800000 ? unsigned - 0x1000000 : unsigned;
      return signed / 8388608;
    };
  }
  if (format === 1 && bits === 32) {
    return (b, at) => b.readInt32LE(at) / 2147483648;
  }
  if (format === 3 && bits === 32) {
    return (b, at) => b.readFloatLE(at);
  }
  throw new Error(`unsupported WAV encoding: format ${format}, ${bits}-bit`);
}

function riffShell(sampleRate: number, channels: number, format: number,
                   bits: number, dataBytes: number): Buffer {
  const header = Buffer.alloc(44);
  header.write("RIFF", 0, "ascii");
  header.writeUInt32LE(36 + dataBytes, 4);
  header.write("WAVE", 8, "ascii");
  header.write("fmt ", 12, "ascii");
  header.writeUInt32LE(16, 16);
  header.writeUInt16LE(format, 20);
  header.writeUInt16LE(channels, 22);
  header.writeUInt32LE(sampleRate, 24);
  header.writeUInt32LE(sampleRate * channels * (bits / 8), 28);
  header.writeUInt16LE(channels * (bits / 8), 32);
  header.writeUInt16LE(bits, 34);
  header.write("data", 36, "ascii");
  header.writeUInt32LE(dataBytes, 40);
  return header;
}

export function encodeWavPcm16(samples: Float32Array, sampleRate: number,
                               channels = 1): Buffer {
  const body = Buffer.alloc(samples.length * 2);
  for (let i = 0; i < samples.length; i++) {
    const clamped = Math.max(-1, Math.min(1, samples[i]));
    body.writeInt16LE(Math.round(clamped * 32767), i * 2);
  }
  return Buffer.concat([riffShell(sampleRate, channels, 1, 16, body.length), body]);
}

export function encodeWavFloat32(samples: Float32Array, sampleRate: number,
                                 channels = 1): Buffer {
  const body = Buffer.alloc(samples.length * 4);
  for (let i = 0; i < samples.length; i++) {
    body.writeFloatLE(samples[i], i * 4);
  }
  return Buffer.concat([riffShell(sampleRate, channels, 3, 32, body.length), body]);
}
