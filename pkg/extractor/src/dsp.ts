/**
 * Waveform processing: 16 kHz resampling, exact reversal, and a log-mel
 * filterbank front end (25 ms window, 20 ms hop, 80 mel bands).
 */

export const TARGET_RATE = 16000;
export const FRAME_LENGTH = 400; // 25 ms at 16 kHz
export const HOP_LENGTH = 320; // 20 ms at 16 kHz
export const FFT_SIZE = 512;
export const MEL_BANDS = 80;

/** Linear-interpolation resampler; identity when already at 16 kHz. */
export function resampleTo16k(samples: Float32Array, inputRate: number): Float32Array {
  if (inputRate === TARGET_RATE) {
    return samples;
  }
  if (inputRate <= 0) {
    throw new Error(`invalid sample rate ${inputRate}`);
  }
  const ratio = TARGET_RATE / inputRate;
  const length = Math.max(1, Math.floor(samples.length * ratio));
  const out = new Float32Array(length);
  for (let i = 0; i < length; i++) {
    const src = i / ratio;
    const lo = Math.floor(src);
    const hi = Math.min(lo + 1, samples.length - 1);
    const t = src - lo;
    out[i] = samples[lo] * (1 - t) + samples[hi] * t;
  }
  return out;
}

/** Exact sample-order inversion; the values themselves are untouched. */
export function reverseWaveform(samples: Float32Array): Float32Array {
  const out = new Float32Array(samples.length);
  for (let i = 0; i < samples.length; i++) {
    out[i] = samples[samples.length - 1 - i];
  }
  return out;
}

let hannCache: Float32Array | null = null;

function hannWindow(): Float32Array {
  if (hannCache === null) {
    hannCache = new Float32Array(FRAME_LENGTH);
    for (let i = 0; i < FRAME_LENGTH; i++) {
      hannCache[i] = 0.5 - 0.5 * Math.cos((2 * Math.PI * i) / (FRAME_LENGTH - 1));
    }
  }
  return hannCache;
}

/** In-place iterative radix-2 FFT; FFT_SIZE is a power of two. */
function fft(re: Float64Array, im: Float64Array): void {
  const n = re.length;
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1;
    for (; j & bit; bit >>= 1) {
      j ^= bit;
    }
    j ^= bit;
    if (i < j) {
      [re[i], re[j]] = [re[j], re[i]];
      [im[i], im[j]] = [im[j], im[i]];
    }
  }
  for (let len = 2; len <= n; len <<= 1) {
    const angle = (-2 * Math.PI) / len;
    const wRe = Math.cos(angle);
    const wIm = Math.sin(angle);
    for (let start = 0; start < n; start += len) {
      let curRe = 1;
      let curIm = 0;
      for (let k = 0; k < len / 2; k++) {
        const evenRe = re[start + k];
        const evenIm = im[start + k];
        const oddRe = re[start + k + len / 2] * curRe - im[start + k + len / 2] * curIm;
        const oddIm = re[start + k + len / 2] * curIm + im[start + k + len / 2] * curRe;
        re[start + k] = evenRe + oddRe;
        im[start + k] = evenIm + oddIm;
        re[start + k + len / 2] = evenRe - oddRe;
        im[start + k + len / 2] = evenIm - oddIm;
        const nextRe = curRe * wRe - curIm * wIm;
        curIm = curRe * wIm + curIm * wRe;
        curRe = nextRe;
      }
    }
  }
}

function hzToMel(hz: number): number {
  return 2595 * Math.log10(1 + hz / 700);
}

function melToHz(mel: number): number {
  return 700 * (Math.pow(10, mel / 2595) - 1);
}

let filterbankCache: Float64Array[] | null = null;

/** Triangular mel filterbank over FFT_SIZE/2+1 power bins, 0..8 kHz. */
function melFilterbank(): Float64Array[] {
  if (filterbankCache !== null) {
    return filterbankCache;
  }
  const bins = FFT_SIZE / 2 + 1;
  const maxMel = hzToMel(TARGET_RATE / 2);
  const centers: number[] = [];
  for (let m = 0; m < MEL_BANDS + 2; m++) {
    const hz = melToHz((maxMel * m) / (MEL_BANDS + 1));
    centers.push((hz * FFT_SIZE) / TARGET_RATE);
  }
  const bank: Float64Array[] = [];
  for (let m = 0; m < MEL_BANDS; m++) {
    const filter = new Float64Array(bins);
    const [left, center, right] = [centers[m], centers[m + 1], centers[m + 2]];
    for (let b = 0; b < bins; b++) {
      if (b > left && b < center) {
        filter[b] = (b - left) / (center - left);
      } else if (b >= center && b < right) {
        filter[b] = (right - b) / (right - center);
      }
    }
    bank.push(filter);
  }
  filterbankCache = bank;
  return bank;
}

export interface FrameMatrix {
  t: number;
  d: number;
  /** Row-major t*d values. */
  data: Float32Array;
}

/**
 * Log-mel frames for a 16 kHz waveform.  Clips shorter than one window
 * still produce a single zero-padded frame.
 */
export function logMelFrames(samples: Float32Array): FrameMatrix {
  const t = samples.length >= FRAME_LENGTH
    ? Math.floor((samples.length - FRAME_LENGTH) / HOP_LENGTH) + 1
    : 1;
  const window = hannWindow();
  const bank = melFilterbank();
  const data = new Float32Array(t * MEL_BANDS);
  const re = new Float64Array(FFT_SIZE);
  const im = new Float64Array(FFT_SIZE);
  for (let frame = 0; frame < t; frame++) {
    re.fill(0);
    im.fill(0);
    const start = frame * HOP_LENGTH;
    const available = Math.min(FRAME_LENGTH, samples.length - start);
    for (let i = 0; i < available; i++) {
      re[i] = samples[start + i] * window[i];
    }
    fft(re, im);
    for (let m = 0; m < MEL_BANDS; m++) {
      const filter = bank[m];
      let energy = 0;
      for (let b = 0; b < filter.length; b++) {
        if (filter[b] !== 0) {
          energy += filter[b] * (re[b] * re[b] + im[b] * im[b]);
        }
      }
      data[frame * MEL_BANDS + m] = Math.log(energy + 1e-10);
    }
  }
  return { t, d: MEL_BANDS, data };
}
