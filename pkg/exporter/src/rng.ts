/**
 * Counter-based splitmix64, matching the evaluation toolkit's scalar
 * reference bit for bit so weights seeded here are reproducible there.
 */

const MASK = (1n << 64n) - 1n;
const GOLDEN = 0x9e3779b97f4a7c15n;
const MIX1 = 0xbf58476d1ce4e5b9n;
const MIX2 = 0x94d049bb133111ebn;

export function splitmix64(seed: bigint, index: bigint): bigint {
  let z = (seed + ((index + 1n) * GOLDEN & MASK)) & MASK;
  z = ((z ^ (z >> 30n)) * MIX1) & MASK;
  z = ((z ^ (z >> 27n)) * MIX2) & MASK;
  return z ^ (z >> 31n);
}

/** Uniform double in [0, 1) from the top 53 bits of the stream. */
export function unitDouble(seed: bigint, index: bigint): number {
  return Number(splitmix64(seed, index) >> 11n) * 2 ** -53;
}

/** Stateful view over one seed's counter stream. */
export class SeededStream {
  private index = 0n;

  constructor(private readonly seed: bigint) {}

  next(): number {
    return unitDouble(this.seed, this.index++);
  }

  /** Uniform in [lo, hi). */
  range(lo: number, hi: number): number {
    return lo + (hi - lo) * this.next();
  }
}
