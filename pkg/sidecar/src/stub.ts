import { createHash } from "node:crypto";

/**
 * Deterministic stub score for a (query, passage) pair.
 *
 * Defined as the least-significant 32 bits of
 * SHA-256("q:" + query + "|p:" + passage), read big-endian as an
 * unsigned integer, divided by 2^32. The result lies in [0, 1) and is
 * bit-identical across platforms and runtimes, so clients can verify
 * protocol conformance against an independently computed value.
 */
export function stubScore(query: string, passage: string): number {
  const digest = createHash("sha256")
    .update(`q:${query}|p:${passage}`, "utf8")
    .digest();
  return digest.readUInt32BE(digest.length - 4) / 2 ** 32;
}
