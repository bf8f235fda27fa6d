/**
 * Line-delimited JSON scoring protocol.
 *
 * The server writes one handshake line, then answers each request line
 * with a response line. All lines are UTF-8 JSON objects terminated by
 * LF. A malformed request with a recoverable numeric id gets an error
 * response; anything else is logged to stderr and skipped. The stream
 * never crashes the process.
 */

import readline from "node:readline";

export interface Handshake {
  hello: string;
  version: string;
  max_batch: number;
}

export interface ScoreRequest {
  id: number;
  query: string;
  passage: string;
}

export interface ScoreResponse {
  id: number;
  score: number;
}

export interface ErrorResponse {
  id: number;
  error: string;
}

export type ScoreFn = (query: string, passage: string) => Promise<number> | number;

export interface ServeOptions {
  name: string;
  version: string;
  maxBatch: number;
  score: ScoreFn;
  log?: (message: string) => void;
}

function parseRequest(line: string): ScoreRequest | ErrorResponse | null {
  let parsed: unknown;
  try {
    parsed = JSON.parse(line);
  } catch {
    return null;
  }
  if (typeof parsed !== "object" || parsed === null) {
    return null;
  }
  const obj = parsed as Record<string, unknown>;
  const id = obj.id;
  if (typeof id !== "number" || !Number.isInteger(id) || id < 0) {
    return null;
  }
  if (typeof obj.query !== "string" || typeof obj.passage !== "string") {
    return { id, error: "request must carry string fields 'query' and 'passage'" };
  }
  return { id, query: obj.query, passage: obj.passage };
}

/** Serve the protocol over a pair of streams until the input ends. */
export async function serveLines(
  input: NodeJS.ReadableStream,
  output: NodeJS.WritableStream,
  options: ServeOptions,
): Promise<void> {
  const log = options.log ?? ((message: string) => process.stderr.write(`${message}\n`));
  const handshake: Handshake = {
    hello: options.name,
    version: options.version,
    max_batch: options.maxBatch,
  };
  output.write(`${JSON.stringify(handshake)}\n`);

  const rl = readline.createInterface({ input, crlfDelay: Number.POSITIVE_INFINITY });
  for await (const raw of rl) {
    const line = String(raw).trim();
    if (!line) {
      continue;
    }
    const request = parseRequest(line);
    if (request === null) {
      log(`skipping unparseable request line: ${line.slice(0, 120)}`);
      continue;
    }
    if ("error" in request) {
      output.write(`${JSON.stringify(request)}\n`);
      continue;
    }
    try {
      const score = await options.score(request.query, request.passage);
      const response: ScoreResponse = { id: request.id, score };
      output.write(`${JSON.stringify(response)}\n`);
    } catch (err) {
      const response: ErrorResponse = {
        id: request.id,
        error: err instanceof Error ? err.message : String(err),
      };
      output.write(`${JSON.stringify(response)}\n`);
    }
  }
}
