#!/usr/bin/env node
/**
 * Sidecar scorer entry point.
 *
 *   telerank-sidecar --mode stdio --model stub
 *   telerank-sidecar --mode tcp --port 7070 --model xenova:Xenova/ms-marco-MiniLM-L-6-v2
 *
 * stdio mode serves one connection over stdin/stdout and exits 0 at EOF.
 * tcp mode accepts connections until killed, one protocol session each.
 */

import net from "node:net";
import process from "node:process";

import { loadCrossEncoder } from "./model.js";
import { serveLines, type ScoreFn } from "./protocol.js";
import { stubScore } from "./stub.js";

const VERSION = "0.1.0";
const DEFAULT_MAX_BATCH = 64;

interface Args {
  mode: "stdio" | "tcp";
  model: string;
  port: number;
  maxBatch: number;
}

function parseArgs(argv: string[]): Args {
  const args: Args = { mode: "stdio", model: "stub", port: 7070, maxBatch: DEFAULT_MAX_BATCH };
  for (let i = 0; i < argv.length; i += 1) {
    const flag = argv[i];
    const value = argv[i + 1];
    switch (flag) {
      case "--mode":
        if (value !== "stdio" && value !== "tcp") {
          throw new Error(`--mode must be stdio or tcp, got ${value}`);
        }
        args.mode = value;
        i += 1;
        break;
      case "--model":
        args.model = value ?? "stub";
        i += 1;
        break;
      case "--port":
        args.port = Number(value);
        i += 1;
        break;
      case "--max-batch":
        args.maxBatch = Number(value);
        i += 1;
        break;
      case "--help":
        process.stdout.write(
          "usage: telerank-sidecar [--mode stdio|tcp] [--model stub|xenova:<id>]" +
          " [--port N] [--max-batch N]\n",
        );
        process.exit(0);
        break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  if (!Number.isInteger(args.maxBatch) || args.maxBatch < 1) {
    throw new Error("--max-batch must be a positive integer");
  }
  return args;
}

async function buildScorer(model: string): Promise<{ name: string; score: ScoreFn }> {
  if (model === "stub") {
    return { name: "stub-scorer", score: stubScore };
  }
  if (model.startsWith("xenova:")) {
    const modelId = model.slice("xenova:".length);
    return { name: `cross-encoder:${modelId}`, score: await loadCrossEncoder(modelId) };
  }
  throw new Error(`unknown model ${model}; expected stub or xenova:<model-id>`);
}

async function main(): Promise<number> {
  const args = parseArgs(process.argv.slice(2));
  const scorer = await buildScorer(args.model);
  const options = {
    name: scorer.name,
    version: VERSION,
    maxBatch: args.maxBatch,
    score: scorer.score,
  };

  if (args.mode === "stdio") {
    await serveLines(process.stdin, process.stdout, options);
    return 0;
  }

  const server = net.createServer((socket) => {
    socket.on("error", () => socket.destroy());
    void serveLines(socket, socket, options).then(() => socket.end());
  });
  await new Promise<void>((resolve) => server.listen(args.port, "127.0.0.1", resolve));
  const address = server.address() as net.AddressInfo;
  process.stderr.write(`PORT ${address.port}\n`);
  await new Promise<void>((resolve) => server.on("close", resolve));
  return 0;
}

main()
  .then((code) => process.exit(code))
  .catch((err) => {
    process.stderr.write(`error: ${err instanceof Error ? err.message : err}\n`);
    process.exit(1);
  });
