/** Steady-state latency benchmark over an exported exchange graph:
 * seed-fixed inputs built from the .meta.json sidecar signature, warmup
 * iterations discarded, timed iterations on a single inference stream,
 * statistics written in the shared LatencyReport schema. */

import * as fs from "fs";
import * as os from "os";
import * as ort from "onnxruntime-node";

import { SeededRng } from "./rand";
import { LatencyReport, writeReport } from "./report";

export interface BenchConfig {
  graph: string;
  warmup: number;
  iters: number;
  seed: number;
  threads: number;
  out: string;
  /** >1 issues concurrent inferences to measure throughput only; latency
   * reports always come from the single-stream path. */
  streams?: number;
}

interface SignatureEntry {
  name: string;
  dtype: string;
  shape: Array<number | string>;
}

interface Sidecar {
  model_name: string;
  strategy: string;
  token_vocab_size?: number;
  inputs: SignatureEntry[];
  outputs: SignatureEntry[];
}

export const MIN_TIMED_ITERS = 30;
export const MIN_WARMUP = 10;

export function sidecarPath(graphPath: string): string {
  return graphPath.replace(/\.onnx$/, ".meta.json");
}

export function loadSidecar(graphPath: string): Sidecar {
  const metaPath = sidecarPath(graphPath);
  if (!fs.existsSync(metaPath)) {
    throw new Error(`missing sidecar ${metaPath} next to ${graphPath}`);
  }
  const sidecar = JSON.parse(fs.readFileSync(metaPath, "utf-8")) as Sidecar;
  if (!Array.isArray(sidecar.inputs) || sidecar.inputs.length === 0) {
    throw new Error(`sidecar ${metaPath} declares no inputs`);
  }
  return sidecar;
}

function concreteShape(shape: Array<number | string>, batch: number): number[] {
  return shape.map((d) => (typeof d === "string" ? batch : d));
}

export function makeFeeds(
  sidecar: Sidecar,
  seed: number,
  batch = 1
): Record<string, ort.Tensor> {
  const rng = new SeededRng(seed);
  const feeds: Record<string, ort.Tensor> = {};
  for (const input of sidecar.inputs) {
    const dims = concreteShape(input.shape, batch);
    const size = dims.reduce((a, b) => a * b, 1);
    if (input.dtype === "int64") {
      const vocab = sidecar.token_vocab_size ?? 100;
      const data = new BigInt64Array(size);
      for (let i = 0; i < size; i++) data[i] = BigInt(rng.int(vocab));
      feeds[input.name] = new ort.Tensor("int64", data, dims);
    } else if (input.dtype === "float32") {
      const data = new Float32Array(size);
      if (input.name === "mask") {
        data.fill(1); // benchmark at full attention occupancy
      } else {
        for (let i = 0; i < size; i++) data[i] = rng.normal();
      }
      feeds[input.name] = new ort.Tensor("float32", data, dims);
    } else {
      throw new Error(`unsupported input dtype '${input.dtype}' for ${input.name}`);
    }
  }
  return feeds;
}

export function checkSignature(session: ort.InferenceSession, sidecar: Sidecar): void {
  const expected = sidecar.inputs.map((i) => i.name).sort();
  const found = [...session.inputNames].sort();
  if (JSON.stringify(expected) !== JSON.stringify(found)) {
    throw new Error(
      `graph input signature mismatch: expected [${expected.join(", ")}], found [${found.join(", ")}]`
    );
  }
}

function percentile(sorted: number[], q: number): number {
  // linear interpolation, matching numpy's default
  const pos = (sorted.length - 1) * q;
  const lo = Math.floor(pos);
  const hi = Math.ceil(pos);
  if (lo === hi) return sorted[lo];
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo);
}

export function summarize(timesMs: number[]): {
  mean: number; median: number; p95: number; std: number; min: number; max: number;
} {
  const sorted = [...timesMs].sort((a, b) => a - b);
  const mean = timesMs.reduce((a, b) => a + b, 0) / timesMs.length;
  const variance = timesMs.reduce((a, b) => a + (b - mean) * (b - mean), 0) / timesMs.length;
  return {
    mean,
    median: percentile(sorted, 0.5),
    p95: percentile(sorted, 0.95),
    std: Math.sqrt(variance),
    min: sorted[0],
    max: sorted[sorted.length - 1],
  };
}

async function measureThroughput(
  session: ort.InferenceSession,
  feeds: Record<string, ort.Tensor>,
  streams: number,
  iters: number
): Promise<void> {
  const t0 = process.hrtime.bigint();
  let issued = 0;
  while (issued < iters) {
    const wave = Math.min(streams, iters - issued);
    await Promise.all(Array.from({ length: wave }, () => session.run(feeds)));
    issued += wave;
  }
  const seconds = Number(process.hrtime.bigint() - t0) / 1e9;
  process.stdout.write(
    `throughput (${streams} streams): ${(issued / seconds).toFixed(2)} inferences/s ` +
    `over ${issued} runs\n`
  );
}

export function hardwareDescriptor(): string {
  const cpu = os.cpus()[0]?.model ?? "unknown-cpu";
  return `${os.arch()} ${os.platform()} ${cpu} node-${process.versions.node} ort-${ortVersion()}`;
}

function ortVersion(): string {
  const env = ort.env as unknown as { versions?: Record<string, string> };
  return env.versions?.node ?? "unknown";
}

export async function bench(config: BenchConfig): Promise<LatencyReport> {
  if (config.iters < MIN_TIMED_ITERS) {
    throw new Error(`timed iterations >= ${MIN_TIMED_ITERS} required, got ${config.iters}`);
  }
  if (config.warmup < MIN_WARMUP) {
    throw new Error(`warmup iterations >= ${MIN_WARMUP} required, got ${config.warmup}`);
  }
  if (!fs.existsSync(config.graph)) {
    throw new Error(`graph file not found: ${config.graph}`);
  }
  const sidecar = loadSidecar(config.graph);
  const session = await ort.InferenceSession.create(config.graph, {
    intraOpNumThreads: config.threads,
    interOpNumThreads: 1,
    executionProviders: ["cpu"],
  });
  checkSignature(session, sidecar);
  const feeds = makeFeeds(sidecar, config.seed, 1);

  // single inference stream: every run is awaited before the next starts
  for (let i = 0; i < config.warmup; i++) {
    await session.run(feeds);
  }
  if (config.streams && config.streams > 1) {
    await measureThroughput(session, feeds, config.streams, config.iters);
  }
  const timesMs: number[] = new Array(config.iters);
  for (let i = 0; i < config.iters; i++) {
    const t0 = process.hrtime.bigint();
    await session.run(feeds);
    timesMs[i] = Number(process.hrtime.bigint() - t0) / 1e6;
  }
  if (!timesMs.every((t) => Number.isFinite(t))) {
    throw new Error("non-finite timing recorded");
  }
  const stats = summarize(timesMs);
  const report: LatencyReport = {
    model_name: sidecar.model_name ?? sidecar.strategy,
    runtime: "exchange_runtime",
    warmup_iters: config.warmup,
    timed_iters: config.iters,
    mean_ms: stats.mean,
    median_ms: stats.median,
    p95_ms: stats.p95,
    std_ms: stats.std,
    min_ms: stats.min,
    max_ms: stats.max,
    batch_size: 1,
    hardware: hardwareDescriptor(),
  };
  writeReport(report, config.out);
  return report;
}
