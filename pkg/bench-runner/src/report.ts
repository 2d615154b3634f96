/** LatencyReport: the JSON report schema shared with the training stack
 * (schemas/latency_report.schema.json in the repository root). Field set
 * and types must stay byte-compatible with the Python emitter. */

import * as fs from "fs";
import * as path from "path";

export type RuntimeTag = "in_process" | "exchange_runtime" | "optimized_runtime";

export interface LatencyReport {
  model_name: string;
  runtime: RuntimeTag;
  warmup_iters: number;
  timed_iters: number;
  mean_ms: number;
  median_ms: number;
  p95_ms: number;
  std_ms: number;
  min_ms: number;
  max_ms: number;
  batch_size: number;
  hardware: string;
}

export const REPORT_FIELDS: ReadonlyArray<keyof LatencyReport> = [
  "model_name",
  "runtime",
  "warmup_iters",
  "timed_iters",
  "mean_ms",
  "median_ms",
  "p95_ms",
  "std_ms",
  "min_ms",
  "max_ms",
  "batch_size",
  "hardware",
];

const RUNTIME_TAGS = new Set(["in_process", "exchange_runtime", "optimized_runtime"]);

export function validateReport(payload: unknown): LatencyReport {
  if (typeof payload !== "object" || payload === null) {
    throw new Error("latency report must be a JSON object");
  }
  const record = payload as Record<string, unknown>;
  for (const field of REPORT_FIELDS) {
    if (!(field in record)) {
      throw new Error(`latency report missing required field '${field}'`);
    }
  }
  for (const key of Object.keys(record)) {
    if (!REPORT_FIELDS.includes(key as keyof LatencyReport)) {
      throw new Error(`latency report has unknown field '${key}'`);
    }
  }
  if (typeof record.model_name !== "string" || typeof record.hardware !== "string") {
    throw new Error("model_name and hardware must be strings");
  }
  if (!RUNTIME_TAGS.has(record.runtime as string)) {
    throw new Error(`runtime must be one of ${[...RUNTIME_TAGS].join(", ")}`);
  }
  for (const field of ["warmup_iters", "timed_iters", "mean_ms", "median_ms", "p95_ms",
                       "std_ms", "min_ms", "max_ms", "batch_size"] as const) {
    const value = record[field];
    if (typeof value !== "number" || !Number.isFinite(value)) {
      throw new Error(`field '${field}' must be a finite number`);
    }
  }
  const report = record as unknown as LatencyReport;
  if (report.timed_iters < 30) {
    throw new Error(`timed_iters >= 30 required, got ${report.timed_iters}`);
  }
  if (report.p95_ms < report.median_ms) {
    throw new Error("latency stats violate p95 >= median");
  }
  return report;
}

export function writeReport(report: LatencyReport, outPath: string): void {
  validateReport(report);
  // stable key order + trailing newline, matching the Python writer
  const ordered: Record<string, unknown> = {};
  for (const key of [...REPORT_FIELDS].sort()) {
    ordered[key] = report[key];
  }
  fs.mkdirSync(path.dirname(path.resolve(outPath)), { recursive: true });
  fs.writeFileSync(outPath, JSON.stringify(ordered, null, 2) + "\n");
}

export function readReport(file: string): LatencyReport {
  return validateReport(JSON.parse(fs.readFileSync(file, "utf-8")));
}
