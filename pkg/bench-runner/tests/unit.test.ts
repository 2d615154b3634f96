import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { describe, expect, it } from "vitest";

import { makeFeeds, summarize } from "../src/bench";
import { compareReportSets } from "../src/compare";
import { SeededRng } from "../src/rand";
import { LatencyReport, REPORT_FIELDS, validateReport, writeReport } from "../src/report";

function mkReport(model: string, mean: number): LatencyReport {
  return {
    model_name: model,
    runtime: "exchange_runtime",
    warmup_iters: 10,
    timed_iters: 30,
    mean_ms: mean,
    median_ms: mean,
    p95_ms: mean,
    std_ms: 0,
    min_ms: mean,
    max_ms: mean,
    batch_size: 1,
    hardware: "test",
  };
}

describe("summary statistics", () => {
  it("computes mean/median/min/max on a known sample", () => {
    const stats = summarize([1, 2, 3, 4, 100]);
    expect(stats.mean).toBeCloseTo(22, 10);
    expect(stats.median).toBe(3);
    expect(stats.min).toBe(1);
    expect(stats.max).toBe(100);
  });

  it("uses linear-interpolation percentiles (numpy convention)", () => {
    // numpy.percentile([1..5], 95) == 4.8
    expect(summarize([1, 2, 3, 4, 5]).p95).toBeCloseTo(4.8, 10);
  });

  it("keeps min <= median <= p95 <= max", () => {
    const rng = new SeededRng(7);
    const times = Array.from({ length: 200 }, () => 1 + rng.next() * 5);
    const stats = summarize(times);
    expect(stats.min).toBeLessThanOrEqual(stats.median);
    expect(stats.median).toBeLessThanOrEqual(stats.p95);
    expect(stats.p95).toBeLessThanOrEqual(stats.max);
  });
});

describe("report schema", () => {
  it("matches the shared JSON schema's required field list", () => {
    const schemaPath = path.join(__dirname, "..", "..", "schemas", "latency_report.schema.json");
    const schema = JSON.parse(fs.readFileSync(schemaPath, "utf-8"));
    expect([...REPORT_FIELDS].sort()).toEqual([...schema.required].sort());
    expect(Object.keys(schema.properties).sort()).toEqual([...REPORT_FIELDS].sort());
  });

  it("rejects reports with missing or unknown fields", () => {
    const good = mkReport("m", 1.0);
    expect(() => validateReport(good)).not.toThrow();
    const { hardware, ...missing } = good;
    expect(() => validateReport(missing)).toThrow(/missing required field/);
    expect(() => validateReport({ ...good, extra: 1 })).toThrow(/unknown field/);
  });

  it("rejects timed_iters below 30 and p95 < median", () => {
    expect(() => validateReport({ ...mkReport("m", 1), timed_iters: 10 })).toThrow(/>= 30/);
    expect(() => validateReport({ ...mkReport("m", 1), p95_ms: 0.5 })).toThrow(/p95/);
  });

  it("round-trips through the writer byte-stably", () => {
    const dir = fs.mkdtempSync(path.join(os.tmpdir(), "fbr-"));
    const out = path.join(dir, "r.json");
    writeReport(mkReport("m", 1.25), out);
    const first = fs.readFileSync(out, "utf-8");
    writeReport(mkReport("m", 1.25), out);
    expect(fs.readFileSync(out, "utf-8")).toBe(first);
    expect(first.endsWith("\n")).toBe(true);
  });
});

describe("compare", () => {
  it("identical report sets agree with zero deltas", () => {
    const side = [mkReport("a", 1), mkReport("b", 2)];
    const result = compareReportSets(side, side);
    expect(result.ordering_agreement).toBe(true);
    expect(result.rows.every((r) => r.mean_delta_ms === 0)).toBe(true);
    expect(result.warnings).toEqual([]);
  });

  it("flags ordering disagreement", () => {
    const a = [mkReport("a", 1), mkReport("b", 2)];
    const b = [mkReport("a", 3), mkReport("b", 2)];
    expect(compareReportSets(a, b).ordering_agreement).toBe(false);
  });

  it("warns on disjoint model sets and emits empty rows", () => {
    const result = compareReportSets([mkReport("a", 1)], [mkReport("b", 1)]);
    expect(result.rows).toEqual([]);
    expect(result.warnings.length).toBe(1);
  });
});

describe("seeded inputs", () => {
  const sidecar = {
    model_name: "m",
    strategy: "late",
    token_vocab_size: 50,
    inputs: [
      { name: "tokens", dtype: "int64", shape: ["batch", 8] },
      { name: "mask", dtype: "float32", shape: ["batch", 8] },
      { name: "image", dtype: "float32", shape: ["batch", 3, 4, 4] },
    ],
    outputs: [{ name: "logits", dtype: "float32", shape: ["batch", 2] }],
  };

  it("is deterministic for a fixed seed", () => {
    const a = makeFeeds(sidecar as never, 42);
    const b = makeFeeds(sidecar as never, 42);
    expect(Array.from(a.image.data as Float32Array)).toEqual(
      Array.from(b.image.data as Float32Array)
    );
    expect((a.tokens.data as BigInt64Array)[0]).toBe((b.tokens.data as BigInt64Array)[0]);
  });

  it("respects the vocab bound and full-attention mask", () => {
    const feeds = makeFeeds(sidecar as never, 1);
    const tokens = feeds.tokens.data as BigInt64Array;
    for (const t of tokens) {
      expect(Number(t)).toBeGreaterThanOrEqual(0);
      expect(Number(t)).toBeLessThan(50);
    }
    const mask = feeds.mask.data as Float32Array;
    expect(mask.every((v) => v === 1)).toBe(true);
  });
});
