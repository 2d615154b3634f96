/** Secondary acceptance: benching the three exported toy graphs reproduces
 * the in-process latency ordering (early < intermediate < late), the
 * reports are schema-identical to the training stack's, and `compare`
 * flags ordering agreement. Graphs and in-process reports are produced
 * through the primary component's CLI - its external interface. */

import { execFileSync } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { beforeAll, describe, expect, it } from "vitest";

import { bench } from "../src/bench";
import { compareReportSets, loadReportSet } from "../src/compare";
import { readReport, REPORT_FIELDS } from "../src/report";

const WORK = fs.mkdtempSync(path.join(os.tmpdir(), "fbr-accept-"));
const RUNS = path.join(WORK, "runs");
const CONFIG = path.join(WORK, "bench.yaml");
const TS_REPORTS = path.join(WORK, "ts-reports");
const STAGES = ["early", "intermediate", "late"] as const;

// the latency benchmark trio: reference depths, matmul-bound encoder layers
const CONFIG_YAML = `
dataset:
  kind: synth
  synth_size: 32
text:
  num_layers: 12
  ff_dim: 1536
vision:
  kind: cnn
  stride_profile: fast
eval:
  warmup: 15
  iters: 60
output_dir: ${RUNS}
`;

function cli(...args: string[]): string {
  return execFileSync("python3", ["-m", "fusionbench.cli", ...args], {
    encoding: "utf-8",
    timeout: 600_000,
  });
}

function runDir(): string {
  const entries = fs.readdirSync(RUNS);
  expect(entries.length).toBe(1);
  return path.join(RUNS, entries[0]);
}

beforeAll(() => {
  fs.writeFileSync(CONFIG, CONFIG_YAML);
  fs.mkdirSync(TS_REPORTS, { recursive: true });
  for (const stage of STAGES) {
    cli("export", "--config", CONFIG, "--stage", stage, "--init", "--no-verify");
  }
  cli("bench", "--config", CONFIG, "--target", "live", "--all", "--init");
}, 600_000);

describe("bench-runner on the exported trio", () => {
  it("produces schema-identical reports with the exchange_runtime tag", async () => {
    for (const stage of STAGES) {
      const graph = path.join(runDir(), "exports", `${stage}_cnn.onnx`);
      const out = path.join(TS_REPORTS, `latency_${stage}_cnn_exchange_runtime.json`);
      const report = await bench({
        graph,
        warmup: 15,
        iters: 60,
        seed: 0,
        threads: 1,
        out,
      });
      expect(report.runtime).toBe("exchange_runtime");
      expect(report.model_name).toBe(`${stage}_cnn`);
      const reread = readReport(out);
      expect(Object.keys(reread).sort()).toEqual([...REPORT_FIELDS].sort());
    }
  }, 600_000);

  it("reproduces the in-process latency ordering early < intermediate < late", () => {
    const mean = (stage: string) =>
      readReport(path.join(TS_REPORTS, `latency_${stage}_cnn_exchange_runtime.json`)).mean_ms;
    expect(mean("early")).toBeLessThan(mean("intermediate"));
    expect(mean("intermediate")).toBeLessThan(mean("late"));
  });

  it("compare flags ordering agreement with the in-process harness", () => {
    const inProcess = loadReportSet(path.join(runDir(), "reports")).filter((r) =>
      STAGES.some((s) => r.model_name === `${s}_cnn`)
    );
    const exchange = loadReportSet(TS_REPORTS);
    const result = compareReportSets(inProcess, exchange);
    expect(result.rows.length).toBe(3);
    expect(result.ordering_agreement).toBe(true);
    expect(result.ordering_a).toEqual(["early_cnn", "intermediate_cnn", "late_cnn"]);
  });

  it("rejects a graph whose sidecar signature disagrees", async () => {
    const graph = path.join(runDir(), "exports", "late_cnn.onnx");
    const tampered = path.join(WORK, "tampered.onnx");
    fs.copyFileSync(graph, tampered);
    const meta = JSON.parse(
      fs.readFileSync(graph.replace(/\.onnx$/, ".meta.json"), "utf-8")
    );
    meta.inputs = meta.inputs.filter((i: { name: string }) => i.name !== "image");
    fs.writeFileSync(tampered.replace(/\.onnx$/, ".meta.json"), JSON.stringify(meta));
    await expect(
      bench({ graph: tampered, warmup: 15, iters: 60, seed: 0, threads: 1,
              out: path.join(WORK, "t.json") })
    ).rejects.toThrow(/signature mismatch: expected \[mask, tokens\], found \[image, mask, tokens\]/);
  });
});
