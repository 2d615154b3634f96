#!/usr/bin/env node
/** CLI:
 *   fusionbench-bench bench --graph G --warmup 50 --iters 200 --seed S --out R.json [--threads 1]
 *   fusionbench-bench compare A.json B.json
 * Exit codes: 0 success, 2 usage/validation error, 3 runtime failure.
 */

import { bench } from "./bench";
import { compareReportSets, loadReportSet } from "./compare";

interface Flags {
  [key: string]: string;
}

function parseFlags(argv: string[]): { flags: Flags; positional: string[] } {
  const flags: Flags = {};
  const positional: string[] = [];
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg.startsWith("--")) {
      const key = arg.slice(2);
      const value = argv[i + 1];
      if (value === undefined || value.startsWith("--")) {
        throw new UsageError(`flag --${key} needs a value`);
      }
      flags[key] = value;
      i++;
    } else {
      positional.push(arg);
    }
  }
  return { flags, positional };
}

class UsageError extends Error {}

function requiredFlag(flags: Flags, name: string): string {
  const value = flags[name];
  if (value === undefined) {
    throw new UsageError(`missing required flag --${name}`);
  }
  return value;
}

function intFlag(flags: Flags, name: string, fallback: number): number {
  if (flags[name] === undefined) return fallback;
  const value = Number.parseInt(flags[name], 10);
  if (!Number.isFinite(value)) {
    throw new UsageError(`flag --${name} must be an integer, got '${flags[name]}'`);
  }
  return value;
}

const USAGE = `usage:
  fusionbench-bench bench --graph G.onnx --warmup 50 --iters 200 --seed 0 --out R.json [--threads 1]
  fusionbench-bench compare A.json B.json` + "\n";

async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  try {
    if (command === "bench") {
      const { flags } = parseFlags(rest);
      const report = await bench({
        graph: requiredFlag(flags, "graph"),
        warmup: intFlag(flags, "warmup", 50),
        iters: intFlag(flags, "iters", 200),
        seed: intFlag(flags, "seed", 0),
        threads: intFlag(flags, "threads", 1),
        out: requiredFlag(flags, "out"),
        streams: intFlag(flags, "streams", 1),
      });
      process.stdout.write(
        `bench: ${report.model_name} mean=${report.mean_ms.toFixed(3)}ms ` +
        `median=${report.median_ms.toFixed(3)}ms p95=${report.p95_ms.toFixed(3)}ms ` +
        `-> ${flags.out}\n`
      );
      return 0;
    }
    if (command === "compare") {
      const { positional } = parseFlags(rest);
      if (positional.length !== 2) {
        throw new UsageError("compare needs exactly two report files or directories");
      }
      const result = compareReportSets(loadReportSet(positional[0]), loadReportSet(positional[1]));
      for (const row of result.rows) {
        process.stdout.write(
          `compare: ${row.model_name}: mean delta ${row.mean_delta_ms >= 0 ? "+" : ""}` +
          `${row.mean_delta_ms.toFixed(3)} ms\n`
        );
      }
      for (const warning of result.warnings) {
        process.stderr.write(`compare: WARNING ${warning}\n`);
      }
      process.stdout.write(
        `compare: ordering agreement: ${result.ordering_agreement} ` +
        `(${result.ordering_a.join(" < ")})\n`
      );
      return 0;
    }
    process.stderr.write(USAGE);
    return 2;
  } catch (err) {
    if (err instanceof UsageError) {
      process.stderr.write(`error: ${err.message}\n${USAGE}`);
      return 2;
    }
    const message = err instanceof Error ? err.message : String(err);
    // validation-style failures (preconditions, schema, signature) exit 2
    if (/required|mismatch|missing|unknown field|must be/.test(message)) {
      process.stderr.write(`error: ${message}\n`);
      return 2;
    }
    process.stderr.write(`error: ${message}\n`);
    return 3;
  }
}

main(process.argv.slice(2)).then((code) => {
  process.exitCode = code;
});
