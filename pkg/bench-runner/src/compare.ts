/** Delta table between two latency report sets plus an ordering-agreement
 * flag. Reports covering disjoint model sets produce a warning and an
 * empty delta table rather than an error. */

import * as fs from "fs";
import * as path from "path";

import { LatencyReport, readReport } from "./report";

export interface CompareRow {
  model_name: string;
  runtime_a: string;
  runtime_b: string;
  mean_delta_ms: number;
  median_delta_ms: number;
}

export interface CompareResult {
  rows: CompareRow[];
  ordering_agreement: boolean;
  ordering_a: string[];
  ordering_b: string[];
  warnings: string[];
}

export function loadReportSet(target: string): LatencyReport[] {
  const stat = fs.statSync(target);
  const files = stat.isDirectory()
    ? fs.readdirSync(target).filter((f) => f.endsWith(".json")).sort()
        .map((f) => path.join(target, f))
    : [target];
  if (files.length === 0) {
    throw new Error(`no report JSON files under ${target}`);
  }
  return files.map(readReport);
}

export function compareReportSets(a: LatencyReport[], b: LatencyReport[]): CompareResult {
  const byA = new Map(a.map((r) => [r.model_name, r]));
  const byB = new Map(b.map((r) => [r.model_name, r]));
  const shared = [...byA.keys()].filter((m) => byB.has(m)).sort();
  const warnings: string[] = [];
  const onlyA = [...byA.keys()].filter((m) => !byB.has(m)).sort();
  const onlyB = [...byB.keys()].filter((m) => !byA.has(m)).sort();
  if (onlyA.length || onlyB.length) {
    warnings.push(`disjoint models skipped: only_a=[${onlyA}] only_b=[${onlyB}]`);
  }
  const rows = shared.map((m) => {
    const ra = byA.get(m)!;
    const rb = byB.get(m)!;
    return {
      model_name: m,
      runtime_a: ra.runtime,
      runtime_b: rb.runtime,
      mean_delta_ms: rb.mean_ms - ra.mean_ms,
      median_delta_ms: rb.median_ms - ra.median_ms,
    };
  });
  const orderBy = (side: Map<string, LatencyReport>) =>
    [...shared].sort((x, y) => side.get(x)!.mean_ms - side.get(y)!.mean_ms);
  const orderingA = orderBy(byA);
  const orderingB = orderBy(byB);
  return {
    rows,
    ordering_agreement: JSON.stringify(orderingA) === JSON.stringify(orderingB),
    ordering_a: orderingA,
    ordering_b: orderingB,
    warnings,
  };
}
