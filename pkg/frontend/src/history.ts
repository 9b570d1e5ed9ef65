/** Run history and cross-run comparison.
 *
 * History is append-only for the session: records are never edited or
 * reordered, and every number in a record is copied verbatim from a
 * backend response.
 */

import type { JobDoc, ReportDoc, ReportSettingDoc } from "./api.js";

export interface RunRecord {
  /** position in the session history, 0-based */
  seq: number;
  jobId: string;
  label: string;
  model: string;
  setting: ReportSettingDoc;
  /** per-tract percentages, verbatim from the report */
  percents: { tract: string; percent: number }[];
  /** per-tract status codes, verbatim from the report */
  statuses: Record<string, number[]>;
  /** seq of the earlier run this one equals under polarity swap, if any */
  swappedTwin: number | null;
}

function sameSet(a: string[], b: string[]): boolean {
  const x = [...a].sort();
  const y = [...b].sort();
  return x.length === y.length && x.every((v, i) => v === y[i]);
}

/** True when `b` is `a` with cathodes and anodes exchanged and every
 * other parameter unchanged. */
export function isPolaritySwap(
  a: ReportSettingDoc,
  b: ReportSettingDoc,
): boolean {
  return (
    sameSet(a.cathodes, b.anodes) &&
    sameSet(a.anodes, b.cathodes) &&
    a.amplitude_ma === b.amplitude_ma &&
    a.frequency_hz === b.frequency_hz &&
    a.pulse_width_us === b.pulse_width_us &&
    a.pulse_shape === b.pulse_shape
  );
}

function sameResults(a: RunRecord, report: ReportDoc): boolean {
  if (a.percents.length !== report.tracts.length) return false;
  return report.tracts.every((t, i) => {
    const p = a.percents[i]!;
    const statuses = a.statuses[t.name];
    return (
      p.tract === t.name &&
      p.percent === t.activation_percent &&
      statuses !== undefined &&
      statuses.length === t.statuses.length &&
      statuses.every((s, j) => s === t.statuses[j])
    );
  });
}

/** Append a finished job to the history; never mutates the input array.
 *
 * The "identical to swapped-polarity run" badge appears when an earlier
 * run of the same model used the swapped contact roles and the backend
 * returned exactly the same percentages and statuses.
 */
export function appendRun(history: RunRecord[], job: JobDoc): RunRecord[] {
  const report = job.report;
  if (job.status !== "done" || !report) {
    throw new Error(`only finished jobs join the history, got '${job.status}'`);
  }
  const record: RunRecord = {
    seq: history.length,
    jobId: job.job_id,
    label: report.setting.label,
    model: report.model,
    setting: report.setting,
    percents: report.tracts.map((t) => ({
      tract: t.name,
      percent: t.activation_percent,
    })),
    statuses: Object.fromEntries(
      report.tracts.map((t) => [t.name, [...t.statuses]]),
    ),
    swappedTwin: null,
  };
  for (const prior of history) {
    if (
      prior.model === record.model &&
      isPolaritySwap(prior.setting, record.setting) &&
      sameResults(prior, report)
    ) {
      record.swappedTwin = prior.seq;
      break;
    }
  }
  return [...history, record];
}

// --- side-by-side comparison ----------------------------------------------

export interface ComparisonTable {
  /** tract names, the row axis */
  tracts: string[];
  rows: {
    seq: number;
    label: string;
    model: string;
    /** percent per tract, aligned with `tracts`; null when the run
     * lacks that tract */
    percents: (number | null)[];
  }[];
  /** per-tract |delta|, only when exactly two runs are compared */
  deltas: (number | null)[] | null;
}

/** Build the side-by-side table for the selected runs (≥ 2). */
export function compareRuns(
  history: RunRecord[],
  selected: number[],
): ComparisonTable {
  if (selected.length < 2) {
    throw new Error("comparison needs at least two selected runs");
  }
  const records = selected.map((seq) => {
    const r = history.find((h) => h.seq === seq);
    if (!r) throw new Error(`no run with seq ${seq}`);
    return r;
  });
  const tracts: string[] = [];
  for (const r of records) {
    for (const p of r.percents) {
      if (!tracts.includes(p.tract)) tracts.push(p.tract);
    }
  }
  const rows = records.map((r) => ({
    seq: r.seq,
    label: r.label,
    model: r.model,
    percents: tracts.map(
      (t) => r.percents.find((p) => p.tract === t)?.percent ?? null,
    ),
  }));
  let deltas: (number | null)[] | null = null;
  if (rows.length === 2) {
    deltas = tracts.map((_, i) => {
      const a = rows[0]!.percents[i];
      const b = rows[1]!.percents[i];
      return a === null || b === null || a === undefined || b === undefined
        ? null
        : Math.abs(a - b);
    });
  }
  return { tracts, rows, deltas };
}

/** Reorder table rows by a column; ties keep submission order. */
export function sortRows(
  table: ComparisonTable,
  by: "label" | "model" | number,
  descending = false,
): ComparisonTable {
  const rows = [...table.rows].sort((a, b) => {
    let cmp: number;
    if (by === "label") cmp = a.label.localeCompare(b.label);
    else if (by === "model") cmp = a.model.localeCompare(b.model);
    else {
      const av = a.percents[by];
      const bv = b.percents[by];
      cmp = (av ?? -1) - (bv ?? -1);
    }
    return (descending ? -cmp : cmp) || a.seq - b.seq;
  });
  // deltas are pairwise; they only survive an order-preserving sort
  const deltas =
    table.rows.length === 2 &&
    rows[0]!.seq === table.rows[0]!.seq &&
    rows[1]!.seq === table.rows[1]!.seq
      ? table.deltas
      : null;
  return { ...table, rows, deltas };
}

/** Display form: percentages with two decimals, like the shipped reports. */
export function formatPercent(p: number | null): string {
  return p === null ? "-" : p.toFixed(2);
}
