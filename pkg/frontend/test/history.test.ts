import { describe, expect, it } from "vitest";

import type { JobDoc } from "../src/api.js";
import {
  appendRun,
  compareRuns,
  formatPercent,
  isPolaritySwap,
  sortRows,
  type RunRecord,
} from "../src/history.js";
import { fixture } from "./helpers.js";

const fwd = fixture<JobDoc>("job_fwd_done.json"); // C2-,C4+  3.0 mA
const rev = fixture<JobDoc>("job_rev_done.json"); // C4-,C2+  3.0 mA
const lo = fixture<JobDoc>("job_lo_done.json"); // C4-,C2+  1.6 mA
const neuron = fixture<JobDoc>("job_neuron_done.json");

function build(...jobs: JobDoc[]): RunRecord[] {
  let h: RunRecord[] = [];
  for (const j of jobs) h = appendRun(h, j);
  return h;
}

describe("run records", () => {
  it("copies percentages and statuses verbatim from the report", () => {
    const [run] = build(fwd);
    expect(run!.label).toBe("C2-,C4+");
    expect(run!.model).toBe("static");
    expect(run!.percents).toEqual([
      { tract: "crossing", percent: 25.0 },
      { tract: "ascending", percent: 25.0 },
    ]);
    expect(run!.statuses["crossing"]).toEqual([1, 1, 2, 2, 2, 2, 2, 2]);
    expect(run!.statuses["ascending"]).toEqual([3, 3, 1, 1, 2, 2, 2, 2]);
  });

  it("never mutates the history it was given", () => {
    const first = build(fwd);
    const second = appendRun(first, rev);
    expect(first).toHaveLength(1);
    expect(second).toHaveLength(2);
    expect(second[0]).toBe(first[0]);
  });

  it("refuses unfinished jobs", () => {
    const running = fixture<JobDoc>("job_neuron_running.json");
    expect(() => appendRun([], running)).toThrow(/finished/);
  });
});

describe("swapped-polarity badge", () => {
  it("recognizes a swap with identical results", () => {
    const h = build(fwd, rev);
    expect(h[0]!.swappedTwin).toBeNull();
    expect(h[1]!.swappedTwin).toBe(0);
  });

  it("ignores a swap at a different amplitude", () => {
    const h = build(fwd, lo);
    expect(h[1]!.swappedTwin).toBeNull();
  });

  it("requires the same model", () => {
    // a swapped run with identical numbers, but from a different model:
    // the model gate alone must withhold the badge
    const other = structuredClone(rev);
    other.model = "neuron-QS";
    other.report!.model = "neuron-QS";
    const h = build(fwd, other);
    expect(h[1]!.swappedTwin).toBeNull();
  });

  it("compares polarity as sets", () => {
    const a = fwd.report!.setting;
    const b = rev.report!.setting;
    expect(isPolaritySwap(a, b)).toBe(true);
    expect(isPolaritySwap(a, a)).toBe(false);
    expect(isPolaritySwap(a, lo.report!.setting)).toBe(false);
  });
});

describe("comparison table", () => {
  it("needs at least two selected runs", () => {
    const h = build(fwd);
    expect(() => compareRuns(h, [0])).toThrow(/at least two/);
    expect(() => compareRuns(h, [])).toThrow(/at least two/);
  });

  it("lines tracts up as columns and diffs exactly two runs", () => {
    const h = build(fwd, lo);
    const t = compareRuns(h, [0, 1]);
    expect(t.tracts).toEqual(["crossing", "ascending"]);
    expect(t.rows.map((r) => r.label)).toEqual(["C2-,C4+", "C4-,C2+ @1.6mA"]);
    expect(t.rows[0]!.percents).toEqual([25.0, 25.0]);
    expect(t.rows[1]!.percents).toEqual([0.0, 12.5]);
    expect(t.deltas).toEqual([25.0, 12.5]);
  });

  it("drops the diff column beyond two runs", () => {
    const h = build(fwd, rev, lo);
    const t = compareRuns(h, [0, 1, 2]);
    expect(t.rows).toHaveLength(3);
    expect(t.deltas).toBeNull();
  });

  it("sorts by label, model, or any percent column", () => {
    const h = build(fwd, lo, neuron);
    const t = compareRuns(h, [0, 1, 2]);
    expect(sortRows(t, "label").rows.map((r) => r.seq)).toEqual([0, 2, 1]);
    expect(sortRows(t, "model").rows.map((r) => r.seq)).toEqual([2, 0, 1]);
    expect(sortRows(t, 1).rows.map((r) => r.percents[1])).toEqual([
      12.5, 25.0, 37.5,
    ]);
    expect(sortRows(t, 1, true).rows.map((r) => r.percents[1])).toEqual([
      37.5, 25.0, 12.5,
    ]);
  });

  it("keeps ties in submission order", () => {
    const h = build(fwd, rev);
    const t = compareRuns(h, [0, 1]);
    // both runs show 25.00 everywhere; sorting by a column must not flip them
    expect(sortRows(t, 0).rows.map((r) => r.seq)).toEqual([0, 1]);
  });

  it("keeps the diff only while the pair order survives sorting", () => {
    const h = build(fwd, lo);
    const t = compareRuns(h, [0, 1]);
    expect(sortRows(t, 1).rows.map((r) => r.seq)).toEqual([1, 0]);
    expect(sortRows(t, 1).deltas).toBeNull();
    expect(sortRows(t, 1, true).deltas).toEqual([25.0, 12.5]);
  });
});

describe("percent formatting", () => {
  it("prints two decimals, like the exported tables", () => {
    expect(formatPercent(25.0)).toBe("25.00");
    expect(formatPercent(12.5)).toBe("12.50");
    expect(formatPercent(0.0)).toBe("0.00");
    expect(formatPercent(null)).toBe("-");
  });
});
