/** Contract tests against recorded backend traffic.
 *
 * Every fixture under fixtures/recorded/ was captured from a live
 * service session; the cli_report_*.json and cli_comparison.dsv files
 * are the artifacts the command-line runner wrote for the same
 * settings. The tests walk the real client code path (POST, poll, GET)
 * and then check that what the UI would display matches those artifacts
 * digit for digit. The UI computes nothing; it can only agree.
 */

import { describe, expect, it } from "vitest";

import {
  ApiClient,
  ApiError,
  pollJob,
  type JobDoc,
  type ReportDoc,
  type SceneDoc,
  type SettingsDoc,
  type SliceDoc,
} from "../src/api.js";
import { addressableNames, validateEntry } from "../src/draft.js";
import {
  appendRun,
  compareRuns,
  formatPercent,
  type RunRecord,
} from "../src/history.js";
import { fixture, fixtureText, recordedFetch } from "./helpers.js";

interface CliReport extends ReportDoc {
  kind: string;
}

const sceneDoc = fixture<SceneDoc>("scene.json");
const settingsDoc = fixture<SettingsDoc>("settings.json");

function staticClient(): ApiClient {
  return new ApiClient(
    "",
    recordedFetch({
      "GET /api/scene": { status: 200, body: sceneDoc },
      "GET /api/settings": { status: 200, body: settingsDoc },
      // one POST per recorded run, consumed in submission order
      "POST /api/simulate": [
        { status: 200, body: fixture("job_fwd.json") },
        { status: 200, body: fixture("job_rev.json") },
        { status: 200, body: fixture("job_lo.json") },
      ],
      "GET /api/jobs/j-558ed6269ea1": {
        status: 200,
        body: fixture("job_fwd_done.json"),
      },
      "GET /api/jobs/j-2a8d39148158": {
        status: 200,
        body: fixture("job_rev_done.json"),
      },
      "GET /api/jobs/j-6daba9b4046c": {
        status: 200,
        body: fixture("job_lo_done.json"),
      },
      "GET /api/field/j-558ed6269ea1/slice?plane=xy": {
        status: 200,
        body: fixture("slice_fwd_xy.json"),
      },
    }),
  );
}

/** The three recorded runs: a polarity pair plus a lower amplitude. */
const RECORDED = [
  { post: "C2-,C4+", cli: "cli_report_fwd.json" },
  { post: "C4-,C2+", cli: "cli_report_rev.json" },
  { post: "C4-,C2+ @1.6mA", cli: "cli_report_lo.json" },
] as const;

async function replayAll(client: ApiClient): Promise<RunRecord[]> {
  let history: RunRecord[] = [];
  for (const { post } of RECORDED) {
    const entry = settingsDoc.settings.find((s) => s.label === post)!;
    const posted = await client.simulate({ model: "static", setting: entry });
    const job = await client.getJob(posted.job_id);
    history = appendRun(history, job);
  }
  return history;
}

describe("scene and catalog documents", () => {
  it("describe the demo lead and tissue grid", async () => {
    const scene = await staticClient().getScene();
    expect(scene.lead.contacts).toHaveLength(8);
    expect(Object.keys(scene.lead.groups)).toHaveLength(10);
    expect(scene.grid.shape).toEqual([60, 60, 60]);
    expect(scene.tracts.map((t) => t.name)).toEqual(["crossing", "ascending"]);
  });

  it("list the preset settings and the three models", async () => {
    const catalog = await staticClient().getSettings();
    expect(catalog.settings).toHaveLength(5);
    expect(catalog.models).toEqual(["static", "neuron-QS", "neuron-EQS"]);
  });

  it("presets all pass the client-side validator", () => {
    const names = addressableNames(sceneDoc);
    for (const preset of settingsDoc.settings) {
      expect(validateEntry(preset, names).ok).toBe(true);
    }
  });
});

describe("displayed numbers vs the command-line artifacts", () => {
  it("shows exactly the percentages the runner reported", async () => {
    const history = await replayAll(staticClient());
    expect(history).toHaveLength(3);
    for (const [i, { cli }] of RECORDED.entries()) {
      const cliReport = fixture<CliReport>(cli);
      const run = history[i]!;
      expect(run.percents.map((p) => p.tract)).toEqual(
        cliReport.tracts.map((t) => t.name),
      );
      // exact float equality: both sides serialized the same numbers
      expect(run.percents.map((p) => p.percent)).toEqual(
        cliReport.tracts.map((t) => t.activation_percent),
      );
      for (const tract of cliReport.tracts) {
        expect(run.statuses[tract.name]).toEqual(tract.statuses);
      }
    }
  });

  it("formats percentages identically to the exported table", async () => {
    const rows = new Map(
      fixtureText("cli_comparison.dsv")
        .trim()
        .split("\n")
        .slice(1)
        .map((line) => {
          const [label, ...cells] = line.split("\t");
          return [label!, cells] as const;
        }),
    );
    const history = await replayAll(staticClient());
    for (const run of history) {
      const expected = rows.get(run.label);
      expect(expected).toBeDefined();
      expect(run.percents.map((p) => formatPercent(p.percent))).toEqual(
        expected,
      );
    }
  });

  it("flags the polarity pair as identical, but not the 1.6 mA run", async () => {
    const history = await replayAll(staticClient());
    expect(history.map((r) => r.swappedTwin)).toEqual([null, 0, null]);
  });
});

describe("job lifecycle", () => {
  it("polls a queued neuron job through running to done", async () => {
    const client = new ApiClient(
      "",
      recordedFetch({
        "POST /api/simulate": {
          status: 200,
          body: fixture("job_neuron_post.json"),
        },
        "GET /api/jobs/j-3e175b9482b5": [
          { status: 200, body: fixture("job_neuron_running.json") },
          { status: 200, body: fixture("job_neuron_running.json") },
          { status: 200, body: fixture("job_neuron_done.json") },
        ],
      }),
    );
    const posted = await client.simulate({
      model: "neuron-QS",
      setting: { contacts: "C2-,C4+", amplitude_ma: 3.0 },
    });
    expect(posted.status).toBe("queued");

    const seen: string[] = [];
    let naps = 0;
    const job = await pollJob(
      client,
      posted.job_id,
      (j) => seen.push(j.status),
      1000,
      () => {
        naps += 1;
        return Promise.resolve();
      },
    );
    expect(seen).toEqual(["running", "running", "done"]);
    expect(naps).toBe(2);
    expect(job.report!.tracts.map((t) => t.activation_percent)).toEqual([
      25.0, 37.5,
    ]);
  });

  it("surfaces a backend rejection verbatim", async () => {
    const client = new ApiClient(
      "",
      recordedFetch({
        "POST /api/simulate": {
          status: 422,
          body: fixture("invalid_422.json"),
        },
      }),
    );
    const err = await client
      .simulate({ model: "static", setting: { contacts: "C9-,C4+" } })
      .then(
        () => null,
        (e: unknown) => e,
      );
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(422);
    expect((err as ApiError).detail).toEqual([
      "setting 'C9-,C4+': unknown contact(s) ['C9']",
    ]);
  });

  it("reports an unknown job as a 404", async () => {
    const err = await staticClient()
      .getJob("j-nonexistent")
      .then(
        () => null,
        (e: unknown) => e,
      );
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(404);
    expect((err as ApiError).detail).toEqual(["Not Found"]);
  });
});

describe("neuron-model polarity pair in the comparison view", () => {
  it("highlights the tract the swap actually changes", () => {
    let history: RunRecord[] = [];
    history = appendRun(history, fixture<JobDoc>("job_neuron_done.json"));
    history = appendRun(history, fixture<JobDoc>("job_neuron_rev_done.json"));
    // swapped contacts but different numbers: no "identical" badge
    expect(history[1]!.swappedTwin).toBeNull();

    const table = compareRuns(history, [0, 1]);
    expect(table.tracts).toEqual(["crossing", "ascending"]);
    expect(table.deltas).toEqual([0.0, 37.5]);
    // the nonzero delta is what the diff column highlights
    expect(table.deltas!.filter((d) => d !== null && d > 0)).toEqual([37.5]);
  });
});

describe("field slice document", () => {
  it("matches the recorded grid geometry", async () => {
    const doc: SliceDoc = await staticClient().getSlice(
      "j-558ed6269ea1",
      "xy",
    );
    expect(doc.plane).toBe("xy");
    expect(doc.shape).toEqual([60, 60]);
    expect(doc.values).toHaveLength(60);
    expect(doc.values[0]).toHaveLength(60);
    expect(doc.unit).toBe("V/m");
    expect(doc.coord_mm).toBe(3.0);
  });
});

describe("recorded fixtures are self-consistent", () => {
  it("POST responses only carry id and status", () => {
    for (const name of ["job_fwd.json", "job_rev.json", "job_lo.json"]) {
      const doc = fixture<JobDoc>(name);
      expect(Object.keys(doc).sort()).toEqual(["job_id", "status"]);
      expect(doc.status).toBe("done");
    }
  });

  it("the polarity pair's reports agree number for number", () => {
    const a = fixture<JobDoc>("job_fwd_done.json").report!;
    const b = fixture<JobDoc>("job_rev_done.json").report!;
    expect(a.tracts).toEqual(b.tracts);
    expect(a.diagnostics).toEqual(b.diagnostics);
  });
});
