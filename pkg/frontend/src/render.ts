/** DOM view: lead schematic, controls, results, history.
 *
 * Everything displayed is read from server responses or from the
 * editable draft; no physics happens here. Logic that deserves tests
 * lives in draft.ts / history.ts / slice.ts, this file only arranges
 * the pieces.
 */

import {
  ApiClient,
  ApiError,
  pollJob,
  type ContactDoc,
  type JobDoc,
  type SceneDoc,
  type SettingsDoc,
  type SliceDoc,
} from "./api.js";
import {
  cycleRole,
  defaultDraft,
  draftContacts,
  draftToEntry,
  validateDraft,
  type ContactRole,
  type SettingDraft,
} from "./draft.js";
import {
  appendRun,
  compareRuns,
  formatPercent,
  type RunRecord,
} from "./history.js";
import { sliceToRgba, statusColor } from "./slice.js";

const ROLE_FILL: Record<ContactRole, string> = {
  off: "#3c4043",
  cathode: "#1a73e8", // cathodic blue
  anode: "#d62728", // anodic red
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  private scene: SceneDoc | null = null;
  private catalog: SettingsDoc | null = null;
  private draft: SettingDraft | null = null;
  private history: RunRecord[] = [];
  private shown: RunRecord | null = null;
  private selected = new Set<number>();
  private busy = false;
  private slicePlane: "yz" | "xz" | "xy" = "xy";

  constructor(
    private readonly client: ApiClient,
    private readonly root: HTMLElement,
  ) {}

  async start(): Promise<void> {
    this.root.textContent = "";
    try {
      this.scene = await this.client.getScene();
      this.catalog = await this.client.getSettings();
    } catch {
      this.renderOffline();
      return;
    }
    this.draft = defaultDraft(this.scene, this.catalog.models[0] ?? "static");
    this.render();
  }

  private renderOffline(): void {
    this.root.textContent = "";
    const banner = el("div", "banner offline");
    banner.append(
      el("strong", "", "service unreachable"),
      el("span", "", " - controls disabled until the backend answers. "),
    );
    const retry = el("button", "", "retry");
    retry.onclick = () => void this.start();
    banner.append(retry);
    this.root.append(banner);
  }

  // ---- drafting ----------------------------------------------------------

  // drafting stays live while a job polls; only submission is serialized
  private cycle(contactId: string): void {
    if (!this.draft) return;
    this.draft.roles[contactId] = cycleRole(this.draft.roles[contactId] ?? "off");
    this.render();
  }

  private leadSchematic(scene: SceneDoc, draft: SettingDraft): HTMLElement {
    const wrap = el("section", "lead");
    wrap.append(el("h2", "", "lead"));

    const contacts = [...scene.lead.contacts].sort(
      (a, b) => b.z_lo_mm - a.z_lo_mm,
    );
    const map = el("div", "contact-map");
    const zTop = Math.max(...contacts.map((c) => c.z_hi_mm));
    const zBot = Math.min(...contacts.map((c) => c.z_lo_mm));
    const span = zTop - zBot || 1;
    for (const c of contacts) {
      const b = el("button", "contact", c.id);
      const role = draft.roles[c.id] ?? "off";
      b.style.background = ROLE_FILL[role];
      b.style.color = role === "off" ? "#e8eaed" : "#fff";
      b.style.top = `${(100 * (zTop - c.z_hi_mm)) / span}%`;
      b.style.height = `${(95 * (c.z_hi_mm - c.z_lo_mm)) / span}%`;
      b.style.left = `${(100 * c.theta_lo_deg) / 360}%`;
      b.style.width = c.ring
        ? "100%"
        : `${(100 * (c.theta_hi_deg - c.theta_lo_deg)) / 360}%`;
      b.title = `${c.id}: ${role} (click to cycle)`;
      b.onclick = () => this.cycle(c.id);
      map.append(b);
    }
    wrap.append(map, el("div", "hint", "unrolled shaft, tip down, 0-360°"));

    // one axial dial per contact level
    const levels = new Map<string, ContactDoc[]>();
    for (const c of contacts) {
      const key = `${c.z_lo_mm}`;
      levels.set(key, [...(levels.get(key) ?? []), c]);
    }
    const dials = el("div", "dials");
    for (const [, members] of [...levels.entries()].reverse()) {
      dials.append(this.axialDial(members, draft));
    }
    wrap.append(dials, el("div", "hint", "axial view per level, tip first"));
    return wrap;
  }

  private axialDial(members: ContactDoc[], draft: SettingDraft): SVGElement {
    const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    svg.setAttribute("viewBox", "-1.1 -1.1 2.2 2.2");
    svg.classList.add("dial");
    for (const c of members) {
      const role = draft.roles[c.id] ?? "off";
      const path = document.createElementNS(
        "http://www.w3.org/2000/svg",
        "path",
      );
      if (c.ring) {
        path.setAttribute(
          "d",
          "M 1 0 A 1 1 0 1 1 -1 0 A 1 1 0 1 1 1 0 Z",
        );
      } else {
        const a0 = (Math.PI / 180) * c.theta_lo_deg;
        const a1 = (Math.PI / 180) * c.theta_hi_deg;
        const large = c.theta_hi_deg - c.theta_lo_deg > 180 ? 1 : 0;
        path.setAttribute(
          "d",
          `M 0 0 L ${Math.cos(a0)} ${Math.sin(a0)} ` +
            `A 1 1 0 ${large} 1 ${Math.cos(a1)} ${Math.sin(a1)} Z`,
        );
      }
      path.setAttribute("fill", ROLE_FILL[role]);
      path.setAttribute("stroke", "#202124");
      path.setAttribute("stroke-width", "0.04");
      path.addEventListener("click", () => this.cycle(c.id));
      const title = document.createElementNS(
        "http://www.w3.org/2000/svg",
        "title",
      );
      title.textContent = `${c.id}: ${role}`;
      path.append(title);
      svg.append(path);
    }
    return svg;
  }

  private slider(
    label: string,
    min: number,
    max: number,
    step: number,
    value: number,
    unit: string,
    onInput: (v: number) => void,
  ): HTMLElement {
    const row = el("label", "slider");
    const name = el("span", "", label);
    const out = el("span", "value", `${value} ${unit}`);
    const input = el("input");
    input.type = "range";
    input.min = String(min);
    input.max = String(max);
    input.step = String(step);
    input.value = String(value);
    input.oninput = () => {
      out.textContent = `${input.value} ${unit}`;
      onInput(Number(input.value));
    };
    row.append(name, input, out);
    return row;
  }

  private controls(draft: SettingDraft, scene: SceneDoc): HTMLElement {
    const wrap = el("section", "controls");
    wrap.append(el("h2", "", "stimulation"));
    wrap.append(
      this.slider("amplitude", 0, 8, 0.1, draft.amplitudeMa, "mA", (v) => {
        draft.amplitudeMa = v;
        this.renderValidity();
      }),
      this.slider("pulse width", 20, 450, 10, draft.pulseWidthUs, "µs", (v) => {
        draft.pulseWidthUs = v;
        this.renderValidity();
      }),
      this.slider("frequency", 30, 250, 5, draft.frequencyHz, "Hz", (v) => {
        draft.frequencyHz = v;
        this.renderValidity();
      }),
    );

    const caseRow = el("label", "check");
    const caseBox = el("input");
    caseBox.type = "checkbox";
    caseBox.checked = draft.caseReturn;
    caseBox.onchange = () => {
      draft.caseReturn = caseBox.checked;
      this.render();
    };
    caseRow.append(caseBox, el("span", "", "case return (CASE+)"));
    wrap.append(caseRow);

    const shape = el("select") as HTMLSelectElement;
    for (const s of ["monophasic", "biphasic"]) {
      const o = el("option", "", s) as HTMLOptionElement;
      o.value = s;
      shape.append(o);
    }
    shape.value = draft.pulseShape;
    shape.onchange = () => {
      draft.pulseShape = shape.value as SettingDraft["pulseShape"];
      this.renderValidity();
    };
    const model = el("select") as HTMLSelectElement;
    for (const m of this.catalog?.models ?? []) {
      const o = el("option", "", m) as HTMLOptionElement;
      o.value = m;
      model.append(o);
    }
    model.value = draft.model;
    model.onchange = () => {
      draft.model = model.value;
    };
    const selects = el("div", "selects");
    selects.append(el("span", "", "shape"), shape, el("span", "", "model"), model);
    wrap.append(selects);

    const polarity = el("div", "polarity");
    polarity.id = "polarity";
    polarity.textContent = draftContacts(draft, scene) || "(no contacts selected)";
    wrap.append(polarity);

    const validity = el("div", "validity");
    validity.id = "validity";
    const go = el("button", "simulate", "simulate");
    go.id = "simulate";
    go.onclick = () => void this.submit();
    wrap.append(validity, go);
    this.renderValidity(wrap);
    return wrap;
  }

  /** Refresh the validity note + simulate button without a full rerender. */
  private renderValidity(scope: ParentNode = this.root): void {
    if (!this.draft || !this.scene) return;
    const verdict = validateDraft(this.draft, this.scene);
    const validity = scope.querySelector<HTMLElement>("#validity");
    const button = scope.querySelector<HTMLButtonElement>("#simulate");
    const polarity = scope.querySelector<HTMLElement>("#polarity");
    if (polarity) {
      polarity.textContent =
        draftContacts(this.draft, this.scene) || "(no contacts selected)";
    }
    if (validity) {
      validity.textContent = verdict.ok ? "" : verdict.violations.join("; ");
    }
    if (button) button.disabled = !verdict.ok || this.busy;
  }

  // ---- running -----------------------------------------------------------

  private async submit(): Promise<void> {
    if (!this.draft || !this.scene || this.busy) return;
    const body = {
      model: this.draft.model,
      setting: draftToEntry(this.draft, this.scene),
    };
    this.busy = true;
    this.setStatus("submitting…");
    this.render();
    try {
      const posted = await this.client.simulate(body);
      const job =
        posted.status === "done" || posted.status === "failed"
          ? await this.client.getJob(posted.job_id)
          : await pollJob(this.client, posted.job_id, (j) =>
              this.setStatus(`job ${j.job_id}: ${j.status}`),
            );
      if (job.status === "failed") {
        this.setStatus(`job failed: ${job.error ?? "unknown error"}`);
      } else {
        this.history = appendRun(this.history, job);
        this.shown = this.history[this.history.length - 1] ?? null;
        this.setStatus("");
      }
    } catch (exc) {
      this.setStatus(
        exc instanceof ApiError
          ? `rejected: ${exc.detail.join("; ")}`
          : `request failed: ${String(exc)}`,
      );
    } finally {
      this.busy = false;
      this.render();
    }
  }

  private status = "";

  private setStatus(text: string): void {
    this.status = text;
    const node = this.root.querySelector<HTMLElement>("#status");
    if (node) node.textContent = text;
  }

  // ---- results -----------------------------------------------------------

  private resultPanel(run: RunRecord): HTMLElement {
    const wrap = el("section", "result");
    const badge =
      run.swappedTwin !== null
        ? " [identical to swapped-polarity run]"
        : "";
    wrap.append(
      el("h2", "", `run ${run.seq}: ${run.label} (${run.model})${badge}`),
    );
    for (const p of run.percents) {
      const row = el("div", "tract");
      row.append(
        el("span", "name", p.tract),
        el("strong", "", `${formatPercent(p.percent)} %`),
      );
      const strip = el("div", "fibers");
      for (const code of run.statuses[p.tract] ?? []) {
        const dot = el("span", "fiber");
        dot.style.background = statusColor(code);
        strip.append(dot);
      }
      row.append(strip);
      wrap.append(row);
    }
    const legend = el("div", "legend");
    for (const [label, code] of [
      ["activated", 1],
      ["non-activated", 2],
      ["damaged", 3],
    ] as const) {
      const item = el("span", "legend-item", label);
      const dot = el("span", "fiber");
      dot.style.background = statusColor(code);
      item.prepend(dot);
      legend.append(item);
    }
    wrap.append(legend);
    wrap.append(this.slicePanel(run));
    return wrap;
  }

  private slicePanel(run: RunRecord): HTMLElement {
    const wrap = el("div", "slice");
    const bar = el("div", "slice-bar");
    for (const plane of ["yz", "xz", "xy"] as const) {
      const b = el("button", plane === this.slicePlane ? "on" : "", plane);
      b.onclick = () => {
        this.slicePlane = plane;
        this.render();
      };
      bar.append(b);
    }
    bar.append(el("span", "hint", "|E| slice through the cathode center"));
    const canvas = el("canvas", "field");
    wrap.append(bar, canvas);
    void this.paintSlice(canvas, run.jobId);
    return wrap;
  }

  private async paintSlice(
    canvas: HTMLCanvasElement,
    jobId: string,
  ): Promise<void> {
    let doc: SliceDoc;
    try {
      doc = await this.client.getSlice(jobId, this.slicePlane);
    } catch {
      canvas.replaceWith(el("div", "hint", "slice unavailable"));
      return;
    }
    const [nx, ny] = doc.shape;
    canvas.width = nx;
    canvas.height = ny;
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    ctx.putImageData(new ImageData(sliceToRgba(doc), nx, ny), 0, 0);
  }

  // ---- history -----------------------------------------------------------

  private historyPanel(): HTMLElement {
    const wrap = el("section", "history");
    wrap.append(el("h2", "", "history"));
    if (!this.history.length) {
      wrap.append(el("div", "hint", "no runs yet"));
      return wrap;
    }
    for (const run of this.history) {
      const row = el("div", "run");
      const pick = el("input") as HTMLInputElement;
      pick.type = "checkbox";
      pick.checked = this.selected.has(run.seq);
      pick.onchange = () => {
        if (pick.checked) this.selected.add(run.seq);
        else this.selected.delete(run.seq);
        this.render();
      };
      const open = el("button", "", `${run.seq}: ${run.label} (${run.model})`);
      open.onclick = () => {
        this.shown = run;
        this.render();
      };
      row.append(pick, open);
      if (run.swappedTwin !== null) {
        row.append(
          el("span", "badge", "identical to swapped-polarity run"),
        );
      }
      wrap.append(row);
    }
    if (this.selected.size >= 2) {
      wrap.append(this.comparisonTable());
    } else {
      wrap.append(el("div", "hint", "select two or more runs to compare"));
    }
    return wrap;
  }

  private comparisonTable(): HTMLElement {
    const table = compareRuns(
      this.history,
      [...this.selected].sort((a, b) => a - b),
    );
    const t = el("table", "compare");
    const head = el("tr");
    head.append(el("th", "", "setting"), el("th", "", "model"));
    for (const tract of table.tracts) head.append(el("th", "", `${tract} %`));
    t.append(head);
    for (const row of table.rows) {
      const tr = el("tr");
      tr.append(el("td", "", row.label), el("td", "", row.model));
      row.percents.forEach((p, i) => {
        const td = el("td", "", formatPercent(p));
        const delta = table.deltas?.[i];
        if (delta !== null && delta !== undefined && delta > 0) {
          td.classList.add("differs");
        }
        tr.append(td);
      });
      t.append(tr);
    }
    return t;
  }

  // ---- top level ---------------------------------------------------------

  private render(): void {
    if (!this.scene || !this.draft) return;
    this.root.textContent = "";
    const status = el("div", "status");
    status.id = "status";
    status.textContent = this.status;
    const left = el("div", "col");
    left.append(
      this.leadSchematic(this.scene, this.draft),
      this.controls(this.draft, this.scene),
    );
    const right = el("div", "col");
    right.append(status);
    if (this.shown) right.append(this.resultPanel(this.shown));
    right.append(this.historyPanel());
    const grid = el("div", "grid");
    grid.append(left, right);
    this.root.append(grid);
    this.renderValidity();
  }
}
