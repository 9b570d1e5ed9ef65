/** Stimulation-setting drafts and client-side validation.
 *
 * The accept/reject logic mirrors the server's setting parser rule for
 * rule, so a draft the UI declares valid is never bounced by POST
 * /api/simulate and vice versa. The shared vector file under
 * `shared/validation-vectors.json` pins the two implementations to each
 * other; both test suites run every vector.
 */

import type { SceneDoc } from "./api.js";

export type ContactRole = "off" | "cathode" | "anode";

/** What the user is editing: per-contact tri-state plus the sliders. */
export interface SettingDraft {
  roles: Record<string, ContactRole>;
  caseReturn: boolean;
  amplitudeMa: number;
  frequencyHz: number;
  pulseWidthUs: number;
  pulseShape: "monophasic" | "biphasic";
  model: string;
}

export const ROLE_CYCLE: readonly ContactRole[] = ["off", "cathode", "anode"];

export function cycleRole(role: ContactRole): ContactRole {
  const i = ROLE_CYCLE.indexOf(role);
  return ROLE_CYCLE[(i + 1) % ROLE_CYCLE.length]!;
}

export function defaultDraft(scene: SceneDoc, model: string): SettingDraft {
  const roles: Record<string, ContactRole> = {};
  for (const c of scene.lead.contacts) roles[c.id] = "off";
  return {
    roles,
    caseReturn: false,
    amplitudeMa: 3.0,
    frequencyHz: 130.0,
    pulseWidthUs: 60.0,
    pulseShape: "monophasic",
    model,
  };
}

/** Multi-member group names (e.g. a segmented level driven in ring mode),
 * largest first so collapsing prefers whole levels over single segments. */
function ringGroups(scene: SceneDoc): [string, string[]][] {
  return Object.entries(scene.lead.groups)
    .filter(([, members]) => members.length > 1)
    .sort((a, b) => b[1].length - a[1].length);
}

/** Build the polarity string ("C2-,C4+") for a draft.
 *
 * Contacts sharing a role collapse to their group name when the whole
 * group agrees, matching how ganged levels are addressed server-side.
 * Cathode tokens come first, then anodes, then the case return.
 */
export function draftContacts(draft: SettingDraft, scene: SceneDoc): string {
  const tokens: string[] = [];
  for (const role of ["cathode", "anode"] as const) {
    const sign = role === "cathode" ? "-" : "+";
    const selected = new Set(
      Object.keys(draft.roles).filter((id) => draft.roles[id] === role),
    );
    for (const [group, members] of ringGroups(scene)) {
      if (members.every((m) => selected.has(m))) {
        tokens.push(group + sign);
        for (const m of members) selected.delete(m);
      }
    }
    // remaining singles, in lead order
    for (const c of scene.lead.contacts) {
      if (selected.has(c.id)) tokens.push(c.id + sign);
    }
  }
  if (draft.caseReturn) tokens.push("CASE+");
  return tokens.join(",");
}

/** The JSON body `POST /api/simulate` receives for this draft. */
export function draftToEntry(
  draft: SettingDraft,
  scene: SceneDoc,
): Record<string, unknown> {
  return {
    contacts: draftContacts(draft, scene),
    amplitude_ma: draft.amplitudeMa,
    frequency_hz: draft.frequencyHz,
    pulse_width_us: draft.pulseWidthUs,
    pulse_shape: draft.pulseShape,
  };
}

export function addressableNames(scene: SceneDoc): Set<string> {
  return new Set(Object.keys(scene.lead.groups));
}

// --- the server's parser, transliterated -----------------------------------

const SETTING_KEYS = new Set([
  "label",
  "contacts",
  "amplitude_ma",
  "frequency_hz",
  "pulse_width_us",
  "pulse_shape",
]);

const PULSE_SHAPES = ["monophasic", "biphasic"];
const DEFAULT_FREQUENCY_HZ = 130.0;
const DEFAULT_PULSE_WIDTH_US = 60.0;
const POLARITY_TOKEN = /^([A-Za-z0-9]+)([+-])$/;

function parsePolarity(label: string): [string[], string[]] {
  const cathodes: string[] = [];
  const anodes: string[] = [];
  for (const raw of label.split(",")) {
    const token = raw.trim();
    if (!token) throw new Error(`empty token in polarity label '${label}'`);
    const m = POLARITY_TOKEN.exec(token);
    if (!m) throw new Error(`malformed polarity token '${token}'`);
    (m[2] === "-" ? cathodes : anodes).push(m[1]!);
  }
  if (!cathodes.length) throw new Error(`no cathode in polarity label '${label}'`);
  if (!anodes.length) throw new Error(`no anode in polarity label '${label}'`);
  const overlap = cathodes.filter((c) => anodes.includes(c));
  if (overlap.length) {
    throw new Error(`contacts ${JSON.stringify([...new Set(overlap)].sort())} listed with both signs`);
  }
  return [cathodes, anodes];
}

function checkTrainTiming(
  frequencyHz: number,
  pulseWidthUs: number,
  shape: string,
): string | null {
  if (!(frequencyHz > 0)) return "frequency must be positive";
  if (!(pulseWidthUs > 0)) return "pulse width must be positive";
  const duty = pulseWidthUs * 1e-6 * frequencyHz;
  if (duty >= 1.0) {
    return `pulse width times frequency is ${duty.toFixed(3)}, must stay below 1`;
  }
  if (shape === "biphasic" && 2.0 * duty >= 1.0) {
    return "biphasic phases overlap: 2 * pulse width exceeds the period";
  }
  return null;
}

export interface ValidationResult {
  ok: boolean;
  violations: string[];
}

function isNumber(v: unknown): v is number {
  return typeof v === "number";
}

/** Validate a raw setting entry exactly as the server would.
 *
 * `addressable` is the set of contact and group names the scene accepts
 * (the keys of `/api/scene` lead.groups); `CASE` is implicitly allowed
 * as an anode.
 */
export function validateEntry(
  entry: unknown,
  addressable: Set<string>,
  where = "setting",
): ValidationResult {
  const bad: string[] = [];
  if (typeof entry !== "object" || entry === null || Array.isArray(entry)) {
    return { ok: false, violations: [`${where} must be an object`] };
  }
  const doc = entry as Record<string, unknown>;
  const unknownKeys = Object.keys(doc)
    .filter((k) => !SETTING_KEYS.has(k))
    .sort();
  if (unknownKeys.length) {
    bad.push(`${where}: unknown key(s) ${JSON.stringify(unknownKeys)}`);
  }
  // presence checks use `in`: an explicit null is present-and-invalid,
  // not missing, exactly as the server sees it
  const label = "label" in doc ? doc["label"] : doc["contacts"];
  if (typeof label !== "string" || !label) {
    bad.push(`${where}: missing label`);
    return { ok: false, violations: bad };
  }
  where = `setting '${label}'`;
  const polarity = "contacts" in doc ? doc["contacts"] : label;
  if (typeof polarity !== "string") {
    bad.push(`${where}: contacts must be a polarity string`);
    return { ok: false, violations: bad };
  }
  let cathodes: string[];
  let anodes: string[];
  try {
    [cathodes, anodes] = parsePolarity(polarity);
  } catch (exc) {
    bad.push(`${where}: ${(exc as Error).message}`);
    return { ok: false, violations: bad };
  }
  const names = [...new Set([...cathodes, ...anodes])].sort();
  const missing = names.filter((n) => n !== "CASE" && !addressable.has(n));
  if (missing.length) {
    bad.push(`${where}: unknown contact(s) ${JSON.stringify(missing)}`);
    return { ok: false, violations: bad };
  }
  const amplitude = "amplitude_ma" in doc ? doc["amplitude_ma"] : undefined;
  if (!isNumber(amplitude) || amplitude < 0) {
    bad.push(`${where}: amplitude_ma must be a non-negative number`);
    return { ok: false, violations: bad };
  }
  const frequency =
    "frequency_hz" in doc ? doc["frequency_hz"] : DEFAULT_FREQUENCY_HZ;
  const width =
    "pulse_width_us" in doc ? doc["pulse_width_us"] : DEFAULT_PULSE_WIDTH_US;
  const shape = "pulse_shape" in doc ? doc["pulse_shape"] : "monophasic";
  if (typeof shape !== "string" || !PULSE_SHAPES.includes(shape)) {
    bad.push(`${where}: unknown pulse shape '${String(shape)}'`);
    return { ok: false, violations: bad };
  }
  if (!isNumber(frequency)) {
    bad.push(`${where}: frequency_hz must be a number`);
    return { ok: false, violations: bad };
  }
  if (!isNumber(width)) {
    bad.push(`${where}: pulse_width_us must be a number`);
    return { ok: false, violations: bad };
  }
  if (cathodes.includes("CASE")) {
    bad.push(`${where}: the implant case can only act as anode`);
    return { ok: false, violations: bad };
  }
  const timing = checkTrainTiming(frequency, width, shape);
  if (timing) {
    bad.push(`${where}: ${timing}`);
    return { ok: false, violations: bad };
  }
  return { ok: bad.length === 0, violations: bad };
}

/** Draft validity: the exact accept/reject the server will apply,
 * with draft-level wording for the common empty states. */
export function validateDraft(
  draft: SettingDraft,
  scene: SceneDoc,
): ValidationResult {
  const contacts = draftContacts(draft, scene);
  const hasCathode = Object.values(draft.roles).includes("cathode");
  const hasAnode =
    Object.values(draft.roles).includes("anode") || draft.caseReturn;
  if (!hasCathode || !hasAnode) {
    // the entry-level parser would reject these too, but with
    // label-centric wording; say it in the user's terms
    const needs: string[] = [];
    if (!hasCathode) needs.push("select at least one cathode");
    if (!hasAnode) needs.push("select an anode or the case return");
    return { ok: false, violations: needs };
  }
  return validateEntry(draftToEntry(draft, scene), addressableNames(scene));
}
