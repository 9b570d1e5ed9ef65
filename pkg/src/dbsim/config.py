"""Experiment configuration: one JSON document naming the scene, the
settings to drive, the models to run, and the files they need.

``validate_config`` checks the whole document and reports every
violation at once rather than stopping at the first.  The parsed
configuration carries a content hash covering the normalized document
and the bytes of every referenced file, so unchanged inputs are
recognizable across runs regardless of key order in the JSON.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .pipeline import MODELS, Scene, build_scene
from .scene import (
    MaterialTable,
    TISSUE_CODES,
    TissueEllipsoid,
    TissueLayout,
    TissueSlab,
    build_lead,
    load_fiber_tract,
)
from .stimulus import PULSE_SHAPES, StimulationSetting, parse_polarity
from .tremor import load_recording

DEFAULT_FREQUENCY_HZ = 130.0
DEFAULT_PULSE_WIDTH_US = 60.0

_TOP_KEYS = {
    "scene", "materials", "settings", "models", "tracts", "tremor",
    "output_dir", "options",
}
_SCENE_KEYS = {
    "lead", "tissue", "resolution_mm", "box_size_mm", "box_center_mm",
    "encapsulation_thickness_mm", "boundary",
}
_LEAD_KEYS = {"tip_mm", "direction"}
_TISSUE_KEYS = {"background", "slabs", "ellipsoids"}
_SETTING_KEYS = {
    "label", "contacts", "amplitude_ma", "frequency_hz", "pulse_width_us",
    "pulse_shape",
}
_OPTION_KEYS = {
    "denominator_rule", "dt_us", "duration_ms", "n_harmonics",
    "firing_criterion", "sample_spacing_mm", "tremor_radii_mm",
    "tremor_window_s", "tremor_band_hz",
}


class ConfigError(ValueError):
    """Carries the complete list of violations found in a config."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__(
            "invalid configuration:\n" + "\n".join(f"  - {v}" for v in violations)
        )


@dataclass(frozen=True)
class TremorEntry:
    hand: str
    label: str
    path: Path
    rel_path: str


@dataclass(frozen=True)
class RunOptions:
    denominator_rule: str = "all"
    dt_us: float = 5.0
    duration_ms: float = 30.0
    n_harmonics: int = 1024
    firing_criterion: str = "per-period"
    sample_spacing_mm: float = 0.5
    tremor_radii_mm: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    tremor_window_s: float = 0.5
    tremor_band_hz: tuple[float, float] = (2.0, 12.0)

    def for_model(self, model: str) -> dict:
        """Keyword options accepted by the runner of ``model``."""
        if model == "static":
            return {
                "denominator_rule": self.denominator_rule,
                "sample_spacing_mm": self.sample_spacing_mm,
            }
        picked = {
            "denominator_rule": self.denominator_rule,
            "dt_us": self.dt_us,
            "duration_ms": self.duration_ms,
            "firing_criterion": self.firing_criterion,
        }
        if model.endswith("EQS"):
            picked["n_harmonics"] = self.n_harmonics
        return picked


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, normalized study description."""

    base_dir: Path
    settings: tuple[StimulationSetting, ...]
    models: tuple[str, ...]
    tract_paths: tuple[Path, ...]
    tremor: tuple[TremorEntry, ...]
    output_dir: Path
    options: RunOptions
    materials: MaterialTable
    normalized: dict = field(repr=False)

    def setting(self, label: str) -> StimulationSetting:
        for s in self.settings:
            if s.label == label:
                return s
        raise KeyError(label)

    def build_scene(self) -> Scene:
        doc = self.normalized["scene"]
        lead = build_lead(
            tip_mm=tuple(doc["lead"]["tip_mm"]),
            direction=tuple(doc["lead"]["direction"]),
        )
        tissue = _tissue_from_doc(doc["tissue"])
        tracts = [load_fiber_tract(p) for p in self.tract_paths]
        center = doc.get("box_center_mm")
        return build_scene(
            lead,
            tissue,
            self.materials,
            tracts,
            doc["resolution_mm"],
            box_size_mm=doc["box_size_mm"],
            box_center_mm=tuple(center) if center is not None else None,
            encapsulation_thickness_mm=doc["encapsulation_thickness_mm"],
            boundary=doc["boundary"],
        )

    def config_hash(self) -> str:
        """Content hash over the normalized document and referenced files.

        Key order in the source JSON cannot change it; editing any
        referenced tract or recording does.
        """
        h = hashlib.sha256()
        h.update(canonical_json(self.normalized).encode())
        for path in list(self.tract_paths) + [e.path for e in self.tremor]:
            # a file deleted after validation hashes as its own state, so
            # the run can still start and report the failure per task
            if path.is_file():
                h.update(hashlib.sha256(path.read_bytes()).digest())
            else:
                h.update(b"missing:" + str(path).encode())
        return h.hexdigest()


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _tissue_from_doc(doc: dict) -> TissueLayout:
    return TissueLayout(
        background=doc["background"],
        slabs=tuple(
            TissueSlab(s["tissue"], tuple(s["lo_mm"]), tuple(s["hi_mm"]))
            for s in doc.get("slabs", [])
        ),
        ellipsoids=tuple(
            TissueEllipsoid(e["tissue"], tuple(e["center_mm"]), tuple(e["radii_mm"]))
            for e in doc.get("ellipsoids", [])
        ),
    )


def _check_vec3(value, what: str, bad: list[str]) -> list:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 3
        or not all(isinstance(v, (int, float)) for v in value)
    ):
        bad.append(f"{what} must be a list of three numbers")
        return [0.0, 0.0, 0.0]
    return [float(v) for v in value]


def _normalize_scene(doc, bad: list[str]) -> dict:
    if not isinstance(doc, dict):
        bad.append("scene must be an object")
        doc = {}
    unknown = sorted(set(doc) - _SCENE_KEYS)
    if unknown:
        bad.append(f"scene: unknown key(s) {unknown}")

    lead_doc = doc.get("lead", {})
    if not isinstance(lead_doc, dict):
        bad.append("scene.lead must be an object")
        lead_doc = {}
    unknown = sorted(set(lead_doc) - _LEAD_KEYS)
    if unknown:
        bad.append(f"scene.lead: unknown key(s) {unknown}")
    lead = {
        "tip_mm": _check_vec3(lead_doc.get("tip_mm", [0.0, 0.0, 0.0]), "scene.lead.tip_mm", bad),
        "direction": _check_vec3(
            lead_doc.get("direction", [0.0, 0.0, 1.0]), "scene.lead.direction", bad
        ),
    }

    tissue_doc = doc.get("tissue", {})
    if not isinstance(tissue_doc, dict):
        bad.append("scene.tissue must be an object")
        tissue_doc = {}
    unknown = sorted(set(tissue_doc) - _TISSUE_KEYS)
    if unknown:
        bad.append(f"scene.tissue: unknown key(s) {unknown}")
    tissue = {"background": tissue_doc.get("background", "homogeneous")}
    if tissue["background"] not in TISSUE_CODES:
        bad.append(f"scene.tissue.background: unknown tissue {tissue['background']!r}")
    for kind, fields in (("slabs", ("lo_mm", "hi_mm")), ("ellipsoids", ("center_mm", "radii_mm"))):
        shapes = []
        for i, shape in enumerate(tissue_doc.get(kind, [])):
            where = f"scene.tissue.{kind}[{i}]"
            if not isinstance(shape, dict):
                bad.append(f"{where} must be an object")
                continue
            name = shape.get("tissue")
            if name not in TISSUE_CODES:
                bad.append(f"{where}: unknown tissue {name!r}")
                continue
            entry = {"tissue": name}
            for f in fields:
                entry[f] = _check_vec3(shape.get(f), f"{where}.{f}", bad)
            shapes.append(entry)
        tissue[kind] = shapes

    res = doc.get("resolution_mm", 0.5)
    if not isinstance(res, (int, float)) or not 0.0 < res <= 0.5:
        bad.append(f"scene.resolution_mm must be in (0, 0.5], got {res!r}")
        res = 0.5
    box = doc.get("box_size_mm", 50.0)
    if not isinstance(box, (int, float)) or box <= 0:
        bad.append(f"scene.box_size_mm must be positive, got {box!r}")
        box = 50.0
    center = doc.get("box_center_mm")
    if center is not None:
        center = _check_vec3(center, "scene.box_center_mm", bad)
    encap = doc.get("encapsulation_thickness_mm", 0.1)
    if not isinstance(encap, (int, float)) or encap < 0:
        bad.append(f"scene.encapsulation_thickness_mm must be non-negative, got {encap!r}")
        encap = 0.1
    boundary = doc.get("boundary", "open")
    if boundary not in ("open", "grounded"):
        bad.append(f"scene.boundary must be 'open' or 'grounded', got {boundary!r}")
        boundary = "open"

    out = {
        "lead": lead,
        "tissue": tissue,
        "resolution_mm": float(res),
        "box_size_mm": float(box),
        "encapsulation_thickness_mm": float(encap),
        "boundary": boundary,
    }
    if center is not None:
        out["box_center_mm"] = center
    return out


def _normalize_materials(doc, bad: list[str]) -> tuple[MaterialTable, dict]:
    table = MaterialTable.default()
    if doc in (None, "default"):
        return table, {"overrides": {}}
    if not isinstance(doc, dict) or set(doc) - {"overrides"}:
        bad.append("materials must be 'default' or {'overrides': {...}}")
        return table, {"overrides": {}}
    overrides = doc.get("overrides", {})
    sigma = dict(table.sigma_s_per_m)
    eps = dict(table.eps_r)
    norm: dict = {}
    for tissue, values in sorted(overrides.items()):
        if tissue not in TISSUE_CODES:
            bad.append(f"materials.overrides: unknown tissue {tissue!r}")
            continue
        if not isinstance(values, dict) or set(values) - {"sigma_s_per_m", "eps_r"}:
            bad.append(
                f"materials.overrides.{tissue}: expected sigma_s_per_m and/or eps_r"
            )
            continue
        entry = {}
        if "sigma_s_per_m" in values:
            v = values["sigma_s_per_m"]
            if not isinstance(v, (int, float)) or v <= 0:
                bad.append(f"materials.overrides.{tissue}.sigma_s_per_m must be positive")
            else:
                sigma[tissue] = entry["sigma_s_per_m"] = float(v)
        if "eps_r" in values:
            v = values["eps_r"]
            if not isinstance(v, (int, float)) or v < 0:
                bad.append(f"materials.overrides.{tissue}.eps_r must be non-negative")
            else:
                eps[tissue] = entry["eps_r"] = float(v)
        if entry:
            norm[tissue] = entry
    return MaterialTable(sigma_s_per_m=sigma, eps_r=eps), {"overrides": norm}


def parse_setting_entry(entry, addressable: set[str], where: str = "setting"):
    """Check one stimulation-setting document.

    Returns ``(setting, normalized_entry, violations)``; the setting is
    None when the entry is unusable.  Shared by the config parser and
    the HTTP simulate endpoint so both accept and reject exactly the
    same inputs.  A missing label falls back to the polarity string.
    """
    bad: list[str] = []
    if not isinstance(entry, dict):
        return None, None, [f"{where} must be an object"]
    unknown = sorted(set(entry) - _SETTING_KEYS)
    if unknown:
        bad.append(f"{where}: unknown key(s) {unknown}")
    label = entry.get("label", entry.get("contacts"))
    if not isinstance(label, str) or not label:
        bad.append(f"{where}: missing label")
        return None, None, bad
    where = f"setting {label!r}"
    polarity = entry.get("contacts", label)
    if not isinstance(polarity, str):
        bad.append(f"{where}: contacts must be a polarity string")
        return None, None, bad
    try:
        cathodes, anodes = parse_polarity(polarity)
    except ValueError as exc:
        bad.append(f"{where}: {exc}")
        return None, None, bad
    names = sorted(set(cathodes) | set(anodes))
    missing = [n for n in names if n != "CASE" and n not in addressable]
    if missing:
        bad.append(f"{where}: unknown contact(s) {missing}")
        return None, None, bad
    amplitude = entry.get("amplitude_ma")
    if not isinstance(amplitude, (int, float)) or isinstance(amplitude, bool) or amplitude < 0:
        bad.append(f"{where}: amplitude_ma must be a non-negative number")
        return None, None, bad
    frequency = entry.get("frequency_hz", DEFAULT_FREQUENCY_HZ)
    width = entry.get("pulse_width_us", DEFAULT_PULSE_WIDTH_US)
    shape = entry.get("pulse_shape", "monophasic")
    if shape not in PULSE_SHAPES:
        bad.append(f"{where}: unknown pulse shape {shape!r}")
        return None, None, bad
    # explicit type checks: float() would silently accept "130" or True
    for field, value in (("frequency_hz", frequency), ("pulse_width_us", width)):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            bad.append(f"{where}: {field} must be a number")
            return None, None, bad
    try:
        setting = StimulationSetting(
            label=label,
            cathodes=cathodes,
            anodes=anodes,
            amplitude_ma=float(amplitude),
            frequency_hz=float(frequency),
            pulse_width_us=float(width),
            pulse_shape=shape,
        )
    except (TypeError, ValueError) as exc:
        bad.append(f"{where}: {exc}")
        return None, None, bad
    normalized = {
        "label": label,
        "contacts": polarity,
        "amplitude_ma": float(amplitude),
        "frequency_hz": float(frequency),
        "pulse_width_us": float(width),
        "pulse_shape": shape,
    }
    return setting, normalized, bad


def _normalize_settings(doc, addressable: set[str], bad: list[str]):
    settings: list[StimulationSetting] = []
    norm = []
    if not isinstance(doc, list) or not doc:
        bad.append("settings must be a non-empty list")
        return (), norm
    labels: list[str] = []
    for i, entry in enumerate(doc):
        setting, norm_entry, entry_bad = parse_setting_entry(
            entry, addressable, where=f"settings[{i}]"
        )
        bad.extend(entry_bad)
        if setting is None:
            continue
        labels.append(setting.label)
        settings.append(setting)
        norm.append(norm_entry)
    dups = sorted({l for l in labels if labels.count(l) > 1})
    if dups:
        bad.append(f"duplicate setting label(s): {dups}")
    return tuple(settings), norm


def _normalize_options(doc, bad: list[str]) -> RunOptions:
    if doc is None:
        return RunOptions()
    if not isinstance(doc, dict):
        bad.append("options must be an object")
        return RunOptions()
    unknown = sorted(set(doc) - _OPTION_KEYS)
    if unknown:
        bad.append(f"options: unknown key(s) {unknown}")
    kw = {}
    rule = doc.get("denominator_rule", "all")
    if rule not in ("all", "non-damaged"):
        bad.append(f"options.denominator_rule must be 'all' or 'non-damaged', got {rule!r}")
    else:
        kw["denominator_rule"] = rule
    crit = doc.get("firing_criterion", "per-period")
    if crit not in ("per-period", "any-spike"):
        bad.append(
            f"options.firing_criterion must be 'per-period' or 'any-spike', got {crit!r}"
        )
    else:
        kw["firing_criterion"] = crit
    for key, lo in (
        ("dt_us", 0.0), ("duration_ms", 0.0), ("sample_spacing_mm", 0.0),
        ("tremor_window_s", 0.0),
    ):
        if key in doc:
            v = doc[key]
            if not isinstance(v, (int, float)) or v <= lo:
                bad.append(f"options.{key} must be positive")
            else:
                kw[key] = float(v)
    if "n_harmonics" in doc:
        v = doc["n_harmonics"]
        if not isinstance(v, int) or v < 1:
            bad.append("options.n_harmonics must be a positive integer")
        else:
            kw["n_harmonics"] = v
    if "tremor_radii_mm" in doc:
        radii = doc["tremor_radii_mm"]
        ok = (
            isinstance(radii, list)
            and len(radii) >= 2
            and all(isinstance(r, (int, float)) for r in radii)
            and all(b > a for a, b in zip(radii, radii[1:]))
            and radii[0] > 0
        )
        if not ok:
            bad.append("options.tremor_radii_mm must be at least two increasing positive numbers")
        else:
            kw["tremor_radii_mm"] = tuple(float(r) for r in radii)
    if "tremor_band_hz" in doc:
        band = doc["tremor_band_hz"]
        if (
            not isinstance(band, list) or len(band) != 2
            or not all(isinstance(v, (int, float)) for v in band)
            or not 0 < band[0] < band[1]
        ):
            bad.append("options.tremor_band_hz must be [low, high] with 0 < low < high")
        else:
            kw["tremor_band_hz"] = (float(band[0]), float(band[1]))
    return RunOptions(**kw)


def _options_doc(options: RunOptions) -> dict:
    return {
        "denominator_rule": options.denominator_rule,
        "dt_us": options.dt_us,
        "duration_ms": options.duration_ms,
        "n_harmonics": options.n_harmonics,
        "firing_criterion": options.firing_criterion,
        "sample_spacing_mm": options.sample_spacing_mm,
        "tremor_radii_mm": list(options.tremor_radii_mm),
        "tremor_window_s": options.tremor_window_s,
        "tremor_band_hz": list(options.tremor_band_hz),
    }


def validate_config(path: str | Path) -> ExperimentConfig:
    """Parse and check a configuration file.

    Raises ``ConfigError`` carrying every violation found; a valid file
    yields a normalized ``ExperimentConfig`` with defaults filled in.
    """
    path = Path(path)
    bad: list[str] = []
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError([f"config file {path} does not exist"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config file is not valid JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be an object"])

    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        bad.append(f"unknown top-level key(s) {unknown}")

    base = path.parent.resolve()
    scene_doc = _normalize_scene(raw.get("scene", {}), bad)
    materials, materials_doc = _normalize_materials(raw.get("materials"), bad)

    # contact names the scene's lead can address
    lead = build_lead(
        tip_mm=tuple(scene_doc["lead"]["tip_mm"]),
        direction=tuple(scene_doc["lead"]["direction"]),
    )
    addressable = set(lead.contact_groups)

    settings, settings_doc = _normalize_settings(raw.get("settings"), addressable, bad)

    models_doc = raw.get("models", ["static"])
    if (
        not isinstance(models_doc, list)
        or not models_doc
        or len(set(models_doc)) != len(models_doc)
    ):
        bad.append("models must be a non-empty list without repeats")
        models_doc = ["static"]
    unknown_models = [m for m in models_doc if m not in MODELS]
    if unknown_models:
        bad.append(f"unknown model(s) {unknown_models}, expected a subset of {list(MODELS)}")
        models_doc = [m for m in models_doc if m in MODELS] or ["static"]

    tract_refs = raw.get("tracts", [])
    tract_paths: list[Path] = []
    if not isinstance(tract_refs, list):
        bad.append("tracts must be a list of file paths")
        tract_refs = []
    names_seen: list[str] = []
    for i, ref in enumerate(tract_refs):
        if not isinstance(ref, str):
            bad.append(f"tracts[{i}] must be a path string")
            continue
        full = (base / ref).resolve()
        if not full.is_file():
            bad.append(f"tract file {ref!r} does not exist")
            continue
        try:
            tract = load_fiber_tract(full)
        except (ValueError, json.JSONDecodeError) as exc:
            bad.append(f"tract file {ref!r} is unreadable: {exc}")
            continue
        names_seen.append(tract.name)
        tract_paths.append(full)
    dups = sorted({n for n in names_seen if names_seen.count(n) > 1})
    if dups:
        bad.append(f"duplicate tract name(s) across files: {dups}")

    tremor_doc = raw.get("tremor", [])
    entries: list[TremorEntry] = []
    tremor_norm = []
    if not isinstance(tremor_doc, list):
        bad.append("tremor must be a list of {hand, label, path} objects")
        tremor_doc = []
    labels = {s.label for s in settings}
    pairs: list[tuple[str, str]] = []
    for i, entry in enumerate(tremor_doc):
        where = f"tremor[{i}]"
        if not isinstance(entry, dict) or set(entry) - {"hand", "label", "path"}:
            bad.append(f"{where} must be an object with hand, label, path")
            continue
        hand, label, ref = entry.get("hand"), entry.get("label"), entry.get("path")
        if not all(isinstance(v, str) and v for v in (hand, label, ref)):
            bad.append(f"{where}: hand, label, and path must be non-empty strings")
            continue
        if label not in labels:
            bad.append(f"{where}: label {label!r} does not match any setting")
        full = (base / ref).resolve()
        if not full.is_file():
            bad.append(f"recording file {ref!r} does not exist")
            continue
        try:
            load_recording(full)
        except ValueError as exc:
            bad.append(f"recording file {ref!r} is unreadable: {exc}")
            continue
        pairs.append((hand, label))
        entries.append(TremorEntry(hand=hand, label=label, path=full, rel_path=ref))
        tremor_norm.append({"hand": hand, "label": label, "path": ref})
    dup_pairs = sorted({p for p in pairs if pairs.count(p) > 1})
    if dup_pairs:
        bad.append(f"duplicate tremor entries: {dup_pairs}")

    out_ref = raw.get("output_dir")
    if not isinstance(out_ref, str) or not out_ref:
        bad.append("output_dir is required")
        out_ref = "out"

    options = _normalize_options(raw.get("options"), bad)

    if bad:
        raise ConfigError(bad)

    normalized = {
        "scene": scene_doc,
        "materials": materials_doc,
        "settings": settings_doc,
        "models": list(models_doc),
        "tracts": list(tract_refs),
        "tremor": tremor_norm,
        "output_dir": out_ref,
        "options": _options_doc(options),
    }
    return ExperimentConfig(
        base_dir=base,
        settings=settings,
        models=tuple(models_doc),
        tract_paths=tuple(tract_paths),
        tremor=tuple(entries),
        output_dir=(base / out_ref).resolve(),
        options=options,
        materials=materials,
        normalized=normalized,
    )
