"""Whole-study activation runs: solve the field, classify every fiber,
tabulate percentages across settings and models.

A ``Scene`` bundles the voxelized geometry with the tracts it should
classify.  ``run_static`` and ``run_neuron`` produce an
``ActivationReport`` with one fully classified status per fiber;
``compare_settings`` collects reports into a ``ComparisonTable`` whose
rows keep the caller's setting order and whose polarity pairs (same
contacts, signs exchanged) are annotated.

Serialized documents are deterministic: wall-clock diagnostics never
enter them, so identical inputs give identical bytes.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .axon import build_axon, extracellular_drive, is_activated, simulate
from .field import SolverOptions, solve_eqs, solve_qs
from .scene import (
    FiberStatus,
    FiberTract,
    LeadGeometry,
    MaterialTable,
    TissueLayout,
    VoxelGrid,
    classify_damaged,
    voxelize_scene,
)
from .stimulus import StimulationSetting, fourier_decompose, train_for
from .vta import (
    FIBER_SAMPLE_SPACING_MM,
    ThresholdTable,
    activated_fibers_static,
    activation_percentage,
    threshold_for,
)

MODEL_STATIC = "static"
MODEL_NEURON_QS = "neuron-QS"
MODEL_NEURON_EQS = "neuron-EQS"
MODELS = (MODEL_STATIC, MODEL_NEURON_QS, MODEL_NEURON_EQS)

# diagnostics keys measured in seconds vary run to run; they are kept on
# the live objects but stripped from every serialized document
_VOLATILE_SUFFIX = "_s"


# ---------------------------------------------------------------------------
# scene


@dataclass(frozen=True)
class Scene:
    """Voxelized lead-in-tissue geometry plus the tracts to classify."""

    lead: LeadGeometry
    grid: VoxelGrid
    materials: MaterialTable
    tracts: tuple[FiberTract, ...]
    encapsulation_mm: float = 0.1

    def __post_init__(self) -> None:
        names = [t.name for t in self.tracts]
        if len(set(names)) != len(names):
            raise ValueError("tract names must be unique")

    @property
    def tract_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tracts)

    def tract(self, name: str) -> FiberTract:
        for t in self.tracts:
            if t.name == name:
                return t
        raise KeyError(name)


def build_scene(
    lead: LeadGeometry,
    tissue: TissueLayout,
    materials: MaterialTable,
    tracts: Sequence[FiberTract],
    resolution_mm: float,
    box_size_mm: float = 50.0,
    box_center_mm: tuple[float, float, float] | None = None,
    encapsulation_thickness_mm: float = 0.1,
    boundary: str = "open",
) -> Scene:
    """Voxelize the geometry and pre-classify fiber damage.

    Fibers cutting the shaft or its encapsulation shell are marked
    damaged here, before any field or membrane model looks at them.
    """
    grid = voxelize_scene(
        lead,
        tissue,
        materials,
        resolution_mm,
        box_size_mm=box_size_mm,
        box_center_mm=box_center_mm,
        encapsulation_thickness_mm=encapsulation_thickness_mm,
        boundary=boundary,
    )
    marked = tuple(
        classify_damaged(t, lead, encapsulation_thickness_mm) for t in tracts
    )
    return Scene(
        lead=lead,
        grid=grid,
        materials=materials,
        tracts=marked,
        encapsulation_mm=encapsulation_thickness_mm,
    )


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class TractResult:
    """Classification outcome for one tract under one run."""

    name: str
    statuses: np.ndarray
    activation_percent: float
    failures: tuple[tuple[int, str], ...] = ()

    def __post_init__(self) -> None:
        s = np.asarray(self.statuses)
        if s.size == 0:
            raise ValueError("empty tract result")
        if np.any(s == FiberStatus.UNKNOWN):
            raise ValueError(f"tract {self.name!r} still has unclassified fibers")
        if not 0.0 <= self.activation_percent <= 100.0:
            raise ValueError("activation percentage outside [0, 100]")
        self.statuses.setflags(write=False)

    @property
    def n_fibers(self) -> int:
        return int(len(self.statuses))

    def count(self, status: FiberStatus) -> int:
        return int(np.sum(np.asarray(self.statuses) == status))

    def counts(self) -> dict[str, int]:
        return {
            "activated": self.count(FiberStatus.ACTIVATED),
            "non_activated": self.count(FiberStatus.NON_ACTIVATED),
            "damaged": self.count(FiberStatus.DAMAGED),
            "failed": self.count(FiberStatus.FAILED),
        }


def setting_to_doc(setting: StimulationSetting) -> dict:
    return {
        "label": setting.label,
        "cathodes": list(setting.cathodes),
        "anodes": list(setting.anodes),
        "amplitude_ma": float(setting.amplitude_ma),
        "frequency_hz": float(setting.frequency_hz),
        "pulse_width_us": float(setting.pulse_width_us),
        "pulse_shape": setting.pulse_shape,
    }


def setting_from_doc(doc: Mapping) -> StimulationSetting:
    return StimulationSetting(
        label=doc["label"],
        cathodes=tuple(doc["cathodes"]),
        anodes=tuple(doc["anodes"]),
        amplitude_ma=float(doc["amplitude_ma"]),
        frequency_hz=float(doc["frequency_hz"]),
        pulse_width_us=float(doc["pulse_width_us"]),
        pulse_shape=doc.get("pulse_shape", "monophasic"),
    )


def _plain(value):
    """Numpy scalars and containers down to json-ready python values."""
    if isinstance(value, Mapping):
        return {
            str(k): _plain(v)
            for k, v in value.items()
            if not str(k).endswith(_VOLATILE_SUFFIX)
        }
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


@dataclass(frozen=True)
class ActivationReport:
    """Every fiber of every tract classified under one setting and model."""

    setting: StimulationSetting
    model: str
    tracts: tuple[TractResult, ...]
    denominator_rule: str = "all"
    diagnostics: Mapping = field(default_factory=dict)
    wall_s: float = 0.0  # informational only, never serialized

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}, expected one of {MODELS}")

    def percentages(self) -> dict[str, float]:
        return {t.name: t.activation_percent for t in self.tracts}

    def tract(self, name: str) -> TractResult:
        for t in self.tracts:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_doc(self) -> dict:
        return {
            "kind": "activation-report",
            "model": self.model,
            "setting": setting_to_doc(self.setting),
            "denominator_rule": self.denominator_rule,
            "tracts": [
                {
                    "name": t.name,
                    "n_fibers": t.n_fibers,
                    "statuses": [int(s) for s in t.statuses],
                    "counts": t.counts(),
                    "activation_percent": float(t.activation_percent),
                    "failures": [
                        {"fiber": int(i), "error": msg} for i, msg in t.failures
                    ],
                }
                for t in self.tracts
            ],
            "diagnostics": _plain(self.diagnostics),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), indent=2, sort_keys=True) + "\n"

    def render_text(self) -> str:
        s = self.setting
        head = (
            f"setting {s.label}  model {self.model}  "
            f"{s.amplitude_ma:g} mA  {s.frequency_hz:g} Hz  {s.pulse_width_us:g} us"
        )
        cols = [
            "tract", "fibers", "activated", "non-activated",
            "damaged", "failed", "activation %",
        ]
        body = []
        for t in self.tracts:
            c = t.counts()
            body.append([
                t.name,
                str(t.n_fibers),
                str(c["activated"]),
                str(c["non_activated"]),
                str(c["damaged"]),
                str(c["failed"]),
                f"{t.activation_percent:.1f}",
            ])
        widths = [
            max(len(cols[j]), *(len(r[j]) for r in body)) if body else len(cols[j])
            for j in range(len(cols))
        ]

        def line(cells: list[str]) -> str:
            first = cells[0].ljust(widths[0])
            rest = [c.rjust(w) for c, w in zip(cells[1:], widths[1:])]
            return "  ".join([first] + rest).rstrip()

        lines = [head, "", line(cols)] + [line(r) for r in body]
        if any(t.failures for t in self.tracts):
            lines.append("")
            for t in self.tracts:
                for i, msg in t.failures:
                    lines.append(f"failed  {t.name}[{i}]: {msg}")
        return "\n".join(lines) + "\n"


def report_from_doc(doc: Mapping) -> ActivationReport:
    """Rebuild a report from its serialized document."""
    tracts = tuple(
        TractResult(
            name=t["name"],
            statuses=np.array(t["statuses"], dtype=np.int8),
            activation_percent=float(t["activation_percent"]),
            failures=tuple((int(f["fiber"]), f["error"]) for f in t["failures"]),
        )
        for t in doc["tracts"]
    )
    return ActivationReport(
        setting=setting_from_doc(doc["setting"]),
        model=doc["model"],
        tracts=tracts,
        denominator_rule=doc.get("denominator_rule", "all"),
        diagnostics=dict(doc.get("diagnostics", {})),
    )


# ---------------------------------------------------------------------------
# models


def _role_signed_diag(diag: dict, setting: StimulationSetting) -> dict:
    """Solver diagnostics with per-group currents signed along each
    group's assigned role.

    The raw solver value is net current out of the metal into the
    tissue, which flips sign under a polarity swap even when the
    activation outcome does not.  Reports count sinks and sources as
    positive when they behave as assigned, so swapped static runs stay
    bit-identical; a group fighting its role shows up negative.
    """
    out = dict(diag)
    groups = out.get("group_currents_ma")
    if groups:
        cathodes = set(setting.cathodes)
        signed = {}
        for name, (re, im) in groups.items():
            s = -1.0 if name in cathodes else 1.0
            # + 0.0 canonicalizes -0.0 so both polarities print alike
            signed[name] = [s * re + 0.0, s * im + 0.0]
        out["group_currents_ma"] = signed
    return out


def static_report(
    scene: Scene,
    setting: StimulationSetting,
    solution,
    threshold_table: ThresholdTable | None = None,
    denominator_rule: str = "all",
    sample_spacing_mm: float = FIBER_SAMPLE_SPACING_MM,
) -> ActivationReport:
    """Classify against a field already solved for this setting.

    Split out from ``run_static`` so a caller holding a cached solution
    (one solve per contact group, rescaled per amplitude) can reuse it.
    """
    mag = solution.e_magnitude_grid()
    results = []
    thresholds_used: dict[str, list[float]] = {}
    for tract in scene.tracts:
        # diameters outside the configured table clamp to its edge
        thresholds = np.array([
            threshold_for(setting.pulse_width_us, d, threshold_table, extrapolate=True)
            for d in tract.diameters_um
        ])
        statuses = np.array(tract.statuses, dtype=np.int8)
        for level in np.unique(thresholds):
            marked = activated_fibers_static(
                mag, tract, float(level),
                grid=scene.grid, sample_spacing_mm=sample_spacing_mm,
            )
            sel = (thresholds == level) & (statuses == FiberStatus.UNKNOWN)
            statuses[sel] = np.asarray(marked.statuses)[sel]
        classified = tract.with_statuses(statuses)
        pct = activation_percentage(classified, denominator_rule)
        results.append(
            TractResult(tract.name, np.asarray(classified.statuses), pct)
        )
        thresholds_used[tract.name] = [float(v) for v in np.unique(thresholds)]
    diag = {
        "solver": _role_signed_diag(solution.diagnostics, setting),
        "thresholds_v_per_m": thresholds_used,
        "sample_spacing_mm": sample_spacing_mm,
    }
    return ActivationReport(
        setting=setting,
        model=MODEL_STATIC,
        tracts=tuple(results),
        denominator_rule=denominator_rule,
        diagnostics=diag,
    )


def run_static(
    scene: Scene,
    setting: StimulationSetting,
    threshold_table: ThresholdTable | None = None,
    denominator_rule: str = "all",
    sample_spacing_mm: float = FIBER_SAMPLE_SPACING_MM,
    options: SolverOptions | None = None,
) -> ActivationReport:
    """Field-threshold activation: one stationary solve, then each
    fiber's peak sampled |E| against its (pulse width, diameter)
    threshold.  Damaged fibers keep their status and never activate.
    """
    t0 = time.perf_counter()
    solution = solve_qs(scene.grid, scene.materials, setting, options)
    report = static_report(
        scene, setting, solution,
        threshold_table=threshold_table,
        denominator_rule=denominator_rule,
        sample_spacing_mm=sample_spacing_mm,
    )
    return replace(report, wall_s=time.perf_counter() - t0)


def run_neuron(
    scene: Scene,
    setting: StimulationSetting,
    formulation: str = "QS",
    dt_us: float = 5.0,
    duration_ms: float = 30.0,
    n_harmonics: int = 1024,
    firing_criterion: str = "per-period",
    denominator_rule: str = "all",
    options: SolverOptions | None = None,
) -> ActivationReport:
    """Biophysical activation: every undamaged fiber becomes a
    double-cable axon driven by the solved field and is judged on
    firing.

    A fiber whose simulation cannot run or diverges is marked failed
    and reported; the batch continues.  Failed fibers never join the
    activated count but stay in the denominator.
    """
    if formulation not in ("QS", "EQS"):
        raise ValueError(f"formulation must be 'QS' or 'EQS', got {formulation!r}")
    t0 = time.perf_counter()
    train = train_for(setting)
    if formulation == "QS":
        source = solve_qs(scene.grid, scene.materials, setting, options)
        solver_diag = [_role_signed_diag(source.diagnostics, setting)]
    else:
        spectrum = fourier_decompose(train, n_harmonics)
        source = solve_eqs(
            scene.grid, scene.materials, setting, spectrum, options=options
        )
        solver_diag = [_role_signed_diag(s.diagnostics, setting) for s in source]

    results = []
    for tract in scene.tracts:
        statuses = np.array(tract.statuses, dtype=np.int8)
        failures: list[tuple[int, str]] = []
        for i in range(len(tract.fibers)):
            if statuses[i] != FiberStatus.UNKNOWN:
                continue
            try:
                axon = build_axon(tract.fibers[i], float(tract.diameters_um[i]))
                drive = extracellular_drive(axon, source, train, dt_us, duration_ms)
                record = simulate(axon, drive)
                fired = is_activated(record, train, criterion=firing_criterion)
            except (ValueError, ArithmeticError) as exc:
                # one bad fiber must not sink the batch
                statuses[i] = FiberStatus.FAILED
                failures.append((i, str(exc)))
                continue
            statuses[i] = (
                FiberStatus.ACTIVATED if fired else FiberStatus.NON_ACTIVATED
            )
        classified = tract.with_statuses(statuses)
        pct = activation_percentage(classified, denominator_rule)
        results.append(
            TractResult(
                tract.name, np.asarray(classified.statuses), pct, tuple(failures)
            )
        )

    diag = {
        "solver": solver_diag,
        "dt_us": dt_us,
        "duration_ms": duration_ms,
        "firing_criterion": firing_criterion,
    }
    if formulation == "EQS":
        diag["n_harmonics"] = n_harmonics
    return ActivationReport(
        setting=setting,
        model=f"neuron-{formulation}",
        tracts=tuple(results),
        denominator_rule=denominator_rule,
        diagnostics=diag,
        wall_s=time.perf_counter() - t0,
    )


_STATIC_KEYS = {"threshold_table", "denominator_rule", "sample_spacing_mm", "options"}
_NEURON_KEYS = {
    "dt_us", "duration_ms", "n_harmonics", "firing_criterion",
    "denominator_rule", "options",
}


def run_model(
    scene: Scene, setting: StimulationSetting, model: str, **kwargs
) -> ActivationReport:
    """Dispatch on the model tag; keyword options route to the matching
    runner and unknown names are rejected rather than dropped."""
    unknown = set(kwargs) - (_STATIC_KEYS | _NEURON_KEYS)
    if unknown:
        raise TypeError(f"unknown options: {sorted(unknown)}")
    if model == MODEL_STATIC:
        picked = {k: v for k, v in kwargs.items() if k in _STATIC_KEYS}
        return run_static(scene, setting, **picked)
    if model in (MODEL_NEURON_QS, MODEL_NEURON_EQS):
        picked = {k: v for k, v in kwargs.items() if k in _NEURON_KEYS}
        return run_neuron(scene, setting, model.split("-", 1)[1], **picked)
    raise ValueError(f"unknown model {model!r}, expected one of {MODELS}")


# ---------------------------------------------------------------------------
# comparison tables


@dataclass(frozen=True)
class ComparisonRow:
    model: str
    label: str
    percentages: dict


@dataclass(frozen=True)
class PairNote:
    """Annotation for two settings that are each other's polarity swap."""

    model: str
    label_a: str
    label_b: str
    note: str


@dataclass(frozen=True)
class ComparisonTable:
    """Activation percentages per (model, setting), rows in caller order."""

    tract_names: tuple[str, ...]
    models: tuple[str, ...]
    rows: tuple[ComparisonRow, ...]
    notes: tuple[PairNote, ...] = ()

    def row(self, model: str, label: str) -> ComparisonRow:
        for r in self.rows:
            if r.model == model and r.label == label:
                return r
        raise KeyError((model, label))

    def to_doc(self) -> dict:
        return {
            "kind": "comparison-table",
            "tract_names": list(self.tract_names),
            "models": list(self.models),
            "rows": [
                {
                    "model": r.model,
                    "label": r.label,
                    "percentages": {k: float(v) for k, v in r.percentages.items()},
                }
                for r in self.rows
            ],
            "notes": [
                {
                    "model": n.model,
                    "label_a": n.label_a,
                    "label_b": n.label_b,
                    "note": n.note,
                }
                for n in self.notes
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_doc(cls, doc: Mapping) -> "ComparisonTable":
        return cls(
            tract_names=tuple(doc["tract_names"]),
            models=tuple(doc["models"]),
            rows=tuple(
                ComparisonRow(r["model"], r["label"], dict(r["percentages"]))
                for r in doc["rows"]
            ),
            notes=tuple(
                PairNote(n["model"], n["label_a"], n["label_b"], n["note"])
                for n in doc["notes"]
            ),
        )

    def to_dsv(self, model: str | None = None, delimiter: str = "\t") -> str:
        """One model's rows as delimiter-separated text, a column per tract."""
        if model is None:
            if len(self.models) != 1:
                raise ValueError("table holds several models; pick one")
            model = self.models[0]
        if model not in self.models:
            raise ValueError(f"model {model!r} not in table")
        lines = [delimiter.join(["setting"] + [f"{n} %" for n in self.tract_names])]
        for r in self.rows:
            if r.model != model:
                continue
            lines.append(
                delimiter.join(
                    [r.label] + [f"{r.percentages[n]:.2f}" for n in self.tract_names]
                )
            )
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        label_w = max([len("setting")] + [len(r.label) for r in self.rows])
        col_ws = [max(len(n) + 2, 8) for n in self.tract_names]
        lines = []
        for model in self.models:
            lines.append(f"model {model}")
            header = ["setting".ljust(label_w)] + [
                f"{n} %".rjust(w) for n, w in zip(self.tract_names, col_ws)
            ]
            lines.append("  " + "  ".join(header).rstrip())
            for r in self.rows:
                if r.model != model:
                    continue
                cells = [r.label.ljust(label_w)] + [
                    f"{r.percentages[n]:.1f}".rjust(w)
                    for n, w in zip(self.tract_names, col_ws)
                ]
                lines.append("  " + "  ".join(cells).rstrip())
            lines.append("")
        if self.notes:
            lines.append("polarity pairs")
            for n in self.notes:
                lines.append(
                    f"  {n.label_a} ~ {n.label_b}  [{n.model}]  {n.note}"
                )
            lines.append("")
        return "\n".join(lines)


def _is_polarity_pair(a: StimulationSetting, b: StimulationSetting) -> bool:
    return (
        set(a.cathodes) == set(b.anodes)
        and set(a.anodes) == set(b.cathodes)
        and a.amplitude_ma == b.amplitude_ma
        and a.frequency_hz == b.frequency_hz
        and a.pulse_width_us == b.pulse_width_us
        and a.pulse_shape == b.pulse_shape
    )


def build_comparison(reports: Sequence) -> ComparisonTable:
    """Assemble reports (live or serialized documents) into a table.

    Report order is kept as given; every report must cover the same
    tracts and no (model, label) pair may repeat.
    """
    if not reports:
        raise ValueError("no reports to tabulate")
    entries = []
    for r in reports:
        if isinstance(r, ActivationReport):
            entries.append((r.model, r.setting, r.percentages()))
        else:
            entries.append((
                r["model"],
                setting_from_doc(r["setting"]),
                {t["name"]: float(t["activation_percent"]) for t in r["tracts"]},
            ))

    tract_names = tuple(entries[0][2].keys())
    models: list[str] = []
    seen: set[tuple[str, str]] = set()
    rows = []
    for model, setting, pcts in entries:
        if tuple(pcts.keys()) != tract_names:
            raise ValueError("reports disagree on tract names")
        key = (model, setting.label)
        if key in seen:
            raise ValueError(
                f"duplicate setting label {setting.label!r} for model {model!r}"
            )
        seen.add(key)
        if model not in models:
            models.append(model)
        rows.append(ComparisonRow(model, setting.label, dict(pcts)))

    notes = []
    for model in models:
        group = [(s, p) for m, s, p in entries if m == model]
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                sa, pa = group[i]
                sb, pb = group[j]
                if not _is_polarity_pair(sa, sb):
                    continue
                worst = max(abs(pa[n] - pb[n]) for n in tract_names)
                if model == MODEL_STATIC:
                    note = (
                        "identical (expected)"
                        if worst == 0.0
                        else f"differs by up to {worst:.1f} points (unexpected)"
                    )
                else:
                    note = (
                        "identical"
                        if worst == 0.0
                        else f"differs by up to {worst:.1f} points"
                    )
                notes.append(PairNote(model, sa.label, sb.label, note))
    return ComparisonTable(
        tract_names=tract_names,
        models=tuple(models),
        rows=tuple(rows),
        notes=tuple(notes),
    )


def compare_settings(
    scene: Scene,
    settings: Sequence[StimulationSetting],
    models: Sequence[str] = (MODEL_STATIC,),
    **run_kwargs,
) -> ComparisonTable:
    """Run every (model, setting) pair and tabulate the percentages."""
    if not settings or not models:
        raise ValueError("need at least one setting and one model")
    labels = [s.label for s in settings]
    dups = sorted({l for l in labels if labels.count(l) > 1})
    if dups:
        raise ValueError(f"duplicate setting labels: {dups}")
    bad = [m for m in models if m not in MODELS]
    if bad:
        raise ValueError(f"unknown models {bad}, expected a subset of {MODELS}")
    reports = [
        run_model(scene, setting, model, **run_kwargs)
        for model in models
        for setting in settings
    ]
    return build_comparison(reports)
