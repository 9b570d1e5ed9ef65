"""Batch execution of a validated experiment configuration.

Each unit of work is a named task with a content hash over everything
it reads.  Results land as plain files under the configured output
directory; ``manifest.json`` records per-task status, input hash, and
artifact paths.  Re-running with unchanged inputs skips every task
whose artifacts are still present.

The manifest and every artifact are byte-deterministic: variable
quantities (wall times) go to a separate ``timings.json`` sidecar that
carries no information about the results.
"""

from __future__ import annotations

import hashlib
import json
import re
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, canonical_json
from .pipeline import (
    ActivationReport,
    Scene,
    build_comparison,
    run_model,
)
from .scene import FiberStatus
from .tremor import (
    fit_tremor_model,
    load_recording,
    reconstruct_trajectory,
    score_report,
)

STATUS_DONE = "done"
STATUS_FAILED = "failed"


def _slug(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9.@+,-]+", "_", label)


def _short_hash(payload: str) -> str:
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass(frozen=True)
class TaskRecord:
    name: str
    status: str
    input_hash: str
    artifacts: tuple[str, ...] = ()
    error: str | None = None


@dataclass
class RunManifest:
    """What a run did, stable across reruns of identical inputs."""

    config_hash: str
    output_dir: Path
    tasks: dict[str, TaskRecord] = dc_field(default_factory=dict)
    timings_s: dict[str, float] = dc_field(default_factory=dict)

    @property
    def failed_tasks(self) -> tuple[str, ...]:
        return tuple(
            name for name, t in self.tasks.items() if t.status == STATUS_FAILED
        )

    def artifact(self, task: str) -> Path:
        record = self.tasks[task]
        if not record.artifacts:
            raise KeyError(f"task {task!r} has no artifacts")
        return self.output_dir / record.artifacts[0]

    def to_doc(self) -> dict:
        return {
            "kind": "run-manifest",
            "config_hash": self.config_hash,
            "tasks": {
                name: {
                    "status": t.status,
                    "input_hash": t.input_hash,
                    "artifacts": list(t.artifacts),
                    "error": t.error,
                }
                for name, t in self.tasks.items()
            },
        }

    def write(self) -> Path:
        path = self.output_dir / "manifest.json"
        path.write_text(json.dumps(self.to_doc(), indent=2, sort_keys=True) + "\n")
        # wall times are observational; they live outside the manifest so
        # identical runs stay byte-identical
        sidecar = self.output_dir / "timings.json"
        sidecar.write_text(
            json.dumps(
                {k: round(v, 6) for k, v in self.timings_s.items()},
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
        return path

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        path = Path(path)
        doc = json.loads(path.read_text())
        if doc.get("kind") != "run-manifest":
            raise ValueError(f"{path} is not a run manifest")
        manifest = cls(config_hash=doc["config_hash"], output_dir=path.parent)
        for name, t in doc["tasks"].items():
            manifest.tasks[name] = TaskRecord(
                name=name,
                status=t["status"],
                input_hash=t["input_hash"],
                artifacts=tuple(t["artifacts"]),
                error=t.get("error"),
            )
        return manifest


def _scene_summary(scene: Scene) -> dict:
    return {
        "kind": "scene-summary",
        "grid": {
            "shape": list(scene.grid.shape),
            "spacing_mm": list(scene.grid.spacing_mm),
            "origin_mm": list(scene.grid.origin_mm),
            "boundary": scene.grid.boundary,
        },
        "label_counts": {
            str(c): n for c, n in sorted(scene.grid.label_histogram().items())
        },
        "tracts": [
            {
                "name": t.name,
                "n_fibers": len(t.fibers),
                "damaged": int(np.sum(np.asarray(t.statuses) == FiberStatus.DAMAGED)),
            }
            for t in scene.tracts
        ],
    }


class _TaskRunner:
    """Executes tasks in order, reusing previous results when hashes match."""

    def __init__(self, config: ExperimentConfig, force: bool):
        self.config = config
        self.force = force
        self.out = config.output_dir
        self.manifest = RunManifest(
            config_hash=config.config_hash(), output_dir=self.out
        )
        previous_path = self.out / "manifest.json"
        self.previous: RunManifest | None = None
        if previous_path.is_file() and not force:
            try:
                self.previous = RunManifest.load(previous_path)
            except (ValueError, KeyError, json.JSONDecodeError):
                self.previous = None
        self._scene: Scene | None = None

    # -- helpers

    def scene(self) -> Scene:
        if self._scene is None:
            self._scene = self.config.build_scene()
        return self._scene

    def _can_skip(self, name: str, input_hash: str) -> TaskRecord | None:
        if self.previous is None:
            return None
        record = self.previous.tasks.get(name)
        if record is None or record.status != STATUS_DONE:
            return None
        if record.input_hash != input_hash:
            return None
        if not all((self.out / rel).is_file() for rel in record.artifacts):
            return None
        return record

    def run_task(self, name: str, input_hash: str, execute) -> TaskRecord:
        """``execute`` writes artifacts and returns their relative paths."""
        cached = self._can_skip(name, input_hash)
        if cached is not None:
            self.manifest.tasks[name] = cached
            return cached
        start = time.perf_counter()
        try:
            artifacts = tuple(execute())
            record = TaskRecord(name, STATUS_DONE, input_hash, artifacts)
        except Exception as exc:  # a task failure must not sink the run
            record = TaskRecord(name, STATUS_FAILED, input_hash, (), str(exc))
        self.manifest.timings_s[name] = time.perf_counter() - start
        self.manifest.tasks[name] = record
        return record

    def _write(self, rel: str, text: str) -> str:
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        return rel


def _file_digest(path: Path) -> str:
    # tolerate files deleted after validation; the task itself will fail
    # with a proper record instead of the hash computation throwing
    if not path.is_file():
        return "missing:" + path.name
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(config: ExperimentConfig, force: bool = False) -> RunManifest:
    """Run every task of the configuration and write the manifest.

    Tasks: scene voxelization, one activation report per (model,
    setting), the comparison table, one tremor score per recording, and
    the tremor report.  A failed task is recorded and skipped by its
    dependents; the rest of the run continues.
    """
    config.output_dir.mkdir(parents=True, exist_ok=True)
    runner = _TaskRunner(config, force)
    norm = config.normalized

    scene_hash = _short_hash(
        canonical_json(
            {
                "scene": norm["scene"],
                "materials": norm["materials"],
                "tracts": [_file_digest(p) for p in config.tract_paths],
            }
        )
    )

    def do_scene():
        summary = _scene_summary(runner.scene())
        return [
            runner._write(
                "scene.json", json.dumps(summary, indent=2, sort_keys=True) + "\n"
            )
        ]

    scene_record = runner.run_task("scene", scene_hash, do_scene)

    # activation tasks, model-major in config order
    report_refs: list[tuple[str, str]] = []  # (task name, artifact rel path)
    for model in config.models:
        for entry, setting in zip(norm["settings"], config.settings):
            name = f"activation/{model}/{setting.label}"
            task_hash = _short_hash(
                canonical_json(
                    {
                        "scene": scene_hash,
                        "setting": entry,
                        "model": model,
                        "options": config.options.for_model(model),
                    }
                )
            )
            rel_json = f"reports/{model}/{_slug(setting.label)}.json"
            rel_text = f"reports/{model}/{_slug(setting.label)}.txt"

            def do_activation(
                setting=setting, model=model, rel_json=rel_json, rel_text=rel_text
            ):
                if scene_record.status != STATUS_DONE:
                    raise RuntimeError("scene task failed; cannot run activation")
                report = run_model(
                    runner.scene(), setting, model, **config.options.for_model(model)
                )
                runner._write(rel_json, report.to_json())
                runner._write(rel_text, report.render_text())
                return [rel_json, rel_text]

            record = runner.run_task(name, task_hash, do_activation)
            report_refs.append((name, rel_json))

    # comparison table over all completed activation reports
    activation_hashes = [
        runner.manifest.tasks[name].input_hash for name, _ in report_refs
    ]
    table_hash = _short_hash(canonical_json(activation_hashes))

    def do_comparison():
        failed = [
            name
            for name, _ in report_refs
            if runner.manifest.tasks[name].status != STATUS_DONE
        ]
        if failed:
            raise RuntimeError(f"activation task(s) failed: {failed}")
        docs = [
            json.loads((config.output_dir / rel).read_text())
            for _, rel in report_refs
        ]
        table = build_comparison(docs)
        artifacts = [
            runner._write("comparison.json", table.to_json()),
            runner._write("comparison.txt", table.render_text()),
        ]
        for model in table.models:
            artifacts.append(
                runner._write(
                    f"comparison_{_slug(model)}.dsv", table.to_dsv(model=model)
                )
            )
        return artifacts

    runner.run_task("comparison", table_hash, do_comparison)

    # tremor scoring per recording
    tremor_refs: list[tuple[str, str, str]] = []  # (hand, label, artifact)
    for entry in config.tremor:
        name = f"tremor/{entry.hand}/{entry.label}"
        rel = f"tremor/{entry.hand}_{_slug(entry.label)}.json"
        task_hash = _short_hash(
            canonical_json(
                {
                    "recording": _file_digest(entry.path),
                    "radii_mm": list(config.options.tremor_radii_mm),
                    "window_s": config.options.tremor_window_s,
                    "band_hz": list(config.options.tremor_band_hz),
                }
            )
        )

        def do_tremor(entry=entry, rel=rel):
            recording = load_recording(entry.path)
            trajectory = reconstruct_trajectory(
                recording, config.options.tremor_band_hz
            )
            model = fit_tremor_model(
                trajectory,
                config.options.tremor_radii_mm,
                config.options.tremor_window_s,
            )
            doc = {
                "kind": "tremor-score",
                "hand": entry.hand,
                "label": entry.label,
                "score": model.score,
                "radii_mm": list(model.radii_mm),
                "states": [int(s) for s in model.states],
                "transition": [[float(v) for v in row] for row in model.transition],
                "stationary": [float(v) for v in model.stationary],
                "band_hz": list(config.options.tremor_band_hz),
                "window_s": config.options.tremor_window_s,
            }
            runner._write(rel, json.dumps(doc, indent=2, sort_keys=True) + "\n")
            return [rel]

        runner.run_task(name, task_hash, do_tremor)
        tremor_refs.append((entry.hand, entry.label, rel))

    if config.tremor:
        tremor_hashes = [
            runner.manifest.tasks[f"tremor/{h}/{l}"].input_hash
            for h, l, _ in tremor_refs
        ]
        report_hash = _short_hash(canonical_json(tremor_hashes))

        def do_tremor_report():
            failed = [
                (h, l)
                for h, l, _ in tremor_refs
                if runner.manifest.tasks[f"tremor/{h}/{l}"].status != STATUS_DONE
            ]
            if failed:
                raise RuntimeError(f"tremor task(s) failed: {failed}")
            entries = []
            for hand, label, rel in tremor_refs:
                doc = json.loads((config.output_dir / rel).read_text())
                model = _model_from_doc(doc)
                entries.append((hand, label, model))
            return [runner._write("tremor_report.txt", score_report(entries))]

        runner.run_task("tremor-report", report_hash, do_tremor_report)

    runner.manifest.write()
    return runner.manifest


def _model_from_doc(doc: dict):
    from .tremor import TremorModel

    return TremorModel(
        radii_mm=tuple(doc["radii_mm"]),
        states=np.array(doc["states"], dtype=np.int64),
        transition=np.array(doc["transition"], dtype=float),
        stationary=np.array(doc["stationary"], dtype=float),
        score=float(doc["score"]),
    )
