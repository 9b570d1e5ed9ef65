"""HTTP service for interactive what-if exploration.

``create_app`` wraps a validated configuration in a FastAPI application
that exposes the scene, the configured settings, and a simulate endpoint
with job polling.  Static-model requests are answered synchronously: the
unscaled field solve is cached per contact polarity, so changing only
the amplitude reuses the cached solve and stays interactive.  Neuron
-model requests go through a bounded job queue consumed by worker
threads; a full queue answers 429 so the client can back off.

Job identifiers are content hashes of the request, which makes
submission idempotent: re-posting an identical request returns the
existing job instead of queueing a duplicate.  Results live in memory
for the lifetime of the process; nothing is persisted server-side.
"""

from __future__ import annotations

import hashlib
import queue
import threading
from dataclasses import dataclass

import numpy as np
from fastapi import Body, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from .config import ExperimentConfig, canonical_json, parse_setting_entry
from .field import FieldSolution, scale_to_current, solve_qs_raw
from .pipeline import MODELS, MODEL_STATIC, Scene, run_model, static_report
from .scene import FiberStatus, TISSUE_CODES
from .stimulus import StimulationSetting

_PLANES = {"yz": 0, "xz": 1, "xy": 2}


@dataclass
class Job:
    """One simulation request and its lifecycle."""

    id: str
    model: str
    setting: StimulationSetting
    doc: dict
    status: str = "queued"  # queued | running | done | failed
    report: dict | None = None
    error: str | None = None

    def public(self) -> dict:
        out = {
            "job_id": self.id,
            "model": self.model,
            "status": self.status,
            "setting": self.doc,
        }
        if self.report is not None:
            out["report"] = self.report
        if self.error is not None:
            out["error"] = self.error
        return out


class ServerState:
    """Shared state behind the endpoints; all access goes through a lock
    except the solves themselves, which are pure and deterministic."""

    def __init__(
        self,
        config: ExperimentConfig,
        scene: Scene,
        worker_count: int,
        queue_limit: int,
    ):
        if queue_limit < 1:
            raise ValueError("queue_limit must be at least 1")
        if worker_count < 0:
            raise ValueError("worker_count must be non-negative")
        self.config = config
        self.scene = scene
        self.lock = threading.Lock()
        self.jobs: dict[str, Job] = {}
        self.latest: str | None = None  # last job that produced a report
        self.solutions: dict[tuple, FieldSolution] = {}
        self.queue: queue.Queue = queue.Queue(maxsize=queue_limit)
        self.workers = [
            threading.Thread(target=self._work, daemon=True, name=f"sim-worker-{i}")
            for i in range(worker_count)
        ]
        for w in self.workers:
            w.start()

    def _work(self) -> None:
        while True:
            job = self.queue.get()
            if job is None:
                return
            with self.lock:
                job.status = "running"
            try:
                opts = self.config.options.for_model(job.model)
                report = run_model(self.scene, job.setting, job.model, **opts)
                doc = report.to_doc()
                with self.lock:
                    job.report = doc
                    job.status = "done"
                    self.latest = job.id
            except Exception as exc:  # a bad job must not kill the worker
                with self.lock:
                    job.status = "failed"
                    job.error = f"{type(exc).__name__}: {exc}"
            finally:
                self.queue.task_done()

    def unit_solution(self, setting: StimulationSetting) -> FieldSolution:
        """Cached unscaled solve for the setting's contact polarity."""
        key = (tuple(sorted(setting.cathodes)), tuple(sorted(setting.anodes)))
        with self.lock:
            raw = self.solutions.get(key)
        if raw is None:
            # solved outside the lock; concurrent duplicates are identical
            # by determinism and setdefault keeps exactly one
            raw = solve_qs_raw(self.scene.grid, self.scene.materials, setting)
            with self.lock:
                raw = self.solutions.setdefault(key, raw)
        return raw

    def scaled_solution(self, setting: StimulationSetting) -> FieldSolution:
        return scale_to_current(self.unit_solution(setting), setting.amplitude_ma)


def _request_id(model: str, entry: dict) -> str:
    digest = hashlib.sha256(
        canonical_json({"model": model, "setting": entry}).encode()
    ).hexdigest()
    return "j-" + digest[:12]


def create_app(
    config: ExperimentConfig,
    worker_count: int = 1,
    queue_limit: int = 8,
) -> FastAPI:
    """Build the service around a validated configuration.

    The scene is voxelized up front so the first request does not pay
    for it.  ``worker_count`` sizes the neuron-model pool (0 keeps jobs
    queued, which is mainly useful for inspection); ``queue_limit``
    bounds how many jobs may wait before submissions get 429.
    """
    scene = config.build_scene()
    state = ServerState(config, scene, worker_count, queue_limit)
    app = FastAPI(title="fiber activation explorer", docs_url=None, redoc_url=None)
    # the browser client may be served from another local port; the
    # service holds no credentials or per-user state, so open CORS is safe
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET", "POST"],
        allow_headers=["content-type"],
    )
    app.state.sim = state
    addressable = set(scene.lead.contact_groups)

    @app.get("/api/scene")
    def get_scene() -> dict:
        lead = scene.lead
        grid = scene.grid
        code_names = {code: name for name, code in TISSUE_CODES.items()}
        counts: dict[str, int] = {}
        for code, n in sorted(grid.label_histogram().items()):
            name = code_names.get(code, "electrode")
            counts[name] = counts.get(name, 0) + int(n)
        return {
            "lead": {
                "tip_mm": list(lead.tip_mm),
                "direction": list(lead.direction),
                "shaft_radius_mm": lead.shaft_radius_mm,
                "shaft_length_mm": lead.shaft_length_mm,
                "contacts": [
                    {
                        "id": c.id,
                        "z_lo_mm": c.z_lo_mm,
                        "z_hi_mm": c.z_hi_mm,
                        "theta_lo_deg": c.theta_lo_deg,
                        "theta_hi_deg": c.theta_hi_deg,
                        "ring": c.is_ring,
                    }
                    for c in lead.contacts
                ],
                "groups": {
                    name: list(members)
                    for name, members in sorted(lead.contact_groups.items())
                },
            },
            "grid": {
                "shape": list(grid.shape),
                "origin_mm": list(grid.origin_mm),
                "spacing_mm": list(grid.spacing_mm),
                "boundary": grid.boundary,
            },
            "label_counts": counts,
            "tracts": [
                {
                    "name": t.name,
                    "n_fibers": len(t),
                    "damaged": t.count(FiberStatus.DAMAGED),
                }
                for t in scene.tracts
            ],
        }

    @app.get("/api/settings")
    def get_settings() -> dict:
        return {
            "settings": config.normalized["settings"],
            "models": list(MODELS),
        }

    @app.post("/api/simulate")
    def simulate(body: dict = Body(...)) -> dict:
        model = body.get("model", MODEL_STATIC)
        if model not in MODELS:
            raise HTTPException(
                422, [f"unknown model {model!r}, expected one of {list(MODELS)}"]
            )
        setting, entry, bad = parse_setting_entry(body.get("setting"), addressable)
        if setting is None or bad:
            raise HTTPException(422, bad)
        jid = _request_id(model, entry)
        with state.lock:
            existing = state.jobs.get(jid)
            if existing is not None and existing.status != "failed":
                return {"job_id": jid, "status": existing.status}

        job = Job(id=jid, model=model, setting=setting, doc=entry)
        if model == MODEL_STATIC:
            try:
                solution = state.scaled_solution(setting)
                opts = config.options.for_model(MODEL_STATIC)
                report = static_report(scene, setting, solution, **opts)
                job.report = report.to_doc()
                job.status = "done"
            except Exception as exc:
                job.status = "failed"
                job.error = f"{type(exc).__name__}: {exc}"
            with state.lock:
                state.jobs[jid] = job
                if job.status == "done":
                    state.latest = jid
            return {"job_id": jid, "status": job.status}

        with state.lock:
            state.jobs[jid] = job
        try:
            state.queue.put_nowait(job)
        except queue.Full:
            with state.lock:
                del state.jobs[jid]
            raise HTTPException(
                429, "job queue full; retry after a running job finishes"
            ) from None
        return {"job_id": jid, "status": job.status}

    @app.get("/api/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        with state.lock:
            job = state.jobs.get(job_id)
            if job is None:
                raise HTTPException(404, "unknown job id")
            return job.public()

    @app.get("/api/field/{job_id}/slice")
    def field_slice(job_id: str, plane: str = "xz", coord_mm: float | None = None) -> dict:
        """Scalar |E| slice through the stationary solve of a job's
        setting.  For neuron-model jobs this is a navigation aid, not
        the waveform the fibers saw; it is available as soon as the job
        exists, even while the simulation is still running."""
        with state.lock:
            job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, "unknown job id")
        if plane not in _PLANES:
            raise HTTPException(422, f"plane must be one of {sorted(_PLANES)}")
        fixed = _PLANES[plane]
        grid = scene.grid
        centers = grid.axis_centers_mm(fixed)
        if coord_mm is None:
            # default: cut through the centroid of the driven cathodes
            coord_mm = float(
                scene.lead.active_center_mm(job.setting.cathodes)[fixed]
            )
        index = int(np.argmin(np.abs(centers - coord_mm)))
        mag = state.scaled_solution(job.setting).e_magnitude_grid()
        values = np.take(mag, index, axis=fixed)
        keep = [a for a in (0, 1, 2) if a != fixed]
        return {
            "job_id": job_id,
            "plane": plane,
            "coord_mm": float(centers[index]),
            "axes": ["xyz"[a] for a in keep],
            "origin_mm": [grid.origin_mm[a] for a in keep],
            "spacing_mm": [grid.spacing_mm[a] for a in keep],
            "shape": list(values.shape),
            "unit": "V/m",
            "values": values.tolist(),
        }

    @app.get("/api/tracts")
    def get_tracts() -> dict:
        with state.lock:
            latest = state.latest
            report = state.jobs[latest].report if latest is not None else None
        by_name: dict[str, list[int]] = {}
        if report is not None:
            for t in report["tracts"]:
                by_name[t["name"]] = t["statuses"]
        return {
            "from_job": latest,
            "status_codes": {s.name.lower(): int(s) for s in FiberStatus},
            "tracts": [
                {
                    "name": t.name,
                    "diameters_um": [float(d) for d in t.diameters_um],
                    "statuses": by_name.get(t.name, [int(s) for s in t.statuses]),
                    "fibers": [f.tolist() for f in t.fibers],
                }
                for t in scene.tracts
            ],
        }

    return app


def serve(
    config: ExperimentConfig,
    port: int = 8127,
    host: str = "127.0.0.1",
    worker_count: int = 1,
    queue_limit: int = 8,
) -> None:
    """Run the service until interrupted."""
    import uvicorn

    app = create_app(config, worker_count=worker_count, queue_limit=queue_limit)
    uvicorn.run(app, host=host, port=port, log_level="info")
