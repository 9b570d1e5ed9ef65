"""Command line entry points.

Subcommands: ``validate`` checks a configuration and lists every
violation; ``run`` executes all tasks and exits nonzero iff any task
failed; ``serve`` starts the HTTP service; ``tremor-score`` scores one
recording file; ``export-table`` prints a delimited comparison table
from a finished run; ``demo`` writes the bundled example study.

Environment knobs: ``DBSIM_OUTPUT_DIR`` redirects run artifacts without
touching the config file (the manifest's config hash still describes
the file, not the override), ``DBSIM_WORKERS`` sets the default worker
count for ``serve``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, RunOptions, validate_config
from .demo import write_demo
from .pipeline import ComparisonTable
from .runner import RunManifest, STATUS_DONE, run_experiment
from .server import serve
from .tremor import fit_tremor_model, load_recording, reconstruct_trajectory


def _load_config(path: str):
    try:
        return validate_config(path)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return None


def _with_output_override(cfg):
    override = os.environ.get("DBSIM_OUTPUT_DIR")
    if not override:
        return cfg
    return replace(cfg, output_dir=Path(override).expanduser().resolve())


def _cmd_validate(args) -> int:
    cfg = _load_config(args.config)
    if cfg is None:
        return 2
    print(
        f"configuration ok: {len(cfg.settings)} setting(s), "
        f"{len(cfg.models)} model(s), {len(cfg.tract_paths)} tract(s), "
        f"{len(cfg.tremor)} recording(s)"
    )
    print(f"config hash {cfg.config_hash()}")
    return 0


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if cfg is None:
        return 2
    cfg = _with_output_override(cfg)
    manifest = run_experiment(cfg, force=args.force)
    for name, record in manifest.tasks.items():
        line = f"{record.status:<7} {name}"
        if record.error:
            line += f"  ({record.error})"
        print(line)
    failed = manifest.failed_tasks
    if failed:
        print(f"{len(failed)} task(s) failed", file=sys.stderr)
        return 1
    print(f"manifest: {cfg.output_dir / 'manifest.json'}")
    return 0


def _cmd_serve(args) -> int:
    cfg = _load_config(args.config)
    if cfg is None:
        return 2
    workers = args.workers
    if workers is None:
        workers = int(os.environ.get("DBSIM_WORKERS", "1"))
    serve(cfg, port=args.port, host=args.host, worker_count=workers)
    return 0


def _cmd_tremor_score(args) -> int:
    defaults = RunOptions()
    radii = tuple(args.radii) if args.radii else defaults.tremor_radii_mm
    band = tuple(args.band)
    try:
        recording = load_recording(args.recording)
        trajectory = reconstruct_trajectory(recording, band)
        model = fit_tremor_model(trajectory, radii, args.window)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    doc = {
        "kind": "tremor-score",
        "recording": str(args.recording),
        "score": model.score,
        "radii_mm": list(model.radii_mm),
        "stationary": [float(v) for v in model.stationary],
        "band_hz": list(band),
        "window_s": args.window,
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def _cmd_export_table(args) -> int:
    try:
        manifest = RunManifest.load(args.manifest)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    record = manifest.tasks.get("comparison")
    if record is None or record.status != STATUS_DONE:
        print("error: the run has no completed comparison task", file=sys.stderr)
        return 2
    table = ComparisonTable.from_doc(
        json.loads(manifest.artifact("comparison").read_text())
    )
    try:
        out = table.to_dsv(model=args.model, delimiter=args.delimiter)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sys.stdout.write(out)
    return 0


def _cmd_demo(args) -> int:
    path = write_demo(Path(args.dir))
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dbsim",
        description="stimulation field solves, fiber activation reports, and tremor scoring",
    )
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a configuration file")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)

    r = sub.add_parser("run", help="execute every task of a configuration")
    r.add_argument("config")
    r.add_argument(
        "--force", action="store_true",
        help="rerun tasks even when their inputs are unchanged",
    )
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("serve", help="start the HTTP service")
    s.add_argument("config")
    s.add_argument("--port", type=int, default=8127)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument(
        "--workers", type=int, default=None,
        help="neuron-model worker threads (default DBSIM_WORKERS or 1)",
    )
    s.set_defaults(func=_cmd_serve)

    t = sub.add_parser("tremor-score", help="score a single recording file")
    t.add_argument("recording")
    t.add_argument(
        "--radii", type=float, nargs="+", metavar="MM",
        help="state band edges in mm (default 1 2 4 8 16)",
    )
    t.add_argument("--window", type=float, default=0.5, metavar="S")
    t.add_argument(
        "--band", type=float, nargs=2, default=(2.0, 12.0), metavar=("LO", "HI"),
    )
    t.set_defaults(func=_cmd_tremor_score)

    e = sub.add_parser(
        "export-table", help="print the comparison table of a finished run"
    )
    e.add_argument("manifest")
    e.add_argument("--model", default=None, help="required when the run used several")
    e.add_argument("--delimiter", default="\t")
    e.set_defaults(func=_cmd_export_table)

    d = sub.add_parser("demo", help="write the example study into a directory")
    d.add_argument("dir")
    d.set_defaults(func=_cmd_demo)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
