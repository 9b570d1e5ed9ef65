"""Shipped reference workspace.

A small but complete study: a directional lead in a gray-matter pocket,
two fiber bundles with opposite relationships to the contact levels,
five programming settings including a polarity pair, and synthetic
accelerometer recordings for the tremor pipeline.  ``write_demo``
materializes everything as plain files next to a ready-to-run
configuration.

The geometry is deliberately asymmetric along the shaft: the crossing
bundle hugs the second contact level, so driving the cathode there
recruits clearly more of it than the swapped polarity does.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

from .pipeline import Scene, build_scene
from .scene import (
    FiberTract,
    LeadGeometry,
    MaterialTable,
    TissueEllipsoid,
    TissueLayout,
    TissueSlab,
    build_lead,
    make_tract,
    save_fiber_tract,
)
from .stimulus import StimulationSetting
from .tremor import TremorRecording, save_recording

DEMO_RESOLUTION_MM = 0.5
DEMO_BOX_MM = 30.0

# displacement amplitude (mm) of the synthetic tremor per setting
_TREMOR_MM = {"C2-,C4+": 0.3, "C4-,C2+": 2.4}
_TREMOR_HZ = 4.8


def demo_lead() -> LeadGeometry:
    return build_lead()


def demo_tissue() -> TissueLayout:
    """White background, a gray pocket around the active contacts, and
    a thin fluid layer well above them."""
    return TissueLayout(
        background="white",
        ellipsoids=(
            TissueEllipsoid("gray", (0.0, 0.0, 4.0), (8.0, 8.0, 6.5)),
        ),
        slabs=(
            TissueSlab("csf", (-12.0, -12.0, 12.0), (12.0, 12.0, 13.5)),
        ),
    )


def _crossing_fiber(x0: float, z0: float, bow_mm: float = 0.4) -> np.ndarray:
    # gentle arc past the shaft, running along y
    y = np.linspace(-6.0, 6.0, 13)
    t = y / 6.0
    x = x0 + bow_mm * (1.0 - t * t)
    z = np.full_like(y, z0)
    return np.column_stack([x, y, z])


def _ascending_fiber(x0: float, drift_mm: float = 0.8) -> np.ndarray:
    # climbs along the shaft and ends inside the top contact span, so a
    # cathode there recruits it far more easily than the swapped drive
    z = np.linspace(-2.0, 7.3, 12)
    t = (z - z.min()) / (z.max() - z.min())
    x = np.full_like(z, x0)
    y = drift_mm * (t - 0.5)
    return np.column_stack([x, y, z])


def demo_tracts() -> tuple[FiberTract, FiberTract]:
    """Two bundles of 5.7 um fibers.

    The crossing bundle runs transverse at the second contact level; the
    ascending bundle follows the shaft and terminates at the fourth, its
    two innermost fibers close enough to be damaged by the implant.
    """
    crossing = make_tract(
        "crossing",
        [
            _crossing_fiber(x0, 3.25 + dz)
            for x0, dz in [
                (2.3, 0.0), (2.7, -0.25), (3.2, 0.25), (3.8, 0.0),
                (4.5, -0.25), (5.3, 0.25), (6.2, 0.0), (7.2, 0.0),
            ]
        ],
        5.7,
    )
    ascending = make_tract(
        "ascending",
        [
            _ascending_fiber(x0)
            for x0 in (0.55, 0.7, 2.2, 3.0, 3.8, 4.6, 5.4, 6.2)
        ],
        5.7,
    )
    return crossing, ascending


def demo_settings() -> tuple[StimulationSetting, ...]:
    def bipolar(cathode: str, anode: str, amplitude_ma: float, label: str | None = None):
        return StimulationSetting(
            label=label or f"{cathode}-,{anode}+",
            cathodes=(cathode,),
            anodes=(anode,),
            amplitude_ma=amplitude_ma,
            frequency_hz=130.0,
            pulse_width_us=60.0,
        )

    return (
        bipolar("C3", "C4", 3.0),
        bipolar("C4", "C3", 3.0),
        bipolar("C2", "C4", 3.0),
        bipolar("C4", "C2", 3.0),
        bipolar("C4", "C2", 1.6, label="C4-,C2+ @1.6mA"),
    )


def demo_scene() -> Scene:
    return build_scene(
        demo_lead(),
        demo_tissue(),
        MaterialTable.default(),
        list(demo_tracts()),
        DEMO_RESOLUTION_MM,
        box_size_mm=DEMO_BOX_MM,
    )


def synth_recording(
    hand: str,
    label: str,
    duration_s: float = 20.0,
    sample_rate_hz: float = 128.0,
) -> TremorRecording:
    """Deterministic postural-tremor accelerometry for one hand under
    one setting.

    Planar sinusoidal tremor whose displacement amplitude depends on the
    setting, slow envelope modulation, a large sub-band drift, and wide
    band sensor noise.  The same (hand, label) always yields the same
    samples.
    """
    amp_mm = _TREMOR_MM.get(label, 1.5)
    # hash() is salted per process; crc32 keeps the seed reproducible
    seed = zlib.crc32(f"{hand}|{label}".encode())
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz

    w = 2.0 * np.pi * _TREMOR_HZ
    envelope = 1.0 + 0.25 * np.sin(2.0 * np.pi * 0.11 * t + rng.uniform(0, 2 * np.pi))
    disp_m = amp_mm * 1e-3
    phase = rng.uniform(0, 2 * np.pi)
    ax = disp_m * w * w * envelope * np.sin(w * t + phase)
    ay = 0.6 * disp_m * w * w * envelope * np.sin(w * t + phase + np.pi / 3)
    az = 0.15 * disp_m * w * w * envelope * np.sin(w * t + phase + np.pi / 2)

    drift = 0.8 * np.sin(2.0 * np.pi * 0.3 * t + rng.uniform(0, 2 * np.pi))
    noise = rng.normal(0.0, 0.05, size=(n, 3))
    accel = np.column_stack([ax, ay, az]) + noise
    accel[:, 0] += drift
    return TremorRecording(sample_rate_hz=sample_rate_hz, accel_mps2=accel)


def demo_tremor_entries() -> tuple[tuple[str, str], ...]:
    return (
        ("left", "C2-,C4+"),
        ("left", "C4-,C2+"),
        ("right", "C2-,C4+"),
        ("right", "C4-,C2+"),
    )


def write_demo(root: str | Path) -> Path:
    """Materialize the reference workspace under ``root``.

    Returns the path of the written configuration file.  Tracts and
    recordings land in subdirectories; all references in the config are
    relative so the directory can be moved freely.
    """
    root = Path(root)
    (root / "tracts").mkdir(parents=True, exist_ok=True)
    (root / "recordings").mkdir(parents=True, exist_ok=True)

    tract_refs = []
    for tract in demo_tracts():
        rel = f"tracts/{tract.name}.json"
        save_fiber_tract(tract, root / rel)
        tract_refs.append(rel)

    tremor_refs = []
    for hand, label in demo_tremor_entries():
        slug = label.replace("-,", "_").replace("+", "")
        rel = f"recordings/{hand}_{slug}.csv"
        save_recording(synth_recording(hand, label), root / rel)
        tremor_refs.append({"hand": hand, "label": label, "path": rel})

    settings = []
    for s in demo_settings():
        entry = {
            "label": s.label,
            "amplitude_ma": s.amplitude_ma,
            "frequency_hz": s.frequency_hz,
            "pulse_width_us": s.pulse_width_us,
        }
        polarity = ",".join(
            [f"{c}-" for c in s.cathodes] + [f"{a}+" for a in s.anodes]
        )
        if polarity != s.label:
            entry["contacts"] = polarity
        settings.append(entry)

    config = {
        "scene": {
            "lead": {"tip_mm": [0.0, 0.0, 0.0], "direction": [0.0, 0.0, 1.0]},
            "tissue": {
                "background": "white",
                "ellipsoids": [
                    {
                        "tissue": "gray",
                        "center_mm": [0.0, 0.0, 4.0],
                        "radii_mm": [8.0, 8.0, 6.5],
                    }
                ],
                "slabs": [
                    {
                        "tissue": "csf",
                        "lo_mm": [-12.0, -12.0, 12.0],
                        "hi_mm": [12.0, 12.0, 13.5],
                    }
                ],
            },
            "resolution_mm": DEMO_RESOLUTION_MM,
            "box_size_mm": DEMO_BOX_MM,
        },
        "materials": "default",
        "settings": settings,
        "models": ["static"],
        "tracts": tract_refs,
        "tremor": tremor_refs,
        "output_dir": "out",
    }
    path = root / "config.json"
    path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    return path
