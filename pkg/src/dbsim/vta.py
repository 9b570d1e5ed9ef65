"""Static activation model: field-magnitude thresholding.

A fiber counts as activated when the local field magnitude reaches a
threshold at any point along its path.  Thresholds depend on pulse width
and fiber diameter through a small interpolation table; the volume above
threshold is also available as a voxel mask.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .field import FieldSolution, _trilinear, peak_e_magnitude_grid
from .scene import FiberStatus, FiberTract, VoxelGrid, resample_polyline

# Fallback when no table entry fits the fiber population at hand.
GENERIC_THRESHOLD_V_PER_M = 200.0

# Arc-length step for sampling the field along a fiber (mm).  Below the
# voxel scale of any grid the solver accepts, so no crossing is missed.
FIBER_SAMPLE_SPACING_MM = 0.5


@dataclass(frozen=True)
class ThresholdTable:
    """Activation thresholds (V/m) on a (pulse width, diameter) grid.

    ``entries`` holds (pulse_width_us, fiber_diameter_um, e_v_per_m)
    triples forming a complete rectangular grid so bilinear interpolation
    is well defined.  A single row or column degenerates to linear or
    constant interpolation along the populated axis.
    """

    entries: tuple[tuple[float, float, float], ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("threshold table is empty")
        pws = sorted({e[0] for e in self.entries})
        diams = sorted({e[1] for e in self.entries})
        seen = {}
        for pw, d, e in self.entries:
            if e <= 0:
                raise ValueError("thresholds must be positive")
            if (pw, d) in seen:
                raise ValueError(f"duplicate table knot ({pw}, {d})")
            seen[(pw, d)] = e
        if len(seen) != len(pws) * len(diams):
            raise ValueError("table knots must form a complete grid")
        for d in diams:
            col = [seen[(pw, d)] for pw in pws]
            if any(b > a for a, b in zip(col, col[1:])):
                raise ValueError(
                    "threshold must be non-increasing in pulse width"
                )

    @classmethod
    def default(cls) -> "ThresholdTable":
        # two anchored knots at 3.5 um; wider tables come in by config
        return cls(entries=((50.0, 3.5, 230.0), (90.0, 3.5, 150.0)))

    @classmethod
    def from_config(cls, rows: list[dict]) -> "ThresholdTable":
        return cls(
            entries=tuple(
                (float(r["pw_us"]), float(r["diam_um"]), float(r["e_vm"]))
                for r in rows
            )
        )

    def to_config(self) -> list[dict]:
        return [
            {"pw_us": pw, "diam_um": d, "e_vm": e} for pw, d, e in self.entries
        ]

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pws = np.array(sorted({e[0] for e in self.entries}))
        diams = np.array(sorted({e[1] for e in self.entries}))
        values = np.empty((len(pws), len(diams)))
        lut = {(pw, d): e for pw, d, e in self.entries}
        for i, pw in enumerate(pws):
            for j, d in enumerate(diams):
                values[i, j] = lut[(pw, d)]
        return pws, diams, values


def _axis_weights(x: float, knots: np.ndarray, extrapolate: bool):
    """Index and blend weight for 1-d linear interpolation on ``knots``."""
    if len(knots) == 1:
        if x != knots[0] and not extrapolate:
            raise ValueError(
                f"query {x} outside table hull {knots[0]}..{knots[0]}"
            )
        return 0, 0.0
    if (x < knots[0] or x > knots[-1]) and not extrapolate:
        raise ValueError(
            f"query {x} outside table hull {knots[0]}..{knots[-1]}"
        )
    x = float(np.clip(x, knots[0], knots[-1]))  # extrapolation clamps
    i = int(np.searchsorted(knots, x, side="right") - 1)
    i = min(i, len(knots) - 2)
    t = (x - knots[i]) / (knots[i + 1] - knots[i])
    return i, t


def threshold_for(
    pulse_width_us: float,
    fiber_diameter_um: float,
    table: ThresholdTable | None = None,
    extrapolate: bool = False,
) -> float:
    """Bilinear threshold lookup; exact at knots.

    Queries outside the table hull raise unless ``extrapolate`` is set,
    in which case they clamp to the nearest edge.
    """
    table = table or ThresholdTable.default()
    pws, diams, values = table.axes()
    i, t = _axis_weights(pulse_width_us, pws, extrapolate)
    j, s = _axis_weights(fiber_diameter_um, diams, extrapolate)
    if len(pws) == 1:
        row0 = row1 = values[0]
    else:
        row0, row1 = values[i], values[i + 1]
    if len(diams) == 1:
        v0, v1 = row0[0], row1[0]
    else:
        v0 = row0[j] * (1 - s) + row0[j + 1] * s
        v1 = row1[j] * (1 - s) + row1[j + 1] * s
    return float(v0 * (1 - t) + v1 * t)


@dataclass(frozen=True)
class VtaMask:
    """Voxels whose field magnitude reaches the threshold."""

    grid: VoxelGrid
    mask: np.ndarray
    threshold_v_per_m: float

    def __post_init__(self) -> None:
        self.mask.setflags(write=False)

    @property
    def voxel_count(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def volume_mm3(self) -> float:
        return self.voxel_count * self.grid.voxel_volume_mm3


def _magnitude_grid(
    solution, grid: VoxelGrid | None, pulse_width_s: float | None
) -> tuple[VoxelGrid, np.ndarray]:
    """Accept a stationary solution, a harmonic solution list, or a
    precomputed magnitude volume (with its grid) and return |E| (V/m)."""
    if isinstance(solution, FieldSolution):
        if solution.is_harmonic:
            raise TypeError(
                "single harmonic solution is a phasor; pass the full "
                "solution list or a peak magnitude volume"
            )
        return solution.grid, solution.e_magnitude_grid()
    if isinstance(solution, (list, tuple)) and solution and isinstance(
        solution[0], FieldSolution
    ):
        if pulse_width_s is None:
            raise ValueError("pulse width needed to take the waveform peak")
        return solution[0].grid, peak_e_magnitude_grid(
            list(solution), pulse_width_s
        )
    mag = np.asarray(solution, dtype=float)
    if grid is None:
        raise ValueError("a grid is required with a raw magnitude volume")
    if mag.shape != grid.shape:
        raise ValueError("magnitude volume does not match the grid shape")
    return grid, mag


def vta_region(
    solution,
    threshold_v_per_m: float,
    grid: VoxelGrid | None = None,
    pulse_width_s: float | None = None,
) -> VtaMask:
    """Voxel mask where |E| >= threshold, with volume in mm^3.

    ``solution`` may be a stationary FieldSolution, a list of harmonic
    solutions (peak time-domain magnitude is used, ``pulse_width_s``
    required), or a magnitude volume paired with ``grid``.
    """
    if threshold_v_per_m <= 0:
        raise ValueError("threshold must be positive")
    g, mag = _magnitude_grid(solution, grid, pulse_width_s)
    return VtaMask(grid=g, mask=mag >= threshold_v_per_m, threshold_v_per_m=threshold_v_per_m)


def _fiber_peak_magnitudes(
    grid: VoxelGrid,
    mag: np.ndarray,
    tract: FiberTract,
    sample_spacing_mm: float,
) -> np.ndarray:
    """Max sampled |E| per fiber; points outside the grid contribute 0."""
    peaks = np.zeros(len(tract.fibers))
    for i, fiber in enumerate(tract.fibers):
        pts = resample_polyline(np.asarray(fiber), sample_spacing_mm)
        inside = grid.contains(pts)
        if not np.any(inside):
            continue
        peaks[i] = float(np.max(_trilinear(grid, mag, pts[inside])))
    return peaks


def activated_fibers_static(
    solution,
    tract: FiberTract,
    threshold_v_per_m: float,
    grid: VoxelGrid | None = None,
    pulse_width_s: float | None = None,
    sample_spacing_mm: float = FIBER_SAMPLE_SPACING_MM,
) -> FiberTract:
    """Mark each undecided fiber activated iff |E| reaches the threshold
    at one or more of its sample points.

    Fibers already classified (damaged) keep their status.  Polylines
    are resampled to ``sample_spacing_mm`` before evaluation; sample
    points outside the grid see zero field.
    """
    if threshold_v_per_m <= 0:
        raise ValueError("threshold must be positive")
    g, mag = _magnitude_grid(solution, grid, pulse_width_s)
    peaks = _fiber_peak_magnitudes(g, mag, tract, sample_spacing_mm)
    statuses = np.array(tract.statuses, dtype=np.int8)
    undecided = statuses == FiberStatus.UNKNOWN
    hot = peaks >= threshold_v_per_m
    statuses[undecided & hot] = FiberStatus.ACTIVATED
    statuses[undecided & ~hot] = FiberStatus.NON_ACTIVATED
    return tract.with_statuses(statuses)


def activation_percentage(
    tract: FiberTract, denominator_rule: str = "all"
) -> float:
    """100 * activated / denominator.

    ``denominator_rule`` is "all" (every fiber counts) or "non-damaged"
    (damaged fibers leave the denominator).  Every fiber must already be
    classified.
    """
    statuses = np.asarray(tract.statuses)
    if len(statuses) == 0:
        raise ValueError("empty tract")
    if np.any(statuses == FiberStatus.UNKNOWN):
        raise ValueError("tract still has unclassified fibers")
    activated = int(np.sum(statuses == FiberStatus.ACTIVATED))
    if denominator_rule == "all":
        denom = len(statuses)
    elif denominator_rule == "non-damaged":
        denom = int(np.sum(statuses != FiberStatus.DAMAGED))
        if denom == 0:
            raise ValueError("all fibers damaged; denominator is empty")
    else:
        raise ValueError(f"unknown denominator rule {denominator_rule!r}")
    return 100.0 * activated / denom


def export_vta(mask: VtaMask, basepath: str | Path) -> tuple[Path, Path]:
    """Write the mask in the same raw-volume format the potentials use
    (float64 zeros and ones plus a text header)."""
    basepath = Path(basepath)
    raw = basepath.with_suffix(".bin")
    hdr = basepath.with_suffix(".hdr")
    mask.mask.astype(float).tofile(raw)
    header = {
        "dims": list(mask.grid.shape),
        "spacing_mm": list(mask.grid.spacing_mm),
        "origin_mm": list(mask.grid.origin_mm),
        "units": "bool (0/1)",
        "encoding": "float64",
        "order": "C",
        "threshold_v_per_m": mask.threshold_v_per_m,
    }
    hdr.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return raw, hdr
