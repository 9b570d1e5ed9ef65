"""Lead geometry, tissue layout, and voxelization.

The scene is everything that exists before a stimulus is applied: a
directional eight-contact lead (ring tip, two segmented levels split into
a/b/c thirds, ring top), a tissue layout around it, and optional fiber
tracts.  ``voxelize_scene`` rasterizes lead and tissue into a labeled
voxel grid; material properties stay in a separate lookup table so the
same grid serves both purely conductive and dispersive solves.

Units are mm for geometry, S/m for conductivity.  Label codes are small
integers: tissue codes first, then the insulated shaft, then one code per
contact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m

# voxel label codes
TISSUE_CODES = {"gray": 1, "white": 2, "csf": 3, "encapsulation": 4, "homogeneous": 5}
CODE_SHAFT = 6
CODE_CONTACT_BASE = 7  # contact i gets code CODE_CONTACT_BASE + i


class FiberStatus(IntEnum):
    UNKNOWN = 0
    ACTIVATED = 1
    NON_ACTIVATED = 2
    DAMAGED = 3
    FAILED = 4


@dataclass(frozen=True)
class Contact:
    """One metal contact on the shaft surface.

    Axial extent is measured from the lead tip along the shaft axis;
    angular extent is in degrees about the axis.  A ring spans the full
    360, a segment strictly less.
    """

    id: str
    z_lo_mm: float
    z_hi_mm: float
    theta_lo_deg: float = 0.0
    theta_hi_deg: float = 360.0

    def __post_init__(self) -> None:
        if self.z_lo_mm >= self.z_hi_mm:
            raise ValueError(f"contact {self.id}: z_lo must be below z_hi")
        if not (0.0 <= self.theta_lo_deg < self.theta_hi_deg <= 360.0):
            raise ValueError(f"contact {self.id}: bad angular extent")

    @property
    def is_ring(self) -> bool:
        return self.theta_hi_deg - self.theta_lo_deg >= 360.0

    def covers(self, z_mm: np.ndarray, theta_deg: np.ndarray) -> np.ndarray:
        """Boolean mask of (axial, angular) coordinates on this contact."""
        inside_z = (z_mm >= self.z_lo_mm) & (z_mm < self.z_hi_mm)
        if self.is_ring:
            return inside_z
        return inside_z & (theta_deg >= self.theta_lo_deg) & (theta_deg < self.theta_hi_deg)


@dataclass(frozen=True)
class LeadGeometry:
    """Straight cylindrical lead with surface contacts.

    ``tip_mm`` is the distal end of the shaft, ``direction`` the unit
    axis pointing from tip toward the connector.  ``contact_groups`` maps
    selectable names to physical contact ids: every physical contact maps
    to itself, and ganged ring-equivalents (e.g. "C2" for C2a+C2b+C2c)
    may be added on top.
    """

    tip_mm: tuple[float, float, float]
    direction: tuple[float, float, float]
    shaft_radius_mm: float
    shaft_length_mm: float
    contacts: tuple[Contact, ...]
    contact_groups: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if n == 0:
            raise ValueError("lead direction must be nonzero")
        object.__setattr__(self, "direction", tuple(d / n))
        if self.shaft_radius_mm <= 0 or self.shaft_length_mm <= 0:
            raise ValueError("shaft dimensions must be positive")
        ids = [c.id for c in self.contacts]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate contact id")
        self._check_no_overlap()
        groups = dict(self.contact_groups)
        for c in self.contacts:
            groups.setdefault(c.id, (c.id,))
        for name, members in groups.items():
            unknown = set(members) - set(ids)
            if unknown:
                raise ValueError(f"group {name!r} references unknown contacts {sorted(unknown)}")
        object.__setattr__(self, "contact_groups", groups)

    def _check_no_overlap(self) -> None:
        for i, a in enumerate(self.contacts):
            for b in self.contacts[i + 1 :]:
                z_overlap = a.z_lo_mm < b.z_hi_mm and b.z_lo_mm < a.z_hi_mm
                t_overlap = a.theta_lo_deg < b.theta_hi_deg and b.theta_lo_deg < a.theta_hi_deg
                if z_overlap and t_overlap:
                    raise ValueError(f"contacts {a.id} and {b.id} overlap")

    @property
    def contact_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.contacts)

    def resolve_group(self, name: str) -> tuple[str, ...]:
        """Physical contact ids behind a selectable contact name."""
        try:
            return self.contact_groups[name]
        except KeyError:
            raise KeyError(f"unknown contact or group {name!r}") from None

    def frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (e1, e2, axis) frame; e1/e2 fix the angular origin."""
        axis = np.asarray(self.direction)
        trial = np.array([1.0, 0.0, 0.0])
        if abs(np.dot(trial, axis)) > 0.9:
            trial = np.array([0.0, 1.0, 0.0])
        e1 = trial - np.dot(trial, axis) * axis
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(axis, e1)
        return e1, e2, axis

    def cylindrical(self, points_mm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Map points to (radius, axial position from tip, angle in degrees)."""
        e1, e2, axis = self.frame()
        rel = np.asarray(points_mm, dtype=float) - np.asarray(self.tip_mm)
        z = rel @ axis
        x1 = rel @ e1
        x2 = rel @ e2
        r = np.hypot(x1, x2)
        theta = np.degrees(np.arctan2(x2, x1)) % 360.0
        return r, z, theta

    def active_center_mm(self, contact_names: tuple[str, ...]) -> np.ndarray:
        """Centroid of the named contacts on the shaft axis."""
        physical = {pid for name in contact_names for pid in self.resolve_group(name)}
        zs = [
            0.5 * (c.z_lo_mm + c.z_hi_mm) for c in self.contacts if c.id in physical
        ]
        if not zs:
            raise ValueError("no physical contacts behind the given names")
        return np.asarray(self.tip_mm) + np.mean(zs) * np.asarray(self.direction)


def build_lead(
    tip_mm: tuple[float, float, float] = (0.0, 0.0, 0.0),
    direction: tuple[float, float, float] = (0.0, 0.0, 1.0),
    shaft_radius_mm: float = 0.65,
    contact_height_mm: float = 1.5,
    contact_gap_mm: float = 0.5,
    tip_clearance_mm: float = 0.5,
    shaft_length_mm: float = 100.0,
    gang_segments: bool = True,
) -> LeadGeometry:
    """Construct the default directional lead.

    Four levels spaced ``contact_gap_mm`` apart starting one clearance
    above the tip: ring C1, segmented C2a/b/c and C3a/b/c (120 degree
    thirds), ring C4.  With ``gang_segments`` the groups C2 and C3 select
    all thirds of a level at once, giving a ring-equivalent drive.
    """
    if contact_height_mm <= 0 or contact_gap_mm < 0:
        raise ValueError("contact dimensions must be positive")
    thirds = [(0.0, 120.0), (120.0, 240.0), (240.0, 360.0)]
    contacts: list[Contact] = []
    z = tip_clearance_mm
    contacts.append(Contact("C1", z, z + contact_height_mm))
    z += contact_height_mm + contact_gap_mm
    for level in ("C2", "C3"):
        for suffix, (t0, t1) in zip("abc", thirds):
            contacts.append(Contact(level + suffix, z, z + contact_height_mm, t0, t1))
        z += contact_height_mm + contact_gap_mm
    contacts.append(Contact("C4", z, z + contact_height_mm))

    groups: dict[str, tuple[str, ...]] = {}
    if gang_segments:
        groups["C2"] = ("C2a", "C2b", "C2c")
        groups["C3"] = ("C3a", "C3b", "C3c")
    return LeadGeometry(
        tip_mm=tip_mm,
        direction=direction,
        shaft_radius_mm=shaft_radius_mm,
        shaft_length_mm=shaft_length_mm,
        contacts=tuple(contacts),
        contact_groups=groups,
    )


@dataclass(frozen=True)
class MaterialTable:
    """Conductivity and relative permittivity per tissue name."""

    sigma_s_per_m: dict[str, float]
    eps_r: dict[str, float]

    def __post_init__(self) -> None:
        for name in TISSUE_CODES:
            if name not in self.sigma_s_per_m or name not in self.eps_r:
                raise ValueError(f"material table missing tissue {name!r}")
        if any(s <= 0 for s in self.sigma_s_per_m.values()):
            raise ValueError("conductivities must be positive")
        # zero permittivity is allowed so the dispersive solver can be
        # collapsed onto the purely conductive one in comparisons
        if any(e < 0 for e in self.eps_r.values()):
            raise ValueError("relative permittivities must be non-negative")

    @classmethod
    def default(cls) -> "MaterialTable":
        return cls(
            sigma_s_per_m={
                "gray": 0.09,
                "white": 0.06,
                "csf": 2.0,
                "encapsulation": 0.05,
                "homogeneous": 0.1,
            },
            eps_r={
                "gray": 30.407e4,
                "white": 13.752e4,
                "csf": 0.0109e4,
                "encapsulation": 30.407e4,
                "homogeneous": 13.800e4,
            },
        )

    def override(self, sigma: dict[str, float] | None = None, eps: dict[str, float] | None = None) -> "MaterialTable":
        return MaterialTable(
            sigma_s_per_m={**self.sigma_s_per_m, **(sigma or {})},
            eps_r={**self.eps_r, **(eps or {})},
        )

    def conductivity_lut(self) -> np.ndarray:
        """Per-label conductivity; electrode codes get 0 (removed cells)."""
        lut = np.zeros(256)
        for name, code in TISSUE_CODES.items():
            lut[code] = self.sigma_s_per_m[name]
        return lut

    def admittivity_lut(self, omega_rad_s: float) -> np.ndarray:
        """sigma + i omega eps0 eps_r per label, electrode codes 0."""
        lut = np.zeros(256, dtype=complex)
        for name, code in TISSUE_CODES.items():
            lut[code] = self.sigma_s_per_m[name] + (
                1j * omega_rad_s * VACUUM_PERMITTIVITY * self.eps_r[name]
            )
        return lut


@dataclass(frozen=True)
class TissueSlab:
    tissue: str
    lo_mm: tuple[float, float, float]
    hi_mm: tuple[float, float, float]


@dataclass(frozen=True)
class TissueEllipsoid:
    tissue: str
    center_mm: tuple[float, float, float]
    radii_mm: tuple[float, float, float]


@dataclass(frozen=True)
class TissueLayout:
    """Synthetic tissue layout: background plus shapes, later shapes win.

    ``label_volume`` optionally supplies externally produced labels
    (tissue codes) sampled nearest-neighbor; it overrides the shapes.
    """

    background: str = "homogeneous"
    slabs: tuple[TissueSlab, ...] = ()
    ellipsoids: tuple[TissueEllipsoid, ...] = ()
    label_volume: "LabelVolume | None" = None

    def __post_init__(self) -> None:
        names = [self.background] + [s.tissue for s in self.slabs] + [
            e.tissue for e in self.ellipsoids
        ]
        for name in names:
            if name not in TISSUE_CODES:
                raise ValueError(f"unknown tissue {name!r}")


@dataclass(frozen=True)
class LabelVolume:
    labels: np.ndarray
    origin_mm: tuple[float, float, float]
    spacing_mm: tuple[float, float, float]


@dataclass(frozen=True)
class VoxelGrid:
    """Cell-centered labeled grid.

    ``labels`` holds tissue and electrode codes; ``contact_codes`` maps
    contact id to its code in the array.  Cell centers sit at
    origin + (index + 1/2) * spacing.  Arrays are frozen after
    construction.
    """

    origin_mm: tuple[float, float, float]
    spacing_mm: tuple[float, float, float]
    labels: np.ndarray
    contact_codes: dict[str, int]
    contact_groups: dict[str, tuple[str, ...]] = field(default_factory=dict)
    boundary: str = "open"

    def __post_init__(self) -> None:
        if self.labels.ndim != 3:
            raise ValueError("labels must be a 3-d array")
        if self.boundary not in ("open", "grounded"):
            raise ValueError("boundary must be 'open' or 'grounded'")
        self.labels.setflags(write=False)

    def resolve_contact(self, name: str) -> tuple[str, ...]:
        """Physical contact ids behind a contact or group name."""
        if name in self.contact_groups:
            return self.contact_groups[name]
        if name in self.contact_codes:
            return (name,)
        raise KeyError(f"unknown contact or group {name!r}")

    def contact_cell_codes(self, names: tuple[str, ...]) -> tuple[int, ...]:
        return tuple(
            self.contact_codes[pid] for n in names for pid in self.resolve_contact(n)
        )

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.labels.shape

    @property
    def voxel_volume_mm3(self) -> float:
        return float(np.prod(self.spacing_mm))

    def axis_centers_mm(self, axis: int) -> np.ndarray:
        n = self.labels.shape[axis]
        return self.origin_mm[axis] + (np.arange(n) + 0.5) * self.spacing_mm[axis]

    def center_mm(self) -> np.ndarray:
        return np.array(
            [
                self.origin_mm[a] + 0.5 * self.labels.shape[a] * self.spacing_mm[a]
                for a in range(3)
            ]
        )

    def contains(self, points_mm: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(points_mm)
        lo = np.asarray(self.origin_mm)
        hi = lo + np.asarray(self.labels.shape) * np.asarray(self.spacing_mm)
        return np.all((p >= lo) & (p <= hi), axis=1)

    def index_of(self, points_mm: np.ndarray) -> np.ndarray:
        """Voxel index containing each point (clipped to the grid)."""
        p = np.atleast_2d(points_mm)
        idx = (p - np.asarray(self.origin_mm)) / np.asarray(self.spacing_mm)
        idx = np.floor(idx).astype(int)
        return np.clip(idx, 0, np.asarray(self.labels.shape) - 1)

    def label_histogram(self) -> dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


def voxelize_scene(
    lead: LeadGeometry,
    tissue: TissueLayout,
    materials: MaterialTable,
    resolution_mm: float,
    box_size_mm: float = 50.0,
    box_center_mm: tuple[float, float, float] | None = None,
    encapsulation_thickness_mm: float = 0.1,
    boundary: str = "open",
) -> VoxelGrid:
    """Rasterize lead and tissue into a labeled grid.

    The grid spans a cube of ``box_size_mm`` centered on the lead's
    active region (or an explicit center).  Labeling precedence, highest
    first: contact, shaft insulation, encapsulation shell, tissue layout.
    The encapsulation rule labels voxels whose center falls within
    shaft_radius + thickness of the shaft axis segment; at coarse
    resolution this over-represents the thin shell on purpose.
    """
    if resolution_mm <= 0:
        raise ValueError("resolution must be positive")
    if resolution_mm > 0.5:
        raise ValueError("resolution above 0.5 mm cannot represent the thin shell")
    if resolution_mm > lead.shaft_radius_mm:
        raise ValueError("resolution too coarse for the shaft radius")
    # materials validated eagerly so a bad table fails at scene build time
    materials.conductivity_lut()

    if box_center_mm is None:
        zs = [0.5 * (c.z_lo_mm + c.z_hi_mm) for c in lead.contacts]
        box_center_mm = tuple(
            np.asarray(lead.tip_mm) + float(np.mean(zs)) * np.asarray(lead.direction)
        )
    n = int(round(box_size_mm / resolution_mm))
    spacing = (resolution_mm,) * 3
    origin_arr = np.asarray(box_center_mm) - 0.5 * n * resolution_mm
    # snap the grid (less than half a voxel) so an axis-aligned lead runs
    # through voxel centers; halves the cross-section quantization error
    direction = np.asarray(lead.direction)
    if np.count_nonzero(np.abs(direction) > 1e-12) == 1:
        for a in range(3):
            if abs(direction[a]) > 1e-12:
                continue
            k = round((lead.tip_mm[a] - origin_arr[a]) / resolution_mm - 0.5)
            origin_arr[a] = lead.tip_mm[a] - (k + 0.5) * resolution_mm
    origin = tuple(origin_arr)

    cx = origin[0] + (np.arange(n) + 0.5) * resolution_mm
    cy = origin[1] + (np.arange(n) + 0.5) * resolution_mm
    cz = origin[2] + (np.arange(n) + 0.5) * resolution_mm

    tip = np.asarray(lead.tip_mm)
    lo = np.asarray(origin)
    hi = lo + n * resolution_mm
    if np.any(tip < lo) or np.any(tip > hi):
        raise ValueError("lead tip lies outside the grid")

    labels = _tissue_labels(tissue, cx, cy, cz)

    # distance field to the shaft axis segment, vectorized over the grid
    e1, e2, axis = lead.frame()
    px = cx[:, None, None] - tip[0]
    py = cy[None, :, None] - tip[1]
    pz = cz[None, None, :] - tip[2]
    z_along = px * axis[0] + py * axis[1] + pz * axis[2]
    z_clamped = np.clip(z_along, 0.0, lead.shaft_length_mm)
    dx = px - z_clamped * axis[0]
    dy = py - z_clamped * axis[1]
    dz = pz - z_clamped * axis[2]
    dist = np.sqrt(dx * dx + dy * dy + dz * dz)

    shell = dist <= lead.shaft_radius_mm + encapsulation_thickness_mm
    shaft = (dist <= lead.shaft_radius_mm) & (z_along >= 0.0)
    labels[shell] = TISSUE_CODES["encapsulation"]
    labels[shaft] = CODE_SHAFT

    # angular coordinate for segmented contacts
    x1 = px * e1[0] + py * e1[1] + pz * e1[2]
    x2 = px * e2[0] + py * e2[1] + pz * e2[2]
    theta = np.degrees(np.arctan2(x2, x1)) % 360.0

    contact_codes: dict[str, int] = {}
    for i, contact in enumerate(lead.contacts):
        code = CODE_CONTACT_BASE + i
        contact_codes[contact.id] = code
        mask = shaft & contact.covers(z_along, theta)
        labels[mask] = code

    return VoxelGrid(
        origin_mm=origin,
        spacing_mm=spacing,
        labels=labels,
        contact_codes=contact_codes,
        contact_groups=dict(lead.contact_groups),
        boundary=boundary,
    )


def _tissue_labels(tissue: TissueLayout, cx, cy, cz) -> np.ndarray:
    shape = (cx.size, cy.size, cz.size)
    labels = np.full(shape, TISSUE_CODES[tissue.background], dtype=np.uint8)
    gx = cx[:, None, None]
    gy = cy[None, :, None]
    gz = cz[None, None, :]
    for slab in tissue.slabs:
        mask = (
            (gx >= slab.lo_mm[0]) & (gx < slab.hi_mm[0])
            & (gy >= slab.lo_mm[1]) & (gy < slab.hi_mm[1])
            & (gz >= slab.lo_mm[2]) & (gz < slab.hi_mm[2])
        )
        labels[mask] = TISSUE_CODES[slab.tissue]
    for ell in tissue.ellipsoids:
        q = (
            ((gx - ell.center_mm[0]) / ell.radii_mm[0]) ** 2
            + ((gy - ell.center_mm[1]) / ell.radii_mm[1]) ** 2
            + ((gz - ell.center_mm[2]) / ell.radii_mm[2]) ** 2
        )
        labels[q <= 1.0] = TISSUE_CODES[ell.tissue]
    if tissue.label_volume is not None:
        vol = tissue.label_volume
        ix = np.clip(
            np.round((cx - vol.origin_mm[0]) / vol.spacing_mm[0] - 0.5).astype(int),
            0, vol.labels.shape[0] - 1,
        )
        iy = np.clip(
            np.round((cy - vol.origin_mm[1]) / vol.spacing_mm[1] - 0.5).astype(int),
            0, vol.labels.shape[1] - 1,
        )
        iz = np.clip(
            np.round((cz - vol.origin_mm[2]) / vol.spacing_mm[2] - 0.5).astype(int),
            0, vol.labels.shape[2] - 1,
        )
        labels = vol.labels[np.ix_(ix, iy, iz)].astype(np.uint8)
    return labels


@dataclass(frozen=True)
class FiberTract:
    """Bundle of fiber polylines with per-fiber diameter and status."""

    name: str
    fibers: tuple[np.ndarray, ...]
    diameters_um: np.ndarray
    statuses: np.ndarray

    def __post_init__(self) -> None:
        if len(self.fibers) == 0:
            raise ValueError("tract has no fibers")
        for f in self.fibers:
            if f.ndim != 2 or f.shape[1] != 3 or f.shape[0] < 2:
                raise ValueError("each fiber needs >= 2 points of 3 coordinates")
            if np.any(np.all(np.diff(f, axis=0) == 0.0, axis=1)):
                raise ValueError("consecutive fiber points must be distinct")
            f.setflags(write=False)
        if len(self.diameters_um) != len(self.fibers) or len(self.statuses) != len(self.fibers):
            raise ValueError("per-fiber arrays must match the fiber count")
        self.diameters_um.setflags(write=False)
        self.statuses.setflags(write=False)

    def __len__(self) -> int:
        return len(self.fibers)

    def with_statuses(self, statuses: np.ndarray) -> "FiberTract":
        """New tract with updated statuses; only unknown fibers may change."""
        statuses = np.asarray(statuses, dtype=np.int8)
        changed = statuses != self.statuses
        if np.any(changed & (self.statuses != FiberStatus.UNKNOWN)):
            raise ValueError("status may only change away from unknown")
        return replace(self, statuses=statuses)

    def count(self, status: FiberStatus) -> int:
        return int(np.sum(self.statuses == status))


def make_tract(name: str, fibers: list[np.ndarray], diameter_um: float | np.ndarray) -> FiberTract:
    d = np.broadcast_to(np.asarray(diameter_um, dtype=float), (len(fibers),)).copy()
    return FiberTract(
        name=name,
        fibers=tuple(np.array(f, dtype=float) for f in fibers),
        diameters_um=d,
        statuses=np.zeros(len(fibers), dtype=np.int8),
    )


def load_fiber_tract(path: str | Path) -> FiberTract:
    """Read a tract file: {name, diameter_um, fibers: [[[x,y,z], ...], ...]}."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        name = doc["name"]
        fibers = [np.array(f, dtype=float) for f in doc["fibers"]]
        diameter = doc.get("diameters_um", doc["diameter_um"])
    except KeyError as exc:
        raise ValueError(f"tract file {path} missing key {exc}") from None
    if not fibers:
        raise ValueError(f"tract file {path} has an empty fiber list")
    return make_tract(name, fibers, diameter)


def save_fiber_tract(tract: FiberTract, path: str | Path) -> None:
    doc = {
        "name": tract.name,
        "diameters_um": tract.diameters_um.tolist(),
        "diameter_um": float(tract.diameters_um[0]),
        "fibers": [f.tolist() for f in tract.fibers],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def resample_polyline(points: np.ndarray, spacing_mm: float) -> np.ndarray:
    """Resample a polyline at uniform arc-length spacing, endpoints kept."""
    if spacing_mm <= 0:
        raise ValueError("spacing must be positive")
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    arc = np.concatenate(([0.0], np.cumsum(seg)))
    total = arc[-1]
    n = max(2, int(np.ceil(total / spacing_mm)) + 1)
    s = np.linspace(0.0, total, n)
    return np.column_stack([np.interp(s, arc, points[:, a]) for a in range(3)])


def _segment_to_segment_distance(p0, p1, q0, q1) -> np.ndarray:
    """Minimum distance between segments [p0,p1] (array) and [q0,q1] (single).

    Clamped two-parameter closed form, vectorized over the first segment
    set.  The second segment must have positive length.
    """
    d1 = p1 - p0
    d2 = np.asarray(q1, dtype=float) - np.asarray(q0, dtype=float)
    r = p0 - q0
    a = np.einsum("ij,ij->i", d1, d1)
    e = float(np.dot(d2, d2))
    b = d1 @ d2
    c = np.einsum("ij,ij->i", d1, r)
    f = r @ d2

    denom = a * e - b * b
    s = np.where(denom > 0, (b * f - c * e) / np.where(denom > 0, denom, 1.0), 0.0)
    s = np.clip(s, 0.0, 1.0)
    t = (b * s + f) / e
    # clamping t moves the closest point; re-solve s on the first segment
    a_safe = np.where(a > 0, a, 1.0)
    s = np.where(t < 0, np.clip(-c / a_safe, 0.0, 1.0), s)
    s = np.where(t > 1, np.clip((b - c) / a_safe, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)
    closest_p = p0 + s[:, None] * d1
    closest_q = q0 + t[:, None] * d2
    return np.linalg.norm(closest_p - closest_q, axis=1)


def min_distance_to_axis(fiber: np.ndarray, lead: LeadGeometry) -> float:
    """Minimum distance from a fiber polyline to the shaft axis segment."""
    q0 = np.asarray(lead.tip_mm)
    q1 = q0 + lead.shaft_length_mm * np.asarray(lead.direction)
    d = _segment_to_segment_distance(fiber[:-1], fiber[1:], q0, q1)
    return float(np.min(d))


def classify_damaged(
    tract: FiberTract, lead: LeadGeometry, encapsulation_thickness_mm: float = 0.1
) -> FiberTract:
    """Mark fibers that cut the shaft or its encapsulation shell as damaged."""
    if np.any(tract.statuses != FiberStatus.UNKNOWN):
        raise ValueError("classify_damaged expects all statuses unknown")
    cutoff = lead.shaft_radius_mm + encapsulation_thickness_mm
    statuses = tract.statuses.copy()
    for i, fiber in enumerate(tract.fibers):
        if min_distance_to_axis(fiber, lead) < cutoff:
            statuses[i] = FiberStatus.DAMAGED
    return tract.with_statuses(statuses)
