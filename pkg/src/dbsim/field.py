"""Potential solvers on the voxel grid.

Cell-centered finite volumes with a 7-point stencil.  Face conductances
use the harmonic mean of the two cell admittivities, which handles jumps
at tissue interfaces and removes electrode interiors (zero admittivity)
without special cases.  Active contacts are equipotential Dirichlet
groups; the drive is current-controlled by post-hoc linear scaling of a
fixed-potential solve.

Two outer boundary treatments are supported.  "grounded" clamps the
boundary faces to 0 V, a hard truncation that pulls the potential down
near the box walls.  "open" (the default) attaches a radiation-style
face conductance, the series combination of the half-cell conductance
and the conductance of a radial tube continuing to infinity; it models
the distant return electrode far better on an affordable box and is what
lets a 5 cm box reproduce the point-source solution to well under a
percent.

The linear systems are solved matrix-free by conjugate gradients
preconditioned with a geometric multigrid V-cycle (damped Jacobi
smoothing, block-sum restriction, piecewise-constant prolongation,
rediscretized coarse operators).  Complex admittivity (one solve per
retained harmonic) reuses the same machinery with unconjugated inner
products, the usual choice for complex symmetric systems.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from dbsim.scene import CODE_SHAFT, MaterialTable, VoxelGrid
from dbsim.stimulus import (
    Spectrum,
    StimulationSetting,
    band_edges,
    band_representative,
)

log = logging.getLogger("dbsim.field")

CURRENT_FLOOR_A = 1e-15


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iterations: int = 500
    pre_sweeps: int = 2
    post_sweeps: int = 2
    omega: float = 0.9
    coarse_factor: float = 0.5
    coarsest_sweeps: int = 60
    min_coarse_dim: int = 4


@dataclass(frozen=True)
class ElectricFieldSample:
    position_mm: tuple[float, float, float]
    e_v_per_m: tuple[float, float, float]

    @property
    def magnitude_v_per_m(self) -> float:
        return float(np.linalg.norm(self.e_v_per_m))


@dataclass(frozen=True)
class FieldSolution:
    """Solved potential on a grid.

    ``potential_v`` is real for the stationary problem and a complex
    phasor for one retained harmonic of the dispersive problem.  The
    harmonic solution stands in for a whole band of neighboring
    harmonics: ``band_harmonics`` lists them and ``band_weights`` holds
    the per-harmonic complex factors relative to this solution.
    ``injected_current_ma`` is the (complex for harmonics) current
    delivered through the cathode group at the stored scaling.
    """

    grid: VoxelGrid
    potential_v: np.ndarray
    contact_potentials_v: dict[str, complex]
    injected_current_ma: complex
    frequency_hz: float = 0.0
    band_harmonics: tuple[int, ...] = ()
    band_weights: tuple[complex, ...] = ()
    fundamental_hz: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.potential_v.setflags(write=False)

    @property
    def is_harmonic(self) -> bool:
        return np.iscomplexobj(self.potential_v)

    def potential_at(self, points_mm: np.ndarray) -> np.ndarray:
        return _trilinear(self.grid, self.potential_v, points_mm)

    def e_field_grids(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cartesian E components (V/m) on the grid, E = -grad u."""
        sp = [s * 1e-3 for s in self.grid.spacing_mm]
        gx, gy, gz = np.gradient(self.potential_v, *sp)
        return -gx, -gy, -gz

    def e_magnitude_grid(self) -> np.ndarray:
        """|E| (V/m) per voxel; electrode cells are zeroed."""
        gx, gy, gz = self.e_field_grids()
        mag = np.sqrt(np.abs(gx) ** 2 + np.abs(gy) ** 2 + np.abs(gz) ** 2)
        mag[self.grid.labels >= CODE_SHAFT] = 0.0
        return mag

    def e_field_at(self, points_mm: np.ndarray) -> np.ndarray:
        gx, gy, gz = self.e_field_grids()
        return np.stack(
            [
                _trilinear(self.grid, gx, points_mm),
                _trilinear(self.grid, gy, points_mm),
                _trilinear(self.grid, gz, points_mm),
            ],
            axis=-1,
        )


def analytic_point_source(current_ma: float, sigma_s_per_m: float, r_mm: float) -> float:
    """Potential of a point current source in an infinite homogeneous
    medium: I / (4 pi sigma r), SI units inside, mA and mm at the API."""
    if r_mm <= 0:
        raise ValueError("radius must be positive")
    if sigma_s_per_m <= 0:
        raise ValueError("conductivity must be positive")
    return current_ma * 1e-3 / (4.0 * np.pi * sigma_s_per_m * r_mm * 1e-3)


# ---------------------------------------------------------------------------
# geometric multigrid on face-conductance operators


class _Level:
    __slots__ = ("gx", "gy", "gz", "extra", "diag", "shape")


def _pad_even(a: np.ndarray) -> np.ndarray:
    nx, ny, nz = a.shape
    px, py, pz = nx % 2, ny % 2, nz % 2
    if not (px or py or pz):
        return a
    out = np.zeros((nx + px, ny + py, nz + pz), a.dtype)
    out[:nx, :ny, :nz] = a
    return out


def _build_level(gx, gy, gz, extra) -> _Level:
    lv = _Level()
    lv.gx, lv.gy, lv.gz, lv.extra = gx, gy, gz, extra
    diag = extra.copy()
    diag[:-1] += gx
    diag[1:] += gx
    diag[:, :-1] += gy
    diag[:, 1:] += gy
    diag[:, :, :-1] += gz
    diag[:, :, 1:] += gz
    diag[diag == 0] = 1.0  # identity rows for fully disconnected cells
    lv.diag = diag
    lv.shape = extra.shape
    return lv


def _apply(lv: _Level, u: np.ndarray) -> np.ndarray:
    y = lv.diag * u
    y[:-1] -= lv.gx * u[1:]
    y[1:] -= lv.gx * u[:-1]
    y[:, :-1] -= lv.gy * u[:, 1:]
    y[:, 1:] -= lv.gy * u[:, :-1]
    y[:, :, :-1] -= lv.gz * u[:, :, 1:]
    y[:, :, 1:] -= lv.gz * u[:, :, :-1]
    return y


def _smooth(lv: _Level, u, b, omega: float, sweeps: int):
    for _ in range(sweeps):
        u += omega * (b - _apply(lv, u)) / lv.diag
    return u


def _coarsen(lv: _Level, cf: float) -> _Level:
    gx, gy, gz = _pad_even(lv.gx), _pad_even(lv.gy), _pad_even(lv.gz)
    ex = _pad_even(lv.extra)
    nx, ny, nz = ex.shape
    cgx = cf * gx[1 : nx - 1 : 2].reshape(nx // 2 - 1, ny // 2, 2, nz // 2, 2).sum(axis=(2, 4))
    cgy = cf * gy[:, 1 : ny - 1 : 2].reshape(nx // 2, 2, ny // 2 - 1, nz // 2, 2).sum(axis=(1, 4))
    cgz = cf * gz[:, :, 1 : nz - 1 : 2].reshape(nx // 2, 2, ny // 2, 2, nz // 2 - 1).sum(axis=(1, 3))
    cex = cf * ex.reshape(nx // 2, 2, ny // 2, 2, nz // 2, 2).sum(axis=(1, 3, 5))
    return _build_level(cgx, cgy, cgz, cex)


def _restrict(r: np.ndarray) -> np.ndarray:
    r = _pad_even(r)
    nx, ny, nz = r.shape
    return r.reshape(nx // 2, 2, ny // 2, 2, nz // 2, 2).sum(axis=(1, 3, 5))


def _prolong(e: np.ndarray, fine_shape) -> np.ndarray:
    nx, ny, nz = fine_shape
    f = np.repeat(np.repeat(np.repeat(e, 2, 0), 2, 1), 2, 2)
    return f[:nx, :ny, :nz]


def _vcycle(levels, k, b, opts: SolverOptions):
    lv = levels[k]
    u = np.zeros(lv.shape, dtype=b.dtype)
    if k == len(levels) - 1:
        return _smooth(lv, u, b, opts.omega, opts.coarsest_sweeps)
    u = _smooth(lv, u, b, opts.omega, opts.pre_sweeps)
    r = b - _apply(lv, u)
    u += _prolong(_vcycle(levels, k + 1, _restrict(r), opts), lv.shape)
    return _smooth(lv, u, b, opts.omega, opts.post_sweeps)


def _solve_pcg(levels, b, opts: SolverOptions):
    """Multigrid-preconditioned CG; unconjugated inner products make the
    same loop serve the complex symmetric harmonic systems."""
    lv = levels[0]

    def inner(a, c):
        return np.sum(a * c)

    u = np.zeros(lv.shape, dtype=b.dtype)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return u, 0, 0.0
    z = _vcycle(levels, 0, r, opts)
    p = z.copy()
    rz = inner(r, z)
    relres = 1.0
    for it in range(1, opts.max_iterations + 1):
        ap = _apply(lv, p)
        alpha = rz / inner(p, ap)
        u += alpha * p
        r -= alpha * ap
        relres = np.linalg.norm(r) / bnorm
        if relres <= opts.tolerance:
            return u, it, float(relres)
        z = _vcycle(levels, 0, r, opts)
        rz_new = inner(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise RuntimeError(
        f"solver did not reach tolerance {opts.tolerance:g} in "
        f"{opts.max_iterations} iterations (relative residual {relres:.2e})"
    )


# ---------------------------------------------------------------------------
# problem assembly


class _Assembled:
    __slots__ = ("levels", "b", "dirichlet", "half_g", "free", "spacing_m")


def _face_slices(axis: int):
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return tuple(lo), tuple(hi)


def _assemble(
    grid: VoxelGrid,
    kappa: np.ndarray,
    potentials: dict[int, complex],
    boundary: str,
    reference_mm: np.ndarray,
    opts: SolverOptions,
) -> _Assembled:
    """Build multigrid levels and right-hand side for one Dirichlet solve.

    ``kappa`` is the per-voxel admittivity (0 marks removed cells),
    ``potentials`` maps label codes of active contacts to potentials.
    """
    h = [s * 1e-3 for s in grid.spacing_mm]
    area = [h[1] * h[2], h[0] * h[2], h[0] * h[1]]
    shape = grid.shape
    cdtype = kappa.dtype

    dirichlet = np.zeros(shape, dtype=bool)
    vdir = np.zeros(shape, dtype=cdtype)
    for code, v in potentials.items():
        m = grid.labels == code
        dirichlet |= m
        vdir[m] = v

    faces = []
    for axis in range(3):
        lo, hi = _face_slices(axis)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = 2.0 * kappa[lo] * kappa[hi] / (kappa[lo] + kappa[hi])
        g = np.where(np.isfinite(g), g, 0.0) * (area[axis] / h[axis])
        faces.append(g)

    extra = np.zeros(shape, dtype=cdtype)
    b = np.zeros(shape, dtype=cdtype)
    half_g = []  # per axis: half-cell conductance into a Dirichlet face
    for axis, g in enumerate(faces):
        lo, hi = _face_slices(axis)
        gd = 2.0 * kappa * area[axis] / h[axis]
        d_lo, d_hi = dirichlet[lo], dirichlet[hi]
        # free cell next to a Dirichlet cell: half-cell coupling to the wall
        m = d_hi & ~d_lo
        b_lo, e_lo = b[lo], extra[lo]
        e_lo[m] += gd[lo][m]
        b_lo[m] += gd[lo][m] * vdir[hi][m]
        m2 = d_lo & ~d_hi
        b_hi, e_hi = b[hi], extra[hi]
        e_hi[m2] += gd[hi][m2]
        b_hi[m2] += gd[hi][m2] * vdir[lo][m2]
        g[d_lo | d_hi] = 0.0
        half_g.append(gd)
    b[dirichlet] = 0.0

    centers = [grid.axis_centers_mm(a) * 1e-3 for a in range(3)]
    ref = np.asarray(reference_mm) * 1e-3
    for axis in range(3):
        for side in (0, -1):
            sl = [slice(None)] * 3
            sl[axis] = side
            sl = tuple(sl)
            fc = list(np.meshgrid(*centers, indexing="ij", sparse=True))
            fc = [np.broadcast_to(c, shape)[sl].astype(float) for c in fc]
            fc[axis] = fc[axis] + (h[axis] / 2 if side == -1 else -h[axis] / 2)
            khere = kappa[sl]
            g_half = 2.0 * khere * area[axis] / h[axis]
            if boundary == "grounded":
                extra[sl] += g_half
            else:
                rel = [fc[a] - ref[a] for a in range(3)]
                rf = np.sqrt(rel[0] ** 2 + rel[1] ** 2 + rel[2] ** 2)
                rf = np.maximum(rf, h[axis])
                cosang = np.abs(rel[axis]) / rf
                # series: half cell, then a radial tube out to infinity
                g_far = khere * area[axis] * np.maximum(cosang, 1e-6) / rf
                with np.errstate(divide="ignore", invalid="ignore"):
                    g_eff = 1.0 / (1.0 / g_half + 1.0 / g_far)
                extra[sl] += np.where(np.isfinite(g_eff), g_eff, 0.0)

    levels = [_build_level(faces[0], faces[1], faces[2], extra)]
    while min(levels[-1].shape) > opts.min_coarse_dim:
        levels.append(_coarsen(levels[-1], opts.coarse_factor))

    out = _Assembled()
    out.levels = levels
    out.b = b
    out.dirichlet = dirichlet
    out.half_g = half_g
    out.free = ~dirichlet & (np.abs(kappa) > 0)
    out.spacing_m = h
    return out


def _group_current_a(asm: _Assembled, grid: VoxelGrid, u, codes, potentials) -> complex:
    """Signed current (A) delivered from the given contact cells into the
    tissue: sum over contact-to-free faces of g_half * (V_c - u_neighbor)."""
    member = np.isin(grid.labels, codes)
    total = 0.0 + 0.0j
    for axis in range(3):
        lo, hi = _face_slices(axis)
        gd = asm.half_g[axis]
        # conductance of the half cell on the free-tissue side of the face
        m_lo = member[lo] & asm.free[hi]
        if np.any(m_lo):
            vd = np.zeros_like(u[lo])
            for code in codes:
                vd[grid.labels[lo] == code] = potentials[code]
            total += np.sum(gd[hi][m_lo] * (vd[m_lo] - u[hi][m_lo]))
        m_hi = member[hi] & asm.free[lo]
        if np.any(m_hi):
            vd = np.zeros_like(u[hi])
            for code in codes:
                vd[grid.labels[hi] == code] = potentials[code]
            total += np.sum(gd[lo][m_hi] * (vd[m_hi] - u[lo][m_hi]))
    if not np.iscomplexobj(u):
        return complex(total.real)
    return complex(total)


def _resolve_codes(grid: VoxelGrid, names: tuple[str, ...]) -> tuple[int, ...]:
    codes = grid.contact_cell_codes(tuple(n for n in names if n != "CASE"))
    for code in codes:
        if not np.any(grid.labels == code):
            raise ValueError(f"contact code {code} not present in the grid")
    return codes


def solve_dirichlet(
    grid: VoxelGrid,
    materials: MaterialTable,
    contact_potentials: dict[str, complex],
    frequency_hz: float = 0.0,
    boundary: str | None = None,
    options: SolverOptions | None = None,
) -> FieldSolution:
    """Fixed-potential solve; building block for the current-controlled ops.

    ``contact_potentials`` maps contact or group names to potentials (V).
    All other metal is removed from the domain.  Current through each
    named group lands in ``diagnostics['group_currents_ma']``.
    """
    opts = options or SolverOptions()
    boundary = boundary or grid.boundary
    omega = 2.0 * np.pi * frequency_hz
    if omega == 0.0:
        lut = materials.conductivity_lut()
    else:
        lut = materials.admittivity_lut(omega)
    kappa = lut[grid.labels]

    code_potentials: dict[int, complex] = {}
    name_codes: dict[str, tuple[int, ...]] = {}
    for name, v in contact_potentials.items():
        codes = _resolve_codes(grid, (name,))
        name_codes[name] = codes
        for code in codes:
            code_potentials[code] = v

    ref = _dirichlet_centroid(grid, tuple(code_potentials))
    t0 = time.perf_counter()
    asm = _assemble(grid, kappa, code_potentials, boundary, ref, opts)
    t1 = time.perf_counter()
    u, iters, relres = _solve_pcg(asm.levels, asm.b, opts)
    t2 = time.perf_counter()

    # stamp contact potentials back so slices and gradients read sensibly
    for code, v in code_potentials.items():
        u[grid.labels == code] = v

    group_currents = {
        name: _group_current_a(asm, grid, u, codes, code_potentials) * 1e3
        for name, codes in name_codes.items()
    }
    diag = {
        "iterations": iters,
        "relative_residual": relres,
        "assemble_s": t1 - t0,
        "solve_s": t2 - t1,
        "levels": len(asm.levels),
        "boundary": boundary,
        "group_currents_ma": {k: _c2pair(v) for k, v in group_currents.items()},
    }
    log.info("solve %s", json.dumps(_json_safe(diag)))
    return FieldSolution(
        grid=grid,
        potential_v=u,
        contact_potentials_v={k: complex(v) for k, v in contact_potentials.items()},
        injected_current_ma=0.0,
        frequency_hz=frequency_hz,
        diagnostics=diag,
    )


def _dirichlet_centroid(grid: VoxelGrid, codes) -> np.ndarray:
    member = np.isin(grid.labels, tuple(codes))
    idx = np.argwhere(member)
    if idx.size == 0:
        raise ValueError("no active contact cells in the grid")
    centers = (idx + 0.5) * np.asarray(grid.spacing_mm) + np.asarray(grid.origin_mm)
    return centers.mean(axis=0)


def _measure_group_ma(
    solution: FieldSolution, names: tuple[str, ...]
) -> complex:
    currents = solution.diagnostics["group_currents_ma"]
    total = 0.0 + 0.0j
    for name in names:
        re, im = currents[name]
        total += complex(re, im)
    return total


def _net_injected_ma(solution: FieldSolution, setting: StimulationSetting) -> complex:
    """Cathodic current (mA) of a raw +/-0.5 V solve.

    When both groups sit on the grid the cathode sink and anode source
    are averaged; they differ only by the share leaking through the open
    boundary, and the average is exactly invariant under swapping the
    groups so current-controlled fields of a setting and its polarity
    swap are bitwise negations of each other.  A case return is not
    measurable on the grid, so those settings use the sink alone.
    """
    sunk = -_measure_group_ma(solution, setting.cathodes)
    grid_anodes = tuple(a for a in setting.anodes if a != "CASE")
    if not grid_anodes or len(grid_anodes) < len(setting.anodes):
        return sunk
    sourced = _measure_group_ma(solution, grid_anodes)
    return 0.5 * (sourced + sunk)


def solve_qs_raw(
    grid: VoxelGrid,
    materials: MaterialTable,
    setting: StimulationSetting,
    options: SolverOptions | None = None,
    boundary: str | None = None,
) -> FieldSolution:
    """Unscaled conductive solve for the setting's contact groups.

    Drives the cathode group at -0.5 V and the anode group at +0.5 V and
    records the measured cathode-group current.  The result depends only
    on which contacts are active, so callers can cache it per polarity
    and rescale to any amplitude with ``scale_to_current``.
    """
    potentials: dict[str, complex] = {c: -0.5 for c in setting.cathodes}
    for a in setting.anodes:
        if a != "CASE":
            potentials[a] = +0.5
    raw = solve_dirichlet(grid, materials, potentials, 0.0, boundary, options)
    injected = _net_injected_ma(raw, setting)  # > 0 for a net sink
    return replace(raw, injected_current_ma=complex(injected).real)


def solve_qs(
    grid: VoxelGrid,
    materials: MaterialTable,
    setting: StimulationSetting,
    options: SolverOptions | None = None,
    boundary: str | None = None,
) -> FieldSolution:
    """Stationary conductive solve, scaled to the setting's amplitude.

    The cathode group is driven negative; the solution is scaled so the
    current absorbed by the cathode group equals the amplitude in mA.
    """
    raw = solve_qs_raw(grid, materials, setting, options, boundary)
    return scale_to_current(raw, setting.amplitude_ma)


def scale_to_current(solution: FieldSolution, target_ma: complex) -> FieldSolution:
    """Rescale a solve so the cathode-group current equals ``target_ma``."""
    measured = solution.injected_current_ma
    if abs(measured) * 1e-3 < CURRENT_FLOOR_A:
        raise ValueError("measured current below the numeric floor; cannot scale")
    factor = target_ma / measured
    if not solution.is_harmonic:
        factor = float(np.real(factor))
    pot = solution.potential_v * factor
    diag = dict(solution.diagnostics)
    groups = diag.get("group_currents_ma")
    if groups is not None:
        # contact currents are linear in the field; keep them at the new scale
        diag["group_currents_ma"] = {
            k: _c2pair(complex(re, im) * factor) for k, (re, im) in groups.items()
        }
    return replace(
        solution,
        potential_v=pot,
        contact_potentials_v={
            k: v * factor for k, v in solution.contact_potentials_v.items()
        },
        injected_current_ma=target_ma,
        diagnostics=diag,
    )


def solve_eqs(
    grid: VoxelGrid,
    materials: MaterialTable,
    setting: StimulationSetting,
    spectrum: Spectrum,
    group_octaves: bool = True,
    options: SolverOptions | None = None,
    boundary: str | None = None,
) -> list[FieldSolution]:
    """Dispersive solve: one complex solve per retained harmonic.

    Harmonics are grouped into octave-spaced bands; the band's
    representative admittivity is solved once and neighboring harmonics
    ride along as complex weights (the transfer field varies slowly with
    frequency).  Each returned solution is scaled so its own harmonic
    carries current c_k mA; summing Re(u_k e^{i k w1 t}) over all bands
    and weights reconstructs the time-domain potential.
    """
    if spectrum.n_harmonics < 1:
        raise ValueError("spectrum is empty")
    f1 = spectrum.fundamental_hz
    coeffs = spectrum.coefficients

    potentials: dict[str, complex] = {c: -0.5 for c in setting.cathodes}
    for a in setting.anodes:
        if a != "CASE":
            potentials[a] = +0.5

    if group_octaves:
        bands = band_edges(spectrum.n_harmonics)
    else:
        bands = [(k, k) for k in range(1, spectrum.n_harmonics + 1)]

    solutions: list[FieldSolution] = []

    # DC term: purely conductive, real.  Harmonic coefficients follow the
    # signed stimulus current (cathodic phase negative), so scaling is done
    # against the signed current entering the tissue through the cathode
    # group: minus the collected current.  Re-summing the returned phasors
    # then yields the physical waveform directly.
    dc = solve_dirichlet(grid, materials, potentials, 0.0, boundary, options)
    dc = replace(
        dc,
        injected_current_ma=-complex(_net_injected_ma(dc, setting)).real,
        band_harmonics=(0,),
        band_weights=(1.0 + 0.0j,),
        fundamental_hz=f1,
    )
    solutions.append(scale_to_current(dc, float(coeffs[0].real)))

    for lo, hi in bands:
        rep = band_representative(lo, hi)
        sol = solve_dirichlet(grid, materials, potentials, rep * f1, boundary, options)
        injected_c = -_net_injected_ma(sol, setting)
        c_rep = complex(coeffs[rep])
        weights = tuple(
            complex(coeffs[k]) / c_rep if c_rep != 0 else 0.0j for k in range(lo, hi + 1)
        )
        sol.diagnostics["k_rep"] = rep
        sol = replace(
            sol,
            injected_current_ma=injected_c,
            band_harmonics=tuple(range(lo, hi + 1)),
            band_weights=weights,
            fundamental_hz=f1,
        )
        solutions.append(scale_to_current(sol, c_rep))
    return solutions


# ---------------------------------------------------------------------------
# field evaluation


def _trilinear(grid: VoxelGrid, volume: np.ndarray, points_mm: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points_mm, dtype=float))
    if not np.all(grid.contains(pts)):
        raise ValueError("point outside grid")
    frac = (pts - np.asarray(grid.origin_mm)) / np.asarray(grid.spacing_mm) - 0.5
    shape = np.asarray(volume.shape)
    frac = np.clip(frac, 0.0, shape - 1.000001)
    i0 = np.floor(frac).astype(int)
    i0 = np.minimum(i0, shape - 2)
    t = frac - i0
    out = np.zeros(pts.shape[0], dtype=volume.dtype)
    for dx in (0, 1):
        wx = t[:, 0] if dx else 1.0 - t[:, 0]
        for dy in (0, 1):
            wy = t[:, 1] if dy else 1.0 - t[:, 1]
            for dz in (0, 1):
                wz = t[:, 2] if dz else 1.0 - t[:, 2]
                out += (
                    wx * wy * wz
                    * volume[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
                )
    return out


def harmonic_phase_weights(
    solutions: list[FieldSolution], times_s: np.ndarray
) -> np.ndarray:
    """Per-solution complex weights W[s, t] so that the time-domain value
    of any linear functional L is sum_s Re(L(u_s) * W[s, t])."""
    f1 = solutions[0].fundamental_hz
    w1 = 2.0 * np.pi * f1
    out = np.zeros((len(solutions), len(times_s)), dtype=complex)
    for i, sol in enumerate(solutions):
        for k, wgt in zip(sol.band_harmonics, sol.band_weights):
            out[i] += wgt * np.exp(1j * k * w1 * times_s)
    return out


def default_phase_times(spectrum_or_solution, pulse_width_s: float) -> np.ndarray:
    """Sample times for peak search: dense across the pulse (where the
    extremum lives for a rectangular train), coarse over the rest."""
    if isinstance(spectrum_or_solution, FieldSolution):
        f1 = spectrum_or_solution.fundamental_hz
    else:
        f1 = spectrum_or_solution.fundamental_hz
    period = 1.0 / f1
    dense = np.linspace(-0.5 * pulse_width_s, 2.5 * pulse_width_s, 48)
    coarse = np.linspace(0.0, period, 32, endpoint=False)
    return np.unique(np.mod(np.concatenate([dense, coarse]), period))


def field_at(
    solution: FieldSolution | list[FieldSolution],
    point_mm,
    pulse_width_s: float | None = None,
) -> ElectricFieldSample:
    """Electric field at a point.

    For a stationary solution returns the real E vector.  For the list of
    harmonic solutions returns the E vector at the moment of peak |E|
    over one period (per-harmonic phasors are available via
    ``e_field_at`` on the individual solutions).
    """
    if isinstance(solution, FieldSolution):
        e = solution.e_field_at(point_mm)[0]
        if solution.is_harmonic:
            e = np.abs(e)
        return ElectricFieldSample(tuple(np.atleast_2d(point_mm)[0]), tuple(float(v) for v in e))
    solutions = solution
    if pulse_width_s is None:
        raise ValueError("pulse width needed to locate the waveform peak")
    times = default_phase_times(solutions[0], pulse_width_s)
    w = harmonic_phase_weights(solutions, times)
    phasors = np.stack([s.e_field_at(point_mm)[0] for s in solutions])  # [s, 3]
    e_t = np.real(np.einsum("sc,st->tc", phasors, w))
    peak = int(np.argmax(np.linalg.norm(e_t, axis=1)))
    return ElectricFieldSample(tuple(np.atleast_2d(point_mm)[0]), tuple(e_t[peak]))


def peak_e_magnitude_grid(
    solutions: list[FieldSolution],
    pulse_width_s: float,
    slab: int = 8,
) -> np.ndarray:
    """Peak time-domain |E| (V/m) per voxel for a harmonic solution set.

    Works slab by slab along z to keep the per-solution gradient fields
    from all residing in memory at once.
    """
    grid = solutions[0].grid
    times = default_phase_times(solutions[0], pulse_width_s)
    w = harmonic_phase_weights(solutions, times)  # [s, t]
    shape = grid.shape
    out = np.zeros(shape)
    grads = [s.e_field_grids() for s in solutions]  # lazy? computed up front
    for z0 in range(0, shape[2], slab):
        z1 = min(shape[2], z0 + slab)
        block = np.stack(
            [
                np.stack([g[0][:, :, z0:z1], g[1][:, :, z0:z1], g[2][:, :, z0:z1]])
                for g in grads
            ]
        )  # [s, 3, nx, ny, dz]
        e_t = np.einsum("scxyz,st->tcxyz", block, w).real
        mag = np.sqrt((e_t**2).sum(axis=1))  # [t, nx, ny, dz]
        out[:, :, z0:z1] = mag.max(axis=0)
    out[grid.labels >= CODE_SHAFT] = 0.0
    return out


# ---------------------------------------------------------------------------
# export

def export_potential(solution: FieldSolution, basepath: str | Path) -> tuple[Path, Path]:
    """Write the potential as raw doubles plus a text header.

    Complex solutions are stored interleaved (real, imag) per voxel, as
    noted in the header.
    """
    basepath = Path(basepath)
    raw = basepath.with_suffix(".bin")
    hdr = basepath.with_suffix(".hdr")
    u = solution.potential_v
    if np.iscomplexobj(u):
        flat = np.empty(u.size * 2)
        flat[0::2] = u.real.ravel()
        flat[1::2] = u.imag.ravel()
        encoding = "complex-interleaved-float64"
    else:
        flat = u.ravel().astype(float)
        encoding = "float64"
    flat.tofile(raw)
    header = {
        "dims": list(solution.grid.shape),
        "spacing_mm": list(solution.grid.spacing_mm),
        "origin_mm": list(solution.grid.origin_mm),
        "units": "V",
        "encoding": encoding,
        "order": "C",
        "frequency_hz": solution.frequency_hz,
    }
    hdr.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return raw, hdr


def _c2pair(v: complex) -> list[float]:
    v = complex(v)
    return [v.real, v.imag]


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, complex):
        return _c2pair(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj
