"""Double-cable myelinated fiber model.

The chain alternates nodes of Ranvier with myelinated internodes
(2 MYSA attachment segments, 2 FLUT paranodes, 6 STIN segments per
span).  Each compartment carries two stacked layers: the axolemma
(nonlinear at nodes, passive elsewhere) and the myelin sheath over a
periaxonal space.  The cable part advances implicitly through one
banded solve per step; gating variables advance by their exact
exponential update between solves.

All electrical bookkeeping is done in mV / ms / nA / uS / nF.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from .field import FieldSolution, harmonic_phase_weights
from .stimulus import PulseTrain, Spectrum

log = logging.getLogger("dbsim.axon")

KIND_NODE, KIND_MYSA, KIND_FLUT, KIND_STIN = 0, 1, 2, 3
_KIND_NAMES = ("node", "mysa", "flut", "stin")

# spike detector defaults; overridable per call
DETECT_THRESHOLD_MV = -20.0
ARM_THRESHOLD_MV = -40.0
SETTLE_MS = 5.0
MAX_DT_US = 10.0


# ---------------------------------------------------------------------------
# parameters


def _rate_fn(spec: dict) -> Callable[[np.ndarray], np.ndarray]:
    """Compile one rate-constant description into a vectorized function.

    Forms: 'sigmoid' a/(1+exp(-(v-b)/c)); 'linoid_up' a(v-b)/(1-exp(-(v-b)/c));
    'linoid_down' a(b-v)/(1-exp((v-b)/c)).  The linoid forms have a
    removable singularity at v = b handled by their series limit.
    """
    a, b, c = float(spec["a"]), float(spec["b"]), float(spec["c"])
    form = spec["form"]
    if form == "sigmoid":
        return lambda v: a / (1.0 + np.exp(-(v - b) / c))
    if form == "linoid_up":

        def up(v):
            x = (v - b) / c
            with np.errstate(over="ignore"):
                out = a * c * x / (-np.expm1(-x))
            return np.where(np.abs(x) < 1e-6, a * c * (1.0 + x / 2.0), out)

        return up
    if form == "linoid_down":

        def down(v):
            x = (v - b) / c
            with np.errstate(over="ignore"):
                out = a * c * x / np.expm1(x)
            return np.where(np.abs(x) < 1e-6, a * c * (1.0 - x / 2.0), out)

        return down
    raise ValueError(f"unknown rate form {form!r}")


@dataclass(frozen=True)
class FiberParameters:
    """Named parameter set loaded from a structured data file."""

    data: dict

    @classmethod
    def load(cls, path: str | Path | None = None) -> "FiberParameters":
        if path is None:
            ref = resources.files("dbsim.data") / "mrg_fiber_parameters.json"
            raw = json.loads(ref.read_text())
        else:
            raw = json.loads(Path(path).read_text())
        for key in ("membrane", "myelin", "gates", "geometry_by_diameter"):
            if key not in raw:
                raise ValueError(f"parameter file lacks section {key!r}")
        return cls(data=raw)

    @property
    def name(self) -> str:
        return self.data.get("name", "unnamed")

    @property
    def v_rest_mv(self) -> float:
        return float(self.data["v_rest_mv"])

    def geometry(self, diameter_um: float) -> dict:
        table = self.data["geometry_by_diameter"]
        for key, row in table.items():
            if abs(float(key) - diameter_um) < 1e-9:
                return row
        known = ", ".join(sorted(table))
        raise ValueError(
            f"no geometry row for diameter {diameter_um} um (have: {known})"
        )

    def q10_factor(self, group: str) -> float:
        q = self.data["q10"][group]
        return float(q["factor"]) ** ((self.data["celsius"] - q["ref_c"]) / 10.0)

    def gate_table(self):
        """(name, alpha_fn, beta_fn, q10, v_offset, exponent) per gate.

        Rates are evaluated at v - v_offset; a negative offset shifts
        the activation curves rightward (the slow-K convention).
        """
        out = []
        for name, g in self.data["gates"].items():
            out.append(
                (
                    name,
                    _rate_fn(g["alpha"]),
                    _rate_fn(g["beta"]),
                    self.q10_factor(g["q10"]),
                    float(g.get("v_offset_mv", 0.0)),
                    int(self.data["gate_exponents"][name]),
                )
            )
        return out


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class AxonModel:
    """Compartment chain laid out along a fiber polyline."""

    diameter_um: float
    params: FiberParameters
    kinds: np.ndarray          # per compartment, KIND_*
    lengths_um: np.ndarray
    axon_diam_um: np.ndarray   # axolemma diameter per compartment
    arc_mm: np.ndarray         # compartment centers, arc length from fiber start
    positions_mm: np.ndarray   # (n, 3) centers on the polyline

    def __post_init__(self) -> None:
        for a in (self.kinds, self.lengths_um, self.axon_diam_um,
                  self.arc_mm, self.positions_mm):
            a.setflags(write=False)

    @property
    def n_compartments(self) -> int:
        return len(self.kinds)

    @property
    def node_indices(self) -> np.ndarray:
        return np.flatnonzero(self.kinds == KIND_NODE)

    @property
    def span_um(self) -> float:
        return float(self.params.geometry(self.diameter_um)["span_um"])


def build_axon(
    fiber: np.ndarray,
    diameter_um: float = 5.7,
    params: FiberParameters | None = None,
) -> AxonModel:
    """Place the repeating node+internode unit along a polyline.

    Compartments fill whole internodal spans from the first point; a
    trailing remainder shorter than one span is dropped.  The chain
    starts and ends with a node.
    """
    params = params or FiberParameters.load()
    geo = params.geometry(diameter_um)
    pts = np.asarray(fiber, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 2:
        raise ValueError("fiber must be an (N, 3) polyline")
    if not np.all(np.isfinite(pts)):
        raise ValueError("fiber has non-finite coordinates")

    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    knots = np.concatenate([[0.0], np.cumsum(seg)])
    total_um = knots[-1] * 1e3

    span = float(geo["span_um"])
    node_len = float(params.data["node_length_um"])
    mysa_len = float(params.data["mysa_length_um"])
    flut_len = float(geo["flut_length_um"])
    stin_len = (span - node_len - 2 * mysa_len - 2 * flut_len) / 6.0
    if stin_len <= 0:
        raise ValueError("inconsistent geometry row: non-positive STIN length")

    n_spans = int(np.floor(total_um / span + 1e-9))
    if n_spans < 2:
        raise ValueError(
            f"fiber of {total_um / 1e3:.2f} mm is shorter than two "
            f"{span / 1e3:.2f} mm spans"
        )

    unit_kinds = [KIND_NODE, KIND_MYSA, KIND_FLUT] + [KIND_STIN] * 6 + [
        KIND_FLUT, KIND_MYSA
    ]
    unit_lens = [node_len, mysa_len, flut_len] + [stin_len] * 6 + [
        flut_len, mysa_len
    ]
    kinds = np.array(unit_kinds * n_spans + [KIND_NODE], dtype=np.int8)
    lengths = np.array(unit_lens * n_spans + [node_len], dtype=float)

    diam_by_kind = np.array(
        [
            geo["node_diam_um"],
            geo["mysa_diam_um"],
            geo["flut_diam_um"],
            geo["stin_diam_um"],
        ]
    )
    axon_diam = diam_by_kind[kinds]

    # node centers land exactly on multiples of the span, so the chain
    # starts half a node before the fiber and ends half a node past the
    # last span; terminal centers coincide with arc 0 and n_spans * span
    edges_um = np.concatenate([[-node_len / 2.0], np.cumsum(lengths) - node_len / 2.0])
    centers_mm = (edges_um[:-1] + lengths / 2.0) * 1e-3
    positions = np.stack(
        [np.interp(centers_mm, knots, pts[:, a]) for a in range(3)], axis=1
    )
    return AxonModel(
        diameter_um=float(diameter_um),
        params=params,
        kinds=kinds,
        lengths_um=lengths,
        axon_diam_um=axon_diam,
        arc_mm=centers_mm,
        positions_mm=positions,
    )


# ---------------------------------------------------------------------------
# drive


@dataclass(frozen=True)
class ExtracellularDrive:
    """Per-compartment extracellular potential series, uniform time step."""

    ve_mv: np.ndarray        # (n_compartments, n_steps + 1)
    dt_us: float
    duration_ms: float
    period_ms: float | None = None  # stimulation period, when known

    def __post_init__(self) -> None:
        if self.dt_us <= 0 or self.duration_ms <= 0:
            raise ValueError("dt and duration must be positive")
        steps = int(round(self.duration_ms * 1e3 / self.dt_us))
        if self.ve_mv.ndim != 2 or self.ve_mv.shape[1] != steps + 1:
            raise ValueError(
                f"series must have {steps + 1} samples per compartment"
            )
        self.ve_mv.setflags(write=False)

    @property
    def n_steps(self) -> int:
        return self.ve_mv.shape[1] - 1

    def times_ms(self) -> np.ndarray:
        return np.arange(self.ve_mv.shape[1]) * self.dt_us * 1e-3


def extracellular_drive(
    axon: AxonModel,
    solution: FieldSolution | Sequence[FieldSolution],
    train: PulseTrain | Spectrum,
    dt_us: float = 5.0,
    duration_ms: float = 30.0,
) -> ExtracellularDrive:
    """Sample the solved potential at each compartment over time.

    Stationary solve: V_e(t) follows the train shape, so the cathodic
    phase reproduces the solved field and a reversal phase flips it.
    Harmonic solves: V_e(t) re-sums the per-band phasors; the train (or
    spectrum) only supplies the period metadata.
    """
    steps = int(round(duration_ms * 1e3 / dt_us))
    times_s = np.arange(steps + 1) * dt_us * 1e-6

    if isinstance(solution, FieldSolution):
        if isinstance(train, Spectrum):
            raise TypeError("a stationary drive needs the pulse train itself")
        grid = solution.grid
        if not np.all(grid.contains(axon.positions_mm)):
            raise ValueError("compartment outside grid")
        u_mv = solution.potential_at(axon.positions_mm).real * 1e3
        # -phase: the cathodic phase reproduces the solved field as-is,
        # a reversal phase flips it; a silent train drives nothing
        if train.amplitude_ma == 0:
            wave = np.zeros_like(times_s)
        else:
            wave = -train.phase(times_s)
        ve = u_mv[:, None] * wave[None, :]
        period_ms = train.period_s * 1e3
    else:
        sols = list(solution)
        grid = sols[0].grid
        if not np.all(grid.contains(axon.positions_mm)):
            raise ValueError("compartment outside grid")
        w = harmonic_phase_weights(sols, times_s)  # (s, t)
        u = np.stack([s.potential_at(axon.positions_mm) for s in sols])  # (s, n)
        ve = (u.real.T @ w.real - u.imag.T @ w.imag) * 1e3
        if isinstance(train, Spectrum):
            period_ms = 1e3 / train.fundamental_hz
        else:
            period_ms = train.period_s * 1e3
    return ExtracellularDrive(
        ve_mv=ve, dt_us=dt_us, duration_ms=duration_ms, period_ms=period_ms
    )


# ---------------------------------------------------------------------------
# simulation


@dataclass(frozen=True)
class SpikeRecord:
    """Per-node spike times plus the node membrane traces behind them."""

    node_spike_times_ms: tuple[tuple[float, ...], ...]
    node_arc_mm: np.ndarray
    node_vm_mv: np.ndarray     # (n_nodes, n_steps + 1)
    dt_us: float
    duration_ms: float
    period_ms: float | None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.node_arc_mm.setflags(write=False)
        self.node_vm_mv.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return len(self.node_spike_times_ms)

    @property
    def total_spikes(self) -> int:
        return sum(len(t) for t in self.node_spike_times_ms)

    def times_ms(self) -> np.ndarray:
        return np.arange(self.node_vm_mv.shape[1]) * self.dt_us * 1e-3


class _Cable:
    """Constant per-step arrays for one axon at one dt."""

    def __init__(self, axon: AxonModel, dt_ms: float):
        p = axon.params.data
        geo = axon.params.geometry(axon.diameter_um)
        n = axon.n_compartments
        kinds = axon.kinds
        L = axon.lengths_um
        d = axon.axon_diam_um
        fiber_d = axon.diameter_um

        area_cm2 = np.pi * d * L * 1e-8          # axolemma area
        myel_cm2 = np.pi * fiber_d * L * 1e-8    # sheath area on the fiber
        node_cm2 = np.pi * d * L * 1e-8          # node shunt uses its own size

        cm = np.array([p["membrane"][_KIND_NAMES[k]]["cm_uf_cm2"] for k in kinds])
        self.c_nf = cm * area_cm2 * 1e3

        gpas = np.zeros(n)
        bpas = np.zeros(n)
        for k, nm in enumerate(_KIND_NAMES):
            if nm == "node":
                continue
            sel = kinds == k
            g = p["membrane"][nm]["g_pas_s_cm2"] * area_cm2[sel] * 1e6
            gpas[sel] = g
            bpas[sel] = g * p["membrane"][nm]["e_pas_mv"]
        self.gpas_us = gpas
        self.bpas_na = bpas

        # myelin layer: 2 membranes per lamella in series; nodes instead
        # carry a near short from periaxonal space to the bath
        nl = float(geo["n_lamellae"]) * float(p["myelin"]["membranes_per_lamella"])
        my_c = p["myelin"]["cm_uf_cm2_per_membrane"] / nl
        my_g = p["myelin"]["g_s_cm2_per_membrane"] / nl
        self.cmy_nf = np.where(kinds == KIND_NODE, 0.0, my_c * myel_cm2 * 1e3)
        self.gmy_us = np.where(
            kinds == KIND_NODE,
            p["myelin"]["node_shunt_s_cm2"] * node_cm2 * 1e6,
            my_g * myel_cm2 * 1e6,
        )

        # axial conductances between neighbors, half cell + half cell
        rho = p["rho_axial_ohm_cm"]
        r_half = rho * (L / 2.0 * 1e-4) / (np.pi * (d / 2.0) ** 2 * 1e-8)
        self.gax_us = 1e6 / (r_half[:-1] + r_half[1:])

        rho_p = p["rho_periaxonal_ohm_cm"]
        width = np.array(
            [p["periaxonal_width_um"][_KIND_NAMES[k]] for k in kinds]
        )
        annulus_cm2 = np.pi * ((d / 2 + width) ** 2 - (d / 2) ** 2) * 1e-8
        rp_half = rho_p * (L / 2.0 * 1e-4) / annulus_cm2
        self.gp_us = 1e6 / (rp_half[:-1] + rp_half[1:])

        # node channel factors: S/cm2 -> uS on the nodal membrane
        nod = p["membrane"]["node"]
        self.node_idx = axon.node_indices
        naf = area_cm2[self.node_idx] * 1e6
        self.g_naf = nod["gnabar_s_cm2"] * naf
        self.g_nap = nod["gnapbar_s_cm2"] * naf
        self.g_k = nod["gkbar_s_cm2"] * naf
        self.g_l = nod["gl_s_cm2"] * naf
        self.ena = nod["ena_mv"]
        self.ek = nod["ek_mv"]
        self.el = nod["el_mv"]

        self.dt_ms = dt_ms
        self.n = n
        self._build_banded()

    def _build_banded(self) -> None:
        n, dt = self.n, self.dt_ms
        ab = np.zeros((7, 2 * n))

        def put(r, c, val):
            ab[3 + r - c, c] += val

        idx = np.arange(n)
        cdt = self.c_nf / dt
        cmydt = self.cmy_nf / dt

        sum_gax = np.zeros(n)
        sum_gax[:-1] += self.gax_us
        sum_gax[1:] += self.gax_us
        sum_gp = np.zeros(n)
        sum_gp[:-1] += self.gp_us
        sum_gp[1:] += self.gp_us

        put(2 * idx, 2 * idx, cdt + self.gpas_us + sum_gax)
        put(2 * idx, 2 * idx + 1, sum_gax)
        put(2 * idx + 1, 2 * idx, -(cdt + self.gpas_us))
        put(2 * idx + 1, 2 * idx + 1, cmydt + self.gmy_us + sum_gp)

        left, right = idx[:-1], idx[1:]
        put(2 * left, 2 * right, -self.gax_us)
        put(2 * right, 2 * left, -self.gax_us)
        put(2 * left, 2 * right + 1, -self.gax_us)
        put(2 * right, 2 * left + 1, -self.gax_us)
        put(2 * left + 1, 2 * right + 1, -self.gp_us)
        put(2 * right + 1, 2 * left + 1, -self.gp_us)

        self.ab0 = ab
        self.cdt = cdt
        self.cmydt = cmydt

    def laplacian(self, g: np.ndarray, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(x)
        flux = g * (x[1:] - x[:-1])
        out[:-1] -= flux
        out[1:] += flux
        return out


def simulate(
    axon: AxonModel,
    drive: ExtracellularDrive,
    detect_mv: float = DETECT_THRESHOLD_MV,
    arm_mv: float = ARM_THRESHOLD_MV,
) -> SpikeRecord:
    """Advance the double cable under the drive and detect node spikes.

    Raises if the time step exceeds the stability budget for the gate
    update, if the drive is too short for the declared period, or if the
    state goes non-finite (divergence is reported, never clamped).
    """
    if drive.dt_us > MAX_DT_US + 1e-12:
        raise ValueError(f"dt {drive.dt_us} us exceeds {MAX_DT_US} us")
    if drive.period_ms is not None:
        need = 3.0 * drive.period_ms + SETTLE_MS
        if drive.duration_ms + 1e-9 < need:
            raise ValueError(
                f"duration {drive.duration_ms} ms below three periods "
                f"plus settling ({need:.2f} ms)"
            )
    if drive.ve_mv.shape[0] != axon.n_compartments:
        raise ValueError("drive does not match the compartment count")
    if not np.all(np.isfinite(drive.ve_mv)):
        raise ArithmeticError("drive contains non-finite samples")

    dt_ms = drive.dt_us * 1e-3
    cab = _Cable(axon, dt_ms)
    params = axon.params
    v_rest = params.v_rest_mv
    gates = params.gate_table()

    n = cab.n
    vm = np.full(n, v_rest)
    vp = np.zeros(n)
    nid = cab.node_idx
    vn = vm[nid]

    state = {}
    for name, afn, bfn, q10, off, _ in gates:
        a = q10 * afn(vn - off)
        b = q10 * bfn(vn - off)
        state[name] = a / (a + b)

    steps = drive.n_steps
    traces = np.empty((len(nid), steps + 1))
    traces[:, 0] = vm[nid]
    rhs = np.empty(2 * n)
    even = 2 * nid

    for j in range(steps):
        vn = vm[nid]
        for name, afn, bfn, q10, off, _ in gates:
            a = q10 * afn(vn - off)
            b = q10 * bfn(vn - off)
            tau = 1.0 / (a + b)
            inf = a * tau
            state[name] = inf + (state[name] - inf) * np.exp(-dt_ms / tau)

        m, h, p_, s = state["m"], state["h"], state["p"], state["s"]
        g_na = cab.g_naf * m**3 * h
        g_nap = cab.g_nap * p_**3
        g_k = cab.g_k * s
        g_node = g_na + g_nap + g_k + cab.g_l
        b_node = (g_na + g_nap) * cab.ena + g_k * cab.ek + cab.g_l * cab.el

        ve = drive.ve_mv[:, j + 1]
        lax = cab.laplacian(cab.gax_us, ve)
        lp = cab.laplacian(cab.gp_us, ve)

        bion = cab.bpas_na.copy()
        bion[nid] = b_node
        r1 = cab.cdt * vm + bion - lax
        r2 = cab.cmydt * vp - cab.cdt * vm - bion - lp
        rhs[0::2] = r1
        rhs[1::2] = r2

        ab = cab.ab0.copy()
        ab[3, even] += g_node          # diagonal of the Vm row
        ab[4, even] -= g_node          # Vm column of the Vp row
        y = solve_banded((3, 3), ab, rhs, overwrite_ab=True, overwrite_b=True)
        vm = y[0::2]
        vp = y[1::2]
        if not np.all(np.isfinite(vm)):
            raise ArithmeticError(
                f"membrane state diverged at t = {(j + 1) * dt_ms:.3f} ms"
            )
        traces[:, j + 1] = vm[nid]

    spike_times = tuple(
        _scan_spikes(traces[i], dt_ms, detect_mv, arm_mv)
        for i in range(len(nid))
    )
    return SpikeRecord(
        node_spike_times_ms=spike_times,
        node_arc_mm=axon.arc_mm[nid].copy(),
        node_vm_mv=traces,
        dt_us=drive.dt_us,
        duration_ms=drive.duration_ms,
        period_ms=drive.period_ms,
        diagnostics={
            "v_max_mv": float(traces.max()),
            "v_min_mv": float(traces.min()),
            "steps": steps,
        },
    )


def _scan_spikes(
    v: np.ndarray, dt_ms: float, detect_mv: float, arm_mv: float
) -> tuple[float, ...]:
    """Upward crossings of ``detect_mv``, re-armed below ``arm_mv``."""
    below = np.flatnonzero(v < arm_mv)
    cands = np.flatnonzero((v[:-1] < detect_mv) & (v[1:] >= detect_mv))
    out = []
    last = -1
    for k in cands:
        lo = np.searchsorted(below, last, side="right")
        hi = np.searchsorted(below, k, side="right")
        if hi > lo:  # dipped below the arming level since the last spike
            frac = (detect_mv - v[k]) / (v[k + 1] - v[k])
            out.append((k + frac) * dt_ms)
            last = k
    return tuple(out)


# ---------------------------------------------------------------------------
# verdicts


def is_activated(
    record: SpikeRecord,
    train: PulseTrain | None = None,
    settle_ms: float = SETTLE_MS,
    criterion: str = "per-period",
) -> bool:
    """Firing verdict at the fiber ends.

    'per-period': a terminal node spikes in every full stimulation
    period after the settling interval (1:1 following).  'any-spike': a
    terminal node spikes at least once after settling.
    """
    period_ms = train.period_s * 1e3 if train is not None else record.period_ms
    terminals = (record.node_spike_times_ms[0], record.node_spike_times_ms[-1])
    if criterion == "any-spike":
        return any(any(t >= settle_ms for t in ts) for ts in terminals)
    if criterion != "per-period":
        raise ValueError(f"unknown criterion {criterion!r}")
    if period_ms is None:
        raise ValueError("per-period verdict needs the stimulation period")
    n_periods = int(np.floor((record.duration_ms - settle_ms) / period_ms))
    if n_periods < 3:
        raise ValueError("analysis window covers fewer than three periods")
    edges = settle_ms + np.arange(n_periods + 1) * period_ms
    for ts in terminals:
        counts, _ = np.histogram(ts, bins=edges)
        if np.all(counts >= 1):
            return True
    return False


def find_threshold(
    axon: AxonModel,
    drive_for: Callable[[float], ExtracellularDrive],
    train: PulseTrain,
    tolerance_ma: float,
    lo_ma: float = 0.05,
    hi_ma: float = 8.0,
    settle_ms: float = SETTLE_MS,
    criterion: str = "per-period",
) -> float:
    """Bisect the activation threshold amplitude.

    ``drive_for`` maps an amplitude in mA to the corresponding drive.
    The bracket must straddle the threshold; activation is assumed
    monotone in amplitude over the bracket.
    """
    if tolerance_ma <= 0:
        raise ValueError("tolerance must be positive")
    if not (0 <= lo_ma < hi_ma):
        raise ValueError("bad bracket")

    def active(amplitude: float) -> bool:
        rec = simulate(axon, drive_for(amplitude))
        return is_activated(rec, train, settle_ms, criterion)

    if active(lo_ma):
        raise ValueError(f"lower bracket {lo_ma} mA already activates")
    if not active(hi_ma):
        raise ValueError(f"upper bracket {hi_ma} mA does not activate")
    while hi_ma - lo_ma > tolerance_ma:
        mid = 0.5 * (lo_ma + hi_ma)
        if active(mid):
            hi_ma = mid
        else:
            lo_ma = mid
    return 0.5 * (lo_ma + hi_ma)


# ---------------------------------------------------------------------------
# export


def export_membrane_traces(record: SpikeRecord, path: str | Path) -> Path:
    """Tabular text dump: one time column plus one column per node."""
    path = Path(path)
    times = record.times_ms()
    header = "time_ms\t" + "\t".join(
        f"node{i:03d}_mv" for i in range(record.n_nodes)
    )
    table = np.column_stack([times, record.node_vm_mv.T])
    np.savetxt(path, table, delimiter="\t", header=header, comments="")
    return path
