"""Tremor severity from tri-axial inertial recordings.

Processing chain: band-pass the acceleration, integrate twice to
displacement, project onto the plane of largest variance, take windowed
radial maxima against concentric severity radii, fit a smoothed Markov
chain over the resulting states, and collapse its stationary
distribution into a 0-100 score.  Lower is better.

Every knob of the chain (band edges, window length, radii) is an
argument with a declared default; nothing is tuned to a particular
recording device.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import signal as sig
from scipy.integrate import cumulative_trapezoid

log = logging.getLogger(__name__)

DEFAULT_BAND_HZ = (2.0, 12.0)
DEFAULT_RADII_MM = (1.0, 2.0, 4.0, 8.0, 16.0)
DEFAULT_WINDOW_S = 0.5
MIN_SEGMENT_S = 5.0

# uniform-sampling gate for imported files
JITTER_TOLERANCE = 0.01

_COLUMNS = ("t_s", "ax", "ay", "az")


# ---------------------------------------------------------------------------
# recordings


@dataclass(frozen=True)
class TremorRecording:
    """Uniformly sampled tri-axial acceleration, SI units."""

    sample_rate_hz: float
    accel_mps2: np.ndarray                      # (n, 3)
    lifts_s: tuple[tuple[float, float], ...] = ()   # optional segment marks

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        a = np.asarray(self.accel_mps2, dtype=float)
        if a.ndim != 2 or a.shape[1] != 3:
            raise ValueError("acceleration must be an (n, 3) series")
        if a.shape[0] < 2:
            raise ValueError("recording needs at least two samples")
        if not np.all(np.isfinite(a)):
            raise ValueError("acceleration has non-finite samples")
        object.__setattr__(self, "accel_mps2", a)
        a.setflags(write=False)
        for lo, hi in self.lifts_s:
            if not 0 <= lo < hi <= self.duration_s + 1e-9:
                raise ValueError(f"lift segment ({lo}, {hi}) outside recording")

    @property
    def n_samples(self) -> int:
        return self.accel_mps2.shape[0]

    @property
    def duration_s(self) -> float:
        return (self.n_samples - 1) / self.sample_rate_hz

    def times_s(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate_hz


def _detect_delimiter(header: str) -> str | None:
    for cand in (",", "\t", ";"):
        if cand in header:
            return cand
    return None   # whitespace


def load_recording(path: str | Path) -> TremorRecording:
    """Read a delimiter-separated recording with a (t_s, ax, ay, az) header."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        if not header:
            raise ValueError(f"{path}: empty file")
        delim = _detect_delimiter(header)
        names = [c.strip().lower() for c in header.split(delim)]
        try:
            cols = [names.index(c) for c in _COLUMNS]
        except ValueError:
            missing = [c for c in _COLUMNS if c not in names]
            raise ValueError(f"{path}: missing column(s) {missing}") from None
        data = np.loadtxt(fh, delimiter=delim, ndmin=2)
    if data.shape[1] < len(names):
        raise ValueError(f"{path}: rows narrower than the header")
    t = data[:, cols[0]]
    accel = data[:, cols[1:]]
    if t.size < 2:
        raise ValueError(f"{path}: need at least two samples")
    dt = np.diff(t)
    med = float(np.median(dt))
    if med <= 0:
        raise ValueError(f"{path}: timestamps do not increase")
    if np.max(np.abs(dt - med)) > JITTER_TOLERANCE * med:
        raise ValueError(
            f"{path}: non-uniform sampling beyond {JITTER_TOLERANCE:.0%} jitter"
        )
    return TremorRecording(sample_rate_hz=1.0 / med, accel_mps2=accel)


def save_recording(rec: TremorRecording, path: str | Path) -> Path:
    """Write the tab-separated form read back by ``load_recording``."""
    path = Path(path)
    table = np.column_stack([rec.times_s(), rec.accel_mps2])
    np.savetxt(
        path, table, delimiter="\t", header="\t".join(_COLUMNS),
        comments="", fmt="%.17g",
    )
    return path


# ---------------------------------------------------------------------------
# trajectory reconstruction


@dataclass(frozen=True)
class Trajectory:
    """Displacement in the principal tremor plane, millimetres."""

    sample_rate_hz: float
    xy_mm: np.ndarray            # (n, 2)

    def __post_init__(self) -> None:
        xy = np.asarray(self.xy_mm, dtype=float)
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise ValueError("trajectory must be an (n, 2) series")
        object.__setattr__(self, "xy_mm", xy)
        xy.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.xy_mm.shape[0]

    def radial_mm(self) -> np.ndarray:
        return np.linalg.norm(self.xy_mm, axis=1)


def _integrate_once(series: np.ndarray, fs: float) -> np.ndarray:
    out = cumulative_trapezoid(series, dx=1.0 / fs, initial=0.0, axis=0)
    # each integration stage may pick up a ramp from residual bias;
    # removing the least-squares line keeps in-band sinusoids intact
    return sig.detrend(out, axis=0, type="linear")


def reconstruct_trajectory(
    rec: TremorRecording,
    band_hz: tuple[float, float] = DEFAULT_BAND_HZ,
) -> Trajectory:
    """Band-passed double integration projected onto the top variance plane."""
    lo, hi = band_hz
    nyq = rec.sample_rate_hz / 2.0
    if not 0.0 < lo < hi < nyq:
        raise ValueError(
            f"band ({lo}, {hi}) Hz must satisfy 0 < lo < hi < Nyquist ({nyq})"
        )
    if rec.duration_s < MIN_SEGMENT_S:
        raise ValueError(
            f"segment of {rec.duration_s:.2f} s is shorter than "
            f"{MIN_SEGMENT_S:.0f} s"
        )
    a = rec.accel_mps2 - rec.accel_mps2.mean(axis=0)
    sos = sig.butter(4, band_hz, btype="bandpass", fs=rec.sample_rate_hz,
                     output="sos")
    a = sig.sosfiltfilt(sos, a, axis=0)
    v = _integrate_once(a, rec.sample_rate_hz)
    d = _integrate_once(v, rec.sample_rate_hz)

    d = d - d.mean(axis=0)
    # principal plane of the displacement cloud; right-singular vectors
    # are ordered by variance so the first two span it
    _, _, vt = np.linalg.svd(d, full_matrices=False)
    xy = d @ vt[:2].T
    return Trajectory(sample_rate_hz=rec.sample_rate_hz, xy_mm=xy * 1e3)


# ---------------------------------------------------------------------------
# state assignment and the Markov model


def assign_states(
    trajectory: Trajectory,
    radii_mm: Sequence[float] = DEFAULT_RADII_MM,
    window_s: float = DEFAULT_WINDOW_S,
) -> np.ndarray:
    """Severity state per analysis window, 1-based.

    A window lands in the smallest state whose radius bounds its peak
    radial displacement; anything past the last radius saturates there.
    Only whole windows are scored.
    """
    radii = np.asarray(radii_mm, dtype=float)
    if radii.size == 0:
        raise ValueError("need at least one state radius")
    if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be positive and strictly increasing")
    if window_s <= 0:
        raise ValueError("window must be positive")
    per = int(round(window_s * trajectory.sample_rate_hz))
    if per < 1 or trajectory.n_samples < per:
        raise ValueError("trajectory shorter than one analysis window")
    r = trajectory.radial_mm()
    n_win = r.size // per
    peaks = r[: n_win * per].reshape(n_win, per).max(axis=1)
    states = np.searchsorted(radii, peaks, side="left") + 1
    return np.minimum(states, radii.size).astype(np.int64)


def estimate_markov(
    states: np.ndarray, n_states: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Transition matrix with add-one smoothing and its stationary vector.

    ``n_states`` defaults to the largest visited state.  Smoothing keeps
    every transition possible, so the chain is ergodic and the power
    iteration below converges for any input sequence.
    """
    s = np.asarray(states, dtype=np.int64)
    if s.size < 2:
        raise ValueError("need at least two states to count transitions")
    if np.any(s < 1):
        raise ValueError("states are 1-based")
    n = int(s.max()) if n_states is None else int(n_states)
    if n < int(s.max()):
        raise ValueError(f"n_states {n} below the largest visited state")
    counts = np.ones((n, n), dtype=float)     # add-one prior
    np.add.at(counts, (s[:-1] - 1, s[1:] - 1), 1.0)
    p = counts / counts.sum(axis=1, keepdims=True)
    return p, _stationary(p)


def _stationary(p: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    pi = np.full(p.shape[0], 1.0 / p.shape[0])
    for _ in range(200_000):
        nxt = pi @ p
        nxt /= nxt.sum()
        if np.abs(nxt - pi).sum() < tol:
            return nxt
        pi = nxt
    return pi    # unreachable for the strictly positive matrices built here


def tremor_distribution(
    states: np.ndarray, n_states: int | None = None
) -> np.ndarray:
    """Fraction of analysis windows spent in each state."""
    s = np.asarray(states, dtype=np.int64)
    if s.size == 0:
        raise ValueError("empty state sequence")
    n = int(s.max()) if n_states is None else int(n_states)
    if n < int(s.max()):
        raise ValueError(f"n_states {n} below the largest visited state")
    return np.bincount(s - 1, minlength=n) / s.size


@dataclass(frozen=True)
class TremorModel:
    """Markov description of a scored recording."""

    radii_mm: tuple[float, ...]
    states: np.ndarray
    transition: np.ndarray
    stationary: np.ndarray
    score: float

    def __post_init__(self) -> None:
        radii = tuple(float(r) for r in self.radii_mm)
        if len(radii) < 1 or any(np.diff(radii) <= 0):
            raise ValueError("radii must be strictly increasing")
        object.__setattr__(self, "radii_mm", radii)
        p = np.asarray(self.transition, dtype=float)
        pi = np.asarray(self.stationary, dtype=float)
        n = len(radii)
        if p.shape != (n, n) or pi.shape != (n,):
            raise ValueError("matrix sizes must match the radii")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("transition rows must sum to one")
        if np.any(pi < -1e-12) or abs(pi.sum() - 1.0) > 1e-9:
            raise ValueError("stationary vector must be a distribution")
        if np.max(np.abs(pi @ p - pi)) > 1e-6:
            raise ValueError("stationary vector does not satisfy pi P = pi")
        s = np.asarray(self.states, dtype=np.int64)
        if s.size and (s.min() < 1 or s.max() > n):
            raise ValueError("states outside 1..S")
        for name, arr in (("states", s), ("transition", p), ("stationary", pi)):
            object.__setattr__(self, name, arr)
            arr.setflags(write=False)

    @property
    def n_states(self) -> int:
        return len(self.radii_mm)


def _score_from_stationary(pi: np.ndarray) -> float:
    s = pi.size
    if s < 2:
        raise ValueError("scoring needs at least two states")
    return float(100.0 * np.dot(pi, np.arange(s) / (s - 1)))


def tremor_score(model: TremorModel) -> float:
    """Stationary-weighted severity on a 0-100 scale; lower is better."""
    return _score_from_stationary(model.stationary)


def fit_tremor_model(
    trajectory: Trajectory,
    radii_mm: Sequence[float] = DEFAULT_RADII_MM,
    window_s: float = DEFAULT_WINDOW_S,
) -> TremorModel:
    """Assign states, estimate the chain, and score, in one step.

    A recording that never leaves one band is the degenerate chain at
    that state: its stationary vector is the point mass, not the
    smoothed estimate, so a quiet recording scores exactly 0 instead of
    inheriting prior mass from bands it never reached.
    """
    states = assign_states(trajectory, radii_mm, window_s)
    n = len(radii_mm)
    if states.size >= 2 and states.min() == states.max():
        k = int(states[0])
        p = np.eye(n)
        pi = np.zeros(n)
        pi[k - 1] = 1.0
    else:
        p, pi = estimate_markov(states, n_states=n)
    return TremorModel(
        radii_mm=tuple(float(r) for r in radii_mm),
        states=states,
        transition=p,
        stationary=pi,
        score=_score_from_stationary(pi),
    )


# ---------------------------------------------------------------------------
# reporting


def score_report(entries: Iterable[tuple[str, str, TremorModel]]) -> str:
    """Text table of per-hand scores with per-setting totals.

    ``entries`` yields (hand, setting label, model).  The total per
    setting is the plain sum over its hands.
    """
    by_label: dict[str, list[tuple[str, TremorModel]]] = {}
    for hand, label, model in entries:
        by_label.setdefault(label, []).append((hand, model))
    if not by_label:
        raise ValueError("no score entries")
    lines: list[str] = ["tremor score report", ""]
    for label, rows in by_label.items():
        lines.append(f"setting {label}")
        for hand, model in rows:
            occ = tremor_distribution(model.states, model.n_states)
            lines.append(f"  {hand}  score {model.score:.2f}")
            lines.append(
                "      radii_mm  "
                + " ".join(f"{r:g}" for r in model.radii_mm)
            )
            lines.append(
                "      occupancy " + " ".join(f"{x:.3f}" for x in occ)
            )
        total = sum(m.score for _, m in rows)
        lines.append(f"  total {total:.2f}")
        lines.append("")
    return "\n".join(lines)
