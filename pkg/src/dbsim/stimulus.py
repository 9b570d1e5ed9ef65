"""Stimulation waveforms and their harmonic decomposition.

A stimulation setting names which contacts sink and source current and at
what amplitude, rate and pulse width.  The delivered current is a periodic
rectangular train, cathodic phase first by convention, so the signed
current is negative while the cathode is driven.  For dispersive tissue
the train is expanded in a one-sided Fourier series

    I(t) = Re( sum_k c_k * exp(i k w1 t) ),   w1 = 2*pi*f

whose coefficients have a closed form for rectangular phases.  The k = 0
term carries the DC offset (nonzero for monophasic trains).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

PULSE_SHAPES = ("monophasic", "biphasic")

_POLARITY_TOKEN = re.compile(r"^(?P<contact>[A-Za-z0-9]+)(?P<sign>[+-])$")


def parse_polarity(label: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Split a polarity label like ``"C3-,C4+"`` into (cathodes, anodes).

    Tokens are contact names suffixed with ``-`` (current sink) or ``+``
    (current source).  ``CASE+`` selects the implant case as the return
    electrode.  Order within the label is preserved.
    """
    cathodes: list[str] = []
    anodes: list[str] = []
    for raw in label.split(","):
        token = raw.strip()
        if not token:
            raise ValueError(f"empty token in polarity label {label!r}")
        m = _POLARITY_TOKEN.match(token)
        if m is None:
            raise ValueError(f"malformed polarity token {token!r}")
        name = m.group("contact")
        if m.group("sign") == "-":
            cathodes.append(name)
        else:
            anodes.append(name)
    if not cathodes:
        raise ValueError(f"no cathode in polarity label {label!r}")
    if not anodes:
        raise ValueError(f"no anode in polarity label {label!r}")
    overlap = set(cathodes) & set(anodes)
    if overlap:
        raise ValueError(f"contacts {sorted(overlap)} listed with both signs")
    return tuple(cathodes), tuple(anodes)


@dataclass(frozen=True)
class StimulationSetting:
    """One programming of the stimulator.

    ``cathodes`` and ``anodes`` hold contact names; the reserved name
    ``CASE`` stands for the implant case (monopolar return).  Amplitude is
    the magnitude of the pulse current in mA, shared by all phases.
    """

    label: str
    cathodes: tuple[str, ...]
    anodes: tuple[str, ...]
    amplitude_ma: float
    frequency_hz: float
    pulse_width_us: float
    pulse_shape: str = "monophasic"

    def __post_init__(self) -> None:
        if not self.cathodes or not self.anodes:
            raise ValueError("need at least one cathode and one anode")
        if set(self.cathodes) & set(self.anodes):
            raise ValueError("a contact cannot be cathode and anode at once")
        if "CASE" in self.cathodes:
            raise ValueError("the implant case can only act as anode")
        if self.amplitude_ma < 0:
            raise ValueError("amplitude must be non-negative")
        _check_train_timing(self.frequency_hz, self.pulse_width_us, self.pulse_shape)

    @classmethod
    def from_label(
        cls,
        label: str,
        amplitude_ma: float,
        frequency_hz: float,
        pulse_width_us: float,
        pulse_shape: str = "monophasic",
    ) -> "StimulationSetting":
        cathodes, anodes = parse_polarity(label)
        return cls(
            label=label,
            cathodes=cathodes,
            anodes=anodes,
            amplitude_ma=amplitude_ma,
            frequency_hz=frequency_hz,
            pulse_width_us=pulse_width_us,
            pulse_shape=pulse_shape,
        )

    @property
    def is_monopolar(self) -> bool:
        return self.anodes == ("CASE",)

    def swapped(self, label: str | None = None) -> "StimulationSetting":
        """Same setting with cathodes and anodes exchanged."""
        if "CASE" in self.anodes:
            raise ValueError("cannot swap a case-return setting")
        new_label = label or ",".join(
            [f"{c}-" for c in self.anodes] + [f"{a}+" for a in self.cathodes]
        )
        return StimulationSetting(
            label=new_label,
            cathodes=self.anodes,
            anodes=self.cathodes,
            amplitude_ma=self.amplitude_ma,
            frequency_hz=self.frequency_hz,
            pulse_width_us=self.pulse_width_us,
            pulse_shape=self.pulse_shape,
        )


def _check_train_timing(frequency_hz: float, pulse_width_us: float, shape: str) -> None:
    if shape not in PULSE_SHAPES:
        raise ValueError(f"unknown pulse shape {shape!r}, expected one of {PULSE_SHAPES}")
    if frequency_hz <= 0:
        raise ValueError("frequency must be positive")
    if pulse_width_us <= 0:
        raise ValueError("pulse width must be positive")
    duty = pulse_width_us * 1e-6 * frequency_hz
    if duty >= 1.0:
        raise ValueError(f"pulse width times frequency is {duty:.3f}, must stay below 1")
    # A charge-balanced train packs two phases into each period.
    if shape == "biphasic" and 2.0 * duty >= 1.0:
        raise ValueError("biphasic phases overlap: 2 * pulse width exceeds the period")


@dataclass(frozen=True)
class PulseTrain:
    """Periodic rectangular current train, cathodic phase leading.

    ``current(t)`` returns the signed current in mA: ``-amplitude_ma``
    during the cathodic phase, ``+amplitude_ma`` during the anodic phase
    of a biphasic train, zero between pulses.  ``onset_s`` shifts the
    whole train in time.
    """

    amplitude_ma: float
    frequency_hz: float
    pulse_width_us: float
    shape: str = "monophasic"
    onset_s: float = 0.0

    def __post_init__(self) -> None:
        if self.amplitude_ma < 0:
            raise ValueError("amplitude must be non-negative")
        _check_train_timing(self.frequency_hz, self.pulse_width_us, self.shape)

    @property
    def period_s(self) -> float:
        return 1.0 / self.frequency_hz

    @property
    def pulse_width_s(self) -> float:
        return self.pulse_width_us * 1e-6

    def phase(self, t: np.ndarray | float) -> np.ndarray:
        """Unit waveform s(t) in {-1, 0, +1}; current is amplitude * s."""
        tau = np.mod(np.asarray(t, dtype=float) - self.onset_s, self.period_s)
        pw = self.pulse_width_s
        out = np.where(tau < pw, -1.0, 0.0)
        if self.shape == "biphasic":
            out = out + np.where((tau >= pw) & (tau < 2.0 * pw), 1.0, 0.0)
        return out

    def current(self, t: np.ndarray | float) -> np.ndarray:
        return self.amplitude_ma * self.phase(t)


def make_pulse_train(
    frequency_hz: float,
    pulse_width_us: float,
    amplitude_ma: float,
    shape: str = "monophasic",
    onset_s: float = 0.0,
) -> PulseTrain:
    return PulseTrain(
        amplitude_ma=amplitude_ma,
        frequency_hz=frequency_hz,
        pulse_width_us=pulse_width_us,
        shape=shape,
        onset_s=onset_s,
    )


def train_for(setting: StimulationSetting) -> PulseTrain:
    return PulseTrain(
        amplitude_ma=setting.amplitude_ma,
        frequency_hz=setting.frequency_hz,
        pulse_width_us=setting.pulse_width_us,
        shape=setting.pulse_shape,
    )


@dataclass(frozen=True)
class Spectrum:
    """One-sided Fourier coefficients of a pulse train.

    ``coefficients[k]`` multiplies exp(i k w1 t); index 0 is the real DC
    term.  Mean power of the signal is ``c0^2 + sum_k |c_k|^2 / 2``.
    """

    fundamental_hz: float
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coefficients, dtype=complex)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)
        if self.fundamental_hz <= 0:
            raise ValueError("fundamental frequency must be positive")
        if coeffs.ndim != 1 or coeffs.size < 1:
            raise ValueError("need a 1-d coefficient array with a DC term")
        if abs(coeffs[0].imag) > 1e-15 * max(1.0, abs(coeffs[0].real)):
            raise ValueError("DC coefficient must be real")

    @property
    def n_harmonics(self) -> int:
        return self.coefficients.size - 1

    def power(self, n: int | None = None) -> float:
        """Mean-square signal power carried by harmonics 0..n."""
        if n is None:
            n = self.n_harmonics
        c = self.coefficients[: n + 1]
        return float(c[0].real ** 2 + 0.5 * np.sum(np.abs(c[1:]) ** 2))

    def shifted(self, tau_s: float) -> "Spectrum":
        """Spectrum of the same train delayed by tau."""
        k = np.arange(self.coefficients.size)
        phase = np.exp(-1j * k * 2.0 * np.pi * self.fundamental_hz * tau_s)
        return Spectrum(self.fundamental_hz, self.coefficients * phase)


def fourier_decompose(train: PulseTrain, n_harmonics: int) -> Spectrum:
    """Closed-form Fourier coefficients of a rectangular train.

    For a piecewise-constant signal the coefficient integrals reduce to
    differences of complex exponentials, so no quadrature is involved.
    """
    if n_harmonics < 1:
        raise ValueError("need at least one harmonic")
    a = train.amplitude_ma
    t_period = train.period_s
    pw = train.pulse_width_s
    w1 = 2.0 * np.pi * train.frequency_hz

    k = np.arange(1, n_harmonics + 1)
    ikw = 1j * k * w1

    def seg(t0: float, t1: float) -> np.ndarray:
        # integral of exp(-i k w1 t) over [t0, t1]
        return (np.exp(-ikw * t0) - np.exp(-ikw * t1)) / ikw

    if train.shape == "monophasic":
        c0 = -a * pw / t_period
        ck = (2.0 / t_period) * (-a) * seg(0.0, pw)
    else:
        c0 = 0.0
        ck = (2.0 / t_period) * (-a * seg(0.0, pw) + a * seg(pw, 2.0 * pw))

    coeffs = np.concatenate(([complex(c0)], ck))
    if train.onset_s != 0.0:
        kk = np.arange(n_harmonics + 1)
        coeffs = coeffs * np.exp(-1j * kk * w1 * train.onset_s)
    return Spectrum(train.frequency_hz, coeffs)


def reconstruct(spectrum: Spectrum, t: np.ndarray | float) -> np.ndarray:
    """Evaluate the truncated Fourier series at times ``t`` (seconds)."""
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    tt = np.atleast_1d(t)
    w1 = 2.0 * np.pi * spectrum.fundamental_hz
    # rolling phasor keeps memory flat even for thousands of harmonics
    base = np.exp(1j * w1 * tt)
    phasor = np.ones_like(base)
    out = np.full(tt.shape, spectrum.coefficients[0].real)
    for ck in spectrum.coefficients[1:]:
        phasor = phasor * base
        out += (ck * phasor).real
    return out[()] if scalar else out


def band_edges(n_harmonics: int, bands_per_octave: int = 1) -> list[tuple[int, int]]:
    """Split harmonics 1..n into contiguous octave-spaced bands.

    Returns inclusive (lo, hi) index pairs.  Band boundaries double each
    octave, so ~log2(n) bands cover the spectrum; the representative
    harmonic of a band is its geometric centre, see ``band_representative``.
    """
    if n_harmonics < 1:
        raise ValueError("need at least one harmonic")
    edges: list[tuple[int, int]] = []
    lo = 1
    width = 1
    while lo <= n_harmonics:
        hi = min(n_harmonics, lo + width - 1)
        edges.append((lo, hi))
        lo = hi + 1
        # after the first few singleton bands, widths grow by 2^(1/bpo)
        if len(edges) >= 3:
            width = max(width + 1, int(round(width * 2.0 ** (1.0 / bands_per_octave))))
    return edges


def band_representative(lo: int, hi: int) -> int:
    """Representative harmonic index of a band: rounded geometric mean."""
    return int(round(np.sqrt(lo * hi)))
