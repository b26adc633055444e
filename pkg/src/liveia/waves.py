"""Waveform algebra for thought patterns.

A thought pattern is a sum of sine components; complex patterns are
superpositions of simpler ones. ``decompose`` inverts ``sample`` for
on-bin components via the discrete Fourier transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class WaveComponent:
    """One sine component: amplitude * sin(2*pi*frequency*t + phase)."""

    frequency: float
    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        if not (self.frequency > 0):
            raise ContractError(f"frequency must be > 0, got {self.frequency}")
        if self.amplitude < 0:
            raise ContractError(f"amplitude must be >= 0, got {self.amplitude}")
        # phase is stored canonically in [0, 2*pi)
        object.__setattr__(self, "phase", self.phase % TWO_PI)


@dataclass
class Waveform:
    components: list[WaveComponent] = field(default_factory=list)
    label: str = ""

    def is_null(self) -> bool:
        return not self.components

    def max_frequency(self) -> float:
        return max((c.frequency for c in self.components), default=0.0)


@dataclass
class SampledSignal:
    samples: list[float]
    sample_rate: float

    def __post_init__(self):
        if not (self.sample_rate > 0):
            raise ContractError("sample_rate must be > 0")
        if len(self.samples) < 2:
            raise ContractError("a sampled signal needs at least 2 samples")


def superpose(a: Waveform | None, b: Waveform | None) -> Waveform:
    """Sum two waveforms by concatenating their component lists.

    ``None`` or an empty waveform acts as the additive identity.
    """
    comps_a = list(a.components) if a is not None else []
    comps_b = list(b.components) if b is not None else []
    label_parts = [w.label for w in (a, b) if w is not None and w.label]
    return Waveform(comps_a + comps_b, label=" + ".join(label_parts))


def sample(w: Waveform, duration: float, rate: float) -> SampledSignal:
    """Evaluate a waveform at ``rate`` samples per unit time over ``duration``.

    samples[k] = sum_i A_i * sin(2*pi*f_i*(k/rate) + phi_i)

    Raises ContractError on a Nyquist violation, naming the offending
    component.
    """
    if not (duration > 0):
        raise ContractError("duration must be > 0")
    if not (rate > 0):
        raise ContractError("rate must be > 0")
    for c in w.components:
        if rate <= 2.0 * c.frequency:
            raise ContractError(
                f"sample rate {rate} violates the Nyquist limit for component "
                f"(frequency={c.frequency}, amplitude={c.amplitude}): "
                f"need rate > {2.0 * c.frequency}"
            )
    n = int(round(duration * rate))
    if n < 2:
        raise ContractError("duration * rate must yield at least 2 samples")
    t = np.arange(n) / rate
    out = np.zeros(n)
    for c in w.components:
        out += c.amplitude * np.sin(TWO_PI * c.frequency * t + c.phase)
    return SampledSignal(samples=out.tolist(), sample_rate=float(rate))


def decompose(
    s: SampledSignal, max_components: int = 8, floor: float = 0.05
) -> list[WaveComponent]:
    """Break a signal into its constituent sine components.

    Runs a real FFT and keeps up to ``max_components`` bins whose
    magnitude reaches ``floor`` times the largest magnitude, sorted by
    amplitude descending. Signals whose length is not a power of two are
    zero-padded up to the next one; recovery is exact only for
    components that land on a bin of the (padded) transform.
    """
    if floor <= 0:
        raise ContractError("floor must be > 0")
    if max_components < 1:
        raise ContractError("max_components must be >= 1")
    n = len(s.samples)
    if n < 64:
        raise ContractError(f"signal too short to decompose: {n} < 64 samples")
    padded = 1 << (n - 1).bit_length()
    data = np.asarray(s.samples, dtype=float)
    if padded != n:
        data = np.concatenate([data, np.zeros(padded - n)])
    spectrum = np.fft.rfft(data)
    # bin 0 is the DC offset; a pure sine sum has none
    magnitudes = np.abs(spectrum)
    magnitudes[0] = 0.0
    peak = magnitudes.max()
    if peak <= 0:
        return []
    found = []
    for i in np.argsort(magnitudes)[::-1]:
        if magnitudes[i] < floor * peak or len(found) == max_components:
            break
        amplitude = 2.0 * magnitudes[i] / padded
        # X_k = (A*N/2) * (sin(phi) - i*cos(phi))  =>  phi = angle(X_k) + pi/2
        phase = (math.atan2(spectrum[i].imag, spectrum[i].real) + math.pi / 2) % TWO_PI
        frequency = i * s.sample_rate / padded
        found.append(WaveComponent(frequency=frequency, amplitude=amplitude, phase=phase))
    found.sort(key=lambda c: (-c.amplitude, c.frequency))
    return found


def waveform_to_doc(w: Waveform) -> dict:
    return {
        "label": w.label,
        "components": [
            {"frequency": c.frequency, "amplitude": c.amplitude, "phase": c.phase}
            for c in w.components
        ],
    }


def waveform_from_doc(doc: dict) -> Waveform:
    comps = [
        WaveComponent(
            frequency=float(c["frequency"]),
            amplitude=float(c["amplitude"]),
            phase=float(c.get("phase", 0.0)),
        )
        for c in doc.get("components", [])
    ]
    return Waveform(components=comps, label=str(doc.get("label", "")))
