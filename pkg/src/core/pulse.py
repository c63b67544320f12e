"""
Pulse Core
==========

The three pulse abstractions (ports, frames, waveforms) and the pulse
instruction set consumed by every other part of the stack.

Durations are integer sample counts. Seconds only appear at the render and
simulation boundaries, through a port's sample period.
"""

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    AmplitudeOutOfRange,
    EmptyWaveform,
    InvalidInstruction,
    InvalidParams,
    NonFinite,
    UnknownFrame,
)

TWO_PI = 2.0 * math.pi
AMPLITUDE_SLACK = 1e-12
PORT_ID_PATTERN = re.compile(r'^[a-z][a-z0-9_]*$')


def normalize_phase(phi: float) -> float:
    """Map an angle onto [0, 2π)."""
    if not math.isfinite(phi):
        raise NonFinite(f"Phase must be finite, got {phi}")
    r = math.fmod(phi, TWO_PI)
    if r < 0.0:
        r += TWO_PI
    if r >= TWO_PI:
        # -tiny + 2π rounds up to 2π
        r = 0.0
    return r


# Ports

class PortKind(Enum):
    DRIVE = "drive"
    READOUT = "readout"
    ACQUIRE = "acquire"
    COUPLER = "coupler"


@dataclass(frozen=True)
class PortConstraints:
    """Timing, amplitude and frequency limits of one port."""
    sample_period_s: float
    granularity_samples: int = 1
    min_duration_samples: int = 1
    max_amplitude: float = 1.0
    frequency_range_hz: Tuple[float, float] = (0.0, math.inf)

    def __post_init__(self):
        object.__setattr__(self, 'frequency_range_hz', tuple(float(x) for x in self.frequency_range_hz))
        if not self.sample_period_s > 0:
            raise ValueError("sample_period_s must be positive")
        if self.granularity_samples < 1 or self.min_duration_samples < 1:
            raise ValueError("granularity and minimum duration must be positive")
        if self.min_duration_samples % self.granularity_samples:
            raise ValueError("min_duration_samples must be a multiple of granularity_samples")
        if not 0.0 < self.max_amplitude <= 1.0:
            raise ValueError("max_amplitude must be in (0, 1]")
        lo, hi = self.frequency_range_hz
        if lo > hi:
            raise ValueError("frequency range lower bound exceeds upper bound")

    def allows_frequency(self, frequency_hz: float) -> bool:
        lo, hi = self.frequency_range_hz
        return lo <= frequency_hz <= hi

    def to_dict(self) -> Dict[str, Any]:
        return {
            'sample_period_s': self.sample_period_s,
            'granularity_samples': self.granularity_samples,
            'min_duration_samples': self.min_duration_samples,
            'max_amplitude': self.max_amplitude,
            'frequency_range_hz': list(self.frequency_range_hz),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'PortConstraints':
        return cls(
            sample_period_s=float(data['sample_period_s']),
            granularity_samples=int(data.get('granularity_samples', 1)),
            min_duration_samples=int(data.get('min_duration_samples', 1)),
            max_amplitude=float(data.get('max_amplitude', 1.0)),
            frequency_range_hz=tuple(data.get('frequency_range_hz', (0.0, math.inf))),
        )


@dataclass(frozen=True)
class Port:
    """Software handle for one hardware input or output channel."""
    id: str
    kind: PortKind
    sites: Tuple[int, ...]
    constraints: PortConstraints
    default_frequency_hz: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'sites', tuple(int(s) for s in self.sites))
        if not PORT_ID_PATTERN.match(self.id or ""):
            raise ValueError(f"Invalid port id: {self.id!r}")
        if self.kind is PortKind.COUPLER:
            if len(self.sites) != 2:
                raise ValueError(f"Coupler port '{self.id}' must reference exactly 2 sites")
        elif not self.sites:
            raise ValueError(f"Port '{self.id}' must reference at least one site")

    @property
    def carrier_frequency_hz(self) -> float:
        """Initial carrier for frames created on this port."""
        if self.default_frequency_hz is not None:
            return self.default_frequency_hz
        lo, hi = self.constraints.frequency_range_hz
        if math.isinf(hi):
            return lo
        return 0.5 * (lo + hi)

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'id': self.id,
            'kind': self.kind.value,
            'sites': list(self.sites),
            'constraints': self.constraints.to_dict(),
        }
        if self.default_frequency_hz is not None:
            data['default_frequency_hz'] = self.default_frequency_hz
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'Port':
        return cls(
            id=data['id'],
            kind=PortKind(data['kind']),
            sites=tuple(data['sites']),
            constraints=PortConstraints.from_dict(data['constraints']),
            default_frequency_hz=data.get('default_frequency_hz'),
        )


# Waveforms

class WaveformTemplate(Enum):
    CONSTANT = "constant"
    GAUSSIAN = "gaussian"
    GAUSSIAN_SQUARE = "gaussian_square"


TEMPLATE_PARAMS: Dict[WaveformTemplate, FrozenSet[str]] = {
    WaveformTemplate.CONSTANT: frozenset({'amp', 'phase'}),
    WaveformTemplate.GAUSSIAN: frozenset({'amp', 'phase', 'sigma_samples'}),
    WaveformTemplate.GAUSSIAN_SQUARE: frozenset({'amp', 'phase', 'sigma_samples', 'width_samples'}),
}


def _as_complex(value: Any) -> complex:
    if isinstance(value, (tuple, list)):
        if len(value) != 2:
            raise ValueError(f"Sample pair must have 2 entries, got {value!r}")
        return complex(float(value[0]), float(value[1]))
    return complex(value)


@dataclass(frozen=True)
class SampledWaveform:
    """Explicit envelope samples."""
    samples: Tuple[complex, ...]

    def __post_init__(self):
        samples = tuple(_as_complex(s) for s in self.samples)
        if not samples:
            raise EmptyWaveform("Waveform must contain at least one sample")
        for i, s in enumerate(samples):
            if not (math.isfinite(s.real) and math.isfinite(s.imag)):
                raise NonFinite(f"Sample {i} is not finite")
            if abs(s) > 1.0 + AMPLITUDE_SLACK:
                raise AmplitudeOutOfRange(f"|sample {i}| = {abs(s):.6g} exceeds 1.0")
        object.__setattr__(self, 'samples', samples)

    @property
    def duration(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class ParametricWaveform:
    """Envelope given by a template and its parameters."""
    template: WaveformTemplate
    duration_samples: int
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'params', {k: float(v) for k, v in dict(self.params).items()})
        if int(self.duration_samples) < 1:
            raise InvalidParams("duration_samples must be positive")

    @property
    def duration(self) -> int:
        return int(self.duration_samples)


Waveform = Union[SampledWaveform, ParametricWaveform]


def make_sampled_waveform(samples: Sequence[Any]) -> SampledWaveform:
    """Create a waveform from explicit amplitudes (complex or (re, im) pairs)."""
    return SampledWaveform(tuple(samples))


def make_parametric_waveform(template: Union[str, WaveformTemplate], duration_samples: int,
                             **params: float) -> ParametricWaveform:
    """Create and validate a parametric waveform."""
    w = ParametricWaveform(WaveformTemplate(template), duration_samples, params)
    _check_params(w)
    return w


def waveform_duration(w: Waveform) -> int:
    return w.duration


def _check_params(w: ParametricWaveform):
    required = TEMPLATE_PARAMS[w.template]
    keys = set(w.params)
    if keys != required:
        missing = sorted(required - keys)
        extra = sorted(keys - required)
        raise InvalidParams(f"{w.template.value}: missing {missing}, unexpected {extra}")
    for name, value in w.params.items():
        if not math.isfinite(value):
            raise InvalidParams(f"{w.template.value}: parameter {name} is not finite")
    if not 0.0 <= w.params['amp'] <= 1.0:
        raise InvalidParams(f"amp must be in [0, 1], got {w.params['amp']}")
    if 'sigma_samples' in w.params and w.params['sigma_samples'] <= 0:
        raise InvalidParams("sigma_samples must be positive")
    if 'width_samples' in w.params and not 0 <= w.params['width_samples'] <= w.duration:
        raise InvalidParams("width_samples must lie within the duration")


def _envelope(w: ParametricWaveform) -> np.ndarray:
    d = w.duration
    p = w.params
    n = np.arange(d, dtype=float)
    carrier = p['amp'] * np.exp(1j * p['phase'])
    if w.template is WaveformTemplate.CONSTANT:
        return np.full(d, carrier, dtype=complex)

    center = (d - 1) / 2.0
    sigma = p['sigma_samples']
    if w.template is WaveformTemplate.GAUSSIAN:
        return carrier * np.exp(-((n - center) ** 2) / (2.0 * sigma ** 2))

    # Flat top of width_samples centered, gaussian flanks outside it
    half_width = p['width_samples'] / 2.0
    excess = np.maximum(np.abs(n - center) - half_width, 0.0)
    return carrier * np.exp(-(excess ** 2) / (2.0 * sigma ** 2))


def resolve_waveform(w: Waveform) -> SampledWaveform:
    """Evaluate a waveform to explicit samples."""
    if isinstance(w, SampledWaveform):
        return w
    _check_params(w)
    return SampledWaveform(tuple(complex(x) for x in _envelope(w)))


def waveform_array(w: Waveform) -> np.ndarray:
    """Resolved samples as a complex numpy array."""
    return np.asarray(resolve_waveform(w).samples, dtype=complex)


# Frames

@dataclass(frozen=True)
class Frame:
    """Carrier state (frequency, phase, logical clock) bound to a port."""
    id: str
    port: str
    frequency_hz: float = 0.0
    phase_rad: float = 0.0
    elapsed_samples: int = 0

    def __post_init__(self):
        if not self.id:
            raise ValueError("Frame id must be non-empty")
        if self.elapsed_samples < 0:
            raise ValueError("elapsed_samples must be nonnegative")
        object.__setattr__(self, 'phase_rad', normalize_phase(float(self.phase_rad)))
        object.__setattr__(self, 'frequency_hz', float(self.frequency_hz))


def render_signal(w: Waveform, f: Frame, start_sample: int, dt: float) -> np.ndarray:
    """Real carrier-modulated signal of a waveform played on a frame."""
    a = waveform_array(w)
    n = np.arange(len(a), dtype=float)
    theta = TWO_PI * f.frequency_hz * (start_sample + n) * dt + f.phase_rad
    return np.real(a * np.exp(1j * theta))


# Instructions

@dataclass(frozen=True)
class Play:
    frame: str
    waveform: Waveform

    @property
    def duration(self) -> int:
        return self.waveform.duration

    def frame_ids(self) -> Tuple[str, ...]:
        return (self.frame,)


@dataclass(frozen=True)
class ShiftPhase:
    frame: str
    delta_rad: float
    duration = 0

    def frame_ids(self) -> Tuple[str, ...]:
        return (self.frame,)


@dataclass(frozen=True)
class SetPhase:
    frame: str
    phase_rad: float
    duration = 0

    def frame_ids(self) -> Tuple[str, ...]:
        return (self.frame,)


@dataclass(frozen=True)
class ShiftFrequency:
    frame: str
    delta_hz: float
    duration = 0

    def frame_ids(self) -> Tuple[str, ...]:
        return (self.frame,)


@dataclass(frozen=True)
class SetFrequency:
    frame: str
    frequency_hz: float
    duration = 0

    def frame_ids(self) -> Tuple[str, ...]:
        return (self.frame,)


@dataclass(frozen=True)
class Delay:
    frame: str
    duration_samples: int

    def __post_init__(self):
        if int(self.duration_samples) < 0:
            raise InvalidInstruction("Delay duration must be nonnegative")

    @property
    def duration(self) -> int:
        return int(self.duration_samples)

    def frame_ids(self) -> Tuple[str, ...]:
        return (self.frame,)


@dataclass(frozen=True)
class Barrier:
    frames: FrozenSet[str]
    duration = 0

    def __post_init__(self):
        object.__setattr__(self, 'frames', frozenset(self.frames))
        if len(self.frames) < 2:
            raise InvalidInstruction("Barrier must reference at least 2 frames")

    def frame_ids(self) -> Tuple[str, ...]:
        return tuple(sorted(self.frames))


@dataclass(frozen=True)
class Capture:
    frame: str
    result: int
    duration = 0

    def frame_ids(self) -> Tuple[str, ...]:
        return (self.frame,)


@dataclass(frozen=True)
class Measure:
    site: int
    result: int
    duration = 0

    def frame_ids(self) -> Tuple[str, ...]:
        return ()


PulseInstruction = Union[Play, ShiftPhase, SetPhase, ShiftFrequency, SetFrequency,
                         Delay, Barrier, Capture, Measure]

FRAME_OPS = (ShiftPhase, SetPhase, ShiftFrequency, SetFrequency)


@dataclass(frozen=True)
class Schedule:
    """Initial frame states plus an ordered instruction list, optionally timed."""
    frames: Mapping[str, Frame] = field(default_factory=dict)
    instructions: Tuple[PulseInstruction, ...] = ()
    timing: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, 'frames', dict(self.frames))
        object.__setattr__(self, 'instructions', tuple(self.instructions))
        if self.timing is not None:
            timing = tuple(int(t) for t in self.timing)
            if len(timing) != len(self.instructions):
                raise ValueError("timing must provide one start time per instruction")
            object.__setattr__(self, 'timing', timing)

    @property
    def is_timed(self) -> bool:
        return self.timing is not None

    def with_instructions(self, instructions: Iterable[PulseInstruction]) -> 'Schedule':
        return Schedule(self.frames, tuple(instructions), None)

    def with_timing(self, timing: Sequence[int]) -> 'Schedule':
        return Schedule(self.frames, self.instructions, tuple(timing))

    def untimed(self) -> 'Schedule':
        return Schedule(self.frames, self.instructions, None)

    def frames_used(self) -> List[str]:
        """Frames referenced by instructions, in first-use order."""
        seen: Dict[str, None] = {}
        for instr in self.instructions:
            for f in instr.frame_ids():
                seen.setdefault(f, None)
        return list(seen)

    def check_frames(self):
        """Raise UnknownFrame for the first instruction using an undeclared frame."""
        for i, instr in enumerate(self.instructions):
            for f in instr.frame_ids():
                if f not in self.frames:
                    raise UnknownFrame(f, i)

    def ports_used(self) -> List[str]:
        ports: Dict[str, None] = {}
        for f in self.frames_used():
            if f in self.frames:
                ports.setdefault(self.frames[f].port, None)
        return list(ports)

    def results(self) -> List[int]:
        return [i.result for i in self.instructions if isinstance(i, (Capture, Measure))]

    def duration(self) -> int:
        """End time of the last instruction (timed schedules only)."""
        if self.timing is None:
            raise ValueError("Schedule is not timed")
        return max((t + i.duration for t, i in zip(self.timing, self.instructions)), default=0)


class PulseBuilder:
    """Programming-interface helper for writing schedules by hand.

    Plays and frame changes address a port and act on that port's primary
    (first declared) frame.
    """

    def __init__(self, frames: Iterable[Frame] = ()):
        self._frames: Dict[str, Frame] = {}
        self._instructions: List[PulseInstruction] = []
        for f in frames:
            self.add_frame(f)

    def add_frame(self, frame: Frame) -> 'PulseBuilder':
        if frame.id in self._frames:
            raise ValueError(f"Duplicate frame '{frame.id}'")
        self._frames[frame.id] = frame
        return self

    def primary_frame(self, port: str) -> str:
        for f in self._frames.values():
            if f.port == port:
                return f.id
        raise UnknownFrame(port)

    def _frame(self, target: str) -> str:
        if target in self._frames:
            return target
        return self.primary_frame(target)

    @staticmethod
    def waveform(amps: Sequence[Any]) -> SampledWaveform:
        return make_sampled_waveform(amps)

    def play(self, target: str, waveform: Waveform) -> 'PulseBuilder':
        self._instructions.append(Play(self._frame(target), waveform))
        return self

    def frame_change(self, target: str, frequency_hz: float, phase_rad: float) -> 'PulseBuilder':
        frame = self._frame(target)
        self._instructions.append(SetFrequency(frame, frequency_hz))
        self._instructions.append(SetPhase(frame, phase_rad))
        return self

    def shift_phase(self, target: str, delta_rad: float) -> 'PulseBuilder':
        self._instructions.append(ShiftPhase(self._frame(target), delta_rad))
        return self

    def shift_frequency(self, target: str, delta_hz: float) -> 'PulseBuilder':
        self._instructions.append(ShiftFrequency(self._frame(target), delta_hz))
        return self

    def delay(self, target: str, duration_samples: int) -> 'PulseBuilder':
        self._instructions.append(Delay(self._frame(target), duration_samples))
        return self

    def barrier(self, *targets: str) -> 'PulseBuilder':
        self._instructions.append(Barrier(frozenset(self._frame(t) for t in targets)))
        return self

    def capture(self, target: str, result: int) -> 'PulseBuilder':
        self._instructions.append(Capture(self._frame(target), result))
        return self

    def measure(self, site: int, result: int) -> 'PulseBuilder':
        self._instructions.append(Measure(site, result))
        return self

    def build(self) -> Schedule:
        return Schedule(dict(self._frames), tuple(self._instructions))
