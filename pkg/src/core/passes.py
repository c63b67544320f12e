"""
Pass Pipeline
=============

Pass manager plus the pulse passes: timing resolution, delay merging,
phase/frequency folding, device legalization and verification.

Structural transforms return untimed schedules; run ``resolve_timing`` last
to get start times back.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import PulseStackError, UnknownFrame, UnknownPass, WaveformError
from .pulse import (
    AMPLITUDE_SLACK,
    Barrier,
    Capture,
    Delay,
    Measure,
    Play,
    PortKind,
    PulseInstruction,
    Schedule,
    SetFrequency,
    SetPhase,
    ShiftFrequency,
    ShiftPhase,
    make_sampled_waveform,
    normalize_phase,
    resolve_waveform,
)
from ..utils.log import logger

if TYPE_CHECKING:
    from .device import DeviceDescriptor


class Severity(Enum):
    NOTE = "note"
    WARNING = "warning"
    ERROR = "error"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    message: str
    index: Optional[int] = None

    @property
    def is_error(self) -> bool:
        return self.severity is Severity.ERROR

    def __str__(self) -> str:
        where = f"[{self.index}] " if self.index is not None else ""
        return f"{self.severity.value}: {where}{self.message}"


def error(message: str, index: Optional[int] = None) -> Diagnostic:
    return Diagnostic(Severity.ERROR, message, index)


def has_errors(diagnostics: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diagnostics)


class PassKind(Enum):
    ANALYSIS = "analysis"
    TRANSFORM = "transform"


class LegalizationMode(Enum):
    STRICT = "strict"
    PAD = "pad"


# Timing

def resolve_timing(s: Schedule) -> Schedule:
    """ASAP start times from per-frame clocks.

    Barriers raise every listed clock to their maximum. A site-level Measure
    starts once every frame clock has reached it and advances none.
    """
    s.check_frames()
    clock: Dict[str, int] = {f: 0 for f in s.frames}
    starts: List[int] = []
    for instr in s.instructions:
        if isinstance(instr, Barrier):
            t = max(clock[f] for f in instr.frames)
            for f in instr.frames:
                clock[f] = t
        elif isinstance(instr, Measure):
            t = max(clock.values(), default=0)
        else:
            t = clock[instr.frame]
            clock[instr.frame] = t + instr.duration
        starts.append(t)
    return s.with_timing(starts)


# Canonicalization

def merge_delays(s: Schedule) -> Schedule:
    """Fuse runs of Delays on one frame with nothing else on that frame between them."""
    out: List[PulseInstruction] = []
    open_delay: Dict[str, int] = {}
    for instr in s.instructions:
        if isinstance(instr, Delay):
            j = open_delay.get(instr.frame)
            if j is not None:
                out[j] = Delay(instr.frame, out[j].duration_samples + instr.duration_samples)
                continue
            open_delay[instr.frame] = len(out)
        elif isinstance(instr, Measure):
            open_delay.clear()
        else:
            for f in instr.frame_ids():
                open_delay.pop(f, None)
        out.append(instr)
    return s.with_instructions(out)


def _fold(prev: PulseInstruction, instr: PulseInstruction) -> Optional[PulseInstruction]:
    if isinstance(instr, ShiftPhase):
        if isinstance(prev, ShiftPhase):
            return ShiftPhase(instr.frame, normalize_phase(prev.delta_rad + instr.delta_rad))
        if isinstance(prev, SetPhase):
            return SetPhase(instr.frame, normalize_phase(prev.phase_rad + instr.delta_rad))
    elif isinstance(instr, ShiftFrequency):
        if isinstance(prev, ShiftFrequency):
            return ShiftFrequency(instr.frame, prev.delta_hz + instr.delta_hz)
        if isinstance(prev, SetFrequency):
            return SetFrequency(instr.frame, prev.frequency_hz + instr.delta_hz)
    return None


def fold_phase(s: Schedule) -> Schedule:
    """Fuse adjacent same-frame phase ops, and likewise frequency ops."""
    out: List[PulseInstruction] = []
    last_on: Dict[str, int] = {}
    for instr in s.instructions:
        if isinstance(instr, (ShiftPhase, ShiftFrequency)):
            j = last_on.get(instr.frame)
            if j is not None:
                folded = _fold(out[j], instr)
                if folded is not None:
                    out[j] = folded
                    continue
        if isinstance(instr, Measure):
            last_on.clear()
        for f in instr.frame_ids():
            last_on[f] = len(out)
        out.append(instr)
    return s.with_instructions(out)


# Device checks

def _pad(samples: Sequence[complex], target: int):
    return make_sampled_waveform(list(samples) + [0j] * (target - len(samples)))


def legalize(s: Schedule, dev: 'DeviceDescriptor',
             mode: LegalizationMode = LegalizationMode.STRICT) -> Tuple[Schedule, List[Diagnostic]]:
    """Check every instruction against the constraints of its frame's port.

    Pad mode extends short or misaligned waveforms with zero samples;
    amplitude and frequency violations are errors in both modes.
    """
    mode = LegalizationMode(mode)
    diagnostics: List[Diagnostic] = []
    frequency: Dict[str, float] = {}
    ports = {}
    used = set(s.frames_used())
    for fid, frame in s.frames.items():
        port = dev.port(frame.port)
        if port is None:
            diagnostics.append(error(f"frame '{fid}' is bound to port '{frame.port}' unknown to device '{dev.name}'"))
            continue
        ports[fid] = port
        frequency[fid] = frame.frequency_hz
        if fid in used and not port.constraints.allows_frequency(frame.frequency_hz):
            diagnostics.append(error(
                f"initial frequency {frame.frequency_hz:.6g} Hz of frame '{fid}' outside "
                f"{list(port.constraints.frequency_range_hz)} on port '{port.id}'"))

    changed = False
    out: List[PulseInstruction] = []
    for i, instr in enumerate(s.instructions):
        port = None
        if not isinstance(instr, (Barrier, Measure)):
            if instr.frame not in s.frames:
                diagnostics.append(error(f"unknown frame '{instr.frame}'", i))
                out.append(instr)
                continue
            port = ports.get(instr.frame)
        if port is None:
            out.append(instr)
            continue
        c = port.constraints

        if isinstance(instr, Play):
            try:
                resolved = resolve_waveform(instr.waveform)
            except WaveformError as e:
                diagnostics.append(error(str(e), i))
                out.append(instr)
                continue
            peak = max(abs(x) for x in resolved.samples)
            if peak > c.max_amplitude + AMPLITUDE_SLACK:
                diagnostics.append(error(
                    f"amplitude {peak:.6g} exceeds max_amplitude {c.max_amplitude:.6g} of port '{port.id}'", i))
            d = resolved.duration
            if d >= c.min_duration_samples and d % c.granularity_samples == 0:
                out.append(instr)
            elif mode is LegalizationMode.PAD:
                target = max(c.min_duration_samples, -(-d // c.granularity_samples) * c.granularity_samples)
                out.append(Play(instr.frame, _pad(resolved.samples, target)))
                changed = True
            else:
                diagnostics.append(error(
                    f"waveform duration {d} violates port '{port.id}' (granularity {c.granularity_samples}, "
                    f"minimum {c.min_duration_samples})", i))
                out.append(instr)
            continue

        if isinstance(instr, (SetFrequency, ShiftFrequency)):
            if isinstance(instr, SetFrequency):
                frequency[instr.frame] = instr.frequency_hz
            else:
                frequency[instr.frame] += instr.delta_hz
            if not c.allows_frequency(frequency[instr.frame]):
                diagnostics.append(error(
                    f"frequency {frequency[instr.frame]:.6g} Hz outside {list(c.frequency_range_hz)} "
                    f"on port '{port.id}'", i))
        elif isinstance(instr, Capture) and port.kind not in (PortKind.ACQUIRE, PortKind.READOUT):
            diagnostics.append(error(f"capture on frame '{instr.frame}' of {port.kind.value} port '{port.id}'", i))
        out.append(instr)

    return (s.with_instructions(out) if changed else s), diagnostics


_OPERANDS = {
    ShiftPhase: "delta_rad",
    SetPhase: "phase_rad",
    ShiftFrequency: "delta_hz",
    SetFrequency: "frequency_hz",
}


def verify(s: Schedule, dev: 'DeviceDescriptor') -> List[Diagnostic]:
    """Structural checks that need no device constraints beyond its ports."""
    diagnostics: List[Diagnostic] = []
    seen_results: Dict[int, int] = {}
    for i, instr in enumerate(s.instructions):
        for f in instr.frame_ids():
            if f not in s.frames:
                diagnostics.append(error(f"unknown frame '{f}'", i))
        if isinstance(instr, Play):
            try:
                resolve_waveform(instr.waveform)
            except WaveformError as e:
                diagnostics.append(error(str(e), i))
        elif isinstance(instr, (ShiftPhase, SetPhase, ShiftFrequency, SetFrequency)):
            value = getattr(instr, _OPERANDS[type(instr)])
            if not math.isfinite(value):
                diagnostics.append(error("non-finite frame operand", i))
        elif isinstance(instr, Measure) and instr.site >= dev.num_sites:
            diagnostics.append(error(f"measure on site {instr.site} beyond device '{dev.name}'", i))
        elif isinstance(instr, Capture) and instr.frame in s.frames:
            port = dev.port(s.frames[instr.frame].port)
            if port is not None and port.kind not in (PortKind.ACQUIRE, PortKind.READOUT):
                diagnostics.append(error(
                    f"capture on frame '{instr.frame}' of {port.kind.value} port '{port.id}'", i))
        if isinstance(instr, (Capture, Measure)):
            if instr.result < 0:
                diagnostics.append(error(f"negative result index {instr.result}", i))
            elif instr.result in seen_results:
                diagnostics.append(error(
                    f"result {instr.result} already written by instruction {seen_results[instr.result]}", i))
            else:
                seen_results[instr.result] = i
    for fid, frame in s.frames.items():
        if dev.port(frame.port) is None:
            diagnostics.append(Diagnostic(Severity.WARNING, f"frame '{fid}' bound to unknown port '{frame.port}'"))
    return diagnostics


# Pass manager

class Pass:
    """Base class for schedule passes."""

    name = ""
    kind = PassKind.TRANSFORM

    def apply(self, s: Schedule, dev: 'DeviceDescriptor',
              cfg: 'PipelineConfig') -> Tuple[Schedule, List[Diagnostic]]:
        raise NotImplementedError()


class ResolveTimingPass(Pass):
    name = "resolve_timing"

    def apply(self, s, dev, cfg):
        return resolve_timing(s), []


def _timing_note(s: Schedule, name: str) -> List[Diagnostic]:
    if not s.is_timed:
        return []
    return [Diagnostic(Severity.NOTE, f"{name} dropped the schedule timing; run resolve_timing again")]


class MergeDelaysPass(Pass):
    name = "merge_delays"

    def apply(self, s, dev, cfg):
        return merge_delays(s), _timing_note(s, self.name)


class FoldPhasePass(Pass):
    name = "fold_phase"

    def apply(self, s, dev, cfg):
        return fold_phase(s), _timing_note(s, self.name)


class LegalizePass(Pass):
    name = "legalize"

    def apply(self, s, dev, cfg):
        return legalize(s, dev, cfg.mode)


class VerifyPass(Pass):
    name = "verify"
    kind = PassKind.ANALYSIS

    def apply(self, s, dev, cfg):
        return s, verify(s, dev)


PASS_REGISTRY: Dict[str, Pass] = {
    p.name: p for p in (ResolveTimingPass(), MergeDelaysPass(), FoldPhasePass(), LegalizePass(), VerifyPass())
}


@dataclass(frozen=True)
class PipelineConfig:
    passes: Tuple[str, ...] = ()
    mode: LegalizationMode = LegalizationMode.STRICT

    def __post_init__(self):
        object.__setattr__(self, 'passes', tuple(self.passes))
        object.__setattr__(self, 'mode', LegalizationMode(self.mode))
        for name in self.passes:
            if name not in PASS_REGISTRY:
                raise UnknownPass(name)

    @classmethod
    def from_string(cls, text: str, mode: LegalizationMode = LegalizationMode.STRICT) -> 'PipelineConfig':
        """Parse an ordered comma-separated pass list."""
        return cls(tuple(n.strip() for n in text.split(',') if n.strip()), mode)


@dataclass
class PipelineResult:
    schedule: Schedule
    diagnostics: List[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not has_errors(self.diagnostics)


class PassManager:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.passes = [PASS_REGISTRY[n] for n in cfg.passes]

    def run(self, s: Schedule, dev: 'DeviceDescriptor') -> PipelineResult:
        current = s
        diagnostics: List[Diagnostic] = []
        for p in self.passes:
            try:
                out, found = p.apply(current, dev, self.cfg)
            except PulseStackError as e:
                index = e.index if isinstance(e, UnknownFrame) else None
                out, found = current, [error(f"{p.name}: {e}", index)]
            diagnostics.extend(found)
            if has_errors(found):
                logger.info("Pipeline aborted", failed_pass=p.name, errors=sum(d.is_error for d in found))
                return PipelineResult(s, diagnostics)
            current = out
            logger.debug("Pass applied", name=p.name, instructions=len(current.instructions))
        return PipelineResult(current, diagnostics)


def run_pipeline(s: Schedule, cfg: PipelineConfig, dev: 'DeviceDescriptor') -> Tuple[Schedule, List[Diagnostic]]:
    result = PassManager(cfg).run(s, dev)
    return result.schedule, result.diagnostics
