"""
Pulse Simulator
===============

Reference physics backend: independent two-level systems driven through
their drive ports, integrated one sample at a time with the exact 2x2
propagator.

Each site evolves in the rotating frame of the drive frame it was last
played on (its first drive frame before any Play):

    H(t)/hbar = pi * delta(t) * sz + pi * rabi * (Re d(t) * sx + Im d(t) * sy)

with ``delta`` the frame frequency minus the qubit frequency and
``d = a * exp(i * phase)``. The model is noiseless; T1/T2 in device
descriptors are metadata only.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import PostMeasurementInstruction, SimulationError, UnknownSite, UntimedSchedule
from .pulse import (
    Capture,
    Delay,
    Frame,
    Measure,
    Play,
    Port,
    PortKind,
    Schedule,
    SetFrequency,
    SetPhase,
    ShiftFrequency,
    ShiftPhase,
    normalize_phase,
    waveform_array,
)
from ..utils.log import logger

GROUND = np.array([1.0, 0.0], dtype=complex)


@dataclass(frozen=True)
class QubitModel:
    site: int
    qubit_frequency_hz: float
    rabi_rate_hz_per_unit_amplitude: float

    def __post_init__(self):
        if self.site < 0:
            raise ValueError("site must be nonnegative")
        if not (math.isfinite(self.qubit_frequency_hz) and math.isfinite(self.rabi_rate_hz_per_unit_amplitude)):
            raise ValueError("qubit model parameters must be finite")
        if self.rabi_rate_hz_per_unit_amplitude <= 0:
            raise ValueError("rabi_rate_hz_per_unit_amplitude must be positive")

    def to_dict(self) -> Dict[str, float]:
        return {
            'site': self.site,
            'qubit_frequency_hz': self.qubit_frequency_hz,
            'rabi_rate_hz_per_unit_amplitude': self.rabi_rate_hz_per_unit_amplitude,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> 'QubitModel':
        return cls(int(data['site']), float(data['qubit_frequency_hz']),
                   float(data['rabi_rate_hz_per_unit_amplitude']))


@dataclass
class SimState:
    """Per-site state vectors and the global sample clock."""
    states: Dict[int, np.ndarray] = field(default_factory=dict)
    clock: int = 0
    # P(1) recorded at each result's measurement
    probabilities: Dict[int, float] = field(default_factory=dict)


def step_unitary(delta_hz: float, rabi_hz: float, drive: complex, dt: float) -> np.ndarray:
    """Exact propagator of the constant Hamiltonian over one sample."""
    hx = math.pi * rabi_hz * drive.real * dt
    hy = math.pi * rabi_hz * drive.imag * dt
    hz = math.pi * delta_hz * dt
    angle = math.sqrt(hx * hx + hy * hy + hz * hz)
    if angle == 0.0:
        return np.eye(2, dtype=complex)
    s = math.sin(angle) / angle
    c = math.cos(angle)
    return np.array([
        [c - 1j * s * hz, -1j * s * hx - s * hy],
        [-1j * s * hx + s * hy, c + 1j * s * hz],
    ], dtype=complex)


def _as_model_map(models: Union[Mapping[int, QubitModel], Iterable[QubitModel]]) -> Dict[int, QubitModel]:
    if isinstance(models, Mapping):
        return dict(models)
    result: Dict[int, QubitModel] = {}
    for m in models:
        if m.site in result:
            raise ValueError(f"Duplicate qubit model for site {m.site}")
        result[m.site] = m
    return result


class PulseSimulator:
    """Executes timed schedules against per-site qubit models."""

    def __init__(self, ports: Iterable[Port], models: Union[Mapping[int, QubitModel], Iterable[QubitModel]]):
        self.ports: Dict[str, Port] = {p.id: p for p in ports}
        self.models = _as_model_map(models)

    # Frame and site bookkeeping

    def _port(self, frame: Frame) -> Port:
        port = self.ports.get(frame.port)
        if port is None:
            raise SimulationError(f"Frame '{frame.id}' is bound to unknown port '{frame.port}'")
        return port

    def _instruction_sites(self, schedule: Schedule, instr) -> Tuple[int, ...]:
        """Sites whose dynamics or measurement an instruction touches."""
        if isinstance(instr, Measure):
            return (instr.site,)
        if isinstance(instr, Capture):
            return (self._port(schedule.frames[instr.frame]).sites[0],)
        if isinstance(instr, (Play, ShiftPhase, SetPhase, ShiftFrequency, SetFrequency, Delay)):
            port = self._port(schedule.frames[instr.frame])
            if port.kind is PortKind.DRIVE:
                return port.sites
        return ()

    def _require_model(self, site: int) -> QubitModel:
        model = self.models.get(site)
        if model is None:
            raise UnknownSite(f"No qubit model for site {site}")
        return model

    # Evolution

    def run(self, schedule: Schedule) -> SimState:
        if not schedule.is_timed:
            raise UntimedSchedule("Schedule must be timed before simulation")
        schedule.check_frames()

        frame_freq = {fid: f.frequency_hz for fid, f in schedule.frames.items()}
        frame_phase = {fid: f.phase_rad for fid, f in schedule.frames.items()}

        # Per-site event lists in program order
        events: Dict[int, List[int]] = {}
        for i, instr in enumerate(schedule.instructions):
            for site in self._instruction_sites(schedule, instr):
                events.setdefault(site, []).append(i)

        state = SimState(clock=schedule.duration())
        for site in sorted(self.models):
            state.states[site] = GROUND.copy()
        for site, indices in events.items():
            self._require_model(site)
            # Frame state is tracked per site; every op on a drive frame reaches all its sites
            self._run_site(schedule, site, indices, dict(frame_freq), dict(frame_phase), state)
        return state

    def _reference_frame(self, schedule: Schedule, site: int) -> Optional[str]:
        for fid, frame in schedule.frames.items():
            port = self.ports.get(frame.port)
            if port is not None and port.kind is PortKind.DRIVE and site in port.sites:
                return fid
        return None

    def _run_site(self, schedule: Schedule, site: int, indices: List[int],
                  frame_freq: Dict[str, float], frame_phase: Dict[str, float], state: SimState):
        model = self.models[site]
        instructions = schedule.instructions
        timing = schedule.timing

        measured_at: Optional[int] = None
        drive_end = 0
        for i in indices:
            instr = instructions[i]
            if measured_at is not None:
                raise PostMeasurementInstruction(
                    f"Instruction {i} acts on site {site} after its measurement at instruction {measured_at}")
            if isinstance(instr, (Measure, Capture)):
                measured_at = i
            drive_end = max(drive_end, timing[i] + instr.duration) if measured_at is None else drive_end

        plays = sorted((timing[i], timing[i] + instructions[i].duration, i)
                       for i in indices if isinstance(instructions[i], Play))
        for (_, end, _), (start, _, i) in zip(plays, plays[1:]):
            if start < end:
                raise SimulationError(f"Overlapping drive pulses on site {site} at instruction {i}")

        # A measurement waits for every drive instruction before it in program order
        def effective_start(i: int) -> int:
            if isinstance(instructions[i], (Measure, Capture)):
                return max(timing[i], drive_end)
            return timing[i]

        psi = state.states[site]
        ref = self._reference_frame(schedule, site)
        t = 0
        for i in sorted(indices, key=lambda k: (effective_start(k), k)):
            instr = instructions[i]
            start = effective_start(i)
            if start > t and ref is not None:
                psi = self._idle(psi, model, frame_freq[ref], self._dt(schedule, ref), start - t)
            t = max(t, start)

            if isinstance(instr, ShiftPhase):
                frame_phase[instr.frame] = normalize_phase(frame_phase[instr.frame] + instr.delta_rad)
            elif isinstance(instr, SetPhase):
                frame_phase[instr.frame] = normalize_phase(instr.phase_rad)
            elif isinstance(instr, ShiftFrequency):
                frame_freq[instr.frame] += instr.delta_hz
            elif isinstance(instr, SetFrequency):
                frame_freq[instr.frame] = instr.frequency_hz
            elif isinstance(instr, Play):
                ref = instr.frame
                psi = self._play(psi, model, instr, frame_freq[ref], frame_phase[ref], self._dt(schedule, ref))
                t = start + instr.duration
            elif isinstance(instr, (Measure, Capture)):
                state.probabilities[instr.result] = float(min(1.0, max(0.0, abs(psi[1]) ** 2)))
        if state.clock > t and ref is not None:
            psi = self._idle(psi, model, frame_freq[ref], self._dt(schedule, ref), state.clock - t)
        state.states[site] = psi

    def _dt(self, schedule: Schedule, frame_id: str) -> float:
        return self._port(schedule.frames[frame_id]).constraints.sample_period_s

    @staticmethod
    def _idle(psi: np.ndarray, model: QubitModel, frequency_hz: float, dt: float, samples: int) -> np.ndarray:
        delta = frequency_hz - model.qubit_frequency_hz
        if delta == 0.0:
            return psi
        # Pure sz evolution composes exactly
        u = step_unitary(delta * samples, 0.0, 0j, dt)
        return u @ psi

    @staticmethod
    def _play(psi: np.ndarray, model: QubitModel, play: Play, frequency_hz: float,
              phase_rad: float, dt: float) -> np.ndarray:
        delta = frequency_hz - model.qubit_frequency_hz
        rotation = complex(math.cos(phase_rad), math.sin(phase_rad))
        for a in waveform_array(play.waveform):
            psi = step_unitary(delta, model.rabi_rate_hz_per_unit_amplitude, a * rotation, dt) @ psi
        return psi

    # Observables

    def final_states(self, schedule: Schedule) -> Dict[int, np.ndarray]:
        return self.run(schedule).states

    def expectation_z(self, schedule: Schedule) -> Dict[int, float]:
        """Exact <sz> per modeled site, taken at measurement if the site is measured."""
        states = self.run(schedule).states
        return {site: float(abs(psi[0]) ** 2 - abs(psi[1]) ** 2) for site, psi in states.items()}

    def execute(self, schedule: Schedule, shots: int, seed: Optional[int] = None,
                num_results: int = 0) -> Dict[str, int]:
        """Sample measurement outcomes into a bitstring histogram (result 0 leftmost)."""
        if shots < 1:
            raise ValueError("shots must be positive")
        state = self.run(schedule)
        used = schedule.results()
        width = max(num_results, max(used, default=-1) + 1, 1)

        p1 = np.zeros(width)
        for result, p in state.probabilities.items():
            p1[result] = p
        rng = np.random.default_rng(seed)
        bits = (rng.random((shots, width)) < p1).astype(np.uint8)
        # Rows are keyed bit by bit; any number of results fits
        rows, counts = np.unique(bits, axis=0, return_counts=True)
        histogram = {''.join(map(str, row.tolist())): int(c) for row, c in zip(rows, counts)}
        logger.debug("Schedule executed", shots=shots, outcomes=len(histogram))
        return histogram


def execute(schedule: Schedule, models: Union[Mapping[int, QubitModel], Sequence[QubitModel]],
            shots: int, seed: Optional[int], ports: Iterable[Port], num_results: int = 0) -> Dict[str, int]:
    return PulseSimulator(ports, models).execute(schedule, shots, seed, num_results)


def expectation_z(schedule: Schedule, models: Union[Mapping[int, QubitModel], Sequence[QubitModel]],
                  ports: Iterable[Port]) -> Dict[int, float]:
    return PulseSimulator(ports, models).expectation_z(schedule)


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """|<a|b>|^2 for normalized state vectors."""
    return float(abs(np.vdot(a, b)) ** 2)


def final_states(schedule: Schedule, models: Union[Mapping[int, QubitModel], Sequence[QubitModel]],
                 ports: Iterable[Port]) -> Dict[int, np.ndarray]:
    return PulseSimulator(ports, models).final_states(schedule)
