"""
Control VQE
===========

Closed-loop demo optimizing pulse parameters instead of gate angles: the
amplitude, duration and phase of one constant drive pulse are tuned by
derivative-free coordinate descent to minimize <sz> of a single qubit.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional

import numpy as np

from .device import DeviceDescriptor
from .errors import NotSupported, UnknownSite
from .lowering import device_frames, drive_frame_id
from .passes import resolve_timing
from .pulse import Play, PortKind, Schedule, make_parametric_waveform, normalize_phase
from .simulator import PulseSimulator
from ..utils.config import config
from ..utils.log import logger

MAX_DURATION_SAMPLES = 256
MIN_STEP = 1e-9


@dataclass(frozen=True)
class PulseParams:
    amp: float
    duration_samples: int
    phase_rad: float

    def to_dict(self) -> Dict[str, float]:
        return {'amp': self.amp, 'duration_samples': self.duration_samples, 'phase_rad': self.phase_rad}


@dataclass(frozen=True)
class VQEStep:
    iteration: int
    energy: float
    params: PulseParams


@dataclass
class VQEResult:
    trace: List[VQEStep] = field(default_factory=list)

    @property
    def energy(self) -> float:
        return self.trace[-1].energy

    @property
    def params(self) -> PulseParams:
        return self.trace[-1].params

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1


class PulseVQE:
    """
    Coordinate-descent optimizer over a single drive pulse.

    Each iteration tries +/- one step along amplitude, duration and phase in
    turn and keeps the first move that lowers the energy. When no move
    helps, every step is halved (duration never below the port granularity).
    """

    def __init__(self, dev: DeviceDescriptor, site: int = 0, seed: Optional[int] = None,
                 step_amp: Optional[float] = None, step_phase: Optional[float] = None,
                 step_duration: Optional[int] = None):
        if not dev.is_simulator:
            raise NotSupported(f"Device '{dev.name}' has no simulation backend")
        port = dev.port_for(PortKind.DRIVE, site)
        if port is None:
            raise UnknownSite(f"Site {site} has no drive port on '{dev.name}'")

        self.dev = dev
        self.site = site
        self.port = port
        self.frame = drive_frame_id(port.id, port.sites, site)
        self.frames = device_frames(dev)
        self.simulator = PulseSimulator(dev.ports, dev.simulation)
        self.seed = config.get('execution.seed') if seed is None else seed

        constraints = port.constraints
        self.granularity = constraints.granularity_samples
        self.min_duration = self._round_duration(constraints.min_duration_samples)
        self.max_duration = max(self.min_duration, MAX_DURATION_SAMPLES // self.granularity * self.granularity)
        self.max_amp = constraints.max_amplitude

        self.steps = {
            'amp': step_amp if step_amp is not None else config.get('vqe.initial_step_amp'),
            'phase_rad': step_phase if step_phase is not None else config.get('vqe.initial_step_phase'),
            'duration_samples': self._round_duration(
                step_duration if step_duration is not None else config.get('vqe.initial_step_duration')),
        }

    def _round_duration(self, samples: int) -> int:
        g = self.granularity
        return max(g, -(-int(samples) // g) * g)

    def initial_params(self) -> PulseParams:
        rng = np.random.default_rng(self.seed)
        amp = float(rng.uniform(0.05, 0.3)) * self.max_amp
        slots = (self.max_duration // 2 - self.min_duration) // self.granularity
        duration = self.min_duration + int(rng.integers(0, max(slots, 0) + 1)) * self.granularity
        phase = float(rng.uniform(-math.pi, math.pi))
        return PulseParams(amp, duration, phase)

    def schedule(self, params: PulseParams) -> Schedule:
        waveform = make_parametric_waveform('constant', params.duration_samples,
                                            amp=params.amp, phase=params.phase_rad)
        return resolve_timing(Schedule(self.frames, (Play(self.frame, waveform),)))

    def energy(self, params: PulseParams) -> float:
        return self.simulator.expectation_z(self.schedule(params))[self.site]

    def _move(self, params: PulseParams, name: str, sign: int) -> Optional[PulseParams]:
        step = self.steps[name]
        if name == 'amp':
            amp = min(max(params.amp + sign * step, 0.0), self.max_amp)
            return None if amp == params.amp else replace(params, amp=amp)
        if name == 'duration_samples':
            d = params.duration_samples + sign * step
            if d < self.min_duration or d > self.max_duration:
                return None
            return replace(params, duration_samples=d)
        return replace(params, phase_rad=normalize_phase(params.phase_rad + sign * step))

    def _shrink(self):
        self.steps['amp'] /= 2.0
        self.steps['phase_rad'] /= 2.0
        self.steps['duration_samples'] = max(self.granularity,
                                             self.steps['duration_samples'] // 2 // self.granularity * self.granularity)

    def optimize(self, iterations: Optional[int] = None,
                 callback: Optional[Callable[[VQEStep], None]] = None) -> VQEResult:
        """Run the loop; ``callback`` sees every step, iteration 0 included."""
        if iterations is None:
            iterations = config.get('vqe.iterations')
        if iterations < 0:
            raise ValueError("iterations must be nonnegative")

        params = self.initial_params()
        energy = self.energy(params)
        result = VQEResult([VQEStep(0, energy, params)])
        if callback:
            callback(result.trace[-1])

        for iteration in range(1, iterations + 1):
            improved = False
            for name in ('amp', 'duration_samples', 'phase_rad'):
                for sign in (1, -1):
                    candidate = self._move(params, name, sign)
                    if candidate is None:
                        continue
                    e = self.energy(candidate)
                    if e < energy:
                        params, energy, improved = candidate, e, True
                        break
                if improved:
                    break
            if not improved:
                self._shrink()
            result.trace.append(VQEStep(iteration, energy, params))
            if callback:
                callback(result.trace[-1])
            if not improved and self.steps['amp'] < MIN_STEP and self.steps['phase_rad'] < MIN_STEP:
                break

        logger.info("VQE finished", device=self.dev.name, iterations=result.iterations,
                    energy=round(result.energy, 9), **result.params.to_dict())
        return result


def run_vqe(dev: DeviceDescriptor, iterations: Optional[int] = None, seed: Optional[int] = None,
            site: int = 0, callback: Optional[Callable[[VQEStep], None]] = None) -> VQEResult:
    return PulseVQE(dev, site=site, seed=seed).optimize(iterations, callback)
