"""
Gate Lowering
=============

Minimal gate-level circuits and the calibration registry that lowers each
gate or measurement to a pulse sub-schedule.

Calibration bodies are written against frame roles (drive, readout,
acquire, coupler) instead of concrete frames; roles are bound to the frames
of the target sites at lowering time, so one calibration can serve every
site of a device.
"""

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import InvalidBody, InvalidCircuit, MissingCalibration, UnboundFrameRole
from .pulse import (
    Barrier,
    Capture,
    Delay,
    Frame,
    ParametricWaveform,
    Play,
    PortKind,
    PulseInstruction,
    Schedule,
    SetFrequency,
    SetPhase,
    ShiftFrequency,
    ShiftPhase,
    Waveform,
    WaveformTemplate,
    make_sampled_waveform,
)
from ..utils.log import logger

if TYPE_CHECKING:
    from .device import DeviceDescriptor

PARAM_REF = re.compile(r'^(-)?\$\{([A-Za-z_][A-Za-z0-9_]*)\}$')
PARAM_ANY = re.compile(r'\$\{([A-Za-z_][A-Za-z0-9_]*)\}')


class FrameRole(Enum):
    DRIVE = "drive"
    READOUT = "readout"
    ACQUIRE = "acquire"
    COUPLER = "coupler"


ROLE_NAMES = frozenset(r.value for r in FrameRole)


# Circuits

@dataclass(frozen=True)
class Gate:
    """One gate application; ``result`` is set for measurements only."""
    name: str
    sites: Tuple[int, ...]
    params: Mapping[str, float] = field(default_factory=dict)
    result: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'name', self.name.lower())
        object.__setattr__(self, 'sites', tuple(int(s) for s in self.sites))
        object.__setattr__(self, 'params', {k: float(v) for k, v in dict(self.params).items()})
        if not self.sites:
            raise InvalidCircuit(f"Gate '{self.name}' acts on no sites")
        if any(s < 0 for s in self.sites):
            raise InvalidCircuit(f"Gate '{self.name}' has a negative site index")
        for k, v in self.params.items():
            if not math.isfinite(v):
                raise InvalidCircuit(f"Gate '{self.name}' parameter {k} is not finite")

    @classmethod
    def x(cls, site: int) -> 'Gate':
        return cls('x', (site,))

    @classmethod
    def sx(cls, site: int) -> 'Gate':
        return cls('sx', (site,))

    @classmethod
    def rz(cls, site: int, theta_rad: float) -> 'Gate':
        return cls('rz', (site,), {'theta': theta_rad})

    @classmethod
    def measure(cls, site: int, result: int) -> 'Gate':
        return cls('measure', (site,), result=result)

    def bindings(self) -> Dict[str, float]:
        """Values available for ``${param}`` substitution."""
        values = dict(self.params)
        if self.result is not None:
            values['result'] = float(self.result)
        return values


@dataclass(frozen=True)
class GateCircuit:
    num_sites: int
    gates: Tuple[Gate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'gates', tuple(self.gates))
        if self.num_sites < 1:
            raise InvalidCircuit("num_sites must be positive")
        results = set()
        for g in self.gates:
            if any(s >= self.num_sites for s in g.sites):
                raise InvalidCircuit(f"Gate '{g.name}' addresses a site beyond {self.num_sites - 1}")
            if g.result is not None:
                if g.result in results:
                    raise InvalidCircuit(f"Result {g.result} is written twice")
                results.add(g.result)

    def __add__(self, other: 'GateCircuit') -> 'GateCircuit':
        return GateCircuit(max(self.num_sites, other.num_sites), self.gates + other.gates)


# Calibration templates

_FRAME_OPS = {
    'shift_phase': (ShiftPhase, 'delta_rad'),
    'set_phase': (SetPhase, 'phase_rad'),
    'shift_frequency': (ShiftFrequency, 'delta_hz'),
    'set_frequency': (SetFrequency, 'frequency_hz'),
}
TEMPLATE_OPS = frozenset(list(_FRAME_OPS) + ['play', 'delay', 'barrier', 'capture'])


def _param_refs(value: Any) -> List[str]:
    if isinstance(value, str):
        return PARAM_ANY.findall(value)
    if isinstance(value, Mapping):
        return [r for v in value.values() for r in _param_refs(v)]
    if isinstance(value, (list, tuple)):
        return [r for v in value for r in _param_refs(v)]
    return []


def _substitute(value: Any, bindings: Mapping[str, float]) -> Any:
    if isinstance(value, str):
        m = PARAM_REF.match(value.strip())
        if not m:
            raise InvalidBody(f"Cannot substitute {value!r}: expected '${{name}}' or '-${{name}}'")
        name = m.group(2)
        if name not in bindings:
            raise InvalidBody(f"Unbound calibration parameter '{name}'")
        v = bindings[name]
        return -v if m.group(1) else v
    if isinstance(value, Mapping):
        return {k: _substitute(v, bindings) if _param_refs(v) else v for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_substitute(v, bindings) if _param_refs(v) else v for v in value]
    return value


def _build_waveform(spec: Mapping[str, Any]) -> Waveform:
    if 'samples' in spec:
        return make_sampled_waveform(spec['samples'])
    try:
        template = WaveformTemplate(spec['template'])
        duration = int(spec['duration_samples'])
    except (KeyError, ValueError) as e:
        raise InvalidBody(f"Invalid waveform specification: {e}")
    return ParametricWaveform(template, duration, dict(spec.get('params', {})))


@dataclass(frozen=True)
class TemplateInstruction:
    """Pulse instruction over frame roles with unsubstituted fields."""
    op: str
    roles: Tuple[str, ...]
    fields: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'roles', tuple(self.roles))
        object.__setattr__(self, 'fields', dict(self.fields))
        if self.op not in TEMPLATE_OPS:
            raise InvalidBody(f"Unknown calibration instruction '{self.op}'")
        for role in self.roles:
            if role not in ROLE_NAMES:
                raise InvalidBody(f"Unknown frame role '{role}'")
        if self.op == 'barrier':
            if len(set(self.roles)) < 2:
                raise InvalidBody("barrier needs at least 2 distinct frame roles")
        elif len(self.roles) != 1:
            raise InvalidBody(f"'{self.op}' takes exactly one frame_role")
        required = {
            'play': 'waveform', 'delay': 'duration_samples', 'capture': 'result',
        }.get(self.op) or (_FRAME_OPS[self.op][1] if self.op in _FRAME_OPS else None)
        if required and required not in self.fields:
            raise InvalidBody(f"'{self.op}' requires field '{required}'")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'TemplateInstruction':
        data = dict(data)
        op = data.pop('op', None)
        if op is None:
            raise InvalidBody("Calibration instruction without 'op'")
        if 'frame_roles' in data:
            roles = tuple(data.pop('frame_roles'))
        elif 'frame_role' in data:
            roles = (data.pop('frame_role'),)
        else:
            raise InvalidBody(f"'{op}' has no frame_role")
        return cls(op, roles, data)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'op': self.op}
        if self.op == 'barrier':
            data['frame_roles'] = list(self.roles)
        else:
            data['frame_role'] = self.roles[0]
        data.update(self.fields)
        return data

    def param_refs(self) -> List[str]:
        return _param_refs(self.fields)

    def instantiate(self, frames: Mapping[str, str], bindings: Mapping[str, float]) -> PulseInstruction:
        values = {k: _substitute(v, bindings) if _param_refs(v) else v for k, v in self.fields.items()}
        if self.op == 'barrier':
            return Barrier(frozenset(frames[r] for r in self.roles))
        frame = frames[self.roles[0]]
        if self.op == 'play':
            return Play(frame, _build_waveform(values['waveform']))
        if self.op == 'delay':
            return Delay(frame, int(values['duration_samples']))
        if self.op == 'capture':
            return Capture(frame, int(values['result']))
        cls, attr = _FRAME_OPS[self.op]
        return cls(frame, float(values[attr]))


@dataclass(frozen=True)
class CalibrationEntry:
    """Pulse implementation of a named gate; ``sites=None`` is a wildcard."""
    gate_name: str
    sites: Optional[Tuple[int, ...]]
    params: Tuple[str, ...] = ()
    body: Tuple[TemplateInstruction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'gate_name', self.gate_name.lower())
        if self.sites is not None:
            object.__setattr__(self, 'sites', tuple(int(s) for s in self.sites))
        object.__setattr__(self, 'params', tuple(self.params))
        object.__setattr__(self, 'body', tuple(self.body))
        free = {r for instr in self.body for r in instr.param_refs()}
        undeclared = free - set(self.params)
        if undeclared:
            raise InvalidBody(f"Calibration '{self.gate_name}' uses undeclared parameters {sorted(undeclared)}")

    @property
    def is_wildcard(self) -> bool:
        return self.sites is None

    def roles(self) -> FrozenSet[str]:
        return frozenset(r for instr in self.body for r in instr.roles)

    def key(self) -> Tuple[str, Optional[Tuple[int, ...]]]:
        return (self.gate_name, self.sites)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'gate': self.gate_name,
            'sites': 'any' if self.sites is None else list(self.sites),
            'params': list(self.params),
            'body': [i.to_dict() for i in self.body],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'CalibrationEntry':
        sites = data.get('sites', 'any')
        return cls(
            gate_name=data['gate'],
            sites=None if sites == 'any' else tuple(sites),
            params=tuple(data.get('params', ())),
            body=tuple(TemplateInstruction.from_dict(i) for i in data.get('body', ())),
        )


@dataclass(frozen=True)
class CalibrationRegistry:
    """Immutable calibration lookup table; site-specific entries win over wildcards.

    ``available_roles`` restricts the frame roles bodies may use (None
    disables the check).
    """
    entries: Tuple[CalibrationEntry, ...] = ()
    available_roles: Optional[FrozenSet[str]] = None

    def __post_init__(self):
        object.__setattr__(self, 'entries', tuple(self.entries))
        if self.available_roles is not None:
            object.__setattr__(self, 'available_roles', frozenset(self.available_roles))

    def __len__(self) -> int:
        return len(self.entries)

    def _check(self, entry: CalibrationEntry):
        roles = entry.roles()
        if self.available_roles is not None:
            missing = roles - self.available_roles
            if missing:
                raise InvalidBody(
                    f"Calibration '{entry.gate_name}' uses frame roles {sorted(missing)} "
                    f"that the device cannot provide")
        if FrameRole.COUPLER.value in roles and entry.sites is not None and len(entry.sites) != 2:
            raise InvalidBody(f"Calibration '{entry.gate_name}' uses a coupler role on {len(entry.sites)} site(s)")

    def register(self, entry: CalibrationEntry) -> 'CalibrationRegistry':
        self._check(entry)
        kept = []
        for existing in self.entries:
            if existing.key() == entry.key():
                logger.warning("Calibration replaced", gate=entry.gate_name,
                               sites='any' if entry.sites is None else list(entry.sites))
                logger.audit("replace_calibration", gate=entry.gate_name)
                continue
            kept.append(existing)
        kept.append(entry)
        return CalibrationRegistry(tuple(kept), self.available_roles)

    def merge(self, other: 'CalibrationRegistry') -> 'CalibrationRegistry':
        """Layer ``other`` on top of this registry."""
        result = self
        for entry in other.entries:
            result = result.register(entry)
        return result

    def lookup(self, gate_name: str, sites: Optional[Sequence[int]]) -> Optional[CalibrationEntry]:
        gate_name = gate_name.lower()
        if sites is not None:
            wanted = tuple(sites)
            for e in self.entries:
                if e.gate_name == gate_name and e.sites == wanted:
                    return e
        for e in self.entries:
            if e.gate_name == gate_name and e.sites is None:
                return e
        return None

    def gate_names(self) -> List[str]:
        return sorted({e.gate_name for e in self.entries})


def register_calibration(reg: CalibrationRegistry, e: CalibrationEntry) -> CalibrationRegistry:
    return reg.register(e)


def device_roles(dev: 'DeviceDescriptor') -> FrozenSet[str]:
    kinds = {p.kind for p in dev.ports}
    roles = set()
    if PortKind.DRIVE in kinds:
        roles.add(FrameRole.DRIVE.value)
    if PortKind.READOUT in kinds:
        roles.add(FrameRole.READOUT.value)
    if kinds & {PortKind.READOUT, PortKind.ACQUIRE}:
        roles.add(FrameRole.ACQUIRE.value)
    if PortKind.COUPLER in kinds:
        roles.add(FrameRole.COUPLER.value)
    return frozenset(roles)


READOUT_AMPLITUDE = 0.2
READOUT_MIN_SAMPLES = 64


def _readout_duration(dev: 'DeviceDescriptor') -> int:
    readout = [p.constraints for p in dev.ports if p.kind is PortKind.READOUT]
    floor = max([READOUT_MIN_SAMPLES] + [c.min_duration_samples for c in readout])
    step = math.lcm(*(c.granularity_samples for c in readout)) if readout else 1
    return -(-floor // step) * step


def builtin_calibrations(dev: 'DeviceDescriptor') -> CalibrationRegistry:
    """Virtual-Z for RZ and play-plus-capture for Measure."""
    readout = [p for p in dev.ports if p.kind is PortKind.READOUT]
    amp = min([READOUT_AMPLITUDE] + [p.constraints.max_amplitude for p in readout])
    rz = CalibrationEntry('rz', None, ('theta',), (
        TemplateInstruction('shift_phase', ('drive',), {'delta_rad': '-${theta}'}),
    ))
    measure = CalibrationEntry('measure', None, ('result',), (
        TemplateInstruction('play', ('readout',), {'waveform': {
            'template': 'constant',
            'duration_samples': _readout_duration(dev),
            'params': {'amp': amp, 'phase': 0.0},
        }}),
        TemplateInstruction('capture', ('acquire',), {'result': '${result}'}),
    ))
    return CalibrationRegistry((rz, measure), device_roles(dev))


# Frames and lowering

def drive_frame_id(port_id: str, port_sites: Sequence[int], site: int) -> str:
    return port_id if len(port_sites) == 1 else f"{port_id}_s{site}"


def device_frames(dev: 'DeviceDescriptor') -> Dict[str, Frame]:
    """One drive frame per site on its drive port, one frame per other port."""
    frames: Dict[str, Frame] = {}
    for port in dev.ports:
        if port.kind is PortKind.DRIVE:
            for site in port.sites:
                fid = drive_frame_id(port.id, port.sites, site)
                frames[fid] = Frame(fid, port.id, port.carrier_frequency_hz)
        else:
            frames[port.id] = Frame(port.id, port.id, port.carrier_frequency_hz)
    return frames


def bind_roles(dev: 'DeviceDescriptor', sites: Sequence[int], roles: Iterable[str]) -> Dict[str, str]:
    """Map frame roles to concrete frame ids for a gate on ``sites``."""
    site = sites[0]
    binding: Dict[str, str] = {}
    for role in roles:
        frame: Optional[str] = None
        if role == FrameRole.DRIVE.value:
            port = dev.port_for(PortKind.DRIVE, site)
            frame = drive_frame_id(port.id, port.sites, site) if port else None
        elif role == FrameRole.READOUT.value:
            port = dev.port_for(PortKind.READOUT, site)
            frame = port.id if port else None
        elif role == FrameRole.ACQUIRE.value:
            port = dev.port_for(PortKind.ACQUIRE, site) or dev.port_for(PortKind.READOUT, site)
            frame = port.id if port else None
        elif role == FrameRole.COUPLER.value and len(sites) == 2:
            port = dev.coupler_port(sites[0], sites[1])
            frame = port.id if port else None
        if frame is None:
            raise UnboundFrameRole(role, sites)
        binding[role] = frame
    return binding


def lower_gate(gate: Gate, reg: CalibrationRegistry, dev: 'DeviceDescriptor') -> List[PulseInstruction]:
    entry = reg.lookup(gate.name, gate.sites)
    if entry is None:
        raise MissingCalibration(gate.name, gate.sites)
    frames = bind_roles(dev, gate.sites, entry.roles())
    bindings = gate.bindings()
    return [instr.instantiate(frames, bindings) for instr in entry.body]


def lower(circuit: GateCircuit, reg: CalibrationRegistry, dev: 'DeviceDescriptor') -> Schedule:
    """Concatenate the instantiated calibration body of every gate."""
    if circuit.num_sites > dev.num_sites:
        raise InvalidCircuit(f"Circuit needs {circuit.num_sites} sites, device '{dev.name}' has {dev.num_sites}")
    instructions: List[PulseInstruction] = []
    for gate in circuit.gates:
        instructions.extend(lower_gate(gate, reg, dev))
    logger.debug("Circuit lowered", gates=len(circuit.gates), instructions=len(instructions))
    return Schedule(device_frames(dev), tuple(instructions))
