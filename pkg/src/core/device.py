"""
Device Descriptors
==================

Static description of a device (sites, ports, operations, pulse support,
default calibrations, optional simulation models), the JSON descriptor file
loader and the closed property vocabulary answered by capability queries.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from cerberus import Validator

from .errors import InvalidDescriptor, InvalidScope, NotSupported, PulseStackError
from .lowering import (
    CalibrationRegistry,
    FrameRole,
    Gate,
    GateCircuit,
    builtin_calibrations,
    lower,
)
from .passes import resolve_timing
from .pulse import Port, PortKind
from .simulator import QubitModel
from ..utils.import_export import import_export
from ..utils.log import logger

PQIR_PULSE = "pqir_pulse"


class PulseSupport(Enum):
    NONE = "none"
    SITE_LEVEL = "site_level"
    PORT_LEVEL = "port_level"


@dataclass(frozen=True)
class SiteInfo:
    t1_s: Optional[float] = None
    t2_s: Optional[float] = None


@dataclass(frozen=True)
class DeviceDescriptor:
    name: str
    num_sites: int
    ports: Tuple[Port, ...] = ()
    pulse_support: PulseSupport = PulseSupport.PORT_LEVEL
    operations: Tuple[str, ...] = ()
    default_calibrations: CalibrationRegistry = field(default_factory=CalibrationRegistry)
    sites: Tuple[SiteInfo, ...] = ()
    supported_formats: Tuple[str, ...] = (PQIR_PULSE,)
    simulation: Optional[Tuple[QubitModel, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, 'ports', tuple(self.ports))
        object.__setattr__(self, 'operations', tuple(o.lower() for o in self.operations))
        object.__setattr__(self, 'supported_formats', tuple(self.supported_formats))
        object.__setattr__(self, 'pulse_support', PulseSupport(self.pulse_support))
        if not self.sites:
            object.__setattr__(self, 'sites', tuple(SiteInfo() for _ in range(self.num_sites)))
        else:
            object.__setattr__(self, 'sites', tuple(self.sites))
        if self.simulation is not None:
            object.__setattr__(self, 'simulation', tuple(self.simulation))
        self._validate()

    def _validate(self):
        if not self.name:
            raise InvalidDescriptor("Device name must be non-empty")
        if self.num_sites < 1:
            raise InvalidDescriptor(f"Device '{self.name}': num_sites must be positive")
        if len(self.sites) != self.num_sites:
            raise InvalidDescriptor(f"Device '{self.name}': {len(self.sites)} site entries for {self.num_sites} sites")
        if self.pulse_support is PulseSupport.PORT_LEVEL and not self.ports:
            raise InvalidDescriptor(f"Device '{self.name}': port_level pulse support requires ports")
        ids = set()
        for port in self.ports:
            if port.id in ids:
                raise InvalidDescriptor(f"Device '{self.name}': duplicate port id '{port.id}'")
            ids.add(port.id)
            if any(s >= self.num_sites for s in port.sites):
                raise InvalidDescriptor(f"Device '{self.name}': port '{port.id}' references a site beyond {self.num_sites - 1}")
        if self.simulation is not None:
            seen = set()
            for model in self.simulation:
                if model.site >= self.num_sites or model.site in seen:
                    raise InvalidDescriptor(f"Device '{self.name}': invalid simulation model for site {model.site}")
                seen.add(model.site)

    # Lookups

    def port(self, port_id: str) -> Optional[Port]:
        for p in self.ports:
            if p.id == port_id:
                return p
        return None

    def port_for(self, kind: PortKind, site: int) -> Optional[Port]:
        """First port of ``kind`` that serves ``site``."""
        for p in self.ports:
            if p.kind is kind and site in p.sites:
                return p
        return None

    def coupler_port(self, a: int, b: int) -> Optional[Port]:
        for p in self.ports:
            if p.kind is PortKind.COUPLER and set(p.sites) == {a, b}:
                return p
        return None

    @property
    def is_simulator(self) -> bool:
        return bool(self.simulation)

    @property
    def supports_pulse(self) -> bool:
        return self.pulse_support is not PulseSupport.NONE

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            'name': self.name,
            'num_sites': self.num_sites,
            'pulse_support': self.pulse_support.value,
            'operations': list(self.operations),
            'supported_formats': list(self.supported_formats),
            'sites': [{k: v for k, v in vars(s).items() if v is not None} for s in self.sites],
            'ports': [p.to_dict() for p in self.ports],
            'calibrations': [e.to_dict() for e in self.default_calibrations.entries],
        }
        if self.simulation is not None:
            data['simulation'] = {'models': [m.to_dict() for m in self.simulation]}
        return data


# Descriptor files

_NUMBER = {'type': 'number'}

DESCRIPTOR_SCHEMA = {
    'name': {'type': 'string', 'required': True, 'empty': False},
    'num_sites': {'type': 'integer', 'required': True, 'min': 1},
    'pulse_support': {'type': 'string', 'allowed': [p.value for p in PulseSupport], 'default': 'port_level'},
    'operations': {'type': 'list', 'schema': {'type': 'string'}, 'default': []},
    'supported_formats': {'type': 'list', 'schema': {'type': 'string'}, 'default': [PQIR_PULSE]},
    'sites': {
        'type': 'list',
        'schema': {'type': 'dict', 'schema': {
            't1_s': {'type': 'number', 'min': 0, 'nullable': True},
            't2_s': {'type': 'number', 'min': 0, 'nullable': True},
        }},
    },
    'ports': {
        'type': 'list',
        'default': [],
        'schema': {'type': 'dict', 'schema': {
            'id': {'type': 'string', 'required': True, 'regex': r'^[a-z][a-z0-9_]*$'},
            'kind': {'type': 'string', 'required': True, 'allowed': [k.value for k in PortKind]},
            'sites': {'type': 'list', 'required': True, 'schema': {'type': 'integer', 'min': 0}},
            'default_frequency_hz': _NUMBER,
            'constraints': {'type': 'dict', 'required': True, 'schema': {
                'sample_period_s': {'type': 'number', 'required': True},
                'granularity_samples': {'type': 'integer', 'min': 1},
                'min_duration_samples': {'type': 'integer', 'min': 1},
                'max_amplitude': {'type': 'number'},
                'frequency_range_hz': {'type': 'list', 'minlength': 2, 'maxlength': 2, 'schema': _NUMBER},
            }},
        }},
    },
    'calibrations': {'type': 'list', 'schema': {'type': 'dict'}},
    'simulation': {'type': 'dict', 'schema': {
        'models': {'type': 'list', 'required': True, 'schema': {'type': 'dict', 'schema': {
            'site': {'type': 'integer', 'required': True, 'min': 0},
            'qubit_frequency_hz': {'type': 'number', 'required': True},
            'rabi_rate_hz_per_unit_amplitude': {'type': 'number', 'required': True},
        }}},
    }},
}


def descriptor_from_dict(data: Mapping[str, Any]) -> DeviceDescriptor:
    """Validate and build a descriptor; ``calibrations`` are layered over the built-ins."""
    validator = Validator(DESCRIPTOR_SCHEMA)
    if not isinstance(data, Mapping) or not validator.validate(dict(data)):
        errors = validator.errors if isinstance(data, Mapping) else 'not an object'
        raise InvalidDescriptor(f"Invalid device descriptor: {errors}")
    doc = validator.document

    try:
        ports = tuple(Port.from_dict(p) for p in doc['ports'])
        sites = tuple(SiteInfo(s.get('t1_s'), s.get('t2_s')) for s in doc.get('sites', ()))
        simulation = None
        if 'simulation' in doc:
            simulation = tuple(QubitModel.from_dict(m) for m in doc['simulation']['models'])
        dev = DeviceDescriptor(
            name=doc['name'],
            num_sites=doc['num_sites'],
            ports=ports,
            pulse_support=PulseSupport(doc['pulse_support']),
            operations=tuple(doc['operations']),
            sites=sites,
            supported_formats=tuple(doc['supported_formats']),
            simulation=simulation,
        )
        registry = builtin_calibrations(dev)
        for entry in import_export.parse_calibrations(doc.get('calibrations', [])):
            registry = registry.register(entry)
    except InvalidDescriptor:
        raise
    except (ValueError, PulseStackError) as e:
        raise InvalidDescriptor(f"Invalid device descriptor '{doc['name']}': {e}")
    return replace(dev, default_calibrations=registry)


def load_descriptor(path: Union[str, Path]) -> DeviceDescriptor:
    path = Path(path)
    try:
        data = import_export.load_device_document(path)
    except (OSError, ValueError) as e:
        raise InvalidDescriptor(f"Cannot read device descriptor {path}: {e}")
    dev = descriptor_from_dict(data)
    logger.info("Device descriptor loaded", path=str(path), device=dev.name, ports=len(dev.ports))
    return dev


# Capability queries

class ScopeKind(Enum):
    DEVICE = "device"
    SITE = "site"
    PORT = "port"
    OPERATION = "operation"


@dataclass(frozen=True)
class Scope:
    kind: ScopeKind
    target: Union[None, int, str] = None

    @classmethod
    def device(cls) -> 'Scope':
        return cls(ScopeKind.DEVICE)

    @classmethod
    def site(cls, site: int) -> 'Scope':
        return cls(ScopeKind.SITE, int(site))

    @classmethod
    def port(cls, port_id: str) -> 'Scope':
        return cls(ScopeKind.PORT, port_id)

    @classmethod
    def operation(cls, name: str) -> 'Scope':
        return cls(ScopeKind.OPERATION, name.lower())

    def __str__(self) -> str:
        return self.kind.value if self.target is None else f"{self.kind.value}({self.target})"


class PropertyKey(Enum):
    NAME = "name"
    NUM_SITES = "num_sites"
    PULSE_SUPPORT = "pulse_support"
    SUPPORTED_FORMATS = "supported_formats"
    T1_S = "t1_s"
    T2_S = "t2_s"
    DRIVE_PORT = "drive_port"
    READOUT_PORT = "readout_port"
    KIND = "kind"
    SAMPLE_PERIOD_S = "sample_period_s"
    GRANULARITY_SAMPLES = "granularity_samples"
    MIN_DURATION_SAMPLES = "min_duration_samples"
    MAX_AMPLITUDE = "max_amplitude"
    FREQUENCY_RANGE_HZ = "frequency_range_hz"
    HAS_DEFAULT_CALIBRATION = "has_default_calibration"
    DURATION_SAMPLES = "duration_samples"


SCOPE_KEYS: Dict[ScopeKind, Tuple[PropertyKey, ...]] = {
    ScopeKind.DEVICE: (PropertyKey.NAME, PropertyKey.NUM_SITES, PropertyKey.PULSE_SUPPORT,
                       PropertyKey.SUPPORTED_FORMATS),
    ScopeKind.SITE: (PropertyKey.T1_S, PropertyKey.T2_S, PropertyKey.DRIVE_PORT, PropertyKey.READOUT_PORT),
    ScopeKind.PORT: (PropertyKey.KIND, PropertyKey.SAMPLE_PERIOD_S, PropertyKey.GRANULARITY_SAMPLES,
                     PropertyKey.MIN_DURATION_SAMPLES, PropertyKey.MAX_AMPLITUDE, PropertyKey.FREQUENCY_RANGE_HZ),
    ScopeKind.OPERATION: (PropertyKey.HAS_DEFAULT_CALIBRATION, PropertyKey.DURATION_SAMPLES),
}


def parse_key(key: Union[str, PropertyKey]) -> PropertyKey:
    if isinstance(key, PropertyKey):
        return key
    try:
        return PropertyKey(key)
    except ValueError:
        raise NotSupported(f"Unknown property '{key}'")


def _operation_duration(dev: DeviceDescriptor, registry: CalibrationRegistry, name: str) -> int:
    entry = next((e for e in registry.entries if e.gate_name == name and e.sites is not None), None)
    entry = registry.lookup(name, None) or entry
    if entry is None:
        raise NotSupported(f"Operation '{name}' has no default calibration on '{dev.name}'")
    if entry.sites is not None:
        sites = entry.sites
    elif FrameRole.COUPLER.value in entry.roles():
        coupler = next((p for p in dev.ports if p.kind is PortKind.COUPLER), None)
        if coupler is None:
            raise NotSupported(f"Operation '{name}' needs a coupler port")
        sites = coupler.sites
    else:
        sites = (0,)
    params = {p: 0.0 for p in entry.params if p != 'result'}
    gate = Gate(name, sites, params, 0 if 'result' in entry.params else None)
    try:
        schedule = resolve_timing(lower(GateCircuit(dev.num_sites, (gate,)), registry, dev))
    except PulseStackError as e:
        raise NotSupported(f"Duration of '{name}' is not available: {e}")
    return schedule.duration()


def query_descriptor(dev: DeviceDescriptor, scope: Scope, key: Union[str, PropertyKey],
                     registry: Optional[CalibrationRegistry] = None) -> Any:
    """Answer one property query; ``registry`` overrides the descriptor's calibrations."""
    key = parse_key(key)
    if key not in SCOPE_KEYS[scope.kind]:
        raise NotSupported(f"Property '{key.value}' is not defined for {scope.kind.value} scope")
    registry = registry if registry is not None else dev.default_calibrations

    if scope.kind is ScopeKind.DEVICE:
        return {
            PropertyKey.NAME: dev.name,
            PropertyKey.NUM_SITES: dev.num_sites,
            PropertyKey.PULSE_SUPPORT: dev.pulse_support.value,
            PropertyKey.SUPPORTED_FORMATS: list(dev.supported_formats),
        }[key]

    if scope.kind is ScopeKind.SITE:
        site = scope.target
        if not isinstance(site, int) or not 0 <= site < dev.num_sites:
            raise InvalidScope(f"Site {site} does not exist on '{dev.name}'")
        if key in (PropertyKey.T1_S, PropertyKey.T2_S):
            value = getattr(dev.sites[site], key.value)
            if value is None:
                raise NotSupported(f"'{key.value}' is not reported for site {site}")
            return value
        if not dev.supports_pulse:
            raise NotSupported(f"'{dev.name}' has no pulse support")
        kind = PortKind.DRIVE if key is PropertyKey.DRIVE_PORT else PortKind.READOUT
        port = dev.port_for(kind, site)
        if port is None:
            raise NotSupported(f"Site {site} has no {kind.value} port")
        return port.id

    if scope.kind is ScopeKind.PORT:
        if dev.pulse_support is not PulseSupport.PORT_LEVEL:
            raise InvalidScope(f"'{dev.name}' does not expose ports ({dev.pulse_support.value})")
        port = dev.port(str(scope.target))
        if port is None:
            raise InvalidScope(f"Port '{scope.target}' does not exist on '{dev.name}'")
        if key is PropertyKey.KIND:
            return port.kind.value
        value = getattr(port.constraints, key.value)
        return list(value) if key is PropertyKey.FREQUENCY_RANGE_HZ else value

    name = str(scope.target)
    if name not in dev.operations and name not in registry.gate_names():
        raise InvalidScope(f"Operation '{name}' is not known to '{dev.name}'")
    if key is PropertyKey.HAS_DEFAULT_CALIBRATION:
        return dev.supports_pulse and name in registry.gate_names()
    if not dev.supports_pulse:
        raise NotSupported(f"'{dev.name}' has no pulse support")
    return _operation_duration(dev, registry, name)


def describe(dev: DeviceDescriptor, registry: Optional[CalibrationRegistry] = None) -> List[Tuple[str, Any]]:
    """Every answerable ``(scope.key, value)`` pair, in a stable order."""
    scopes = [Scope.device()] + [Scope.site(s) for s in range(dev.num_sites)]
    if dev.pulse_support is PulseSupport.PORT_LEVEL:
        scopes += [Scope.port(p.id) for p in dev.ports]
    names = list(dict.fromkeys(list(dev.operations) + (registry if registry is not None else dev.default_calibrations).gate_names()))
    scopes += [Scope.operation(n) for n in names]

    rows: List[Tuple[str, Any]] = []
    for scope in scopes:
        for key in SCOPE_KEYS[scope.kind]:
            try:
                value = query_descriptor(dev, scope, key, registry)
            except (NotSupported, InvalidScope):
                continue
            label = key.value if scope.kind is ScopeKind.DEVICE else f"{scope}.{key.value}"
            rows.append((label, value))
    return rows
