"""
Error Types
===========

Exception hierarchy shared by every layer of the pulse stack.
"""

from typing import Any, Iterable, List, Optional, Sequence


class PulseStackError(Exception):
    """Base class for all pulse stack errors."""


# Waveforms and phases

class WaveformError(PulseStackError, ValueError):
    """Invalid waveform data or parameters."""


class AmplitudeOutOfRange(WaveformError):
    pass


class EmptyWaveform(WaveformError):
    pass


class InvalidParams(WaveformError):
    pass


class NonFinite(PulseStackError, ValueError):
    pass


# Schedules

class ScheduleError(PulseStackError):
    """Structural problem in a schedule."""


class InvalidInstruction(ScheduleError, ValueError):
    pass


class UnknownFrame(ScheduleError):
    def __init__(self, frame: str, index: Optional[int] = None):
        self.frame = frame
        self.index = index
        where = f" (instruction {index})" if index is not None else ""
        super().__init__(f"Unknown frame '{frame}'{where}")


# Gate lowering

class LoweringError(PulseStackError):
    pass


class MissingCalibration(LoweringError):
    def __init__(self, gate_name: str, sites: Sequence[int]):
        self.gate_name = gate_name
        self.sites = tuple(sites)
        super().__init__(f"No calibration for gate '{gate_name}' on sites {list(self.sites)}")


class UnboundFrameRole(LoweringError):
    def __init__(self, role: str, sites: Sequence[int]):
        self.role = role
        self.sites = tuple(sites)
        super().__init__(f"Frame role '{role}' cannot be bound on sites {list(self.sites)}")


class InvalidBody(LoweringError, ValueError):
    pass


class InvalidCircuit(LoweringError, ValueError):
    pass


# Passes

class PassError(PulseStackError):
    pass


class UnknownPass(PassError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Unknown pass '{name}'")


# Exchange format

class ExchangeFormatError(PulseStackError):
    pass


class PulseSyntaxError(ExchangeFormatError):
    def __init__(self, line: int, col: int, expected: str, found: str = ""):
        self.line = line
        self.col = col
        self.expected = expected
        self.found = found
        got = f", found {found!r}" if found else ""
        super().__init__(f"{line}:{col}: expected {expected}{got}")


class ProfileMismatch(ExchangeFormatError):
    pass


class UndeclaredGlobal(ExchangeFormatError):
    pass


class ArityError(ExchangeFormatError):
    pass


class UnsupportedInstruction(ExchangeFormatError):
    pass


class UnknownIntrinsic(ExchangeFormatError):
    pass


# Device interface

class DeviceError(PulseStackError):
    pass


class InvalidDescriptor(DeviceError, ValueError):
    pass


class NotSupported(DeviceError):
    pass


class InvalidScope(DeviceError):
    pass


class StaleHandle(DeviceError):
    pass


class FormatUnsupported(DeviceError):
    pass


class PayloadInvalid(DeviceError):
    def __init__(self, message: str, diagnostics: Optional[Iterable[Any]] = None):
        self.diagnostics: List[Any] = list(diagnostics or [])
        super().__init__(message)


class JobFailed(DeviceError):
    def __init__(self, message: str):
        self.message = message
        super().__init__(message)


class JobTimeout(DeviceError, TimeoutError):
    """The wait expired; the job itself is unaffected."""


# Simulation

class SimulationError(PulseStackError):
    pass


class UntimedSchedule(SimulationError):
    pass


class PostMeasurementInstruction(SimulationError):
    pass


class UnknownSite(SimulationError):
    pass
