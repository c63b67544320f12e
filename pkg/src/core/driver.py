"""
Device Driver
=============

In-process driver mediating between clients and devices: sessions,
capability queries, default calibrations and asynchronous pulse jobs.

Each device owns one worker thread fed by a FIFO queue, so jobs on one
device complete in submission order. All bookkeeping is guarded by a single
lock; ``job_result`` is the synchronization point for callers.
"""

import queue
import threading
import uuid
from collections import deque
from concurrent.futures import CancelledError, Future, TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

from .device import PQIR_PULSE, DeviceDescriptor, PropertyKey, Scope, load_descriptor, query_descriptor
from .errors import (
    FormatUnsupported,
    JobFailed,
    JobTimeout,
    MissingCalibration,
    NotSupported,
    PayloadInvalid,
    PulseStackError,
    StaleHandle,
)
from .exchange import PulseModule, parse, validate_profile
from .lowering import CalibrationEntry, CalibrationRegistry
from .passes import LegalizationMode, error, has_errors, legalize, resolve_timing
from .simulator import PulseSimulator
from ..utils.config import config
from ..utils.log import logger

KNOWN_FORMATS = (PQIR_PULSE,)


class JobStatus(Enum):
    QUEUED = "queued"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"
    CANCELLED = "cancelled"


TRANSITIONS = {
    JobStatus.QUEUED: {JobStatus.RUNNING, JobStatus.CANCELLED},
    JobStatus.RUNNING: {JobStatus.DONE, JobStatus.FAILED},
}


@dataclass(frozen=True)
class SessionHandle:
    token: str


@dataclass(frozen=True)
class DeviceHandle:
    token: str


@dataclass(frozen=True)
class JobHandle:
    token: str


def _token() -> str:
    return uuid.uuid4().hex


@dataclass
class Job:
    id: JobHandle
    device: DeviceHandle
    session: SessionHandle
    format: str
    payload: str
    shots: int
    seed: Optional[int]
    module: PulseModule
    status: JobStatus = JobStatus.QUEUED
    result: Optional[Dict[str, int]] = None
    error: Optional[str] = None
    history: List[JobStatus] = field(default_factory=lambda: [JobStatus.QUEUED])
    future: Future = field(default_factory=Future, repr=False)

    def move(self, status: JobStatus):
        if status not in TRANSITIONS.get(self.status, set()):
            raise RuntimeError(f"Illegal job transition {self.status.value} -> {status.value}")
        self.status = status
        self.history.append(status)


class _DeviceEntry:
    def __init__(self, handle: DeviceHandle, descriptor: DeviceDescriptor):
        self.handle = handle
        self.descriptor = descriptor
        self.registry: CalibrationRegistry = descriptor.default_calibrations
        self.queue: "queue.Queue[Optional[str]]" = queue.Queue()
        self.worker: Optional[threading.Thread] = None


class QDMIDriver:
    """Thread-safe driver over a fixed set of registered devices."""

    def __init__(self, descriptors: Iterable[DeviceDescriptor] = (), max_retained_jobs: Optional[int] = None):
        self._lock = threading.RLock()
        self._devices: Dict[str, _DeviceEntry] = {}
        self._sessions: Dict[str, Set[str]] = {}
        self._jobs: Dict[str, Job] = {}
        # Finished jobs, oldest first; beyond the limit their handles go stale
        self._finished: "deque[str]" = deque()
        if max_retained_jobs is None:
            max_retained_jobs = config.get('execution.max_retained_jobs', 10000)
        self._max_retained = max_retained_jobs
        if self._max_retained < 1:
            raise ValueError("max_retained_jobs must be positive")
        self._closed = False
        for dev in descriptors:
            self.register_device(dev)

    @classmethod
    def from_paths(cls, paths: Sequence[Union[str, Path]]) -> 'QDMIDriver':
        return cls(load_descriptor(p) for p in paths)

    # Devices and sessions

    def register_device(self, dev: DeviceDescriptor) -> DeviceHandle:
        with self._lock:
            self._check_open()
            if any(e.descriptor.name == dev.name for e in self._devices.values()):
                raise ValueError(f"Device '{dev.name}' is already registered")
            handle = DeviceHandle(_token())
            self._devices[handle.token] = _DeviceEntry(handle, dev)
        logger.info("Device registered", device=dev.name, simulator=dev.is_simulator)
        return handle

    def _check_open(self):
        if self._closed:
            raise StaleHandle("Driver has been shut down")

    def _session(self, session: SessionHandle) -> Set[str]:
        self._check_open()
        jobs = self._sessions.get(getattr(session, 'token', None))
        if jobs is None:
            raise StaleHandle("Unknown or closed session")
        return jobs

    def _device(self, dev: DeviceHandle) -> _DeviceEntry:
        self._check_open()
        entry = self._devices.get(getattr(dev, 'token', None))
        if entry is None:
            raise StaleHandle("Unknown device handle")
        return entry

    def _job(self, job: JobHandle) -> Job:
        self._check_open()
        found = self._jobs.get(getattr(job, 'token', None))
        if found is None:
            raise StaleHandle("Unknown job handle")
        return found

    def open(self) -> SessionHandle:
        with self._lock:
            self._check_open()
            session = SessionHandle(_token())
            self._sessions[session.token] = set()
        logger.audit("open_session", session=session.token)
        return session

    def close(self, session: SessionHandle):
        """Invalidate a session and cancel its queued jobs."""
        with self._lock:
            jobs = self._session(session)
            for token in list(jobs):
                if token in self._jobs:
                    self._cancel_locked(self._jobs[token])
            del self._sessions[session.token]
        logger.audit("close_session", session=session.token, jobs=len(jobs))

    def list_devices(self, session: SessionHandle) -> List[Tuple[DeviceHandle, str]]:
        with self._lock:
            self._session(session)
            return [(e.handle, e.descriptor.name) for e in self._devices.values()]

    def find_device(self, session: SessionHandle, name: str) -> DeviceHandle:
        for handle, dev_name in self.list_devices(session):
            if dev_name == name:
                return handle
        raise NotSupported(f"No device named '{name}'")

    def descriptor(self, dev: DeviceHandle) -> DeviceDescriptor:
        with self._lock:
            return self._device(dev).descriptor

    # Queries and calibrations

    def query(self, dev: DeviceHandle, scope: Scope, key: Union[str, PropertyKey]):
        with self._lock:
            entry = self._device(dev)
            descriptor, registry = entry.descriptor, entry.registry
        return query_descriptor(descriptor, scope, key, registry)

    def calibrations(self, dev: DeviceHandle) -> CalibrationRegistry:
        with self._lock:
            return self._device(dev).registry

    def get_default_calibration(self, dev: DeviceHandle, gate_name: str,
                                sites: Optional[Sequence[int]]) -> CalibrationEntry:
        with self._lock:
            entry = self._device(dev)
            if not entry.descriptor.supports_pulse:
                raise NotSupported(f"'{entry.descriptor.name}' has no pulse support")
            found = entry.registry.lookup(gate_name, sites)
        if found is None:
            raise MissingCalibration(gate_name, sites or ())
        return found

    def set_default_calibration(self, dev: DeviceHandle, e: CalibrationEntry):
        with self._lock:
            entry = self._device(dev)
            if not entry.descriptor.supports_pulse:
                raise NotSupported(f"'{entry.descriptor.name}' has no pulse support")
            entry.registry = entry.registry.register(e)
        logger.audit("set_default_calibration", device=entry.descriptor.name, gate=e.gate_name)

    # Jobs

    def _validate_payload(self, dev: DeviceDescriptor, payload: str) -> PulseModule:
        try:
            module = parse(payload)
        except (PulseStackError, ValueError) as e:
            raise PayloadInvalid(f"Payload does not parse: {e}", [error(str(e))])
        diagnostics = validate_profile(module)
        for port in module.port_ids():
            if dev.port(port) is None:
                diagnostics.append(error(f"port '{port}' does not exist on device '{dev.name}'"))
        if has_errors(diagnostics):
            raise PayloadInvalid("Payload failed profile validation", diagnostics)
        return module

    def submit_job(self, session: SessionHandle, dev: DeviceHandle, format: str, payload: str,
                   shots: int, seed: Optional[int] = None) -> JobHandle:
        if shots < 1:
            raise ValueError("shots must be positive")
        with self._lock:
            self._session(session)
            entry = self._device(dev)
        descriptor = entry.descriptor
        if format not in KNOWN_FORMATS or format not in descriptor.supported_formats:
            raise FormatUnsupported(f"Format '{format}' is not supported by '{descriptor.name}'")
        module = self._validate_payload(descriptor, payload)

        with self._lock:
            jobs = self._session(session)
            handle = JobHandle(_token())
            job = Job(handle, entry.handle, session, format, payload, shots,
                      seed if seed is not None else config.get('execution.seed'), module)
            self._jobs[handle.token] = job
            jobs.add(handle.token)
            self._ensure_worker(entry)
            entry.queue.put(handle.token)
        logger.info("Job queued", job=handle.token, device=descriptor.name, shots=shots)
        return handle

    def job_status(self, job: JobHandle) -> JobStatus:
        with self._lock:
            return self._job(job).status

    def job_history(self, job: JobHandle) -> List[JobStatus]:
        with self._lock:
            return list(self._job(job).history)

    def job_result(self, job: JobHandle, timeout: Optional[float] = None) -> Dict[str, int]:
        """Block until the job is terminal; return its histogram or raise JobFailed.

        With a ``timeout``, JobTimeout is raised when it expires and the job
        keeps running.
        """
        with self._lock:
            future = self._job(job).future
        try:
            return dict(future.result(timeout=timeout))
        except CancelledError:
            raise JobFailed("job was cancelled")
        except FutureTimeout:
            raise JobTimeout(f"job {job.token} did not finish within {timeout} s")
        except JobFailed:
            raise
        except Exception as e:
            raise JobFailed(str(e))

    def _cancel_locked(self, job: Job) -> bool:
        if job.status is not JobStatus.QUEUED:
            return False
        job.move(JobStatus.CANCELLED)
        job.future.cancel()
        self._retire_locked(job)
        return True

    def _retire_locked(self, job: Job):
        self._finished.append(job.id.token)
        while len(self._finished) > self._max_retained:
            token = self._finished.popleft()
            dropped = self._jobs.pop(token, None)
            if dropped is not None:
                self._sessions.get(dropped.session.token, set()).discard(token)

    def job_cancel(self, job: JobHandle) -> bool:
        """Cancel a queued job; running or finished jobs are left alone (returns False)."""
        with self._lock:
            cancelled = self._cancel_locked(self._job(job))
        if cancelled:
            logger.audit("cancel_job", job=job.token)
        return cancelled

    # Workers

    def _ensure_worker(self, entry: _DeviceEntry):
        if entry.worker is None:
            entry.worker = threading.Thread(target=self._work, args=(entry,),
                                            name=f"device-{entry.descriptor.name}", daemon=True)
            entry.worker.start()

    def _work(self, entry: _DeviceEntry):
        while True:
            token = entry.queue.get()
            if token is None:
                return
            with self._lock:
                job = self._jobs.get(token)
                if job is None or job.status is not JobStatus.QUEUED:
                    continue
                if not job.future.set_running_or_notify_cancel():
                    continue
                job.move(JobStatus.RUNNING)
            try:
                histogram = self._execute(entry.descriptor, job)
            except Exception as e:
                message = str(e) or type(e).__name__
                with self._lock:
                    job.error = message
                    job.move(JobStatus.FAILED)
                    self._retire_locked(job)
                logger.warning("Job failed", job=token, error=message)
                job.future.set_exception(JobFailed(message))
            else:
                with self._lock:
                    job.result = histogram
                    job.move(JobStatus.DONE)
                    self._retire_locked(job)
                logger.info("Job done", job=token, outcomes=len(histogram))
                job.future.set_result(histogram)

    @staticmethod
    def _execute(dev: DeviceDescriptor, job: Job) -> Dict[str, int]:
        if not dev.is_simulator:
            raise JobFailed(f"device '{dev.name}' has no execution backend")
        timed = resolve_timing(job.module.schedule)
        legal, diagnostics = legalize(timed, dev, LegalizationMode.STRICT)
        if has_errors(diagnostics):
            raise JobFailed("; ".join(str(d) for d in diagnostics if d.is_error))
        simulator = PulseSimulator(dev.ports, dev.simulation)
        return simulator.execute(legal, job.shots, job.seed, job.module.attributes.required_num_results)

    def shutdown(self):
        """Cancel queued jobs, stop workers and invalidate every handle."""
        with self._lock:
            if self._closed:
                return
            for job in list(self._jobs.values()):
                self._cancel_locked(job)
            workers = [e for e in self._devices.values() if e.worker is not None]
            for e in workers:
                e.queue.put(None)
            self._closed = True
        for e in workers:
            e.worker.join()
        logger.info("Driver shut down", devices=len(self._devices))


_default_driver: Optional[QDMIDriver] = None
_default_lock = threading.Lock()


def get_driver() -> QDMIDriver:
    """Process-wide driver over the configured descriptor paths, created on first use."""
    global _default_driver
    with _default_lock:
        if _default_driver is None:
            _default_driver = QDMIDriver.from_paths(config.device_paths())
        return _default_driver
