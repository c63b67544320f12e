"""
Command-Line Application
========================

Front end tying the toolchain together:

- ``query``    device capability queries
- ``compile``  circuit -> pulse schedule -> exchange-format file
- ``validate`` profile checks on an exchange-format file
- ``run``      submit an exchange-format file and print the histogram
- ``vqe-demo`` closed-loop pulse optimization on the simulator

Machine-readable output goes to stdout, diagnostics to stderr. Exit codes:
0 success, 1 diagnostics or runtime errors, 2 usage errors.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, TextIO

from ..core.device import Scope, ScopeKind, describe
from ..core.driver import QDMIDriver, get_driver
from ..core.errors import PayloadInvalid, PulseStackError
from ..core.exchange import build_module, emit, parse, validate_profile
from ..core.lowering import lower
from ..core.passes import Diagnostic, LegalizationMode, PassManager, PipelineConfig, has_errors, legalize, resolve_timing
from ..core.pulse import Schedule
from ..core.vqe import VQEStep, run_vqe
from ..utils.config import config
from ..utils.import_export import import_export
from ..utils.log import logger
from .plotting import render_schedule

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Invalid flag combination detected after argparse."""


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (list, tuple)):
        return ", ".join(format_value(v) for v in value)
    return str(value)


class PulseStackCLI:
    """Argument parsing plus one handler per subcommand."""

    def __init__(self, stdout: Optional[TextIO] = None, stderr: Optional[TextIO] = None):
        self.stdout = stdout or sys.stdout
        self.stderr = stderr or sys.stderr
        self.parser = self._build_parser()
        self._driver: Optional[QDMIDriver] = None
        self._owns_driver = False

    def _build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog='pulsestack',
            description="Pulse-level quantum compilation toolchain.",
        )
        parser.add_argument('--devices', nargs='+', metavar='PATH',
                            help="device descriptor files (overrides configuration)")
        parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                            help="log level for this invocation")
        sub = parser.add_subparsers(dest='command', metavar='COMMAND')
        sub.required = True

        query = sub.add_parser('query', help="query device properties")
        query.add_argument('--device', help="device name (default: first registered)")
        query.add_argument('--scope', choices=[k.value for k in ScopeKind], default='device')
        query.add_argument('--target', help="site index, port id or operation name for the scope")
        query.add_argument('--key', help="property to read")
        query.add_argument('--all', action='store_true', help="print every answerable property")
        query.set_defaults(handler=self.cmd_query)

        comp = sub.add_parser('compile', help="lower a circuit to an exchange-format file")
        comp.add_argument('circuit', type=Path, help="circuit JSON file")
        comp.add_argument('--calibrations', type=Path, action='append', default=[],
                          help="calibration JSON file layered over the device defaults (repeatable)")
        comp.add_argument('--device', help="device name (default: first registered)")
        comp.add_argument('--passes', help="comma separated pass list (default from configuration)")
        comp.add_argument('--mode', choices=[m.value for m in LegalizationMode],
                          help="legalization mode (default from configuration)")
        comp.add_argument('--name', default='pulse_job', help="module name")
        comp.add_argument('-o', '--out', type=Path, help="output file (default: stdout)")
        comp.add_argument('--plot', type=Path, help="write a PNG timeline of the compiled schedule")
        comp.set_defaults(handler=self.cmd_compile)

        val = sub.add_parser('validate', help="check an exchange-format file")
        val.add_argument('payload', type=Path)
        val.add_argument('--device', help="also check ports and constraints against this device")
        val.set_defaults(handler=self.cmd_validate)

        run = sub.add_parser('run', help="execute an exchange-format file")
        run.add_argument('payload', type=Path)
        run.add_argument('--device', help="device name (default: first registered)")
        run.add_argument('--shots', type=int, help="shot count (default from configuration)")
        run.add_argument('--seed', type=int, help="sampling seed (default from configuration)")
        run.set_defaults(handler=self.cmd_run)

        vqe = sub.add_parser('vqe-demo', help="optimize a drive pulse to minimize <sz>")
        vqe.add_argument('--device', help="simulator device name (default: first registered)")
        vqe.add_argument('--iterations', type=int, help="iteration budget (default from configuration)")
        vqe.add_argument('--seed', type=int, help="seed for the initial parameters")
        vqe.add_argument('--site', type=int, default=0)
        vqe.set_defaults(handler=self.cmd_vqe_demo)
        return parser

    # Plumbing

    def out(self, line: str = ""):
        print(line, file=self.stdout)

    def err(self, line: str):
        print(line, file=self.stderr)

    def report(self, diagnostics: Iterable[Diagnostic]):
        for d in diagnostics:
            self.err(str(d))

    @property
    def driver(self) -> QDMIDriver:
        if self._driver is None:
            self._driver = get_driver()
        return self._driver

    def _resolve_device(self, name: Optional[str]):
        session = self.driver.open()
        try:
            if name is None:
                devices = self.driver.list_devices(session)
                if not devices:
                    raise UsageError("no devices are registered")
                return devices[0][0]
            return self.driver.find_device(session, name)
        finally:
            self.driver.close(session)

    # Commands

    def cmd_query(self, args: argparse.Namespace) -> int:
        handle = self._resolve_device(args.device)
        descriptor = self.driver.descriptor(handle)
        if args.all:
            for label, value in describe(descriptor, self.driver.calibrations(handle)):
                self.out(f"{label} = {format_value(value)}")
            return EXIT_OK
        if not args.key:
            raise UsageError("query needs --key or --all")

        kind = ScopeKind(args.scope)
        if kind is not ScopeKind.DEVICE and args.target is None:
            raise UsageError(f"--scope {kind.value} needs --target")
        if kind is ScopeKind.DEVICE:
            scope = Scope.device()
        elif kind is ScopeKind.SITE:
            try:
                scope = Scope.site(int(args.target))
            except ValueError:
                raise UsageError(f"site target must be an integer, got {args.target!r}")
        elif kind is ScopeKind.PORT:
            scope = Scope.port(args.target)
        else:
            scope = Scope.operation(args.target)
        value = self.driver.query(handle, scope, args.key)
        self.out(f"{args.key} = {format_value(value)}")
        return EXIT_OK

    def cmd_compile(self, args: argparse.Namespace) -> int:
        handle = self._resolve_device(args.device)
        descriptor = self.driver.descriptor(handle)
        registry = self.driver.calibrations(handle)
        for path in args.calibrations:
            for entry in import_export.load_calibrations(path):
                registry = registry.register(entry)

        circuit = import_export.load_circuit(args.circuit)
        schedule = lower(circuit, registry, descriptor)

        passes = args.passes if args.passes is not None else ",".join(config.get('compiler.passes'))
        mode = LegalizationMode(args.mode or config.get('compiler.legalization_mode'))
        result = PassManager(PipelineConfig.from_string(passes, mode)).run(schedule, descriptor)
        self.report(result.diagnostics)
        if not result.ok:
            return EXIT_FAILED

        module = build_module(result.schedule, module_name=args.name, ports=descriptor.ports)
        text = emit(module)
        if args.out:
            import_export.write_text(args.out, text)
        else:
            self.stdout.write(text)
        if args.plot:
            timed = result.schedule if result.schedule.is_timed else resolve_timing(result.schedule)
            render_schedule(timed, args.plot)
        logger.info("Circuit compiled", circuit=str(args.circuit), device=descriptor.name,
                    instructions=len(module.schedule.instructions))
        return EXIT_OK

    def cmd_validate(self, args: argparse.Namespace) -> int:
        module = parse(import_export.read_text(args.payload))
        diagnostics: List[Diagnostic] = list(module.notes) + validate_profile(module)
        if args.device is not None:
            diagnostics += self._check_against_device(module.schedule, args.device)
        self.report(diagnostics)
        if has_errors(diagnostics):
            return EXIT_FAILED
        self.out(f"{args.payload}: ok")
        return EXIT_OK

    def _check_against_device(self, schedule: Schedule, device: str) -> List[Diagnostic]:
        descriptor = self.driver.descriptor(self._resolve_device(device))
        _, diagnostics = legalize(resolve_timing(schedule), descriptor, LegalizationMode.STRICT)
        return diagnostics

    def cmd_run(self, args: argparse.Namespace) -> int:
        payload = import_export.read_text(args.payload)
        handle = self._resolve_device(args.device)
        shots = args.shots if args.shots is not None else config.get('execution.shots')
        if shots < 1:
            raise UsageError("--shots must be positive")

        session = self.driver.open()
        try:
            job = self.driver.submit_job(session, handle, 'pqir_pulse', payload, shots, args.seed)
            histogram = self.driver.job_result(job, timeout=config.get('execution.job_timeout_s'))
        except PayloadInvalid as e:
            self.report(e.diagnostics)
            raise
        finally:
            self.driver.close(session)

        for bitstring in sorted(histogram):
            self.out(f"{bitstring} {histogram[bitstring]}")
        return EXIT_OK

    def cmd_vqe_demo(self, args: argparse.Namespace) -> int:
        descriptor = self.driver.descriptor(self._resolve_device(args.device))

        def show(step: VQEStep):
            self.out(f"{step.iteration:4d} {step.energy:+.9f}")

        result = run_vqe(descriptor, iterations=args.iterations, seed=args.seed, site=args.site, callback=show)
        p = result.params
        self.out(f"final energy = {result.energy:+.9f} "
                 f"(amp={p.amp:.6f}, duration_samples={p.duration_samples}, phase_rad={p.phase_rad:.6f})")
        return EXIT_OK

    # Entry

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        try:
            args = self.parser.parse_args(argv)
        except SystemExit as e:
            return EXIT_USAGE if e.code else EXIT_OK

        if args.log_level:
            logger.set_level(args.log_level)
        try:
            if args.devices:
                self._driver = QDMIDriver.from_paths(args.devices)
                self._owns_driver = True
            return args.handler(args)
        except UsageError as e:
            self.parser.print_usage(self.stderr)
            self.err(f"{self.parser.prog}: error: {e}")
            return EXIT_USAGE
        except PulseStackError as e:
            logger.error("Command failed", exception=e, command=args.command)
            self.err(f"error: {e}")
            return EXIT_FAILED
        except (OSError, ValueError) as e:
            logger.error("Command failed", exception=e, command=args.command)
            self.err(f"error: {e}")
            return EXIT_FAILED
        finally:
            if self._owns_driver and self._driver is not None:
                self._driver.shutdown()
                self._driver = None
                self._owns_driver = False


def main(argv: Optional[Sequence[str]] = None) -> int:
    return PulseStackCLI().run(argv)
