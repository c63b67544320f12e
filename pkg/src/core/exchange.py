"""
Pulse Exchange Format
=====================

Printer and parser for the ``.pqir`` pulse-profile text format: a small,
self-contained subset of LLVM-style textual IR made of opaque type
declarations, constant double arrays, one entry function with a single
block of intrinsic calls, intrinsic declarations and one attribute group.

Frames, ports and waveform data travel as reserved constant globals:

    @port.<id>     = constant [1 x double] [port handle]
    @frame.<id>    = constant [5 x double] [frame handle, port handle,
                                            frequency, phase, elapsed]
    @barrier.<k>   = constant [n x double] [frame handles]
    @<waveform>    = constant [2n x double] [re0, im0, re1, im1, ...]

Plays and frame changes address ports and act on the port's primary (first
declared) frame. Start times are not carried; resolve them after parsing.
"""

import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, NamedTuple, NoReturn, Optional, Sequence, Tuple, Union

from .errors import (
    ArityError,
    ExchangeFormatError,
    ProfileMismatch,
    PulseSyntaxError,
    UndeclaredGlobal,
    UnknownIntrinsic,
    UnsupportedInstruction,
)
from .passes import Diagnostic, Severity, error
from .pulse import (
    Barrier,
    Capture,
    Delay,
    Frame,
    Measure,
    Play,
    Port,
    PulseInstruction,
    SampledWaveform,
    Schedule,
    SetFrequency,
    SetPhase,
    ShiftFrequency,
    ShiftPhase,
    resolve_waveform,
)
from ..utils.log import logger

PULSE_PROFILE = "pulse"
OPAQUE_TYPES = ('Qubit', 'Result', 'Port', 'Frame', 'Waveform')

WAVEFORM = '__quantum__pulse__waveform__body'
PLAY = '__quantum__pulse__waveform_play__body'
FRAME_CHANGE = '__quantum__pulse__frame_change__body'
DELAY = '__quantum__pulse__delay__body'
SHIFT_PHASE = '__quantum__pulse__shift_phase__body'
SET_PHASE = '__quantum__pulse__set_phase__body'
SHIFT_FREQUENCY = '__quantum__pulse__shift_frequency__body'
SET_FREQUENCY = '__quantum__pulse__set_frequency__body'
BARRIER = '__quantum__pulse__barrier__body'
CAPTURE = '__quantum__pulse__capture__body'
MZ = '__quantum__qis__mz__body'

# name -> (return type, argument types), in declaration order
INTRINSICS: Dict[str, Tuple[str, Tuple[str, ...]]] = {
    WAVEFORM: ('%Waveform*', ('i64', 'double*')),
    PLAY: ('void', ('%Port*', '%Waveform*')),
    FRAME_CHANGE: ('void', ('%Port*', 'double', 'double')),
    DELAY: ('void', ('%Frame*', 'i64')),
    SHIFT_PHASE: ('void', ('%Frame*', 'double')),
    SET_PHASE: ('void', ('%Frame*', 'double')),
    SHIFT_FREQUENCY: ('void', ('%Frame*', 'double')),
    SET_FREQUENCY: ('void', ('%Frame*', 'double')),
    BARRIER: ('void', ('i64', '%Frame**')),
    CAPTURE: ('void', ('%Frame*', '%Result*')),
    MZ: ('void', ('%Qubit*', '%Result*')),
}

_FRAME_OPS = {
    ShiftPhase: (SHIFT_PHASE, 'delta_rad'),
    SetPhase: (SET_PHASE, 'phase_rad'),
    ShiftFrequency: (SHIFT_FREQUENCY, 'delta_hz'),
    SetFrequency: (SET_FREQUENCY, 'frequency_hz'),
}
_FRAME_OP_BY_NAME = {name: (cls, attr) for cls, (name, attr) in _FRAME_OPS.items()}

RESERVED_PREFIXES = ('port.', 'frame.', 'barrier.')
NAME_PATTERN = re.compile(r'^[A-Za-z_][A-Za-z0-9_.]*$')


@dataclass(frozen=True)
class ModuleAttributes:
    entry_point: bool = True
    output_labeling_schema: str = "labeled"
    qir_profiles: str = PULSE_PROFILE
    required_num_ports: int = 0
    required_num_qubits: int = 0
    required_num_results: int = 0


@dataclass(frozen=True)
class PulseModule:
    """One pulse job: an untimed schedule of sampled waveforms plus metadata.

    ``notes`` holds parse-time findings and takes no part in equality.
    """
    module_name: str
    entry_name: str
    attributes: ModuleAttributes
    schedule: Schedule
    waveform_globals: Tuple[Tuple[str, Tuple[complex, ...]], ...] = ()
    notes: Tuple[Diagnostic, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'waveform_globals',
                           tuple((name, tuple(samples)) for name, samples in self.waveform_globals))
        object.__setattr__(self, 'notes', tuple(self.notes))

    def port_ids(self) -> List[str]:
        """Ports bound by the module's frames, in declaration order."""
        return list(dict.fromkeys(f.port for f in self.schedule.frames.values()))

    def primary_frames(self) -> Dict[str, str]:
        primary: Dict[str, str] = {}
        for fid, frame in self.schedule.frames.items():
            primary.setdefault(frame.port, fid)
        return primary


def build_module(schedule: Schedule, module_name: str = "pulse_job", entry_name: str = "main",
                 output_labeling_schema: str = "labeled",
                 ports: Optional[Iterable[Port]] = None) -> PulseModule:
    """Package a schedule for exchange.

    Waveforms are resolved to samples and deduplicated into globals, frames
    nobody uses are dropped and the attribute counts are derived from usage.
    With the device ``ports`` given, captures also count the sites of their port.
    """
    for name in (module_name, entry_name):
        if not NAME_PATTERN.match(name):
            raise ExchangeFormatError(f"Invalid module or entry name: {name!r}")
    schedule.check_frames()
    used = set(schedule.frames_used())
    frames = {fid: f for fid, f in schedule.frames.items() if fid in used}
    for fid, f in frames.items():
        if not (NAME_PATTERN.match(fid) and NAME_PATTERN.match(f.port)):
            raise ExchangeFormatError(f"Frame '{fid}' on port '{f.port}' cannot be named in the exchange format")

    globals_: Dict[Tuple[complex, ...], str] = {}
    instructions: List[PulseInstruction] = []
    for instr in schedule.instructions:
        if isinstance(instr, Play):
            w = resolve_waveform(instr.waveform)
            globals_.setdefault(w.samples, f"wf.{len(globals_)}")
            instr = Play(instr.frame, w)
        instructions.append(instr)

    module_schedule = Schedule(frames, tuple(instructions))
    results = module_schedule.results()
    sites = [i.site for i in instructions if isinstance(i, Measure)]
    if ports is not None:
        port_sites = {p.id: p.sites for p in ports}
        for i in instructions:
            if isinstance(i, Capture):
                sites.extend(port_sites.get(frames[i.frame].port, ()))
    attributes = ModuleAttributes(
        entry_point=True,
        output_labeling_schema=output_labeling_schema,
        qir_profiles=PULSE_PROFILE,
        required_num_ports=len(module_schedule.ports_used()),
        required_num_qubits=max(sites, default=-1) + 1,
        required_num_results=max(results, default=-1) + 1,
    )
    waveform_globals = tuple((name, samples) for samples, name in globals_.items())
    return PulseModule(module_name, entry_name, attributes, module_schedule, waveform_globals)


# Printer

def _double(x: float) -> str:
    return repr(float(x))


def _handle(n: int, ty: str) -> str:
    return f"inttoptr (i64 {n} to {ty})"


def _array(name: str, values: Sequence[float]) -> str:
    body = ", ".join(f"double {_double(v)}" for v in values)
    return f"@{name} = constant [{len(values)} x double] [{body}]"


_ESCAPE_HEX = re.compile(r'\\([0-9A-Fa-f]{2})')


def escape_string(text: str) -> str:
    """Quote-safe attribute text: '"', '\\' and non-printable bytes become \\XX."""
    out = []
    for ch in text:
        if ch in '"\\' or not ' ' <= ch <= '~':
            out.extend(f"\\{b:02X}" for b in ch.encode('utf-8'))
        else:
            out.append(ch)
    return "".join(out)


def unescape_string(text: str) -> str:
    raw = bytearray()
    pos = 0
    for mo in _ESCAPE_HEX.finditer(text):
        raw += text[pos:mo.start()].encode('utf-8')
        raw.append(int(mo.group(1), 16))
        pos = mo.end()
    raw += text[pos:].encode('utf-8')
    return raw.decode('utf-8', errors='replace')


class PulsePrinter:
    """Deterministic text emission for one module."""

    def __init__(self, m: PulseModule):
        self.m = m
        self.port_handle = {pid: i for i, pid in enumerate(m.port_ids())}
        self.frame_handle = {fid: i for i, fid in enumerate(m.schedule.frames)}
        self.primary = m.primary_frames()
        self.waveform_names = {samples: name for name, samples in m.waveform_globals}
        self.lines: List[str] = []
        self.barriers: List[Tuple[str, List[int]]] = []
        self.used: Dict[str, None] = {}

    def _call(self, name: str, args: str, target: Optional[str] = None):
        self.used.setdefault(name, None)
        ret = INTRINSICS[name][0]
        prefix = f"{target} = " if target else ""
        self.lines.append(f"  {prefix}call {ret} @{name}({args})")

    def _frame(self, fid: str) -> str:
        return f"%Frame* {_handle(self.frame_handle[fid], '%Frame*')}"

    def _port_of(self, fid: str, what: str) -> str:
        port = self.m.schedule.frames[fid].port
        if self.primary[port] != fid:
            raise UnsupportedInstruction(f"{what} on frame '{fid}', which is not the primary frame of port '{port}'")
        return f"%Port* {_handle(self.port_handle[port], '%Port*')}"

    def body(self):
        instructions = self.m.schedule.instructions
        values: Dict[str, str] = {}
        i = 0
        while i < len(instructions):
            instr = instructions[i]
            nxt = instructions[i + 1] if i + 1 < len(instructions) else None
            if isinstance(instr, Play):
                if not isinstance(instr.waveform, SampledWaveform) or instr.waveform.samples not in self.waveform_names:
                    raise UnsupportedInstruction(f"instruction {i}: waveform is not declared as a global")
                name = self.waveform_names[instr.waveform.samples]
                if name not in values:
                    values[name] = f"%w{len(values)}"
                    self._call(WAVEFORM, f"i64 {instr.waveform.duration}, double* @{name}", values[name])
                self._call(PLAY, f"{self._port_of(instr.frame, 'play')}, %Waveform* {values[name]}")
            elif (isinstance(instr, SetFrequency) and isinstance(nxt, SetPhase) and nxt.frame == instr.frame
                  and self.primary[self.m.schedule.frames[instr.frame].port] == instr.frame):
                self._call(FRAME_CHANGE, f"{self._port_of(instr.frame, 'frame change')}, "
                                         f"double {_double(instr.frequency_hz)}, double {_double(nxt.phase_rad)}")
                i += 1
            elif type(instr) in _FRAME_OPS:
                name, attr = _FRAME_OPS[type(instr)]
                self._call(name, f"{self._frame(instr.frame)}, double {_double(getattr(instr, attr))}")
            elif isinstance(instr, Delay):
                self._call(DELAY, f"{self._frame(instr.frame)}, i64 {instr.duration_samples}")
            elif isinstance(instr, Barrier):
                gname = f"barrier.{len(self.barriers)}"
                handles = [self.frame_handle[f] for f in instr.frame_ids()]
                self.barriers.append((gname, handles))
                self._call(BARRIER, f"i64 {len(handles)}, %Frame** @{gname}")
            elif isinstance(instr, Capture):
                self._call(CAPTURE, f"{self._frame(instr.frame)}, %Result* {_handle(instr.result, '%Result*')}")
            elif isinstance(instr, Measure):
                self._call(MZ, f"%Qubit* {_handle(instr.site, '%Qubit*')}, "
                               f"%Result* {_handle(instr.result, '%Result*')}")
            else:
                raise UnsupportedInstruction(f"instruction {i}: {type(instr).__name__} has no intrinsic")
            i += 1

    def print(self) -> str:
        m = self.m
        self.body()
        out = [f"; ModuleID = '{m.module_name}'", f'source_filename = "{m.module_name}"', ""]
        out += [f"%{t} = type opaque" for t in OPAQUE_TYPES]
        out.append("")

        for pid, handle in self.port_handle.items():
            out.append(_array(f"port.{pid}", [handle]))
        for fid, frame in m.schedule.frames.items():
            out.append(_array(f"frame.{fid}", [self.frame_handle[fid], self.port_handle[frame.port],
                                               frame.frequency_hz, frame.phase_rad, frame.elapsed_samples]))
        for gname, handles in self.barriers:
            out.append(_array(gname, handles))
        for name, samples in m.waveform_globals:
            out.append(_array(name, [x for s in samples for x in (s.real, s.imag)]))
        out.append("")

        out.append(f"define void @{m.entry_name}() #0 {{")
        out.append("entry:")
        out += self.lines
        out.append("  ret void")
        out.append("}")
        out.append("")

        for name in INTRINSICS:
            if name in self.used:
                ret, args = INTRINSICS[name]
                out.append(f"declare {ret} @{name}({', '.join(args)})")
        out.append("")

        a = m.attributes
        attrs = ['"entry_point"'] if a.entry_point else []
        attrs += [
            f'"output_labeling_schema"="{escape_string(a.output_labeling_schema)}"',
            f'"qir_profiles"="{a.qir_profiles}"',
            f'"required_num_ports"="{a.required_num_ports}"',
            f'"required_num_qubits"="{a.required_num_qubits}"',
            f'"required_num_results"="{a.required_num_results}"',
        ]
        out.append(f"attributes #0 = {{ {' '.join(attrs)} }}")
        return "\n".join(out) + "\n"


def emit(m: PulseModule) -> str:
    return PulsePrinter(m).print()


# Tokenizer

class Token(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


_TOKEN_SPEC = [
    ('COMMENT', r';[^\n]*'),
    ('NEWLINE', r'\n'),
    ('SKIP', r'[ \t\r]+'),
    ('STRING', r'"[^"\n]*"'),
    ('GLOBAL', r'@[A-Za-z_$.][A-Za-z0-9_$.]*'),
    ('LOCAL', r'%[A-Za-z0-9_$.]+'),
    ('ATTRREF', r'#[0-9]+'),
    ('NUMBER', r'[-+]?(?:[0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)(?:[eE][-+]?[0-9]+)?'),
    ('WORD', r'[A-Za-z_][A-Za-z0-9_]*'),
    ('PUNCT', r'[=(){}\[\],*:]'),
    ('MISMATCH', r'.'),
]
_TOKEN_RE = re.compile('|'.join(f'(?P<{kind}>{pattern})' for kind, pattern in _TOKEN_SPEC))


def tokenize(text: str) -> Iterator[Token]:
    line, line_start = 1, 0
    for mo in _TOKEN_RE.finditer(text):
        kind = mo.lastgroup
        col = mo.start() - line_start + 1
        if kind == 'NEWLINE':
            line, line_start = line + 1, mo.end()
        elif kind in ('SKIP', 'COMMENT'):
            continue
        elif kind == 'MISMATCH':
            raise PulseSyntaxError(line, col, "a token", mo.group())
        else:
            yield Token(kind, mo.group(), line, col)
    yield Token('EOF', '', line, len(text) - line_start + 1)


class TokenStream:
    def __init__(self, text: str):
        self.tokens = list(tokenize(text))
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != 'EOF':
            self.pos += 1
        return tok

    def fail(self, expected: str, tok: Optional[Token] = None) -> NoReturn:
        tok = tok or self.peek()
        raise PulseSyntaxError(tok.line, tok.col, expected, tok.text or "end of input")

    def accept(self, text: str) -> Optional[Token]:
        if self.peek().text == text and self.peek().kind != 'STRING':
            return self.next()
        return None

    def expect(self, text: str) -> Token:
        tok = self.accept(text)
        if tok is None:
            self.fail(f"'{text}'")
        return tok

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.peek().kind != kind:
            self.fail(what)
        return self.next()


# Parser

Value = Union[int, float, str, None]


@dataclass
class _Arg:
    type: str
    value: Value
    kind: str  # number | handle | local | global
    token: Token


class PulseParser:
    def __init__(self, text: str):
        self.ts = TokenStream(text)
        self.module_name = ""
        self.entry_name: Optional[str] = None
        self.types: List[str] = []
        self.globals: Dict[str, List[float]] = {}
        self.declared: Dict[str, Tuple[str, Tuple[str, ...]]] = {}
        self.calls: List[Tuple[Optional[str], str, str, List[_Arg], Token]] = []
        self.attr_groups: Dict[str, Dict[str, Optional[str]]] = {}
        self.entry_attr: Optional[str] = None
        self.notes: List[Diagnostic] = []

    # Syntax

    def parse_type(self) -> str:
        tok = self.ts.peek()
        if tok.kind == 'WORD' and tok.text in ('void', 'i64', 'double', 'i1', 'i8', 'i32'):
            ty = self.ts.next().text
        elif tok.kind == 'LOCAL':
            ty = self.ts.next().text
        else:
            self.ts.fail("a type")
        while self.ts.accept('*'):
            ty += '*'
        return ty

    def parse_number(self) -> float:
        tok = self.ts.expect_kind('NUMBER', "a number")
        return float(tok.text)

    def parse_int(self) -> int:
        tok = self.ts.expect_kind('NUMBER', "an integer")
        if not re.fullmatch(r'[-+]?[0-9]+', tok.text):
            self.ts.fail("an integer", tok)
        return int(tok.text)

    def parse_global_def(self):
        tok = self.ts.next()
        name = tok.text[1:]
        if name in self.globals:
            raise PulseSyntaxError(tok.line, tok.col, "a new global name", tok.text)
        self.ts.expect('=')
        self.ts.expect('constant')
        self.ts.expect('[')
        n = self.parse_int()
        self.ts.expect('x')
        self.ts.expect('double')
        self.ts.expect(']')
        self.ts.expect('[')
        values: List[float] = []
        if not self.ts.accept(']'):
            while True:
                self.ts.expect('double')
                values.append(self.parse_number())
                if self.ts.accept(']'):
                    break
                self.ts.expect(',')
        if len(values) != n:
            raise PulseSyntaxError(tok.line, tok.col, f"{n} array elements", str(len(values)))
        self.globals[name] = values

    def parse_arg(self) -> _Arg:
        ty = self.parse_type()
        tok = self.ts.peek()
        if tok.kind == 'NUMBER':
            value = self.ts.next().text
            return _Arg(ty, value, 'number', tok)
        if self.ts.accept('null'):
            return _Arg(ty, 0, 'handle', tok)
        if self.ts.accept('inttoptr'):
            self.ts.expect('(')
            self.ts.expect('i64')
            n = self.parse_int()
            self.ts.expect('to')
            cast_to = self.parse_type()
            self.ts.expect(')')
            if cast_to != ty:
                raise PulseSyntaxError(tok.line, tok.col, f"a cast to {ty}", cast_to)
            return _Arg(ty, n, 'handle', tok)
        if tok.kind in ('LOCAL', 'GLOBAL'):
            self.ts.next()
            return _Arg(ty, tok.text, tok.kind.lower(), tok)
        self.ts.fail("an argument value")

    def parse_call(self, target: Optional[str]):
        self.ts.expect('call')
        ret = self.parse_type()
        callee = self.ts.expect_kind('GLOBAL', "a callee")
        self.ts.expect('(')
        args: List[_Arg] = []
        if not self.ts.accept(')'):
            while True:
                args.append(self.parse_arg())
                if self.ts.accept(')'):
                    break
                self.ts.expect(',')
        self.calls.append((target, ret, callee.text[1:], args, callee))

    def parse_define(self):
        self.ts.expect('define')
        self.ts.expect('void')
        name = self.ts.expect_kind('GLOBAL', "the entry function name")
        if self.entry_name is not None:
            raise PulseSyntaxError(name.line, name.col, "a single function definition", name.text)
        self.entry_name = name.text[1:]
        self.ts.expect('(')
        self.ts.expect(')')
        if self.ts.peek().kind == 'ATTRREF':
            self.entry_attr = self.ts.next().text
        self.ts.expect('{')
        self.ts.expect_kind('WORD', "a block label")
        self.ts.expect(':')
        while True:
            tok = self.ts.peek()
            if tok.text == 'ret':
                self.ts.next()
                self.ts.expect('void')
                break
            if tok.kind == 'LOCAL':
                self.ts.next()
                self.ts.expect('=')
                self.parse_call(tok.text)
            elif tok.text == 'call':
                self.parse_call(None)
            else:
                self.ts.fail("'call' or 'ret'")
        self.ts.expect('}')

    def parse_declare(self):
        self.ts.expect('declare')
        ret = self.parse_type()
        name = self.ts.expect_kind('GLOBAL', "an intrinsic name")
        self.ts.expect('(')
        types: List[str] = []
        if not self.ts.accept(')'):
            while True:
                types.append(self.parse_type())
                if self.ts.accept(')'):
                    break
                self.ts.expect(',')
        self.declared[name.text[1:]] = (ret, tuple(types))

    def parse_attributes(self):
        self.ts.expect('attributes')
        ref = self.ts.expect_kind('ATTRREF', "an attribute group id").text
        self.ts.expect('=')
        self.ts.expect('{')
        group: Dict[str, Optional[str]] = {}
        while not self.ts.accept('}'):
            key = unescape_string(self.ts.expect_kind('STRING', "an attribute or '}'").text[1:-1])
            value = None
            if self.ts.accept('='):
                value = unescape_string(self.ts.expect_kind('STRING', "an attribute value").text[1:-1])
            group[key] = value
        self.attr_groups[ref] = group

    def parse_syntax(self):
        while True:
            tok = self.ts.peek()
            if tok.kind == 'EOF':
                break
            if tok.text == 'source_filename':
                self.ts.next()
                self.ts.expect('=')
                self.module_name = self.ts.expect_kind('STRING', "a quoted file name").text[1:-1]
            elif tok.kind == 'LOCAL':
                self.ts.next()
                self.ts.expect('=')
                self.ts.expect('type')
                self.ts.expect('opaque')
                self.types.append(tok.text[1:])
            elif tok.kind == 'GLOBAL':
                self.parse_global_def()
            elif tok.text == 'define':
                self.parse_define()
            elif tok.text == 'declare':
                self.parse_declare()
            elif tok.text == 'attributes':
                self.parse_attributes()
            else:
                self.ts.fail("a top-level declaration")
        if self.entry_name is None:
            self.ts.fail("a function definition")

    # Semantics

    def attributes(self) -> ModuleAttributes:
        group = self.attr_groups.get(self.entry_attr or '#0', {})
        profile = group.get('qir_profiles')
        if profile != PULSE_PROFILE:
            raise ProfileMismatch(f"qir_profiles is {profile!r}, expected {PULSE_PROFILE!r}")

        def count(key: str) -> int:
            raw = group.get(key)
            if raw is None:
                self.notes.append(Diagnostic(Severity.WARNING, f"attribute '{key}' missing, assuming 0"))
                return 0
            try:
                return int(raw)
            except ValueError:
                raise ExchangeFormatError(f"attribute '{key}' must be an integer, got {raw!r}")

        known = {'entry_point', 'output_labeling_schema', 'qir_profiles', 'required_num_ports',
                 'required_num_qubits', 'required_num_results'}
        for key in group:
            if key not in known:
                self.notes.append(Diagnostic(Severity.NOTE, f"attribute '{key}' ignored"))
        return ModuleAttributes(
            entry_point='entry_point' in group,
            output_labeling_schema=group.get('output_labeling_schema') or "",
            qir_profiles=profile,
            required_num_ports=count('required_num_ports'),
            required_num_qubits=count('required_num_qubits'),
            required_num_results=count('required_num_results'),
        )

    def frames(self) -> Tuple[Dict[str, Frame], Dict[int, str], Dict[int, str]]:
        ports: Dict[int, str] = {}
        for name, values in self.globals.items():
            if name.startswith('port.'):
                if len(values) != 1:
                    raise ExchangeFormatError(f"@{name} must hold exactly one handle")
                ports[int(values[0])] = name[len('port.'):]
        frames: Dict[str, Frame] = {}
        by_handle: Dict[int, str] = {}
        for name, values in self.globals.items():
            if not name.startswith('frame.'):
                continue
            if len(values) != 5:
                raise ExchangeFormatError(f"@{name} must hold 5 values")
            fid = name[len('frame.'):]
            handle, port_handle, freq, phase, elapsed = values
            if int(port_handle) not in ports:
                raise UndeclaredGlobal(f"@{name} references undeclared port handle {int(port_handle)}")
            if int(handle) in by_handle:
                raise ExchangeFormatError(f"frame handle {int(handle)} declared twice")
            frames[fid] = Frame(fid, ports[int(port_handle)], freq, phase, int(elapsed))
            by_handle[int(handle)] = fid
        return frames, by_handle, ports

    def check_signature(self, name: str, ret: str, args: List[_Arg], tok: Token):
        if name not in self.declared:
            raise UndeclaredGlobal(f"{tok.line}:{tok.col}: call to undeclared function @{name}")
        if name not in INTRINSICS:
            raise UnknownIntrinsic(f"{tok.line}:{tok.col}: @{name} is not a pulse profile intrinsic")
        want_ret, want_args = INTRINSICS[name]
        if self.declared[name] != (want_ret, want_args):
            raise ArityError(f"@{name} declared with a signature different from {want_ret} ({', '.join(want_args)})")
        if len(args) != len(want_args):
            raise ArityError(f"{tok.line}:{tok.col}: @{name} takes {len(want_args)} argument(s), got {len(args)}")
        for k, (arg, ty) in enumerate(zip(args, want_args)):
            if arg.type != ty:
                raise ArityError(f"{tok.line}:{tok.col}: argument {k + 1} of @{name} must be {ty}, got {arg.type}")
        if ret != want_ret:
            raise ArityError(f"{tok.line}:{tok.col}: @{name} returns {want_ret}, not {ret}")

    def build(self) -> PulseModule:
        self.parse_syntax()
        attributes = self.attributes()
        frames, frame_by_handle, port_by_handle = self.frames()
        primary: Dict[str, str] = {}
        for fid, frame in frames.items():
            primary.setdefault(frame.port, fid)

        reserved = {n for n in self.globals if n.startswith(RESERVED_PREFIXES)}
        waveform_data = {n: v for n, v in self.globals.items() if n not in reserved}
        locals_: Dict[str, SampledWaveform] = {}
        globals_used: Dict[str, Tuple[complex, ...]] = {}
        instructions: List[PulseInstruction] = []

        def frame_of(arg: _Arg) -> str:
            if arg.kind != 'handle' or arg.value not in frame_by_handle:
                raise UndeclaredGlobal(f"{arg.token.line}:{arg.token.col}: unknown frame handle {arg.value}")
            return frame_by_handle[arg.value]

        def port_frame(arg: _Arg) -> str:
            if arg.kind != 'handle' or arg.value not in port_by_handle:
                raise UndeclaredGlobal(f"{arg.token.line}:{arg.token.col}: unknown port handle {arg.value}")
            port = port_by_handle[arg.value]
            if port not in primary:
                raise UndeclaredGlobal(f"port '{port}' has no frame")
            return primary[port]

        def number(arg: _Arg) -> float:
            if arg.kind != 'number':
                raise PulseSyntaxError(arg.token.line, arg.token.col, "a numeric literal", arg.token.text)
            return float(arg.value)

        def integer(arg: _Arg) -> int:
            if arg.kind != 'number' or not re.fullmatch(r'[-+]?[0-9]+', str(arg.value)):
                raise PulseSyntaxError(arg.token.line, arg.token.col, "an integer literal", arg.token.text)
            return int(arg.value)

        def handle(arg: _Arg) -> int:
            if arg.kind != 'handle':
                raise PulseSyntaxError(arg.token.line, arg.token.col, "an opaque handle", arg.token.text)
            return int(arg.value)

        def global_data(arg: _Arg, pool: Dict[str, List[float]]) -> Tuple[str, List[float]]:
            name = str(arg.value)[1:]
            if arg.kind != 'global' or name not in pool:
                raise UndeclaredGlobal(f"{arg.token.line}:{arg.token.col}: undeclared global {arg.value}")
            return name, pool[name]

        for target, ret, name, args, tok in self.calls:
            self.check_signature(name, ret, args, tok)
            if name == WAVEFORM:
                if target is None:
                    raise ExchangeFormatError(f"{tok.line}:{tok.col}: waveform result must be bound to a value")
                length = integer(args[0])
                gname, data = global_data(args[1], waveform_data)
                if len(data) != 2 * length:
                    raise ArityError(f"{tok.line}:{tok.col}: @{gname} holds {len(data)} values, "
                                     f"expected {2 * length}")
                w = SampledWaveform(tuple(complex(data[k], data[k + 1]) for k in range(0, len(data), 2)))
                locals_[target] = w
                globals_used.setdefault(gname, w.samples)
                continue
            if target is not None:
                raise ExchangeFormatError(f"{tok.line}:{tok.col}: @{name} returns void")
            if name == PLAY:
                wname = str(args[1].value)
                if args[1].kind != 'local' or wname not in locals_:
                    raise UndeclaredGlobal(f"{args[1].token.line}:{args[1].token.col}: undefined value {wname}")
                instructions.append(Play(port_frame(args[0]), locals_[wname]))
            elif name == FRAME_CHANGE:
                fid = port_frame(args[0])
                instructions.append(SetFrequency(fid, number(args[1])))
                instructions.append(SetPhase(fid, number(args[2])))
            elif name in _FRAME_OP_BY_NAME:
                cls, _ = _FRAME_OP_BY_NAME[name]
                instructions.append(cls(frame_of(args[0]), number(args[1])))
            elif name == DELAY:
                instructions.append(Delay(frame_of(args[0]), integer(args[1])))
            elif name == BARRIER:
                n = integer(args[0])
                gname, data = global_data(args[1], {k: v for k, v in self.globals.items()
                                                    if k.startswith('barrier.')})
                if len(data) != n:
                    raise ArityError(f"{tok.line}:{tok.col}: @{gname} holds {len(data)} frames, expected {n}")
                fids = []
                for h in data:
                    if int(h) not in frame_by_handle:
                        raise UndeclaredGlobal(f"@{gname} references unknown frame handle {int(h)}")
                    fids.append(frame_by_handle[int(h)])
                instructions.append(Barrier(frozenset(fids)))
            elif name == CAPTURE:
                instructions.append(Capture(frame_of(args[0]), handle(args[1])))
            elif name == MZ:
                instructions.append(Measure(handle(args[0]), handle(args[1])))

        called = {c[2] for c in self.calls}
        for name in self.declared:
            if name not in INTRINSICS and name not in called:
                self.notes.append(Diagnostic(Severity.NOTE, f"unknown intrinsic @{name} declared but never called"))

        waveform_globals = tuple((n, globals_used[n]) for n in waveform_data if n in globals_used)
        return PulseModule(
            module_name=self.module_name,
            entry_name=self.entry_name,
            attributes=attributes,
            schedule=Schedule(frames, tuple(instructions)),
            waveform_globals=waveform_globals,
            notes=tuple(self.notes),
        )


def parse(text: str) -> PulseModule:
    m = PulseParser(text).build()
    logger.debug("Pulse module parsed", module=m.module_name, instructions=len(m.schedule.instructions),
                 notes=len(m.notes))
    return m


def validate_profile(m: PulseModule) -> List[Diagnostic]:
    """Attribute and usage consistency checks; findings only, never raises."""
    diagnostics: List[Diagnostic] = []
    a = m.attributes
    s = m.schedule
    if not a.entry_point:
        diagnostics.append(error("missing \"entry_point\" attribute"))
    if a.qir_profiles != PULSE_PROFILE:
        diagnostics.append(error(f"qir_profiles is {a.qir_profiles!r}, expected {PULSE_PROFILE!r}"))

    ports = s.ports_used()
    if a.required_num_ports != len(ports):
        diagnostics.append(error(f"required_num_ports is {a.required_num_ports} but {len(ports)} port(s) are used"))
    sites = [i.site for i in s.instructions if isinstance(i, Measure)]
    if a.required_num_qubits < max(sites, default=-1) + 1:
        diagnostics.append(error(f"required_num_qubits is {a.required_num_qubits} but qubit {max(sites)} is used"))

    results = s.results()
    if a.required_num_results < max(results, default=-1) + 1:
        diagnostics.append(error(f"required_num_results is {a.required_num_results} "
                                 f"but result {max(results)} is written"))
    if len(set(results)) != len(results):
        diagnostics.append(error("a result index is written more than once"))
    if set(results) != set(range(len(set(results)))):
        diagnostics.append(error(f"result indices {sorted(set(results))} are not dense from 0"))
    return diagnostics
