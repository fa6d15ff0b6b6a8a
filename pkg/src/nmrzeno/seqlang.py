"""A small line-oriented pulse-program language.

Example::

    # DANTE train with crushing gradients
    loop 100 {
      pulse H flip=1deg phase=x
      delay 1ms gradient=0.3T/m
    }
    crush all
    acquire H op=z

Statements end at a newline or ``;``. Every number carries a unit: angles in
``deg``/``rad``, durations in ``s``/``ms``/``us``, gradients in ``T/m``/``mT/m``/``G/cm``.
``parse`` builds an AST that keeps literals as written, ``format_ast`` prints
the canonical form and ``compile_ast`` unrolls loops into an ``EventTimeline``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .ensemble import GradientEvent
from .propagate import PulseSpec
from .spinsys import SpinSystem, hamiltonian_diagonal

MAX_DEPTH = 16

ANGLE_UNITS = {"deg": None, "rad": 1.0}
TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6}
GRADIENT_UNITS = {"T/m": 1.0, "mT/m": 1e-3, "G/cm": 1e-2}
PHASE_NAMES = {"x": 0.0, "y": math.pi / 2, "-x": math.pi, "-y": 3 * math.pi / 2}
OPERATORS = ("x", "y", "z")


class ParseError(Exception):
    def __init__(self, message, line, col, filename="<string>"):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col
        self.filename = filename

    def __str__(self):
        return f"{self.filename}:{self.line}:{self.col}: {self.message}"


class CompileError(Exception):
    pass


# --- AST ------------------------------------------------------------------


@dataclass(frozen=True)
class Quantity:
    value: float
    unit: str

    @property
    def si(self) -> float:
        if self.unit == "deg":
            return math.radians(self.value)
        for table in (ANGLE_UNITS, TIME_UNITS, GRADIENT_UNITS):
            if self.unit in table:
                return self.value * table[self.unit]
        raise ValueError(f"unknown unit {self.unit!r}")


@dataclass(frozen=True)
class PulseStmt:
    spin: str
    flip: Quantity
    phase: Union[str, Quantity] = "x"
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)

    @property
    def phase_rad(self) -> float:
        return PHASE_NAMES[self.phase] if isinstance(self.phase, str) else self.phase.si


@dataclass(frozen=True)
class DelayStmt:
    duration: Quantity
    gradient: Optional[Quantity] = None
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class CrushStmt:
    spin: str = "all"
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class AcquireStmt:
    spin: str
    op: str = "z"
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class LoopStmt:
    count: int
    body: tuple
    line: int = field(default=0, compare=False)
    col: int = field(default=0, compare=False)


@dataclass(frozen=True)
class SequenceAst:
    statements: tuple


# --- tokens ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<number>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)(?P<unit>[A-Za-z]+(?:/[A-Za-z]+)?)?
  | (?P<word>-?[A-Za-z_][A-Za-z0-9_]*(?:/[A-Za-z]+)?)
  | (?P<punct>[{};=])
    """,
    re.VERBOSE,
)


@dataclass
class Token:
    kind: str  # number, word, punct, newline, eof
    text: str
    line: int
    col: int
    unit: Optional[str] = None
    unit_col: int = 0


def tokenize(text: str, filename: str = "<string>") -> list:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col, filename)
        kind = m.lastgroup if m.lastgroup != "unit" else "number"
        if kind == "newline":
            tokens.append(Token("newline", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind == "number":
            unit = m.group("unit")
            unit_col = m.start("unit") - line_start + 1 if unit else 0
            tokens.append(Token("number", m.group("number"), line, col, unit, unit_col))
        elif kind in ("word", "punct"):
            tokens.append(Token(kind, m.group(kind), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# --- parser ---------------------------------------------------------------


class _Parser:
    def __init__(self, text, filename):
        self.filename = filename
        self.tokens = tokenize(text, filename)
        self.pos = 0
        self.acquire_seen = None

    def peek(self, k=0) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def error(self, message, tok: Token, col=None):
        raise ParseError(message, tok.line, col or tok.col, self.filename)

    def describe(self, tok):
        return {"eof": "end of input", "newline": "end of line"}.get(tok.kind, repr(tok.text))

    def expect_word(self, what) -> Token:
        tok = self.next()
        if tok.kind != "word":
            self.error(f"expected {what}, found {self.describe(tok)}", tok)
        return tok

    def skip_separators(self):
        while self.peek().kind == "newline" or (self.peek().kind == "punct" and self.peek().text == ";"):
            self.next()

    def end_statement(self):
        tok = self.peek()
        if tok.kind in ("newline", "eof") or (tok.kind == "punct" and tok.text in ";}"):
            return
        self.error(f"expected end of statement, found {self.describe(tok)}", tok)

    def parse(self) -> SequenceAst:
        body = self.block(depth=0, opener=None)
        return SequenceAst(tuple(body))

    def block(self, depth, opener):
        out = []
        while True:
            self.skip_separators()
            tok = self.peek()
            if tok.kind == "eof":
                if opener is not None:
                    self.error("unbalanced braces: '{' is never closed", opener)
                return out
            if tok.kind == "punct" and tok.text == "}":
                if opener is None:
                    self.error("unbalanced braces: unexpected '}'", tok)
                self.next()
                return out
            out.append(self.statement(depth))
            self.end_statement()

    def statement(self, depth):
        tok = self.expect_word("a statement keyword")
        handler = {
            "pulse": self.pulse,
            "delay": self.delay,
            "crush": self.crush,
            "acquire": self.acquire,
            "loop": self.loop,
        }.get(tok.text)
        if handler is None:
            self.error(
                f"unknown statement {tok.text!r}; expected pulse, delay, crush, acquire or loop", tok
            )
        return handler(tok, depth)

    def quantity(self, units, what) -> Quantity:
        tok = self.next()
        if tok.kind != "number":
            self.error(f"expected {what}, found {self.describe(tok)}", tok)
        value = float(tok.text)
        if not math.isfinite(value):
            self.error("number out of range", tok)
        unit, unit_col = tok.unit, tok.unit_col
        if unit is None:
            nxt = self.peek()
            after = self.peek(1)
            if nxt.kind == "word" and not (after.kind == "punct" and after.text == "="):
                self.next()
                unit, unit_col = nxt.text, nxt.col
            else:
                self.error(f"missing unit for {what}; expected one of {', '.join(units)}", tok)
        if unit not in units:
            raise ParseError(
                f"unknown unit {unit!r} for {what}; expected one of {', '.join(units)}",
                tok.line, unit_col, self.filename,
            )
        return Quantity(value, unit)

    def attributes(self, allowed):
        attrs = {}
        while self.peek().kind == "word" and self.peek(1).kind == "punct" and self.peek(1).text == "=":
            key = self.next()
            if key.text not in allowed:
                self.error(f"unknown attribute {key.text!r}; expected {', '.join(allowed)}", key)
            if key.text in attrs:
                self.error(f"duplicate attribute {key.text!r}", key)
            self.next()
            attrs[key.text] = allowed[key.text](key)
        return attrs

    def pulse(self, kw, depth):
        spin = self.expect_word("a spin label")

        def phase(key):
            tok = self.peek()
            if tok.kind == "word":
                self.next()
                if tok.text not in PHASE_NAMES:
                    self.error(f"unknown phase {tok.text!r}; expected x, y, -x, -y or an angle", tok)
                return tok.text
            return self.quantity(ANGLE_UNITS, "a phase angle")

        attrs = self.attributes({"flip": lambda k: self.quantity(ANGLE_UNITS, "a flip angle"), "phase": phase})
        if "flip" not in attrs:
            self.error("pulse needs flip=<angle>", self.peek())
        return PulseStmt(spin.text, attrs["flip"], attrs.get("phase", "x"), kw.line, kw.col)

    def delay(self, kw, depth):
        duration = self.quantity(TIME_UNITS, "a duration")
        if duration.value < 0:
            self.error("delay duration must be non-negative", kw)
        attrs = self.attributes({"gradient": lambda k: self.quantity(GRADIENT_UNITS, "a gradient strength")})
        return DelayStmt(duration, attrs.get("gradient"), kw.line, kw.col)

    def crush(self, kw, depth):
        if self.peek().kind == "word":
            return CrushStmt(self.next().text, kw.line, kw.col)
        return CrushStmt("all", kw.line, kw.col)

    def acquire(self, kw, depth):
        if self.acquire_seen is not None:
            self.error(f"duplicate acquire (first at line {self.acquire_seen.line})", kw)
        self.acquire_seen = kw
        spin = self.expect_word("a spin label")

        def op(key):
            tok = self.expect_word("an operator axis")
            if tok.text not in OPERATORS:
                self.error(f"unknown operator {tok.text!r}; expected x, y or z", tok)
            return tok.text

        attrs = self.attributes({"op": op})
        return AcquireStmt(spin.text, attrs.get("op", "z"), kw.line, kw.col)

    def loop(self, kw, depth):
        tok = self.next()
        if tok.kind != "number" or tok.unit is not None or not re.fullmatch(r"\+?\d+", tok.text):
            self.error(f"expected a non-negative integer loop count, found {self.describe(tok)}", tok)
        if depth + 1 > MAX_DEPTH:
            self.error(f"loop nesting deeper than {MAX_DEPTH}", kw)
        brace = self.next()
        if not (brace.kind == "punct" and brace.text == "{"):
            self.error(f"expected '{{', found {self.describe(brace)}", brace)
        body = self.block(depth + 1, opener=brace)
        return LoopStmt(int(tok.text), tuple(body), kw.line, kw.col)


def parse(text: str, filename: str = "<string>") -> SequenceAst:
    """Parse pulse-program text; raises ParseError with a source position."""
    return _Parser(text, filename).parse()


# --- printer --------------------------------------------------------------


def format_number(x: float) -> str:
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def _fmt_q(q: Quantity) -> str:
    return f"{format_number(q.value)}{q.unit}"


def _format_stmt(stmt, indent, out):
    pad = "  " * indent
    if isinstance(stmt, PulseStmt):
        phase = stmt.phase if isinstance(stmt.phase, str) else _fmt_q(stmt.phase)
        out.append(f"{pad}pulse {stmt.spin} flip={_fmt_q(stmt.flip)} phase={phase}")
    elif isinstance(stmt, DelayStmt):
        grad = f" gradient={_fmt_q(stmt.gradient)}" if stmt.gradient is not None else ""
        out.append(f"{pad}delay {_fmt_q(stmt.duration)}{grad}")
    elif isinstance(stmt, CrushStmt):
        out.append(f"{pad}crush {stmt.spin}")
    elif isinstance(stmt, AcquireStmt):
        out.append(f"{pad}acquire {stmt.spin} op={stmt.op}")
    elif isinstance(stmt, LoopStmt):
        out.append(f"{pad}loop {stmt.count} {{")
        for s in stmt.body:
            _format_stmt(s, indent + 1, out)
        out.append(f"{pad}}}")
    else:
        raise TypeError(f"not a statement: {stmt!r}")


def format_ast(ast: SequenceAst) -> str:
    """Canonical text of an AST; ``parse(format_ast(a)) == a``."""
    out = []
    for stmt in ast.statements:
        _format_stmt(stmt, 0, out)
    return "\n".join(out) + "\n"


# --- timeline -------------------------------------------------------------


@dataclass(frozen=True)
class Pulse:
    spec: PulseSpec


@dataclass(frozen=True)
class Delay:
    duration: float
    gradient: Optional[GradientEvent] = None


@dataclass(frozen=True)
class Crush:
    target: Union[int, str] = "all"


@dataclass(frozen=True)
class Acquire:
    spin: int
    op: str = "z"


@dataclass(frozen=True)
class EventTimeline:
    events: tuple
    total_duration: float

    @property
    def acquire(self) -> Acquire:
        return self.events[-1]


def unrolled_count(ast) -> int:
    """Number of events ``compile_ast`` will produce, computed without unrolling."""
    stmts = ast.statements if isinstance(ast, SequenceAst) else ast
    total = 0
    for s in stmts:
        total += s.count * unrolled_count(s.body) if isinstance(s, LoopStmt) else 1
    return total


def _compile_stmts(stmts, system, depth, out):
    if depth > MAX_DEPTH:
        raise CompileError(f"loop nesting deeper than {MAX_DEPTH}")
    for s in stmts:
        if isinstance(s, LoopStmt):
            if s.count < 0:
                raise CompileError(f"line {s.line}: negative loop count")
            body = []
            _compile_stmts(s.body, system, depth + 1, body)
            out.extend(body * s.count)
            continue
        try:
            if isinstance(s, PulseStmt):
                out.append(Pulse(PulseSpec(system.index(s.spin), s.flip.si, s.phase_rad)))
            elif isinstance(s, DelayStmt):
                d = s.duration.si
                grad = GradientEvent(s.gradient.si, d) if s.gradient is not None and d > 0 else None
                out.append(Delay(d, grad))
            elif isinstance(s, CrushStmt):
                out.append(Crush("all" if s.spin == "all" else system.index(s.spin)))
            elif isinstance(s, AcquireStmt):
                out.append(Acquire(system.index(s.spin), s.op))
            else:
                raise CompileError(f"unknown statement {s!r}")
        except KeyError as exc:
            raise CompileError(f"line {s.line}: {exc.args[0]}") from None


def compile_ast(ast: SequenceAst, system: SpinSystem) -> EventTimeline:
    """Unroll loops, resolve spin labels and check for exactly one trailing acquire."""
    events = []
    _compile_stmts(ast.statements, system, 0, events)
    acquires = [k for k, e in enumerate(events) if isinstance(e, Acquire)]
    if not acquires:
        raise CompileError("sequence has no acquire statement")
    if len(acquires) > 1:
        raise CompileError(f"sequence acquires {len(acquires)} times; exactly one acquire is allowed")
    if acquires[0] != len(events) - 1:
        raise CompileError("acquire must be the last event")
    total = math.fsum(e.duration for e in events if isinstance(e, Delay))
    return EventTimeline(tuple(events), total)


def load(text: str, system: SpinSystem, filename: str = "<string>") -> EventTimeline:
    return compile_ast(parse(text, filename), system)


# --- stroboscopic check ---------------------------------------------------


def _is_integer(x: float, rtol: float = 1e-9) -> bool:
    return abs(x - round(x)) <= rtol * max(1.0, abs(x))


@dataclass(frozen=True)
class WindowCheck:
    start: int  # index of the first delay event in the window
    duration: float
    coupling_ok: bool  # window * J is an integer
    lines_ok: bool  # window * every line frequency is an integer
    frequencies: tuple

    @property
    def ok(self) -> bool:
        return self.coupling_ok and self.lines_ok


@dataclass(frozen=True)
class StroboscopicReport:
    windows: tuple

    @property
    def ok(self) -> bool:
        return all(w.ok for w in self.windows)

    @property
    def flagged(self) -> list:
        return [w for w in self.windows if not w.ok]


def line_frequencies(system: SpinSystem) -> list:
    """Rotating-frame frequencies (Hz) of every spin's lines: offset/2pi, split by +-J/2."""
    out = []
    for s in system.spins:
        nu = s.offset / (2 * math.pi)
        if system.nspins == 2:
            out.extend([nu + system.j / 2, nu - system.j / 2])
        else:
            out.append(nu)
    return out


def check_stroboscopic(timeline: EventTimeline, system: SpinSystem) -> StroboscopicReport:
    """Flag free-evolution windows between pulses that are not whole evolution periods.

    A window passes when window*J and window*nu are integers (relative tolerance
    1e-9) for every line frequency nu. Advisory only.
    """
    freqs = tuple(line_frequencies(system))
    windows = []
    start, length = None, 0.0
    for k, event in enumerate(timeline.events + (Pulse(PulseSpec(0, 0.0)),)):
        if isinstance(event, Delay):
            if start is None:
                start, length = k, 0.0
            length += event.duration
        elif isinstance(event, Pulse) and start is not None:
            if length > 0:
                cj = _is_integer(length * system.j) if system.nspins == 2 else True
                lines = all(_is_integer(length * f) for f in freqs)
                windows.append(WindowCheck(start, length, cj, lines, freqs))
            start = None
    return StroboscopicReport(tuple(windows))


def propagator_is_identity(system: SpinSystem, duration: float, atol: float = 1e-9) -> bool:
    """True when free evolution for ``duration`` is the identity up to a global phase."""
    phases = np.exp(-1j * hamiltonian_diagonal(system) * duration)
    return bool(np.max(np.abs(phases - phases[0])) < atol)
