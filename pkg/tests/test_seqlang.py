import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmrzeno.propagate import PulseSpec
from nmrzeno.seqlang import (
    Acquire,
    AcquireStmt,
    CompileError,
    CrushStmt,
    Delay,
    DelayStmt,
    EventTimeline,
    LoopStmt,
    ParseError,
    Pulse,
    PulseStmt,
    Quantity,
    SequenceAst,
    check_stroboscopic,
    compile_ast,
    format_ast,
    load,
    parse,
    propagator_is_identity,
    tokenize,
    unrolled_count,
)
from nmrzeno.spinsys import formate_system, single_spin

DATA = Path(__file__).parent / "data"
VALID = sorted((DATA / "valid").glob("*.seq"))
INVALID = sorted((DATA / "invalid").glob("*.seq"))


def test_corpus_sizes():
    assert len(VALID) >= 20 and len(INVALID) >= 10


@pytest.mark.parametrize("path", VALID, ids=lambda p: p.stem)
def test_valid_round_trip(path):
    ast = parse(path.read_text(), str(path))
    text = format_ast(ast)
    again = parse(text)
    assert again == ast
    assert format_ast(again) == text


@pytest.mark.parametrize("path", INVALID, ids=lambda p: p.stem)
def test_invalid_positioned(path):
    text = path.read_text()
    line, col = (int(v) for v in text.splitlines()[0].split()[-1].split(":"))
    with pytest.raises(ParseError) as info:
        parse(text, str(path))
    err = info.value
    assert (err.line, err.col) == (line + 1, col)
    assert str(err).startswith(f"{path}:{line + 1}:{col}: ")


def test_parse_examples():
    ast = parse("pulse H flip=90deg phase=x")
    (p,) = ast.statements
    assert isinstance(p, PulseStmt)
    assert p.flip.si == pytest.approx(math.pi / 2) and p.phase_rad == 0.0
    (loop,) = parse("loop 3 { delay 1ms }").statements
    assert isinstance(loop, LoopStmt) and loop.count == 3 and len(loop.body) == 1
    with pytest.raises(ParseError) as info:
        parse("delay 1 parsec")
    assert info.value.line == 1 and "unit" in str(info.value)


def test_units_converted():
    (d,) = parse("delay 250us gradient=5G/cm").statements
    assert d.duration.si == pytest.approx(250e-6) and d.gradient.si == pytest.approx(0.05)
    with pytest.raises(ParseError):
        parse("delay 2mT/m")
    assert Quantity(180, "deg").si == pytest.approx(math.pi)


def test_positions_excluded_from_equality():
    assert parse("pulse H flip=1deg") == parse("\n\n   pulse   H flip=1deg")


def test_tokenize_positions():
    toks = tokenize("pulse H\n  flip=2rad")
    flip = [t for t in toks if t.text == "flip"][0]
    assert (flip.line, flip.col) == (2, 3)
    number = [t for t in toks if t.kind == "number"][0]
    assert number.unit == "rad" and number.unit_col == 9


def test_compile_examples():
    one = single_spin()
    tl = load("loop 400 { pulse H flip=1deg; delay 1ms }\nacquire H", one)
    assert len(tl.events) == 801
    assert tl.total_duration == pytest.approx(0.4)
    assert isinstance(tl.acquire, Acquire)
    tl = load("loop 0 { pulse H flip=1deg }\nacquire H", one)
    assert tl.events == (Acquire(0, "z"),)
    with pytest.raises(ParseError):
        parse("acquire H\nacquire H")
    ast = SequenceAst((AcquireStmt("H"), AcquireStmt("H")))
    with pytest.raises(CompileError):
        compile_ast(ast, one)
    with pytest.raises(CompileError):
        load("pulse H flip=1deg", one)
    with pytest.raises(CompileError):
        compile_ast(SequenceAst((AcquireStmt("H"), DelayStmt(Quantity(1, "ms")))), one)
    with pytest.raises(CompileError):
        load("pulse N flip=1deg; acquire H", one)


def test_compile_resolves_labels_and_gradients():
    tl = load("pulse H flip=90deg phase=y\ndelay 1ms gradient=0.1T/m\ncrush C\nacquire C op=x", formate_system())
    p, d, c, a = tl.events
    assert p == Pulse(PulseSpec(1, math.pi / 2, math.pi / 2))
    assert d.gradient.strength == pytest.approx(0.1) and d.gradient.duration == pytest.approx(1e-3)
    assert c.target == 0 and a == Acquire(0, "x")


def test_compile_depth_limit():
    stmt = AcquireStmt("H")
    body = (PulseStmt("H", Quantity(1, "deg")),)
    for _ in range(17):
        body = (LoopStmt(1, body),)
    with pytest.raises(CompileError):
        compile_ast(SequenceAst(body + (stmt,)), single_spin())


_stmt = st.deferred(
    lambda: st.one_of(
        st.builds(
            PulseStmt,
            st.sampled_from(["H", "C"]),
            st.builds(Quantity, st.floats(0, 720, allow_nan=False), st.sampled_from(["deg", "rad"])),
            st.one_of(
                st.sampled_from(["x", "y", "-x", "-y"]),
                st.builds(Quantity, st.floats(-7, 7, allow_nan=False), st.just("rad")),
            ),
        ),
        st.builds(
            DelayStmt,
            st.builds(Quantity, st.floats(0, 1e3, allow_nan=False), st.sampled_from(["s", "ms", "us"])),
            st.one_of(
                st.none(),
                st.builds(Quantity, st.floats(-1e3, 1e3, allow_nan=False), st.sampled_from(["T/m", "mT/m", "G/cm"])),
            ),
        ),
        st.builds(CrushStmt, st.sampled_from(["all", "H", "C"])),
        st.builds(LoopStmt, st.integers(0, 5), st.lists(_stmt, max_size=3).map(tuple)),
    )
)


@settings(max_examples=200, deadline=None)
@given(st.lists(_stmt, max_size=6), st.sampled_from(["x", "y", "z"]))
def test_round_trip_property(stmts, op):
    ast = SequenceAst(tuple(stmts) + (AcquireStmt("H", op),))
    assert parse(format_ast(ast)) == ast


@settings(max_examples=100, deadline=None)
@given(st.lists(_stmt, max_size=5))
def test_unrolled_count_matches_compile(stmts):
    ast = SequenceAst(tuple(stmts) + (AcquireStmt("H"),))
    tl = compile_ast(ast, formate_system())
    assert len(tl.events) == unrolled_count(ast)


def _window(duration):
    return EventTimeline((Pulse(PulseSpec(0, 1.0)), Delay(duration), Pulse(PulseSpec(1, 1.0)), Acquire(0)), duration)


def test_stroboscopic_examples():
    system = formate_system(195.0)
    assert check_stroboscopic(_window(1 / 195.0), system).ok
    report = check_stroboscopic(_window(1 / (2 * 195.0)), system)
    assert not report.ok and len(report.flagged) == 1
    assert check_stroboscopic(_window(3 / 195.0), system).ok
    assert propagator_is_identity(system, 1 / 195.0)
    assert propagator_is_identity(system, 3 / 195.0)
    assert not propagator_is_identity(system, 1 / 390.0)


def test_stroboscopic_merges_adjacent_delays():
    system = formate_system(195.0)
    tl = EventTimeline((Delay(0.5 / 195), Delay(0.5 / 195), Pulse(PulseSpec(0, 1.0)), Acquire(0)), 1 / 195)
    report = check_stroboscopic(tl, system)
    assert len(report.windows) == 1 and report.ok
    assert np.isclose(report.windows[0].duration, 1 / 195)
