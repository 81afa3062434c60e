"""Light-pattern DSL: parsing and deterministic evaluation into 21-pixel frames.

The display is a "U" of three 7-pixel strips around the vehicle; frame indices
run left strip rear-to-front (0..6), front strip left-to-right (7..13), right
strip front-to-rear (14..20).

Grammar::

    program   := "pattern" string "{" param* "duration" int "ms" layer+ "}"
    param     := "param" "color" ident "=" hexcolor
    layer     := "layer" primitive
    primitive := solid(color) | blink(color, period_ms, duty)
               | pulse(color, period_ms, min, max)
               | sweep(color, left|right, width_px, period_ms)
               | segment([lo..hi], color) | off

Colors are #RRGGBB literals or param names.  A "#" that does not form a
color literal starts a line comment.  Layers composite bottom-to-top by overwriting the pixels they color; pixels
nothing colors stay black.  Evaluation is a pure function of
(program, t_ms, bindings, brightness).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

U_PIXEL_COUNT = 21
LEFT_STRIP = range(0, 7)     # rear -> front
FRONT_STRIP = range(7, 14)   # left -> right
RIGHT_STRIP = range(14, 21)  # front -> rear

RGB = tuple[int, int, int]


class PatternError(Exception):
    """Parse or validation failure, with source position when known."""

    def __init__(self, msg: str, line: Optional[int] = None, col: Optional[int] = None):
        self.line = line
        self.col = col
        if line is not None:
            msg = f"{msg} (line {line}, column {col})"
        super().__init__(msg)


class UnknownParamError(Exception):
    pass


@dataclass(frozen=True)
class Frame:
    """One complete 21-pixel RGB state of the U display."""

    pixels: tuple[RGB, ...]

    def __post_init__(self):
        if len(self.pixels) != U_PIXEL_COUNT:
            raise ValueError(f"frame must have exactly {U_PIXEL_COUNT} pixels")

    @staticmethod
    def black() -> "Frame":
        return Frame(((0, 0, 0),) * U_PIXEL_COUNT)

    def to_bytes(self) -> bytes:
        return bytes(ch for px in self.pixels for ch in px)

    @staticmethod
    def from_bytes(data: bytes) -> "Frame":
        if len(data) != U_PIXEL_COUNT * 3:
            raise ValueError(f"frame payload must be {U_PIXEL_COUNT * 3} bytes")
        return Frame(tuple(
            (data[i], data[i + 1], data[i + 2]) for i in range(0, len(data), 3)))

    def to_hex(self) -> str:
        return self.to_bytes().hex().upper()

    @staticmethod
    def from_hex(text: str) -> "Frame":
        return Frame.from_bytes(bytes.fromhex(text))

    def triples(self) -> list[str]:
        """Pixels as 21 RRGGBB hex triples (the golden fixture format)."""
        return [f"{r:02X}{g:02X}{b:02X}" for r, g, b in self.pixels]


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class ColorExpr:
    """Either a #RRGGBB literal or a reference to a color param."""

    literal: Optional[RGB] = None
    param: Optional[str] = None

    def resolve(self, bindings: Mapping[str, RGB]) -> RGB:
        if self.literal is not None:
            return self.literal
        assert self.param is not None
        return bindings[self.param]

    def source(self) -> str:
        if self.literal is not None:
            r, g, b = self.literal
            return f"#{r:02X}{g:02X}{b:02X}"
        return str(self.param)


@dataclass(frozen=True)
class Solid:
    color: ColorExpr


@dataclass(frozen=True)
class Blink:
    color: ColorExpr
    period_ms: int
    duty: float


@dataclass(frozen=True)
class Pulse:
    color: ColorExpr
    period_ms: int
    low: float
    high: float


@dataclass(frozen=True)
class Sweep:
    color: ColorExpr
    direction: str  # left | right: which end of the U-path the band starts from
    width_px: int
    period_ms: int


@dataclass(frozen=True)
class Segment:
    lo: int
    hi: int
    color: ColorExpr


@dataclass(frozen=True)
class Off:
    pass


Primitive = Union[Solid, Blink, Pulse, Sweep, Segment, Off]


@dataclass(frozen=True)
class PatternProgram:
    id: str
    name: str
    params: tuple[tuple[str, RGB], ...]
    duration_ms: int
    layers: tuple[Primitive, ...]

    def defaults(self) -> dict[str, RGB]:
        return dict(self.params)


# ---------------------------------------------------------------------------
# Lexer / parser

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[0-9a-fA-F]{6}(?![0-9a-zA-Z_])|\#[^\n]*)
  | (?P<newline>\n)
  | (?P<string>"[^"\n]*")
  | (?P<number>\d+\.\d+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<dots>\.\.)
  | (?P<sym>[{}()\[\],=])
""", re.VERBOSE)

_HEX_RE = re.compile(r"\A#[0-9a-fA-F]{6}\Z")


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _lex(source: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise PatternError(f"unexpected character {source[pos]!r}", line, col)
        kind = m.lastgroup
        text = m.group()
        assert kind is not None
        if kind == "newline":
            line += 1
            col = 1
        else:
            if kind == "comment" and _HEX_RE.match(text):
                tokens.append(_Token("hexcolor", text, line, col))
            elif kind not in ("ws", "comment"):
                tokens.append(_Token(kind, text, line, col))
            col += len(text)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def fail(self, msg: str, tok: Optional[_Token] = None):
        tok = tok or self.peek()
        raise PatternError(msg, tok.line, tok.col)

    def expect(self, kind: str, text: Optional[str] = None) -> _Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text or kind
            got = tok.text or "end of input"
            self.fail(f"expected {want!r}, got {got!r}")
        return self.next()

    def expect_keyword(self, word: str) -> _Token:
        return self.expect("ident", word)

    # -- grammar ------------------------------------------------------------

    def program(self, pattern_id: Optional[str]) -> PatternProgram:
        self.expect_keyword("pattern")
        name_tok = self.expect("string")
        name = name_tok.text[1:-1]
        self.expect("sym", "{")
        params: list[tuple[str, RGB]] = []
        while self.peek().kind == "ident" and self.peek().text == "param":
            params.append(self.param(params))
        if not (self.peek().kind == "ident" and self.peek().text == "duration"):
            self.fail("missing duration")
        self.next()
        dur_tok = self.expect("number")
        if "." in dur_tok.text:
            self.fail("duration must be an integer millisecond count", dur_tok)
        duration = int(dur_tok.text)
        self.expect_keyword("ms")
        if duration < 1:
            self.fail("duration must be >= 1 ms", dur_tok)
        layers: list[Primitive] = []
        param_names = {n for n, _ in params}
        while self.peek().kind == "ident" and self.peek().text == "layer":
            self.next()
            layers.append(self.primitive(param_names))
        if not layers:
            self.fail("pattern needs at least one layer")
        self.expect("sym", "}")
        self.expect("eof")
        slug = re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_") or "pattern"
        return PatternProgram(
            id=pattern_id or slug,
            name=name,
            params=tuple(params),
            duration_ms=duration,
            layers=tuple(layers),
        )

    def param(self, seen: list[tuple[str, RGB]]) -> tuple[str, RGB]:
        self.expect_keyword("param")
        self.expect_keyword("color")
        name_tok = self.expect("ident")
        if any(name_tok.text == n for n, _ in seen):
            self.fail(f"duplicate param {name_tok.text!r}", name_tok)
        self.expect("sym", "=")
        color_tok = self.expect("hexcolor")
        return (name_tok.text, _parse_hex(color_tok.text))

    def color(self, param_names: set[str]) -> ColorExpr:
        tok = self.peek()
        if tok.kind == "hexcolor":
            self.next()
            return ColorExpr(literal=_parse_hex(tok.text))
        if tok.kind == "ident":
            if tok.text not in param_names:
                self.fail(f"unknown color param {tok.text!r}", tok)
            self.next()
            return ColorExpr(param=tok.text)
        self.fail("expected a color (#RRGGBB or param name)")
        raise AssertionError

    def number(self, *, integer: bool = False) -> float:
        tok = self.expect("number")
        if integer and "." in tok.text:
            self.fail("expected an integer", tok)
        return float(tok.text)

    def primitive(self, param_names: set[str]) -> Primitive:
        tok = self.expect("ident")
        name = tok.text
        if name == "off":
            if self.peek().kind == "sym" and self.peek().text == "(":
                self.next()
                self.expect("sym", ")")
            return Off()
        self.expect("sym", "(")
        prim: Primitive
        if name == "solid":
            prim = Solid(self.color(param_names))
        elif name == "blink":
            color = self.color(param_names)
            self.expect("sym", ",")
            period = int(self.number(integer=True))
            self.expect("sym", ",")
            duty_tok = self.peek()
            duty = self.number()
            if not 0.0 < duty <= 1.0:
                self.fail("blink duty must be in (0, 1]", duty_tok)
            if period < 1:
                self.fail("blink period must be >= 1 ms", tok)
            prim = Blink(color, period, duty)
        elif name == "pulse":
            color = self.color(param_names)
            self.expect("sym", ",")
            period = int(self.number(integer=True))
            self.expect("sym", ",")
            low_tok = self.peek()
            low = self.number()
            self.expect("sym", ",")
            high = self.number()
            if period < 1:
                self.fail("pulse period must be >= 1 ms", tok)
            if not (0.0 <= low <= 1.0 and 0.0 <= high <= 1.0 and low <= high):
                self.fail("pulse levels must satisfy 0 <= min <= max <= 1", low_tok)
            prim = Pulse(color, period, low, high)
        elif name == "sweep":
            color = self.color(param_names)
            self.expect("sym", ",")
            dir_tok = self.expect("ident")
            if dir_tok.text not in ("left", "right"):
                self.fail("sweep direction must be left or right", dir_tok)
            self.expect("sym", ",")
            width = int(self.number(integer=True))
            self.expect("sym", ",")
            period = int(self.number(integer=True))
            if width < 1:
                self.fail("sweep width must be >= 1 pixel", tok)
            if period < 1:
                self.fail("sweep period must be >= 1 ms", tok)
            prim = Sweep(color, dir_tok.text, width, period)
        elif name == "segment":
            self.expect("sym", "[")
            lo_tok = self.peek()
            lo = int(self.number(integer=True))
            self.expect("dots")
            hi_tok = self.peek()
            hi = int(self.number(integer=True))
            self.expect("sym", "]")
            self.expect("sym", ",")
            color = self.color(param_names)
            if not (0 <= lo <= hi < U_PIXEL_COUNT):
                bad = hi_tok if hi >= U_PIXEL_COUNT or hi < lo else lo_tok
                self.fail(
                    f"pixel out of range: segment [{lo}..{hi}] must lie in "
                    f"[0..{U_PIXEL_COUNT - 1}]", bad)
            prim = Segment(lo, hi, color)
        else:
            self.fail(f"unknown primitive {name!r}", tok)
            raise AssertionError
        self.expect("sym", ")")
        return prim


def _parse_hex(text: str) -> RGB:
    return (int(text[1:3], 16), int(text[3:5], 16), int(text[5:7], 16))


def parse(source: str, pattern_id: Optional[str] = None) -> PatternProgram:
    """Parse DSL text into a validated PatternProgram.

    pattern_id overrides the id derived from the pattern name (loaders use the
    file stem so ids stay stable when names are edited).
    """
    return _Parser(_lex(source)).program(pattern_id)


def pretty(program: PatternProgram) -> str:
    """Canonical source text; reparsing yields a structurally identical program."""
    lines = [f'pattern "{program.name}" {{']
    for name, (r, g, b) in program.params:
        lines.append(f"  param color {name} = #{r:02X}{g:02X}{b:02X}")
    lines.append(f"  duration {program.duration_ms}ms")
    for layer in program.layers:
        lines.append(f"  layer {_primitive_source(layer)}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _fmt_num(x: float) -> str:
    return repr(int(x)) if float(x).is_integer() else repr(x)


def _primitive_source(p: Primitive) -> str:
    if isinstance(p, Solid):
        return f"solid({p.color.source()})"
    if isinstance(p, Blink):
        return f"blink({p.color.source()}, {p.period_ms}, {_fmt_num(p.duty)})"
    if isinstance(p, Pulse):
        return (f"pulse({p.color.source()}, {p.period_ms}, "
                f"{_fmt_num(p.low)}, {_fmt_num(p.high)})")
    if isinstance(p, Sweep):
        return f"sweep({p.color.source()}, {p.direction}, {p.width_px}, {p.period_ms})"
    if isinstance(p, Segment):
        return f"segment([{p.lo}..{p.hi}], {p.color.source()})"
    if isinstance(p, Off):
        return "off"
    raise TypeError(f"unknown primitive {p!r}")


# ---------------------------------------------------------------------------
# Evaluation


def bind_colors(program: PatternProgram,
                edits: Optional[Mapping[str, RGB]] = None) -> dict[str, RGB]:
    """Merge color edits over the program's defaults; unknown names raise."""
    bindings = program.defaults()
    for name, rgb in (edits or {}).items():
        if name not in bindings:
            raise UnknownParamError(f"unknown color param {name!r}")
        bindings[name] = (int(rgb[0]), int(rgb[1]), int(rgb[2]))
    return bindings


def _triangle(u: float) -> float:
    return 2.0 * u if u < 0.5 else 2.0 - 2.0 * u


def evaluate(program: PatternProgram, t_ms: int,
             bindings: Optional[Mapping[str, RGB]] = None,
             brightness: float = 1.0) -> Frame:
    """Evaluate the program at time t_ms into a Frame.

    Pure: identical arguments give byte-identical frames.  The program phase
    is t_ms mod duration_ms; primitive periods run inside that phase.  After
    compositing, every channel is scaled by brightness, rounded
    half-away-from-zero and clamped to 0..255.
    """
    resolved = bind_colors(program, bindings)
    phase = t_ms % program.duration_ms
    # Composite in float; None = transparent (black below the bottom layer).
    canvas: list[Optional[tuple[float, float, float]]] = [None] * U_PIXEL_COUNT

    def paint(indices, rgb, factor: float = 1.0):
        value = (rgb[0] * factor, rgb[1] * factor, rgb[2] * factor)
        for i in indices:
            canvas[i] = value

    for layer in program.layers:
        if isinstance(layer, Off):
            continue
        if isinstance(layer, Solid):
            paint(range(U_PIXEL_COUNT), layer.color.resolve(resolved))
        elif isinstance(layer, Blink):
            p = phase % layer.period_ms
            if p < layer.duty * layer.period_ms:
                paint(range(U_PIXEL_COUNT), layer.color.resolve(resolved))
        elif isinstance(layer, Pulse):
            p = phase % layer.period_ms
            factor = layer.low + (layer.high - layer.low) * _triangle(p / layer.period_ms)
            paint(range(U_PIXEL_COUNT), layer.color.resolve(resolved), factor)
        elif isinstance(layer, Sweep):
            p = phase % layer.period_ms
            pos = (U_PIXEL_COUNT * p) // layer.period_ms
            if layer.direction == "left":
                indices = [i for i in range(pos, pos + layer.width_px)
                           if i < U_PIXEL_COUNT]
            else:
                indices = [i for i in range(
                    U_PIXEL_COUNT - 1 - pos,
                    U_PIXEL_COUNT - 1 - pos - layer.width_px, -1) if i >= 0]
            paint(indices, layer.color.resolve(resolved))
        elif isinstance(layer, Segment):
            paint(range(layer.lo, layer.hi + 1), layer.color.resolve(resolved))
        else:
            raise TypeError(f"unknown primitive {layer!r}")

    def quantize(c: float) -> int:
        return min(255, max(0, math.floor(c * brightness + 0.5)))

    pixels = tuple(
        (0, 0, 0) if px is None else (quantize(px[0]), quantize(px[1]), quantize(px[2]))
        for px in canvas
    )
    return Frame(pixels)
