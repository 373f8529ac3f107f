"""Text grammar for indoor scene descriptions.

One record per line:

    line   := ident "=" ctor "(" args ")"
    ident  := [A-Za-z_][A-Za-z0-9_]*
    ctor   := "Wall" | "Door" | "Window" | "Bbox"
    args   := value ("," value)*
    value  := number | bare-word

Whitespace around tokens is tolerated, lines end with LF or CRLF, blank
lines are skipped. Numbers serialize with fixed 6-decimal precision, so
canonical text round-trips byte-identically (values up to ~1e9).

Constructor signatures (argument order is part of the format):

    Wall(ax, ay, az, bx, by, bz, height, thickness)
    Door(wall_id, position_x, position_y, position_z, width, height)
    Window(wall_id, position_x, position_y, position_z, width, height)
    Bbox(class, position_x, position_y, position_z, angle_z,
         scale_x, scale_y, scale_z)

Bbox scales are full extents. Lengths/angles are interpreted per the
UnitConfig attached to the description (meters or centimeters, radians or
degrees); conversion to canonical meters/radians happens in to_boxes.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields

from .errors import ParseError
from .geometry import OrientedBox3

# category vocabulary used across the toolkit (case-insensitive on input)
CANONICAL_CATEGORIES = (
    "chair", "table", "computer", "curtain", "sink",
    "bed", "bookcase", "sofa", "toilet", "tub",
)

LENGTH_UNITS = {"meters": 1.0, "centimeters": 0.01}
ANGLE_UNITS = {"radians": 1.0, "degrees": math.pi / 180.0}


@dataclass(frozen=True)
class UnitConfig:
    length: str = "meters"
    angle: str = "radians"

    def __post_init__(self):
        if self.length not in LENGTH_UNITS:
            raise ValueError(f"length unit must be one of {sorted(LENGTH_UNITS)}")
        if self.angle not in ANGLE_UNITS:
            raise ValueError(f"angle unit must be one of {sorted(ANGLE_UNITS)}")

    @property
    def length_scale(self) -> float:
        return LENGTH_UNITS[self.length]

    @property
    def angle_scale(self) -> float:
        return ANGLE_UNITS[self.angle]


@dataclass(frozen=True)
class WallRec:
    id: str
    ax: float
    ay: float
    az: float
    bx: float
    by: float
    bz: float
    height: float
    thickness: float

    def __post_init__(self):
        _check_finite(self)
        if self.height <= 0:
            raise ValueError("wall height must be positive")
        if self.thickness < 0:
            raise ValueError("wall thickness must be non-negative")
        if (self.ax, self.ay, self.az) == (self.bx, self.by, self.bz):
            raise ValueError("wall endpoints must differ")


@dataclass(frozen=True)
class DoorRec:
    id: str
    wall_id: str
    position_x: float
    position_y: float
    position_z: float
    width: float
    height: float

    def __post_init__(self):
        _check_finite(self)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("door width/height must be positive")


@dataclass(frozen=True)
class WindowRec:
    id: str
    wall_id: str
    position_x: float
    position_y: float
    position_z: float
    width: float
    height: float

    def __post_init__(self):
        _check_finite(self)
        if self.width <= 0 or self.height <= 0:
            raise ValueError("window width/height must be positive")


@dataclass(frozen=True)
class BboxRec:
    id: str
    label: str
    position_x: float
    position_y: float
    position_z: float
    angle_z: float
    scale_x: float
    scale_y: float
    scale_z: float

    def __post_init__(self):
        _check_finite(self)
        if self.scale_x <= 0 or self.scale_y <= 0 or self.scale_z <= 0:
            raise ValueError("bbox scales must be positive")


Record = WallRec | DoorRec | WindowRec | BboxRec


def _check_finite(rec) -> None:
    for f in fields(rec):
        v = getattr(rec, f.name)
        if isinstance(v, float) and not math.isfinite(v):
            raise ValueError(f"{f.name} must be finite")


@dataclass(frozen=True)
class SceneDescription:
    """Ordered record list plus the units its numbers are written in."""

    records: tuple[Record, ...]
    units: UnitConfig = UnitConfig()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise ValueError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)

    @property
    def walls(self) -> tuple[WallRec, ...]:
        return tuple(r for r in self.records if isinstance(r, WallRec))

    @property
    def doors(self) -> tuple[DoorRec, ...]:
        return tuple(r for r in self.records if isinstance(r, DoorRec))

    @property
    def windows(self) -> tuple[WindowRec, ...]:
        return tuple(r for r in self.records if isinstance(r, WindowRec))

    @property
    def bboxes(self) -> tuple[BboxRec, ...]:
        return tuple(r for r in self.records if isinstance(r, BboxRec))


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int       # 1-based
    column: int     # 1-based
    message: str
    text: str       # offending source line, without the newline

    def __str__(self) -> str:
        return f"line {self.line}, column {self.column}: {self.message}"


@dataclass(frozen=True)
class ParseResult:
    description: SceneDescription
    diagnostics: tuple[ParseDiagnostic, ...]


_LINE_RE = re.compile(r"\s*([A-Za-z_]\w*)\s*=\s*([A-Za-z_]\w*)\s*\(")
_WORD_RE = re.compile(r"[A-Za-z_]\w*")
_NUMBER_RE = re.compile(r"[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?")

# (constructor, word-argument count, numeric-argument count)
_SIGNATURES = {
    "Wall": (WallRec, 0, 8),
    "Door": (DoorRec, 1, 5),
    "Window": (WindowRec, 1, 5),
    "Bbox": (BboxRec, 1, 7),
}


def parse_scene_description(text: str, units: UnitConfig = UnitConfig(),
                            strict: bool = False) -> ParseResult:
    """Parse scene-description text.

    Lenient mode (default) collects malformed lines, unknown constructors
    and duplicate ids as diagnostics and keeps going; every non-blank input
    line ends up either as a record or as at least one diagnostic. Strict
    mode additionally validates that every door/window references a parsed
    wall, and raises ParseError at the first problem, carrying its 1-based
    line and column.
    """
    diagnostics: list[ParseDiagnostic] = []
    records: list[Record] = []
    lines_of: list[tuple[int, str]] = []
    ids: set[str] = set()

    def report(lineno: int, col: int, msg: str, raw: str) -> None:
        if strict:
            raise ParseError(msg, lineno, col)
        diagnostics.append(ParseDiagnostic(lineno, col, msg, raw))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        rec = _parse_line(line, lineno, report)
        if rec is None:
            continue
        if rec.id in ids:
            report(lineno, 1, f"duplicate record id {rec.id!r}", line)
            continue
        ids.add(rec.id)
        records.append(rec)
        lines_of.append((lineno, line))

    if strict:
        wall_ids = {r.id for r in records if isinstance(r, WallRec)}
        for rec, (lineno, line) in zip(records, lines_of):
            if isinstance(rec, (DoorRec, WindowRec)) \
                    and rec.wall_id not in wall_ids:
                col = line.find(rec.wall_id, line.find("(")) + 1
                report(lineno, col,
                       f"{rec.id} references unknown wall {rec.wall_id!r}",
                       line)

    return ParseResult(SceneDescription(tuple(records), units), tuple(diagnostics))


def _parse_line(line: str, lineno: int, report) -> Record | None:
    m = _LINE_RE.match(line)
    if not m:
        col = len(line) - len(line.lstrip()) + 1
        report(lineno, col, "expected 'ident=Ctor(arg, ...)'", line)
        return None
    ident, ctor = m.group(1), m.group(2)
    ctor_col = m.start(2) + 1

    tail = line[m.end():]
    close = tail.rfind(")")
    if close < 0 or tail[close + 1:].strip():
        report(lineno, m.end() + max(close + 1, 0) + 1,
               "expected line to end with ')'", line)
        return None
    inner = tail[:close]
    if "(" in inner or ")" in inner:
        report(lineno, m.end() + inner.find("(" if "(" in inner else ")") + 1,
               "nested parentheses are not allowed", line)
        return None

    if ctor not in _SIGNATURES:
        report(lineno, ctor_col, f"unknown constructor {ctor!r}", line)
        return None
    cls, n_words, n_nums = _SIGNATURES[ctor]

    # split args, tracking the 1-based column where each begins
    args: list[tuple[str, int]] = []
    offset = m.end()
    for piece in inner.split(","):
        stripped = piece.strip()
        col = offset + (len(piece) - len(piece.lstrip())) + 1
        args.append((stripped, col))
        offset += len(piece) + 1

    if len(args) == 1 and args[0][0] == "" and n_words + n_nums > 0:
        report(lineno, args[0][1], f"{ctor} expects {n_words + n_nums} arguments, got 0",
               line)
        return None
    if len(args) != n_words + n_nums:
        report(lineno, args[0][1],
               f"{ctor} expects {n_words + n_nums} arguments, got {len(args)}", line)
        return None

    values: list[object] = []
    for k, (token, col) in enumerate(args):
        if not token:
            report(lineno, col, "empty argument", line)
            return None
        if k < n_words:
            if not _WORD_RE.fullmatch(token):
                report(lineno, col, f"expected a bare word, got {token!r}", line)
                return None
            values.append(token)
        else:
            if not _NUMBER_RE.fullmatch(token):
                report(lineno, col, f"expected a number, got {token!r}", line)
                return None
            values.append(float(token))

    try:
        return cls(ident, *values)
    except ValueError as exc:
        report(lineno, args[0][1], str(exc), line)
        return None


def _fmt(v: float) -> str:
    return format(v, ".6f")


def serialize(description: SceneDescription) -> str:
    """Render a description back to text, 6-decimal fixed precision, LF lines."""
    lines = []
    for rec in description.records:
        if isinstance(rec, WallRec):
            body = ",".join(_fmt(v) for v in
                            (rec.ax, rec.ay, rec.az, rec.bx, rec.by, rec.bz,
                             rec.height, rec.thickness))
            lines.append(f"{rec.id}=Wall({body})")
        elif isinstance(rec, DoorRec):
            body = ",".join(_fmt(v) for v in
                            (rec.position_x, rec.position_y, rec.position_z,
                             rec.width, rec.height))
            lines.append(f"{rec.id}=Door({rec.wall_id},{body})")
        elif isinstance(rec, WindowRec):
            body = ",".join(_fmt(v) for v in
                            (rec.position_x, rec.position_y, rec.position_z,
                             rec.width, rec.height))
            lines.append(f"{rec.id}=Window({rec.wall_id},{body})")
        elif isinstance(rec, BboxRec):
            body = ",".join(_fmt(v) for v in
                            (rec.position_x, rec.position_y, rec.position_z,
                             rec.angle_z, rec.scale_x, rec.scale_y, rec.scale_z))
            lines.append(f"{rec.id}=Bbox({rec.label},{body})")
        else:  # pragma: no cover - record union is closed
            raise TypeError(f"unknown record type {type(rec)!r}")
    return "\n".join(lines) + ("\n" if lines else "")


def to_boxes(description: SceneDescription,
             categories: tuple[str, ...] = CANONICAL_CATEGORIES
             ) -> tuple[list[OrientedBox3], int]:
    """Convert Bbox records to canonical-unit oriented boxes.

    Labels match the category list case-insensitively; records with labels
    outside it are dropped. Returns (boxes, dropped_count). Output boxes
    are in meters/radians regardless of the description's units.
    """
    lut = {c.lower(): c for c in categories}
    ls = description.units.length_scale
    asc = description.units.angle_scale
    boxes: list[OrientedBox3] = []
    dropped = 0
    for rec in description.bboxes:
        canon = lut.get(rec.label.lower())
        if canon is None:
            dropped += 1
            continue
        boxes.append(OrientedBox3(
            label=canon,
            center=(rec.position_x * ls, rec.position_y * ls, rec.position_z * ls),
            dims=(rec.scale_x * ls, rec.scale_y * ls, rec.scale_z * ls),
            yaw=rec.angle_z * asc,
        ))
    return boxes, dropped


def description_from_boxes(boxes, units: UnitConfig = UnitConfig(),
                           id_prefix: str = "bbox") -> SceneDescription:
    """Bbox-only description for a list of OrientedBox3 (inverse of to_boxes)."""
    ls = units.length_scale
    asc = units.angle_scale
    recs = []
    for i, b in enumerate(boxes):
        recs.append(BboxRec(
            id=f"{id_prefix}_{i}",
            label=b.label,
            position_x=b.center[0] / ls,
            position_y=b.center[1] / ls,
            position_z=b.center[2] / ls,
            angle_z=b.yaw / asc,
            scale_x=b.dims[0] / ls,
            scale_y=b.dims[1] / ls,
            scale_z=b.dims[2] / ls,
        ))
    return SceneDescription(tuple(recs), units)
