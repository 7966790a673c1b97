"""Object-level intermediate representation.

Every key/value pair of a PDF object becomes one line with four fields:

    <index>, <attribute>, <vtype>, <value>

``index`` is the object id as ``number-version``, ``attribute`` the
slash-joined path of dictionary keys leading to the value, ``vtype`` one of the
fifteen :class:`VType` tags and ``value`` the value in source form. Nested
dictionaries produce a ``dict`` header line followed by their children.
Stream payloads are kept out of the text and stored as side blobs.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .parser import (
    Array,
    Boolean,
    Dictionary,
    HexString,
    LiteralString,
    Name,
    Null,
    Numeric,
    ObjectId,
    PdfValue,
    RawDocument,
    Reference,
    Stream,
    decode_stream,
)

logger = logging.getLogger(__name__)

__all__ = [
    "VType",
    "IrEntry",
    "IrProgram",
    "IrParseError",
    "classify_array",
    "convert_pair",
    "convert_object",
    "convert_document",
    "emit_ir_text",
    "parse_ir_text",
    "write_program",
    "read_program",
    "render_value",
]


class VType(str, enum.Enum):
    NUM = "num"
    STR = "str"
    NAME = "name"
    REF = "ref"
    BOOL = "bool"
    NULL = "null"
    STREAM = "stream"
    LIST = "list"
    DICT = "dict"
    NUM_LIST = "num_list"
    STR_LIST = "str_list"
    NAME_LIST = "name_list"
    REF_LIST = "ref_list"
    BOOL_LIST = "bool_list"
    MIX_LIST = "mix_list"

    def __str__(self) -> str:
        return self.value


_LIST_OF = {
    VType.NUM: VType.NUM_LIST,
    VType.STR: VType.STR_LIST,
    VType.NAME: VType.NAME_LIST,
    VType.REF: VType.REF_LIST,
    VType.BOOL: VType.BOOL_LIST,
}


@dataclass(frozen=True)
class IrEntry:
    index: ObjectId
    attribute: str
    vtype: VType
    value: str = ""

    def __post_init__(self):
        if not isinstance(self.vtype, VType):
            object.__setattr__(self, "vtype", VType(self.vtype))
        if self.vtype in (VType.DICT, VType.STREAM) and self.value:
            raise ValueError(f"{self.vtype} entries carry no value, got {self.value!r}")
        if self.vtype is VType.REF:
            ObjectId.parse(self.value)

    def format(self) -> str:
        return f"{self.index}, {self.attribute}, {self.vtype.value}, {self.value}"

    def __str__(self) -> str:
        return self.format()


@dataclass(frozen=True)
class IrProgram:
    """Entries per object in ascending id order, plus decoded stream payloads."""

    entries: Mapping[ObjectId, tuple[IrEntry, ...]] = field(default_factory=dict)
    stream_blobs: Mapping[ObjectId, bytes] = field(default_factory=dict)

    def __post_init__(self):
        ordered = {k: tuple(self.entries[k]) for k in sorted(self.entries)}
        object.__setattr__(self, "entries", ordered)
        object.__setattr__(self, "stream_blobs", {k: self.stream_blobs[k] for k in sorted(self.stream_blobs)})

    def __len__(self) -> int:
        return len(self.entries)

    def lines(self) -> list[str]:
        return [e.format() for entries in self.entries.values() for e in entries]


# ---------------------------------------------------------------------------
# rendering


def _render_bytes(data: bytes) -> str:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        return "".join(chr(b) if 0x20 <= b < 0x7F else f"\\x{b:02x}" for b in data)
    return "".join(c if c.isprintable() else _escape_char(c) for c in text)


def _escape_char(c: str) -> str:
    return "".join(f"\\x{b:02x}" for b in c.encode("utf-8"))


def _render_key(key: str) -> str:
    return _render_bytes(key.encode("latin-1"))


def _atomic_kind(value: PdfValue) -> VType | None:
    if isinstance(value, Numeric):
        return VType.NUM
    if isinstance(value, (LiteralString, HexString)):
        return VType.STR
    if isinstance(value, Name):
        return VType.NAME
    if isinstance(value, Reference):
        return VType.REF
    if isinstance(value, Boolean):
        return VType.BOOL
    return None


def render_value(value: PdfValue, top: bool = True) -> str:
    """Value text as it appears in the fourth field."""
    if isinstance(value, Numeric):
        return value.text
    if isinstance(value, LiteralString):
        return "(" + _render_bytes(value.raw) + ")"
    if isinstance(value, HexString):
        return "<" + _render_bytes(value.raw) + ">"
    if isinstance(value, Name):
        return _render_bytes(value.text.encode("latin-1"))
    if isinstance(value, Reference):
        return str(value.target)
    if isinstance(value, Boolean):
        return "true" if value.value else "false"
    if isinstance(value, Null):
        return "" if top else "null"
    if isinstance(value, Array):
        return "[" + ",".join(render_value(v, top=False) for v in value.items) + "]"
    if isinstance(value, Stream):
        value = value.dictionary
    if isinstance(value, Dictionary):
        if top:
            return ""
        parts = (_render_key(k) + " " + render_value(v, top=False) for k, v in value.items)
        return "<<" + ",".join(parts) + ">>"
    raise TypeError(f"not a PDF value: {value!r}")


def classify_array(elements: Iterable[PdfValue]) -> VType:
    kinds = {_atomic_kind(v) for v in elements}
    if len(kinds) == 1:
        (kind,) = kinds
        if kind is not None:
            return _LIST_OF[kind]
    return VType.MIX_LIST


def _vtype_of(value: PdfValue) -> VType:
    kind = _atomic_kind(value)
    if kind is not None:
        return kind
    if isinstance(value, Null):
        return VType.NULL
    if isinstance(value, Array):
        return classify_array(value.items)
    if isinstance(value, (Dictionary, Stream)):
        return VType.DICT
    raise TypeError(f"not a PDF value: {value!r}")


# ---------------------------------------------------------------------------
# conversion


def convert_pair(index: ObjectId, key_path: str, value: PdfValue) -> list[IrEntry]:
    """Entries for one key/value pair; dictionaries expand into a header plus children."""
    out: list[IrEntry] = []
    _convert_into(out, index, key_path, value)
    return out


def _convert_into(out: list[IrEntry], index: ObjectId, path: str, value: PdfValue) -> None:
    if isinstance(value, Stream):
        value = value.dictionary
    if isinstance(value, Dictionary):
        out.append(IrEntry(index, path, VType.DICT, ""))
        for key, child in value.items:
            _convert_into(out, index, path + _render_key(key), child)
        return
    out.append(IrEntry(index, path, _vtype_of(value), render_value(value)))


def convert_object(index: ObjectId, value: PdfValue) -> tuple[list[IrEntry], bytes | None]:
    """Entries for one object and, for streams, the decoded payload."""
    if isinstance(value, Stream):
        entries = [IrEntry(index, "", VType.STREAM, "")]
        for key, child in value.dictionary.items:
            _convert_into(entries, index, _render_key(key), child)
        decoded = decode_stream(value)
        if decoded.diagnostic:
            logger.info("%s: %s", index, decoded.diagnostic)
        return entries, decoded.data
    if isinstance(value, Dictionary):
        if len(value) == 0:
            return [IrEntry(index, "", VType.DICT, "")], None
        entries = []
        for key, child in value.items:
            _convert_into(entries, index, _render_key(key), child)
        return entries, None
    return [IrEntry(index, "", _vtype_of(value), render_value(value))], None


def convert_document(doc: RawDocument) -> IrProgram:
    entries: dict[ObjectId, tuple[IrEntry, ...]] = {}
    blobs: dict[ObjectId, bytes] = {}
    for oid in sorted(doc.objects):
        lines, blob = convert_object(oid, doc.objects[oid])
        entries[oid] = tuple(lines)
        if blob is not None:
            blobs[oid] = blob
    return IrProgram(entries, blobs)


# ---------------------------------------------------------------------------
# text format


class IrParseError(ValueError):
    def __init__(self, line_number: int, line: str, reason: str):
        super().__init__(f"line {line_number}: {reason}: {line!r}")
        self.line_number = line_number
        self.line = line


_LINE_RE = re.compile(r"^(\d+-\d+), ([^ ]*), ([a-z_]+),(?: (.*))?$")


def emit_ir_text(program: IrProgram) -> str:
    lines = program.lines()
    return "\n".join(lines) + "\n" if lines else ""


def parse_ir_text(text: str, stream_blobs: Mapping[ObjectId, bytes] | None = None) -> IrProgram:
    entries: dict[ObjectId, list[IrEntry]] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        m = _LINE_RE.match(line)
        if m is None:
            raise IrParseError(number, line, "expected '<index>, <attribute>, <vtype>, <value>'")
        index_text, attribute, vtype_text, value = m.groups()
        try:
            entry = IrEntry(ObjectId.parse(index_text), attribute, VType(vtype_text), value or "")
        except ValueError as exc:
            raise IrParseError(number, line, str(exc)) from None
        entries.setdefault(entry.index, []).append(entry)
    blobs = dict(stream_blobs or {})
    for oid, lines in entries.items():
        if any(e.vtype is VType.STREAM for e in lines):
            blobs.setdefault(oid, b"")
    return IrProgram({k: tuple(v) for k, v in entries.items()}, blobs)


IR_FILENAME = "program.ir"


def write_program(program: IrProgram, directory: str | Path) -> Path:
    """Write ``program.ir`` plus one ``<index>.bin`` per stream into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / IR_FILENAME
    path.write_text(emit_ir_text(program), encoding="utf-8")
    for oid, blob in program.stream_blobs.items():
        (directory / f"{oid}.bin").write_bytes(blob)
    return path


def read_program(path: str | Path) -> IrProgram:
    """Read an IR file (or a directory holding ``program.ir``) with its stream blobs."""
    path = Path(path)
    if path.is_dir():
        path = path / IR_FILENAME
    program = parse_ir_text(path.read_text(encoding="utf-8"))
    blobs = {}
    for oid in program.stream_blobs:
        blob_path = path.parent / f"{oid}.bin"
        blobs[oid] = blob_path.read_bytes() if blob_path.exists() else b""
    return IrProgram(program.entries, blobs)
