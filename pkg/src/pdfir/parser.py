"""Fault-tolerant PDF lexer and parser.

Objects are located by a linear scan of ``N M obj`` headers rather than by the
cross-reference table, so a document with a broken xref, a missing trailer or
truncated objects still yields every object that can be recovered. Every repair
applied on the way is recorded as a :class:`RepairEvent` with a code ``E1`` to
``E8``:

====  ==========================================================
E1    literal string runs to the end of the object (overflow)
E2    reference to an object that is never defined
E3    incomplete key/value pairs, truncated arrays or dictionaries
E4    missing header version
E5    trailer has no ``/Root``
E6    missing ``%%EOF``
E7    stream dictionary without a usable ``/Length``
E8    cross-reference table missing or pointing at wrong offsets
====  ==========================================================
"""

from __future__ import annotations

import logging
import re
import types
import zlib
from dataclasses import dataclass, field
from typing import Iterator, Mapping

logger = logging.getLogger(__name__)

WHITESPACE = b"\x00\t\n\x0c\r "
DELIMITERS = b"()<>[]{}/%"
_WS = frozenset(WHITESPACE)
_DELIM = frozenset(DELIMITERS)
_NON_REGULAR = _WS | _DELIM

_HEADER_RE = re.compile(rb"(?<![0-9])(\d+)[\x00\t\n\x0c\r ]+(\d+)[\x00\t\n\x0c\r ]+obj(?![A-Za-z0-9_])")
_NUMBER_RE = re.compile(rb"[+-]?(?:\d+\.?\d*|\.\d+)")
_INT_RE = re.compile(rb"\d+")
_VERSION_RE = re.compile(rb"%PDF-(\d+\.\d+)")
_ENDOBJ_RE = re.compile(rb"endobj")
_STREAM_RE = re.compile(rb"(?<![A-Za-z0-9_])stream(?=[\r\n \t]|$)")
_STRUCTURE_RE = re.compile(rb"(?m)^[\x00\t\x0c ]*(?:xref|trailer|startxref)(?![A-Za-z0-9_])")
_ENDSTREAM_RE = re.compile(rb"endstream")
_XREF_ENTRY_RE = re.compile(rb"(\d{1,10})\s+(\d{1,5})\s+([nf])")

ERROR_CODES = ("E1", "E2", "E3", "E4", "E5", "E6", "E7", "E8")


class MalformedValue(ValueError):
    """Raised by the strict value parser; ``offset`` is where parsing stopped."""

    def __init__(self, offset: int, reason: str = "malformed value"):
        super().__init__(f"{reason} at offset {offset}")
        self.offset = offset
        self.reason = reason


@dataclass(frozen=True, order=True)
class ObjectId:
    number: int
    version: int = 0

    def __post_init__(self):
        if self.number < 0 or self.version < 0:
            raise ValueError(f"object numbers must be non-negative: {self.number} {self.version}")

    def __str__(self) -> str:
        return f"{self.number}-{self.version}"

    @classmethod
    def parse(cls, text: str) -> "ObjectId":
        m = re.fullmatch(r"(\d+)-(\d+)", text.strip())
        if m is None:
            raise ValueError(f"not an object id: {text!r}")
        return cls(int(m.group(1)), int(m.group(2)))


# --------------------------------------------------------------------------
# value model


class PdfValue:
    """Base class of every parsed PDF value."""

    __slots__ = ()


@dataclass(frozen=True)
class Numeric(PdfValue):
    text: str

    @property
    def value(self) -> float:
        try:
            return float(self.text)
        except ValueError:
            return 0.0

    def is_integer(self) -> bool:
        return re.fullmatch(r"[+-]?\d+", self.text) is not None


@dataclass(frozen=True)
class LiteralString(PdfValue):
    data: bytes
    # source bytes between the outer parentheses, escapes untouched
    raw: bytes


@dataclass(frozen=True)
class HexString(PdfValue):
    data: bytes
    raw: bytes


@dataclass(frozen=True)
class Name(PdfValue):
    # kept exactly as written, "#xx" escapes included
    text: str


@dataclass(frozen=True)
class Boolean(PdfValue):
    value: bool


@dataclass(frozen=True)
class Null(PdfValue):
    pass


@dataclass(frozen=True)
class Reference(PdfValue):
    target: ObjectId


@dataclass(frozen=True)
class Array(PdfValue):
    items: tuple = ()

    def __iter__(self) -> Iterator[PdfValue]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)


@dataclass(frozen=True)
class Dictionary(PdfValue):
    """Ordered name -> value mapping. Duplicate keys are kept; lookups see the last one."""

    items: tuple = ()

    def get(self, key: str, default=None):
        for k, v in reversed(self.items):
            if k == key:
                return v
        return default

    def __contains__(self, key: str) -> bool:
        return any(k == key for k, _ in self.items)

    def keys(self) -> list[str]:
        return [k for k, _ in self.items]

    def __len__(self) -> int:
        return len(self.items)

    def replace(self, key: str, value: PdfValue) -> "Dictionary":
        """Copy with ``key`` set to ``value`` (in place if present, appended otherwise)."""
        if key not in self:
            return Dictionary(self.items + ((key, value),))
        return Dictionary(tuple((k, value if k == key else v) for k, v in self.items))


@dataclass(frozen=True)
class Stream(PdfValue):
    dictionary: Dictionary
    data: bytes


NULL = Null()


@dataclass(frozen=True)
class RepairEvent:
    code: str
    object: ObjectId | None
    byte_offset: int
    description: str

    def __post_init__(self):
        if self.code not in ERROR_CODES:
            raise ValueError(f"unknown repair code {self.code!r}")

    def format(self) -> str:
        obj = str(self.object) if self.object is not None else "-"
        return f"{self.code}\t{obj}\t{self.byte_offset}\t{self.description}"


@dataclass(frozen=True)
class RawDocument:
    objects: Mapping[ObjectId, PdfValue]
    header_version: str | None = None
    diagnostics: tuple = ()
    trailer: Dictionary | None = None
    encrypted: bool = False

    def __post_init__(self):
        if not isinstance(self.objects, types.MappingProxyType):
            object.__setattr__(self, "objects", types.MappingProxyType(dict(self.objects)))
        object.__setattr__(self, "diagnostics", tuple(self.diagnostics))

    @property
    def codes(self) -> list[str]:
        return [e.code for e in self.diagnostics]


@dataclass(frozen=True)
class DecodedStream:
    data: bytes
    raw: bool
    diagnostic: str | None = None


# --------------------------------------------------------------------------
# lexer / value parser


def _decode_literal(raw: bytes) -> bytes:
    out = bytearray()
    i, n = 0, len(raw)
    while i < n:
        c = raw[i]
        if c != 0x5C:  # backslash
            out.append(c)
            i += 1
            continue
        i += 1
        if i >= n:
            break
        c = raw[i]
        simple = {0x6E: 0x0A, 0x72: 0x0D, 0x74: 0x09, 0x62: 0x08, 0x66: 0x0C}
        if c in simple:
            out.append(simple[c])
            i += 1
        elif 0x30 <= c <= 0x37:
            j = i
            while j < n and j < i + 3 and 0x30 <= raw[j] <= 0x37:
                j += 1
            out.append(int(raw[i:j], 8) & 0xFF)
            i = j
        elif c == 0x0D:
            i += 2 if raw[i:i + 2] == b"\r\n" else 1
        elif c == 0x0A:
            i += 1
        else:
            # \( \) \\ and unknown escapes: the byte itself
            out.append(c)
            i += 1
    return bytes(out)


def _decode_hex(raw: bytes) -> bytes:
    digits = bytes(b for b in raw if b in b"0123456789abcdefABCDEF")
    if len(digits) % 2:
        digits += b"0"
    return bytes.fromhex(digits.decode("ascii"))


class _Parser:
    """Recursive-descent value parser over ``data[pos:end]``.

    In strict mode any structural defect raises :class:`MalformedValue`. In
    tolerant mode defects are repaired in place and described in ``repairs``;
    an unterminated literal string sets ``string_overflow``.
    """

    def __init__(self, data: bytes, pos: int = 0, end: int | None = None, tolerant: bool = False):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end
        self.tolerant = tolerant
        self.repairs: list[str] = []
        self.string_overflow = False

    # -- low level -------------------------------------------------------
    def at_end(self) -> bool:
        return self.pos >= self.end

    def peek(self) -> int | None:
        return self.data[self.pos] if self.pos < self.end else None

    def startswith(self, token: bytes) -> bool:
        return self.data.startswith(token, self.pos) and self.pos + len(token) <= self.end

    def skip_ws(self) -> None:
        data, end = self.data, self.end
        while self.pos < end:
            c = data[self.pos]
            if c in _WS:
                self.pos += 1
            elif c == 0x25:  # % comment
                while self.pos < end and data[self.pos] not in b"\r\n":
                    self.pos += 1
            else:
                break

    def keyword_at(self) -> bytes:
        """Regular-character token at the cursor, without consuming it."""
        j = self.pos
        while j < self.end and self.data[j] not in _NON_REGULAR:
            j += 1
        return self.data[self.pos:j]

    def _fail(self, reason: str):
        raise MalformedValue(self.pos, reason)

    def _repair(self, description: str) -> None:
        if not self.tolerant:
            self._fail(description)
        self.repairs.append(description)

    def at_terminator(self) -> bool:
        """True at an object-level keyword that no value can start with."""
        kw = self.keyword_at()
        return kw in (b"endobj", b"stream", b"endstream", b"obj", b"xref", b"trailer", b"startxref")

    # -- values ----------------------------------------------------------
    def parse_value(self) -> PdfValue:
        self.skip_ws()
        if self.at_end():
            self._fail("unexpected end of input")
        c = self.data[self.pos]
        if self.startswith(b"<<"):
            return self.parse_dict()
        if c == 0x3C:  # <
            return self.parse_hex()
        if c == 0x28:  # (
            return self.parse_literal()
        if c == 0x2F:  # /
            return self.parse_name()
        if c == 0x5B:  # [
            return self.parse_array()
        m = _NUMBER_RE.match(self.data, self.pos, self.end)
        if m is not None:
            return self.parse_number_or_ref(m)
        kw = self.keyword_at()
        if kw == b"true" or kw == b"false":
            self.pos += len(kw)
            return Boolean(kw == b"true")
        if kw == b"null":
            self.pos += 4
            return NULL
        self._fail(f"unexpected token {kw[:20]!r}" if kw else f"unexpected byte {bytes([c])!r}")

    def parse_number_or_ref(self, m: re.Match) -> PdfValue:
        text = m.group(0)
        self.pos = m.end()
        if _INT_RE.fullmatch(text):
            save = self.pos
            self.skip_ws()
            m2 = _INT_RE.match(self.data, self.pos, self.end)
            if m2 is not None and self.pos > save:
                self.pos = m2.end()
                after_gen = self.pos
                self.skip_ws()
                if (self.pos > after_gen and self.startswith(b"R")
                        and (self.pos + 1 >= self.end or self.data[self.pos + 1] in _NON_REGULAR)):
                    self.pos += 1
                    return Reference(ObjectId(int(text), int(m2.group(0))))
            self.pos = save
        return Numeric(text.decode("ascii"))

    def parse_name(self) -> Name:
        start = self.pos
        self.pos += 1
        while self.pos < self.end and self.data[self.pos] not in _NON_REGULAR:
            self.pos += 1
        return Name(self.data[start:self.pos].decode("latin-1"))

    def parse_literal(self) -> LiteralString:
        self.pos += 1
        start = self.pos
        depth = 1
        data, end = self.data, self.end
        i = start
        while i < end:
            c = data[i]
            if c == 0x5C:
                i += 2
                continue
            if c == 0x28:
                depth += 1
            elif c == 0x29:
                depth -= 1
                if depth == 0:
                    raw = data[start:i]
                    self.pos = i + 1
                    return LiteralString(_decode_literal(raw), raw)
            i += 1
        if not self.tolerant:
            raise MalformedValue(start - 1, "unterminated literal string")
        raw = data[start:end]
        if _trailing_backslashes(raw) % 2:
            raw = raw[:-1]
        raw += b")" * (depth - 1)
        self.pos = end
        self.string_overflow = True
        self.repairs.append("literal string closed at end of object")
        return LiteralString(_decode_literal(raw), raw)

    def parse_hex(self) -> HexString:
        self.pos += 1
        start = self.pos
        j = self.data.find(b">", start, self.end)
        if j < 0:
            self._repair("hex string not terminated")
            raw = self.data[start:self.end]
            self.pos = self.end
        else:
            raw = self.data[start:j]
            self.pos = j + 1
        raw = bytes(b for b in raw if b not in _WS)
        return HexString(_decode_hex(raw), raw)

    def parse_array(self) -> Array:
        self.pos += 1
        items = []
        while True:
            self.skip_ws()
            if self.at_end():
                self._repair("array not closed")
                break
            if self.startswith(b"]"):
                self.pos += 1
                break
            if self.startswith(b">>") or self.at_terminator():
                self._repair("array not closed")
                break
            item = self._parse_item()
            if item is not None:
                items.append(item)
        return Array(tuple(items))

    def parse_dict(self) -> Dictionary:
        self.pos += 2
        items = []
        while True:
            self.skip_ws()
            if self.at_end():
                self._repair("dictionary not closed")
                break
            if self.startswith(b">>"):
                self.pos += 2
                break
            if self.at_terminator():
                self._repair("dictionary not closed")
                break
            if self.peek() != 0x2F:
                # value without a key: drop it
                self._repair("value without key dropped")
                self._parse_item()
                continue
            key = self.parse_name().text
            self.skip_ws()
            if (self.at_end() or self.startswith(b">>") or self.startswith(b"]")
                    or self.at_terminator()):
                self._repair(f"missing value for {key} set to null")
                items.append((key, NULL))
                continue
            value = self._parse_item()
            items.append((key, NULL if value is None else value))
        return Dictionary(tuple(items))

    def _parse_item(self) -> PdfValue | None:
        """Parse one value inside a container; in tolerant mode junk is skipped."""
        if not self.tolerant:
            return self.parse_value()
        start = self.pos
        try:
            return self.parse_value()
        except MalformedValue as exc:
            self.pos = max(self.pos, start)
            kw = self.keyword_at()
            self.pos += max(len(kw), 1)
            self.repairs.append(f"skipped {exc.reason}")
            return None


def _trailing_backslashes(raw: bytes) -> int:
    n = 0
    while n < len(raw) and raw[-1 - n] == 0x5C:
        n += 1
    return n


def parse_value(data: bytes, cursor: int = 0) -> tuple[PdfValue, int]:
    """Strictly parse one value starting at ``cursor``.

    Returns the value and the cursor just past it. Raises
    :class:`MalformedValue` on any structural defect.
    """
    p = _Parser(data, cursor)
    value = p.parse_value()
    return value, p.pos


# --------------------------------------------------------------------------
# object scanning


def scan_objects(data: bytes) -> list[tuple[ObjectId, tuple[int, int]]]:
    """Find every ``N M obj`` header and the byte span of its object.

    A span starts at the header and ends after the first ``endobj`` that
    follows it (skipping over stream data), or at the next header, or at the
    end of input. The xref table is never consulted.
    """
    headers = [(m.start(), m.end(), ObjectId(int(m.group(1)), int(m.group(2))))
               for m in _HEADER_RE.finditer(data)]
    structure = [m.start() for m in _STRUCTURE_RE.finditer(data)]
    out = []
    k = 0
    for i, (start, body, oid) in enumerate(headers):
        limit = headers[i + 1][0] if i + 1 < len(headers) else len(data)
        while k < len(structure) and structure[k] < body:
            k += 1
        if k < len(structure):
            limit = min(limit, structure[k])
        end = _find_object_end(data, body, limit)
        out.append((oid, (start, end)))
    return out


def _find_object_end(data: bytes, pos: int, limit: int) -> int:
    m_end = _ENDOBJ_RE.search(data, pos, limit)
    m_stream = _STREAM_RE.search(data, pos, limit)
    if m_stream is not None and (m_end is None or m_stream.start() < m_end.start()):
        m_es = _ENDSTREAM_RE.search(data, m_stream.end(), limit)
        if m_es is not None:
            m_end = _ENDOBJ_RE.search(data, m_es.end(), limit)
    return m_end.end() if m_end is not None else limit


# --------------------------------------------------------------------------
# span-level repairs


def _open_constructs(span: bytes) -> list[tuple[str, int]]:
    """Stack of constructs still open at the end of ``span``.

    Entries are ``("dict", 0)``, ``("array", 0)`` or ``("string", depth)``.
    Scanning stops at a top-level ``stream`` keyword.
    """
    stack: list[tuple[str, int]] = []
    i, n = 0, len(span)
    while i < n:
        c = span[i]
        if stack and stack[-1][0] == "string":
            depth = stack[-1][1]
            if c == 0x5C:
                i += 2
                continue
            if c == 0x28:
                stack[-1] = ("string", depth + 1)
            elif c == 0x29:
                if depth == 1:
                    stack.pop()
                else:
                    stack[-1] = ("string", depth - 1)
            i += 1
            continue
        if c == 0x25:
            while i < n and span[i] not in b"\r\n":
                i += 1
            continue
        if c == 0x28:
            stack.append(("string", 1))
        elif span.startswith(b"<<", i):
            stack.append(("dict", 0))
            i += 2
            continue
        elif span.startswith(b">>", i):
            if stack and stack[-1][0] == "dict":
                stack.pop()
            i += 2
            continue
        elif c == 0x3C:
            j = span.find(b">", i)
            i = n if j < 0 else j + 1
            continue
        elif c == 0x5B:
            stack.append(("array", 0))
        elif c == 0x5D:
            if stack and stack[-1][0] == "array":
                stack.pop()
        elif span.startswith(b"stream", i) and not span[max(0, i - 3):i] == b"end":
            break
        i += 1
    return stack


def _has_endobj(span: bytes) -> bool:
    return span.rstrip(WHITESPACE).endswith(b"endobj")


def repair_string_overflow(span: bytes, oid: ObjectId | None = None,
                           offset: int = 0) -> tuple[bytes, RepairEvent | None]:
    """Close a literal string that runs to the end of ``span``.

    Appends as many ``)`` as needed, then closes any arrays and dictionaries
    left open (innermost first), then appends ``endobj`` if it is missing.
    Returns the span unchanged and ``None`` when no string overflows.
    """
    body = span.rstrip(WHITESPACE)
    had_endobj = body.endswith(b"endobj")
    if had_endobj:
        body = body[:-6]
    stack = _open_constructs(body)
    if not stack or stack[-1][0] != "string":
        return span, None
    out = bytearray(body)
    if _trailing_backslashes(body) % 2:
        out = out[:-1]
    closers = []
    for kind, depth in reversed(stack):
        if kind == "string":
            closers.append(b")" * depth)
        elif kind == "array":
            closers.append(b"]")
        else:
            closers.append(b">>")
    out += b"".join(closers)
    out += b"\nendobj"
    added = [b"".join(closers).decode("latin-1")]
    if not had_endobj:
        added.append("endobj")
    event = RepairEvent("E1", oid, offset, "string overflow closed; appended " + " ".join(added))
    return bytes(out), event


def repair_incomplete_pairs(span: bytes, oid: ObjectId | None = None,
                            offset: int = 0) -> tuple[PdfValue, RepairEvent | None]:
    """Parse a (possibly truncated) value, completing missing values and closers.

    Missing dictionary values become null, truncated arrays and dictionaries
    are closed. Returns the value and an E3 event describing the fixes, or
    ``None`` when the input was already well formed.
    """
    p = _Parser(span, 0, tolerant=True)
    p.skip_ws()
    if p.at_end() or p.at_terminator():
        value: PdfValue = NULL
    else:
        value = p._parse_item()
        if value is None:
            value = NULL
    if not p.repairs:
        return value, None
    return value, RepairEvent("E3", oid, offset, "; ".join(_dedupe(p.repairs)))


def _dedupe(items: list[str]) -> list[str]:
    return list(dict.fromkeys(items))


def synthesize_missing_object(ref: ObjectId, offset: int = 0) -> tuple[PdfValue, RepairEvent]:
    """Placeholder for an object that is referenced but never defined."""
    return NULL, RepairEvent("E2", ref, offset, f"missing object {ref} synthesized as null")


# --------------------------------------------------------------------------
# object parsing


@dataclass
class _ParsedObject:
    oid: ObjectId
    value: PdfValue
    events: list[RepairEvent] = field(default_factory=list)


def _parse_object(data: bytes, oid: ObjectId, start: int, end: int,
                  int_objects: Mapping[ObjectId, int]) -> _ParsedObject:
    span = data[start:end]
    header = _HEADER_RE.match(span)
    body = span[header.end():]
    events: list[RepairEvent] = []

    repaired, e1 = repair_string_overflow(body, oid, start)
    if e1 is not None:
        events.append(e1)
        body = repaired

    p = _Parser(body, 0, tolerant=True)
    p.skip_ws()
    if p.at_end() or p.at_terminator():
        value: PdfValue = NULL
        if not p.at_end() and p.keyword_at() != b"endobj":
            p.repairs.append("object has no value")
    else:
        value = p._parse_item()
        if value is None:
            value = NULL
    fixes = list(p.repairs)

    p.skip_ws()
    if p.keyword_at() == b"stream":
        if not isinstance(value, Dictionary):
            fixes.append("stream without dictionary")
            value = Dictionary()
        value, stream_end, e7 = _read_stream(body, p.pos + 6, value, oid, start + header.end(),
                                             int_objects)
        if e7 is not None:
            events.append(e7)
        p.pos = stream_end
        p.skip_ws()
    if p.keyword_at() != b"endobj":
        if _ENDOBJ_RE.search(body, p.pos) is not None:
            fixes.append("junk before endobj ignored")
        else:
            fixes.append("endobj missing")

    if fixes and e1 is None:
        events.append(RepairEvent("E3", oid, start, "; ".join(_dedupe(fixes))))
    return _ParsedObject(oid, value, events)


def _skip_eol(data: bytes, pos: int) -> int:
    if data.startswith(b"\r\n", pos):
        return pos + 2
    if data[pos:pos + 1] in (b"\n", b"\r"):
        return pos + 1
    return pos


def _strip_eol(data: bytes) -> bytes:
    if data.endswith(b"\r\n"):
        return data[:-2]
    if data.endswith((b"\n", b"\r")):
        return data[:-1]
    return data


def _read_stream(body: bytes, pos: int, dictionary: Dictionary, oid: ObjectId, base: int,
                 int_objects: Mapping[ObjectId, int]) -> tuple[Stream, int, RepairEvent | None]:
    data_start = _skip_eol(body, pos)
    length_value = dictionary.get("/Length")
    length: int | None = None
    problem = None
    if isinstance(length_value, Numeric) and length_value.is_integer():
        length = int(length_value.text)
    elif isinstance(length_value, Reference):
        length = int_objects.get(length_value.target)
        if length is None:
            problem = "/Length reference unresolvable"
    elif length_value is None:
        problem = "/Length missing"
    else:
        problem = "/Length not an integer"

    if length is not None and length >= 0 and data_start + length <= len(body):
        after = data_start + length
        q = _Parser(body, after)
        q.skip_ws()
        if q.startswith(b"endstream"):
            return Stream(dictionary, body[data_start:after]), q.pos + 9, None
        problem = "/Length does not match stream data"
    elif length is not None:
        problem = "/Length exceeds object"

    m = _ENDSTREAM_RE.search(body, data_start)
    if m is not None:
        raw = _strip_eol(body[data_start:m.start()])
        end = m.end()
    else:
        m_obj = _ENDOBJ_RE.search(body, data_start)
        stop = m_obj.start() if m_obj is not None else len(body)
        raw = body[data_start:stop].rstrip(b"\r\n")
        end = stop
        problem += "; endstream missing"
    fixed = dictionary.replace("/Length", Numeric(str(len(raw))))
    event = RepairEvent("E7", oid, base + pos, f"{problem}; measured {len(raw)} bytes")
    return Stream(fixed, raw), end, event


def _collect_refs(value: PdfValue, out: list[ObjectId]) -> None:
    if isinstance(value, Reference):
        out.append(value.target)
    elif isinstance(value, Array):
        for item in value.items:
            _collect_refs(item, out)
    elif isinstance(value, Dictionary):
        for _, item in value.items:
            _collect_refs(item, out)
    elif isinstance(value, Stream):
        _collect_refs(value.dictionary, out)


def references(value: PdfValue) -> list[ObjectId]:
    """All reference targets inside ``value``, in source order, with repeats."""
    out: list[ObjectId] = []
    _collect_refs(value, out)
    return out


# --------------------------------------------------------------------------
# document-level structure


def _find_trailer(data: bytes) -> tuple[Dictionary | None, int]:
    pos = data.rfind(b"trailer")
    while pos >= 0:
        p = _Parser(data, pos + 7, tolerant=True)
        p.skip_ws()
        if p.startswith(b"<<"):
            stop = data.find(b"startxref", p.pos)
            p.end = stop if stop >= 0 else len(data)
            value = p.parse_dict()
            return value, pos
        pos = data.rfind(b"trailer", 0, pos)
    return None, -1


def _check_xref(data: bytes) -> str | None:
    """Return a description of what is wrong with the xref, or None if it is usable."""
    pos = data.rfind(b"startxref")
    if pos < 0:
        return "startxref missing"
    p = _Parser(data, pos + 9)
    p.skip_ws()
    m = _INT_RE.match(data, p.pos)
    if m is None:
        return "startxref offset missing"
    offset = int(m.group(0))
    if offset >= len(data):
        return f"startxref offset {offset} beyond end of file"
    if _HEADER_RE.match(data, offset):
        return None  # cross-reference stream; not expanded
    if not data.startswith(b"xref", offset):
        return f"no xref table at offset {offset}"
    q = _Parser(data, offset + 4)
    bad = 0
    checked = 0
    while True:
        q.skip_ws()
        m1 = _INT_RE.match(data, q.pos)
        if m1 is None:
            break
        q.pos = m1.end()
        q.skip_ws()
        m2 = _INT_RE.match(data, q.pos)
        if m2 is None:
            return "malformed xref subsection"
        q.pos = m2.end()
        first, count = int(m1.group(0)), int(m2.group(0))
        for k in range(count):
            q.skip_ws()
            e = _XREF_ENTRY_RE.match(data, q.pos)
            if e is None:
                return "malformed xref entry"
            q.pos = e.end()
            if e.group(3) != b"n":
                continue
            checked += 1
            off, gen = int(e.group(1)), int(e.group(2))
            h = _HEADER_RE.match(data, off)
            if h is None or (int(h.group(1)), int(h.group(2))) != (first + k, gen):
                bad += 1
    if bad:
        return f"{bad} of {checked} xref offsets invalid"
    return None


def _structural_checks(data: bytes, objects: Mapping[ObjectId, PdfValue]):
    """Header, trailer, %%EOF and xref checks. Returns (events, version, trailer, encrypted)."""
    events: list[RepairEvent] = []
    head = _VERSION_RE.search(data, 0, 1024)
    version = head.group(1).decode("ascii") if head else None
    if version is None:
        events.append(RepairEvent("E4", None, 0, "header version missing; ignored"))

    trailer, trailer_pos = _find_trailer(data)
    encrypted = trailer is not None and "/Encrypt" in trailer
    root_found = trailer is not None and "/Root" in trailer
    if not root_found:
        for value in objects.values():
            if isinstance(value, Stream) and value.dictionary.get("/Type") == Name("/XRef"):
                if "/Root" in value.dictionary:
                    root_found = True
                    trailer = trailer or value.dictionary
                encrypted = encrypted or "/Encrypt" in value.dictionary
    if not root_found:
        where = trailer_pos if trailer_pos >= 0 else len(data)
        events.append(RepairEvent("E5", None, where, "/Root missing; body scanned linearly"))

    tail = data[-1024:].rstrip(WHITESPACE)
    if b"%%EOF" not in tail:
        how = "trailer located by keyword" if trailer_pos >= 0 else "no trailer keyword"
        events.append(RepairEvent("E6", None, len(data), f"%%EOF missing; {how}"))

    xref_problem = _check_xref(data)
    if xref_problem is not None:
        where = data.rfind(b"startxref")
        events.append(RepairEvent("E8", None, where if where >= 0 else len(data),
                                  f"{xref_problem}; objects located by linear scan"))
    return events, version, trailer, encrypted


def _parse_objects(data: bytes) -> tuple[dict[ObjectId, PdfValue], list[RepairEvent]]:
    spans = scan_objects(data)
    int_objects: dict[ObjectId, int] = {}
    for oid, (start, end) in spans:
        body = data[_HEADER_RE.match(data, start).end():end]
        m = re.match(rb"\s*(\d+)\s*(?:endobj)?\s*$", body)
        if m is not None:
            int_objects[oid] = int(m.group(1))

    events: list[RepairEvent] = []
    objects: dict[ObjectId, PdfValue] = {}
    for oid, (start, end) in spans:
        parsed = _parse_object(data, oid, start, end, int_objects)
        objects.pop(oid, None)  # last definition wins
        objects[oid] = parsed.value
        events.extend(parsed.events)

    first_ref: dict[ObjectId, int] = {}
    for oid, (start, _end) in spans:
        for target in references(objects[oid]):
            first_ref.setdefault(target, start)
    for target, offset in first_ref.items():
        if target not in objects:
            value, event = synthesize_missing_object(target, offset)
            objects[target] = value
            events.append(event)
    return objects, events


def parse_document(data: bytes) -> RawDocument:
    """Parse any byte string into a :class:`RawDocument`. Never raises."""
    objects, events = _parse_objects(data)
    structural, version, trailer, encrypted = _structural_checks(data, objects)
    events = sorted(events + structural, key=lambda e: e.byte_offset)
    return RawDocument(objects, version, events, trailer, encrypted)


def apply_structural_fallbacks(data: bytes, document: RawDocument) -> RawDocument:
    """Run the file-structure checks (E4, E5, E6, E8) on ``data`` and merge them into ``document``.

    Object-level events already on ``document`` are kept; E7 is handled while
    each stream is read.
    """
    structural, version, trailer, encrypted = _structural_checks(data, document.objects)
    kept = [e for e in document.diagnostics if e.code not in ("E4", "E5", "E6", "E8")]
    events = sorted(kept + structural, key=lambda e: e.byte_offset)
    return RawDocument(document.objects, version, events, trailer or document.trailer,
                       encrypted or document.encrypted)


# --------------------------------------------------------------------------
# streams


_FLATE = ("/FlateDecode", "/Fl")


def decode_stream(stream: Stream) -> DecodedStream:
    """Inflate FlateDecode streams; anything else comes back raw and flagged."""
    filt = stream.dictionary.get("/Filter")
    if filt is None:
        return DecodedStream(stream.data, raw=False)
    names = [filt] if isinstance(filt, Name) else list(filt.items) if isinstance(filt, Array) else [filt]
    if not names:
        return DecodedStream(stream.data, raw=False)
    if not all(isinstance(n, Name) and n.text in _FLATE for n in names):
        shown = ",".join(n.text if isinstance(n, Name) else "?" for n in names)
        return DecodedStream(stream.data, raw=True, diagnostic=f"unsupported filter {shown}")
    out = stream.data
    for _ in names:
        try:
            out = zlib.decompress(out)
        except zlib.error as exc:
            return DecodedStream(stream.data, raw=True, diagnostic=f"flate decode failed: {exc}")
    parms = stream.dictionary.get("/DecodeParms")
    if isinstance(parms, Dictionary) and "/Predictor" in parms:
        return DecodedStream(out, raw=False, diagnostic="predictor not applied")
    return DecodedStream(out, raw=False)


# --------------------------------------------------------------------------
# serialization (used to check repair idempotence)


def serialize_value(value: PdfValue) -> bytes:
    if isinstance(value, Numeric):
        return value.text.encode("ascii")
    if isinstance(value, LiteralString):
        return b"(" + value.raw + b")"
    if isinstance(value, HexString):
        return b"<" + value.raw + b">"
    if isinstance(value, Name):
        return value.text.encode("latin-1")
    if isinstance(value, Boolean):
        return b"true" if value.value else b"false"
    if isinstance(value, Null):
        return b"null"
    if isinstance(value, Reference):
        return f"{value.target.number} {value.target.version} R".encode("ascii")
    if isinstance(value, Array):
        return b"[" + b" ".join(serialize_value(v) for v in value.items) + b"]"
    if isinstance(value, Dictionary):
        parts = [k.encode("latin-1") + b" " + serialize_value(v) for k, v in value.items]
        return b"<<" + b" ".join(parts) + b">>"
    if isinstance(value, Stream):
        d = value.dictionary
        if not isinstance(d.get("/Length"), Reference):
            d = d.replace("/Length", Numeric(str(len(value.data))))
        return serialize_value(d) + b"\nstream\n" + value.data + b"\nendstream"
    raise TypeError(f"not a PDF value: {value!r}")


def serialize_document(document: RawDocument) -> bytes:
    """Write the object map back out as a minimal, structurally complete file."""
    version = document.header_version or "1.7"
    out = bytearray(f"%PDF-{version}\n".encode("ascii"))
    offsets: dict[ObjectId, int] = {}
    for oid, value in document.objects.items():
        offsets[oid] = len(out)
        out += f"{oid.number} {oid.version} obj\n".encode("ascii")
        out += serialize_value(value) + b"\nendobj\n"
    xref_at = len(out)
    size = max((o.number for o in offsets), default=0) + 1
    out += f"xref\n0 {size}\n".encode("ascii")
    by_number = {o.number: (off, o.version) for o, off in offsets.items()}
    for n in range(size):
        if n in by_number:
            off, gen = by_number[n]
            out += f"{off:010d} {gen:05d} n\r\n".encode("ascii")
        else:
            out += b"0000000000 65535 f\r\n"
    root = document.trailer.get("/Root") if document.trailer is not None else None
    if not isinstance(root, Reference) and offsets:
        root = Reference(next(iter(offsets)))
    trailer = f"trailer\n<</Size {size}".encode("ascii")
    if isinstance(root, Reference):
        trailer += b" /Root " + serialize_value(root)
    out += trailer + b">>\n" + f"startxref\n{xref_at}\n%%EOF\n".encode("ascii")
    return bytes(out)
