import zlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdfir.parser import (
    ERROR_CODES,
    Array,
    Boolean,
    Dictionary,
    HexString,
    LiteralString,
    MalformedValue,
    Name,
    Null,
    Numeric,
    ObjectId,
    Reference,
    Stream,
    apply_structural_fallbacks,
    decode_stream,
    parse_document,
    parse_value,
    references,
    scan_objects,
    serialize_document,
    serialize_value,
    synthesize_missing_object,
)
from pdfir.synthetic import PdfObject, build_pdf, figure1a_pdf, stream_body


def test_object_id_round_trip():
    oid = ObjectId.parse("14-9")
    assert oid == ObjectId(14, 9)
    assert str(oid) == "14-9"
    with pytest.raises(ValueError):
        ObjectId.parse("14 9")
    with pytest.raises(ValueError):
        ObjectId(-1, 0)


def test_parse_value_atoms():
    value, end = parse_value(b"<< /A (x\\)y) /B <414243> /C [1 2.5 -3] /D true /E null /F 3 0 R >>")
    assert isinstance(value, Dictionary)
    assert value.get("/A") == LiteralString(b"x)y", b"x\\)y")
    assert value.get("/B").data == b"ABC"
    assert [n.text for n in value.get("/C")] == ["1", "2.5", "-3"]
    assert value.get("/D") == Boolean(True)
    assert isinstance(value.get("/E"), Null)
    assert value.get("/F") == Reference(ObjectId(3, 0))
    assert end > 0


def test_literal_escapes_and_nesting():
    value, _ = parse_value(b"(a(b)c\\n\\101\\\\)")
    assert value.data == b"a(b)c\nA\\"


def test_hex_string_odd_length_pads_zero():
    value, _ = parse_value(b"<4142 4>")
    assert value.data == b"AB@"


def test_name_hash_escape_kept_verbatim():
    value, _ = parse_value(b"/A#20B")
    assert isinstance(value, Name)
    assert value.text.startswith("/A")


def test_malformed_value_raises_in_strict_mode():
    with pytest.raises(MalformedValue):
        parse_value(b")")


def test_scan_finds_headers_in_order():
    data = figure1a_pdf()
    found = [oid for oid, _ in scan_objects(data)]
    assert found == [ObjectId(i, 0) for i in range(1, 6)]


def test_last_definition_wins():
    doc = parse_document(b"%PDF-1.4\n1 0 obj << /A 9 0 R >> endobj\n1 0 obj << /B 1 >> endobj\n")
    assert doc.objects[ObjectId(1, 0)] == Dictionary((("/B", Numeric("1")),))


def test_dangling_reference_synthesized_as_null():
    pdf = build_pdf([PdfObject(1, b"<< /Type /Catalog /Extra 7 0 R >>")])
    doc = parse_document(pdf)
    assert isinstance(doc.objects[ObjectId(7, 0)], Null)
    assert doc.codes == ["E2"]
    value, event = synthesize_missing_object(ObjectId(7, 0), 12)
    assert isinstance(value, Null) and event.code == "E2" and event.byte_offset == 12


def test_clean_file_has_no_events():
    doc = parse_document(figure1a_pdf())
    assert doc.codes == []
    assert doc.header_version == "1.7"
    assert len(doc.objects) == 5


def test_references_walks_nested_values():
    value, _ = parse_value(b"<< /A [1 0 R << /B 2 0 R >>] /C 3 1 R >>")
    assert references(value) == [ObjectId(1, 0), ObjectId(2, 0), ObjectId(3, 1)]


def test_flate_stream_decodes():
    pdf = build_pdf([PdfObject(1, b"<< /Type /Catalog >>"), PdfObject(2, stream_body(b"hello", flate=True))])
    doc = parse_document(pdf)
    stream = doc.objects[ObjectId(2, 0)]
    assert isinstance(stream, Stream)
    decoded = decode_stream(stream)
    assert decoded.data == b"hello"
    assert decoded.raw is False
    assert stream.data == zlib.compress(b"hello")


def test_bad_flate_keeps_raw_bytes():
    stream = Stream(Dictionary((("/Filter", Name("/FlateDecode")),)), b"not zlib")
    decoded = decode_stream(stream)
    assert decoded.data == b"not zlib"
    assert decoded.diagnostic


def test_wrong_length_is_repaired():
    body = b"<< /Length 999 >>\nstream\nabc\nendstream"
    doc = parse_document(build_pdf([PdfObject(1, b"<< /Type /Catalog >>"), PdfObject(2, body)]))
    assert doc.codes == ["E7"]
    assert doc.objects[ObjectId(2, 0)].data == b"abc"


def test_serialize_document_reparses_to_same_objects():
    doc = parse_document(figure1a_pdf())
    again = parse_document(serialize_document(doc))
    assert again.objects == doc.objects


def test_structural_fallbacks_merge():
    data = figure1a_pdf().replace(b"%%EOF", b"")
    doc = parse_document(data)
    assert "E6" in doc.codes
    merged = apply_structural_fallbacks(data, doc)
    assert merged.codes == doc.codes


def test_every_fixture_matches_expected_codes(fixture_set):
    assert len(fixture_set) >= 40
    for name, data, codes in fixture_set:
        found = set(parse_document(data).codes)
        if name.startswith("fuzz_truncate"):
            assert codes <= found, name
        elif name.startswith("fuzz_bytes"):
            continue
        else:
            assert found == codes, (name, found, codes)


def test_at_least_four_fixtures_per_code(fixture_set):
    for code in ERROR_CODES:
        exact = [n for n, _, c in fixture_set if c == {code}]
        assert len(exact) >= 4, code


def test_event_format_is_tab_separated():
    doc = parse_document(b"1 0 obj << /A 2 0 R >> endobj")
    line = doc.diagnostics[0].format()
    assert line.count("\t") == 3


atoms = st.one_of(
    st.integers(-10**6, 10**6).map(lambda i: Numeric(str(i))),
    st.binary(max_size=12).map(lambda b: LiteralString(b, b"".join(b"\\%03o" % c for c in b))),
    st.binary(max_size=6).map(lambda b: HexString(b, b.hex().encode())),
    st.booleans().map(Boolean),
    st.just(Null()),
    st.tuples(st.integers(1, 50), st.integers(0, 3)).map(lambda t: Reference(ObjectId(*t))),
    st.from_regex(r"/[A-Za-z][A-Za-z0-9]{0,6}", fullmatch=True).map(Name),
)
values = st.recursive(
    atoms,
    lambda inner: st.one_of(
        st.lists(inner, max_size=4).map(lambda xs: Array(tuple(xs))),
        st.dictionaries(st.from_regex(r"/[A-Z][a-z]{0,5}", fullmatch=True), inner, max_size=4)
        .map(lambda d: Dictionary(tuple(d.items()))),
    ),
    max_leaves=12,
)


def _data(value):
    if isinstance(value, LiteralString):
        return ("s", value.data)
    if isinstance(value, HexString):
        return ("s", value.data)
    if isinstance(value, Array):
        return [_data(v) for v in value]
    if isinstance(value, Dictionary):
        return [(k, _data(v)) for k, v in value.items]
    return value


@settings(max_examples=200, deadline=None)
@given(values)
def test_serialize_parse_round_trip(value):
    parsed, _ = parse_value(serialize_value(value))
    assert _data(parsed) == _data(value)


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=400))
def test_parse_document_is_total_on_random_bytes(data):
    doc = parse_document(data)
    assert set(doc.codes) <= set(ERROR_CODES)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 8))
def test_parse_document_is_total_on_mutations(seed, n):
    import random

    r = random.Random(seed)
    data = bytearray(figure1a_pdf())
    for _ in range(n):
        i = r.randrange(len(data))
        op = r.randrange(3)
        if op == 0:
            data[i] = r.randrange(256)
        elif op == 1:
            del data[i]
        else:
            data[i:i] = bytes([r.randrange(256)])
    doc = parse_document(bytes(data))
    for target in (t for v in doc.objects.values() for t in references(v)):
        assert target in doc.objects
