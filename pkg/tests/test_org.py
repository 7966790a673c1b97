import json

import pytest

from pdfir import pdf_to_org
from pdfir.ir import IrEntry, IrProgram, VType, parse_ir_text
from pdfir.org import Org, build_org, extract_refs, load_org, org_from_json, org_to_json, save_org
from pdfir.parser import ObjectId


def oid(text):
    return ObjectId.parse(text)


def test_running_example_graph(fig_org):
    assert fig_org.node_ids == [ObjectId(i, 0) for i in range(1, 6)]
    assert fig_org.sorted_edges() == [
        (oid("1-0"), oid("2-0")), (oid("1-0"), oid("3-0")), (oid("1-0"), oid("5-0")),
        (oid("3-0"), oid("4-0")), (oid("4-0"), oid("3-0"))]
    assert fig_org.edge_index() == [(0, 1), (0, 2), (0, 4), (2, 3), (3, 2)]


@pytest.mark.parametrize("vtype, value, expected", [
    (VType.REF, "3-0", ["3-0"]),
    (VType.REF_LIST, "[1-0,2-0]", ["1-0", "2-0"]),
    (VType.MIX_LIST, "[(Notice),14-9]", ["14-9"]),
    (VType.MIX_LIST, "[(7-0),1,<</A 2-0>>]", ["2-0"]),
    (VType.NUM_LIST, "[1,2]", []),
    (VType.STR, "(5-0)", []),
])
def test_extract_refs(vtype, value, expected):
    entry = IrEntry(oid("1-0"), "/K", vtype, value)
    assert [str(r) for r in extract_refs(entry)] == expected


def test_dangling_target_becomes_empty_node():
    program = parse_ir_text("2-0, /Next, ref, 9-0\n")
    org = build_org(program)
    assert org.node_ids == [oid("2-0"), oid("9-0")]
    assert org.entries(oid("9-0")) == ()
    assert org.edges == frozenset({(oid("2-0"), oid("9-0"))})


def test_duplicate_references_give_one_edge():
    program = parse_ir_text("1-0, /A, ref, 2-0\n1-0, /B, ref_list, [2-0,2-0]\n2-0, /T, num, 1\n")
    assert build_org(program).sorted_edges() == [(oid("1-0"), oid("2-0"))]


def test_org_validation():
    with pytest.raises(ValueError):
        Org(((oid("2-0"), ()), (oid("1-0"), ())), frozenset())
    with pytest.raises(ValueError):
        Org(((oid("1-0"), ()),), frozenset({(oid("1-0"), oid("3-0"))}))


def test_json_round_trip(fig_org, tmp_path):
    text = org_to_json(fig_org)
    data = json.loads(text)
    assert [n["id"] for n in data["nodes"]] == ["1-0", "2-0", "3-0", "4-0", "5-0"]
    assert ["1-0", "5-0"] in data["edges"]
    assert org_from_json(text) == fig_org
    save_org(fig_org, tmp_path / "g.json")
    assert load_org(tmp_path / "g.json") == fig_org


def test_empty_program_gives_empty_graph():
    org = build_org(IrProgram({}, {}))
    assert len(org) == 0 and not org.edges


def test_graphs_of_fixture_files_are_closed(fixture_set):
    for name, data, _ in fixture_set:
        org = pdf_to_org(data)
        nodes = set(org.node_ids)
        assert all(a in nodes and b in nodes for a, b in org.edges), name
