"""Synthetic PDFs and graph tasks for tests, demos and the acceptance suite."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PdfObject",
    "build_pdf",
    "figure1a_objects",
    "figure1a_pdf",
    "malformed_fixtures",
    "generate_corpus",
    "write_corpus",
    "wiring_task",
]


@dataclass(frozen=True)
class PdfObject:
    number: int
    body: bytes
    version: int = 0
    terminated: bool = True

    def render(self) -> bytes:
        out = f"{self.number} {self.version} obj\n".encode() + self.body
        if self.terminated:
            out += b"\nendobj\n"
        return out


def stream_body(data: bytes, extra: bytes = b"", length: bool = True, flate: bool = False) -> bytes:
    if flate:
        data = zlib.compress(data)
        extra = b"/Filter /FlateDecode " + extra
    head = b"<<" + extra
    if length:
        head += b"/Length " + str(len(data)).encode()
    return head + b">>\nstream\n" + data + b"\nendstream"


def build_pdf(objects: list[PdfObject], *, version: str | None = "1.7", root: int | None = 1,
              xref: bool = True, eof: bool = True, bad_offsets: bool = False,
              trailer_extra: bytes = b"", header: bytes | None = None) -> bytes:
    """Assemble header, body, xref table and trailer around ``objects``."""
    if header is None:
        header = b"%PDF-" + version.encode() + b"\n" if version else b"%PDF-\n"
    out = bytearray(header)
    out += b"%\xe2\xe3\xcf\xd3\n"
    offsets: dict[tuple[int, int], int] = {}
    for obj in objects:
        offsets[(obj.number, obj.version)] = len(out)
        out += obj.render()
    size = max((n for n, _ in offsets), default=0) + 1
    xref_at = len(out)
    if xref:
        out += f"xref\n0 {size}\n".encode()
        by_number = {n: (off, g) for (n, g), off in offsets.items()}
        for n in range(size):
            if n in by_number:
                off, gen = by_number[n]
                if bad_offsets:
                    off += 7
                out += f"{off:010d} {gen:05d} n\r\n".encode()
            else:
                out += b"0000000000 65535 f\r\n"
    out += f"trailer\n<</Size {size}".encode()
    if root is not None:
        out += f" /Root {root} 0 R".encode()
    out += trailer_extra + b">>\n"
    if xref:
        out += f"startxref\n{xref_at}\n".encode()
    if eof:
        out += b"%%EOF\n"
    return bytes(out)


JS_PAYLOAD = b"var s = unescape('%u9090%u9090'); while (s.length < 0x4000) s += s; app.alert(s);"


def figure1a_objects() -> list[PdfObject]:
    """The five-object body of the running example: a catalog whose OpenAction runs a JS stream."""
    return [
        PdfObject(1, b"<< /Type /Catalog /Outlines 2 0 R /Pages 3 0 R\n"
                     b"   /OpenAction << /JS 5 0 R /S /JavaScript >> >>"),
        PdfObject(2, b"<< /Type /Outlines /Count 0 >>"),
        PdfObject(3, b"<< /Type /Pages /Kids [4 0 R] /Count 1 >>"),
        PdfObject(4, b"<< /Type /Page /Parent 3 0 R /MediaBox [0 0 612 792] >>"),
        PdfObject(5, stream_body(JS_PAYLOAD)),
    ]


def figure1a_pdf() -> bytes:
    return build_pdf(figure1a_objects())


# ---------------------------------------------------------------------------
# malformed fixtures


def _variants(rng: np.random.Generator, k: int) -> list[bytes]:
    words = [b"Title", b"Author", b"Subject", b"Keywords", b"Creator"]
    return [words[int(rng.integers(len(words)))] for _ in range(k)]


def malformed_fixtures(seed: int = 0) -> list[tuple[str, bytes, frozenset[str]]]:
    """Crafted damaged PDFs with the exact set of repair codes each should trigger.

    Four or more files per error class, plus truncated copies of valid files
    (which must at least report the missing ``%%EOF``; for names starting with
    ``fuzz_truncate`` the code set is a lower bound, for ``fuzz_bytes`` it is empty
    and only totality is expected).
    """
    rng = np.random.default_rng(seed)
    base = figure1a_objects()
    fixtures: list[tuple[str, bytes, frozenset[str]]] = []

    def add(name, data, codes):
        fixtures.append((name, data, frozenset(codes)))

    # E1: string overflow, the object loses ")" and possibly ">>" / "endobj"
    payload = b"A" * 64 + b"%u9090%u9090"
    add("e1_overflow_eof", build_pdf(base + [PdfObject(6, b"<< /JS (" + payload, terminated=False)]),
        {"E1"})
    add("e1_overflow_before_next", build_pdf(
        base[:2] + [PdfObject(6, b"<< /Title (" + payload + b" >>", terminated=False)] + base[2:]),
        {"E1"})
    add("e1_nested_dict", build_pdf(
        base + [PdfObject(6, b"<< /AA << /O << /JS (" + payload + b"\nendobj")]), {"E1"})
    add("e1_inner_paren", build_pdf(
        base + [PdfObject(6, b"<< /Info [(a) (b(c " + payload, terminated=False)]), {"E1"})
    add("e1_trailing_backslash", build_pdf(
        base + [PdfObject(6, b"<< /" + _variants(rng, 1)[0] + b" (abc\\", terminated=False)]),
        {"E1"})

    # E2: dangling references
    add("e2_metadata", build_pdf(
        [PdfObject(1, b"<< /Type /Catalog /Pages 3 0 R /Metadata 9 0 R >>")] + base[1:]), {"E2"})
    add("e2_twice_same", build_pdf(
        base + [PdfObject(6, b"<< /A 12 0 R /B 12 0 R >>")]), {"E2"})
    add("e2_in_array", build_pdf(
        base + [PdfObject(6, b"<< /Kids [4 0 R 20 0 R 21 0 R] >>")]), {"E2"})
    add("e2_in_stream_dict", build_pdf(
        base + [PdfObject(6, stream_body(b"BT ET", extra=b"/Resources 30 0 R "))]), {"E2"})

    # E3: incomplete key/value pairs
    add("e3_missing_value", build_pdf(base + [PdfObject(6, b"<< /Type >>")]), {"E3"})
    add("e3_truncated_array", build_pdf(
        base + [PdfObject(6, b"<< /Type /Pages /Kids [3 0 R 4 0 R", terminated=False)]), {"E3"})
    add("e3_nested_truncated", build_pdf(
        base + [PdfObject(6, b"<< /Font << /F1 << /Type /Font /Subtype", terminated=False)]), {"E3"})
    add("e3_missing_value_mid", build_pdf(
        base + [PdfObject(6, b"<< /A /B /C >>")]), {"E3"})
    add("e3_missing_endobj", build_pdf(
        base[:2] + [PdfObject(6, b"<< /Type /Annot >>", terminated=False)] + base[2:]), {"E3"})

    # E4: header without version
    for i, header in enumerate([b"%PDF-\n", b"%PDX-1.4\n", b"", b"%PDF-x.y\n"]):
        add(f"e4_header_{i}", build_pdf(base, header=header), {"E4"})

    # E5: trailer without /Root
    for i in range(4):
        extra = [b"", b" /Info 2 0 R", b" /ID [<00> <01>]", b" /Prev 0"][i]
        add(f"e5_no_root_{i}", build_pdf(base, root=None, trailer_extra=extra), {"E5"})

    # E6: %%EOF missing
    for i in range(4):
        data = build_pdf(base)
        data = data[: data.rindex(b"%%EOF")] + [b"", b"\n", b"% junk", b"\x00\x00"][i]
        add(f"e6_no_eof_{i}", data, {"E6"})

    # E7: stream dictionary without usable /Length
    add("e7_no_length", build_pdf(base[:4] + [PdfObject(5, stream_body(JS_PAYLOAD, length=False))]),
        {"E7"})
    add("e7_wrong_length", build_pdf(
        base[:4] + [PdfObject(5, b"<</Length 9999>>\nstream\n" + JS_PAYLOAD + b"\nendstream")]),
        {"E7"})
    add("e7_dangling_length_free", build_pdf(
        base[:4] + [PdfObject(5, b"<</Length /Unknown>>\nstream\n" + JS_PAYLOAD + b"\nendstream")]),
        {"E7"})
    add("e7_flate_no_length", build_pdf(
        base[:4] + [PdfObject(5, stream_body(JS_PAYLOAD, length=False, flate=True))]), {"E7"})

    # E8: broken cross-reference information
    add("e8_bad_offsets", build_pdf(base, bad_offsets=True), {"E8"})
    data = build_pdf(base)
    sx = data.rindex(b"startxref\n") + len(b"startxref\n")
    end = data.index(b"\n", sx)
    add("e8_startxref_beyond", data[:sx] + b"99999999" + data[end:], {"E8"})
    add("e8_startxref_wrong", data[:sx] + str(sx - 40).encode() + data[end:], {"E8"})
    xr = data.index(b"xref\n0 ")
    add("e8_xref_garbled", data[:xr] + b"xref\n0 6\nGARBAGE" + data[xr + 20:], {"E8"})

    # fuzz: truncated copies of valid files always lose %%EOF
    valid = [figure1a_pdf()] + [generate_corpus(1, 1, seed=seed + i)[j][0] for i in range(2) for j in range(2)]
    for i in range(8):
        src = valid[i % len(valid)]
        cut = int(rng.integers(len(src) // 4, len(src) - 8))
        data = src[:cut]
        codes = {"E6"}
        fixtures.append((f"fuzz_truncate_{i}", data, frozenset(codes)))
    # fuzz: random byte corruption, only totality is asserted
    for i in range(4):
        src = bytearray(valid[i % len(valid)])
        for pos in rng.integers(0, len(src), size=12):
            src[int(pos)] = int(rng.integers(0, 256))
        fixtures.append((f"fuzz_bytes_{i}", bytes(src), frozenset()))
    return fixtures


# ---------------------------------------------------------------------------
# labeled corpus


def _content_stream(rng: np.random.Generator) -> bytes:
    lines = [b"BT", b"/F1 %d Tf" % int(rng.integers(8, 24)), b"%d %d Td" % (int(rng.integers(20, 400)),
                                                                       int(rng.integers(20, 700)))]
    for _ in range(int(rng.integers(1, 5))):
        lines.append(b"(Lorem ipsum %d) Tj" % int(rng.integers(1000)))
    lines.append(b"ET")
    return b"\n".join(lines)


def generate_pdf(rng: np.random.Generator, malicious: bool) -> bytes:
    """One synthetic PDF. Malicious files carry an OpenAction whose /JS points at a stream."""
    n_pages = int(rng.integers(1, 4))
    objs: list[PdfObject] = []
    next_num = 4
    page_nums = []
    font_num = 3
    for _ in range(n_pages):
        page_nums.append(next_num)
        next_num += 2

    catalog = [b"/Type /Catalog", b"/Pages 2 0 R"]
    extra_objs: list[PdfObject] = []
    if rng.random() < 0.5:
        outlines = next_num
        next_num += 1
        catalog.append(b"/Outlines %d 0 R" % outlines)
        extra_objs.append(PdfObject(outlines, b"<< /Type /Outlines /Count 0 >>"))
    if rng.random() < 0.4:
        catalog.append(b"/PageMode /UseOutlines")
    if malicious:
        js = next_num
        next_num += 1
        payload = JS_PAYLOAD + b" // %d" % int(rng.integers(10**6))
        catalog.append(b"/OpenAction << /JS %d 0 R /S /JavaScript >>" % js)
        extra_objs.append(PdfObject(js, stream_body(payload, flate=bool(rng.random() < 0.5))))
    else:
        roll = rng.random()
        if roll < 0.4:
            catalog.append(b"/OpenAction << /JS (app.alert\\('hello'\\);) /S /JavaScript >>")
        elif roll < 0.7:
            catalog.append(b"/OpenAction [%d 0 R /Fit]" % page_nums[0])
    objs.append(PdfObject(1, b"<< " + b" ".join(catalog) + b" >>"))

    kids = b" ".join(b"%d 0 R" % p for p in page_nums)
    objs.append(PdfObject(2, b"<< /Type /Pages /Kids [" + kids + b"] /Count %d >>" % n_pages))
    objs.append(PdfObject(font_num, b"<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica >>"))
    for p in page_nums:
        box = b"[0 0 612 792]" if rng.random() < 0.7 else b"[0 0 595 842]"
        page = (b"<< /Type /Page /Parent 2 0 R /MediaBox " + box
                + b" /Resources << /Font << /F1 %d 0 R >> /ProcSet [/PDF /Text] >>" % font_num
                + b" /Contents %d 0 R >>" % (p + 1))
        objs.append(PdfObject(p, page))
        objs.append(PdfObject(p + 1, stream_body(_content_stream(rng), flate=bool(rng.random() < 0.5))))
    if rng.random() < 0.5:
        info = next_num
        next_num += 1
        extra_objs.append(PdfObject(info, b"<< /Producer (synthetic %d) /CreationDate (D:2024) >>"
                                    % int(rng.integers(100))))
    objs.extend(extra_objs)
    order = rng.permutation(len(objs))
    return build_pdf([objs[i] for i in order], eof=bool(rng.random() < 0.9))


def generate_corpus(n_benign: int, n_malicious: int, seed: int = 0) -> list[tuple[bytes, int]]:
    """Labeled synthetic PDFs (1 = malicious), benign first. Files are unique."""
    rng = np.random.default_rng(seed)
    out = [(generate_pdf(rng, False), 0) for _ in range(n_benign)]
    out += [(generate_pdf(rng, True), 1) for _ in range(n_malicious)]
    return out


def write_corpus(directory, n_benign: int, n_malicious: int, seed: int = 0) -> None:
    """Write a corpus as ``benign/*.pdf`` and ``malicious/*.pdf`` under ``directory``."""
    from pathlib import Path

    root = Path(directory)
    for sub in ("benign", "malicious"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for i, (data, label) in enumerate(generate_corpus(n_benign, n_malicious, seed)):
        sub = "malicious" if label else "benign"
        (root / sub / f"{sub}_{i:04d}.pdf").write_bytes(data)


# ---------------------------------------------------------------------------
# graph-only tasks


def wiring_task(n_graphs: int, seed: int = 0, n_per_kind: int = 4, n_edges: int = 6, dim: int = 8):
    """Graphs whose classes differ only in wiring.

    Every graph has ``n_per_kind`` nodes of two kinds with fixed one-hot
    feature vectors, so the mean node vector is the same in both classes. Class 0 only
    links nodes of the same kind, class 1 only links nodes of different kinds.
    Returns ``(x, edges, label)`` triples, labels alternating.
    """
    rng = np.random.default_rng(seed)
    kind_vectors = np.eye(dim)[:2]
    out = []
    for i in range(n_graphs):
        label = i % 2
        kinds = np.array([0] * n_per_kind + [1] * n_per_kind)
        rng.shuffle(kinds)
        x = kind_vectors[kinds]
        same = [(u, v) for u in range(len(kinds)) for v in range(len(kinds)) if u < v and kinds[u] == kinds[v]]
        cross = [(u, v) for u in range(len(kinds)) for v in range(len(kinds)) if u < v and kinds[u] != kinds[v]]
        pool = cross if label else same
        chosen = rng.choice(len(pool), size=min(n_edges, len(pool)), replace=False)
        edges = np.array([pool[j] for j in sorted(chosen)])
        flip = rng.random(len(edges)) < 0.5
        edges[flip] = edges[flip][:, ::-1]
        out.append((x, edges, label))
    return out


def random_graphs(n_graphs: int, seed: int = 0, min_nodes: int = 5, max_nodes: int = 8,
                  edge_prob: float = 0.3, dim: int = 1):
    """Random directed graphs with constant unit node features, as ``(x, edges)`` pairs."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_graphs):
        n = int(rng.integers(min_nodes, max_nodes + 1))
        mask = (rng.random((n, n)) < edge_prob) & ~np.eye(n, dtype=bool)
        out.append((np.ones((n, dim)), np.argwhere(mask)))
    return out


def fragile_linear_gin(threshold: float, in_dim: int = 1):
    """A hand-set GIN that is linear in the edge weights and easy to flip.

    Width 1, identity activations, unit weights, zero biases and a frozen zero
    epsilon. On unit node features the readout is the mean over nodes of the
    two-hop aggregated degree. The malicious logit is that readout minus
    ``threshold`` and the benign logit is fixed at zero.
    """
    import torch

    from .gin import DTYPE, GINClassifier

    model = GINClassifier(hidden=1, activation="identity", learn_eps=False, epochs=0)
    model.n_features_in_ = in_dim
    model.classes_ = np.array([0, 1])
    model.history_ = []
    model.module_ = model._build(in_dim).to(DTYPE)
    with torch.no_grad():
        for p in model.module_.mlps.parameters():
            p.copy_(torch.ones_like(p) if p.ndim == 2 else torch.zeros_like(p))
        model.module_.head.weight.copy_(torch.tensor([[0.0], [1.0]], dtype=DTYPE))
        model.module_.head.bias.copy_(torch.tensor([0.0, -threshold], dtype=DTYPE))
    model.module_.eval()
    return model
