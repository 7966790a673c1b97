"""Tolerant PDF parsing, object-level IR, reference graphs, object embeddings and GIN classification."""

from .ir import IrEntry, IrProgram, VType, convert_document, emit_ir_text, parse_ir_text
from .org import Org, build_org
from .parser import ObjectId, RawDocument, RepairEvent, parse_document

__version__ = "0.1.0"

__all__ = [
    "ObjectId", "RawDocument", "RepairEvent", "parse_document",
    "IrEntry", "IrProgram", "VType", "convert_document", "emit_ir_text", "parse_ir_text",
    "Org", "build_org", "pdf_to_org",
]


def pdf_to_org(data: bytes) -> Org:
    """Parse raw bytes and build the object reference graph."""
    return build_org(convert_document(parse_document(data)))
