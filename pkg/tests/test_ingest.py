from __future__ import annotations

import pytest

from figsmith.errors import (
    DecodeError,
    EmptyDocumentError,
    ParseError,
    SchemaError,
    UnsupportedFormatError,
)
from figsmith.ingest import (
    Category,
    classify_category,
    extract_method,
    load_document,
    strip_tex,
)

from conftest import make_gateway


def test_load_txt_counts_whitespace_tokens(tmp_path):
    path = tmp_path / "a.txt"
    path.write_text("hello world", encoding="utf-8")
    doc = load_document(path)
    assert doc.token_count == 2
    assert doc.raw_text == "hello world"
    assert doc.category is Category.PAPER
    assert doc.format.value == "txt"


def test_load_tex_strips_markup(tmp_path):
    path = tmp_path / "b.tex"
    path.write_text("\\section{X} body", encoding="utf-8")
    doc = load_document(path)
    # strip rules applied by hand: \section{X} unwraps to X, body stays
    assert "X" in doc.raw_text
    assert "body" in doc.raw_text
    assert "\\" not in doc.raw_text


def test_strip_tex_rules():
    source = (
        "% a comment line\n"
        "\\section{Method}\n"
        "We \\emph{boldly} build on \\cite{someone2020} and Eq. $x^2 + y$ here.\n"
        "\\begin{equation}\na = b\n\\end{equation}\n"
        "\\includegraphics[width=\\linewidth]{fig.pdf}\n"
        "Tail text. % trailing comment\n"
    )
    text = strip_tex(source)
    assert "comment" not in text
    assert "Method" in text
    assert "boldly" in text
    assert "someone2020" not in text
    assert "[MATH]" in text
    assert "x^2" not in text
    assert "a = b" not in text
    assert "fig.pdf" not in text
    assert "Tail text." in text


def test_load_md_strips_front_matter(tmp_path):
    path = tmp_path / "post.md"
    path.write_text("---\ntitle: T\n---\n# Heading\nSome *body* [link](http://x) text.\n", encoding="utf-8")
    doc = load_document(path)
    assert "title: T" not in doc.raw_text
    assert "Heading" in doc.raw_text
    assert "link" in doc.raw_text
    assert "http://x" not in doc.raw_text


def test_load_empty_md_errors(tmp_path):
    path = tmp_path / "empty.md"
    path.write_text("", encoding="utf-8")
    with pytest.raises(EmptyDocumentError):
        load_document(path)


def test_load_pdf_rejected_with_pointer(tmp_path):
    path = tmp_path / "paper.pdf"
    path.write_bytes(b"%PDF-1.4 fake")
    with pytest.raises(UnsupportedFormatError, match="convert"):
        load_document(path)


def test_load_non_utf8_errors(tmp_path):
    path = tmp_path / "b.txt"
    path.write_bytes(b"\xff\xfe broken")
    with pytest.raises(DecodeError):
        load_document(path)


def test_load_missing_file_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_document(tmp_path / "nope.txt")


def test_load_is_deterministic(sample_doc):
    assert load_document(sample_doc) == load_document(sample_doc)


def test_token_count_recomputable(sample_doc):
    doc = load_document(sample_doc)
    assert doc.token_count == len(doc.raw_text.split())


def test_classify_passthrough(sample_doc):
    gw = make_gateway(text={"classify_reply": "Textbook"})
    doc = load_document(sample_doc)
    assert classify_category(doc, gw) is Category.TEXTBOOK


def test_classify_normalizes_whitespace_and_case(sample_doc):
    gw = make_gateway(text={"classify_reply": " blog\n"})
    doc = load_document(sample_doc)
    assert classify_category(doc, gw) is Category.BLOG


def test_classify_out_of_enum_errors(sample_doc):
    gw = make_gateway(text={"classify_reply": "poster"})
    doc = load_document(sample_doc)
    with pytest.raises(ParseError):
        classify_category(doc, gw)


VALID_EXTRACT = (
    "SUMMARY: A three-part pipeline.\n"
    "ENTITIES:\n"
    "- enc | Encoder | module\n"
    "- dec | Decoder | module\n"
    "- att | Attention | mechanism\n"
    "RELATIONS:\n"
    "- enc -> att | feeds\n"
    "- att -> dec |\n"
)


def test_extract_passthrough(sample_doc):
    gw = make_gateway(text={"script": {"extract-method": VALID_EXTRACT}})
    summary = extract_method(load_document(sample_doc), gw)
    assert len(summary.entities) == 3
    assert len(summary.relations) == 2
    assert summary.relations[0].label == "feeds"
    assert summary.relations[1].label is None
    assert summary.raw_reply == VALID_EXTRACT


def test_extract_dangling_relation_fails_after_repair(sample_doc):
    bad = "SUMMARY: s\nENTITIES:\n- a | A | x\nRELATIONS:\n- a -> ghost |\n"
    gw = make_gateway(text={"script": {"extract-method": bad}})
    with pytest.raises(SchemaError, match="ghost"):
        extract_method(load_document(sample_doc), gw)


def test_extract_repair_retry_recovers(sample_doc):
    bad = "SUMMARY: s\nENTITIES:\n- a | A | x\nRELATIONS:\n- a -> ghost |\n"
    gw = make_gateway(text={"script": {"extract-method": {"initial": bad, "repair": VALID_EXTRACT}}})
    summary = extract_method(load_document(sample_doc), gw)
    assert len(summary.entities) == 3


def test_extract_empty_entity_list_is_legal(sample_doc):
    gw = make_gateway(text={"script": {"extract-method": "SUMMARY: just prose\nENTITIES:\nRELATIONS:\n"}})
    summary = extract_method(load_document(sample_doc), gw)
    assert summary.entities == ()
    assert summary.relations == ()


def test_extract_heuristic_mock_never_dangles(sample_doc):
    summary = extract_method(load_document(sample_doc), make_gateway())
    summary.validate()
    known = {entity.id for entity in summary.entities}
    for relation in summary.relations:
        assert relation.source_id in known and relation.target_id in known
