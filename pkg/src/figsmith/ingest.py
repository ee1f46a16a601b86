"""Document loading, category classification, and method distillation.

Inputs are plain text (.txt), markdown (.md, front matter stripped), or
LaTeX (.tex, markup stripped to prose with ``[MATH]`` placeholders for
math). PDF is deliberately rejected; convert it to text first. The
loaded document is immutable; classification and extraction return new
values built from model replies.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import (
    DecodeError,
    EmptyDocumentError,
    ParseError,
    SchemaError,
    UnsupportedFormatError,
)
from .gateway import Gateway
from .replies import list_items, split_fields, with_repair


class Category(str, Enum):
    PAPER = "Paper"
    SURVEY = "Survey"
    BLOG = "Blog"
    TEXTBOOK = "Textbook"


class DocFormat(str, Enum):
    TEX = "tex"
    MD = "md"
    TXT = "txt"


@dataclass(frozen=True)
class SourceDocument:
    id: str
    category: Category
    raw_text: str
    token_count: int
    source_path: str
    format: DocFormat


@dataclass(frozen=True)
class Entity:
    id: str
    label: str
    kind: str = "concept"


@dataclass(frozen=True)
class Relation:
    source_id: str
    target_id: str
    label: str | None = None


@dataclass(frozen=True)
class MethodSummary:
    summary_text: str
    entities: tuple[Entity, ...] = ()
    relations: tuple[Relation, ...] = ()
    raw_reply: str = field(default="", compare=False)

    def validate(self) -> None:
        if not self.summary_text.strip():
            raise SchemaError("summary_text is empty")
        ids = [e.id for e in self.entities]
        if len(ids) != len(set(ids)):
            raise SchemaError("entity ids are not unique")
        known = set(ids)
        for relation in self.relations:
            if relation.source_id not in known or relation.target_id not in known:
                raise SchemaError(
                    f"relation {relation.source_id!r} -> {relation.target_id!r} references an unknown entity"
                )


def load_document(path: str | Path, format: DocFormat | str | None = None) -> SourceDocument:
    """Read and strip one source file; category defaults to Paper."""
    path = Path(path)
    if format is None:
        suffix = path.suffix.lower().lstrip(".")
    else:
        suffix = format.value if isinstance(format, DocFormat) else str(format).lower()
    if suffix == "pdf":
        raise UnsupportedFormatError(
            "PDF input is not parsed here; convert to .txt/.md/.tex first (e.g. pdftotext)"
        )
    try:
        doc_format = DocFormat(suffix)
    except ValueError:
        raise UnsupportedFormatError(f"unsupported format {suffix!r}; expected tex, md, or txt") from None
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as err:
        raise DecodeError(f"{path} is not valid UTF-8: {err}") from err
    if doc_format is DocFormat.TEX:
        text = strip_tex(text)
    elif doc_format is DocFormat.MD:
        text = strip_md(text)
    text = text.strip()
    if not text:
        raise EmptyDocumentError(f"{path} is empty after stripping")
    return SourceDocument(
        id=path.stem,
        category=Category.PAPER,
        raw_text=text,
        token_count=len(text.split()),
        source_path=str(path),
        format=doc_format,
    )


_TEX_MATH_ENVS = r"equation|align|eqnarray|gather|multline|math|displaymath|alignat"
_TEX_DROP = re.compile(r"\\(?:cite[a-zA-Z]*|ref|label|includegraphics)\*?(?:\[[^\]]*\])?\{[^{}]*\}")
_TEX_UNWRAP = re.compile(r"\\[a-zA-Z]+\*?(?:\[[^\]]*\])?\{([^{}]*)\}")
_TEX_BARE = re.compile(r"\\[a-zA-Z]+\*?")


def strip_tex(text: str) -> str:
    """Reduce LaTeX to prose: comments out, blocklist commands removed,
    wrapper commands unwrapped, math replaced by a [MATH] placeholder."""
    lines = []
    for line in text.splitlines():
        stripped = line.lstrip()
        if stripped.startswith("%"):
            continue
        lines.append(re.sub(r"(?<!\\)%.*$", "", line))
    text = "\n".join(lines)
    text = re.sub(
        r"\\begin\{(" + _TEX_MATH_ENVS + r")\*?\}.*?\\end\{\1\*?\}",
        " [MATH] ",
        text,
        flags=re.DOTALL,
    )
    text = re.sub(r"\$\$.*?\$\$", " [MATH] ", text, flags=re.DOTALL)
    text = re.sub(r"(?<!\\)\$[^$]*\$", " [MATH] ", text, flags=re.DOTALL)
    text = re.sub(r"\\\[.*?\\\]", " [MATH] ", text, flags=re.DOTALL)
    text = _TEX_DROP.sub(" ", text)
    previous = None
    while previous != text:  # unwrap nested wrappers inside-out
        previous = text
        text = _TEX_UNWRAP.sub(r"\1", text)
    text = re.sub(r"\\begin\{[^{}]*\}|\\end\{[^{}]*\}", " ", text)
    text = _TEX_BARE.sub(" ", text)
    text = text.replace("~", " ").replace("\\\\", " ")
    text = re.sub(r"[{}]", "", text)
    return _squeeze(text)


_MD_FRONT_MATTER = re.compile(r"\A---\n.*?\n---\n", re.DOTALL)
_MD_LINK = re.compile(r"!?\[([^\]]*)\]\([^)]*\)")


def strip_md(text: str) -> str:
    """Drop front matter and markdown syntax, keeping the prose."""
    text = _MD_FRONT_MATTER.sub("", text)
    text = re.sub(r"^```.*$", "", text, flags=re.MULTILINE)
    text = _MD_LINK.sub(r"\1", text)
    text = re.sub(r"^#{1,6}\s*", "", text, flags=re.MULTILINE)
    text = re.sub(r"[*_`]", "", text)
    text = re.sub(r"^>\s?", "", text, flags=re.MULTILINE)
    return _squeeze(text)


def _squeeze(text: str) -> str:
    text = re.sub(r"[ \t]+", " ", text)
    text = re.sub(r" ?\n ?", "\n", text)
    text = re.sub(r"\n{3,}", "\n\n", text)
    return text.strip()


# --- model-backed operations ---

CLASSIFY_PROMPT = """TASK: classify-category
Classify the document below into exactly one category.
Allowed labels: Paper, Survey, Blog, Textbook.
Reply with the single label and nothing else.

DOCUMENT:
{excerpt}
"""


def classify_category(doc: SourceDocument, text_model: Gateway) -> Category:
    """Ask the text model for the document category; answers outside the
    four labels raise ParseError."""
    reply = text_model.text(CLASSIFY_PROMPT.format(excerpt=doc.raw_text[:6000]))
    normalized = reply.strip().casefold()
    for category in Category:
        if normalized == category.value.casefold():
            return category
    raise ParseError(f"model reply {reply.strip()!r} is not one of the four categories")


EXTRACT_PROMPT = """TASK: extract-method
Distill the core methodology of the document below and list the key
entities and directed relations worth visualizing.
Reply exactly in this format (omit list lines if there are none):
SUMMARY: <a short methodology summary>
ENTITIES:
- <id> | <label> | <kind>
RELATIONS:
- <source_id> -> <target_id> | <label>

Entity ids must be unique single tokens; every relation endpoint must
be a declared entity id.

DOCUMENT:
{text}
"""

_RELATION_RE = re.compile(r"^(\S+)\s*->\s*(\S+)\s*(?:\|\s*(.*))?$")


def extract_method(doc: SourceDocument, text_model: Gateway) -> MethodSummary:
    """Distill the methodology summary plus entity/relation set."""

    def call(repair: str | None) -> str:
        prompt = EXTRACT_PROMPT.format(text=doc.raw_text)
        if repair is not None:
            prompt += f"\nREPAIR: the previous reply was invalid ({repair}); reply again in the exact format."
        return text_model.text(prompt)

    summary, raw = with_repair(call, _parse_method_reply)
    return MethodSummary(
        summary_text=summary.summary_text,
        entities=summary.entities,
        relations=summary.relations,
        raw_reply=raw,
    )


def _parse_method_reply(reply: str) -> MethodSummary:
    fields_map = split_fields(reply)
    if "SUMMARY" not in fields_map:
        raise SchemaError("missing SUMMARY field")
    entities = []
    for item in list_items(fields_map.get("ENTITIES", "")):
        parts = [part.strip() for part in item.split("|")]
        if not parts or not parts[0]:
            raise SchemaError(f"bad entity line {item!r}")
        entities.append(
            Entity(
                id=parts[0],
                label=parts[1] if len(parts) > 1 and parts[1] else parts[0],
                kind=parts[2] if len(parts) > 2 and parts[2] else "concept",
            )
        )
    relations = []
    for item in list_items(fields_map.get("RELATIONS", "")):
        match = _RELATION_RE.match(item)
        if not match:
            raise SchemaError(f"bad relation line {item!r}")
        label = match.group(3)
        relations.append(
            Relation(
                source_id=match.group(1),
                target_id=match.group(2),
                label=label.strip() if label and label.strip() else None,
            )
        )
    summary = MethodSummary(
        summary_text=fields_map["SUMMARY"].strip(),
        entities=tuple(entities),
        relations=tuple(relations),
    )
    summary.validate()
    return summary


def method_json_payload(doc: SourceDocument, category: Category, summary: MethodSummary) -> dict:
    """The ``method.json`` audit record for the run directory."""
    return {
        "document_id": doc.id,
        "category": category.value,
        "token_count": doc.token_count,
        "summary_text": summary.summary_text,
        "entities": [{"id": e.id, "label": e.label, "kind": e.kind} for e in summary.entities],
        "relations": [
            {"source_id": r.source_id, "target_id": r.target_id, "label": r.label}
            for r in summary.relations
        ],
        "raw_reply": summary.raw_reply,
    }


def method_from_json(payload: dict) -> tuple[MethodSummary, Category]:
    summary = MethodSummary(
        summary_text=payload["summary_text"],
        entities=tuple(Entity(**e) for e in payload["entities"]),
        relations=tuple(Relation(**r) for r in payload["relations"]),
        raw_reply=payload.get("raw_reply", ""),
    )
    return summary, Category(payload["category"])


def write_method_json(path: str | Path, doc: SourceDocument, category: Category, summary: MethodSummary) -> None:
    Path(path).write_text(
        json.dumps(method_json_payload(doc, category, summary), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
