"""Parsing for structured model replies.

All structured replies use the same line-delimited shape: uppercase
``KEY: value`` fields, where a field's value may continue over following
lines until the next field starts, and list-valued fields hold one
``- item`` line per element. Every caller gets exactly one repair retry:
if the first reply fails validation, the request is re-issued with the
validation error appended, and a second failure raises ``SchemaError``.
"""

from __future__ import annotations

import re
from typing import Callable, TypeVar

from .errors import SchemaError

T = TypeVar("T")

_FIELD_RE = re.compile(r"^([A-Z][A-Z0-9_]*):\s?(.*)$")


def split_fields(reply: str) -> dict[str, str]:
    """Split a reply into KEY -> value blocks.

    Lines that do not start a new field are appended to the current
    field's value. Text before the first field is ignored.
    """
    fields: dict[str, str] = {}
    current: str | None = None
    for line in reply.splitlines():
        match = _FIELD_RE.match(line)
        if match:
            current = match.group(1)
            if current in fields:
                fields[current] += "\n" + match.group(2)
            else:
                fields[current] = match.group(2)
        elif current is not None:
            fields[current] += "\n" + line
    return {key: value.strip() for key, value in fields.items()}


def list_items(block: str) -> list[str]:
    """Extract ``- item`` lines from a field value."""
    items = []
    for line in block.splitlines():
        line = line.strip()
        if line.startswith("- "):
            items.append(line[2:].strip())
        elif line.startswith("-") and line != "-":
            items.append(line[1:].strip())
    return items


def fenced_block(reply: str, tag: str = "") -> str:
    """Return the contents of the first ``` fenced block (optionally tagged)."""
    pattern = re.compile(r"```" + re.escape(tag) + r"[ \t]*\n(.*?)```", re.DOTALL)
    match = pattern.search(reply)
    if not match:
        raise SchemaError(f"no fenced {tag or 'code'} block in reply")
    return match.group(1)


def parse_score(text: str, low: float = 0.0, high: float = 10.0) -> float:
    """Parse a numeric score and enforce its range."""
    try:
        value = float(text.strip())
    except ValueError:
        raise SchemaError(f"not a number: {text!r}") from None
    if not (low <= value <= high):
        raise SchemaError(f"score {value} outside [{low}, {high}]")
    return value


def with_repair(call: Callable[[str | None], str], parse: Callable[[str], T]) -> tuple[T, str]:
    """Run ``call`` and ``parse`` with exactly one repair retry.

    ``call`` receives ``None`` on the first attempt and the validation
    error text on the repair attempt; it returns the raw reply. Returns
    ``(parsed, raw_reply)``. A second validation failure propagates.
    """
    reply = call(None)
    try:
        return parse(reply), reply
    except SchemaError as first_error:
        reply = call(str(first_error))
        return parse(reply), reply
