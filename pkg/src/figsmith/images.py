"""PNG round-tripping helpers.

Images travel through the pipeline as PIL ``Image`` objects and are
persisted as 8-bit RGB PNG. A JSON side-channel (the ``figmeta`` tEXt
chunk) carries the machine-readable text index that the rasterizer
emits; it survives save/load but is dropped by any pixel-level edit.
"""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path

from PIL import Image
from PIL.PngImagePlugin import PngInfo

FIGMETA_KEY = "figmeta"


def png_bytes(image: Image.Image) -> bytes:
    """Encode an image to PNG bytes, preserving its figmeta chunk."""
    buf = io.BytesIO()
    info = None
    meta = image.info.get(FIGMETA_KEY)
    if meta is not None:
        info = PngInfo()
        info.add_text(FIGMETA_KEY, meta)
    image.save(buf, "PNG", pnginfo=info)
    return buf.getvalue()


def from_png_bytes(data: bytes) -> Image.Image:
    image = Image.open(io.BytesIO(data))
    image.load()
    if image.mode not in ("RGB", "RGBA"):
        image = image.convert("RGB")
    return image


def save_png(image: Image.Image, path: str | Path) -> None:
    Path(path).write_bytes(png_bytes(image))


def load_png(path: str | Path) -> Image.Image:
    return from_png_bytes(Path(path).read_bytes())


def get_figmeta(image: Image.Image) -> dict | None:
    """Return the decoded figmeta payload, if the image carries one."""
    raw = image.info.get(FIGMETA_KEY)
    if raw is None and hasattr(image, "text"):
        raw = image.text.get(FIGMETA_KEY)
    if raw is None:
        return None
    return json.loads(raw)


def set_figmeta(image: Image.Image, payload: dict) -> None:
    image.info[FIGMETA_KEY] = json.dumps(payload, sort_keys=True)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: str | Path) -> str:
    return sha256_bytes(Path(path).read_bytes())
