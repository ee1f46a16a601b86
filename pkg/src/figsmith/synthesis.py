"""Stage II: render the final blueprint and repair its text.

The finished blueprint becomes an exhaustive render prompt plus a
rasterized conditioning image for the text-to-image backend. The
rendered image then gets its text repaired: OCR the pixels,
align each string against the blueprint's label multiset, erase the
original text boxes, and re-draw the corrected strings as crisp
vector-style overlays at the same positions.
"""

from __future__ import annotations

import json
import math
import shutil
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

from PIL import Image, ImageDraw, ImageFont

from .errors import CoverageError, InvariantError, SchemaError
from .gateway import Gateway, OcrItem
from .images import load_png, png_bytes, save_png
from .layout import SVG_NS, LayoutGraph, StyleDescriptor, extract_labels, rasterize, serialize_svg
from .replies import with_repair

MATCH_DISTANCE = 0.34  # normalized edit distance at or below which a string matches a label
KEEP_FLOOR = 0.5  # unmatched strings below this confidence are dropped as hallucinations


@dataclass(frozen=True)
class RenderJob:
    prompt_text: str
    conditioning_image: Image.Image
    target_size: tuple[int, int]

    def __post_init__(self):
        if not self.prompt_text.strip():
            raise InvariantError("prompt_text must be non-empty")
        width, height = self.target_size
        if width <= 0 or height <= 0:
            raise InvariantError("target_size must be positive")


@dataclass(frozen=True)
class LibraryItem:
    id: str
    ocr_text: str
    corrected_text: str
    bbox: tuple[int, int, int, int]
    confidence: float
    status: str  # matched | kept | dropped


@dataclass(frozen=True)
class TextLibrary:
    items: tuple[LibraryItem, ...]
    image_size: tuple[int, int]

    def drawn_items(self) -> list[LibraryItem]:
        return [item for item in self.items if item.status != "dropped"]


PROMPT_TASK = """TASK: compose-render-prompt
Write one exhaustive text-to-image prompt for the blueprint below. The
prompt must mention every label listed under LABELS at least once and
must contain the STYLE line verbatim.

LABELS:
{labels}
STYLE: {style_text}
CANVAS: {width:.0f} x {height:.0f}
MARKUP:
{markup}
"""


def build_prompt(layout: LayoutGraph, style: StyleDescriptor, text_model: Gateway) -> str:
    """Synthesize the render prompt; coverage of every node label and the
    verbatim style text is checked mechanically before returning."""
    node_labels = sorted({" ".join(n.label.split()) for n in layout.nodes if n.label.strip()})
    labels_block = "\n".join(f"- {label}" for label in node_labels) or "(none)"
    request = PROMPT_TASK.format(
        labels=labels_block,
        style_text=style.style_text,
        width=layout.canvas[0],
        height=layout.canvas[1],
        markup=serialize_svg(layout, style),
    )

    def call(repair: str | None) -> str:
        full = request
        if repair is not None:
            full += f"\nREPAIR: the previous prompt was rejected ({repair}); write it again with full coverage."
        return text_model.text(full)

    def parse(reply: str) -> str:
        lowered = reply.casefold()
        missing = [label for label in node_labels if label.casefold() not in lowered]
        if missing:
            raise SchemaError("missing labels: " + ", ".join(repr(m) for m in missing))
        if style.style_text not in reply:
            raise SchemaError("style text not carried verbatim")
        return reply

    try:
        prompt, _ = with_repair(call, parse)
    except SchemaError as err:
        raise CoverageError(str(err)) from err
    return prompt


def render_polished(job: RenderJob, t2i: Gateway, warnings: list[str] | None = None) -> Image.Image:
    """Render the polished image; off-size backend output is normalized to
    the target size with an aspect-preserving pad."""
    image = t2i.text_to_image(
        job.prompt_text,
        job.conditioning_image,
        width=job.target_size[0],
        height=job.target_size[1],
    )
    if image.size != tuple(job.target_size):
        if warnings is not None:
            warnings.append(
                f"render: backend returned {image.size[0]}x{image.size[1]}, "
                f"padded to {job.target_size[0]}x{job.target_size[1]}"
            )
        image = _pad_to(image, job.target_size)
    return image


def _pad_to(image: Image.Image, size: tuple[int, int]) -> Image.Image:
    target_w, target_h = size
    scale = min(target_w / image.width, target_h / image.height)
    new_w = max(1, int(round(image.width * scale)))
    new_h = max(1, int(round(image.height * scale)))
    resized = image.resize((new_w, new_h), Image.Resampling.LANCZOS)
    canvas = Image.new("RGB", (target_w, target_h), (255, 255, 255))
    canvas.paste(resized, ((target_w - new_w) // 2, (target_h - new_h) // 2))
    return canvas


# --- verification ---


def _normalize(text: str) -> str:
    return " ".join(text.split()).casefold()


def edit_distance(a: str, b: str) -> int:
    """Classic Levenshtein distance."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb)))
        previous = current
    return previous[len(b)]


def normalized_distance(a: str, b: str) -> float:
    na, nb = _normalize(a), _normalize(b)
    longest = max(len(na), len(nb))
    if longest == 0:
        return 0.0
    return edit_distance(na, nb) / longest


def verify_text(
    ocr_items: list[OcrItem],
    ground_truth: dict[str, int],
    vision_model: Gateway | None = None,
    *,
    image_size: tuple[int, int] | None = None,
    match_distance: float = MATCH_DISTANCE,
    keep_floor: float = KEEP_FLOOR,
) -> TextLibrary:
    """Align OCR strings with the blueprint labels.

    Candidate (item, label) pairs are ranked by normalized edit distance
    and matched greedily at or below ``match_distance``, consuming each
    label at most its multiplicity. Unmatched strings are kept when
    their confidence reaches ``keep_floor`` and dropped as
    hallucinations otherwise. Ranking ties break deterministically on
    (item order, label text), which leaves no ambiguity for a
    vision-model adjudicator to resolve; the handle is accepted for
    interface compatibility.
    """
    if image_size is not None:
        for item in ocr_items:
            x, y, w, h = item.bbox
            if x < 0 or y < 0 or x + w > image_size[0] or y + h > image_size[1]:
                raise InvariantError(f"ocr bbox {item.bbox} outside image {image_size}")
    remaining = dict(ground_truth)
    candidates = []
    for index, item in enumerate(ocr_items):
        for label in ground_truth:
            distance = normalized_distance(item.text, label)
            if distance <= match_distance:
                candidates.append((distance, index, label))
    candidates.sort()
    assigned: dict[int, str] = {}
    for distance, index, label in candidates:
        if index in assigned or remaining.get(label, 0) <= 0:
            continue
        assigned[index] = label
        remaining[label] -= 1
    items = []
    for index, item in enumerate(ocr_items):
        if index in assigned:
            status, corrected = "matched", assigned[index]
        elif item.confidence >= keep_floor:
            status, corrected = "kept", item.text
        else:
            status, corrected = "dropped", item.text
        items.append(
            LibraryItem(
                id=f"t{index}",
                ocr_text=item.text,
                corrected_text=corrected,
                bbox=item.bbox,
                confidence=item.confidence,
                status=status,
            )
        )
    size = image_size or _bound_box(ocr_items)
    return TextLibrary(items=tuple(items), image_size=size)


def _bound_box(items: list[OcrItem]) -> tuple[int, int]:
    width = max((i.bbox[0] + i.bbox[2] for i in items), default=1)
    height = max((i.bbox[1] + i.bbox[3] for i in items), default=1)
    return (width, height)


# --- composition ---


def compose_final(
    erased: Image.Image,
    library: TextLibrary,
    warnings: list[str] | None = None,
) -> Image.Image:
    """Draw each non-dropped corrected string inside its bbox.

    Text is auto-sized to the largest font fitting the box, colored
    dark-on-light or light-on-dark by the local background luminance,
    and rendered through an off-image patch so pixels outside the boxes
    stay bit-identical to the erased image. Overlapping boxes draw in
    (y, x) order.
    """
    for item in library.drawn_items():
        x, y, w, h = item.bbox
        if x < 0 or y < 0 or x + w > erased.width or y + h > erased.height:
            raise InvariantError(f"library bbox {item.bbox} outside image")
    composed = erased.copy()
    composed.info.pop("figmeta", None)
    drawn = sorted(library.drawn_items(), key=lambda item: (item.bbox[1], item.bbox[0]))
    for first, second in zip(drawn, drawn[1:]):
        if warnings is not None and _boxes_overlap(first.bbox, second.bbox):
            warnings.append(f"compose: boxes of {first.id} and {second.id} overlap")
    for item in drawn:
        text = " ".join(item.corrected_text.split())
        if not text:
            continue
        _draw_in_box(composed, text, item.bbox)
    return composed


def _boxes_overlap(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return ax < bx + bw and bx < ax + aw and ay < by + bh and by < ay + ah


def _draw_in_box(image: Image.Image, text: str, bbox: tuple[int, int, int, int]) -> None:
    x, y, w, h = bbox
    patch = image.crop((x, y, x + w, y + h))
    draw = ImageDraw.Draw(patch)
    size, extent = _fit_font(draw, text, w, h)
    font = ImageFont.load_default(size=size)
    left, top, right, bottom = extent
    offset = ((w - (right - left)) // 2 - left, (h - (bottom - top)) // 2 - top)
    color = (17, 17, 17) if _patch_luminance(patch) > 0.5 else (245, 245, 245)
    draw.text(offset, text, font=font, fill=color)
    image.paste(patch, (x, y))


def _fit_font(draw: ImageDraw.ImageDraw, text: str, w: int, h: int) -> tuple[int, tuple[int, int, int, int]]:
    """Largest integer font size whose rendered extent fits (w, h); falls
    back to the minimum size when nothing fits."""
    low, high = 4, max(4, h)
    best = None
    while low <= high:
        mid = (low + high) // 2
        extent = draw.textbbox((0, 0), text, font=ImageFont.load_default(size=mid))
        if extent[2] - extent[0] <= w and extent[3] - extent[1] <= h:
            best = (mid, extent)
            low = mid + 1
        else:
            high = mid - 1
    if best is None:
        return 4, draw.textbbox((0, 0), text, font=ImageFont.load_default(size=4))
    return best


def _patch_luminance(patch: Image.Image) -> float:
    grey = patch.convert("L")
    histogram = grey.histogram()
    total = sum(histogram)
    if total == 0:
        return 1.0
    mean = sum(i * c for i, c in enumerate(histogram)) / total
    return mean / 255.0


def overlay_markup(library: TextLibrary) -> str:
    """Vector sidecar: the corrected strings as subset <text> elements."""
    width, height = library.image_size
    lines = [
        f'<svg xmlns="{SVG_NS}" width="{width:.2f}" height="{height:.2f}"'
        f' viewBox="0.00 0.00 {width:.2f} {height:.2f}">'
    ]
    for item in sorted(library.drawn_items(), key=lambda i: (i.bbox[1], i.bbox[0])):
        x, y, w, h = item.bbox
        cx, cy = x + w / 2, y + h / 2
        lines.append(
            f'  <text x="{cx:.2f}" y="{cy:.2f}" font-size="{h:.2f}" text-anchor="middle"'
            f' dominant-baseline="middle">{escape(item.corrected_text)}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


# --- stage driver ---


def library_payload(items: list[OcrItem], size: tuple[int, int]) -> dict:
    return {
        "image": {"w": size[0], "h": size[1]},
        "items": [
            {"id": f"t{i}", "text": item.text, "bbox": list(item.bbox), "confidence": item.confidence}
            for i, item in enumerate(items)
        ],
    }


def corrected_payload(library: TextLibrary) -> dict:
    return {
        "image": {"w": library.image_size[0], "h": library.image_size[1]},
        "items": [
            {
                "id": item.id,
                "text": item.ocr_text,
                "corrected_text": item.corrected_text,
                "bbox": list(item.bbox),
                "confidence": item.confidence,
                "status": item.status,
            }
            for item in library.items
        ],
    }


def library_from_payload(payload: dict) -> TextLibrary:
    items = tuple(
        LibraryItem(
            id=entry["id"],
            ocr_text=entry["text"],
            corrected_text=entry["corrected_text"],
            bbox=tuple(entry["bbox"]),
            confidence=entry["confidence"],
            status=entry["status"],
        )
        for entry in payload["items"]
    )
    return TextLibrary(items=items, image_size=(payload["image"]["w"], payload["image"]["h"]))


def run_stage2(
    layout: LayoutGraph,
    style: StyleDescriptor,
    gateway: Gateway,
    *,
    run_dir: str | Path,
    skip_text_refinement: bool = False,
    target_size: tuple[int, int] | None = None,
    scale: float = 1.0,
    warnings: list[str] | None = None,
) -> Image.Image:
    """Blueprint to final image: prompt, render, then text repair.

    Persists prompt.txt, polished.png and (unless skipped) library.json,
    corrected_library.json, erased.png, plus final.png and its vector
    sidecar. With ``skip_text_refinement`` the final image is the
    polished render byte-for-byte.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    markup = serialize_svg(layout, style)
    conditioning = rasterize(markup, scale)
    _check_aspect(conditioning.size, layout.canvas)

    prompt = build_prompt(layout, style, gateway)
    (run_dir / "prompt.txt").write_text(prompt, encoding="utf-8")

    job = RenderJob(
        prompt_text=prompt,
        conditioning_image=conditioning,
        target_size=tuple(target_size) if target_size else conditioning.size,
    )
    polished = render_polished(job, gateway, warnings)
    save_png(polished, run_dir / "polished.png")

    if skip_text_refinement:
        shutil.copyfile(run_dir / "polished.png", run_dir / "final.png")
        return load_png(run_dir / "final.png")

    ocr_items = gateway.ocr(polished)
    (run_dir / "library.json").write_text(
        json.dumps(library_payload(ocr_items, polished.size), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    ground_truth = extract_labels(layout)
    library = verify_text(ocr_items, ground_truth, gateway, image_size=polished.size)
    (run_dir / "corrected_library.json").write_text(
        json.dumps(corrected_payload(library), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    erased = gateway.erase_text(polished, [item.bbox for item in ocr_items])
    if erased.size != polished.size:
        raise InvariantError("eraser changed image dimensions")
    save_png(erased, run_dir / "erased.png")

    final = compose_final(erased, library, warnings)
    save_png(final, run_dir / "final.png")
    (run_dir / "final_overlay.svg").write_text(overlay_markup(library), encoding="utf-8")
    return final


def _check_aspect(size: tuple[int, int], canvas: tuple[float, float]) -> None:
    image_ratio = size[0] / size[1]
    canvas_ratio = canvas[0] / canvas[1]
    if not math.isclose(image_ratio, canvas_ratio, rel_tol=0.01):
        raise InvariantError(
            f"conditioning aspect {image_ratio:.4f} deviates from canvas aspect {canvas_ratio:.4f} by more than 1%"
        )
