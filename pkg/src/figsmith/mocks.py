"""Deterministic mock backends for offline runs and tests.

Every mock is a pure function of (request, constructor options): no
hidden call counters, no ambient randomness. Sequence-like behavior
(scripted critic scores, repair-path replies) keys off markers the
pipeline embeds in its prompts (ROLE/INDEX lines, the REPAIR suffix),
and the mock OCR reads the text index that the rasterizer embeds in the
PNG ``figmeta`` chunk, so a full mock pipeline run is bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
from PIL import Image

from .errors import BackendRejectedError, TransientBackendError
from .gateway import BackendRequest, Capability
from .images import from_png_bytes, get_figmeta, png_bytes
from .layout import grid_layout, serialize_svg
from .replies import split_fields

JUDGE_KEYS = (
    "AESTHETIC",
    "EXPRESSIVENESS",
    "POLISH",
    "CLARITY",
    "FLOW",
    "ACCURACY",
    "COMPLETENESS",
    "APPROPRIATENESS",
)
PAIRWISE_KEYS = (
    "AESTHETIC",
    "CLARITY",
    "SOPHISTICATION",
    "ACCURACY",
    "COMPLETENESS",
    "APPROPRIATENESS",
    "OVERALL",
)

DEFAULT_CRITIC_SCORES = (6.2, 7.1, 7.9, 8.7, 9.1, 9.3)


def _task_of(prompt: str) -> str:
    first = prompt.splitlines()[0] if prompt else ""
    if first.startswith("TASK:"):
        return first.split(":", 1)[1].strip()
    return ""


def _unit(*parts) -> float:
    """Uniform [0, 1) value derived from the the given parts."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


class _ScriptedMixin:
    """Scripted replies per task, with a distinct reply for the repair pass."""

    def _scripted(self, task: str, prompt: str) -> str | None:
        script = self.options.get("script", {}).get(task)
        if script is None:
            return None
        if isinstance(script, dict):
            key = "repair" if "\nREPAIR:" in prompt else "initial"
            return script.get(key, script.get("initial"))
        return script


class MockTextBackend(_ScriptedMixin):
    """Stand-in for the reasoning model; dispatches on the TASK line.

    Unknown tasks echo the prompt, which is what the gateway tests rely
    on.
    """

    def __init__(self, options: dict | None = None):
        self.options = options or {}

    def invoke(self, request: BackendRequest) -> tuple[bytes, str]:
        prompt = request.prompt
        task = _task_of(prompt)
        scripted = self._scripted(task, prompt)
        if scripted is not None:
            return scripted.encode("utf-8"), "text"
        if task == "classify-category":
            return str(self.options.get("classify_reply", "Paper")).encode("utf-8"), "text"
        if task == "extract-method":
            return self._extract(prompt).encode("utf-8"), "text"
        if task == "design-layout":
            return self._design(prompt).encode("utf-8"), "text"
        if task == "compose-render-prompt":
            return self._render_prompt(prompt).encode("utf-8"), "text"
        return prompt.encode("utf-8"), "text"

    def _extract(self, prompt: str) -> str:
        document = prompt.split("DOCUMENT:", 1)[-1].strip()
        words = document.split()
        summary = " ".join(words[:40]) or "The document describes a method."
        if "entities" in self.options:
            entity_lines = [f"- {line}" for line in self.options["entities"]]
            relation_lines = [f"- {line}" for line in self.options.get("relations", [])]
        else:
            skip = {"The", "This", "That", "Our", "These", "Then", "With", "For", "And"}
            labels: list[str] = []
            for word in words:
                token = word.strip(".,;:()[]{}\"'`")
                if (
                    len(token) >= 3
                    and token[0].isupper()
                    and token.isalpha()
                    and token not in skip
                    and token not in labels
                ):
                    labels.append(token)
                if len(labels) == 6:
                    break
            entity_lines = [f"- {label.lower()} | {label} | concept" for label in labels]
            relation_lines = [
                f"- {labels[i].lower()} -> {labels[i + 1].lower()} |" for i in range(len(labels) - 1)
            ]
        parts = [f"SUMMARY: {summary}", "ENTITIES:", *entity_lines, "RELATIONS:", *relation_lines]
        return "\n".join(parts)

    def _design(self, prompt: str) -> str:
        fields_map = split_fields(prompt)
        entities = []
        for line in fields_map.get("ENTITIES", "").splitlines():
            line = line.strip()
            if line.startswith("- "):
                parts = [p.strip() for p in line[2:].split("|")]
                entities.append((parts[0], parts[1] if len(parts) > 1 else parts[0]))
        relations = []
        for line in fields_map.get("RELATIONS", "").splitlines():
            line = line.strip()
            if line.startswith("- ") and "->" in line:
                body = line[2:]
                left, right = body.split("->", 1)
                target, _, label = right.partition("|")
                relations.append((left.strip(), target.strip(), label.strip() or None))
        canvas_field = fields_map.get("CANVAS", "800 x 600")
        try:
            width, height = (float(v.strip()) for v in canvas_field.split("x"))
        except ValueError:
            width, height = 800.0, 600.0
        feedback = fields_map.get("FEEDBACK", "")
        caption = fields_map.get("METHOD_SUMMARY", fields_map.get("METHOD", "Overview"))
        jitter_key = hashlib.sha256(feedback.encode("utf-8")).hexdigest()[:16]
        graph = grid_layout(
            entities,
            relations,
            canvas=(width, height),
            caption=" ".join(caption.split()[:6]) or "Overview",
            jitter_key=jitter_key,
        )
        style = fields_map.get("STYLE_HINT") or "Delicate and cute cartoon comic style, using Morandi color palette"
        style = style.splitlines()[0]
        return f"STYLE: {style}\n```svg\n{serialize_svg(graph)}```"

    def _render_prompt(self, prompt: str) -> str:
        fields_map = split_fields(prompt)
        labels = [
            line.strip()[2:].strip()
            for line in fields_map.get("LABELS", "").splitlines()
            if line.strip().startswith("- ")
        ]
        omit = set(self.options.get("omit_labels", ()))
        kept = [label for label in labels if label not in omit]
        style = (fields_map.get("STYLE") or "clean vector style").splitlines()[0]
        canvas = (fields_map.get("CANVAS") or "800 x 600").splitlines()[0]
        mention = "; ".join(kept)
        return (
            f"A polished scientific schematic on a {canvas} canvas, rendered in the style: {style}. "
            f"It depicts, with exact placement from the attached blueprint: {mention}."
        )


class MockVisionBackend(_ScriptedMixin):
    """Stand-in for the vision model: critic, judge, and figure analyst."""

    def __init__(self, options: dict | None = None):
        self.options = options or {}

    def invoke(self, request: BackendRequest) -> tuple[bytes, str]:
        prompt = request.prompt
        task = _task_of(prompt)
        scripted = self._scripted(task, prompt)
        if scripted is not None:
            return scripted.encode("utf-8"), "text"
        if task == "critique-layout":
            return self._critique(prompt).encode("utf-8"), "text"
        if task == "judge-referenced":
            return self._referenced().encode("utf-8"), "text"
        if task == "judge-pairwise":
            return self._pairwise(prompt, request).encode("utf-8"), "text"
        if task == "measure-figure":
            return self._figure_stats().encode("utf-8"), "text"
        return prompt.encode("utf-8"), "text"

    def _critique(self, prompt: str) -> str:
        fields_map = split_fields(prompt)
        index = int(fields_map.get("INDEX", "0").split()[0])
        threshold = float(fields_map.get("THRESHOLD", "8.5").split()[0])
        scores = list(self.options.get("critic_scores", DEFAULT_CRITIC_SCORES))
        score = float(scores[min(index, len(scores) - 1)])
        if score >= threshold:
            return f"SCORE: {score}\nFEEDBACK:\nISSUES:"
        return (
            f"SCORE: {score}\n"
            f"FEEDBACK: Round {index}: tighten shared guides, spread the nodes, and keep arrows left-to-right.\n"
            "ISSUES:\n"
            "- alignment | node edges drift off the shared guide lines\n"
            "- flow | arrows should read left to right"
        )

    def _referenced(self) -> str:
        scores = list(self.options.get("judge_scores", [8.0] * 8))
        lines = [
            f"{key}: {scores[i]} | concise reasoning for {key.lower()}"
            for i, key in enumerate(JUDGE_KEYS)
        ]
        return "\n".join(lines)

    def _pairwise(self, prompt: str, request: BackendRequest) -> str:
        fields_map = split_fields(prompt)
        mode = fields_map.get("MODE", "basic").splitlines()[0].strip()
        policy = self.options.get("pairwise_policy", "prefer_hash")
        if policy == "prefer_hash" and len(request.images) >= 2:
            first = hashlib.sha256(request.images[0]).hexdigest()
            second = hashlib.sha256(request.images[1]).hexdigest()
            side = "A" if first > second else "B"
        elif policy in ("first", "second", "tie"):
            side = {"first": "A", "second": "B", "tie": "Tie"}[policy]
        else:
            side = "A"
        lines = [f"{key}: {side}" for key in PAIRWISE_KEYS]
        if mode == "extended":
            verdict = {"both_good": "Both Good", "both_bad": "Both Bad"}.get(policy, side)
            lines.append(f"VERDICT: {verdict}")
        return "\n".join(lines)

    def _figure_stats(self) -> str:
        density, components, colors, shapes = self.options.get("figure_stats", [40, 5, 6, 6])
        return f"DENSITY: {density}\nCOMPONENTS: {components}\nCOLORS: {colors}\nSHAPES: {shapes}"


class MockT2IBackend:
    """Echo renderer: returns the conditioning image unchanged.

    With ``output_size`` set it re-renders at that size instead, which
    exercises the caller's dimension normalization.
    """

    def __init__(self, options: dict | None = None):
        self.options = options or {}

    def invoke(self, request: BackendRequest) -> tuple[bytes, str]:
        if not request.images:
            raise BackendRejectedError("text-to-image mock needs a conditioning image")
        body = request.images[0]
        size = self.options.get("output_size")
        if size:
            image = from_png_bytes(body).resize((int(size[0]), int(size[1])))
            body = png_bytes(image)
        return body, "image"


class MockOcrBackend:
    """OCR driven by the rasterizer's embedded text index.

    Reads the ``figmeta`` chunk of the incoming PNG and reports its
    strings and pixel boxes. ``corrupt_rate`` deterministically garbles
    a fraction of strings (dropping one character) and ``hallucinate``
    adds low-confidence junk items, so the verification stage has real
    work to do. Scripted ``items`` short-circuit everything.
    """

    def __init__(self, options: dict | None = None):
        self.options = options or {}

    def invoke(self, request: BackendRequest) -> tuple[bytes, str]:
        if "items" in self.options:
            return json.dumps({"items": self.options["items"]}).encode("utf-8"), "structured"
        if not request.images:
            raise BackendRejectedError("ocr mock needs an image")
        image = from_png_bytes(request.images[0])
        meta = get_figmeta(image)
        seed = self.options.get("seed", 0)
        corrupt_rate = float(self.options.get("corrupt_rate", 0.0))
        items = []
        for i, entry in enumerate(meta.get("texts", []) if meta else []):
            text = entry["text"]
            confidence = 0.97
            if len(text) > 2 and _unit("corrupt", seed, i, text) < corrupt_rate:
                drop = int(_unit("pos", seed, i, text) * len(text))
                text = text[:drop] + text[drop + 1 :]
                confidence = 0.8
            items.append({"text": text, "bbox": entry["bbox"], "confidence": confidence})
        for j in range(int(self.options.get("hallucinate", 0))):
            x = int(_unit("hx", seed, j) * max(1, image.width - 40))
            y = int(_unit("hy", seed, j) * max(1, image.height - 12))
            items.append({"text": "qwzx"[: 2 + j % 3], "bbox": [x, y, 38, 11], "confidence": 0.2})
        return json.dumps({"items": items}).encode("utf-8"), "structured"


class MockEraserBackend:
    """Inpainting stand-in: fills each box with the median color of the
    2px ring around it; pixels outside the boxes are untouched."""

    def __init__(self, options: dict | None = None):
        self.options = options or {}

    def invoke(self, request: BackendRequest) -> tuple[bytes, str]:
        if not request.images:
            raise BackendRejectedError("eraser mock needs an image")
        image = from_png_bytes(request.images[0]).convert("RGB")
        boxes = json.loads(request.prompt or "{}").get("boxes", [])
        pixels = np.asarray(image).copy()
        height, width = pixels.shape[:2]
        for x, y, w, h in boxes:
            x0, y0 = max(0, x - 2), max(0, y - 2)
            x1, y1 = min(width, x + w + 2), min(height, y + h + 2)
            ring_mask = np.zeros((height, width), dtype=bool)
            ring_mask[y0:y1, x0:x1] = True
            ring_mask[y : y + h, x : x + w] = False
            ring = pixels[ring_mask]
            source = ring if ring.size else pixels.reshape(-1, 3)
            fill = np.median(source.reshape(-1, 3), axis=0).astype(np.uint8)
            pixels[y : y + h, x : x + w] = fill
        return png_bytes(Image.fromarray(pixels, "RGB")), "image"


class EchoBackend:
    """Text backend that replies with the prompt itself."""

    def invoke(self, request: BackendRequest) -> tuple[bytes, str]:
        return request.prompt.encode("utf-8"), "text"


class FlakyBackend:
    """Fails transiently a fixed number of times, then delegates."""

    def __init__(self, failures: int, inner=None):
        self.failures = failures
        self.inner = inner or EchoBackend()
        self.attempts = 0

    def invoke(self, request: BackendRequest) -> tuple[bytes, str]:
        self.attempts += 1
        if self.attempts <= self.failures:
            raise TransientBackendError(f"scripted failure {self.attempts}")
        return self.inner.invoke(request)


class RejectingBackend:
    def invoke(self, request: BackendRequest) -> tuple[bytes, str]:
        raise BackendRejectedError("scripted rejection")


def build_mock_backend(capability: Capability, options: dict | None = None):
    """Factory used by the TOML config loader for ``kind = "mock"``."""
    options = options or {}
    if capability is Capability.TEXT:
        return MockTextBackend(options)
    if capability is Capability.VISION:
        return MockVisionBackend(options)
    if capability is Capability.TEXT_TO_IMAGE:
        return MockT2IBackend(options)
    if capability is Capability.OCR:
        return MockOcrBackend(options)
    return MockEraserBackend(options)
