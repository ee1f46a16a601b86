from __future__ import annotations

import random
from pathlib import Path

import pytest

from figsmith.gateway import Capability, Gateway
from figsmith.layout import EDGE_KINDS, Edge, LayoutGraph, Node
from figsmith.mocks import (
    MockEraserBackend,
    MockOcrBackend,
    MockT2IBackend,
    MockTextBackend,
    MockVisionBackend,
)

DATA_DIR = Path(__file__).parent / "data"

SAMPLE_TEXT = (
    "The Encoder feeds the Decoder through an Attention block. "
    "A Reward model scores candidate outputs and Policy gradient updates follow. "
    "Training alternates between supervised warmup and preference optimization."
)


def make_gateway(
    *,
    text: dict | None = None,
    vision: dict | None = None,
    t2i: dict | None = None,
    ocr: dict | None = None,
    cache_dir=None,
    text_backend=None,
    vision_backend=None,
    t2i_backend=None,
    ocr_backend=None,
    erase_backend=None,
) -> Gateway:
    """Gateway wired with mocks everywhere; sleeps are no-ops."""
    gw = Gateway(cache_dir=cache_dir, sleep=lambda seconds: None)
    gw.register(Capability.TEXT, text_backend or MockTextBackend(text))
    gw.register(Capability.VISION, vision_backend or MockVisionBackend(vision))
    gw.register(Capability.TEXT_TO_IMAGE, t2i_backend or MockT2IBackend(t2i))
    gw.register(Capability.OCR, ocr_backend or MockOcrBackend(ocr))
    gw.register(Capability.ERASE, erase_backend or MockEraserBackend())
    return gw


class RecordingBackend:
    """Delegating backend that keeps every request for assertions."""

    def __init__(self, inner):
        self.inner = inner
        self.requests = []

    def invoke(self, request):
        self.requests.append(request)
        return self.inner.invoke(request)


_WORDS = (
    "Encoder", "Decoder", "Attention", "Reward", "Policy", "Stage 1", "Stage 2",
    "Input", "Output", "Filter & Rank", "Métrique", "x < y", "PPO", "RM",
)


def random_graph(rng: random.Random, max_nodes: int = 8) -> LayoutGraph:
    """Arbitrary graph inside the serialization subset (2-decimal coords)."""
    canvas = (float(rng.choice((320, 400, 640))), float(rng.choice((240, 300, 480))))
    count = rng.randint(0, max_nodes)
    nodes: list[Node] = []
    if count >= 3 and rng.random() < 0.4:
        gw = round(rng.uniform(canvas[0] * 0.5, canvas[0] - 2), 2)
        gh = round(rng.uniform(canvas[1] * 0.5, canvas[1] - 2), 2)
        nodes.append(
            Node(
                id="grp",
                label=rng.choice(("", "Pipeline", "Context")),
                shape="group",
                frame=(round(rng.uniform(0, canvas[0] - gw - 1), 2), round(rng.uniform(0, canvas[1] - gh - 1), 2), gw, gh),
                fill=f"#{rng.randrange(16**6):06x}",
            )
        )
    for index in range(count):
        w = round(rng.uniform(18, canvas[0] / 3), 2)
        h = round(rng.uniform(12, canvas[1] / 3), 2)
        nodes.append(
            Node(
                id=f"n{index}",
                label=rng.choice(_WORDS) if rng.random() < 0.9 else "",
                shape=rng.choice(("rect", "rounded", "ellipse", "diamond")),
                frame=(round(rng.uniform(0, canvas[0] - w - 1), 2), round(rng.uniform(0, canvas[1] - h - 1), 2), w, h),
                fill=f"#{rng.randrange(16**6):06x}",
                group_id="grp" if nodes and nodes[0].shape == "group" and rng.random() < 0.3 else None,
            )
        )
    ids = [node.id for node in nodes]
    edges = []
    for _ in range(rng.randint(0, max(0, len(ids) - 1))):
        source, target = rng.choice(ids), rng.choice(ids)
        edges.append(
            Edge(
                source_id=source,
                target_id=target,
                label=rng.choice((None, "flow", "loss", "x -> y")),
                kind=rng.choice(EDGE_KINDS),
            )
        )
    return LayoutGraph(nodes=tuple(nodes), edges=tuple(edges), canvas=canvas)


@pytest.fixture
def mock_gateway() -> Gateway:
    return make_gateway()


@pytest.fixture
def sample_doc(tmp_path) -> Path:
    path = tmp_path / "sample.txt"
    path.write_text(SAMPLE_TEXT, encoding="utf-8")
    return path
