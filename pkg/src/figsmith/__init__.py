"""figsmith: long-form scientific text to publication-style schematic.

Plan first, render second: a directed layout graph is distilled from
the text, iteratively refined by an AI critic/designer loop, rasterized
as a conditioning image for a text-to-image backend, and the rendered
text is repaired by OCR, verification against the blueprint labels,
erasure, and vector-text overlay. An evaluation harness (referenced
scoring, blind pairwise comparison) and agreement statistics round out
the toolkit. Everything runs offline against deterministic mocks.
"""

from .gateway import BackendRequest, BackendResponse, Capability, Gateway, OcrItem
from .ingest import Category, MethodSummary, SourceDocument, classify_category, extract_method, load_document
from .judge import PairwiseVerdict, ScoreCard, WinRateTable, aggregate_win_rates, pairwise_compare, referenced_score
from .layout import (
    Edge,
    LayoutGraph,
    LayoutMetrics,
    Node,
    StyleDescriptor,
    extract_labels,
    measure,
    parse_svg,
    rasterize,
    serialize_svg,
)
from .refine import CritiqueReport, RefineState, critique, regenerate, run_loop, seed_layout
from .runner import RunManifest, batch, evaluate, generate, stats_command
from .stats import FigureStats, RatingPair, aggregate_stats, cohens_kappa, correlations, measure_figure
from .synthesis import (
    RenderJob,
    TextLibrary,
    build_prompt,
    compose_final,
    render_polished,
    run_stage2,
    verify_text,
)

__version__ = "0.1.0"

__all__ = [
    "BackendRequest",
    "BackendResponse",
    "Capability",
    "Category",
    "CritiqueReport",
    "Edge",
    "FigureStats",
    "Gateway",
    "LayoutGraph",
    "LayoutMetrics",
    "MethodSummary",
    "Node",
    "OcrItem",
    "PairwiseVerdict",
    "RatingPair",
    "RefineState",
    "RenderJob",
    "RunManifest",
    "ScoreCard",
    "SourceDocument",
    "StyleDescriptor",
    "TextLibrary",
    "WinRateTable",
    "aggregate_stats",
    "aggregate_win_rates",
    "batch",
    "build_prompt",
    "classify_category",
    "cohens_kappa",
    "compose_final",
    "correlations",
    "critique",
    "evaluate",
    "extract_labels",
    "extract_method",
    "generate",
    "load_document",
    "measure",
    "measure_figure",
    "pairwise_compare",
    "parse_svg",
    "rasterize",
    "referenced_score",
    "regenerate",
    "render_polished",
    "run_loop",
    "run_stage2",
    "seed_layout",
    "serialize_svg",
    "stats_command",
    "verify_text",
]
