"""Stage-I loop: alternate an AI critic and an AI designer over the
blueprint, keep the best-scoring candidate, stop on budget, threshold,
or convergence.

Each round re-critiques the incumbent for fresh feedback, asks the
designer for a whole new candidate (not a patch), scores the candidate
with the same critic, and accepts it only on strict improvement.
Critique requests carry a role marker (``score`` for the initial layout
and candidates, ``feedback`` for the incumbent re-critique) and a round
index, so scripted critics can be pure functions of the request.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FigsmithError, InvariantError, RefinementError, SchemaError
from .gateway import Gateway
from .images import png_bytes, save_png
from .ingest import Category, MethodSummary
from .layout import LayoutGraph, StyleDescriptor, grid_layout, measure, parse_svg, rasterize, serialize_svg
from .replies import fenced_block, parse_score, split_fields, with_repair

DEFAULT_MAX_ITERATIONS = 5
DEFAULT_THRESHOLD = 8.5
DEFAULT_EPSILON = 0.05

ISSUE_KINDS = ("overlap", "alignment", "flow", "completeness", "style")


@dataclass(frozen=True)
class Issue:
    kind: str
    detail: str


@dataclass(frozen=True)
class CritiqueReport:
    score: float
    feedback: str
    per_issue: tuple[Issue, ...] = ()


@dataclass
class HistoryEntry:
    iteration: int
    candidate_score: float
    accepted: bool
    artifact_paths: dict[str, str] = field(default_factory=dict)


@dataclass
class RefineState:
    best_layout: LayoutGraph
    best_style: StyleDescriptor
    best_score: float
    iteration: int = 0
    history: list[HistoryEntry] = field(default_factory=list)


def seed_layout(
    method: MethodSummary,
    category: Category,
    style_text: str | None = None,
    canvas: tuple[float, float] = (800.0, 600.0),
) -> tuple[LayoutGraph, StyleDescriptor]:
    """Deterministic first blueprint: entities on a grid, relations as arrows.

    An empty entity set degenerates to a single caption node carrying
    the start of the summary.
    """
    caption = " ".join(method.summary_text.split()[:8])
    graph = grid_layout(
        entities=[(e.id, e.label) for e in method.entities],
        relations=[(r.source_id, r.target_id, r.label) for r in method.relations],
        canvas=canvas,
        caption=caption,
    )
    style_kwargs = {"category": category.value}
    if style_text is not None:
        style_kwargs["style_text"] = style_text
    return graph, StyleDescriptor(**style_kwargs)


CRITIQUE_PROMPT = """TASK: critique-layout
ROLE: {role}
INDEX: {index}
THRESHOLD: {threshold}
Assess the blueprint below (image attached) for alignment, balance,
overlap avoidance, logical flow, and completeness.
Reply exactly in this format:
SCORE: <a number from 0 to 10>
FEEDBACK: <what to improve; may be empty only when the score is at or above the threshold>
ISSUES:
- <kind> | <detail>    (kind is one of: overlap, alignment, flow, completeness, style)

STYLE: {style_text}
METRICS: overlap_area={overlap:.2f} alignment_deviation={alignment:.2f} balance={balance:.3f}
MARKUP:
{markup}
"""


def critique(
    layout: LayoutGraph,
    style: StyleDescriptor,
    vision_model: Gateway,
    *,
    role: str = "score",
    index: int = 0,
    threshold: float = DEFAULT_THRESHOLD,
) -> CritiqueReport:
    """Ask the critic for a score and feedback on one blueprint."""
    markup = serialize_svg(layout, style)
    metrics = measure(layout)
    image = png_bytes(rasterize(markup))
    prompt = CRITIQUE_PROMPT.format(
        role=role,
        index=index,
        threshold=threshold,
        style_text=style.style_text,
        overlap=metrics.overlap_area,
        alignment=metrics.alignment_deviation,
        balance=metrics.balance,
        markup=markup,
    )

    def call(repair: str | None) -> str:
        full = prompt
        if repair is not None:
            full += f"\nREPAIR: the previous reply was invalid ({repair}); reply again in the exact format."
        return vision_model.vision(full, images=(image,))

    def parse(reply: str) -> CritiqueReport:
        fields_map = split_fields(reply)
        if "SCORE" not in fields_map:
            raise SchemaError("missing SCORE field")
        score = parse_score(fields_map["SCORE"].splitlines()[0])
        feedback = fields_map.get("FEEDBACK", "").strip()
        if not feedback and score < threshold:
            raise SchemaError(f"feedback must be non-empty when score {score} < threshold {threshold}")
        issues = []
        for item in fields_map.get("ISSUES", "").splitlines():
            item = item.strip()
            if not item.startswith("-"):
                continue
            parts = [p.strip() for p in item.lstrip("- ").split("|", 1)]
            kind = parts[0].casefold()
            if kind not in ISSUE_KINDS:
                raise SchemaError(f"unknown issue kind {parts[0]!r}")
            issues.append(Issue(kind=kind, detail=parts[1] if len(parts) > 1 else ""))
        return CritiqueReport(score=score, feedback=feedback, per_issue=tuple(issues))

    report, _ = with_repair(call, parse)
    return report


DESIGN_PROMPT = """TASK: design-layout
Design a fresh blueprint for the method below, taking the critique
feedback into account. Reply exactly in this format:
STYLE: <one-line style description>
```svg
<svg ...>...</svg>
```
The svg must follow the supported subset: node groups with data-id and
data-shape (rect, rounded, ellipse, diamond, group), edge groups with
data-source/data-target/data-kind, coordinates with 2 decimals.

METHOD_SUMMARY:
{summary}
ENTITIES:
{entities}
RELATIONS:
{relations}
FEEDBACK:
{feedback}
CANVAS: {width:.0f} x {height:.0f}
STYLE_HINT: {style_hint}
CATEGORY: {category}
"""


def regenerate(
    method: MethodSummary,
    feedback: str,
    text_model: Gateway,
    *,
    canvas: tuple[float, float] = (800.0, 600.0),
    style_hint: StyleDescriptor | None = None,
) -> tuple[LayoutGraph, StyleDescriptor]:
    """Ask the designer for a complete new candidate blueprint."""
    hint = style_hint or StyleDescriptor()
    entities = "\n".join(f"- {e.id} | {e.label} | {e.kind}" for e in method.entities) or "(none)"
    relations = (
        "\n".join(f"- {r.source_id} -> {r.target_id} | {r.label or ''}" for r in method.relations) or "(none)"
    )
    prompt = DESIGN_PROMPT.format(
        summary=method.summary_text,
        entities=entities,
        relations=relations,
        feedback=feedback or "(none yet; produce an initial design)",
        width=canvas[0],
        height=canvas[1],
        style_hint=hint.style_text,
        category=hint.category,
    )

    def call(repair: str | None) -> str:
        full = prompt
        if repair is not None:
            full += f"\nREPAIR: the previous reply was invalid ({repair}); reply again in the exact format."
        return text_model.text(full)

    def parse(reply: str) -> tuple[LayoutGraph, StyleDescriptor]:
        fields_map = split_fields(reply)
        style_text = fields_map.get("STYLE", "").splitlines()[0].strip() if fields_map.get("STYLE") else ""
        if not style_text:
            raise SchemaError("missing STYLE line")
        markup = fenced_block(reply, "svg")
        try:
            graph = parse_svg(markup)
        except FigsmithError as err:
            raise SchemaError(f"candidate markup invalid: {err}") from err
        return graph, StyleDescriptor(style_text=style_text, category=hint.category)

    candidate, _ = with_repair(call, parse)
    return candidate


def run_loop(
    method: MethodSummary,
    initial: tuple[LayoutGraph, StyleDescriptor],
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
    threshold: float = DEFAULT_THRESHOLD,
    epsilon: float = DEFAULT_EPSILON,
    *,
    gateway: Gateway,
    run_dir: str | Path | None = None,
    resume: RefineState | None = None,
) -> RefineState:
    """Run the critic/designer refinement loop and return the winning state.

    One initial critique, then at most ``max_iterations`` rounds of
    (re-critique incumbent, regenerate, critique candidate). Stops early
    when the best score reaches ``threshold``, or when a rejected
    candidate lands within ``epsilon`` of the incumbent (convergence).
    Every scored layout is persisted under ``run_dir/iterations`` and
    the winner is copied to ``layout.svg`` / ``layout.png``.
    """
    if max_iterations < 0:
        raise InvariantError("max_iterations must be >= 0")
    if not (0.0 <= threshold <= 10.0):
        raise InvariantError("threshold must lie in [0, 10]")
    iter_dir = None
    if run_dir is not None:
        iter_dir = Path(run_dir) / "iterations"
        iter_dir.mkdir(parents=True, exist_ok=True)

    if resume is not None:
        state = resume
    else:
        layout0, style0 = initial
        layout0.validate()
        state = RefineState(best_layout=layout0, best_style=style0, best_score=float("-inf"))
        try:
            report0 = critique(layout0, style0, gateway, role="score", index=0, threshold=threshold)
        except FigsmithError as err:
            raise RefinementError(f"initial critique failed: {err}", state=state) from err
        paths = _persist_iteration(iter_dir, 0, layout0, style0, report0, round_feedback=None)
        state.best_score = report0.score
        state.history.append(
            HistoryEntry(iteration=0, candidate_score=report0.score, accepted=True, artifact_paths=paths)
        )

    while state.best_score < threshold and state.iteration < max_iterations:
        index = state.iteration + 1
        try:
            feedback_report = critique(
                state.best_layout, state.best_style, gateway, role="feedback", index=index, threshold=threshold
            )
            candidate_layout, candidate_style = regenerate(
                method,
                feedback_report.feedback,
                gateway,
                canvas=state.best_layout.canvas,
                style_hint=state.best_style,
            )
            candidate_report = critique(
                candidate_layout, candidate_style, gateway, role="score", index=index, threshold=threshold
            )
        except FigsmithError as err:
            raise RefinementError(f"round {index} failed: {err}", state=state) from err
        paths = _persist_iteration(
            iter_dir, index, candidate_layout, candidate_style, candidate_report,
            round_feedback=feedback_report.feedback,
        )
        previous_best = state.best_score
        accepted = candidate_report.score > previous_best
        state.history.append(
            HistoryEntry(
                iteration=index,
                candidate_score=candidate_report.score,
                accepted=accepted,
                artifact_paths=paths,
            )
        )
        if accepted:
            state.best_layout = candidate_layout
            state.best_style = candidate_style
            state.best_score = candidate_report.score
        state.iteration = index
        if not accepted and abs(candidate_report.score - previous_best) < epsilon:
            break

    if run_dir is not None:
        _persist_winner(Path(run_dir), state)
    return state


def _persist_iteration(
    iter_dir: Path | None,
    index: int,
    layout: LayoutGraph,
    style: StyleDescriptor,
    report: CritiqueReport,
    round_feedback: str | None,
) -> dict[str, str]:
    if iter_dir is None:
        return {}
    markup = serialize_svg(layout, style)
    svg_path = iter_dir / f"iteration_{index}.svg"
    png_path = iter_dir / f"iteration_{index}.png"
    critique_path = iter_dir / f"critique_{index}.json"
    svg_path.write_text(markup, encoding="utf-8")
    save_png(rasterize(markup), png_path)
    payload = {
        "iteration": index,
        "score": report.score,
        "feedback": report.feedback,
        "issues": [{"kind": issue.kind, "detail": issue.detail} for issue in report.per_issue],
        "round_feedback": round_feedback,
    }
    critique_path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return {"svg": str(svg_path), "png": str(png_path), "critique": str(critique_path)}


def _persist_winner(run_dir: Path, state: RefineState) -> None:
    markup = serialize_svg(state.best_layout, state.best_style)
    (run_dir / "layout.svg").write_text(markup, encoding="utf-8")
    save_png(rasterize(markup), run_dir / "layout.png")


def winning_entry(state: RefineState) -> HistoryEntry:
    """The history entry whose score equals the final best score.

    Strict-improvement acceptance means the earliest such accepted
    entry is the winner.
    """
    for entry in state.history:
        if entry.accepted and entry.candidate_score == state.best_score:
            return entry
    raise InvariantError("no accepted entry matches best_score")
