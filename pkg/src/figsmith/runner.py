"""Top-level orchestration: document in, final illustration out.

A run owns one directory. Stages communicate only through persisted
artifacts, and the manifest records each stage's status plus a content
digest for every artifact, so an interrupted run resumes by skipping
stages whose artifacts still verify. With mock backends the whole chain
is deterministic: two runs of the same input and config produce
digest-identical artifacts.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .config import build_gateway, validate_config
from .errors import ValidationError
from .gateway import Gateway
from .images import load_png, save_png, sha256_file
from .ingest import (
    classify_category,
    extract_method,
    load_document,
    method_from_json,
    write_method_json,
)
from .judge import SCORE_KEYS, aggregate_win_rates, pairwise_compare, referenced_score
from .layout import StyleDescriptor, extract_labels, parse_svg
from .refine import run_loop, seed_layout
from .stats import FigureStats, RatingPair, aggregate_stats, cohens_kappa, correlations, measure_figure
from .synthesis import (
    RenderJob,
    build_prompt,
    compose_final,
    corrected_payload,
    library_from_payload,
    library_payload,
    overlay_markup,
    render_polished,
    verify_text,
)

STAGES = ("ingest", "layout", "prompt", "render", "refine_text", "compose")
MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    run_id: str
    input_digest: str
    config: dict
    stages: dict[str, str] = field(default_factory=lambda: {stage: "pending" for stage in STAGES})
    artifacts: dict[str, dict] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def register(self, run_dir: Path, name: str) -> None:
        path = run_dir / name
        self.artifacts[name] = {"path": name, "sha256": sha256_file(path)}

    def verified(self, run_dir: Path, names: list[str]) -> bool:
        for name in names:
            entry = self.artifacts.get(name)
            if entry is None:
                return False
            path = run_dir / entry["path"]
            if not path.exists() or sha256_file(path) != entry["sha256"]:
                return False
        return True

    def save(self, run_dir: Path) -> None:
        payload = {
            "run_id": self.run_id,
            "input_digest": self.input_digest,
            "config": self.config,
            "stages": self.stages,
            "artifacts": self.artifacts,
            "warnings": self.warnings,
        }
        (run_dir / MANIFEST_NAME).write_text(
            json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, run_dir: Path) -> "RunManifest":
        payload = json.loads((run_dir / MANIFEST_NAME).read_text(encoding="utf-8"))
        return cls(
            run_id=payload["run_id"],
            input_digest=payload["input_digest"],
            config=payload["config"],
            stages=payload["stages"],
            artifacts=payload["artifacts"],
            warnings=payload["warnings"],
        )


def generate(
    input_path: str | Path,
    config: dict,
    out_dir: str | Path | None = None,
    gateway: Gateway | None = None,
) -> RunManifest:
    """Run the full pipeline for one document, resuming if the run
    directory already holds a manifest for the same input and config."""
    validate_config(config)
    input_path = Path(input_path)
    input_digest = sha256_file(input_path)
    if out_dir is None:
        out_dir = Path("runs") / f"{time.strftime('%Y%m%d-%H%M%S')}-{input_digest[:8]}"
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)

    if (run_dir / MANIFEST_NAME).exists():
        manifest = RunManifest.load(run_dir)
        if manifest.input_digest != input_digest:
            raise ValidationError("run directory belongs to a different input document")
        if manifest.config != config:
            raise ValidationError("config differs from the run's recorded snapshot")
    else:
        manifest = RunManifest(
            run_id=f"{time.strftime('%Y%m%d-%H%M%S')}-{input_digest[:8]}",
            input_digest=input_digest,
            config=config,
        )
        manifest.save(run_dir)

    if gateway is None:
        gateway = build_gateway(config, cache_dir=run_dir / "cache")

    pipeline = config["pipeline"]
    skip_refinement = bool(pipeline.get("skip_text_refinement", False))

    _run_stage(manifest, run_dir, "ingest", lambda: _stage_ingest(run_dir, input_path, gateway))
    _run_stage(manifest, run_dir, "layout", lambda: _stage_layout(run_dir, pipeline, gateway))
    _run_stage(manifest, run_dir, "prompt", lambda: _stage_prompt(run_dir, pipeline, gateway))
    _run_stage(
        manifest, run_dir, "render", lambda: _stage_render(run_dir, pipeline, gateway, manifest.warnings)
    )
    if skip_refinement:
        _run_stage(manifest, run_dir, "refine_text", lambda: [])
        _run_stage(manifest, run_dir, "compose", lambda: _stage_compose_skip(run_dir))
    else:
        _run_stage(manifest, run_dir, "refine_text", lambda: _stage_refine_text(run_dir, pipeline, gateway))
        _run_stage(
            manifest, run_dir, "compose", lambda: _stage_compose(run_dir, manifest.warnings)
        )
    return manifest


def _run_stage(manifest: RunManifest, run_dir: Path, name: str, fn) -> None:
    if manifest.stages.get(name) == "done":
        declared = [a for a in manifest.artifacts if manifest.artifacts[a].get("stage") == name]
        if manifest.verified(run_dir, declared):
            return
    try:
        artifact_names = fn()
    except Exception:
        manifest.stages[name] = "failed"
        manifest.save(run_dir)
        raise
    for artifact in artifact_names:
        manifest.register(run_dir, artifact)
        manifest.artifacts[artifact]["stage"] = name
    manifest.stages[name] = "done"
    manifest.save(run_dir)


# --- stages (inputs and outputs are artifacts on disk) ---


def _stage_ingest(run_dir: Path, input_path: Path, gateway: Gateway) -> list[str]:
    doc = load_document(input_path)
    category = classify_category(doc, gateway)
    method = extract_method(doc, gateway)
    write_method_json(run_dir / "method.json", doc, category, method)
    return ["method.json"]


def _load_method(run_dir: Path):
    payload = json.loads((run_dir / "method.json").read_text(encoding="utf-8"))
    return method_from_json(payload)


def _style_of(run_dir: Path, pipeline: dict) -> StyleDescriptor:
    _, category = _load_method(run_dir)
    return StyleDescriptor(style_text=pipeline["style"], category=category.value)


def _stage_layout(run_dir: Path, pipeline: dict, gateway: Gateway) -> list[str]:
    method, category = _load_method(run_dir)
    canvas = tuple(float(v) for v in pipeline["canvas"])
    initial = seed_layout(method, category, style_text=pipeline["style"], canvas=canvas)
    state = run_loop(
        method,
        initial,
        max_iterations=pipeline["iterations"],
        threshold=pipeline["threshold"],
        epsilon=pipeline["epsilon"],
        gateway=gateway,
        run_dir=run_dir,
    )
    names = []
    for entry in state.history:
        index = entry.iteration
        names.extend(
            [
                f"iterations/iteration_{index}.svg",
                f"iterations/iteration_{index}.png",
                f"iterations/critique_{index}.json",
            ]
        )
    names.extend(["layout.svg", "layout.png"])
    return names


def _stage_prompt(run_dir: Path, pipeline: dict, gateway: Gateway) -> list[str]:
    layout = parse_svg((run_dir / "layout.svg").read_text(encoding="utf-8"))
    style = _style_of(run_dir, pipeline)
    prompt = build_prompt(layout, style, gateway)
    (run_dir / "prompt.txt").write_text(prompt, encoding="utf-8")
    return ["prompt.txt"]


def _stage_render(run_dir: Path, pipeline: dict, gateway: Gateway, warnings: list[str]) -> list[str]:
    prompt = (run_dir / "prompt.txt").read_text(encoding="utf-8")
    conditioning = load_png(run_dir / "layout.png")
    target = pipeline.get("render_size")
    job = RenderJob(
        prompt_text=prompt,
        conditioning_image=conditioning,
        target_size=tuple(target) if target else conditioning.size,
    )
    polished = render_polished(job, gateway, warnings)
    save_png(polished, run_dir / "polished.png")
    return ["polished.png"]


def _stage_refine_text(run_dir: Path, pipeline: dict, gateway: Gateway) -> list[str]:
    polished = load_png(run_dir / "polished.png")
    items = gateway.ocr(polished)
    (run_dir / "library.json").write_text(
        json.dumps(library_payload(items, polished.size), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    layout = parse_svg((run_dir / "layout.svg").read_text(encoding="utf-8"))
    library = verify_text(items, extract_labels(layout), gateway, image_size=polished.size)
    (run_dir / "corrected_library.json").write_text(
        json.dumps(corrected_payload(library), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    erased = gateway.erase_text(polished, [item.bbox for item in items])
    save_png(erased, run_dir / "erased.png")
    return ["library.json", "corrected_library.json", "erased.png"]


def _stage_compose(run_dir: Path, warnings: list[str]) -> list[str]:
    erased = load_png(run_dir / "erased.png")
    library = library_from_payload(
        json.loads((run_dir / "corrected_library.json").read_text(encoding="utf-8"))
    )
    final = compose_final(erased, library, warnings)
    save_png(final, run_dir / "final.png")
    (run_dir / "final_overlay.svg").write_text(overlay_markup(library), encoding="utf-8")
    return ["final.png", "final_overlay.svg"]


def _stage_compose_skip(run_dir: Path) -> list[str]:
    (run_dir / "final.png").write_bytes((run_dir / "polished.png").read_bytes())
    return ["final.png"]


# --- evaluation entry point ---


def evaluate(
    reference_path: str | Path,
    generated_path: str | Path,
    full_text_path: str | Path,
    mode: str,
    seed: int,
    out_dir: str | Path,
    gateway: Gateway,
    method: str = "generated",
) -> dict:
    """Judge one (reference, generated) pair and write CSV + JSON reports."""
    reference = load_png(reference_path)
    generated = load_png(generated_path)
    full_text = Path(full_text_path).read_text(encoding="utf-8")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    columns = ["item_id", "method", *SCORE_KEYS, "overall", "decision"]
    item_id = Path(generated_path).stem
    if mode == "score":
        card = referenced_score(full_text, reference, generated, gateway)
        row = [item_id, method, *(f"{card.sub_scores[k]:.2f}" for k in SCORE_KEYS), f"{card.overall:.4f}", ""]
        summary = {
            "mode": "score",
            "items": [
                {
                    "item_id": item_id,
                    "method": method,
                    "sub_scores": card.sub_scores,
                    "reasoning": card.reasoning,
                    "overall": card.overall,
                }
            ],
        }
    else:
        pairwise_mode = "extended" if mode == "extended" else "basic"
        verdict = pairwise_compare(full_text, reference, generated, seed, pairwise_mode, gateway)
        table = aggregate_win_rates({method: [verdict]})
        row = [item_id, method, *[""] * len(SCORE_KEYS), "", verdict.decision]
        summary = {
            "mode": mode,
            "items": [
                {
                    "item_id": item_id,
                    "method": method,
                    "seed": seed,
                    "presented_order": list(verdict.presented_order),
                    "per_criterion": verdict.per_criterion,
                    "decision": verdict.decision,
                }
            ],
            "win_rates": {
                name: {
                    "win": r.win,
                    "lose": r.lose,
                    "good": r.good,
                    "bad": r.bad,
                    "tie": r.tie,
                    "win_rate": r.win_rate,
                }
                for name, r in table.rows.items()
            },
        }

    with (out_dir / "report.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        writer.writerow(row)
    (out_dir / "report.json").write_text(
        json.dumps(summary, indent=2, ensure_ascii=False, sort_keys=True) + "\n", encoding="utf-8"
    )
    return summary


# --- statistics entry point ---


def stats_command(
    subcommand: str,
    input_path: str | Path,
    out_dir: str | Path,
    gateway: Gateway | None = None,
) -> dict:
    """Figure statistics, agreement, or correlation reports from a CSV
    (or a directory of PNGs for ``figures`` with a vision backend)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    input_path = Path(input_path)
    if subcommand == "figures":
        if input_path.is_dir():
            if gateway is None:
                raise ValidationError("measuring figures from images requires a vision backend")
            paths = sorted(input_path.glob("*.png"))
            rows = [(p.stem, "", measure_figure(load_png(p), gateway)) for p in paths]
        else:
            rows = _read_figure_csv(input_path)
        figure_stats = [stats for _, _, stats in rows]
        summary = {"count": len(figure_stats), "average": aggregate_stats(figure_stats)}
        by_category: dict[str, list[FigureStats]] = {}
        for _, category, stats in rows:
            if category:
                by_category.setdefault(category, []).append(stats)
        if by_category:
            summary["by_category"] = {
                category: aggregate_stats(group) for category, group in sorted(by_category.items())
            }
        _write_figure_csv(out_dir / "stats.csv", rows)
    elif subcommand == "kappa":
        pairs = _read_pairs_csv(input_path)
        summary = {"count": len(pairs), "cohens_kappa": cohens_kappa(pairs)}
    elif subcommand == "correlate":
        x, y = _read_xy_csv(input_path)
        summary = {"count": len(x), **correlations(x, y)}
    else:
        raise ValidationError(f"unknown stats subcommand {subcommand!r}")
    (out_dir / "stats_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return summary


def _read_figure_csv(path: Path) -> list[tuple[str, str, FigureStats]]:
    rows = []
    with path.open(newline="", encoding="utf-8") as handle:
        for i, row in enumerate(csv.DictReader(handle)):
            rows.append(
                (
                    row.get("paper_id") or row.get("id") or str(i),
                    row.get("category", ""),
                    FigureStats(
                        text_density=float(row["text_density"]),
                        components=int(row["components"]),
                        colors=int(row["colors"]),
                        shapes=int(row["shapes"]),
                    ),
                )
            )
    return rows


def _write_figure_csv(path: Path, rows: list[tuple[str, str, FigureStats]]) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "category", "text_density", "components", "colors", "shapes"])
        for item_id, category, stats in rows:
            writer.writerow([item_id, category, stats.text_density, stats.components, stats.colors, stats.shapes])


def _read_pairs_csv(path: Path) -> list[RatingPair]:
    pairs = []
    with path.open(newline="", encoding="utf-8") as handle:
        for i, row in enumerate(csv.DictReader(handle)):
            pairs.append(RatingPair(item_id=row.get("item_id", str(i)), rater_a=row["rater_a"], rater_b=row["rater_b"]))
    return pairs


def _read_xy_csv(path: Path) -> tuple[list[float], list[float]]:
    x, y = [], []
    with path.open(newline="", encoding="utf-8") as handle:
        for row in csv.DictReader(handle):
            x.append(float(row["x"]))
            y.append(float(row["y"]))
    return x, y


# --- batch ---


def batch(manifest_list: str | Path, config: dict, out_root: str | Path, workers: int = 2) -> list[RunManifest]:
    """Fan independent documents out over a bounded worker pool."""
    inputs = [
        line.strip()
        for line in Path(manifest_list).read_text(encoding="utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    ]
    out_root = Path(out_root)

    def run_one(entry: str) -> RunManifest:
        stem = Path(entry).stem
        return generate(entry, config, out_dir=out_root / stem)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(run_one, inputs))
