"""Figure-complexity statistics and agreement/correlation measures.

Complexity statistics (text density, component/color/shape counts) come
from a vision model and get clamped, not rejected, on out-of-range
values. The agreement side is classical: Cohen's kappa over categorical
pairs, Pearson, Spearman (average ranks for ties), Kendall's tau-b, and
the mean absolute rank difference between two raters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from PIL import Image

from .errors import (
    DegenerateError,
    EmptyInputError,
    LengthMismatchError,
    SchemaError,
    ZeroVarianceError,
)
from .gateway import Gateway
from .images import png_bytes
from .replies import split_fields, with_repair

STAT_FIELDS = ("text_density", "components", "colors", "shapes")


@dataclass(frozen=True)
class FigureStats:
    text_density: float  # percent of figure area occupied by text
    components: int
    colors: int
    shapes: int


@dataclass(frozen=True)
class RatingPair:
    item_id: str
    rater_a: object
    rater_b: object


MEASURE_PROMPT = """TASK: measure-figure
Analyze the attached figure and report:
DENSITY: <percent of the area occupied by text, 0-100>
COMPONENTS: <number of connected components>
COLORS: <number of distinct colors>
SHAPES: <number of distinct shapes>
"""


def measure_figure(image: Image.Image, vision_model: Gateway, warnings: list[str] | None = None) -> FigureStats:
    """Ask the vision model for complexity statistics; out-of-range values
    are clamped and non-integer counts rounded, with a warning."""

    def call(repair: str | None) -> str:
        prompt = MEASURE_PROMPT
        if repair is not None:
            prompt += f"\nREPAIR: the previous reply was invalid ({repair}); reply again in the exact format."
        return vision_model.vision(prompt, images=(png_bytes(image),))

    def parse(reply: str) -> dict[str, float]:
        fields_map = split_fields(reply)
        values = {}
        for key in ("DENSITY", "COMPONENTS", "COLORS", "SHAPES"):
            if key not in fields_map:
                raise SchemaError(f"missing {key} line")
            try:
                values[key] = float(fields_map[key].split()[0])
            except (ValueError, IndexError):
                raise SchemaError(f"bad {key} value {fields_map[key]!r}") from None
        return values

    values, _ = with_repair(call, parse)
    density = values["DENSITY"]
    if not (0.0 <= density <= 100.0):
        clamped = min(100.0, max(0.0, density))
        _warn(warnings, f"measure: density {density} clamped to {clamped}")
        density = clamped
    counts = {}
    for key in ("COMPONENTS", "COLORS", "SHAPES"):
        value = values[key]
        if value != int(value):
            _warn(warnings, f"measure: {key.lower()} {value} rounded to {round(value)}")
        value = round(value)
        if value < 0:
            _warn(warnings, f"measure: {key.lower()} clamped to 0")
            value = 0
        counts[key] = int(value)
    return FigureStats(
        text_density=density,
        components=counts["COMPONENTS"],
        colors=counts["COLORS"],
        shapes=counts["SHAPES"],
    )


def _warn(warnings: list[str] | None, message: str) -> None:
    if warnings is not None:
        warnings.append(message)


def aggregate_stats(stats: Sequence[FigureStats]) -> dict[str, float]:
    """Arithmetic means per field, reported to 2 decimals."""
    if not stats:
        raise EmptyInputError("no figure statistics to aggregate")
    n = len(stats)
    return {
        "text_density": round(sum(s.text_density for s in stats) / n, 2),
        "components": round(sum(s.components for s in stats) / n, 2),
        "colors": round(sum(s.colors for s in stats) / n, 2),
        "shapes": round(sum(s.shapes for s in stats) / n, 2),
    }


# --- agreement ---


def cohens_kappa(pairs: Sequence[RatingPair | tuple]) -> float:
    """Chance-corrected agreement between two raters over categorical labels.

    kappa = (p_o - p_e) / (1 - p_e). When expected agreement is exactly 1
    the statistic is 1 for perfect agreement and undefined otherwise.
    """
    if not pairs:
        raise EmptyInputError("no rating pairs")
    labels_a = []
    labels_b = []
    for pair in pairs:
        if isinstance(pair, RatingPair):
            labels_a.append(pair.rater_a)
            labels_b.append(pair.rater_b)
        else:
            a, b = pair
            labels_a.append(a)
            labels_b.append(b)
    n = len(labels_a)
    categories = sorted(set(labels_a) | set(labels_b), key=repr)
    observed = sum(1 for a, b in zip(labels_a, labels_b) if a == b) / n
    expected = 0.0
    for category in categories:
        margin_a = sum(1 for a in labels_a if a == category) / n
        margin_b = sum(1 for b in labels_b if b == category) / n
        expected += margin_a * margin_b
    if expected >= 1.0 - 1e-12:
        if observed >= 1.0 - 1e-12:
            return 1.0
        raise DegenerateError("expected agreement is 1 but observed agreement is not")
    return (observed - expected) / (1.0 - expected)


# --- correlations ---


def average_ranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the average of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    n = len(x)
    mean_x = sum(x) / n
    mean_y = sum(y) / n
    var_x = sum((v - mean_x) ** 2 for v in x)
    var_y = sum((v - mean_y) ** 2 for v in y)
    if var_x == 0 or var_y == 0:
        raise ZeroVarianceError("pearson needs nonzero variance on both sides")
    cov = sum((a - mean_x) * (b - mean_y) for a, b in zip(x, y))
    return cov / math.sqrt(var_x * var_y)


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> float:
    """Kendall's tau-b (tie-corrected)."""
    n = len(x)
    concordant = discordant = ties_x = ties_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0 and dy == 0:
                ties_x += 1
                ties_y += 1
            elif dx == 0:
                ties_x += 1
            elif dy == 0:
                ties_y += 1
            elif dx * dy > 0:
                concordant += 1
            else:
                discordant += 1
    total = n * (n - 1) / 2
    denom = math.sqrt((total - ties_x) * (total - ties_y))
    if denom == 0:
        raise ZeroVarianceError("kendall tau-b undefined when one side is all ties")
    return (concordant - discordant) / denom


def correlations(x: Sequence[float], y: Sequence[float]) -> dict[str, float]:
    """Pearson, Spearman (average ranks), Kendall tau-b, and the mean
    absolute rank difference between the two score vectors."""
    if len(x) != len(y):
        raise LengthMismatchError(f"length {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise EmptyInputError("need at least 2 observations")
    ranks_x = average_ranks(x)
    ranks_y = average_ranks(y)
    return {
        "pearson": pearson(x, y),
        "spearman": pearson(ranks_x, ranks_y),
        "kendall_tau": kendall_tau(x, y),
        "mean_ranking_error": sum(abs(a - b) for a, b in zip(ranks_x, ranks_y)) / len(x),
    }
