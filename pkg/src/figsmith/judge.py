"""Evaluation protocols: referenced scoring and blind pairwise comparison.

Referenced scoring shows the judge the full source text, the reference
figure, and the generated figure, and collects eight sub-metric scores
whose arithmetic mean is the overall score. Pairwise comparison shows
the two figures in a seed-derived random order without revealing which
is which; the verdict is de-randomized afterwards so a Win always means
the generated figure was preferred. The extended mode adds the
absolute-quality outcomes Both Good and Both Bad.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from PIL import Image

from .errors import EmptyGroupError, SchemaError
from .gateway import Gateway
from .images import png_bytes
from .replies import parse_score, split_fields, with_repair

SCORE_KEYS = (
    "aesthetic",
    "expressiveness",
    "polish",
    "clarity",
    "flow",
    "accuracy",
    "completeness",
    "appropriateness",
)
PAIRWISE_CRITERIA = (
    "aesthetic",
    "clarity",
    "sophistication",
    "accuracy",
    "completeness",
    "appropriateness",
    "overall",
)
BASIC_DECISIONS = ("Win", "Lose", "Tie")
EXTENDED_DECISIONS = ("Win", "Lose", "BothGood", "BothBad")


@dataclass(frozen=True)
class ScoreCard:
    sub_scores: dict[str, float]
    reasoning: dict[str, str]
    overall: float

    def __post_init__(self):
        missing = [key for key in SCORE_KEYS if key not in self.sub_scores]
        if missing or len(self.sub_scores) != len(SCORE_KEYS):
            raise SchemaError(f"sub_scores must hold exactly the 8 keys (missing {missing})")
        for key, value in self.sub_scores.items():
            if not (0.0 <= value <= 10.0):
                raise SchemaError(f"{key} score {value} outside [0, 10]")
        mean = sum(self.sub_scores.values()) / len(SCORE_KEYS)
        if abs(self.overall - mean) > 1e-9:
            raise SchemaError(f"overall {self.overall} is not the sub-score mean {mean}")

    @classmethod
    def from_scores(cls, sub_scores: dict[str, float], reasoning: dict[str, str] | None = None) -> "ScoreCard":
        overall = sum(sub_scores[key] for key in SCORE_KEYS) / len(SCORE_KEYS)
        return cls(sub_scores=dict(sub_scores), reasoning=dict(reasoning or {}), overall=overall)


@dataclass(frozen=True)
class PairwiseVerdict:
    order_seed: int
    presented_order: tuple[str, str]  # ('generated', 'reference') or flipped
    per_criterion: dict[str, str]  # criterion -> A | B | Tie, A meaning generated after de-randomization
    decision: str
    mode: str  # basic | extended

    def __post_init__(self):
        allowed = BASIC_DECISIONS if self.mode == "basic" else EXTENDED_DECISIONS
        if self.decision not in allowed:
            raise SchemaError(f"decision {self.decision!r} not allowed in {self.mode} mode")


@dataclass
class WinRateRow:
    win: int = 0
    lose: int = 0
    good: int = 0
    bad: int = 0
    tie: int = 0

    @property
    def total(self) -> int:
        return self.win + self.lose + self.good + self.bad + self.tie

    @property
    def win_rate(self) -> float:
        return self.win / self.total if self.total else 0.0


@dataclass
class WinRateTable:
    rows: dict[str, WinRateRow] = field(default_factory=dict)


REFERENCED_PROMPT = """TASK: judge-referenced
Two images are attached: first the reference figure, second the
generated figure. Score the generated figure on each sub-metric from 0
to 10 given the full source text, and justify each score briefly.
Reply with exactly these lines:
AESTHETIC: <score> | <reasoning>
EXPRESSIVENESS: <score> | <reasoning>
POLISH: <score> | <reasoning>
CLARITY: <score> | <reasoning>
FLOW: <score> | <reasoning>
ACCURACY: <score> | <reasoning>
COMPLETENESS: <score> | <reasoning>
APPROPRIATENESS: <score> | <reasoning>

FULL_TEXT:
{full_text}
"""


def referenced_score(
    full_text: str,
    reference: Image.Image,
    generated: Image.Image,
    vision_model: Gateway,
) -> ScoreCard:
    """Multi-dimension referenced scoring; overall is the sub-score mean."""
    if not full_text.strip():
        raise SchemaError("full_text must be non-empty")
    images = (png_bytes(reference), png_bytes(generated))
    base_prompt = REFERENCED_PROMPT.format(full_text=full_text)

    def call(repair: str | None) -> str:
        prompt = base_prompt
        if repair is not None:
            prompt += f"\nREPAIR: the previous reply was invalid ({repair}); reply again with all 8 lines."
        return vision_model.vision(prompt, images=images)

    def parse(reply: str) -> ScoreCard:
        fields_map = split_fields(reply)
        sub_scores: dict[str, float] = {}
        reasoning: dict[str, str] = {}
        for key in SCORE_KEYS:
            block = fields_map.get(key.upper())
            if block is None:
                raise SchemaError(f"missing {key.upper()} line")
            value, _, explanation = block.partition("|")
            sub_scores[key] = parse_score(value)
            reasoning[key] = explanation.strip()
        return ScoreCard.from_scores(sub_scores, reasoning)

    card, _ = with_repair(call, parse)
    return card


def presentation_order(seed: int) -> tuple[str, str]:
    """Seed-derived presentation order for a blind pairwise round."""
    digest = hashlib.sha256(f"pairwise-order:{seed}".encode("utf-8")).digest()
    if digest[0] & 1:
        return ("generated", "reference")
    return ("reference", "generated")


PAIRWISE_PROMPT = """TASK: judge-pairwise
MODE: {mode}
Two images are attached in an undisclosed order. Compare them on each
criterion and answer A (first image), B (second image), or Tie per
line, then give the final choice.
Reply with exactly these lines:
AESTHETIC: <A|B|Tie>
CLARITY: <A|B|Tie>
SOPHISTICATION: <A|B|Tie>
ACCURACY: <A|B|Tie>
COMPLETENESS: <A|B|Tie>
APPROPRIATENESS: <A|B|Tie>
OVERALL: <A|B|Tie>
{verdict_line}
FULL_TEXT:
{full_text}
"""


def pairwise_compare(
    full_text: str,
    reference: Image.Image,
    generated: Image.Image,
    seed: int,
    mode: str,
    vision_model: Gateway,
) -> PairwiseVerdict:
    """Blind pairwise comparison with explicit seeding of the order."""
    if mode not in ("basic", "extended"):
        raise SchemaError(f"unknown pairwise mode {mode!r}")
    order = presentation_order(seed)
    by_role = {"reference": png_bytes(reference), "generated": png_bytes(generated)}
    images = (by_role[order[0]], by_role[order[1]])
    verdict_line = (
        "VERDICT: <A|B|Both Good|Both Bad>" if mode == "extended" else ""
    )
    base_prompt = PAIRWISE_PROMPT.format(mode=mode, verdict_line=verdict_line, full_text=full_text)

    def call(repair: str | None) -> str:
        prompt = base_prompt
        if repair is not None:
            prompt += f"\nREPAIR: the previous reply was invalid ({repair}); reply again in the exact format."
        return vision_model.vision(prompt, images=images)

    def parse(reply: str) -> tuple[dict[str, str], str]:
        fields_map = split_fields(reply)
        answers: dict[str, str] = {}
        for criterion in PAIRWISE_CRITERIA:
            block = fields_map.get(criterion.upper())
            if block is None:
                raise SchemaError(f"missing {criterion.upper()} line")
            answers[criterion] = _normalize_side(block.splitlines()[0])
        if mode == "extended":
            raw = fields_map.get("VERDICT")
            if raw is None:
                raise SchemaError("missing VERDICT line")
            final = _normalize_verdict(raw.splitlines()[0])
        else:
            final = answers["overall"]
        return answers, final

    (answers, final), _ = with_repair(call, parse)

    generated_first = order[0] == "generated"
    per_criterion = {
        criterion: _derandomize_side(answer, generated_first) for criterion, answer in answers.items()
    }
    decision = _decision_from(final, generated_first, mode)
    return PairwiseVerdict(
        order_seed=seed,
        presented_order=order,
        per_criterion=per_criterion,
        decision=decision,
        mode=mode,
    )


def _normalize_side(text: str) -> str:
    value = text.strip().casefold()
    if value == "a":
        return "A"
    if value == "b":
        return "B"
    if value == "tie":
        return "Tie"
    raise SchemaError(f"criterion answer {text!r} is not A, B, or Tie")


def _normalize_verdict(text: str) -> str:
    value = " ".join(text.strip().casefold().split())
    mapping = {"a": "A", "b": "B", "both good": "BothGood", "both bad": "BothBad"}
    if value not in mapping:
        raise SchemaError(f"verdict {text!r} is not A, B, Both Good, or Both Bad")
    return mapping[value]


def _derandomize_side(answer: str, generated_first: bool) -> str:
    """Re-express a positional answer so A always means the generated image."""
    if answer == "Tie" or generated_first:
        return answer
    return "B" if answer == "A" else "A"


def _decision_from(final: str, generated_first: bool, mode: str) -> str:
    if final in ("BothGood", "BothBad"):
        return final
    if final == "Tie":
        if mode == "extended":
            raise SchemaError("extended mode cannot decide Tie")
        return "Tie"
    generated_letter = "A" if generated_first else "B"
    return "Win" if final == generated_letter else "Lose"


def aggregate_win_rates(verdicts_by_method: dict[str, list[PairwiseVerdict]]) -> WinRateTable:
    """Fold de-randomized verdicts into per-method counts and win rates."""
    table = WinRateTable()
    for method, verdicts in verdicts_by_method.items():
        if not verdicts:
            raise EmptyGroupError(f"no verdicts for method {method!r}")
        row = WinRateRow()
        for verdict in verdicts:
            if verdict.decision == "Win":
                row.win += 1
            elif verdict.decision == "Lose":
                row.lose += 1
            elif verdict.decision == "BothGood":
                row.good += 1
            elif verdict.decision == "BothBad":
                row.bad += 1
            else:
                row.tie += 1
        table.rows[method] = row
    return table
