from __future__ import annotations

import random

import pytest
from PIL import Image

from figsmith.errors import EmptyGroupError, SchemaError
from figsmith.judge import (
    SCORE_KEYS,
    PairwiseVerdict,
    ScoreCard,
    aggregate_win_rates,
    pairwise_compare,
    presentation_order,
    referenced_score,
)

from conftest import make_gateway

REFERENCE = Image.new("RGB", (64, 48), (200, 210, 220))
GENERATED = Image.new("RGB", (64, 48), (90, 120, 150))

# published sub-scores for the strongest Blog-category system
BLOG_SUBSCORES = (7.53, 7.25, 7.44, 8.04, 8.38, 7.32, 6.65, 8.23)


def test_referenced_score_mean_of_constants():
    gw = make_gateway(vision={"judge_scores": [8.0] * 8})
    card = referenced_score("full text", REFERENCE, GENERATED, gw)
    assert card.overall == pytest.approx(8.0)
    assert set(card.sub_scores) == set(SCORE_KEYS)


def test_referenced_score_reproduces_published_overall():
    gw = make_gateway(vision={"judge_scores": list(BLOG_SUBSCORES)})
    card = referenced_score("full text", REFERENCE, GENERATED, gw)
    # the true mean is exactly 7.605, right on the +-0.005 boundary;
    # allow binary-float representation error only
    assert abs(card.overall - 7.60) <= 0.005 + 1e-12


def test_referenced_score_missing_key_errors_after_repair():
    reply = "\n".join(f"{k.upper()}: 7.0 | fine" for k in SCORE_KEYS if k != "flow")
    gw = make_gateway(vision={"script": {"judge-referenced": reply}})
    with pytest.raises(SchemaError, match="FLOW"):
        referenced_score("full text", REFERENCE, GENERATED, gw)


def test_scorecard_rejects_wrong_overall():
    scores = {key: 5.0 for key in SCORE_KEYS}
    with pytest.raises(SchemaError):
        ScoreCard(sub_scores=scores, reasoning={}, overall=6.0)


def test_scorecard_mean_identity_randomized():
    rng = random.Random(2)
    for _ in range(50):
        scores = {key: round(rng.uniform(0, 10), 2) for key in SCORE_KEYS}
        card = ScoreCard.from_scores(scores)
        assert abs(card.overall - sum(scores.values()) / 8) <= 1e-9


def _seed_with_order(first: str) -> int:
    for seed in range(1000):
        if presentation_order(seed)[0] == first:
            return seed
    raise AssertionError("no such seed in range")


def test_pairwise_derandomization_win():
    # judge always prefers the second presented image
    gw = make_gateway(vision={"pairwise_policy": "second"})
    seed = _seed_with_order("reference")  # generated is presented second
    verdict = pairwise_compare("text", REFERENCE, GENERATED, seed, "basic", gw)
    assert verdict.decision == "Win"
    assert verdict.presented_order == ("reference", "generated")


def test_pairwise_derandomization_lose_on_flipped_order():
    gw = make_gateway(vision={"pairwise_policy": "second"})
    seed = _seed_with_order("generated")  # reference is presented second
    verdict = pairwise_compare("text", REFERENCE, GENERATED, seed, "basic", gw)
    assert verdict.decision == "Lose"


def test_pairwise_extended_both_good():
    gw = make_gateway(vision={"pairwise_policy": "both_good"})
    verdict = pairwise_compare("text", REFERENCE, GENERATED, 0, "extended", gw)
    assert verdict.decision == "BothGood"
    assert verdict.mode == "extended"


def test_pairwise_extended_never_ties():
    gw = make_gateway(vision={"pairwise_policy": "tie"})
    with pytest.raises(SchemaError):
        pairwise_compare("text", REFERENCE, GENERATED, 0, "extended", gw)


def test_pairwise_basic_tie_allowed():
    gw = make_gateway(vision={"pairwise_policy": "tie"})
    verdict = pairwise_compare("text", REFERENCE, GENERATED, 0, "basic", gw)
    assert verdict.decision == "Tie"


def test_pairwise_symmetric_judge_invariant_to_order():
    gw = make_gateway(vision={"pairwise_policy": "prefer_hash"})
    decisions = set()
    orders = set()
    for seed in range(24):
        verdict = pairwise_compare("text", REFERENCE, GENERATED, seed, "basic", gw)
        decisions.add(verdict.decision)
        orders.add(verdict.presented_order)
    assert len(orders) == 2  # both presentation orders occurred
    assert len(decisions) == 1  # the de-randomized decision never changed


def test_presentation_order_fairness_bound():
    reference_first = sum(1 for seed in range(10000) if presentation_order(seed)[0] == "reference")
    assert 0.48 <= reference_first / 10000 <= 0.52


def _verdict(decision: str, mode: str = "extended") -> PairwiseVerdict:
    return PairwiseVerdict(
        order_seed=0,
        presented_order=("reference", "generated"),
        per_criterion={},
        decision=decision,
        mode=mode,
    )


def test_win_rate_published_values():
    strongest = [_verdict("Win")] * 29 + [_verdict("Lose")] * 11
    runner_up = [_verdict("Win")] * 18 + [_verdict("Lose")] * 20 + [_verdict("BothGood")] * 2
    table = aggregate_win_rates({"ours": strongest, "baseline": runner_up})
    assert table.rows["ours"].win_rate == pytest.approx(0.725)
    assert table.rows["baseline"].win_rate == pytest.approx(0.45)


def test_win_rate_unanimous():
    table = aggregate_win_rates({"m": [_verdict("Win")] * 7})
    assert table.rows["m"].win_rate == 1.0


def test_win_rate_count_identity():
    rng = random.Random(4)
    decisions = ["Win", "Lose", "BothGood", "BothBad"]
    verdicts = [_verdict(rng.choice(decisions)) for _ in range(40)]
    table = aggregate_win_rates({"m": verdicts})
    row = table.rows["m"]
    assert row.win + row.lose + row.good + row.bad + row.tie == len(verdicts)


def test_empty_group_errors():
    with pytest.raises(EmptyGroupError):
        aggregate_win_rates({"m": []})


def test_basic_mode_rejects_extended_decisions():
    with pytest.raises(SchemaError):
        _verdict("BothGood", mode="basic")
    with pytest.raises(SchemaError):
        _verdict("Tie", mode="extended")
