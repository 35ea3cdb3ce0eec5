import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from staykate.corpus import EntitySpan
from staykate.errors import ValidationError
from staykate.evaluation import (
    EvalReport,
    aggregate_runs,
    f1_scores,
    match_entities,
    normalize_surface,
    render_table,
)
from staykate.llm import ExtractionResult

TYPES = ("Material", "Operation", "Property")


def prediction(entities, sid="s1", status="ok"):
    return ExtractionResult(sentence_id=sid, predicted=entities, parse_status=status)


def gold_spans(pairs, sid="s1"):
    spans = []
    for i, (etype, surface) in enumerate(pairs):
        width = max(1, len(surface.split()))
        spans.append(
            EntitySpan(
                sentence_id=sid, start=i * 10, end=i * 10 + width,
                entity_type=etype, surface=surface,
            )
        )
    return spans


def oracle_match_counts(pred_pairs, gold_pairs):
    """Exhaustive lexicographic-optimal matching: maximize TP, then wrong-type.

    Each prediction is either unmatched or paired with an unused gold entity
    sharing its normalized surface; a pair is a TP when the types agree,
    otherwise wrong-type.
    """
    pred = [(t, normalize_surface(s)) for t, s in pred_pairs]
    gold = [(t, normalize_surface(s)) for t, s in gold_pairs]
    best = (-1, -1)

    def recurse(i, used, tp, wt):
        nonlocal best
        if i == len(pred):
            best = max(best, (tp, wt))
            return
        recurse(i + 1, used, tp, wt)  # leave prediction i unmatched
        ptype, psurface = pred[i]
        for j, (gtype, gsurface) in enumerate(gold):
            if j in used or gsurface != psurface:
                continue
            recurse(i + 1, used | {j}, tp + (ptype == gtype), wt + (ptype != gtype))

    recurse(0, frozenset(), 0, 0)
    tp, wt = best
    return {
        "tp": tp,
        "wrong_type": wt,
        "overpredicted": len(pred) - tp - wt,
        "oversighted": len(gold) - tp - wt,
    }


class TestMatchEntities:
    def test_exact_match(self):
        report = match_entities(
            prediction({"Material": ["NaCl"]}), gold_spans([("Material", "NaCl")])
        )
        assert report.true_positives == [("Material", "nacl")]
        assert not report.wrong_type and not report.overpredicted and not report.oversighted

    def test_same_surface_different_type_is_wrong_type(self):
        # "solution" predicted as Property while gold says Material
        report = match_entities(
            prediction({"Property": ["solution"]}), gold_spans([("Material", "solution")])
        )
        assert report.wrong_type == [("Property", "Material", "solution")]
        assert not report.overpredicted and not report.oversighted

    def test_abbreviation_miss_three_passes(self):
        report = match_entities(
            prediction({"Material": ["FBS", "X"]}, sid="s2"),
            gold_spans([("Material", "FBS"), ("Material", "Fetal bovine serum")], sid="s2"),
        )
        assert len(report.true_positives) == 1
        assert len(report.overpredicted) == 1
        assert len(report.oversighted) == 1
        assert not report.wrong_type

    def test_case_and_whitespace_normalization(self):
        report = match_entities(
            prediction({"Material": ["Zinc  Oxide"]}), gold_spans([("Material", "zinc oxide")])
        )
        assert len(report.true_positives) == 1

    def test_sentence_id_mismatch(self):
        with pytest.raises(ValidationError, match="belong"):
            match_entities(prediction({}, sid="a"), gold_spans([("Material", "x")], sid="b"))

    def test_failed_parse_counts_all_gold_as_oversighted(self):
        report = match_entities(
            prediction({}, status="failed"),
            gold_spans([("Material", "NaCl"), ("Operation", "stir")]),
        )
        assert len(report.oversighted) == 2
        assert report.predicted_total == 0

    def test_duplicate_surface_regression_pinned(self):
        # One prediction, two same-surface golds of different types: greedy
        # pairs the prediction with the type-sorted first gold (Material),
        # leaving the Property gold oversighted.
        report = match_entities(
            prediction({"Operation": ["wash"]}),
            gold_spans([("Property", "wash"), ("Material", "wash")]),
        )
        assert report.wrong_type == [("Operation", "Material", "wash")]
        assert report.oversighted == [("Property", "wash")]

    def test_duplicate_mentions_counted_per_occurrence(self):
        report = match_entities(
            prediction({"Material": ["FBS", "FBS"]}),
            gold_spans([("Material", "FBS"), ("Material", "FBS")]),
        )
        assert len(report.true_positives) == 2


def random_instance(rng):
    surfaces = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"]
    n_pred = rng.randint(0, 6)
    n_gold = rng.randint(0, 6)
    pred_pairs = [(rng.choice(TYPES), rng.choice(surfaces)) for _ in range(n_pred)]
    gold_pairs = [(rng.choice(TYPES), rng.choice(surfaces)) for _ in range(n_gold)]
    return pred_pairs, gold_pairs


def as_prediction(pairs):
    entities = {}
    for etype, surface in pairs:
        entities.setdefault(etype, []).append(surface)
    return prediction(entities)


class TestGreedyMatchesOptimalOracle:
    def test_distinct_surfaces(self):
        rng = random.Random(7)
        for _ in range(300):
            pred_pairs, gold_pairs = random_instance(rng)
            # force distinct surfaces on each side
            pred_pairs = list({s: (t, s) for t, s in pred_pairs}.values())
            gold_pairs = list({s: (t, s) for t, s in gold_pairs}.values())
            report = match_entities(as_prediction(pred_pairs), gold_spans(gold_pairs))
            expected = oracle_match_counts(pred_pairs, gold_pairs)
            assert len(report.true_positives) == expected["tp"]
            assert len(report.wrong_type) == expected["wrong_type"]
            assert len(report.overpredicted) == expected["overpredicted"]
            assert len(report.oversighted) == expected["oversighted"]

    def test_duplicate_surfaces_count_equality(self):
        rng = random.Random(13)
        for _ in range(300):
            pred_pairs, gold_pairs = random_instance(rng)
            report = match_entities(as_prediction(pred_pairs), gold_spans(gold_pairs))
            expected = oracle_match_counts(pred_pairs, gold_pairs)
            assert len(report.true_positives) == expected["tp"]
            assert len(report.wrong_type) == expected["wrong_type"]


@given(st.integers(min_value=0, max_value=2**32))
@settings(max_examples=300, deadline=None)
def test_conservation_identities(seed):
    rng = random.Random(seed)
    pred_pairs, gold_pairs = random_instance(rng)
    report = match_entities(as_prediction(pred_pairs), gold_spans(gold_pairs))
    matched = len(report.true_positives) + len(report.wrong_type)
    assert matched + len(report.overpredicted) == report.predicted_total == len(pred_pairs)
    assert matched + len(report.oversighted) == report.gold_total == len(gold_pairs)


class TestF1Scores:
    def test_perfect_prediction(self):
        report = match_entities(
            prediction({"Material": ["NaCl"]}), gold_spans([("Material", "NaCl")])
        )
        scores = f1_scores([report], TYPES)
        assert scores.micro.f1 == 1.0

    def test_zero_predictions_nonempty_gold(self):
        report = match_entities(prediction({}), gold_spans([("Material", "NaCl")]))
        scores = f1_scores([report], TYPES)
        assert scores.micro.precision == 0.0
        assert scores.micro.recall == 0.0
        assert scores.micro.f1 == 0.0

    def test_hand_arithmetic(self):
        # TP=3, FP=1, FN=2 -> P=0.75, R=0.6, F1=2*.45/1.35
        reports = [
            match_entities(
                prediction({"Material": ["a", "b", "c", "x"]}, sid="s1"),
                gold_spans(
                    [("Material", "a"), ("Material", "b"), ("Material", "c"),
                     ("Material", "d"), ("Material", "e")],
                    sid="s1",
                ),
            )
        ]
        scores = f1_scores(reports, TYPES)
        assert scores.micro.precision == pytest.approx(0.75)
        assert scores.micro.recall == pytest.approx(0.6)
        assert scores.micro.f1 == pytest.approx(2 * 0.75 * 0.6 / 1.35)

    def test_wrong_type_counts_against_both_types(self):
        report = match_entities(
            prediction({"Property": ["solution"]}), gold_spans([("Material", "solution")])
        )
        scores = f1_scores([report], TYPES)
        assert scores.per_type["Property"].precision == 0.0
        assert scores.per_type["Material"].recall == 0.0
        assert scores.per_type["Material"].support == 1

    def test_zero_support_type_is_zero_by_convention(self):
        report = match_entities(
            prediction({"Material": ["x"]}), gold_spans([("Material", "x")])
        )
        scores = f1_scores([report], TYPES)
        assert scores.per_type["Operation"].f1 == 0.0
        assert scores.per_type["Operation"].support == 0

    def test_error_rates_normalization(self):
        report = match_entities(
            prediction({"Material": ["x", "y"], "Property": ["solution"]}),
            gold_spans([("Material", "x"), ("Material", "solution"), ("Operation", "z")]),
        )
        scores = f1_scores([report], TYPES)
        assert scores.errors.overpredicting_rate == pytest.approx(1 / 3)
        assert scores.errors.wrong_type_rate == pytest.approx(1 / 3)
        assert scores.errors.oversight_rate == pytest.approx(1 / 3)

    def test_micro_invariant_under_reordering_and_relabeling(self):
        rng = random.Random(3)
        instances = [random_instance(rng) for _ in range(20)]
        reports = [
            match_entities(as_prediction(p), gold_spans(g)) for p, g in instances
        ]
        base = f1_scores(reports, TYPES).micro.f1
        shuffled = f1_scores(list(reversed(reports)), TYPES).micro.f1
        assert base == shuffled
        swap = {"Material": "Operation", "Operation": "Material", "Property": "Property"}
        relabeled = [
            match_entities(
                as_prediction([(swap[t], s) for t, s in p]),
                gold_spans([(swap[t], s) for t, s in g]),
            )
            for p, g in instances
        ]
        assert f1_scores(relabeled, TYPES).micro.f1 == base


class TestAggregateRuns:
    def one_pool(self, f1_target):
        # craft a pool with the requested micro f1 via tp/total manipulation
        n_tp = int(round(f1_target * 10))
        reports = []
        pairs = [("Material", f"m{i}") for i in range(10)]
        predicted = [("Material", f"m{i}") for i in range(n_tp)]
        predicted += [("Material", f"wrong{i}") for i in range(10 - n_tp)]
        reports.append(match_entities(as_prediction(predicted), gold_spans(pairs)))
        return f1_scores(reports, TYPES)

    def test_single_pool_mean_is_identity(self):
        pool = self.one_pool(0.8)
        aggregated = aggregate_runs([(1, pool)])
        assert aggregated.micro.f1 == pool.micro.f1
        assert len(aggregated.runs) == 1

    def test_mean_of_three(self):
        pools = [(s, self.one_pool(f)) for s, f in ((1, 0.6), (2, 0.7), (3, 0.8))]
        aggregated = aggregate_runs(pools)
        expected = sum(p.micro.f1 for _, p in pools) / 3
        assert aggregated.micro.f1 == pytest.approx(expected)

    def test_independent_recomputation(self):
        rng = random.Random(99)
        pools = []
        for seed in (1, 2, 3):
            instances = [random_instance(rng) for _ in range(10)]
            reports = [match_entities(as_prediction(p), gold_spans(g)) for p, g in instances]
            pools.append((seed, f1_scores(reports, TYPES)))
        aggregated = aggregate_runs(pools)
        for etype in TYPES:
            values = [p.per_type[etype].f1 for _, p in pools]
            assert aggregated.per_type[etype].f1 == pytest.approx(sum(values) / len(values))
        assert aggregated.errors.overpredicting == sum(p.errors.overpredicting for _, p in pools)

    def test_mismatched_schemes_rejected(self):
        a = f1_scores(
            [match_entities(prediction({}), gold_spans([("Material", "x")]))], ("Material",)
        )
        b = f1_scores(
            [match_entities(prediction({}), gold_spans([("Material", "x")]))], TYPES
        )
        with pytest.raises(ValidationError, match="different entity type sets"):
            aggregate_runs([(1, a), (2, b)])


class TestRenderTable:
    def test_has_per_type_and_micro_rows(self):
        report = match_entities(
            prediction({"Material": ["NaCl"]}), gold_spans([("Material", "NaCl")])
        )
        table = render_table(f1_scores([report], TYPES))
        lines = table.splitlines()
        assert lines[0].startswith("entity")
        assert any(line.startswith("Material") for line in lines)
        assert lines[-1].startswith("micro avg")
