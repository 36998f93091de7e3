"""Task metrics: strict and proportional span-match scores, span-free pair
scores, per-emotion breakdowns, and weighted averages.

Credit for a matched prediction/gold pair:

* strict: 1 iff (emotion utterance, cause utterance, emotion) and the exact
  span all agree, else 0;
* proportional: intersection-over-union of the char intervals, gated on the
  same identity triple.

Predictions and golds are matched one-to-one within each (conversation,
emotion utterance, cause utterance, emotion) bucket so that one long
prediction cannot farm credit against several golds. The matching maximizes
total credit exactly: credits are rational (interval lengths are integers),
so all matching arithmetic runs on fractions and converts to float once at
the end. A greedy highest-credit-first sweep is not equivalent (two golds
[0,10) and [10,20) against predictions [0,20) and [0,5) defeat it), and the
optimum is what the metric means.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Literal, Mapping, Sequence

from .corpus import CAUSE_EMOTIONS, CausePair, EmotionLabel
from .pairing import PairPrediction

Mode = Literal["strict", "proportional"]

#: (conversation_id, prediction) and (conversation_id, gold pair) rows.
PredRow = tuple[str, PairPrediction]
GoldRow = tuple[str, CausePair]

_ZERO = Fraction(0)
_ONE = Fraction(1)


@dataclass(frozen=True)
class MetricTriple:
    precision: float
    recall: float
    f1: float

    @classmethod
    def zero(cls) -> MetricTriple:
        return cls(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ScoreReport:
    """All task metrics for one prediction/gold set.

    per_emotion and weighted carry one entry per matching flavor
    ("strict", "proportional", "pair_only"); the ambiguity about which
    flavor an official "Weighted" column aggregates is resolved by
    reporting all three, explicitly labeled.
    """

    strict: MetricTriple
    proportional: MetricTriple
    pair_only: MetricTriple
    per_emotion: dict[str, dict[EmotionLabel, MetricTriple]]
    weighted: dict[str, MetricTriple]
    gold_counts: dict[EmotionLabel, int]

    def to_dict(self) -> dict:
        def triple(t: MetricTriple) -> dict:
            return {"precision": t.precision, "recall": t.recall, "f1": t.f1}

        return {
            "strict": triple(self.strict),
            "proportional": triple(self.proportional),
            "pair_only": triple(self.pair_only),
            "per_emotion": {mode: {str(e): triple(t) for e, t in by_emotion.items()}
                            for mode, by_emotion in self.per_emotion.items()},
            "weighted": {mode: triple(t) for mode, t in self.weighted.items()},
            "gold_counts": {str(e): n for e, n in self.gold_counts.items()},
        }


def _interval_credit(a: tuple[int, int], b: tuple[int, int]) -> Fraction:
    """Intersection-over-union of two half-open integer intervals."""
    inter = min(a[1], b[1]) - max(a[0], b[0])
    if inter <= 0:
        return _ZERO
    union = max(a[1], b[1]) - min(a[0], b[0])
    return Fraction(inter, union)


def _credit(pred: PairPrediction, gold: CausePair, mode: Mode) -> Fraction:
    if (pred.emotion_utt_id != gold.emotion_utt_id
            or pred.cause_utt_id != gold.cause_utt_id
            or pred.emotion is not gold.emotion):
        return _ZERO
    if pred.span is None or gold.span is None:
        raise ValueError(f"{mode} match requires spans on both sides")
    if mode == "strict":
        return _ONE if pred.span == gold.span else _ZERO
    return _interval_credit(pred.span, gold.span)


def match_credit(pred: PairPrediction, gold: CausePair, mode: Mode) -> float:
    """Credit in [0, 1] a single prediction earns against a single gold pair."""
    if mode not in ("strict", "proportional"):
        raise ValueError(f"unknown mode {mode!r}")
    return float(_credit(pred, gold, mode))


def _best_assignment_total(credit: list[list[Fraction]]) -> Fraction:
    """Maximum total credit over one-to-one pred/gold assignments, exact."""
    m = len(credit)
    n = len(credit[0]) if m else 0
    if m == 0 or n == 0:
        return _ZERO

    @lru_cache(maxsize=None)
    def best(i: int, used: int) -> Fraction:
        if i == m:
            return _ZERO
        top = best(i + 1, used)
        row = credit[i]
        for j in range(n):
            if row[j] > 0 and not used & (1 << j):
                cand = row[j] + best(i + 1, used | (1 << j))
                if cand > top:
                    top = cand
        return top

    total = best(0, 0)
    best.cache_clear()
    return total


def _bucket_key(conv_id: str, item: PairPrediction | CausePair) -> tuple:
    return (conv_id, item.emotion_utt_id, item.cause_utt_id, item.emotion)


def _dedup_preds(preds: Iterable[PredRow]) -> list[PredRow]:
    seen: set[tuple] = set()
    out: list[PredRow] = []
    for conv_id, pred in preds:
        key = (conv_id, pred.emotion_utt_id, pred.cause_utt_id, pred.emotion, pred.span)
        if key not in seen:
            seen.add(key)
            out.append((conv_id, pred))
    return out


def _prf(total: Fraction, n_preds: int, n_golds: int) -> MetricTriple:
    precision = total / n_preds if n_preds else _ZERO
    recall = total / n_golds if n_golds else _ZERO
    denom = precision + recall
    f1 = 2 * precision * recall / denom if denom > 0 else _ZERO
    return MetricTriple(float(precision), float(recall), float(f1))


def span_scores(preds: Iterable[PredRow], golds: Iterable[GoldRow],
                mode: Mode) -> MetricTriple:
    """Span-matched precision/recall/F1 under the given credit mode.

    Exact duplicates among predictions are collapsed first. Predictions
    without a span earn zero credit (they cannot name any text); golds are
    required to carry spans.
    """
    if mode not in ("strict", "proportional"):
        raise ValueError(f"unknown mode {mode!r}")
    preds = _dedup_preds(preds)
    golds = list(golds)
    for _, gold in golds:
        if gold.span is None:
            raise ValueError("span scoring requires gold spans")

    buckets: dict[tuple, tuple[list[PairPrediction], list[CausePair]]] = {}
    for conv_id, pred in preds:
        buckets.setdefault(_bucket_key(conv_id, pred), ([], []))[0].append(pred)
    for conv_id, gold in golds:
        buckets.setdefault(_bucket_key(conv_id, gold), ([], []))[1].append(gold)

    total = _ZERO
    for bucket_preds, bucket_golds in buckets.values():
        if not bucket_preds or not bucket_golds:
            continue
        credit = [[_ZERO if p.span is None else _credit(p, g, mode)
                   for g in bucket_golds] for p in bucket_preds]
        total += _best_assignment_total(credit)
    return _prf(total, len(preds), len(golds))


def pair_scores(preds: Iterable[PredRow], golds: Iterable[GoldRow]) -> MetricTriple:
    """Span-free scoring: exact set match on (conversation, emotion utterance,
    cause utterance, emotion)."""
    pred_set = {_bucket_key(c, p) for c, p in preds}
    gold_set = {_bucket_key(c, g) for c, g in golds}
    hits = Fraction(len(pred_set & gold_set))
    return _prf(hits, len(pred_set), len(gold_set))


def weighted_f1(per_emotion_f1: Mapping[EmotionLabel, float],
                gold_counts: Mapping[EmotionLabel, int]) -> float:
    """Gold-count-weighted mean F1 over the six non-neutral emotions."""
    weighted = 0.0
    total = 0
    for emotion in CAUSE_EMOTIONS:
        count = gold_counts.get(emotion, 0)
        if count < 0:
            raise ValueError(f"negative gold count for {emotion}")
        if count > 0:
            weighted += count * per_emotion_f1.get(emotion, 0.0)
            total += count
    if total == 0:
        raise ValueError("weighted F1 undefined: no gold pairs in any emotion class")
    return weighted / total


_MODES = ("strict", "proportional", "pair_only")


def _scores_for_mode(preds: Sequence[PredRow], golds: Sequence[GoldRow],
                     mode: str) -> MetricTriple:
    if mode == "pair_only":
        return pair_scores(preds, golds)
    return span_scores(preds, golds, mode)  # type: ignore[arg-type]


def full_report(preds: Iterable[PredRow], golds: Iterable[GoldRow]) -> ScoreReport:
    """Assemble every metric the task reports. Weighted averages are emitted
    for all three matching flavors; classes without gold pairs carry zero
    weight (and the all-empty corpus yields zero weighted scores)."""
    preds = list(preds)
    golds = list(golds)
    gold_counts = {e: 0 for e in CAUSE_EMOTIONS}
    for _, gold in golds:
        gold_counts[gold.emotion] += 1

    per_emotion: dict[str, dict[EmotionLabel, MetricTriple]] = {}
    weighted: dict[str, MetricTriple] = {}
    for mode in _MODES:
        by_emotion = {}
        for emotion in CAUSE_EMOTIONS:
            e_preds = [(c, p) for c, p in preds if p.emotion is emotion]
            e_golds = [(c, g) for c, g in golds if g.emotion is emotion]
            by_emotion[emotion] = (_scores_for_mode(e_preds, e_golds, mode)
                                   if e_preds or e_golds else MetricTriple.zero())
        per_emotion[mode] = by_emotion
        total = sum(gold_counts.values())
        if total == 0:
            weighted[mode] = MetricTriple.zero()
        else:
            weighted[mode] = MetricTriple(
                precision=sum(gold_counts[e] * by_emotion[e].precision
                              for e in CAUSE_EMOTIONS) / total,
                recall=sum(gold_counts[e] * by_emotion[e].recall
                           for e in CAUSE_EMOTIONS) / total,
                f1=weighted_f1({e: by_emotion[e].f1 for e in CAUSE_EMOTIONS},
                               gold_counts),
            )

    return ScoreReport(
        strict=span_scores(preds, golds, "strict"),
        proportional=span_scores(preds, golds, "proportional"),
        pair_only=pair_scores(preds, golds),
        per_emotion=per_emotion,
        weighted=weighted,
        gold_counts=gold_counts,
    )


def render_table(report: ScoreReport) -> str:
    """Plain-text metric table: Precision/Recall/F1-Score rows against
    Strict / Proportional / Weighted columns. The Weighted column aggregates
    the span-free pair scores per emotion, weighted by gold counts (the other
    weighted flavors are in the JSON report)."""
    weighted = report.weighted["pair_only"]
    columns = ("Strict", "Proportional", "Weighted")
    rows = (
        ("Precision", report.strict.precision, report.proportional.precision,
         weighted.precision),
        ("Recall", report.strict.recall, report.proportional.recall, weighted.recall),
        ("F1-Score", report.strict.f1, report.proportional.f1, weighted.f1),
    )
    header = f"{'Metric':<12}" + "".join(f"{c:>14}" for c in columns)
    lines = [header, "-" * len(header)]
    for name, *values in rows:
        lines.append(f"{name:<12}" + "".join(f"{v:>14.4f}" for v in values))
    return "\n".join(lines)
