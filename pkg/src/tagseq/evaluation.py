"""Precision/recall/F1 (plain and rank-weighted), unseen-tag and error accounting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

from .corpus import as_tag, tag_string
from .errors import ContractError
from .inference import classify_tags


def rank_weights(n: int) -> list:
    """``1 / log2(i + 1)`` for ranks ``i = 1..n``."""
    return [1.0 / math.log2(i + 1) for i in range(1, n + 1)]


def f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def prf(predicted, gold) -> dict:
    """Plain and rank-weighted scores of one ranked prediction list.

    Weighted precision discounts the prediction at rank ``i`` by
    ``1/log2(i+1)``; weighted recall is plain recall. An empty prediction
    list scores zero precision.
    """
    pred = list(dict.fromkeys(as_tag(t) for t in predicted))
    gold = {as_tag(t) for t in gold}
    if not gold:
        raise ContractError("gold tag set is empty")
    hit_flags = [t in gold for t in pred]
    hits = sum(hit_flags)
    w = rank_weights(len(pred))
    p = hits / len(pred) if pred else 0.0
    r = hits / len(gold)
    pw = sum(wi for wi, h in zip(w, hit_flags) if h) / sum(w) if pred else 0.0
    return {"precision": p, "recall": r, "f1": f1(p, r), "w_precision": pw, "w_recall": r, "w_f1": f1(pw, r)}


@dataclass
class DocRecord:
    doc_id: str
    n_pred: int
    n_gold: int
    hits: int
    hit_weight: float
    total_weight: float
    seen_correct: int = 0
    seen_incorrect: int = 0
    unseen_correct: int = 0
    unseen_uncorroborated: int = 0


@dataclass
class ErrorAccount:
    meaningless: int
    outputs: int

    @property
    def rate(self) -> float:
        return self.meaningless / self.outputs if self.outputs else 0.0

    @property
    def percent(self) -> float:
        return 100.0 * self.rate


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    w_precision: float
    w_recall: float
    w_f1: float
    n_docs: int
    n_excluded: int
    unseen_correct: int
    classes: dict
    meaningless: int
    outputs: int
    averaging: str = "micro"
    records: list = field(default_factory=list, repr=False)

    @property
    def error_rate(self) -> float:
        return self.meaningless / self.outputs if self.outputs else 0.0

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "records"}
        out["error_rate"] = self.error_rate
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = [
            ("", "P", "R", "F1"),
            ("plain", *(f"{x:.4f}" for x in (self.precision, self.recall, self.f1))),
            ("weighted", *(f"{x:.4f}" for x in (self.w_precision, self.w_recall, self.w_f1))),
        ]
        width = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(c.rjust(w) for c, w in zip(r, width)) for r in rows]
        lines.append(f"documents {self.n_docs} (excluded, empty gold: {self.n_excluded})")
        lines.append(f"new (unseen-correct) {self.unseen_correct}")
        lines.append(f"meaningless {self.meaningless} / outputs {self.outputs} = {100 * self.error_rate:.2f}%")
        return "\n".join(lines)

    def write_records(self, path) -> None:
        names = [f for f in DocRecord.__dataclass_fields__]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for rec in self.records:
                writer.writerow([getattr(rec, n) for n in names])


def _as_mapping(predictions) -> dict:
    if isinstance(predictions, dict):
        return predictions
    return {str(r["id"]): r["tags"] for r in predictions}


def evaluate_corpus(predictions, gold_docs, inventory, macro: bool = False, nbest=None) -> EvalReport:
    """Score ranked predictions against gold documents.

    ``predictions`` maps document id to a ranked tag list (or is a list of
    ``{"id", "tags"}`` records). Counts are pooled across documents unless
    ``macro`` is set. ``nbest`` optionally maps ids to the emitted hypotheses
    (``(tags, malformed)`` pairs) for error accounting; without it the
    final predictions are audited instead.
    """
    predictions = _as_mapping(predictions)
    gold = {str(d.doc_id): d for d in gold_docs}
    missing = sorted(set(gold) - set(predictions))
    extra = sorted(set(predictions) - set(gold))
    if missing or extra:
        raise ContractError(f"document ids do not align; missing predictions: {missing}; unknown ids: {extra}")
    inventory = {as_tag(t) for t in inventory}
    records, excluded = [], 0
    for doc_id in sorted(gold):
        ref = {as_tag(t) for t in gold[doc_id].tags}
        if not ref:
            excluded += 1
            continue
        pred = list(dict.fromkeys(as_tag(t) for t in predictions[doc_id]))
        flags = [t in ref for t in pred]
        w = rank_weights(len(pred))
        records.append(
            DocRecord(
                doc_id,
                len(pred),
                len(ref),
                sum(flags),
                sum(wi for wi, h in zip(w, flags) if h),
                sum(w),
                **classify_tags(pred, inventory, ref),
            )
        )
    if macro:
        scores = [_doc_scores(r) for r in records]
        avg = {k: sum(s[k] for s in scores) / len(scores) if scores else 0.0 for k in ("precision", "recall", "w_precision")}
        p, r, pw = avg["precision"], avg["recall"], avg["w_precision"]
    else:
        n_pred = sum(x.n_pred for x in records)
        p = sum(x.hits for x in records) / n_pred if n_pred else 0.0
        r = sum(x.hits for x in records) / sum(x.n_gold for x in records) if records else 0.0
        total_w = sum(x.total_weight for x in records)
        pw = sum(x.hit_weight for x in records) / total_w if total_w else 0.0
    classes = {k: sum(getattr(x, k) for x in records) for k in ("seen_correct", "seen_incorrect", "unseen_correct", "unseen_uncorroborated")}
    if nbest is not None:
        acct = error_accounting([(nbest[i], gold[i].tags) for i in sorted(gold) if i in nbest], inventory)
    else:
        acct = error_accounting([([(predictions[i], 0)], gold[i].tags) for i in sorted(gold)], inventory)
    return EvalReport(
        p, r, f1(p, r), pw, r, f1(pw, r),
        len(records), excluded, classes["unseen_correct"], classes,
        acct.meaningless, acct.outputs, "macro" if macro else "micro", records,
    )


def _doc_scores(rec: DocRecord) -> dict:
    p = rec.hits / rec.n_pred if rec.n_pred else 0.0
    pw = rec.hit_weight / rec.total_weight if rec.total_weight else 0.0
    return {"precision": p, "recall": rec.hits / rec.n_gold, "w_precision": pw}


def error_accounting(emissions, inventory) -> ErrorAccount:
    """Count meaningless outputs across emitted hypotheses.

    ``emissions`` holds one ``(hypotheses, reference tags)`` pair per
    document, each hypothesis a ``(tags, malformed_segments)`` pair with tags
    kept in emission order (repeats included). Every tag and every malformed
    segment is one output. Meaningless outputs are the malformed segments
    plus tags that are neither in the inventory nor in the reference.
    """
    inventory = {as_tag(t) for t in inventory}
    meaningless = outputs = 0
    for hypotheses, reference in emissions:
        ref = {as_tag(t) for t in reference}
        for tags, malformed in hypotheses:
            outputs += len(tags) + malformed
            meaningless += malformed
            meaningless += sum(1 for t in map(as_tag, tags) if t not in inventory and t not in ref)
    return ErrorAccount(meaningless, outputs)


def nbest_from_records(records) -> dict:
    """Per-id ``(tags, malformed)`` hypotheses from generation JSON records.

    Malformed segments are reported per document, so they are attached to
    the first hypothesis.
    """
    out = {}
    for rec in records:
        if "nbest" not in rec:
            continue
        hyps = [[as_tag(t) for t in h["tags"]] for h in rec["nbest"]]
        hyps = [(tags, 0) for tags in hyps]
        if hyps:
            hyps[0] = (hyps[0][0], int(rec.get("malformed", 0)))
        out[str(rec["id"])] = hyps
    return out


__all__ = ["prf", "evaluate_corpus", "error_accounting", "EvalReport", "DocRecord", "ErrorAccount", "tag_string"]
