"""Detection and localisation scoring for visually prompted keyword search.

A trial asks one image query about one utterance. Detection succeeds when the
similarity score clears a threshold tuned on the dev split; localisation
additionally requires the predicted frame to land inside the ground-truth
span. Precision/recall/F1 are micro-averaged over pooled counts; accuracy is
the macro average over keywords of the positive-trial success rate. All four
are reported as percentages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence


@dataclass(frozen=True)
class Trial:
    keyword: str
    query_id: str
    utterance_id: str
    contains_keyword: bool
    span: tuple[int, int] | None = None

    def __post_init__(self):
        if self.contains_keyword != (self.span is not None):
            raise ValueError("span must be present exactly when the keyword occurs")
        if self.span is not None:
            start, end = self.span
            if not 0 <= start <= end:
                raise ValueError(f"bad span {self.span}")

    def to_record(self) -> dict:
        return {
            "keyword": self.keyword,
            "query_id": self.query_id,
            "utterance_id": self.utterance_id,
            "contains_keyword": self.contains_keyword,
            "span": list(self.span) if self.span else None,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Trial":
        span = rec.get("span")
        return cls(
            keyword=rec["keyword"],
            query_id=rec["query_id"],
            utterance_id=rec["utterance_id"],
            contains_keyword=bool(rec["contains_keyword"]),
            span=tuple(span) if span is not None else None,
        )


@dataclass(frozen=True)
class Threshold:
    alpha: float

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ValueError("threshold must be finite")


def _f1_percent(tp: int, fp: int, fn: int) -> float:
    if tp == 0:
        return 0.0
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    return 100.0 * 2 * p * r / (p + r)


def tune_threshold(dev_scores: Sequence[tuple[float, bool]]) -> Threshold:
    """Pick the midpoint between consecutive sorted dev scores that maximises
    detection F1; ties go to the smallest candidate."""
    if not dev_scores:
        raise ValueError("empty dev set")
    labels = {bool(lab) for _, lab in dev_scores}
    if len(labels) != 2:
        raise ValueError("threshold tuning needs both positive and negative dev trials")
    values = sorted({float(s) for s, _ in dev_scores})
    if len(values) < 2:
        raise ValueError("all dev scores are identical; no separating threshold exists")
    candidates = [(a + b) / 2.0 for a, b in zip(values, values[1:])]

    best_alpha = None
    best_f1 = -1.0
    for alpha in candidates:
        tp = sum(1 for s, lab in dev_scores if lab and s > alpha)
        fp = sum(1 for s, lab in dev_scores if not lab and s > alpha)
        fn = sum(1 for s, lab in dev_scores if lab and s <= alpha)
        f1 = _f1_percent(tp, fp, fn)
        if f1 > best_f1:
            best_f1 = f1
            best_alpha = alpha
    return Threshold(alpha=best_alpha)


def detect(s: float, threshold: Threshold | float) -> bool:
    """Strictly above the threshold counts as detected; equality does not."""
    alpha = threshold.alpha if isinstance(threshold, Threshold) else float(threshold)
    return s > alpha


@dataclass(frozen=True)
class TrialOutcome:
    trial: Trial
    detected: bool
    predicted_frame: int | None
    detection: str  # "TP" | "FP" | "FN" | "TN"
    loc_tp: int
    loc_fp: int
    loc_fn: int

    @property
    def localisation(self) -> str:
        parts = (["TP"] * self.loc_tp) + (["FP"] * self.loc_fp) + (["FN"] * self.loc_fn)
        return "+".join(parts) if parts else "TN"


def score_trial(trial: Trial, detected: bool, predicted_frame: int | None) -> TrialOutcome:
    """Classify one trial for detection and localisation.

    A detection hit with the frame outside the span is both a spurious
    localisation (FP) and a missed one (FN).
    """
    if detected != (predicted_frame is not None):
        raise ValueError("predicted_frame must be given exactly when detected")
    if trial.contains_keyword:
        if detected:
            start, end = trial.span
            if start <= predicted_frame <= end:
                det, loc = "TP", (1, 0, 0)
            else:
                det, loc = "TP", (0, 1, 1)
        else:
            det, loc = "FN", (0, 0, 1)
    else:
        if detected:
            det, loc = "FP", (0, 1, 0)
        else:
            det, loc = "TN", (0, 0, 0)
    return TrialOutcome(trial=trial, detected=detected, predicted_frame=predicted_frame,
                        detection=det, loc_tp=loc[0], loc_fp=loc[1], loc_fn=loc[2])


def prf_percent(tp: int, fp: int, fn: int) -> tuple[float, float, float, list[str]]:
    """Micro precision/recall/F1 in percent; zero denominators give 0 plus a flag."""
    flags = []
    if tp + fp > 0:
        precision = 100.0 * tp / (tp + fp)
    else:
        precision, flags = 0.0, flags + ["precision_zero_denominator"]
    if tp + fn > 0:
        recall = 100.0 * tp / (tp + fn)
    else:
        recall, flags = 0.0, flags + ["recall_zero_denominator"]
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1, flags = 0.0, flags + ["f1_zero_denominator"]
    return precision, recall, f1, flags


@dataclass
class MetricsReport:
    detection: dict
    localisation: dict
    per_keyword: dict
    counts: dict
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "detection": self.detection,
            "localisation": self.localisation,
            "per_keyword": self.per_keyword,
            "counts": self.counts,
            "flags": self.flags,
        }


def _pooled_counts(outcomes: Iterable[TrialOutcome]) -> dict:
    c = {"det_tp": 0, "det_fp": 0, "det_fn": 0, "det_tn": 0,
         "loc_tp": 0, "loc_fp": 0, "loc_fn": 0}
    for o in outcomes:
        c["det_" + o.detection.lower()] += 1
        c["loc_tp"] += o.loc_tp
        c["loc_fp"] += o.loc_fp
        c["loc_fn"] += o.loc_fn
    return c


def _success_rates(outcomes: Sequence[TrialOutcome]) -> tuple[float | None, float | None]:
    """Detection / localisation success over this pool's positive trials."""
    positives = [o for o in outcomes if o.trial.contains_keyword]
    if not positives:
        return None, None
    det = sum(1 for o in positives if o.detected) / len(positives)
    loc = sum(o.loc_tp for o in positives) / len(positives)
    return 100.0 * det, 100.0 * loc


def compute_metrics(outcomes: Sequence[TrialOutcome]) -> MetricsReport:
    """Micro P/R/F1 over pooled counts; accuracy macro-averaged over keywords."""
    if not outcomes:
        raise ValueError("no outcomes to score")
    counts = _pooled_counts(outcomes)
    flags: list[str] = []

    det_p, det_r, det_f1, det_flags = prf_percent(
        counts["det_tp"], counts["det_fp"], counts["det_fn"])
    flags += ["detection_" + f for f in det_flags]
    loc_p, loc_r, loc_f1, loc_flags = prf_percent(
        counts["loc_tp"], counts["loc_fp"], counts["loc_fn"])
    flags += ["localisation_" + f for f in loc_flags]

    by_keyword: dict[str, list[TrialOutcome]] = {}
    for o in outcomes:
        by_keyword.setdefault(o.trial.keyword, []).append(o)

    per_keyword = {}
    det_rates, loc_rates = [], []
    for kw in sorted(by_keyword):
        group = by_keyword[kw]
        kc = _pooled_counts(group)
        kp, kr, kf1, _ = prf_percent(kc["det_tp"], kc["det_fp"], kc["det_fn"])
        lp, lr, lf1, _ = prf_percent(kc["loc_tp"], kc["loc_fp"], kc["loc_fn"])
        det_rate, loc_rate = _success_rates(group)
        per_keyword[kw] = {
            "detection": {"precision": kp, "recall": kr, "f1": kf1,
                          "accuracy": det_rate if det_rate is not None else 0.0},
            "localisation": {"precision": lp, "recall": lr, "f1": lf1,
                             "accuracy": loc_rate if loc_rate is not None else 0.0},
            "n_positive_trials": sum(1 for o in group if o.trial.contains_keyword),
        }
        if det_rate is not None:
            det_rates.append(det_rate)
            loc_rates.append(loc_rate)

    if det_rates:
        det_acc = sum(det_rates) / len(det_rates)
        loc_acc = sum(loc_rates) / len(loc_rates)
    else:
        det_acc = loc_acc = 0.0
        flags.append("accuracy_no_positive_trials")

    return MetricsReport(
        detection={"precision": det_p, "recall": det_r, "f1": det_f1, "accuracy": det_acc},
        localisation={"precision": loc_p, "recall": loc_r, "f1": loc_f1, "accuracy": loc_acc},
        per_keyword=per_keyword,
        counts=counts,
        flags=flags,
    )


_METRIC_KEYS = ("precision", "recall", "f1", "accuracy")


def aggregate_runs(reports: Sequence[MetricsReport]) -> dict:
    """Mean and sample (n-1) standard deviation per metric over per-seed runs.

    With a single run the std is reported as absent (None).
    """
    if not reports:
        raise ValueError("nothing to aggregate")
    n = len(reports)

    def stats(values: list[float]) -> dict:
        mean = sum(values) / n
        if n < 2:
            return {"mean": mean, "std": None}
        var = sum((v - mean) ** 2 for v in values) / (n - 1)
        return {"mean": mean, "std": math.sqrt(var)}

    out: dict = {"n_runs": n}
    for section in ("detection", "localisation"):
        out[section] = {
            key: stats([getattr(r, section)[key] for r in reports])
            for key in _METRIC_KEYS
        }
    return out


def _cell(entry) -> str:
    if isinstance(entry, dict):
        if entry.get("std") is None:
            return f"{entry['mean']:.2f}"
        return f"{entry['mean']:.2f} ± {entry['std']:.2f}"
    return f"{entry:.2f}"


def render_table(report: dict, title: str = "model") -> str:
    """Two-block text table: detection then localisation, four metrics each."""
    header = (f"{'':<12}" + "".join(f"{h:>18}" for h in _METRIC_KEYS))
    lines = []
    for section in ("detection", "localisation"):
        lines.append(section.capitalize())
        lines.append(header)
        row = f"{title:<12}" + "".join(
            f"{_cell(report[section][k]):>18}" for k in _METRIC_KEYS)
        lines.append(row)
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
