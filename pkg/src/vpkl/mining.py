"""Few-shot pair mining: support-set queries scored against unlabelled utterances
by noisy string matching over discrete units, ranked per keyword, top-n taken as
positives and propagated to the paired images. An oracle mode builds the same
structures from ground-truth labels for topline runs.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from vpkl.align import semiglobal_score
from vpkl.quantize import UnitSequence


@dataclass(frozen=True)
class AlignmentParams:
    match_score: float = 1.0
    mismatch_penalty: float = -1.0
    gap_penalty: float = -1.0

    def __post_init__(self):
        if self.match_score <= 0:
            raise ValueError("match_score must be positive")
        if self.mismatch_penalty > 0 or self.gap_penalty > 0:
            raise ValueError("mismatch and gap penalties must be <= 0")


@dataclass
class SupportSet:
    """K collapsed unit-sequence examples per keyword, plus their source utterances."""

    examples: dict[str, list[UnitSequence]]
    excluded_utterances: set[str] = field(default_factory=set)

    def __post_init__(self):
        sizes = {len(v) for v in self.examples.values()}
        if not self.examples or sizes == {0}:
            raise ValueError("support set is empty")
        if len(sizes) != 1:
            raise ValueError(f"unequal example counts across keywords: {sorted(sizes)}")
        for kw, seqs in self.examples.items():
            for s in seqs:
                if not s.collapsed:
                    raise ValueError(f"support example for {kw!r} is not collapsed")

    @property
    def k(self) -> int:
        return len(next(iter(self.examples.values())))

    @property
    def keywords(self) -> list[str]:
        return sorted(self.examples)


@dataclass
class KeywordPairs:
    keyword: str
    n: int
    positives: list[str]
    scores: list[float]
    image_positives: list[str]
    negatives: list[str]
    image_negatives: list[str]
    flags: list[str] = field(default_factory=list)


@dataclass
class MinedPairs:
    per_keyword: dict[str, KeywordPairs]
    warnings: list[str] = field(default_factory=list)


def align_score(query: UnitSequence, utt: UnitSequence,
                p: AlignmentParams = AlignmentParams()) -> float:
    """Semi-global alignment score normalised by query length.

    The query is consumed fully; utterance flanks are gap-free, so a query
    embedded verbatim anywhere in the utterance scores exactly match_score.
    """
    if not query.collapsed or not utt.collapsed:
        raise ValueError("align_score expects collapsed unit sequences")
    if len(query) == 0:
        raise ValueError("empty query")
    raw = semiglobal_score(query.units, utt.units,
                           p.match_score, p.mismatch_penalty, p.gap_penalty)
    return float(raw) / len(query)


def keyword_score(support: SupportSet, keyword: str, utt: UnitSequence,
                  p: AlignmentParams = AlignmentParams()) -> float:
    """Mean normalised alignment score over the keyword's K support examples."""
    if keyword not in support.examples:
        raise KeyError(f"unknown keyword {keyword!r}")
    examples = support.examples[keyword]
    return sum(align_score(q, utt, p) for q in examples) / len(examples)


def _score_keyword(args) -> tuple[str, list[tuple[str, float]]]:
    keyword, examples, corpus_items, p = args
    scored = []
    for uid, units in corpus_items:
        score = sum(
            semiglobal_score(q, units, p.match_score, p.mismatch_penalty, p.gap_penalty) / len(q)
            for q in examples
        ) / len(examples)
        scored.append((uid, float(score)))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return keyword, scored


def rank_corpus(support: SupportSet, corpus: dict[str, UnitSequence],
                p: AlignmentParams = AlignmentParams(),
                jobs: int = 1) -> dict[str, list[tuple[str, float]]]:
    """Full descending ranking per keyword; ties broken by ascending utterance id.

    Work is parallel over keywords; results are reduced in sorted keyword
    order, so the output is identical for any job count.
    """
    if not corpus:
        raise ValueError("empty mining corpus")
    overlap = support.excluded_utterances & corpus.keys()
    if overlap:
        raise ValueError(f"support source utterances present in corpus: {sorted(overlap)[:5]}")
    corpus_items = [(uid, corpus[uid].units) for uid in sorted(corpus)]
    for uid, _ in corpus_items:
        if not corpus[uid].collapsed:
            raise ValueError(f"corpus sequence {uid} is not collapsed")
    tasks = [
        (kw, [q.units for q in support.examples[kw]], corpus_items, p)
        for kw in support.keywords
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_score_keyword, tasks))
    else:
        results = [_score_keyword(t) for t in tasks]
    return dict(results)


def _pools(positives: list[str], scores: list[float], keyword: str, n: int,
           image_pairing: dict[str, str], flags: list[str]) -> KeywordPairs:
    all_ids = sorted(image_pairing)
    pos_set = set(positives)
    image_positives = sorted({image_pairing[u] for u in positives})
    image_pos_set = set(image_positives)
    return KeywordPairs(
        keyword=keyword, n=n, positives=positives, scores=scores,
        image_positives=image_positives,
        negatives=[u for u in all_ids if u not in pos_set],
        image_negatives=sorted(
            {image_pairing[u] for u in all_ids} - image_pos_set
        ),
        flags=flags,
    )


def mine_pairs(rankings: dict[str, list[tuple[str, float]]],
               n: int | dict[str, int],
               image_pairing: dict[str, str]) -> MinedPairs:
    """Take the top-n ranked utterances per keyword as positives and label their
    images; everything else forms the negative pools. n above the corpus size
    is clamped with a warning record."""
    per_keyword: dict[str, KeywordPairs] = {}
    warnings: list[str] = []
    for kw in sorted(rankings):
        ranking = rankings[kw]
        missing = [uid for uid, _ in ranking if uid not in image_pairing]
        if missing:
            raise ValueError(f"utterances without a paired image: {missing[:5]}")
        kw_n = n[kw] if isinstance(n, dict) else n
        if kw_n < 1:
            raise ValueError(f"n must be >= 1 for keyword {kw!r}, got {kw_n}")
        if kw_n > len(ranking):
            warnings.append(
                f"keyword {kw}: n={kw_n} clamped to corpus size {len(ranking)}"
            )
            kw_n = len(ranking)
        top = ranking[:kw_n]
        per_keyword[kw] = _pools(
            positives=[uid for uid, _ in top],
            scores=[s for _, s in top],
            keyword=kw, n=kw_n, image_pairing=image_pairing, flags=[],
        )
    return MinedPairs(per_keyword=per_keyword, warnings=warnings)


def oracle_pairs(labels: dict[str, set[str]], keywords: list[str],
                 image_pairing: dict[str, str]) -> MinedPairs:
    """Ground-truth pools: positives are exactly the utterances containing the keyword."""
    per_keyword: dict[str, KeywordPairs] = {}
    for kw in sorted(keywords):
        positives = sorted(u for u in image_pairing if kw in labels.get(u, set()))
        flags = [] if positives else ["no-occurrences"]
        per_keyword[kw] = _pools(
            positives=positives, scores=[], keyword=kw,
            n=len(positives), image_pairing=image_pairing, flags=flags,
        )
    return MinedPairs(per_keyword=per_keyword)


def mining_accuracy(mined: MinedPairs, labels: dict[str, set[str]]) -> float:
    """Fraction of mined positives that truly contain their keyword, micro-averaged."""
    correct = total = 0
    for kw, pairs in mined.per_keyword.items():
        total += len(pairs.positives)
        correct += sum(1 for u in pairs.positives if kw in labels.get(u, set()))
    return correct / total if total else 0.0


def pairs_to_records(mined: MinedPairs) -> list[dict]:
    """One JSON document per keyword, per the mined-pairs interface."""
    return [
        {
            "keyword": kp.keyword,
            "n": kp.n,
            "positives": kp.positives,
            "scores": kp.scores,
            "image_positives": kp.image_positives,
            "flags": kp.flags,
        }
        for kw, kp in sorted(mined.per_keyword.items())
    ]


def pairs_from_records(records: list[dict], image_pairing: dict[str, str]) -> MinedPairs:
    """Rebuild full pools (negatives included) from serialised records and the manifest."""
    per_keyword = {}
    for rec in records:
        per_keyword[rec["keyword"]] = _pools(
            positives=list(rec["positives"]),
            scores=[float(s) for s in rec.get("scores", [])],
            keyword=rec["keyword"], n=int(rec["n"]),
            image_pairing=image_pairing, flags=list(rec.get("flags", [])),
        )
    return MinedPairs(per_keyword=per_keyword)
