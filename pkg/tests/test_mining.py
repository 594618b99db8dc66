"""Pair mining: support scoring, ranking determinism, pool construction."""

import numpy as np
import pytest

from vpkl.mining import (
    AlignmentParams,
    MinedPairs,
    SupportSet,
    align_score,
    keyword_score,
    mine_pairs,
    mining_accuracy,
    oracle_pairs,
    pairs_from_records,
    pairs_to_records,
    rank_corpus,
)
from vpkl.quantize import UnitSequence


def seq(units, uid=None, collapsed=True):
    return UnitSequence(units=np.asarray(units, dtype=np.int32),
                        collapsed=collapsed, utterance_id=uid)


def pairing(*uids):
    return {u: u.replace("utt", "img") for u in uids}


@pytest.fixture()
def support():
    return SupportSet(examples={
        "a": [seq([1, 2, 3]), seq([1, 2])],
        "b": [seq([7, 8]), seq([8, 9])],
    })


def test_align_score_is_normalised_by_query_length():
    q = seq([4, 5, 6])
    u = seq([0, 4, 5, 6, 1])
    assert align_score(q, u) == pytest.approx(1.0)
    p = AlignmentParams(match_score=2.0)
    assert align_score(q, u, p) == pytest.approx(2.0)


def test_align_score_rejects_bad_inputs():
    with pytest.raises(ValueError, match="collapsed"):
        align_score(seq([1], collapsed=False), seq([1]))
    with pytest.raises(ValueError, match="collapsed"):
        align_score(seq([1]), seq([1], collapsed=False))
    with pytest.raises(ValueError, match="empty query"):
        align_score(seq([]), seq([1]))


def test_keyword_score_is_mean_over_examples(support):
    utt = seq([1, 2, 3, 9])
    expected = (align_score(support.examples["a"][0], utt)
                + align_score(support.examples["a"][1], utt)) / 2
    assert keyword_score(support, "a", utt) == pytest.approx(expected)
    with pytest.raises(KeyError):
        keyword_score(support, "zzz", utt)


def test_support_set_validation():
    with pytest.raises(ValueError, match="empty"):
        SupportSet(examples={})
    with pytest.raises(ValueError, match="unequal"):
        SupportSet(examples={"a": [seq([1])], "b": [seq([1]), seq([2])]})
    with pytest.raises(ValueError, match="not collapsed"):
        SupportSet(examples={"a": [seq([1, 1], collapsed=False)]})
    s = SupportSet(examples={"b": [seq([1])], "a": [seq([2])]})
    assert s.k == 1
    assert s.keywords == ["a", "b"]


def test_rank_corpus_orders_by_score_then_id(support):
    corpus = {
        "utt-2": seq([1, 2, 3]),    # exact match for "a"
        "utt-1": seq([1, 2, 9]),    # partial
        "utt-0": seq([5, 6, 7]),    # unrelated
        "utt-3": seq([1, 2, 3]),    # ties utt-2, larger id
    }
    rankings = rank_corpus(support, corpus)
    ids = [uid for uid, _ in rankings["a"]]
    scores = [s for _, s in rankings["a"]]
    assert ids[:2] == ["utt-2", "utt-3"], "ties break by ascending utterance id"
    assert scores == sorted(scores, reverse=True)
    assert set(ids) == set(corpus)
    for uid, score in rankings["a"]:
        assert score == pytest.approx(keyword_score(support, "a", corpus[uid]))


def test_rank_corpus_job_count_does_not_change_output(support):
    rng = np.random.default_rng(5)
    corpus = {
        f"utt-{i:03d}": seq(rng.integers(0, 10, size=rng.integers(3, 12)))
        for i in range(40)
    }
    assert rank_corpus(support, corpus, jobs=1) == rank_corpus(support, corpus, jobs=4)


def test_rank_corpus_input_validation(support):
    with pytest.raises(ValueError, match="empty"):
        rank_corpus(support, {})
    with pytest.raises(ValueError, match="not collapsed"):
        rank_corpus(support, {"utt-0": seq([1, 1], collapsed=False)})
    tainted = SupportSet(examples={"a": [seq([1])]},
                         excluded_utterances={"utt-0"})
    with pytest.raises(ValueError, match="support source"):
        rank_corpus(tainted, {"utt-0": seq([1])})


def test_mine_pairs_top_n_and_pools():
    rankings = {"a": [("utt-2", 0.9), ("utt-0", 0.5), ("utt-1", 0.1)]}
    mined = mine_pairs(rankings, 2, pairing("utt-0", "utt-1", "utt-2"))
    kp = mined.per_keyword["a"]
    assert kp.positives == ["utt-2", "utt-0"]
    assert kp.scores == [0.9, 0.5]
    assert kp.image_positives == ["img-0", "img-2"]
    assert kp.negatives == ["utt-1"]
    assert kp.image_negatives == ["img-1"]
    assert mined.warnings == []
    assert set(kp.positives) | set(kp.negatives) == {"utt-0", "utt-1", "utt-2"}
    assert set(kp.positives) & set(kp.negatives) == set()


def test_mine_pairs_clamps_oversized_n_with_warning():
    rankings = {"a": [("utt-0", 0.5)]}
    mined = mine_pairs(rankings, 9, pairing("utt-0"))
    assert mined.per_keyword["a"].n == 1
    assert len(mined.warnings) == 1 and "clamped" in mined.warnings[0]


def test_mine_pairs_per_keyword_n():
    rankings = {
        "a": [("utt-0", 0.9), ("utt-1", 0.8)],
        "b": [("utt-1", 0.7), ("utt-0", 0.6)],
    }
    mined = mine_pairs(rankings, {"a": 1, "b": 2}, pairing("utt-0", "utt-1"))
    assert mined.per_keyword["a"].positives == ["utt-0"]
    assert mined.per_keyword["b"].positives == ["utt-1", "utt-0"]


def test_mine_pairs_rejects_bad_n_and_missing_images():
    rankings = {"a": [("utt-0", 0.5)]}
    with pytest.raises(ValueError, match="n must be >= 1"):
        mine_pairs(rankings, 0, pairing("utt-0"))
    with pytest.raises(ValueError, match="without a paired image"):
        mine_pairs(rankings, 1, {})


def test_oracle_pairs_match_labels_exactly():
    labels = {"utt-0": {"a"}, "utt-1": {"b"}, "utt-2": {"a", "b"}}
    mined = oracle_pairs(labels, ["a", "b", "c"], pairing("utt-0", "utt-1", "utt-2"))
    assert mined.per_keyword["a"].positives == ["utt-0", "utt-2"]
    assert mined.per_keyword["b"].positives == ["utt-1", "utt-2"]
    assert mined.per_keyword["c"].positives == []
    assert mined.per_keyword["c"].flags == ["no-occurrences"]
    assert mined.per_keyword["a"].negatives == ["utt-1"]
    assert mined.per_keyword["a"].image_negatives == ["img-1"]


def test_mining_accuracy_micro_average():
    labels = {"utt-0": {"a"}, "utt-1": set(), "utt-2": {"b"}, "utt-3": {"b"}}
    mined = oracle_pairs(labels, ["a"], pairing("utt-0", "utt-1", "utt-2", "utt-3"))
    mined.per_keyword["a"].positives = ["utt-0", "utt-1"]  # one hit, one miss
    mined.per_keyword["b"] = oracle_pairs(
        labels, ["b"], pairing("utt-0", "utt-1", "utt-2", "utt-3")
    ).per_keyword["b"]
    assert mining_accuracy(mined, labels) == pytest.approx(3 / 4)
    assert mining_accuracy(MinedPairs(per_keyword={}), labels) == 0.0


def test_records_round_trip():
    imgs = pairing("utt-0", "utt-1", "utt-2")
    rankings = {"a": [("utt-2", 0.9), ("utt-0", 0.5), ("utt-1", 0.1)],
                "b": [("utt-1", 0.7), ("utt-2", 0.2), ("utt-0", 0.1)]}
    mined = mine_pairs(rankings, 2, imgs)
    records = pairs_to_records(mined)
    assert [r["keyword"] for r in records] == ["a", "b"]
    rebuilt = pairs_from_records(records, imgs)
    for kw in mined.per_keyword:
        orig, back = mined.per_keyword[kw], rebuilt.per_keyword[kw]
        assert orig == back
