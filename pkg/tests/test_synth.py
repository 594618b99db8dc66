"""Synthetic corpus generation: planted structure, determinism, ground truth."""

import numpy as np
import pytest

from vpkl.synth import (
    SynthConfig,
    build_trials,
    derived_rng,
    generate,
    make_support_set,
    word_name,
)

SMALL = SynthConfig(
    vocabulary_size=12,
    n_keywords=4,
    train_utterances=30,
    dev_utterances=10,
    test_utterances=10,
    background_utterances=8,
    words_min=2,
    words_max=4,
    target_frames=64,
    seed=123,
)


@pytest.fixture(scope="module")
def corpus():
    return generate(SMALL)


def test_generation_is_deterministic():
    a = generate(SMALL)
    b = generate(SMALL)
    assert list(a.utterances) == list(b.utterances)
    for uid in a.utterances:
        ua, ub = a.utterances[uid], b.utterances[uid]
        assert ua.words == ub.words
        assert ua.spans == ub.spans
        assert ua.mel.frames.tobytes() == ub.mel.frames.tobytes()
        assert ua.image.tobytes() == ub.image.tobytes()
    c = generate(SynthConfig(**{**SMALL.__dict__, "seed": 124}))
    changed = any(
        a.utterances[u].mel.frames.tobytes() != c.utterances[u].mel.frames.tobytes()
        for u in a.utterances
    )
    assert changed, "a different seed must produce a different corpus"


def test_exactly_one_keyword_per_utterance(corpus):
    for utt in corpus.utterances.values():
        keywords = [w for w in utt.words if w < SMALL.n_keywords]
        fillers = [w for w in utt.words if w >= SMALL.n_keywords]
        assert len(keywords) == 1
        assert len(set(fillers)) == len(fillers), "fillers are sampled distinct"
        assert SMALL.words_min <= len(utt.words) <= SMALL.words_max


def test_spans_tile_valid_frames(corpus):
    for utt in corpus.utterances.values():
        pos = 0
        for w, (start, end) in zip(utt.words, utt.spans):
            assert start == pos
            assert end - start + 1 == len(corpus.word_templates[w])
            pos = end + 1
        assert pos == utt.mel.valid_frames
        assert utt.mel.num_frames == SMALL.target_frames


def test_valid_frames_are_templates_and_padding_is_marked(corpus):
    for utt in list(corpus.utterances.values())[:20]:
        for w, (start, end) in zip(utt.words, utt.spans):
            assert np.array_equal(utt.mel.frames[start : end + 1],
                                  corpus.word_templates[w])
        assert np.all(utt.mel.frames[utt.mel.valid_frames :] == utt.mel.pad_value)


def test_keyword_templates_and_signatures_are_scaled(corpus):
    cfg = corpus.config
    t_kw = np.concatenate([corpus.word_templates[w].ravel()
                           for w in range(cfg.n_keywords)])
    t_fill = np.concatenate([corpus.word_templates[w].ravel()
                             for w in range(cfg.n_keywords, cfg.vocabulary_size)])
    ratio = t_kw.std() / t_fill.std()
    assert ratio == pytest.approx(cfg.template_scale, rel=0.15)
    s_kw = np.linalg.norm(corpus.word_signatures[: cfg.n_keywords], axis=1).mean()
    s_fill = np.linalg.norm(corpus.word_signatures[cfg.n_keywords :], axis=1).mean()
    assert s_kw / s_fill == pytest.approx(cfg.signature_scale, rel=0.35)


def test_images_plant_one_patch_per_word(corpus):
    for utt in list(corpus.utterances.values())[:20]:
        for w in utt.words:
            hits = [
                p for p in range(utt.image.shape[0])
                if np.array_equal(utt.image[p], corpus.word_signatures[w])
            ]
            assert len(hits) >= 1, f"word {w} signature missing from image"


def test_queries_are_noisy_copies_of_keyword_signature(corpus):
    for kw, qs in corpus.queries.items():
        assert len(qs) == SMALL.queries_per_keyword
        for qid, grid in qs:
            assert grid.shape == (SMALL.query_patches, SMALL.patch_dim)
            dev = np.abs(grid - corpus.word_signatures[kw][None, :])
            assert dev.max() < 1.0, f"query {qid} strayed from its signature"


def test_support_set_shape_and_exclusion(corpus):
    segments = make_support_set(corpus, k=3)
    by_kw = {}
    for s in segments:
        by_kw.setdefault(s.keyword, []).append(s)
    assert sorted(by_kw) == corpus.keywords
    assert all(len(v) == 3 for v in by_kw.values())
    for s in segments:
        utt = corpus.utterances[s.utterance_id]
        assert s.utterance_id in corpus.support_excluded
        assert utt.split in ("train", "dev")
        assert np.array_equal(
            s.mel.frames, utt.mel.frames[s.start_frame : s.end_frame + 1]
        )
        assert s.mel.valid_frames == s.end_frame - s.start_frame + 1


def test_support_set_too_large_k_raises(corpus):
    with pytest.raises(ValueError, match="need K"):
        make_support_set(corpus, k=1000)


def test_build_trials_covers_every_query_utterance_pair(corpus):
    trials = build_trials(corpus, "dev")
    n_dev = len(corpus.split_ids("dev"))
    assert len(trials) == SMALL.n_keywords * SMALL.queries_per_keyword * n_dev
    for t in trials:
        utt = corpus.utterances[t.utterance_id]
        kw = int(t.keyword.lstrip("w"))
        assert t.keyword == word_name(kw)
        assert t.contains_keyword == (kw in utt.words)
        if t.contains_keyword:
            assert t.span == utt.spans[utt.words.index(kw)]
        else:
            assert t.span is None


def test_derived_rng_streams_are_stable_and_distinct():
    a = derived_rng(7, "queries").normal(size=4)
    b = derived_rng(7, "queries").normal(size=4)
    c = derived_rng(7, "support").normal(size=4)
    d = derived_rng(8, "queries").normal(size=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_config_validation():
    with pytest.raises(ValueError, match="filler"):
        SynthConfig(vocabulary_size=6, n_keywords=4, words_max=4).validate()
    with pytest.raises(ValueError, match="target_frames"):
        SynthConfig(words_max=8, frames_per_word_max=16, target_frames=100).validate()
    with pytest.raises(ValueError, match="grid"):
        SynthConfig(words_max=5, patch_grid=2).validate()
    with pytest.raises(ValueError):
        SynthConfig(unit_substitution_rate=1.5).validate()
    with pytest.raises(ValueError):
        SynthConfig(template_scale=0.0).validate()
    with pytest.raises(ValueError):
        SynthConfig(signature_scale=-1.0).validate()
    SynthConfig().validate()  # defaults are self-consistent
