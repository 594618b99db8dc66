"""Synthetic paired speech-image corpora with planted keywords and ground truth.

Each vocabulary word gets a fixed random mel template and a signature image
patch. Utterances are concatenations of word templates (plus optional noise)
whose spans tile the valid frames; the paired image grid plants one signature
patch per word present. A held-out "background" split feeds codebook training,
and per-keyword query grids stand in for cropped image queries.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from vpkl.evaluate import Trial
from vpkl.frontend import LOG_ENERGY_FLOOR, MelSpectrogram
from vpkl.quantize import UnitSequence

PAD_VALUE = float(np.log(LOG_ENERGY_FLOOR))


def word_name(w: int) -> str:
    """Stable string name for a vocabulary word id (used in manifests and pools)."""
    return f"w{w:03d}"


@dataclass(frozen=True)
class SynthConfig:
    vocabulary_size: int = 20
    n_keywords: int = 8
    train_utterances: int = 200
    dev_utterances: int = 40
    test_utterances: int = 40
    background_utterances: int = 60
    words_min: int = 3
    words_max: int = 6
    frames_per_word_min: int = 8
    frames_per_word_max: int = 16
    n_mels: int = 40
    target_frames: int = 96
    mel_noise: float = 0.0
    unit_substitution_rate: float = 0.0
    patch_grid: int = 5
    patch_dim: int = 16
    signature_scale: float = 2.5
    template_scale: float = 1.5
    queries_per_keyword: int = 3
    query_patches: int = 4
    seed: int = 0

    def validate(self) -> None:
        if not 1 <= self.n_keywords <= self.vocabulary_size:
            raise ValueError("keywords must be a non-empty subset of the vocabulary")
        if self.words_max - 1 > self.vocabulary_size - self.n_keywords:
            raise ValueError(
                "not enough filler words: each utterance carries one keyword "
                "plus up to words_max-1 distinct fillers"
            )
        if not 1 <= self.words_min <= self.words_max:
            raise ValueError("need 1 <= words_min <= words_max")
        if self.frames_per_word_min < 1 or self.frames_per_word_max < self.frames_per_word_min:
            raise ValueError("invalid frames-per-word range")
        if self.words_max * self.frames_per_word_max > self.target_frames:
            raise ValueError(
                f"longest utterance ({self.words_max * self.frames_per_word_max} frames) "
                f"exceeds target_frames {self.target_frames}"
            )
        if not 0.0 <= self.unit_substitution_rate <= 1.0:
            raise ValueError("unit_substitution_rate must be in [0, 1]")
        if self.mel_noise < 0.0:
            raise ValueError("mel_noise must be non-negative")
        if self.signature_scale <= 0.0:
            raise ValueError("signature_scale must be positive")
        if self.template_scale <= 0.0:
            raise ValueError("template_scale must be positive")
        if self.words_max > self.patch_grid**2:
            raise ValueError("image grid too small to plant one patch per word")
        if min(self.train_utterances, self.dev_utterances, self.test_utterances,
               self.background_utterances) < 1:
            raise ValueError("all split sizes must be >= 1")


@dataclass
class Utterance:
    utterance_id: str
    image_id: str
    split: str
    words: list[int]
    spans: list[tuple[int, int]]  # inclusive (start_frame, end_frame) per word
    mel: MelSpectrogram
    image: np.ndarray  # (patches, patch_dim)


@dataclass
class SupportSegment:
    keyword: int
    utterance_id: str
    start_frame: int
    end_frame: int
    mel: MelSpectrogram


@dataclass
class SynthCorpus:
    config: SynthConfig
    keywords: list[int]
    word_lengths: np.ndarray
    word_templates: list[np.ndarray]
    word_signatures: np.ndarray  # (vocab, patch_dim)
    utterances: dict[str, Utterance]
    queries: dict[int, list[tuple[str, np.ndarray]]]  # keyword -> [(query_id, grid)]
    support_excluded: set[str] = field(default_factory=set)

    def split_ids(self, *splits: str) -> list[str]:
        return sorted(u for u, rec in self.utterances.items() if rec.split in splits)

    def labels(self) -> dict[str, set[int]]:
        return {uid: set(rec.words) for uid, rec in self.utterances.items()}


def derived_rng(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.sha256(name.encode()).digest()[:4]
    return np.random.default_rng([seed, int.from_bytes(digest, "little")])


def generate(cfg: SynthConfig) -> SynthCorpus:
    """Build the full corpus deterministically from the config seed."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    lengths = rng.integers(cfg.frames_per_word_min, cfg.frames_per_word_max + 1,
                           size=cfg.vocabulary_size)
    templates = [rng.normal(0.0, 1.0, size=(lengths[w], cfg.n_mels))
                 for w in range(cfg.vocabulary_size)]
    # Keyword mel templates can be made louder than fillers (content words
    # carry stress); kept mild by default since the audio branch squashes
    # large inputs through tanh.
    for w in range(cfg.n_keywords):
        templates[w] *= cfg.template_scale
    # Keyword signatures get a larger norm than filler signatures and background
    # patches (query objects are salient crops), so the keyword correspondence
    # dominates matchmap maxima instead of incidental shared fillers.
    signatures = rng.normal(0.0, 1.0, size=(cfg.vocabulary_size, cfg.patch_dim))
    signatures[: cfg.n_keywords] *= cfg.signature_scale
    keywords = list(range(cfg.n_keywords))

    utterances: dict[str, Utterance] = {}
    counter = 0
    split_sizes = [
        ("train", cfg.train_utterances),
        ("dev", cfg.dev_utterances),
        ("test", cfg.test_utterances),
        ("background", cfg.background_utterances),
    ]
    n_patches = cfg.patch_grid**2
    for split, count in split_sizes:
        srng = derived_rng(cfg.seed, split)
        for _ in range(count):
            uid = f"utt-{counter:05d}"
            img_id = f"img-{counter:05d}"
            # Exactly one keyword per utterance, padded with distinct fillers.
            # Keyword correspondences then never collide across contrastive
            # negatives, which keeps the planted audio-image signal clean.
            n_words = int(srng.integers(cfg.words_min, cfg.words_max + 1))
            kw = int(srng.integers(cfg.n_keywords))
            fillers = srng.choice(
                np.arange(cfg.n_keywords, cfg.vocabulary_size),
                size=n_words - 1, replace=False,
            )
            words = [kw] + [int(w) for w in fillers]
            words = [words[i] for i in srng.permutation(n_words)]
            blocks, spans, pos = [], [], 0
            for w in words:
                block = templates[w].copy()
                if cfg.mel_noise > 0.0:
                    block += srng.normal(0.0, cfg.mel_noise, size=block.shape)
                blocks.append(block)
                spans.append((pos, pos + block.shape[0] - 1))
                pos += block.shape[0]
            frames = np.full((cfg.target_frames, cfg.n_mels), PAD_VALUE)
            frames[:pos] = np.concatenate(blocks, axis=0)
            mel = MelSpectrogram(frames=frames, valid_frames=pos, pad_value=PAD_VALUE)

            grid = srng.normal(0.0, 1.0, size=(n_patches, cfg.patch_dim))
            slots = srng.choice(n_patches, size=n_words, replace=False)
            for slot, w in zip(slots, words):
                grid[slot] = signatures[w]
            utterances[uid] = Utterance(
                utterance_id=uid, image_id=img_id, split=split,
                words=words, spans=spans, mel=mel, image=grid,
            )
            counter += 1

    qrng = derived_rng(cfg.seed, "queries")
    queries: dict[int, list[tuple[str, np.ndarray]]] = {}
    for kw in keywords:
        queries[kw] = []
        for qi in range(cfg.queries_per_keyword):
            grid = signatures[kw][None, :] + qrng.normal(
                0.0, 0.1, size=(cfg.query_patches, cfg.patch_dim)
            )
            queries[kw].append((f"query-{kw:03d}-{qi:02d}", grid))

    return SynthCorpus(
        config=cfg, keywords=keywords, word_lengths=lengths,
        word_templates=templates, word_signatures=signatures,
        utterances=utterances, queries=queries,
    )


def make_support_set(corpus: SynthCorpus, k: int,
                     seed: int | None = None) -> list[SupportSegment]:
    """Cut K isolated word segments per keyword from train+dev ground-truth spans.

    Source utterances are recorded in ``corpus.support_excluded`` and must be
    dropped from the mining pool.
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    rng = derived_rng(corpus.config.seed if seed is None else seed, "support")
    segments: list[SupportSegment] = []
    pool_ids = corpus.split_ids("train", "dev")
    for kw in corpus.keywords:
        occurrences = [
            (uid, corpus.utterances[uid].spans[corpus.utterances[uid].words.index(kw)])
            for uid in pool_ids
            if kw in corpus.utterances[uid].words
        ]
        if len(occurrences) < k:
            raise ValueError(
                f"keyword {kw} occurs {len(occurrences)} times in train+dev; need K={k}"
            )
        picks = rng.choice(len(occurrences), size=k, replace=False)
        for p in sorted(int(i) for i in picks):
            uid, (start, end) = occurrences[p]
            utt = corpus.utterances[uid]
            seg = utt.mel.frames[start : end + 1].copy()
            segments.append(SupportSegment(
                keyword=kw, utterance_id=uid, start_frame=start, end_frame=end,
                mel=MelSpectrogram(frames=seg, valid_frames=seg.shape[0],
                                   pad_value=utt.mel.pad_value),
            ))
            corpus.support_excluded.add(uid)
    return segments


def build_trials(corpus: SynthCorpus, split: str) -> list[Trial]:
    """Every (image query, utterance) pair for one split, with ground truth.

    The span is the single occurrence of the keyword (words within an
    utterance are sampled without replacement, so occurrences are unique).
    """
    trials: list[Trial] = []
    for kw in corpus.keywords:
        name = word_name(kw)
        for query_id, _ in corpus.queries[kw]:
            for uid in corpus.split_ids(split):
                utt = corpus.utterances[uid]
                if kw in utt.words:
                    span = utt.spans[utt.words.index(kw)]
                    trials.append(Trial(keyword=name, query_id=query_id,
                                        utterance_id=uid, contains_keyword=True,
                                        span=span))
                else:
                    trials.append(Trial(keyword=name, query_id=query_id,
                                        utterance_id=uid, contains_keyword=False))
    return trials


def corrupt_units(seq: UnitSequence, rate: float, codebook_size: int,
                  rng: np.random.Generator) -> UnitSequence:
    """Substitute each unit with a uniformly random different one at the given rate."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("substitution rate must be in [0, 1]")
    units = seq.units.copy()
    if rate > 0.0 and units.size:
        hit = rng.random(units.size) < rate
        if hit.any():
            shift = rng.integers(1, codebook_size, size=int(hit.sum()))
            units[hit] = (units[hit] + shift) % codebook_size
    return UnitSequence(units=units, collapsed=seq.collapsed, utterance_id=seq.utterance_id)
