"""Pipeline stages over a shared run directory.

Each stage consumes the previous stage's declared artifacts and writes its own
atomically, so a run directory is always in a consistent, resumable state:

    corpus/       manifest.jsonl, mels/, images/, queries/, support/, trials
    units/        codebook.vpkf, units.jsonl, support_units.jsonl
    pairs/        mined.jsonl, oracle.jsonl, mining_report.json
    checkpoints/  model-seed*.vpkc, train-log-seed*.jsonl
    metrics/      metrics-seed*.json, metrics.json, curves-seed*.jsonl

JSON outputs embed the config hash; only checkpoint headers carry timestamps,
so every other artifact is byte-reproducible for a fixed config and seed.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from vpkl import evaluate, io, mining, model, synth
from vpkl.config import RunConfig, config_hash
from vpkl.frontend import FrontendConfig, MelSpectrogram, compute_mel, fix_length, read_wav
from vpkl.quantize import Codebook, UnitSequence, collapse_runs, encode_units, train_codebook


class MissingArtifact(FileNotFoundError):
    """A stage input is absent; the message names the path and the producing stage."""


@dataclass(frozen=True)
class RunPaths:
    root: Path

    @property
    def config_used(self) -> Path:
        return self.root / "config_used.json"

    @property
    def corpus(self) -> Path:
        return self.root / "corpus"

    @property
    def manifest(self) -> Path:
        return self.corpus / "manifest.jsonl"

    @property
    def queries_jsonl(self) -> Path:
        return self.corpus / "queries.jsonl"

    @property
    def support_jsonl(self) -> Path:
        return self.corpus / "support.jsonl"

    def trials(self, split: str) -> Path:
        return self.corpus / f"trials_{split}.jsonl"

    @property
    def featurize_marker(self) -> Path:
        return self.corpus / "featurize.json"

    @property
    def units_dir(self) -> Path:
        return self.root / "units"

    @property
    def codebook(self) -> Path:
        return self.units_dir / "codebook.vpkf"

    @property
    def units_jsonl(self) -> Path:
        return self.units_dir / "units.jsonl"

    @property
    def support_units_jsonl(self) -> Path:
        return self.units_dir / "support_units.jsonl"

    @property
    def pairs_dir(self) -> Path:
        return self.root / "pairs"

    def pairs_jsonl(self, source: str) -> Path:
        return self.pairs_dir / f"{source}.jsonl"

    @property
    def mining_report(self) -> Path:
        return self.pairs_dir / "mining_report.json"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    def checkpoint(self, seed: int) -> Path:
        return self.checkpoints / f"model-seed{seed:04d}.vpkc"

    def train_log(self, seed: int) -> Path:
        return self.checkpoints / f"train-log-seed{seed:04d}.jsonl"

    @property
    def metrics_dir(self) -> Path:
        return self.root / "metrics"

    def metrics_seed(self, seed: int) -> Path:
        return self.metrics_dir / f"metrics-seed{seed:04d}.json"

    def curves_seed(self, seed: int) -> Path:
        return self.metrics_dir / f"curves-seed{seed:04d}.jsonl"

    @property
    def metrics_json(self) -> Path:
        return self.metrics_dir / "metrics.json"

    @property
    def table_txt(self) -> Path:
        return self.metrics_dir / "table.txt"

    @property
    def curves_jsonl(self) -> Path:
        return self.metrics_dir / "curves.jsonl"


def require(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise MissingArtifact(f"missing artifact {path} (produce it with `vpkl {produced_by}`)")
    return path


def _check_run_config(paths: RunPaths, cfg: RunConfig) -> None:
    """A run directory belongs to one config; refuse to mix."""
    used = io.read_json(require(paths.config_used, "synth"))
    if used["config_hash"] != config_hash(cfg):
        raise ValueError(
            f"config hash {config_hash(cfg)} does not match run directory "
            f"{paths.root} (created with {used['config_hash']})"
        )


def _config_doc(cfg: RunConfig) -> dict:
    doc = {}
    for section in fields(cfg):
        value = getattr(cfg, section.name)
        doc[section.name] = {
            f.name: (list(v) if isinstance(v := getattr(value, f.name), tuple) else v)
            for f in fields(type(value))
        }
    return doc


# ---------------------------------------------------------------------------
# synth


def stage_synth(cfg: RunConfig, paths: RunPaths) -> dict:
    corpus = synth.generate(cfg.synth)
    support = synth.make_support_set(corpus, cfg.mining.support_k)

    manifest = []
    for uid in sorted(corpus.utterances):
        utt = corpus.utterances[uid]
        mel_rel = f"mels/{uid}.vpkf"
        img_rel = f"images/{utt.image_id}.vpkf"
        io.write_matrix(paths.corpus / mel_rel, utt.mel.frames)
        io.write_matrix(paths.corpus / img_rel, utt.image)
        manifest.append({
            "utterance_id": uid,
            "image_id": utt.image_id,
            "split": utt.split,
            "words": [synth.word_name(w) for w in utt.words],
            "spans": [list(s) for s in utt.spans],
            "valid_frames": utt.mel.valid_frames,
            "mel": mel_rel,
            "image": img_rel,
        })
    io.write_jsonl(paths.manifest, manifest)

    query_rows = []
    for kw in corpus.keywords:
        for query_id, grid in corpus.queries[kw]:
            rel = f"queries/{query_id}.vpkf"
            io.write_matrix(paths.corpus / rel, grid)
            query_rows.append({"keyword": synth.word_name(kw),
                               "query_id": query_id, "grid": rel})
    io.write_jsonl(paths.queries_jsonl, query_rows)

    support_rows = []
    for i, seg in enumerate(support):
        rel = f"support/{synth.word_name(seg.keyword)}-{i:03d}.vpkf"
        io.write_matrix(paths.corpus / rel, seg.mel.frames)
        support_rows.append({
            "keyword": synth.word_name(seg.keyword),
            "utterance_id": seg.utterance_id,
            "start_frame": seg.start_frame,
            "end_frame": seg.end_frame,
            "mel": rel,
        })
    io.write_jsonl(paths.support_jsonl, support_rows)

    for split in ("dev", "test"):
        io.write_jsonl(paths.trials(split),
                       [t.to_record() for t in synth.build_trials(corpus, split)])

    summary = {
        "config_hash": config_hash(cfg),
        "config": _config_doc(cfg),
        "utterances": len(manifest),
        "keywords": [synth.word_name(k) for k in corpus.keywords],
        "support_segments": len(support_rows),
    }
    io.write_json(paths.config_used, summary)
    return summary


# ---------------------------------------------------------------------------
# featurize


def stage_featurize(cfg: RunConfig, paths: RunPaths) -> dict:
    """Compute mel features for WAV-backed rows; synthetic rows already carry mels."""
    _check_run_config(paths, cfg)
    rows = io.read_jsonl(require(paths.manifest, "synth"))
    fe = FrontendConfig(n_mels=cfg.synth.n_mels, target_frames=cfg.synth.target_frames)
    computed = passthrough = 0
    for row in rows:
        if row.get("mel"):
            passthrough += 1
            continue
        if not row.get("wav"):
            raise ValueError(f"manifest row {row['utterance_id']} has neither mel nor wav")
        wav = read_wav(row["wav"])
        mel = fix_length(compute_mel(wav, fe), fe.target_frames)
        rel = f"mels/{row['utterance_id']}.vpkf"
        io.write_matrix(paths.corpus / rel, mel.frames)
        row["mel"] = rel
        row["valid_frames"] = mel.valid_frames
        computed += 1
    if computed:
        io.write_jsonl(paths.manifest, rows)
    marker = {"config_hash": config_hash(cfg), "computed": computed,
              "passthrough": passthrough}
    io.write_json(paths.featurize_marker, marker)
    return marker


# ---------------------------------------------------------------------------
# quantize


def _load_mel(paths: RunPaths, row: dict) -> MelSpectrogram:
    frames = io.read_matrix(paths.corpus / row["mel"]).astype(np.float64)
    return MelSpectrogram(frames=frames, valid_frames=int(row["valid_frames"]))


def stage_quantize(cfg: RunConfig, paths: RunPaths) -> dict:
    _check_run_config(paths, cfg)
    rows = io.read_jsonl(require(paths.manifest, "synth"))
    require(paths.featurize_marker, "featurize")
    by_split: dict[str, list[dict]] = {}
    for row in rows:
        by_split.setdefault(row["split"], []).append(row)

    background = by_split.get("background", [])
    if not background:
        raise ValueError("no background split to train the codebook on")
    pool = np.concatenate([
        _load_mel(paths, row).valid() for row in background
    ])
    codebook = train_codebook(pool, k=cfg.quantize.codebook_size,
                              seed=cfg.synth.seed,
                              max_iter=cfg.quantize.kmeans_iterations)
    io.write_matrix(paths.codebook, codebook.centroids)

    rate = cfg.synth.unit_substitution_rate
    rng = synth.derived_rng(cfg.synth.seed, "unit-corruption")
    unit_rows = []
    for split in ("train", "dev", "test"):
        for row in by_split.get(split, []):
            uid = row["utterance_id"]
            seq = encode_units(_load_mel(paths, row), codebook)
            if rate > 0.0:
                seq = synth.corrupt_units(seq, rate, codebook.k, rng)
            seq = collapse_runs(seq)
            unit_rows.append({"utterance_id": uid, "split": row["split"],
                              "units": [int(u) for u in seq.units]})
    io.write_jsonl(paths.units_jsonl, unit_rows)

    support_rows = io.read_jsonl(require(paths.support_jsonl, "synth"))
    support_unit_rows = []
    for i, srow in enumerate(support_rows):
        frames = io.read_matrix(paths.corpus / srow["mel"]).astype(np.float64)
        mel = MelSpectrogram(frames=frames, valid_frames=frames.shape[0])
        seq = collapse_runs(encode_units(mel, codebook))
        support_unit_rows.append({
            "keyword": srow["keyword"],
            "segment": i,
            "utterance_id": srow["utterance_id"],
            "units": [int(u) for u in seq.units],
        })
    io.write_jsonl(paths.support_units_jsonl, support_unit_rows)

    summary = {"config_hash": config_hash(cfg), "codebook_size": codebook.k,
               "substitution_rate": rate, "utterances": len(unit_rows)}
    io.write_json(paths.units_dir / "quantize.json", summary)
    return summary


# ---------------------------------------------------------------------------
# mine


def _mining_pool(paths: RunPaths) -> tuple[dict[str, str], dict[str, set[str]]]:
    """(utterance -> image) pairing and word labels for train+dev minus support sources."""
    rows = io.read_jsonl(require(paths.manifest, "synth"))
    excluded = {r["utterance_id"] for r in io.read_jsonl(require(paths.support_jsonl, "synth"))}
    pairing, labels = {}, {}
    for row in rows:
        uid = row["utterance_id"]
        if row["split"] in ("train", "dev") and uid not in excluded:
            pairing[uid] = row["image_id"]
            labels[uid] = set(row.get("words", []))
    return pairing, labels


def stage_mine(cfg: RunConfig, paths: RunPaths, jobs: int = 1) -> dict:
    _check_run_config(paths, cfg)
    pairing, labels = _mining_pool(paths)
    unit_rows = io.read_jsonl(require(paths.units_jsonl, "quantize"))
    corpus_units = {
        r["utterance_id"]: UnitSequence(units=np.array(r["units"], dtype=np.int32),
                                        collapsed=True, utterance_id=r["utterance_id"])
        for r in unit_rows if r["utterance_id"] in pairing
    }
    support_rows = io.read_jsonl(require(paths.support_units_jsonl, "quantize"))
    examples: dict[str, list[UnitSequence]] = {}
    for r in support_rows:
        examples.setdefault(r["keyword"], []).append(
            UnitSequence(units=np.array(r["units"], dtype=np.int32), collapsed=True,
                         utterance_id=f"{r['keyword']}#{r['segment']}")
        )
    excluded = {r["utterance_id"] for r in io.read_jsonl(paths.support_jsonl)}
    support = mining.SupportSet(examples=examples, excluded_utterances=excluded)

    rankings = mining.rank_corpus(support, corpus_units, cfg.align, jobs=jobs)
    mined = mining.mine_pairs(rankings, cfg.mining.n_pairs, pairing)
    oracle = mining.oracle_pairs(labels, support.keywords, pairing)
    io.write_jsonl(paths.pairs_jsonl("mined"), mining.pairs_to_records(mined))
    io.write_jsonl(paths.pairs_jsonl("oracle"), mining.pairs_to_records(oracle))

    report = {
        "config_hash": config_hash(cfg),
        "n_pairs": cfg.mining.n_pairs,
        "mining_accuracy": mining.mining_accuracy(mined, labels),
        "corpus_size": len(corpus_units),
        "warnings": mined.warnings,
    }
    io.write_json(paths.mining_report, report)
    return report


# ---------------------------------------------------------------------------
# train


def _load_training_data(paths: RunPaths, pairs_source: str):
    pairing, _ = _mining_pool(paths)
    records = io.read_jsonl(require(paths.pairs_jsonl(pairs_source), "mine"))
    pairs = mining.pairs_from_records(records, pairing)
    rows = {r["utterance_id"]: r for r in io.read_jsonl(paths.manifest)}
    mels = {uid: _load_mel(paths, rows[uid]) for uid in sorted(pairing)}
    images = {
        rows[uid]["image_id"]:
            io.read_matrix(paths.corpus / rows[uid]["image"]).astype(np.float64)
        for uid in sorted(pairing)
    }
    return pairs, mels, images, pairing


def stage_train(cfg: RunConfig, paths: RunPaths, pairs_source: str = "mined") -> dict:
    _check_run_config(paths, cfg)
    pairs, mels, images, pairing = _load_training_data(paths, pairs_source)
    seeds = [cfg.synth.seed + i for i in range(cfg.train.n_seeds)]
    summary = {"config_hash": config_hash(cfg), "pairs_source": pairs_source, "seeds": {}}
    for seed in seeds:
        result = model.train(pairs, mels, images, pairing,
                             cfg.model, cfg.train, seed=seed)
        header = {
            "format": "vpkl-checkpoint",
            "version": 1,
            "seed": seed,
            "config_hash": config_hash(cfg),
            "created_at": datetime.now(timezone.utc).isoformat(),
            "pairs_source": pairs_source,
            "model": _config_doc(cfg)["model"],
            "best_epoch": result.best_epoch,
            "best_val_loss": result.best_val_loss,
        }
        io.write_checkpoint(paths.checkpoint(seed), header, result.params)
        io.write_jsonl(paths.train_log(seed), result.log)
        summary["seeds"][str(seed)] = {
            "best_epoch": result.best_epoch,
            "best_val_loss": result.best_val_loss,
            "epochs_run": len(result.log),
        }
    io.write_json(paths.checkpoints / "train.json", summary)
    return summary


# ---------------------------------------------------------------------------
# eval


_ENCODE_STATE: dict = {}


def _init_encode_worker(params: dict, config: model.ModelConfig) -> None:
    _ENCODE_STATE["params"] = params
    _ENCODE_STATE["config"] = config


def _encode_utterance(item):
    uid, frames, valid = item
    mel = MelSpectrogram(frames=frames, valid_frames=valid)
    emb = model.encode_audio(mel, _ENCODE_STATE["params"], _ENCODE_STATE["config"])
    return uid, emb.vectors, emb.valid_length


def _encode_corpus(mels: dict[str, MelSpectrogram], params: dict,
                   config: model.ModelConfig, jobs: int):
    """Per-utterance audio embeddings; parallel over utterances, order-stable."""
    items = [(uid, mels[uid].frames, mels[uid].valid_frames) for uid in sorted(mels)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_encode_worker,
                                 initargs=(params, config)) as pool:
            encoded = list(pool.map(_encode_utterance, items, chunksize=8))
    else:
        _init_encode_worker(params, config)
        encoded = [_encode_utterance(it) for it in items]
    return {
        uid: model.EmbeddingSequence(vectors=vec, kind="audio-frames", valid_length=valid)
        for uid, vec, valid in encoded
    }


def _model_config_from_header(header: dict) -> model.ModelConfig:
    doc = header["model"]
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
    return model.ModelConfig(**kwargs)


def stage_eval(cfg: RunConfig, paths: RunPaths, jobs: int = 1) -> dict:
    _check_run_config(paths, cfg)
    ckpts = sorted(paths.checkpoints.glob("model-seed*.vpkc"))
    if not ckpts:
        raise MissingArtifact(
            f"missing artifact {paths.checkpoint(cfg.synth.seed)} "
            "(produce it with `vpkl train`)"
        )
    dev_trials = [evaluate.Trial.from_record(r)
                  for r in io.read_jsonl(require(paths.trials("dev"), "synth"))]
    test_trials = [evaluate.Trial.from_record(r)
                   for r in io.read_jsonl(require(paths.trials("test"), "synth"))]
    rows = {r["utterance_id"]: r for r in io.read_jsonl(require(paths.manifest, "synth"))}
    needed = sorted({t.utterance_id for t in dev_trials + test_trials})
    mels = {uid: _load_mel(paths, rows[uid]) for uid in needed}
    query_rows = io.read_jsonl(require(paths.queries_jsonl, "synth"))
    grids = {r["query_id"]: io.read_matrix(paths.corpus / r["grid"]).astype(np.float64)
             for r in query_rows}

    reports = []
    per_seed: dict[str, dict] = {}
    for ckpt_path in ckpts:
        header, params = io.read_checkpoint(ckpt_path)
        mcfg = _model_config_from_header(header)
        seed = int(header["seed"])
        audio = _encode_corpus(mels, params, mcfg, jobs)
        vision = {qid: model.encode_vision(grid, params, mcfg)
                  for qid, grid in sorted(grids.items())}

        def score(trial: evaluate.Trial):
            return model.matchmap(audio[trial.utterance_id], vision[trial.query_id])

        alpha = evaluate.tune_threshold(
            [(model.similarity(score(t)), t.contains_keyword) for t in dev_trials]
        )
        outcomes = []
        curve_budget: dict[str, int] = {}
        curve_rows = []
        for trial in test_trials:
            m = score(trial)
            s = model.similarity(m)
            detected = evaluate.detect(s, alpha)
            frame = model.localise(m) if detected else None
            outcomes.append(evaluate.score_trial(trial, detected, frame))
            if trial.contains_keyword and \
                    curve_budget.get(trial.keyword, 0) < cfg.eval.curve_trials:
                curve_budget[trial.keyword] = curve_budget.get(trial.keyword, 0) + 1
                fs = model.frame_scores(m)[: m.valid_length]
                curve_rows.append({
                    "keyword": trial.keyword,
                    "query_id": trial.query_id,
                    "utterance_id": trial.utterance_id,
                    "alpha": alpha.alpha,
                    "span": list(trial.span),
                    "scores": [float(v) for v in fs],
                })
        report = evaluate.compute_metrics(outcomes)
        reports.append(report)
        doc = report.to_dict()
        doc.update({"seed": seed, "alpha": alpha.alpha,
                    "config_hash": config_hash(cfg),
                    "n_trials": len(outcomes)})
        io.write_json(paths.metrics_seed(seed), doc)
        io.write_jsonl(paths.curves_seed(seed), curve_rows)
        per_seed[str(seed)] = {
            "alpha": alpha.alpha,
            "detection_f1": report.detection["f1"],
            "localisation_f1": report.localisation["f1"],
        }

    aggregate = evaluate.aggregate_runs(reports)
    doc = {"aggregate": aggregate, "per_seed": per_seed,
           "config_hash": config_hash(cfg)}
    io.write_json(paths.metrics_json, doc)
    return doc


# ---------------------------------------------------------------------------
# report


def stage_report(cfg: RunConfig, paths: RunPaths) -> str:
    _check_run_config(paths, cfg)
    doc = io.read_json(require(paths.metrics_json, "eval"))
    table = evaluate.render_table(doc["aggregate"], title="vpkl")
    lines = [table, "Per seed:"]
    for seed, entry in sorted(doc["per_seed"].items()):
        lines.append(
            f"  seed {seed}: detection F1 {entry['detection_f1']:.2f}, "
            f"localisation F1 {entry['localisation_f1']:.2f}, "
            f"alpha {entry['alpha']:.4f}"
        )
    text = "\n".join(lines) + "\n"
    with io.atomic_write(paths.table_txt, "w") as fh:
        fh.write(text)

    curves = []
    for path in sorted(paths.metrics_dir.glob("curves-seed*.jsonl")):
        seed = int(path.stem.split("seed")[1])
        for row in io.read_jsonl(path):
            row["seed"] = seed
            curves.append(row)
    io.write_jsonl(paths.curves_jsonl, curves)
    return text
