"""Matchmap-attention grounded model with hand-written reverse-mode gradients.

Audio branch: two same-length 1-D conv layers (tanh) over valid mel frames,
then one bidirectional tanh-RNN whose two final states are concatenated per
frame. Vision branch: one affine map per image patch. The two branches meet
in a frame-by-patch dot-product matchmap; its global max is the similarity
score S, its per-frame row max drives localisation. Training minimises a
contrastive sum of squared distances pulling positive-pair scores to 100 and
negative-pair scores to 0.

Gradients flow through the max via its argmax entry only (ties: earliest in
row-major order). Padded audio frames are never encoded or scored.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from vpkl.frontend import MelSpectrogram
from vpkl.mining import MinedPairs

POSITIVE_TARGET = 100.0
NEGATIVE_TARGET = 0.0


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    n_mels: int = 40
    conv_channels: tuple[int, int] = (32, 32)
    kernel_sizes: tuple[int, int] = (5, 5)
    rnn_hidden: int = 32
    patch_dim: int = 16
    init_scale: float = 1.0

    def __post_init__(self):
        if any(k % 2 == 0 or k < 1 for k in self.kernel_sizes):
            raise ValueError("conv kernel sizes must be odd and positive")
        if min(self.conv_channels) < 1 or self.rnn_hidden < 1:
            raise ValueError("channel and hidden sizes must be positive")

    @property
    def d_emb(self) -> int:
        return 2 * self.rnn_hidden

    @property
    def conv_radius(self) -> int:
        """Receptive-field radius of the conv stack (pre-recurrence)."""
        return sum((k - 1) // 2 for k in self.kernel_sizes)


@dataclass
class EmbeddingSequence:
    vectors: np.ndarray  # (length, d_emb)
    kind: str  # "audio-frames" | "image-patches"
    valid_length: int | None = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError("embedding sequence must be 2-D")
        if self.kind == "audio-frames" and self.valid_length is None:
            raise ValueError("audio embeddings need a valid_length")


@dataclass
class Matchmap:
    values: np.ndarray  # (audio_frames, patches); rows >= valid_length are -inf
    valid_length: int


@dataclass
class ContrastiveBatch:
    anchor_audio: MelSpectrogram
    anchor_image: np.ndarray
    pos_audio: list[MelSpectrogram] = field(default_factory=list)
    pos_images: list = field(default_factory=list)
    neg_audio: list[MelSpectrogram] = field(default_factory=list)
    neg_images: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.pos_audio) != len(self.pos_images):
            raise ValueError("pos_audio and pos_images must pair up")
        if len(self.neg_audio) != len(self.neg_images):
            raise ValueError("neg_audio and neg_images must pair up")

    @property
    def n_pos(self) -> int:
        return len(self.pos_audio)

    @property
    def n_neg(self) -> int:
        return len(self.neg_audio)


def init_params(config: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Seeded fan-in-scaled Gaussian initialisation; biases start at zero."""
    c1, c2 = config.conv_channels
    k1, k2 = config.kernel_sizes
    h = config.rnn_hidden
    s = config.init_scale

    def w(shape, fan_in):
        return rng.normal(0.0, s / np.sqrt(fan_in), size=shape)

    return {
        "conv1_w": w((k1 * config.n_mels, c1), k1 * config.n_mels),
        "conv1_b": np.zeros(c1),
        "conv2_w": w((k2 * c1, c2), k2 * c1),
        "conv2_b": np.zeros(c2),
        "rnn_fwd_wx": w((c2, h), c2),
        "rnn_fwd_wh": w((h, h), h),
        "rnn_fwd_b": np.zeros(h),
        "rnn_bwd_wx": w((c2, h), c2),
        "rnn_bwd_wh": w((h, h), h),
        "rnn_bwd_b": np.zeros(h),
        "vis_w": w((config.patch_dim, config.d_emb), config.patch_dim),
        "vis_b": np.zeros(config.d_emb),
    }


# ---------------------------------------------------------------------------
# batched audio branch


def _gather_windows(x: np.ndarray, k: int) -> np.ndarray:
    """(B, T, C) -> (B, T, k*C) sliding windows, zero-padded at both ends."""
    b, t, c = x.shape
    pad = (k - 1) // 2
    xp = np.zeros((b, t + 2 * pad, c))
    xp[:, pad : pad + t] = x
    idx = np.arange(t)[:, None] + np.arange(k)[None, :]
    return xp[:, idx, :].reshape(b, t, k * c)


def _scatter_windows(dcols: np.ndarray, k: int, c: int) -> np.ndarray:
    """Adjoint of _gather_windows: (B, T, k*C) -> (B, T, C)."""
    b, t, _ = dcols.shape
    pad = (k - 1) // 2
    d4 = dcols.reshape(b, t, k, c)
    dxp = np.zeros((b, t + 2 * pad, c))
    for o in range(k):
        dxp[:, o : o + t] += d4[:, :, o]
    return dxp[:, pad : pad + t]


def _rnn_direction(x, mask, wx, wh, bias, reverse):
    """Masked tanh RNN along one direction; padded steps keep the previous state."""
    b, t, _ = x.shape
    h = np.zeros((b, wh.shape[0]))
    states = np.empty((b, t, wh.shape[0]))
    updates = np.empty_like(states)
    steps = range(t - 1, -1, -1) if reverse else range(t)
    for i in steps:
        u = np.tanh(x[:, i] @ wx + h @ wh + bias)
        m = mask[:, i][:, None]
        h = m * u + (1.0 - m) * h
        states[:, i] = h
        updates[:, i] = u
    return states, updates


def _rnn_direction_backward(dstates, x, mask, states, updates, wx, wh, reverse):
    b, t, _ = x.shape
    h_dim = wh.shape[0]
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(h_dim)
    dx = np.zeros_like(x)
    dh = np.zeros((b, h_dim))
    zeros = np.zeros((b, h_dim))
    steps = range(t) if reverse else range(t - 1, -1, -1)
    for i in steps:
        total = dstates[:, i] + dh
        m = mask[:, i][:, None]
        du = total * m * (1.0 - updates[:, i] ** 2)
        if reverse:
            h_prev = states[:, i + 1] if i < t - 1 else zeros
        else:
            h_prev = states[:, i - 1] if i > 0 else zeros
        dwx += x[:, i].T @ du
        dwh += h_prev.T @ du
        db += du.sum(axis=0)
        dx[:, i] = du @ wx.T
        dh = total * (1.0 - m) + du @ wh.T
    return dx, dwx, dwh, db


def _audio_forward(x, lengths, params, config: ModelConfig):
    """x: (B, Tmax, n_mels) zeroed beyond each length. Returns (B, Tmax, d_emb) + cache."""
    k1, k2 = config.kernel_sizes
    b, t, _ = x.shape
    mask = (np.arange(t)[None, :] < lengths[:, None]).astype(np.float64)
    m3 = mask[:, :, None]

    cols1 = _gather_windows(x, k1)
    a1 = np.tanh(cols1 @ params["conv1_w"] + params["conv1_b"]) * m3
    cols2 = _gather_windows(a1, k2)
    a2 = np.tanh(cols2 @ params["conv2_w"] + params["conv2_b"]) * m3

    hf, uf = _rnn_direction(a2, mask, params["rnn_fwd_wx"], params["rnn_fwd_wh"],
                            params["rnn_fwd_b"], reverse=False)
    hb, ub = _rnn_direction(a2, mask, params["rnn_bwd_wx"], params["rnn_bwd_wh"],
                            params["rnn_bwd_b"], reverse=True)
    y = np.concatenate([hf, hb], axis=2)
    cache = {"x": x, "mask": mask, "cols1": cols1, "a1": a1, "cols2": cols2,
             "a2": a2, "hf": hf, "uf": uf, "hb": hb, "ub": ub}
    return y, cache


def _audio_backward(dy, cache, params, config: ModelConfig, grads):
    k1, k2 = config.kernel_sizes
    c1, _ = config.conv_channels
    h = config.rnn_hidden
    mask = cache["mask"]
    m3 = mask[:, :, None]

    da2_f, dwx_f, dwh_f, db_f = _rnn_direction_backward(
        dy[:, :, :h], cache["a2"], mask, cache["hf"], cache["uf"],
        params["rnn_fwd_wx"], params["rnn_fwd_wh"], reverse=False)
    da2_b, dwx_b, dwh_b, db_b = _rnn_direction_backward(
        dy[:, :, h:], cache["a2"], mask, cache["hb"], cache["ub"],
        params["rnn_bwd_wx"], params["rnn_bwd_wh"], reverse=True)
    grads["rnn_fwd_wx"] += dwx_f
    grads["rnn_fwd_wh"] += dwh_f
    grads["rnn_fwd_b"] += db_f
    grads["rnn_bwd_wx"] += dwx_b
    grads["rnn_bwd_wh"] += dwh_b
    grads["rnn_bwd_b"] += db_b

    da2 = da2_f + da2_b
    dz2 = da2 * m3 * (1.0 - cache["a2"] ** 2)
    b, t, _ = dz2.shape
    grads["conv2_w"] += cache["cols2"].reshape(b * t, -1).T @ dz2.reshape(b * t, -1)
    grads["conv2_b"] += dz2.sum(axis=(0, 1))
    da1 = _scatter_windows(dz2 @ params["conv2_w"].T, k2, c1)

    dz1 = da1 * m3 * (1.0 - cache["a1"] ** 2)
    grads["conv1_w"] += cache["cols1"].reshape(b * t, -1).T @ dz1.reshape(b * t, -1)
    grads["conv1_b"] += dz1.sum(axis=(0, 1))


def _vision_forward(grids, params):
    """grids: (B, P, patch_dim) -> (B, P, d_emb)."""
    return grids @ params["vis_w"] + params["vis_b"]


def _vision_backward(dy, grids, grads):
    grads["vis_w"] += np.einsum("bpi,bpo->io", grids, dy)
    grads["vis_b"] += dy.sum(axis=(0, 1))


def _stack_audio(mels: list[MelSpectrogram], config: ModelConfig):
    """Copy valid prefixes into a zero-padded batch; padded mel rows are never read."""
    lengths = np.array([m.valid_frames for m in mels], dtype=np.int64)
    tmax = int(lengths.max())
    x = np.zeros((len(mels), tmax, config.n_mels))
    for i, m in enumerate(mels):
        if m.n_mels != config.n_mels:
            raise ValueError(f"mel dim {m.n_mels} != model n_mels {config.n_mels}")
        x[i, : m.valid_frames] = m.frames[: m.valid_frames]
    return x, lengths


def _stack_vision(grids: list, config: ModelConfig):
    arrs = [np.asarray(g, dtype=np.float64) for g in grids]
    shapes = {a.shape for a in arrs}
    for a in arrs:
        if a.ndim != 2 or a.shape[1] != config.patch_dim:
            raise ValueError(f"image grid shape {a.shape} != (*, {config.patch_dim})")
    if len(shapes) != 1:
        raise ValueError(f"mixed patch counts in one batch: {sorted(shapes)}")
    return np.stack(arrs)


# ---------------------------------------------------------------------------
# public single-input operations


def encode_audio(m: MelSpectrogram, params: dict, config: ModelConfig) -> EmbeddingSequence:
    """One embedding per frame; rows beyond valid_frames are zero and masked downstream."""
    x, lengths = _stack_audio([m], config)
    y, _ = _audio_forward(x, lengths, params, config)
    out = np.zeros((m.num_frames, config.d_emb))
    out[: m.valid_frames] = y[0, : m.valid_frames]
    return EmbeddingSequence(vectors=out, kind="audio-frames", valid_length=m.valid_frames)


def audio_conv_features(m: MelSpectrogram, params: dict, config: ModelConfig) -> np.ndarray:
    """Conv-stack output before the recurrence (receptive field = config.conv_radius)."""
    x, lengths = _stack_audio([m], config)
    k1, k2 = config.kernel_sizes
    mask = (np.arange(x.shape[1])[None, :] < lengths[:, None]).astype(np.float64)[:, :, None]
    a1 = np.tanh(_gather_windows(x, k1) @ params["conv1_w"] + params["conv1_b"]) * mask
    a2 = np.tanh(_gather_windows(a1, k2) @ params["conv2_w"] + params["conv2_b"]) * mask
    return a2[0]


def encode_vision(grid: np.ndarray, params: dict, config: ModelConfig) -> EmbeddingSequence:
    """One embedding per patch (pointwise affine map, no cross-patch mixing)."""
    g = _stack_vision([grid], config)
    return EmbeddingSequence(vectors=_vision_forward(g, params)[0], kind="image-patches")


def matchmap(ya: EmbeddingSequence, yv: EmbeddingSequence) -> Matchmap:
    """Pairwise dot products; padded audio rows are set to -inf for max operations.

    Cells are reduced with pairwise summation (broadcast product + sum), not
    BLAS matmul, so every cell is bit-identical to summing the two vectors'
    elementwise product on its own.
    """
    if ya.vectors.shape[1] != yv.vectors.shape[1]:
        raise ValueError(
            f"embedding dims differ: {ya.vectors.shape[1]} vs {yv.vectors.shape[1]}"
        )
    valid = ya.valid_length if ya.valid_length is not None else ya.vectors.shape[0]
    values = (ya.vectors[:, None, :] * yv.vectors[None, :, :]).sum(axis=2)
    values[valid:] = -np.inf
    return Matchmap(values=values, valid_length=valid)


def frame_scores(m: Matchmap) -> np.ndarray:
    """Per-frame score: max over the image axis (masked frames stay -inf)."""
    return m.values.max(axis=1)


def similarity(m: Matchmap) -> float:
    """Similarity score S: the maximum over the whole valid matchmap."""
    if m.valid_length < 1:
        raise ValueError("matchmap has no valid frames")
    return float(m.values[: m.valid_length].max())


def localise(m: Matchmap) -> int:
    """Frame index of the per-frame maximum (ties: earliest frame)."""
    if m.valid_length < 1:
        raise ValueError("matchmap has no valid frames")
    return int(np.argmax(frame_scores(m)[: m.valid_length]))


# ---------------------------------------------------------------------------
# loss and gradients


def _loss_terms(n_pos: int, n_neg: int) -> list[tuple[int, int, float]]:
    """(audio_index, vision_index, target) triples in fixed evaluation order.

    Batch layout: index 0 is the anchor, 1..n_pos the positives,
    n_pos+1..n_pos+n_neg the negatives, on both branches.
    """
    terms = [(0, 0, POSITIVE_TARGET)]
    terms += [(n_pos + 1 + i, 0, NEGATIVE_TARGET) for i in range(n_neg)]
    terms += [(0, n_pos + 1 + i, NEGATIVE_TARGET) for i in range(n_neg)]
    terms += [(0, 1 + i, POSITIVE_TARGET) for i in range(n_pos)]
    terms += [(1 + i, 0, POSITIVE_TARGET) for i in range(n_pos)]
    return terms


def _batch_tensors(batch: ContrastiveBatch, config: ModelConfig):
    mels = [batch.anchor_audio] + batch.pos_audio + batch.neg_audio
    grids = [batch.anchor_image] + batch.pos_images + batch.neg_images
    x, lengths = _stack_audio(mels, config)
    g = _stack_vision(grids, config)
    return x, lengths, g


def _forward_terms(ya, lengths, yv, terms):
    """Per-term S plus argmax locations under the earliest-row-major tie rule."""
    scores = np.empty(len(terms))
    argmaxes = []
    for idx, (ai, vi, _) in enumerate(terms):
        m = ya[ai, : lengths[ai]] @ yv[vi].T
        flat = int(np.argmax(m))
        t_star, p_star = divmod(flat, m.shape[1])
        scores[idx] = m[t_star, p_star]
        argmaxes.append((t_star, p_star))
    return scores, argmaxes


def contrastive_loss(batch: ContrastiveBatch, params: dict, config: ModelConfig) -> float:
    """Sum of squared distances of each term's S to its 100/0 target."""
    x, lengths, g = _batch_tensors(batch, config)
    ya, _ = _audio_forward(x, lengths, params, config)
    yv = _vision_forward(g, params)
    terms = _loss_terms(batch.n_pos, batch.n_neg)
    scores, _ = _forward_terms(ya, lengths, yv, terms)
    targets = np.array([t for _, _, t in terms])
    return float(np.sum((scores - targets) ** 2))


def loss_and_grads(batch: ContrastiveBatch, params: dict, config: ModelConfig,
                   return_internals: bool = False):
    """Loss plus exact reverse-mode gradients (max subdifferentiated at its argmax)."""
    x, lengths, g = _batch_tensors(batch, config)
    ya, cache = _audio_forward(x, lengths, params, config)
    yv = _vision_forward(g, params)
    terms = _loss_terms(batch.n_pos, batch.n_neg)
    scores, argmaxes = _forward_terms(ya, lengths, yv, terms)
    targets = np.array([t for _, _, t in terms])
    loss = float(np.sum((scores - targets) ** 2))

    dya = np.zeros_like(ya)
    dyv = np.zeros_like(yv)
    dscores = 2.0 * (scores - targets)
    for (ai, vi, _), ds, (t_star, p_star) in zip(terms, dscores, argmaxes):
        dya[ai, t_star] += ds * yv[vi, p_star]
        dyv[vi, p_star] += ds * ya[ai, t_star]

    grads = {name: np.zeros_like(p) for name, p in params.items()}
    _vision_backward(dyv, g, grads)
    _audio_backward(dya, cache, params, config, grads)

    if return_internals:
        internals = {"scores": scores, "argmaxes": argmaxes, "dya": dya, "dyv": dyv,
                     "ya": ya, "yv": yv, "lengths": lengths}
        return loss, grads, internals
    return loss, grads


def score_pair(mel: MelSpectrogram, grid: np.ndarray, params: dict,
               config: ModelConfig):
    """(S, per-frame scores over valid frames, predicted frame) for one trial."""
    ya = encode_audio(mel, params, config)
    yv = encode_vision(grid, params, config)
    m = matchmap(ya, yv)
    fs = frame_scores(m)[: m.valid_length]
    return similarity(m), fs, localise(m)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    steps_per_epoch: int = 32
    learning_rate: float = 1e-4
    lr_decay: float = 1.0  # multiplicative per epoch, 1.0 = constant
    n_pos: int = 4
    n_neg: int = 4
    patience: int = 10
    val_batches_per_keyword: int = 2
    n_seeds: int = 3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


class Adam:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.lr = cfg.learning_rate
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.cfg.adam_beta1, self.cfg.adam_beta2
        for k in params:
            g = grads[k]
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1**self.t)
            vhat = self.v[k] / (1 - b2**self.t)
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.cfg.adam_eps)


def _hash_bucket(identifier: str) -> int:
    return int.from_bytes(hashlib.sha1(identifier.encode()).digest()[:4], "big") % 10


def _split_pool(ids: list[str]) -> tuple[list[str], list[str]]:
    """Deterministic 90/10 train/val split by id hash."""
    train = [i for i in ids if _hash_bucket(i) != 0]
    val = [i for i in ids if _hash_bucket(i) == 0]
    return train, val


@dataclass
class KeywordPools:
    keyword: str
    anchors: list[str]
    pos_utts: list[str]
    pos_imgs: list[str]
    neg_utts: list[str]
    neg_imgs: list[str]


@dataclass
class TrainResult:
    params: dict
    log: list[dict]
    best_epoch: int
    best_val_loss: float


def _build_pools(pairs: MinedPairs, val: bool) -> list[KeywordPools]:
    pools = []
    for kw in sorted(pairs.per_keyword):
        kp = pairs.per_keyword[kw]
        pos_train, pos_val = _split_pool(kp.positives)
        neg_train, neg_val = _split_pool(kp.negatives)
        ipos_train, ipos_val = _split_pool(kp.image_positives)
        ineg_train, ineg_val = _split_pool(kp.image_negatives)
        pick = (lambda a, b: b or a) if val else (lambda a, b: a)
        pool = KeywordPools(
            keyword=kw,
            anchors=pick(pos_train, pos_val),
            pos_utts=pick(pos_train, pos_val),
            pos_imgs=pick(ipos_train, ipos_val),
            neg_utts=pick(neg_train, neg_val),
            neg_imgs=pick(ineg_train, ineg_val),
        )
        if pool.anchors and pool.pos_utts and pool.neg_utts and pool.pos_imgs and pool.neg_imgs:
            pools.append(pool)
    return pools


def _sample_batch(pool: KeywordPools, rng: np.random.Generator,
                  mels: dict[str, MelSpectrogram], images: dict[str, np.ndarray],
                  pairing: dict[str, str], n_pos: int, n_neg: int) -> ContrastiveBatch:
    """One anchor plus companions drawn uniformly (with replacement) from the pools."""

    def draw(ids: list[str], count: int) -> list[str]:
        return [ids[int(rng.integers(len(ids)))] for _ in range(count)]

    anchor = pool.anchors[int(rng.integers(len(pool.anchors)))]
    return ContrastiveBatch(
        anchor_audio=mels[anchor],
        anchor_image=images[pairing[anchor]],
        pos_audio=[mels[u] for u in draw(pool.pos_utts, n_pos)],
        pos_images=[images[i] for i in draw(pool.pos_imgs, n_pos)],
        neg_audio=[mels[u] for u in draw(pool.neg_utts, n_neg)],
        neg_images=[images[i] for i in draw(pool.neg_imgs, n_neg)],
    )


def train(pairs: MinedPairs, mels: dict[str, MelSpectrogram],
          images: dict[str, np.ndarray], pairing: dict[str, str],
          model_config: ModelConfig, train_config: TrainConfig,
          seed: int) -> TrainResult:
    """Adam training with per-epoch validation loss and patience-based early stopping.

    Fully deterministic for a fixed (pairs, seed): one RNG drives init, the
    fixed validation batches and every sampling decision in order.
    """
    train_pools = _build_pools(pairs, val=False)
    if not train_pools:
        raise ValueError("no keyword has non-empty mined pools")
    val_pools = _build_pools(pairs, val=True)

    rng = np.random.default_rng(seed)
    params = init_params(model_config, rng)
    val_batches = [
        _sample_batch(pool, rng, mels, images, pairing,
                      train_config.n_pos, train_config.n_neg)
        for pool in val_pools
        for _ in range(train_config.val_batches_per_keyword)
    ]
    adam = Adam(params, train_config)
    log: list[dict] = []
    best_val = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    best_epoch = -1
    wait = 0
    step_count = 0

    for epoch in range(train_config.epochs):
        adam.lr = train_config.learning_rate * train_config.lr_decay**epoch
        losses = []
        for _ in range(train_config.steps_per_epoch):
            pool = train_pools[step_count % len(train_pools)]
            step_count += 1
            batch = _sample_batch(pool, rng, mels, images, pairing,
                                  train_config.n_pos, train_config.n_neg)
            loss, grads = loss_and_grads(batch, params, model_config)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, keyword {pool.keyword}"
                )
            adam.step(params, grads)
            losses.append(loss)
        val_loss = float(np.mean([
            contrastive_loss(b, params, model_config) for b in val_batches
        ])) if val_batches else float(np.mean(losses))
        log.append({
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "val_loss": val_loss,
        })
        if val_loss < best_val:
            best_val = val_loss
            best_params = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait >= train_config.patience:
                break
    return TrainResult(params=best_params, log=log, best_epoch=best_epoch,
                       best_val_loss=float(best_val))
