"""Causality-matrix extraction: a small transformer encoder whose final
layer's self-attention probabilities, averaged over heads, form a U x U
row-stochastic matrix of pairwise cause likelihoods.

Pipeline per conversation of U utterances:

1. combined[i] = [s1; s2; s3; logits]          (length 3*d + 7 = d_model)
2. input = dropout(combined) + pos_table[:U]   (inverted dropout, train only)
3. C_m  = head-mean of the last layer's attention probabilities after the
   sequence has passed through all earlier layers.

Everything runs in float64 numpy with handwritten backward passes, so
gradients are exact and the whole training loop is bit-deterministic for
a fixed seed. Encoder layers are pre-layer-norm residual blocks; only the
input site applies dropout. The last layer's feed-forward output is still
computed (it is the returned hidden state) but the training loss touches
only its attention probabilities, so its value/output/feed-forward
parameters legitimately receive zero gradient.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Callable

import numpy as np

from .corpus import Corpus
from .embedder import EmbeddingSlots, EmbeddingStore
from .emotion_head import EmotionHead, head_forward, CheckpointError, CHECKPOINT_VERSION
from .optim import AdamW
from . import pairing

logger = logging.getLogger(__name__)

N_EMOTIONS = 7
LN_EPS = 1e-5


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    dropout_p: float = 0.1
    max_len: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_layers < 2:
            raise ValueError(f"need at least 2 encoder layers, got {self.n_layers}")
        if self.n_heads < 1 or self.d_model % self.n_heads != 0:
            raise ValueError(f"d_model {self.d_model} must be divisible by "
                             f"n_heads {self.n_heads}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.d_ff < 1 or self.max_len < 1:
            raise ValueError("d_ff and max_len must be positive")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


def d_model_for(embed_dim: int) -> int:
    """Input width for embedding dimension d: three slots plus 7 logits."""
    return 3 * embed_dim + N_EMOTIONS


def assemble_input(slots: EmbeddingSlots, logits: np.ndarray) -> np.ndarray:
    """Concatenate [s1, s2, s3, logits] into one float64 row."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != (N_EMOTIONS,):
        raise ValueError(f"logits must have shape ({N_EMOTIONS},), got {logits.shape}")
    return np.concatenate([slots.concatenated(), logits])


def prepare_sequence(combined: np.ndarray, pos_table: np.ndarray, dropout_p: float,
                     training: bool = False,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    """Apply input dropout (inverted scaling, training only) and add
    positional embeddings row-wise."""
    combined = np.asarray(combined, dtype=np.float64)
    seq_len, width = combined.shape
    if seq_len > pos_table.shape[0]:
        raise ValueError(f"sequence length {seq_len} exceeds positional table "
                         f"size {pos_table.shape[0]}")
    if width != pos_table.shape[1]:
        raise ValueError(f"input width {width} does not match positional table "
                         f"width {pos_table.shape[1]}")
    if training and dropout_p > 0.0:
        if rng is None:
            raise ValueError("training-mode dropout requires an rng")
        keep = rng.random(combined.shape) >= dropout_p
        combined = combined * keep / (1.0 - dropout_p)
    return combined + pos_table[:seq_len]


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def _layer_param_shapes(cfg: EncoderConfig, i: int) -> dict[str, tuple[int, ...]]:
    d, f = cfg.d_model, cfg.d_ff
    p = f"layer{i}."
    return {
        p + "ln1.g": (d,), p + "ln1.b": (d,),
        p + "attn.wq": (d, d), p + "attn.bq": (d,),
        p + "attn.wk": (d, d), p + "attn.bk": (d,),
        p + "attn.wv": (d, d), p + "attn.bv": (d,),
        p + "attn.wo": (d, d), p + "attn.bo": (d,),
        p + "ln2.g": (d,), p + "ln2.b": (d,),
        p + "ffn.w1": (d, f), p + "ffn.b1": (f,),
        p + "ffn.w2": (f, d), p + "ffn.b2": (d,),
    }


def param_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {"pos.table": (cfg.max_len, cfg.d_model)}
    for i in range(cfg.n_layers):
        shapes.update(_layer_param_shapes(cfg, i))
    return shapes


_INIT_STD = 0.02


@dataclass
class CausalityModel:
    """Encoder parameters plus their configuration. All arrays are float64."""

    config: EncoderConfig
    params: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        expected = param_shapes(self.config)
        if set(self.params) != set(expected):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ValueError(f"parameter name mismatch: missing={missing} extra={extra}")
        for name, shape in expected.items():
            arr = np.asarray(self.params[name], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"parameter {name} has shape {arr.shape}, "
                                 f"expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name} contains non-finite values")
            self.params[name] = arr

    @classmethod
    def init(cls, cfg: EncoderConfig) -> CausalityModel:
        """Seeded initialization: N(0, 0.02) weights, zero biases, unit LN scales."""
        rng = np.random.default_rng(cfg.seed)
        params: dict[str, np.ndarray] = {}
        for name, shape in sorted(param_shapes(cfg).items()):
            if name.endswith((".g",)):
                params[name] = np.ones(shape)
            elif name.endswith((".b", ".bq", ".bk", ".bv", ".bo", ".b1", ".b2")):
                params[name] = np.zeros(shape)
            else:
                params[name] = rng.normal(0.0, _INIT_STD, size=shape)
        return cls(cfg, params)


# ---------------------------------------------------------------------------
# Forward / backward primitives
# ---------------------------------------------------------------------------

def _layernorm_fwd(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xn = xc * inv
    return xn * g + b, (xn, inv, g)


def _layernorm_bwd(dy: np.ndarray, cache) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xn, inv, g = cache
    dg = (dy * xn).sum(axis=0)
    db = dy.sum(axis=0)
    dxn = dy * g
    dx = inv * (dxn - dxn.mean(axis=-1, keepdims=True)
                - xn * (dxn * xn).mean(axis=-1, keepdims=True))
    return dx, dg, db


def _split_heads(x: np.ndarray, h: int) -> np.ndarray:
    u, d = x.shape
    return x.reshape(u, h, d // h).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    h, u, dk = x.shape
    return x.transpose(1, 0, 2).reshape(u, h * dk)


def _softmax_rows(s: np.ndarray) -> np.ndarray:
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _layer_fwd(params: dict[str, np.ndarray], prefix: str, cfg: EncoderConfig,
               x: np.ndarray):
    """One pre-LN encoder block. Returns (y, attention_probs, cache)."""
    g = lambda key: params[prefix + key]  # noqa: E731
    xn1, ln1_cache = _layernorm_fwd(x, g("ln1.g"), g("ln1.b"))
    q = xn1 @ g("attn.wq") + g("attn.bq")
    k = xn1 @ g("attn.wk") + g("attn.bk")
    v = xn1 @ g("attn.wv") + g("attn.bv")
    qh, kh, vh = (_split_heads(t, cfg.n_heads) for t in (q, k, v))
    scale = 1.0 / np.sqrt(cfg.head_dim)
    scores = qh @ kh.transpose(0, 2, 1) * scale
    probs = _softmax_rows(scores)                      # (H, U, U)
    ctx = probs @ vh
    ctxm = _merge_heads(ctx)
    attn_out = ctxm @ g("attn.wo") + g("attn.bo")
    a = x + attn_out
    an2, ln2_cache = _layernorm_fwd(a, g("ln2.g"), g("ln2.b"))
    f1 = an2 @ g("ffn.w1") + g("ffn.b1")
    r = np.maximum(f1, 0.0)
    y = a + r @ g("ffn.w2") + g("ffn.b2")
    cache = (xn1, ln1_cache, qh, kh, vh, probs, ctxm, an2, ln2_cache, f1, r, scale)
    return y, probs, cache


def _layer_bwd(params: dict[str, np.ndarray], prefix: str, cfg: EncoderConfig,
               cache, dy: np.ndarray, dprobs_ext: np.ndarray | None,
               grads: dict[str, np.ndarray]) -> np.ndarray:
    """Backward through one block. dprobs_ext carries the causality-matrix
    gradient into the attention probabilities (last layer only)."""
    xn1, ln1_cache, qh, kh, vh, probs, ctxm, an2, ln2_cache, f1, r, scale = cache
    g = lambda key: params[prefix + key]  # noqa: E731

    # y = a + relu(an2 @ w1 + b1) @ w2 + b2
    da = dy.copy()
    grads[prefix + "ffn.w2"] = r.T @ dy
    grads[prefix + "ffn.b2"] = dy.sum(axis=0)
    dr = dy @ g("ffn.w2").T
    df1 = dr * (f1 > 0.0)
    grads[prefix + "ffn.w1"] = an2.T @ df1
    grads[prefix + "ffn.b1"] = df1.sum(axis=0)
    dan2 = df1 @ g("ffn.w1").T
    da_ln, dg2, db2 = _layernorm_bwd(dan2, ln2_cache)
    grads[prefix + "ln2.g"] = dg2
    grads[prefix + "ln2.b"] = db2
    da += da_ln

    # a = x + ctxm @ wo + bo
    dx = da.copy()
    dattn = da
    grads[prefix + "attn.wo"] = ctxm.T @ dattn
    grads[prefix + "attn.bo"] = dattn.sum(axis=0)
    dctx = _split_heads(dattn @ g("attn.wo").T, cfg.n_heads)
    dprobs = dctx @ vh.transpose(0, 2, 1)
    dvh = probs.transpose(0, 2, 1) @ dctx
    if dprobs_ext is not None:
        dprobs = dprobs + dprobs_ext
    # softmax rows: dS = P * (dP - sum(dP * P))
    dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
    dqh = dscores @ kh * scale
    dkh = dscores.transpose(0, 2, 1) @ qh * scale
    dq, dk, dv = (_merge_heads(t) for t in (dqh, dkh, dvh))
    grads[prefix + "attn.wq"] = xn1.T @ dq
    grads[prefix + "attn.bq"] = dq.sum(axis=0)
    grads[prefix + "attn.wk"] = xn1.T @ dk
    grads[prefix + "attn.bk"] = dk.sum(axis=0)
    grads[prefix + "attn.wv"] = xn1.T @ dv
    grads[prefix + "attn.bv"] = dv.sum(axis=0)
    dxn1 = dq @ g("attn.wq").T + dk @ g("attn.wk").T + dv @ g("attn.wv").T
    dx_ln, dg1, db1 = _layernorm_bwd(dxn1, ln1_cache)
    grads[prefix + "ln1.g"] = dg1
    grads[prefix + "ln1.b"] = db1
    return dx + dx_ln


def _forward_layers(model: CausalityModel, sequence: np.ndarray, need_cache: bool):
    cfg = model.config
    x = sequence
    caches = []
    probs = None
    for i in range(cfg.n_layers):
        x, probs, cache = _layer_fwd(model.params, f"layer{i}.", cfg, x)
        if need_cache:
            caches.append(cache)
    c_m = probs.mean(axis=0)
    return x, c_m, caches


def encode(model: CausalityModel, sequence: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run the encoder stack on a prepared sequence.

    Returns (hidden, causality_matrix): the last layer's full output and the
    head-averaged attention probabilities of that layer. Pure function of its
    inputs; rows of the causality matrix sum to 1.
    """
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim != 2 or sequence.shape[1] != model.config.d_model:
        raise ValueError(f"sequence must be (U, {model.config.d_model}), "
                         f"got {sequence.shape}")
    hidden, c_m, _ = _forward_layers(model, sequence, need_cache=False)
    return hidden, c_m


def attention_mse(c_m: np.ndarray, target: np.ndarray) -> float:
    """Mean squared error over all U*U matrix entries."""
    c_m = np.asarray(c_m, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if c_m.shape != target.shape:
        raise ValueError(f"shape mismatch: {c_m.shape} vs {target.shape}")
    diff = c_m - target
    return float((diff * diff).mean())


def loss_and_grads(model: CausalityModel, combined: np.ndarray, target: np.ndarray,
                   training: bool = False,
                   rng: np.random.Generator | None = None
                   ) -> tuple[float, dict[str, np.ndarray]]:
    """MSE loss of the causality matrix against a target, with exact gradients
    for every model parameter (zero where the loss genuinely does not depend
    on the parameter)."""
    cfg = model.config
    combined = np.asarray(combined, dtype=np.float64)
    seq_len = combined.shape[0]
    sequence = prepare_sequence(combined, model.params["pos.table"], cfg.dropout_p,
                                training=training, rng=rng)
    _, c_m, caches = _forward_layers(model, sequence, need_cache=True)
    target = np.asarray(target, dtype=np.float64)
    if c_m.shape != target.shape:
        raise ValueError(f"target shape {target.shape} does not match "
                         f"causality matrix {c_m.shape}")
    diff = c_m - target
    loss = float((diff * diff).mean())

    grads = {name: np.zeros_like(p) for name, p in model.params.items()}
    d_cm = 2.0 * diff / diff.size
    dprobs_last = np.broadcast_to(d_cm / cfg.n_heads,
                                  (cfg.n_heads,) + d_cm.shape).copy()
    dx = np.zeros_like(sequence)
    for i in reversed(range(cfg.n_layers)):
        ext = dprobs_last if i == cfg.n_layers - 1 else None
        dx = _layer_bwd(model.params, f"layer{i}.", cfg, caches[i], dx, ext, grads)
    grads["pos.table"][:seq_len] = dx
    return loss, grads


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncoderTrainConfig:
    lr: float = 1e-4
    steps: int = 2000
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01


def conversation_inputs(corpus: Corpus, store: EmbeddingStore,
                        head: EmotionHead) -> list[tuple[str, np.ndarray]]:
    """Per conversation, the U x (3*d+7) matrix of combined input rows."""
    out = []
    for conv in corpus.conversations:
        rows = []
        for utt in conv.utterances:
            slots = store.get(conv.conversation_id, utt.utterance_id)
            rows.append(assemble_input(slots, head_forward(slots, head)))
        out.append((conv.conversation_id, np.stack(rows)))
    return out


def train_encoder(corpus: Corpus, store: EmbeddingStore, head: EmotionHead,
                  cfg: EncoderConfig, opt: EncoderTrainConfig = EncoderTrainConfig(),
                  callback: Callable[[int, float], None] | None = None
                  ) -> CausalityModel:
    """Train the encoder with AdamW against per-conversation attention targets,
    one conversation per optimization step, cycling in corpus order."""
    if not corpus.conversations:
        raise ValueError("cannot train on an empty corpus")
    expected_width = d_model_for(store.dim)
    if expected_width != cfg.d_model:
        raise ValueError(f"store dimension {store.dim} implies d_model "
                         f"{expected_width}, config has {cfg.d_model}")
    for conv in corpus.conversations:
        if len(conv.utterances) > cfg.max_len:
            raise ValueError(f"conversation {conv.conversation_id!r} has "
                             f"{len(conv.utterances)} utterances, exceeding "
                             f"max_len {cfg.max_len}")
    batches = [(combined, pairing.build_target(conv))
               for (_, combined), conv in
               zip(conversation_inputs(corpus, store, head), corpus.conversations)]
    model = CausalityModel.init(cfg)
    optimizer = AdamW(lr=opt.lr, betas=opt.betas, eps=opt.eps,
                      weight_decay=opt.weight_decay)
    rng = np.random.default_rng(opt.seed)
    for step in range(opt.steps):
        combined, target = batches[step % len(batches)]
        loss, grads = loss_and_grads(model, combined, target, training=True, rng=rng)
        optimizer.step(model.params, grads)
        if callback is not None:
            callback(step, loss)
        if (step + 1) % 500 == 0:
            logger.debug("encoder step %d: loss %.6g", step + 1, loss)
    return model


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------

def save_model(model: CausalityModel, path: str | Path, *,
               seed: int | None = None, steps: int | None = None) -> None:
    from .emotion_head import _encode_array
    from .corpus import canonical_json_bytes

    doc = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "causality_model",
        "config": asdict(model.config),
        "seed": seed,
        "steps": steps,
        "params": {name: _encode_array(arr) for name, arr in sorted(model.params.items())},
    }
    Path(path).write_bytes(canonical_json_bytes(doc) + b"\n")


def load_model(path: str | Path) -> CausalityModel:
    from .emotion_head import _decode_array

    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"malformed model checkpoint: {exc.msg}") from None
    if doc.get("kind") != "causality_model":
        raise CheckpointError(f"not a causality model checkpoint: kind={doc.get('kind')!r}")
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version "
                              f"{doc.get('format_version')!r}")
    raw_cfg = doc.get("config")
    if not isinstance(raw_cfg, dict):
        raise CheckpointError("model checkpoint missing config")
    try:
        cfg = EncoderConfig(**raw_cfg)
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid encoder config in checkpoint: {exc}") from None
    raw_params = doc.get("params")
    if not isinstance(raw_params, dict):
        raise CheckpointError("model checkpoint missing params")
    params = {name: _decode_array(entry, name) for name, entry in raw_params.items()}
    try:
        return CausalityModel(cfg, params)
    except ValueError as exc:
        raise CheckpointError(str(exc)) from None
