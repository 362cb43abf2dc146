"""Single-shot text+spectrogram classifier.

A CLS token, the transcript tokens and the 64 spectrogram-image patches are
embedded into one sequence (content + stream-specific position + segment
embedding) and encoded by pre-layernorm self-attention blocks. The final CLS
state goes through a dense layer with an independent sigmoid per class.

Forward and backward passes are written out in numpy so every gradient is
exact and checkable by finite differences.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import erf

from .audiodsp import IMAGE_SIZE, SpectroImage
from .datamodel import N_CLASSES, MediaRecord, Modality, ScoreMatrix, Taxonomy, record_taxonomy
from .text import build_vocab, tokenize

log = logging.getLogger(__name__)

PAD, UNK = "[PAD]", "[UNK]"
PAD_ID, UNK_ID = 0, 1
LN_EPS = 1e-5


class NumericFailure(FloatingPointError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_text_tokens: int = 32
    patch_size: int = 8
    n_classes: int = N_CLASSES
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if IMAGE_SIZE % self.patch_size:
            raise ValueError(f"patch_size must divide {IMAGE_SIZE}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def n_patches(self) -> int:
        return (IMAGE_SIZE // self.patch_size) ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch_size ** 2


@dataclass
class FusionInput:
    token_ids: np.ndarray  # [T] int
    text_mask: np.ndarray  # [T] bool
    patches: np.ndarray  # [n_patches, patch_size**2]


@dataclass
class Batch:
    token_ids: np.ndarray  # [B, T]
    text_mask: np.ndarray  # [B, T]
    patches: np.ndarray  # [B, P, patch_dim]

    @classmethod
    def stack(cls, inputs: Sequence[FusionInput]) -> "Batch":
        return cls(np.stack([i.token_ids for i in inputs]), np.stack([i.text_mask for i in inputs]),
                   np.stack([i.patches for i in inputs]))

    def __len__(self) -> int:
        return self.token_ids.shape[0]


@dataclass
class FusionModel:
    config: FusionConfig
    vocab: dict[str, int]
    params: dict[str, np.ndarray]
    taxonomy: Taxonomy = Taxonomy.iemocap

    def copy(self) -> "FusionModel":
        return FusionModel(self.config, dict(self.vocab), {k: v.copy() for k, v in self.params.items()},
                           self.taxonomy)


# -- parameters ------------------------------------------------------------------

def param_shapes(cfg: FusionConfig, vocab_size: int) -> dict[str, tuple[int, ...]]:
    D, F = cfg.d_model, cfg.d_ff
    shapes = {
        "tok_emb": (vocab_size, D),
        "cls": (D,),
        "patch_w": (cfg.patch_dim, D),
        "patch_b": (D,),
        "pos_text": (cfg.max_text_tokens + 1, D),
        "pos_patch": (cfg.n_patches, D),
        "seg": (2, D),
    }
    for i in range(cfg.n_layers):
        shapes.update({
            f"l{i}.ln1_g": (D,), f"l{i}.ln1_b": (D,),
            f"l{i}.wq": (D, D), f"l{i}.wk": (D, D), f"l{i}.wv": (D, D),
            f"l{i}.wo": (D, D), f"l{i}.bo": (D,),
            f"l{i}.ln2_g": (D,), f"l{i}.ln2_b": (D,),
            f"l{i}.w1": (D, F), f"l{i}.b1": (F,), f"l{i}.w2": (F, D), f"l{i}.b2": (D,),
        })
    shapes.update({"lnf_g": (D,), "lnf_b": (D,), "head_w": (D, cfg.n_classes), "head_b": (cfg.n_classes,)})
    return shapes


def init_model(cfg: FusionConfig, vocab: dict[str, int], taxonomy: Taxonomy = Taxonomy.iemocap) -> FusionModel:
    """Gaussian(0, 0.02) weights, zero biases, unit layernorm gains."""
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name, shape in param_shapes(cfg, len(vocab)).items():
        leaf = name.split(".")[-1]
        if leaf.endswith("_g"):
            params[name] = np.ones(shape)
        elif leaf.startswith("b") or leaf.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            params[name] = 0.02 * rng.standard_normal(shape)
    return FusionModel(cfg, dict(vocab), params, Taxonomy(taxonomy))


# -- input construction -------------------------------------------------------------

def build_fusion_vocab(records: Sequence[MediaRecord], min_count: int = 2) -> dict[str, int]:
    return build_vocab((r.transcript for r in records), min_count=min_count, specials=(PAD, UNK))


def image_patches(pixels: np.ndarray, patch_size: int) -> np.ndarray:
    """Non-overlapping square patches in row-major patch order, each flattened row-major."""
    H, W = pixels.shape
    g = pixels.reshape(H // patch_size, patch_size, W // patch_size, patch_size)
    return g.transpose(0, 2, 1, 3).reshape(-1, patch_size * patch_size)


def build_input(record: MediaRecord, image: SpectroImage, vocab: dict[str, int],
                cfg: FusionConfig = FusionConfig()) -> FusionInput:
    px = np.asarray(image.pixels, dtype=np.float64)
    if px.shape != (IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError(f"image must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {px.shape}")
    toks = tokenize(record.transcript)[: cfg.max_text_tokens]
    ids = np.full(cfg.max_text_tokens, PAD_ID, dtype=np.int64)
    ids[: len(toks)] = [vocab.get(t, UNK_ID) for t in toks]
    mask = np.zeros(cfg.max_text_tokens, dtype=bool)
    mask[: len(toks)] = True
    return FusionInput(ids, mask, image_patches(px, cfg.patch_size))


# -- building blocks ------------------------------------------------------------------

def _ln_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv, g)


def _ln_bwd(dy, cache):
    xhat, inv, g = cache
    red = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=red)
    db = dy.sum(axis=red)
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(u):
    return 0.5 * u * (1.0 + erf(u / _SQRT2))


def gelu_grad(u):
    return 0.5 * (1.0 + erf(u / _SQRT2)) + u * _INV_SQRT_2PI * np.exp(-0.5 * u * u)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _split_heads(x, H):
    B, S, D = x.shape
    return x.reshape(B, S, H, D // H).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, H, S, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, S, H * dh)


# -- forward / backward ---------------------------------------------------------------

@dataclass
class ForwardResult:
    logits: np.ndarray  # [B, 6]
    probs: np.ndarray  # [B, 6], independent sigmoids
    attentions: list[np.ndarray]  # per layer [B, H, S, S]
    cache: dict = field(repr=False, default_factory=dict)


def forward(model: FusionModel, batch: Batch | FusionInput, *, rng: np.random.Generator | None = None,
            keep_cache: bool = False) -> ForwardResult:
    """Run the encoder. Dropout is active only when `rng` is given and config.dropout > 0."""
    if isinstance(batch, FusionInput):
        batch = Batch.stack([batch])
    cfg, p = model.config, model.params
    ids, tmask, patches = batch.token_ids, batch.text_mask.astype(bool), batch.patches
    B, T = ids.shape
    if T > cfg.max_text_tokens:
        raise ValueError(f"{T} text positions exceed max_text_tokens={cfg.max_text_tokens}")
    if patches.shape[1:] != (cfg.n_patches, cfg.patch_dim):
        raise ValueError(f"patches must be [B, {cfg.n_patches}, {cfg.patch_dim}]")
    H = cfg.n_heads
    dh = cfg.d_model // H
    scale = 1.0 / math.sqrt(dh)
    drop = cfg.dropout if rng is not None else 0.0

    cls_row = p["cls"] + p["pos_text"][0] + p["seg"][0]
    text = p["tok_emb"][ids] + p["pos_text"][1:T + 1] + p["seg"][0]
    vis = patches @ p["patch_w"] + p["patch_b"] + p["pos_patch"] + p["seg"][1]
    x = np.concatenate([np.broadcast_to(cls_row, (B, 1, cfg.d_model)), text, vis], axis=1)
    valid = np.concatenate([np.ones((B, 1), bool), tmask, np.ones((B, cfg.n_patches), bool)], axis=1)
    key_ok = valid[:, None, None, :]
    query_ok = valid[:, None, :, None]

    layers = []
    attentions = []
    for i in range(cfg.n_layers):
        L = lambda k: p[f"l{i}.{k}"]  # noqa: E731
        h, ln1 = _ln_fwd(x, L("ln1_g"), L("ln1_b"))
        q = _split_heads(h @ L("wq"), H)
        k = _split_heads(h @ L("wk"), H)
        v = _split_heads(h @ L("wv"), H)
        scores = np.where(key_ok, (q @ k.transpose(0, 1, 3, 2)) * scale, -np.inf)
        scores = scores - scores.max(axis=-1, keepdims=True)
        att = np.exp(scores)
        att /= att.sum(axis=-1, keepdims=True)
        att = np.where(query_ok, att, 0.0)
        ctx = _merge_heads(att @ v)
        o = ctx @ L("wo") + L("bo")
        m1 = _dropout_mask(rng, o.shape, drop)
        x1 = x + (o * m1 if m1 is not None else o)
        h2, ln2 = _ln_fwd(x1, L("ln2_g"), L("ln2_b"))
        u = h2 @ L("w1") + L("b1")
        a = gelu(u)
        f = a @ L("w2") + L("b2")
        m2 = _dropout_mask(rng, f.shape, drop)
        x2 = x1 + (f * m2 if m2 is not None else f)
        if not np.all(np.isfinite(x2)):
            raise NumericFailure(f"non-finite activations in layer {i}")
        attentions.append(att)
        if keep_cache:
            layers.append(dict(x=x, h=h, ln1=ln1, q=q, k=k, v=v, att=att, ctx=ctx, m1=m1,
                               h2=h2, ln2=ln2, u=u, a=a, m2=m2))
        x = x2

    c, lnf = _ln_fwd(x[:, 0], p["lnf_g"], p["lnf_b"])
    logits = c @ p["head_w"] + p["head_b"]
    if not np.all(np.isfinite(logits)):
        raise NumericFailure(f"non-finite logits after layer {cfg.n_layers - 1}")
    cache = {}
    if keep_cache:
        cache = dict(batch=batch, layers=layers, c=c, lnf=lnf, S=x.shape[1])
    return ForwardResult(logits, sigmoid(logits), attentions, cache)


def _dropout_mask(rng, shape, rate):
    if rng is None or rate <= 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def bce_with_logits(logits: np.ndarray, target: np.ndarray) -> float:
    """Mean over classes (and batch) of max(z,0) - z*y + log(1 + exp(-|z|))."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def bce_from_probs(probs: np.ndarray, target: np.ndarray) -> float:
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log1p(-p))))


def loss(model: FusionModel, batch: Batch | FusionInput, targets: np.ndarray) -> float:
    return bce_with_logits(forward(model, batch).logits, np.atleast_2d(targets))


def backward(model: FusionModel, batch: Batch | FusionInput, targets: np.ndarray, *,
             rng: np.random.Generator | None = None) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients for every parameter (same keys and shapes as model.params)."""
    if isinstance(batch, FusionInput):
        batch = Batch.stack([batch])
    Y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    res = forward(model, batch, rng=rng, keep_cache=True)
    cfg, p, cache = model.config, model.params, res.cache
    B, T = batch.token_ids.shape
    H = cfg.n_heads
    scale = 1.0 / math.sqrt(cfg.d_model // H)
    grads = {k: np.zeros_like(v) for k, v in p.items()}

    value = bce_with_logits(res.logits, Y)
    dlogits = (res.probs - Y) / Y.size
    grads["head_w"] = cache["c"].T @ dlogits
    grads["head_b"] = dlogits.sum(axis=0)
    dc = dlogits @ p["head_w"].T
    dcls_state, grads["lnf_g"], grads["lnf_b"] = _ln_bwd(dc, cache["lnf"])
    dx = np.zeros((B, cache["S"], cfg.d_model))
    dx[:, 0] = dcls_state

    for i in reversed(range(cfg.n_layers)):
        c_ = cache["layers"][i]
        pre = f"l{i}."
        # feed-forward branch
        df = dx if c_["m2"] is None else dx * c_["m2"]
        grads[pre + "w2"] = np.einsum("bsf,bsd->fd", c_["a"], df)
        grads[pre + "b2"] = df.sum(axis=(0, 1))
        du = (df @ p[pre + "w2"].T) * gelu_grad(c_["u"])
        grads[pre + "w1"] = np.einsum("bsd,bsf->df", c_["h2"], du)
        grads[pre + "b1"] = du.sum(axis=(0, 1))
        dh2 = du @ p[pre + "w1"].T
        dln, grads[pre + "ln2_g"], grads[pre + "ln2_b"] = _ln_bwd(dh2, c_["ln2"])
        dx1 = dx + dln
        # attention branch
        do = dx1 if c_["m1"] is None else dx1 * c_["m1"]
        grads[pre + "wo"] = np.einsum("bsi,bsj->ij", c_["ctx"], do)
        grads[pre + "bo"] = do.sum(axis=(0, 1))
        dctx = _split_heads(do @ p[pre + "wo"].T, H)
        att = c_["att"]
        datt = dctx @ c_["v"].transpose(0, 1, 3, 2)
        dv = att.transpose(0, 1, 3, 2) @ dctx
        dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True)) * scale
        dq = dscores @ c_["k"]
        dk = dscores.transpose(0, 1, 3, 2) @ c_["q"]
        dq, dk, dv = _merge_heads(dq), _merge_heads(dk), _merge_heads(dv)
        h = c_["h"]
        grads[pre + "wq"] = np.einsum("bsi,bsj->ij", h, dq)
        grads[pre + "wk"] = np.einsum("bsi,bsj->ij", h, dk)
        grads[pre + "wv"] = np.einsum("bsi,bsj->ij", h, dv)
        dh = dq @ p[pre + "wq"].T + dk @ p[pre + "wk"].T + dv @ p[pre + "wv"].T
        dln, grads[pre + "ln1_g"], grads[pre + "ln1_b"] = _ln_bwd(dh, c_["ln1"])
        dx = dx1 + dln

    d_cls = dx[:, 0].sum(axis=0)
    grads["cls"] = d_cls
    d_text = dx[:, 1:T + 1]
    d_vis = dx[:, T + 1:]
    grads["pos_text"][0] = d_cls
    grads["pos_text"][1:T + 1] = d_text.sum(axis=0)
    np.add.at(grads["tok_emb"], batch.token_ids.reshape(-1), d_text.reshape(-1, cfg.d_model))
    grads["seg"][0] = d_cls + d_text.sum(axis=(0, 1))
    grads["seg"][1] = d_vis.sum(axis=(0, 1))
    grads["patch_w"] = np.einsum("bpi,bpd->id", batch.patches, d_vis)
    grads["patch_b"] = d_vis.sum(axis=(0, 1))
    grads["pos_patch"] = d_vis.sum(axis=0)
    return value, grads


# -- training ----------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch: int = 16
    epochs: int = 20
    seed: int = 0


@dataclass
class TrainState:
    model: FusionModel
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int
    rng: np.random.Generator
    history: list[dict] = field(default_factory=list)
    best_val_accuracy: float = -1.0
    best_epoch: int = 0


def adam_step(state: TrainState, grads: dict[str, np.ndarray], h: TrainHyper) -> None:
    state.step += 1
    b1c = 1.0 - h.beta1 ** state.step
    b2c = 1.0 - h.beta2 ** state.step
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= h.beta1
        m += (1.0 - h.beta1) * g
        v *= h.beta2
        v += (1.0 - h.beta2) * g * g
        state.model.params[k] -= h.lr * (m / b1c) / (np.sqrt(v / b2c) + h.eps)


def predict_probs(model: FusionModel, inputs: Sequence[FusionInput], batch_size: int = 64) -> np.ndarray:
    """Raw per-class sigmoid outputs, shape [n, 6]."""
    out = np.zeros((len(inputs), model.config.n_classes))
    for s in range(0, len(inputs), batch_size):
        out[s:s + batch_size] = forward(model, Batch.stack(inputs[s:s + batch_size])).probs
    return out


def accuracy(model: FusionModel, inputs: Sequence[FusionInput], labels: Sequence[int]) -> float:
    if not len(inputs):
        return float("nan")
    return float(np.mean(np.argmax(predict_probs(model, inputs), axis=1) == np.asarray(labels)))


def train(train_inputs: Sequence[FusionInput], train_labels: Sequence[int],
          val_inputs: Sequence[FusionInput], val_labels: Sequence[int],
          config: FusionConfig, vocab: dict[str, int], hyper: TrainHyper = TrainHyper(),
          taxonomy: Taxonomy = Taxonomy.iemocap) -> TrainState:
    """Adam on mean BCE; returns the state holding the best-validation-accuracy model."""
    if not len(train_inputs) or not len(val_inputs):
        raise ValueError("train and validation splits must be nonempty")
    model = init_model(config, vocab, taxonomy)
    state = TrainState(model, {k: np.zeros_like(v) for k, v in model.params.items()},
                       {k: np.zeros_like(v) for k, v in model.params.items()}, 0,
                       np.random.default_rng(hyper.seed))
    best = model.copy()
    Y = np.eye(config.n_classes)[np.asarray(train_labels, dtype=int)]
    n = len(train_inputs)
    drop_rng = state.rng if config.dropout > 0 else None
    for epoch in range(1, hyper.epochs + 1):
        order = state.rng.permutation(n)
        losses, sizes = [], []
        for s in range(0, n, hyper.batch):
            idx = order[s:s + hyper.batch]
            value, grads = backward(state.model, Batch.stack([train_inputs[j] for j in idx]), Y[idx],
                                    rng=drop_rng)
            if not math.isfinite(value):
                raise NumericFailure(f"loss became non-finite at step {state.step + 1}")
            adam_step(state, grads, hyper)
            losses.append(value)
            sizes.append(len(idx))
        val_acc = accuracy(state.model, val_inputs, val_labels)
        row = {"epoch": epoch, "train_loss": float(np.average(losses, weights=sizes)), "val_accuracy": val_acc}
        state.history.append(row)
        log.info("epoch %d loss %.4f val_acc %.4f", epoch, row["train_loss"], val_acc)
        if val_acc > state.best_val_accuracy:
            state.best_val_accuracy, state.best_epoch = val_acc, epoch
            best = state.model.copy()
    if hyper.epochs == 0:
        state.best_val_accuracy = accuracy(state.model, val_inputs, val_labels)
    state.model = best
    return state


def predict(model: FusionModel, ids: Sequence[str], inputs: Sequence[FusionInput]) -> tuple[ScoreMatrix, np.ndarray]:
    """Fused ScoreMatrix (sigmoids divided by their sum) and the raw sigmoid outputs [6, n]."""
    raw = predict_probs(model, inputs).T if len(inputs) else np.zeros((model.config.n_classes, 0))
    fused = raw / raw.sum(axis=0, keepdims=True) if raw.size else raw
    return ScoreMatrix(fused, Modality.fused, tuple(ids), model.taxonomy), raw


# -- checkpoints ---------------------------------------------------------------------------

def save_checkpoint(model: FusionModel, directory: str | Path, *, step: int = 0,
                    val_accuracy: float | None = None) -> None:
    d = Path(directory)
    (d / "tensors").mkdir(parents=True, exist_ok=True)
    for name, arr in model.params.items():
        with open(d / "tensors" / f"{name}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row in np.atleast_2d(arr):
                w.writerow([repr(float(x)) for x in row])
    meta = {
        "config": asdict(model.config),
        "taxonomy": model.taxonomy.value,
        "shapes": {k: list(v.shape) for k, v in model.params.items()},
        "step": step,
        "val_accuracy": val_accuracy,
        "vocab": model.vocab,
    }
    (d / "checkpoint.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")


def load_checkpoint(directory: str | Path) -> FusionModel:
    d = Path(directory)
    meta = json.loads((d / "checkpoint.json").read_text(encoding="utf-8"))
    cfg = FusionConfig(**meta["config"])
    params = {}
    for name, shape in meta["shapes"].items():
        with open(d / "tensors" / f"{name}.csv", encoding="utf-8", newline="") as fh:
            arr = np.array([[float(x) for x in row] for row in csv.reader(fh)], dtype=np.float64)
        params[name] = arr.reshape(shape)
    return FusionModel(cfg, meta["vocab"], params, Taxonomy(meta["taxonomy"]))


def save_metrics_trace(history: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_accuracy"])
        for row in history:
            w.writerow([row["epoch"], format(row["train_loss"], ".12g"), format(row["val_accuracy"], ".12g")])
