"""Transformer building blocks over named float64 parameter dicts.

Parameters live in plain ``dict[str, torch.Tensor]`` so they can be checkpointed,
gradient-checked and updated by the hand-written Adam below. torch supplies the tensor
arithmetic and reverse-mode differentiation.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import torch

DTYPE = torch.float64
Params = dict[str, torch.Tensor]


class ShapeError(ValueError):
    pass


class LengthError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 256
    n_layers: int = 2
    n_dec_layers: int = 2
    max_len: int = 80
    dropout_rate: float = 0.1
    src_vocab: int = 1
    tgt_vocab: int = 1

    def __post_init__(self):
        for name in ("d_model", "n_heads", "d_ff", "max_len", "src_vocab", "tgt_vocab"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_layers < 0 or self.n_dec_layers < 0:
            raise ValueError("layer counts must be >= 0")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- initialisation

def _uniform(gen: torch.Generator, shape, bound: float) -> torch.Tensor:
    return (torch.rand(shape, generator=gen, dtype=DTYPE) * 2 - 1) * bound


def _init_linear(p: Params, name: str, n_in: int, n_out: int, gen: torch.Generator) -> None:
    p[f"{name}.w"] = _uniform(gen, (n_in, n_out), math.sqrt(6.0 / (n_in + n_out)))
    p[f"{name}.b"] = torch.zeros(n_out, dtype=DTYPE)


def _init_norm(p: Params, name: str, d: int) -> None:
    p[f"{name}.g"] = torch.ones(d, dtype=DTYPE)
    p[f"{name}.b"] = torch.zeros(d, dtype=DTYPE)


def _init_attention(p: Params, name: str, d: int, gen: torch.Generator) -> None:
    for proj in ("q", "k", "v", "o"):
        _init_linear(p, f"{name}.{proj}", d, d, gen)


def init_encoder(cfg: ModelConfig, gen: torch.Generator, prefix: str = "enc") -> Params:
    p: Params = {}
    p[f"{prefix}.embed"] = torch.randn((cfg.src_vocab, cfg.d_model), generator=gen, dtype=DTYPE) * cfg.d_model ** -0.5
    for i in range(cfg.n_layers):
        name = f"{prefix}.{i}"
        _init_norm(p, f"{name}.ln1", cfg.d_model)
        _init_attention(p, f"{name}.att", cfg.d_model, gen)
        _init_norm(p, f"{name}.ln2", cfg.d_model)
        _init_linear(p, f"{name}.ff1", cfg.d_model, cfg.d_ff, gen)
        _init_linear(p, f"{name}.ff2", cfg.d_ff, cfg.d_model, gen)
    if cfg.n_layers:
        _init_norm(p, f"{prefix}.ln", cfg.d_model)
    return p


def init_decoder(cfg: ModelConfig, gen: torch.Generator, prefix: str = "dec") -> Params:
    p: Params = {}
    p[f"{prefix}.embed"] = torch.randn((cfg.tgt_vocab, cfg.d_model), generator=gen, dtype=DTYPE) * cfg.d_model ** -0.5
    for i in range(cfg.n_dec_layers):
        name = f"{prefix}.{i}"
        _init_norm(p, f"{name}.ln1", cfg.d_model)
        _init_attention(p, f"{name}.self", cfg.d_model, gen)
        _init_norm(p, f"{name}.ln2", cfg.d_model)
        _init_attention(p, f"{name}.cross", cfg.d_model, gen)
        _init_norm(p, f"{name}.ln3", cfg.d_model)
        _init_linear(p, f"{name}.ff1", cfg.d_model, cfg.d_ff, gen)
        _init_linear(p, f"{name}.ff2", cfg.d_ff, cfg.d_model, gen)
    if cfg.n_dec_layers:
        _init_norm(p, f"{prefix}.ln", cfg.d_model)
    _init_linear(p, f"{prefix}.out", cfg.d_model, cfg.tgt_vocab, gen)
    return p


def init_output(p: Params, name: str, d_model: int, n_out: int, gen: torch.Generator) -> Params:
    _init_linear(p, name, d_model, n_out, gen)
    return p


def requires_grad(params: Params) -> Params:
    for t in params.values():
        t.requires_grad_(True)
    return params


# ---------------------------------------------------------------- layers

class Dropout:
    """Inverted dropout driven by an explicit generator; identity when ``gen`` is None."""

    def __init__(self, rate: float, gen: torch.Generator | None):
        self.rate = rate
        self.gen = gen

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        if self.gen is None or self.rate == 0.0:
            return x
        keep = torch.rand(x.shape, generator=self.gen, dtype=DTYPE) >= self.rate
        return x * keep / (1.0 - self.rate)


NO_DROPOUT = Dropout(0.0, None)


def linear(x: torch.Tensor, p: Mapping[str, torch.Tensor], name: str) -> torch.Tensor:
    return x @ p[f"{name}.w"] + p[f"{name}.b"]


def layer_norm(x: torch.Tensor, p: Mapping[str, torch.Tensor], name: str, eps: float = 1e-6) -> torch.Tensor:
    mu = x.mean(-1, keepdim=True)
    var = ((x - mu) ** 2).mean(-1, keepdim=True)
    return (x - mu) / torch.sqrt(var + eps) * p[f"{name}.g"] + p[f"{name}.b"]


def softmax(scores: torch.Tensor, dim: int = -1) -> torch.Tensor:
    return torch.softmax(scores, dim=dim)


def attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
              mask: torch.Tensor | None = None) -> tuple[torch.Tensor, torch.Tensor]:
    """Scaled dot-product attention.

    ``mask`` is boolean and broadcastable to the (..., Lq, Lk) score matrix; True marks a
    key the query may attend to. Returns (output, attention weights). A query row with
    no permitted key yields zero weights.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2] or q.shape[:-2] != k.shape[:-2]:
        raise ShapeError(f"incompatible shapes q={tuple(q.shape)} k={tuple(k.shape)} v={tuple(v.shape)}")
    scores = q @ k.transpose(-1, -2) / math.sqrt(q.shape[-1])
    if mask is not None:
        try:
            mask = torch.broadcast_to(mask, scores.shape)
        except RuntimeError as exc:
            raise ShapeError(f"mask {tuple(mask.shape)} not broadcastable to {tuple(scores.shape)}") from exc
        scores = scores.masked_fill(~mask, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        weights = torch.nan_to_num(weights, nan=0.0)
    else:
        weights = torch.softmax(scores, dim=-1)
    return weights @ v, weights


def multi_head(p: Mapping[str, torch.Tensor], name: str, xq: torch.Tensor, xkv: torch.Tensor,
               mask: torch.Tensor | None, n_heads: int, drop: Dropout = NO_DROPOUT) -> torch.Tensor:
    *lead, lq, d = xq.shape
    lk = xkv.shape[-2]
    dh = d // n_heads

    def split(t, length):
        return t.reshape(*lead, length, n_heads, dh).transpose(-2, -3)

    q = split(linear(xq, p, f"{name}.q"), lq)
    k = split(linear(xkv, p, f"{name}.k"), lk)
    v = split(linear(xkv, p, f"{name}.v"), lk)
    if mask is not None:
        mask = mask.unsqueeze(-3)  # broadcast over heads
    out, _ = attention(q, k, v, mask)
    out = out.transpose(-2, -3).reshape(*lead, lq, d)
    return drop(linear(out, p, f"{name}.o"))


def feed_forward(p: Mapping[str, torch.Tensor], name: str, x: torch.Tensor, drop: Dropout = NO_DROPOUT) -> torch.Tensor:
    return drop(linear(torch.relu(linear(x, p, f"{name}.ff1")), p, f"{name}.ff2"))


def positional_encoding(length: int, d: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=DTYPE)[:, None]
    i = torch.arange(0, d, 2, dtype=DTYPE)[None, :]
    angle = pos / torch.pow(torch.tensor(10000.0, dtype=DTYPE), i / d)
    pe = torch.zeros(length, d, dtype=DTYPE)
    pe[:, 0::2] = torch.sin(angle)
    pe[:, 1::2] = torch.cos(angle[:, : d // 2])
    return pe


def embed(p: Mapping[str, torch.Tensor], name: str, ids: torch.Tensor, cfg: ModelConfig) -> torch.Tensor:
    length = ids.shape[-1]
    if length > cfg.max_len:
        raise LengthError(f"sequence length {length} exceeds max_len {cfg.max_len}")
    table = p[name]
    if ids.numel() and (int(ids.max()) >= table.shape[0] or int(ids.min()) < 0):
        raise ShapeError("token id out of vocabulary range")
    return table[ids] * math.sqrt(cfg.d_model) + positional_encoding(length, cfg.d_model)


def encoder_forward(cfg: ModelConfig, p: Mapping[str, torch.Tensor], ids: torch.Tensor,
                    pad_mask: torch.Tensor | None = None, gen: torch.Generator | None = None,
                    prefix: str = "enc") -> torch.Tensor:
    """Pre-norm encoder stack. ``ids`` is (L,) or (B, L); ``pad_mask`` is True at padding."""
    drop = Dropout(cfg.dropout_rate, gen)
    x = drop(embed(p, f"{prefix}.embed", ids, cfg))
    mask = None if pad_mask is None else (~pad_mask).unsqueeze(-2)
    for i in range(cfg.n_layers):
        name = f"{prefix}.{i}"
        x = x + multi_head(p, f"{name}.att", layer_norm(x, p, f"{name}.ln1"),
                           layer_norm(x, p, f"{name}.ln1"), mask, cfg.n_heads, drop)
        x = x + feed_forward(p, name, layer_norm(x, p, f"{name}.ln2"), drop)
    if cfg.n_layers:
        x = layer_norm(x, p, f"{prefix}.ln")
    return x


def causal_mask(length: int) -> torch.Tensor:
    return torch.tril(torch.ones(length, length, dtype=torch.bool))


def decoder_forward(cfg: ModelConfig, p: Mapping[str, torch.Tensor], ids: torch.Tensor,
                    memory: torch.Tensor, src_pad_mask: torch.Tensor | None = None,
                    gen: torch.Generator | None = None, prefix: str = "dec") -> torch.Tensor:
    """Pre-norm decoder stack with causal self-attention; returns hidden states."""
    drop = Dropout(cfg.dropout_rate, gen)
    x = drop(embed(p, f"{prefix}.embed", ids, cfg))
    self_mask = causal_mask(ids.shape[-1])
    cross_mask = None if src_pad_mask is None else (~src_pad_mask).unsqueeze(-2)
    for i in range(cfg.n_dec_layers):
        name = f"{prefix}.{i}"
        h = layer_norm(x, p, f"{name}.ln1")
        x = x + multi_head(p, f"{name}.self", h, h, self_mask, cfg.n_heads, drop)
        x = x + multi_head(p, f"{name}.cross", layer_norm(x, p, f"{name}.ln2"), memory,
                           cross_mask, cfg.n_heads, drop)
        x = x + feed_forward(p, name, layer_norm(x, p, f"{name}.ln3"), drop)
    if cfg.n_dec_layers:
        x = layer_norm(x, p, f"{prefix}.ln")
    return x


# ---------------------------------------------------------------- objective and gradients

def cross_entropy(logits: torch.Tensor, targets: torch.Tensor, ignore_id: int | None = None,
                  smoothing: float = 0.0) -> torch.Tensor:
    """Mean token negative log-likelihood over non-ignored positions."""
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(f"logits {tuple(logits.shape)} do not match targets {tuple(targets.shape)}")
    logp = torch.log_softmax(logits, dim=-1).reshape(-1, logits.shape[-1])
    flat = targets.reshape(-1)
    keep = torch.ones_like(flat, dtype=torch.bool) if ignore_id is None else flat != ignore_id
    n = int(keep.sum())
    if n == 0:
        raise ValueError("every position is ignored; mean loss undefined")
    logp = logp[keep]
    nll = -logp.gather(1, flat[keep][:, None]).squeeze(1)
    if smoothing:
        nll = (1.0 - smoothing) * nll - smoothing * logp.mean(-1)
    return nll.sum() / n


def backward(loss: torch.Tensor, params: Params) -> Params:
    """Gradients of ``loss`` for every parameter (zeros where it does not depend on one)."""
    names = list(params)
    if not loss.requires_grad:
        return {k: torch.zeros_like(params[k]) for k in names}
    grads = torch.autograd.grad(loss, [params[k] for k in names], allow_unused=True)
    return {k: (torch.zeros_like(params[k]) if g is None else g) for k, g in zip(names, grads)}


def gradcheck(loss_fn: Callable[[Params], torch.Tensor], params: Params, eps: float = 1e-5,
              floor: float = 1e-5) -> float:
    """Worst per-parameter relative error between backward() and central differences.

    For each named tensor the error is ||g_backward - g_numeric|| / max(||g_backward||,
    ||g_numeric||, floor).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must be in [1e-7, 1e-3]")
    if not params:
        return 0.0
    requires_grad(params)
    analytic = backward(loss_fn(params), params)
    worst = 0.0
    with torch.no_grad():
        for name, t in params.items():
            flat = t.view(-1)
            numeric = torch.zeros_like(flat)
            for j in range(flat.numel()):
                orig = flat[j].item()
                flat[j] = orig + eps
                up = loss_fn(params).item()
                flat[j] = orig - eps
                down = loss_fn(params).item()
                flat[j] = orig
                numeric[j] = (up - down) / (2 * eps)
            a = analytic[name].reshape(-1)
            denom = max(a.norm().item(), numeric.norm().item(), floor)
            worst = max(worst, (a - numeric).norm().item() / denom)
    return worst


# ---------------------------------------------------------------- optimisation

@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    step: int = 0
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)


def adam_step(params: Params, grads: Mapping[str, torch.Tensor], state: AdamState,
              lr: float | None = None) -> AdamState:
    """Bias-corrected Adam, in place on ``params``."""
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name} has shape {tuple(g.shape)}")
        if not torch.isfinite(g).all():
            raise TrainingError(f"non-finite gradient for {name} at step {state.step + 1}")
    lr = state.lr if lr is None else lr
    state.step += 1
    bc1 = 1 - state.beta1 ** state.step
    bc2 = 1 - state.beta2 ** state.step
    with torch.no_grad():
        for name, g in grads.items():
            m = state.m.setdefault(name, torch.zeros_like(g))
            v = state.v.setdefault(name, torch.zeros_like(g))
            m.mul_(state.beta1).add_(g, alpha=1 - state.beta1)
            v.mul_(state.beta2).addcmul_(g, g, value=1 - state.beta2)
            denom = (v / bc2).sqrt_().add_(state.eps)
            params[name].sub_(lr * (m / bc1) / denom)
    return state


def warmup_lr(step: int, base_lr: float, warmup: int) -> float:
    """Linear warmup to ``base_lr`` over ``warmup`` steps, constant afterwards (step is 1-based)."""
    if warmup <= 0:
        return base_lr
    return base_lr * min(1.0, step / warmup)


# ---------------------------------------------------------------- checkpoints

MAGIC = b"HOMONMT\x00"
FORMAT_VERSION = 1


def save_checkpoint(path, meta: dict, params: Mapping[str, torch.Tensor]) -> None:
    """Magic, version, JSON metadata block, then named little-endian float64 tensors."""
    meta_bytes = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            t = params[name].detach().to(DTYPE).contiguous()
            nb = name.encode("utf-8")
            fh.write(struct.pack("<HB", len(nb), t.dim()))
            fh.write(nb)
            fh.write(struct.pack(f"<{t.dim()}I", *t.shape))
            fh.write(t.numpy().astype("<f8", copy=False).tobytes())


def load_checkpoint(path, expected_shapes: Callable[[dict], Mapping[str, tuple]] | None = None) -> tuple[dict, Params]:
    import numpy as np

    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    off = len(MAGIC)
    version, meta_len = struct.unpack_from("<II", data, off)
    off += 8
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    meta = json.loads(data[off: off + meta_len].decode("utf-8"))
    off += meta_len
    (count,) = struct.unpack_from("<I", data, off)
    off += 4
    params: Params = {}
    for _ in range(count):
        name_len, ndim = struct.unpack_from("<HB", data, off)
        off += 3
        name = data[off: off + name_len].decode("utf-8")
        off += name_len
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        n = math.prod(shape)
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape)
        off += 8 * n
        params[name] = torch.from_numpy(arr.astype(np.float64))
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    if expected_shapes is not None:
        want = expected_shapes(meta)
        if set(want) != set(params):
            raise CheckpointError(f"{path}: parameter names do not match the config")
        for name, shape in want.items():
            if tuple(params[name].shape) != tuple(shape):
                raise CheckpointError(f"{path}: {name} has shape {tuple(params[name].shape)}, config implies {tuple(shape)}")
    return meta, params


# ---------------------------------------------------------------- training loop

@dataclass
class TrainConfig:
    steps: int = 2000
    batch_tokens: int = 1024
    lr: float = 3e-4
    warmup: int = 200
    eval_every: int = 200
    label_smoothing: float = 0.0
    heldout_fraction: float = 0.05

    def to_dict(self) -> dict:
        return asdict(self)


def length_batches(lengths, budget: int, rng) -> list[list[int]]:
    """Group indices of similar length so that padded size (count x longest) stays within ``budget``.

    ``lengths`` holds one combined token count per example; ``rng`` is a numpy Generator.
    """
    import numpy as np

    lengths = np.asarray(lengths)
    order = np.lexsort((rng.permutation(len(lengths)), lengths))
    batches, cur, longest = [], [], 0
    for i in order.tolist():
        new_longest = max(longest, int(lengths[i]))
        if cur and new_longest * (len(cur) + 1) > budget:
            batches.append(cur)
            cur, new_longest = [], int(lengths[i])
        cur.append(i)
        longest = new_longest
    if cur:
        batches.append(cur)
    return [batches[j] for j in rng.permutation(len(batches)).tolist()]


def train_loop(params: Params, epoch_batches: Callable[[int], list], loss_on: Callable,
               heldout_loss: Callable[[], float], cfg: TrainConfig, seed: int,
               log: Callable[[str], None] | None = None) -> tuple[Params, list[dict]]:
    """Adam with linear warmup; keeps the parameters with the best held-out loss.

    ``loss_on(batch, gen)`` returns a scalar loss for one batch in training mode.
    """
    gen = torch.Generator().manual_seed(seed)
    requires_grad(params)
    state = AdamState(lr=cfg.lr)
    best = {k: v.detach().clone() for k, v in params.items()}
    best_loss = math.inf
    history = []
    step, epoch = 0, 0
    while step < cfg.steps:
        for batch in epoch_batches(epoch):
            loss = loss_on(batch, gen)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite training loss at step {step + 1}")
            grads = backward(loss, params)
            adam_step(params, grads, state, warmup_lr(step + 1, cfg.lr, cfg.warmup))
            step += 1
            if step % cfg.eval_every == 0 or step == cfg.steps:
                with torch.no_grad():
                    held = heldout_loss()
                if not math.isfinite(held):
                    raise TrainingError(f"non-finite held-out loss at step {step}")
                history.append({"step": step, "train_loss": loss.item(), "heldout_loss": held})
                if log:
                    log(f"step {step} train {loss.item():.4f} heldout {held:.4f}")
                if held < best_loss:
                    best_loss = held
                    best = {k: v.detach().clone() for k, v in params.items()}
            if step >= cfg.steps:
                break
        epoch += 1
    return best, history
