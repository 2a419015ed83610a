"""Desk-scale transformer encoder-decoder: forward pass, label-smoothed loss,
Adam training with the inverse-square-root schedule, checkpointing, and
greedy/beam decoding.

Defaults are intentionally small (2 layers, 4 heads, d_model 64) so that the
full pretrain + fine-tune loop runs on a laptop CPU; the config accepts larger
sizes.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, asdict, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .subword import PAD_ID, BOS_ID, EOS_ID

CHECKPOINT_MAGIC = b"D2TCKPT1"


@dataclass(frozen=True)
class TransformerConfig:
    vocab_size: int
    layers: int = 2
    heads: int = 4
    d_model: int = 64
    d_ff: int = 256
    dropout: float = 0.1
    max_len: int = 256
    label_smoothing: float = 0.1
    tie_embeddings: bool = True

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must be divisible by heads")


@dataclass
class Batch:
    """Padded id matrices with boolean masks (True = real token).

    ``target`` includes BOS at position 0 and EOS at the end; the decoder
    input/label shift happens inside forward_loss."""

    source: torch.Tensor
    source_mask: torch.Tensor
    target: torch.Tensor
    target_mask: torch.Tensor


def make_batch(
    sources: Sequence[Sequence[int]], targets: Sequence[Sequence[int]]
) -> Batch:
    def pad(seqs):
        width = max(len(s) for s in seqs)
        ids = torch.full((len(seqs), width), PAD_ID, dtype=torch.long)
        mask = torch.zeros((len(seqs), width), dtype=torch.bool)
        for i, s in enumerate(seqs):
            ids[i, : len(s)] = torch.tensor(list(s), dtype=torch.long)
            mask[i, : len(s)] = True
        return ids, mask

    src, src_mask = pad(list(sources))
    tgt, tgt_mask = pad([[BOS_ID, *t, EOS_ID] for t in targets])
    return Batch(source=src, source_mask=src_mask, target=tgt, target_mask=tgt_mask)


def sinusoidal_positions(length: int, d_model: int, dtype=torch.float32) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    dim = torch.arange(0, d_model, 2, dtype=torch.float64)
    angle = pos / torch.pow(10000.0, dim / d_model)
    pe = torch.zeros(length, d_model, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(angle)
    pe[:, 1::2] = torch.cos(angle)
    return pe.to(dtype)


class MultiHeadAttention(nn.Module):
    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.heads = cfg.heads
        self.d_head = cfg.d_model // cfg.heads
        self.q = nn.Linear(cfg.d_model, cfg.d_model)
        self.k = nn.Linear(cfg.d_model, cfg.d_model)
        self.v = nn.Linear(cfg.d_model, cfg.d_model)
        self.out = nn.Linear(cfg.d_model, cfg.d_model)

    def forward(self, query, key, value, mask):
        # mask: (batch, q_len, k_len), True = attend.
        b, ql, _ = query.shape
        kl = key.shape[1]

        def split(x, L):
            return x.view(b, L, self.heads, self.d_head).transpose(1, 2)

        q = split(self.q(query), ql)
        k = split(self.k(key), kl)
        v = split(self.v(value), kl)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        scores = scores.masked_fill(~mask.unsqueeze(1), float("-inf"))
        attn = torch.softmax(scores, dim=-1)
        ctx = (attn @ v).transpose(1, 2).reshape(b, ql, -1)
        return self.out(ctx)


class FeedForward(nn.Module):
    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.fc1 = nn.Linear(cfg.d_model, cfg.d_ff)
        self.fc2 = nn.Linear(cfg.d_ff, cfg.d_model)

    def forward(self, x):
        return self.fc2(F.relu(self.fc1(x)))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg)
        self.ff = FeedForward(cfg)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, mask):
        h = self.norm1(x)
        x = x + self.dropout(self.self_attn(h, h, h, mask))
        x = x + self.dropout(self.ff(self.norm2(x)))
        return x


class DecoderLayer(nn.Module):
    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg)
        self.cross_attn = MultiHeadAttention(cfg)
        self.ff = FeedForward(cfg)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, memory, self_mask, cross_mask):
        h = self.norm1(x)
        x = x + self.dropout(self.self_attn(h, h, h, self_mask))
        h = self.norm2(x)
        x = x + self.dropout(self.cross_attn(h, memory, memory, cross_mask))
        x = x + self.dropout(self.ff(self.norm3(x)))
        return x


class TransformerSeq2Seq(nn.Module):
    """Pre-norm transformer encoder-decoder with sinusoidal positions and
    (optionally tied) shared source/target embeddings."""

    def __init__(self, cfg: TransformerConfig):
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Embedding(cfg.vocab_size, cfg.d_model)
        # Small embedding init keeps the tied-output logits near uniform at
        # initialization (fresh-model loss ~ ln V).
        nn.init.normal_(self.embed.weight, std=0.3 / math.sqrt(cfg.d_model))
        self.register_buffer(
            "positions", sinusoidal_positions(cfg.max_len, cfg.d_model), persistent=False
        )
        self.enc_layers = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.layers))
        self.dec_layers = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.layers))
        self.enc_norm = nn.LayerNorm(cfg.d_model)
        self.dec_norm = nn.LayerNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)
        if cfg.tie_embeddings:
            self.out_proj = None
        else:
            self.out_proj = nn.Linear(cfg.d_model, cfg.vocab_size, bias=False)
            nn.init.normal_(self.out_proj.weight, std=0.3 / math.sqrt(cfg.d_model))

    def _embed(self, ids):
        x = self.embed(ids) * math.sqrt(self.cfg.d_model)
        return self.dropout(x + self.positions[: ids.shape[1]].to(x.dtype))

    def encode(self, source, source_mask):
        x = self._embed(source)
        attn_mask = source_mask.unsqueeze(1).expand(-1, source.shape[1], -1)
        for layer in self.enc_layers:
            x = layer(x, attn_mask)
        return self.enc_norm(x)

    def decode(self, target_in, target_in_mask, memory, source_mask):
        x = self._embed(target_in)
        t = target_in.shape[1]
        causal = torch.tril(torch.ones(t, t, dtype=torch.bool, device=target_in.device))
        self_mask = causal.unsqueeze(0) & target_in_mask.unsqueeze(1)
        cross_mask = source_mask.unsqueeze(1).expand(-1, t, -1)
        for layer in self.dec_layers:
            x = layer(x, memory, self_mask, cross_mask)
        x = self.dec_norm(x)
        if self.out_proj is not None:
            return self.out_proj(x)
        return x @ self.embed.weight.t()

    def logits(self, batch: Batch) -> torch.Tensor:
        memory = self.encode(batch.source, batch.source_mask)
        target_in = batch.target[:, :-1]
        target_in_mask = batch.target_mask[:, :-1]
        return self.decode(target_in, target_in_mask, memory, batch.source_mask)


def label_smoothed_loss(
    logits: torch.Tensor,
    labels: torch.Tensor,
    label_mask: torch.Tensor,
    smoothing: float,
) -> torch.Tensor:
    """Cross-entropy with uniform label smoothing, averaged over real tokens."""
    log_probs = F.log_softmax(logits, dim=-1)
    vocab = logits.shape[-1]
    nll = -log_probs.gather(-1, labels.unsqueeze(-1)).squeeze(-1)
    if smoothing > 0:
        uniform = -log_probs.mean(dim=-1)
        loss = (1 - smoothing) * nll + smoothing * uniform
    else:
        loss = nll
    mask = label_mask.to(loss.dtype)
    return (loss * mask).sum() / mask.sum()


def forward_loss(model: TransformerSeq2Seq, batch: Batch) -> tuple[torch.Tensor, torch.Tensor]:
    logits = model.logits(batch)
    labels = batch.target[:, 1:]
    label_mask = batch.target_mask[:, 1:]
    loss = label_smoothed_loss(logits, labels, label_mask, model.cfg.label_smoothing)
    if not torch.isfinite(loss):
        raise FloatingPointError(
            f"non-finite loss {loss.item()} (batch {batch.source.shape}->{batch.target.shape})"
        )
    return loss, logits


# --------------------------------------------------------------------------
# Optimization


def inverse_sqrt_lr(step: int, base_lr: float, warmup_steps: int) -> float:
    """lr(step) = base_lr * min(step^-0.5, step * warmup^-1.5)."""
    if step < 1:
        raise ValueError("step counts from 1")
    return base_lr * min(step**-0.5, step * warmup_steps**-1.5)


@dataclass
class Trainer:
    """Owns the parameters, Adam state and schedule; one train_step per batch."""

    model: TransformerSeq2Seq
    base_lr: float = 1.0
    warmup_steps: int = 4000
    clip_norm: float = 1.0
    step: int = 0
    optimizer: torch.optim.Adam = field(init=False)

    def __post_init__(self):
        self.optimizer = torch.optim.Adam(
            self.model.parameters(), lr=0.0, betas=(0.9, 0.98), eps=1e-9
        )

    def train_step(self, batch: Batch) -> float:
        self.step += 1
        lr = inverse_sqrt_lr(self.step, self.base_lr, self.warmup_steps)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        self.optimizer.zero_grad()
        loss, _ = forward_loss(self.model, batch)
        loss.backward()
        for p in self.model.parameters():
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise FloatingPointError("non-finite gradient")
        torch.nn.utils.clip_grad_norm_(self.model.parameters(), self.clip_norm)
        self.optimizer.step()
        return loss.item()


# --------------------------------------------------------------------------
# Checkpointing


def save_checkpoint(
    path: str | Path,
    model: TransformerSeq2Seq,
    trainer: Trainer | None,
    subword_fingerprint: str,
    task_tag: str,
) -> None:
    """Versioned binary: magic, JSON header (config, fingerprint, tag, tensor
    directory), then raw little-endian float32 tensor data in declared order."""
    tensors: list[tuple[str, torch.Tensor]] = [
        (name, p.detach()) for name, p in model.named_parameters()
    ]
    opt_meta = None
    if trainer is not None:
        opt_meta = {
            "step": trainer.step,
            "base_lr": trainer.base_lr,
            "warmup_steps": trainer.warmup_steps,
        }
        state = trainer.optimizer.state
        for name, p in model.named_parameters():
            s = state.get(p, {})
            m = s.get("exp_avg", torch.zeros_like(p))
            v = s.get("exp_avg_sq", torch.zeros_like(p))
            tensors.append((f"opt.m.{name}", m))
            tensors.append((f"opt.v.{name}", v))
    header = {
        "config": asdict(model.cfg),
        "subword_fingerprint": subword_fingerprint,
        "task_tag": task_tag,
        "optimizer": opt_meta,
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in tensors],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, t in tensors:
            fh.write(t.to(torch.float32).contiguous().numpy().astype("<f4").tobytes())


@dataclass
class Checkpoint:
    config: TransformerConfig
    state: dict[str, torch.Tensor]
    opt_state: dict[str, torch.Tensor]
    opt_meta: dict | None
    subword_fingerprint: str
    task_tag: str

    def build_model(self) -> TransformerSeq2Seq:
        model = TransformerSeq2Seq(self.config)
        model.load_state_dict(self.state)
        return model


def load_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        state: dict[str, torch.Tensor] = {}
        opt_state: dict[str, torch.Tensor] = {}
        for spec in header["tensors"]:
            shape = spec["shape"]
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            tensor = torch.from_numpy(data.copy())
            if spec["name"].startswith("opt."):
                opt_state[spec["name"]] = tensor
            else:
                state[spec["name"]] = tensor
    return Checkpoint(
        config=TransformerConfig(**header["config"]),
        state=state,
        opt_state=opt_state,
        opt_meta=header.get("optimizer"),
        subword_fingerprint=header["subword_fingerprint"],
        task_tag=header["task_tag"],
    )


# --------------------------------------------------------------------------
# Decoding


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]  # generated ids, EOS included when finished
    log_prob: float
    finished: bool

    def score(self, alpha: float = 1.0) -> float:
        return self.log_prob / max(len(self.tokens), 1) ** alpha


@torch.no_grad()
def beam_decode(
    model: TransformerSeq2Seq,
    source_ids: Sequence[int],
    beam_width: int = 8,
    max_len: int = 64,
    length_alpha: float = 1.0,
) -> Hypothesis:
    """Length-normalized beam search over one source sequence.  Deterministic:
    candidate ties are broken by lower token id.  beam_width=1 is greedy."""
    model.eval()
    source = torch.tensor([list(source_ids)], dtype=torch.long)
    source_mask = torch.ones_like(source, dtype=torch.bool)
    memory = model.encode(source, source_mask)

    beams: list[Hypothesis] = [Hypothesis(tokens=(), log_prob=0.0, finished=False)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        active = [h for h in beams if not h.finished]
        if not active:
            break
        target_in = torch.tensor(
            [[BOS_ID, *h.tokens] for h in active], dtype=torch.long
        )
        mask = torch.ones_like(target_in, dtype=torch.bool)
        mem = memory.expand(len(active), -1, -1)
        smask = source_mask.expand(len(active), -1)
        logits = model.decode(target_in, mask, mem, smask)[:, -1, :]
        log_probs = F.log_softmax(logits.to(torch.float64), dim=-1).numpy()

        cand_scores = []
        cand_meta = []
        for bi, hyp in enumerate(active):
            for tok in range(log_probs.shape[1]):
                lp = hyp.log_prob + log_probs[bi, tok]
                cand_scores.append(lp / (len(hyp.tokens) + 1) ** length_alpha)
                cand_meta.append((bi, tok, lp))
        order = np.lexsort(
            (
                [m[1] for m in cand_meta],
                [m[0] for m in cand_meta],
                [-s for s in cand_scores],
            )
        )
        beams = []
        for idx in order[:beam_width]:
            bi, tok, lp = cand_meta[idx]
            hyp = active[bi]
            beams.append(
                Hypothesis(
                    tokens=(*hyp.tokens, tok), log_prob=lp, finished=tok == EOS_ID
                )
            )
        finished.extend(h for h in beams if h.finished)
        if len(finished) >= beam_width and all(h.finished for h in beams):
            break
    candidates = finished + [h for h in beams if not h.finished]
    if not candidates:
        return Hypothesis(tokens=(EOS_ID,), log_prob=float("-inf"), finished=True)
    return max(candidates, key=lambda h: (h.score(length_alpha), tuple(-t for t in h.tokens)))


def strip_eos(tokens: Sequence[int]) -> list[int]:
    return [t for t in tokens if t != EOS_ID]


def select_checkpoint(history: Sequence[tuple[int, float]]) -> int:
    """Best dev-score step; earliest step wins ties."""
    if not history:
        raise ValueError("empty history")
    best_step, best_score = history[0]
    for step, score in history[1:]:
        if score > best_score or (score == best_score and step < best_step):
            best_step, best_score = step, score
    return best_step
