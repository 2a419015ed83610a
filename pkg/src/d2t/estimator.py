"""sklearn-style front door for the seq2seq model.

``Seq2SeqGenerator`` is a text-in/text-out estimator: ``fit`` on (source,
target) string pairs, ``predict`` beam-decoded strings.  It composes with
sklearn tooling through ``get_params``/``set_params`` and is how the harness
runs both pre-training and fine-tuning (fine-tuning = fit with
``init_checkpoint`` set; all parameters stay trainable, optimizer state is
reset).
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import torch
from sklearn.base import BaseEstimator

from .batching import batch_stream, encode_pairs
from .model import (
    Checkpoint,
    Trainer,
    TransformerConfig,
    TransformerSeq2Seq,
    beam_decode,
    forward_loss,
    load_checkpoint,
    make_batch,
    save_checkpoint,
    strip_eos,
)
from .subword import SubwordModel


def _check_text_list(X, name: str) -> list[str]:
    if isinstance(X, str):
        raise TypeError(f"{name} must be a sequence of strings, not a single string")
    X = list(X)
    bad = [i for i, x in enumerate(X) if not isinstance(x, str)]
    if bad:
        raise TypeError(f"{name}[{bad[0]}] is not a string")
    if not X:
        raise ValueError(f"{name} is empty")
    return X


class Seq2SeqGenerator(BaseEstimator):
    """Transformer seq2seq over raw strings.

    Parameters mirror TransformerConfig plus the training loop knobs; the
    subword model is a constructor argument because source and target share
    one vocabulary."""

    def __init__(
        self,
        subword: SubwordModel | None = None,
        layers: int = 2,
        heads: int = 4,
        d_model: int = 64,
        d_ff: int = 256,
        dropout: float = 0.1,
        max_len: int = 256,
        label_smoothing: float = 0.1,
        tie_embeddings: bool = True,
        base_lr: float = 1.0,
        warmup_steps: int = 4000,
        batch_size: int = 32,
        steps: int = 1000,
        beam_width: int = 8,
        decode_max_len: int = 64,
        seed: int = 0,
        init_checkpoint: str | Path | None = None,
        task_tag: str = "nlg",
        eval_every: int = 0,
        dev_pairs: Sequence[tuple[str, str]] | None = None,
    ):
        self.subword = subword
        self.layers = layers
        self.heads = heads
        self.d_model = d_model
        self.d_ff = d_ff
        self.dropout = dropout
        self.max_len = max_len
        self.label_smoothing = label_smoothing
        self.tie_embeddings = tie_embeddings
        self.base_lr = base_lr
        self.warmup_steps = warmup_steps
        self.batch_size = batch_size
        self.steps = steps
        self.beam_width = beam_width
        self.decode_max_len = decode_max_len
        self.seed = seed
        self.init_checkpoint = init_checkpoint
        self.task_tag = task_tag
        self.eval_every = eval_every
        self.dev_pairs = dev_pairs

    def _config(self) -> TransformerConfig:
        return TransformerConfig(
            vocab_size=self.subword.vocab_size,
            layers=self.layers,
            heads=self.heads,
            d_model=self.d_model,
            d_ff=self.d_ff,
            dropout=self.dropout,
            max_len=self.max_len,
            label_smoothing=self.label_smoothing,
            tie_embeddings=self.tie_embeddings,
        )

    def _init_model(self) -> TransformerSeq2Seq:
        torch.manual_seed(self.seed)
        cfg = self._config()
        if self.init_checkpoint is not None:
            ckpt = load_checkpoint(self.init_checkpoint)
            if ckpt.config != cfg:
                raise ValueError(
                    f"checkpoint config {ckpt.config} does not match estimator config {cfg}"
                )
            if ckpt.subword_fingerprint != self.subword.fingerprint():
                raise ValueError("checkpoint subword fingerprint mismatch")
            return ckpt.build_model()
        return TransformerSeq2Seq(cfg)

    def fit(self, X, y):
        if self.subword is None:
            raise ValueError("subword model is required before fitting")
        X = _check_text_list(X, "X")
        y = _check_text_list(y, "y")
        if len(X) != len(y):
            raise ValueError(f"X and y length mismatch: {len(X)} vs {len(y)}")
        self.model_ = self._init_model()
        self.trainer_ = Trainer(
            self.model_, base_lr=self.base_lr, warmup_steps=self.warmup_steps
        )
        encoded = encode_pairs(list(zip(X, y)), self.subword, self.max_len)
        self.loss_history_ = []
        self.eval_history_ = []
        self.model_.train()
        for batch in batch_stream(encoded, self.batch_size, self.steps, self.seed):
            self.loss_history_.append(self.trainer_.train_step(batch))
            step = self.trainer_.step
            if self.eval_every and self.dev_pairs and step % self.eval_every == 0:
                self.model_.eval()
                dev = self.eval_loss(
                    [p[0] for p in self.dev_pairs], [p[1] for p in self.dev_pairs]
                )
                self.eval_history_.append((step, dev))
                self.model_.train()
        self.model_.eval()
        return self

    def fit_batches(self, batches) -> "Seq2SeqGenerator":
        """Lower-level fit over a prepared batch stream (MASS pre-training)."""
        self.model_ = self._init_model()
        self.trainer_ = Trainer(
            self.model_, base_lr=self.base_lr, warmup_steps=self.warmup_steps
        )
        self.loss_history_ = []
        self.model_.train()
        for batch in batches:
            self.loss_history_.append(self.trainer_.train_step(batch))
        self.model_.eval()
        return self

    def predict(self, X) -> list[str]:
        X = _check_text_list(X, "X")
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted")
        out = []
        for src in X:
            ids = self.subword.encode(src)[: self.max_len]
            hyp = beam_decode(
                self.model_,
                ids,
                beam_width=self.beam_width,
                max_len=self.decode_max_len,
            )
            out.append(self.subword.decode(strip_eos(hyp.tokens)))
        return out

    def eval_loss(self, X, y) -> float:
        pairs = encode_pairs(list(zip(list(X), list(y))), self.subword, self.max_len)
        batch = make_batch([p[0] for p in pairs], [p[1] for p in pairs])
        with torch.no_grad():
            loss, _ = forward_loss(self.model_, batch)
        return loss.item()

    def save(self, path: str | Path) -> None:
        save_checkpoint(
            path,
            self.model_,
            self.trainer_,
            self.subword.fingerprint(),
            self.task_tag,
        )

    def load(self, path: str | Path) -> "Seq2SeqGenerator":
        ckpt = load_checkpoint(path)
        if ckpt.subword_fingerprint != self.subword.fingerprint():
            raise ValueError("checkpoint subword fingerprint mismatch")
        self.model_ = ckpt.build_model()
        self.model_.eval()
        return self
