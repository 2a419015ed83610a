"""Batch-stream construction for the three training objectives.

Sources carry the task and language control tokens as plain text; the subword
model maps them to their reserved ids.
"""

from __future__ import annotations

import math
from typing import Iterator, Sequence

import numpy as np

from .corpus import NlgCorpus, ParallelCorpus
from .mr import (
    DEFAULT_TASK_TOKEN_MT,
    DEFAULT_TASK_TOKEN_NLG,
    LANG_TOKEN_CS,
    LANG_TOKEN_EN,
    LinearizationConfig,
    linearize,
    linearize_text,
)
from .model import Batch, make_batch
from .subword import MASK_ID, SubwordModel


def pretrain_pairs(corpus: ParallelCorpus, mode: str) -> list[tuple[str, str]]:
    """Directed text pairs with control tokens.  nmt: source -> target only;
    binmt: both directions with the matching language token."""
    if mode not in ("nmt", "binmt"):
        raise ValueError(f"unknown pre-training mode {mode!r}")
    forward = [
        (linearize_text(s, LinearizationConfig(DEFAULT_TASK_TOKEN_MT, LANG_TOKEN_CS)), t)
        for s, t in corpus.pairs
    ]
    if mode == "nmt":
        return forward
    backward = [
        (linearize_text(t, LinearizationConfig(DEFAULT_TASK_TOKEN_MT, LANG_TOKEN_EN)), s)
        for s, t in corpus.pairs
    ]
    return forward + backward


def nlg_pairs(
    corpus: NlgCorpus,
    delex: bool = False,
    lang_token: str = LANG_TOKEN_CS,
) -> list[tuple[str, str]]:
    cfg = LinearizationConfig(DEFAULT_TASK_TOKEN_NLG, lang_token)
    pairs = []
    for e in corpus.examples:
        target = e.delex_reference if delex else e.reference
        if target is None:
            raise ValueError("delex mode needs delex_reference on every example")
        pairs.append((linearize(e.mr, cfg), target))
    return pairs


def encode_pairs(
    pairs: Sequence[tuple[str, str]], subword: SubwordModel, max_len: int
) -> list[tuple[list[int], list[int]]]:
    encoded = []
    for src, tgt in pairs:
        s = subword.encode(src)[:max_len]
        t = subword.encode(tgt)[: max_len - 2]  # room for BOS/EOS
        if s and t:
            encoded.append((s, t))
    return encoded


def batch_stream(
    encoded: Sequence[tuple[Sequence[int], Sequence[int]]],
    batch_size: int,
    steps: int,
    seed: int = 0,
) -> Iterator[Batch]:
    """Shuffled fixed-count batch stream; reshuffles each epoch, deterministic
    per seed."""
    rng = np.random.default_rng(seed)
    produced = 0
    while produced < steps:
        order = rng.permutation(len(encoded))
        for start in range(0, len(order), batch_size):
            if produced >= steps:
                return
            chunk = [encoded[i] for i in order[start : start + batch_size]]
            yield make_batch([c[0] for c in chunk], [c[1] for c in chunk])
            produced += 1


def make_pretrain_batches(
    corpus: ParallelCorpus,
    mode: str,
    subword: SubwordModel,
    batch_size: int,
    steps: int,
    max_len: int = 256,
    seed: int = 0,
) -> Iterator[Batch]:
    encoded = encode_pairs(pretrain_pairs(corpus, mode), subword, max_len)
    return batch_stream(encoded, batch_size, steps, seed)


def mass_examples(
    sentences: Sequence[str],
    subword: SubwordModel,
    span_fraction: float = 0.5,
    max_len: int = 256,
    seed: int = 0,
) -> list[tuple[list[int], list[int]]]:
    """Span-corruption examples: a contiguous span of ceil(fraction * len)
    token positions is replaced by mask tokens in the encoder input; the
    decoder target is the masked span."""
    if not 0 < span_fraction <= 1:
        raise ValueError("span_fraction must be in (0, 1]")
    rng = np.random.default_rng(seed)
    out = []
    for sent in sentences:
        ids = subword.encode(sent)[:max_len]
        if not ids:
            continue
        span_len = math.ceil(span_fraction * len(ids))
        start = int(rng.integers(0, len(ids) - span_len + 1))
        masked = list(ids)
        masked[start : start + span_len] = [MASK_ID] * span_len
        target = ids[start : start + span_len]
        out.append((masked, target))
    return out


def make_mass_batches(
    sentences: Sequence[str],
    subword: SubwordModel,
    span_fraction: float,
    batch_size: int,
    steps: int,
    max_len: int = 256,
    seed: int = 0,
) -> Iterator[Batch]:
    encoded = mass_examples(sentences, subword, span_fraction, max_len, seed)
    return batch_stream(encoded, batch_size, steps, seed + 1)
