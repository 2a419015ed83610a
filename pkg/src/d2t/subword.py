"""Merge-based subword segmentation with byte fallback and reserved control
tokens.

Text is split on single spaces; each piece is prefixed with a word-boundary
marker byte (0xFF, which never occurs in valid UTF-8) and encoded to bytes.
Byte-pair merges are learned over those byte sequences, so any UTF-8 string is
encodable (no OOV) and decoding is exact: concatenate token byte strings,
replace markers with spaces, strip the leading space.

Reserved control tokens ([GENERATE], [TRANSLATE], <2en>, <2cs>, pad/bos/eos/
mask) occupy fixed low ids and are recognized when a whole space-delimited
piece matches exactly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

MARKER = b"\xff"

PAD = "<pad>"
BOS = "<s>"
EOS = "</s>"
MASK = "<mask>"

DEFAULT_RESERVED = (
    PAD,
    BOS,
    EOS,
    MASK,
    "[GENERATE]",
    "[TRANSLATE]",
    "<2en>",
    "<2cs>",
)

PAD_ID, BOS_ID, EOS_ID, MASK_ID = 0, 1, 2, 3


def _pieces(text: str) -> list[bytes]:
    """Marker-prefixed UTF-8 byte pieces, one per space-delimited word."""
    return [MARKER + part.encode("utf-8") for part in text.split(" ")]


@dataclass
class SubwordModel:
    """Trained merge list + vocabulary.  Immutable after construction."""

    merges: list[tuple[bytes, bytes]]
    reserved: tuple[str, ...] = DEFAULT_RESERVED
    target_size: int = 4000

    _ranks: dict[tuple[bytes, bytes], int] = field(init=False, repr=False)
    _vocab: dict[bytes, int] = field(init=False, repr=False)
    _id_to_token: list[bytes | str] = field(init=False, repr=False)
    _reserved_ids: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._piece_cache: dict[bytes, list[int]] = {}
        self._ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._reserved_ids = {tok: i for i, tok in enumerate(self.reserved)}
        self._id_to_token = list(self.reserved)
        self._vocab = {}
        for b in range(256):
            self._vocab[bytes([b])] = len(self._id_to_token)
            self._id_to_token.append(bytes([b]))
        for a, b in self.merges:
            merged = a + b
            if merged not in self._vocab:
                self._vocab[merged] = len(self._id_to_token)
                self._id_to_token.append(merged)

    @property
    def vocab_size(self) -> int:
        return len(self._id_to_token)

    def reserved_id(self, token: str) -> int:
        return self._reserved_ids[token]

    def _encode_piece(self, piece: bytes) -> list[int]:
        cached = self._piece_cache.get(piece)
        if cached is not None:
            return cached
        symbols = [bytes([b]) for b in piece]
        while len(symbols) > 1:
            best_rank = None
            best_i = -1
            for i in range(len(symbols) - 1):
                rank = self._ranks.get((symbols[i], symbols[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_i = i
            if best_rank is None:
                break
            symbols[best_i : best_i + 2] = [symbols[best_i] + symbols[best_i + 1]]
        ids = [self._vocab[s] for s in symbols]
        if len(self._piece_cache) < 1_000_000:
            self._piece_cache[piece] = ids
        return ids

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for raw, piece in zip(text.split(" "), _pieces(text)):
            if raw in self._reserved_ids:
                ids.append(self._reserved_ids[raw])
            else:
                ids.extend(self._encode_piece(piece))
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        data = bytearray()
        for i in ids:
            if not 0 <= i < len(self._id_to_token):
                raise ValueError(f"token id {i} out of range (vocab {len(self._id_to_token)})")
            tok = self._id_to_token[i]
            if isinstance(tok, str):
                data += MARKER + tok.encode("utf-8")
            else:
                data += tok
        parts = bytes(data).split(MARKER)
        # encode() only ever produces valid UTF-8, but a model is free to emit
        # token sequences that split a code point; replace rather than raise.
        text = " ".join(p.decode("utf-8", errors="replace") for p in parts)
        # Every piece carries a leading marker, so strip the leading space.
        return text[1:] if text.startswith(" ") else text

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"subword-v1\t{self.target_size}\t{' '.join(self.reserved)}\n")
            for a, b in self.merges:
                fh.write(f"{a.hex()}\t{b.hex()}\n")

    @classmethod
    def load(cls, path: str | Path) -> "SubwordModel":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            if len(header) != 3 or header[0] != "subword-v1":
                raise ValueError(f"{path}: not a subword-v1 model file")
            target_size = int(header[1])
            reserved = tuple(header[2].split(" "))
            merges = []
            for lineno, line in enumerate(fh, start=2):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: malformed merge line")
                merges.append((bytes.fromhex(parts[0]), bytes.fromhex(parts[1])))
        return cls(merges=merges, reserved=reserved, target_size=target_size)

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(repr(self.reserved).encode())
        for a, b in self.merges:
            h.update(a)
            h.update(b"\x00")
            h.update(b)
            h.update(b"\x01")
        return h.hexdigest()[:16]


def train_subword(
    corpus: Iterable[str],
    target_size: int = 4000,
    reserved: tuple[str, ...] = DEFAULT_RESERVED,
) -> SubwordModel:
    """Learn byte-pair merges until the vocabulary reaches ``target_size`` or
    no pair occurs at least twice.  Deterministic given corpus order; ties are
    broken lexicographically on the pair's byte strings."""
    min_size = len(reserved) + 256
    if target_size <= min_size:
        raise ValueError(f"target_size must exceed {min_size} (reserved + byte tokens)")

    word_counts: Counter = Counter()
    n_lines = 0
    for line in corpus:
        n_lines += 1
        for raw, piece in zip(line.split(" "), _pieces(line)):
            if raw in reserved:
                continue
            word_counts[piece] += 1
    if n_lines == 0:
        raise ValueError("empty corpus")

    words = [([bytes([b]) for b in w], c) for w, c in word_counts.items()]
    merges: list[tuple[bytes, bytes]] = []
    vocab_size = min_size
    while vocab_size < target_size:
        pair_counts: Counter = Counter()
        for symbols, count in words:
            for i in range(len(symbols) - 1):
                pair_counts[(symbols[i], symbols[i + 1])] += count
        if not pair_counts:
            break
        best_pair, best_count = min(
            pair_counts.items(), key=lambda kv: (-kv[1], kv[0])
        )
        if best_count < 2:
            break
        merges.append(best_pair)
        a, b = best_pair
        merged = a + b
        for symbols, _ in words:
            i = 0
            while i < len(symbols) - 1:
                if symbols[i] == a and symbols[i + 1] == b:
                    symbols[i : i + 2] = [merged]
                else:
                    i += 1
        vocab_size += 1
    return SubwordModel(merges=merges, reserved=reserved, target_size=target_size)
