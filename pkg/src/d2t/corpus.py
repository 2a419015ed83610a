"""Corpus handling: dataset ingestion, deterministic subsampling,
bidirectional pair construction, the synthetic pseudo-translation/NLG world,
and the OOV challenge-set synthesizer.

The toy world exists so the transfer claim can be tested at desk scale: a
small invented source language whose sentences must be *translated* (stem
dictionary), *inflected* (marker-conditioned suffixes) and *copied* (digit
strings, entity names) into the target language, mirroring the skills the
restaurant NLG task needs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .mr import (
    Example,
    MeaningRepresentation,
    SurfaceFormTable,
    format_mr,
    parse_mr,
)


@dataclass(frozen=True)
class ParallelCorpus:
    pairs: tuple[tuple[str, str], ...]
    provenance: str = ""

    def __post_init__(self):
        for s, t in self.pairs:
            if not s or not t:
                raise ValueError("parallel pair with an empty side")

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class NlgCorpus:
    examples: tuple[Example, ...]
    split: str = "train"

    def __len__(self) -> int:
        return len(self.examples)

    def delex_patterns(self) -> set[tuple[str, tuple[str, ...]]]:
        """The delexicalized shape of each MR: (act, ordered slot keys)."""
        return {(e.mr.act, tuple(e.mr.keys())) for e in self.examples}


def validate_disjoint_patterns(train: NlgCorpus, test: NlgCorpus) -> None:
    overlap = train.delex_patterns() & test.delex_patterns()
    if overlap:
        raise ValueError(f"test MR patterns appear in train: {sorted(overlap)}")


def load_nlg(path: str | Path, split: str = "train", strict: bool = False) -> NlgCorpus:
    """JSON-lines ingestion: one object per line with fields ``mr`` (MR
    notation), ``text`` and optional ``delex_text``."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                mr = parse_mr(obj["mr"], strict=strict)
                examples.append(
                    Example(
                        mr=mr,
                        reference=obj["text"],
                        delex_reference=obj.get("delex_text"),
                    )
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if not examples:
        raise ValueError(f"{path}: empty dataset")
    return NlgCorpus(examples=tuple(examples), split=split)


def save_nlg(corpus: NlgCorpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in corpus.examples:
            obj = {"mr": format_mr(e.mr), "text": e.reference}
            if e.delex_reference is not None:
                obj["delex_text"] = e.delex_reference
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def load_parallel(path: str | Path, provenance: str = "") -> ParallelCorpus:
    """One pair per line, tab-separated source and target."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ValueError(f"{path}:{lineno}: expected 'source<TAB>target'")
            pairs.append((parts[0], parts[1]))
    if not pairs:
        raise ValueError(f"{path}: empty corpus")
    return ParallelCorpus(pairs=tuple(pairs), provenance=provenance or str(path))


def save_parallel(corpus: ParallelCorpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s, t in corpus.pairs:
            fh.write(f"{s}\t{t}\n")


def _pick(n_total: int, n_keep: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    idx = rng.choice(n_total, size=n_keep, replace=False)
    return np.sort(idx)


def subsample(corpus, size: int | float, seed: int = 0):
    """Uniform sample without replacement, deterministic per seed (PCG64).
    A float in (0, 1] is a fraction (floor rounding); an int is a count.
    Source order of the kept items is preserved."""
    if isinstance(corpus, ParallelCorpus):
        items = corpus.pairs
    else:
        items = corpus.examples
    n = len(items)
    n_keep = int(n * size) if isinstance(size, float) and size <= 1.0 else int(size)
    if not 0 < n_keep <= n:
        raise ValueError(f"cannot sample {n_keep} of {n}")
    idx = _pick(n, n_keep, seed)
    kept = tuple(items[i] for i in idx)
    if isinstance(corpus, ParallelCorpus):
        return ParallelCorpus(pairs=kept, provenance=corpus.provenance)
    return NlgCorpus(examples=kept, split=corpus.split)


def bidirectionalize(corpus: ParallelCorpus) -> ParallelCorpus:
    """Both translation directions: all forward pairs, then all reversed.
    Language-token attachment happens at batch construction."""
    pairs = corpus.pairs + tuple((t, s) for s, t in corpus.pairs)
    return ParallelCorpus(pairs=pairs, provenance=f"{corpus.provenance}+reverse")


# --------------------------------------------------------------------------
# Toy pseudo-translation world

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"
_TARGET_VOWELS = "aeiouáíé"
_SUFFIXES = ("u", "em", "ech", "ám", "ou", "ím", "ách")


def _word(rng: np.random.Generator, syllables: int, vowels: str) -> str:
    return "".join(
        _CONSONANTS[rng.integers(len(_CONSONANTS))] + vowels[rng.integers(len(vowels))]
        for _ in range(syllables)
    )


@dataclass(frozen=True)
class ToyWorldSpec:
    n_stems: int = 200
    n_markers: int = 5
    n_entities: int = 50
    seed: int = 0

    def build(self) -> "ToyWorld":
        rng = np.random.default_rng(self.seed)
        stems: dict[str, str] = {}
        used_src: set[str] = set()
        used_tgt: set[str] = set()
        while len(stems) < self.n_stems:
            src = _word(rng, int(rng.integers(2, 4)), _VOWELS)
            tgt = _word(rng, int(rng.integers(2, 4)), _TARGET_VOWELS)
            if src in used_src or tgt in used_tgt:
                continue
            used_src.add(src)
            used_tgt.add(tgt)
            stems[src] = tgt
        markers: list[str] = []
        while len(markers) < self.n_markers:
            m = _word(rng, 1, _VOWELS)
            if m not in used_src and m not in markers:
                markers.append(m)
        suffix_rule = {m: _SUFFIXES[i % len(_SUFFIXES)] for i, m in enumerate(markers)}
        entities: list[str] = []
        while len(entities) < self.n_entities:
            e = _word(rng, int(rng.integers(2, 4)), _VOWELS).capitalize()
            if e not in entities:
                entities.append(e)
        fillers = []
        while len(fillers) < 4:
            f = _word(rng, 2, _TARGET_VOWELS)
            if f not in used_tgt and f not in fillers:
                fillers.append(f)
        return ToyWorld(
            spec=self,
            stem_dict=stems,
            markers=tuple(markers),
            suffix_rule=suffix_rule,
            entities=tuple(entities),
            fillers=tuple(fillers),
        )


@dataclass(frozen=True)
class ToyWorld:
    """Concrete vocabulary of the pseudo-translation world.

    Target-side rules: stems translate through ``stem_dict``; a marker is
    dropped but adds its suffix to the translation (or entity copy) of the
    following word; digit strings and entities copy verbatim."""

    spec: ToyWorldSpec
    stem_dict: dict[str, str]
    markers: tuple[str, ...]
    suffix_rule: dict[str, str]
    entities: tuple[str, ...]
    fillers: tuple[str, ...]

    def translate(self, source_tokens: Sequence[str]) -> list[str]:
        out: list[str] = []
        pending_suffix: str | None = None
        for tok in source_tokens:
            if tok in self.suffix_rule:
                pending_suffix = self.suffix_rule[tok]
                continue
            if tok.isdigit():
                out.append(tok)
                pending_suffix = None
                continue
            if tok in self.stem_dict:
                word = self.stem_dict[tok]
            else:
                word = tok  # entities and unknowns copy
            if pending_suffix is not None:
                word += pending_suffix
                pending_suffix = None
            out.append(word)
        return out


def gen_toy_parallel(spec: ToyWorldSpec, n: int, seed: int | None = None) -> ParallelCorpus:
    """Random source sentences with their rule-derived translations; a pure
    function of (spec, n, seed)."""
    world = spec.build()
    rng = np.random.default_rng(spec.seed + 1 if seed is None else seed)
    stems = list(world.stem_dict)
    pairs = []
    while len(pairs) < n:
        length = int(rng.integers(3, 9))
        src: list[str] = []
        while len(src) < length:
            roll = rng.random()
            if roll < 0.15 and len(src) < length - 1:
                src.append(world.markers[rng.integers(len(world.markers))])
                # A marker must precede an inflectable word.
                if rng.random() < 0.5:
                    src.append(stems[rng.integers(len(stems))])
                else:
                    src.append(world.entities[rng.integers(len(world.entities))])
            elif roll < 0.55:
                src.append(stems[rng.integers(len(stems))])
            elif roll < 0.75:
                digits = "".join(str(rng.integers(10)) for _ in range(int(rng.integers(2, 10))))
                src.append(digits)
            else:
                src.append(world.entities[rng.integers(len(world.entities))])
        tgt = world.translate(src)
        if tgt:
            pairs.append((" ".join(src), " ".join(tgt)))
    return ParallelCorpus(pairs=tuple(pairs), provenance="toy-world")


_TOY_SLOT_ORDER = ("name", "phone", "meal")
_TOY_TRAIN_PATTERNS = (
    ("name",),
    ("phone",),
    ("meal",),
    ("name", "phone"),
    ("phone", "meal"),
    ("name", "meal"),
)
_TOY_DEV_PATTERNS = (("name", "meal"), ("phone", "meal"))
# Every test MR contains a meal slot: meal values are dictionary stems whose
# target-side translations appear only in the parallel corpus, so realizing
# them is exactly the skill pre-training can transfer.
_TOY_TEST_PATTERNS = (("meal",), ("phone", "meal"), ("name", "meal"))


@dataclass(frozen=True)
class ToyNlgData:
    train: NlgCorpus
    dev: NlgCorpus
    test: NlgCorpus
    surface_forms: SurfaceFormTable


def gen_toy_nlg(
    spec: ToyWorldSpec,
    n: int,
    seed: int | None = None,
    holdout_fraction: float = 0.2,
) -> ToyNlgData:
    """Toy NLG corpus over slots name (entity), phone (digits), meal (stem).

    References come from one fixed target-language template applying the
    world's inflection and copy rules.  Test MRs draw name/meal values from
    held-out pools (entities and stems never seen in NLG training) and always
    include a meal slot, whose target-side translation exists only in the
    parallel corpus — so test success requires transferring translation and
    copy skills rather than memorizing.  The gold surface-form table covers
    every inflected form the templates can produce."""
    world = spec.build()
    rng = np.random.default_rng(spec.seed + 2 if seed is None else seed)
    stems = list(world.stem_dict)
    n_ent_held = max(1, int(len(world.entities) * holdout_fraction))
    n_stem_held = max(1, int(len(stems) * holdout_fraction))
    train_entities = world.entities[: len(world.entities) - n_ent_held]
    test_entities = world.entities[len(world.entities) - n_ent_held :]
    train_stems = stems[: len(stems) - n_stem_held]
    test_stems = stems[len(stems) - n_stem_held :]

    name_suffix = world.suffix_rule[world.markers[0]]
    meal_suffix = world.suffix_rule[world.markers[min(1, len(world.markers) - 1)]]
    f_lead, f_name, f_phone, f_meal = world.fillers

    def realize(key: str, value: str) -> str:
        if key == "name":
            return value + name_suffix
        if key == "phone":
            return value
        return world.stem_dict[value] + meal_suffix

    def make_example(pattern: tuple[str, ...], entities, stem_pool) -> Example:
        slots = []
        spans = {}
        for key in pattern:
            if key == "name":
                value = entities[rng.integers(len(entities))]
            elif key == "phone":
                value = "".join(str(rng.integers(10)) for _ in range(9))
            else:
                value = stem_pool[rng.integers(len(stem_pool))]
            slots.append((key, value))
            spans[key] = realize(key, value)
        mr = MeaningRepresentation(act="inform", slots=tuple(slots))
        clause_word = {"name": f_name, "phone": f_phone, "meal": f_meal}
        ref_parts = [f_lead]
        delex_parts = [f_lead]
        for key, _ in slots:
            ref_parts.extend([clause_word[key], spans[key]])
            delex_parts.extend([clause_word[key], f"X-{key}"])
        return Example(
            mr=mr,
            reference=" ".join(ref_parts),
            delex_reference=" ".join(delex_parts),
        )

    n_dev = max(1, int(n * 0.15))
    n_test = max(1, int(n * 0.15))
    n_train = n - n_dev - n_test
    train = [
        make_example(
            _TOY_TRAIN_PATTERNS[rng.integers(len(_TOY_TRAIN_PATTERNS))],
            train_entities,
            train_stems,
        )
        for _ in range(n_train)
    ]
    dev = [
        make_example(
            _TOY_DEV_PATTERNS[rng.integers(len(_TOY_DEV_PATTERNS))],
            train_entities,
            train_stems,
        )
        for _ in range(n_dev)
    ]
    test = [
        make_example(
            _TOY_TEST_PATTERNS[rng.integers(len(_TOY_TEST_PATTERNS))],
            test_entities,
            test_stems,
        )
        for _ in range(n_test)
    ]

    forms: dict[str, set[str]] = {}
    for e in world.entities:
        forms[e] = {e} | {e + s for s in world.suffix_rule.values()}
    for s, t in world.stem_dict.items():
        forms[s] = {s, t} | {t + suf for suf in world.suffix_rule.values()}
    table = SurfaceFormTable.from_dict(forms)

    return ToyNlgData(
        train=NlgCorpus(tuple(train), "train"),
        dev=NlgCorpus(tuple(dev), "dev"),
        test=NlgCorpus(tuple(test), "test"),
        surface_forms=table,
    )


# --------------------------------------------------------------------------
# OOV challenge set


@dataclass(frozen=True)
class OovSpec:
    templates: tuple[MeaningRepresentation, ...]  # open values marked "*"
    pools: dict[str, tuple[str, ...]] = field(default_factory=dict)
    per_template: int = 10
    seed: int = 0

    NUMERIC_SLOTS = ("phone", "count", "postcode")

    @classmethod
    def default(cls, seed: int = 0) -> "OovSpec":
        with resources.as_file(resources.files("d2t.data") / "oov_templates.txt") as p:
            templates = tuple(
                parse_mr(line.strip())
                for line in p.read_text(encoding="utf-8").splitlines()
                if line.strip()
            )
        pools: dict[str, tuple[str, ...]] = {}
        with resources.as_file(resources.files("d2t.data") / "oov_pools.tsv") as p:
            for line in p.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                slot, values = line.split("\t")
                pools[slot] = tuple(v for v in values.split("|") if v)
        return cls(templates=templates, pools=pools, seed=seed)


def synth_oov(spec: OovSpec, train: NlgCorpus) -> NlgCorpus:
    """Fill each template's open slots with pool values (or synthesized
    numbers) that never occur in the training data; per_template samples per
    template MR, references left empty (predictions are rated, not scored
    against gold)."""
    train_values = {v for e in train.examples for _, v in e.mr.slots}
    offending = sorted(
        v
        for slot, pool in spec.pools.items()
        for v in pool
        if v in train_values
    )
    if offending:
        raise ValueError(f"OOV pools overlap training values: {offending}")

    rng = np.random.default_rng(spec.seed)
    out = []
    for template in spec.templates:
        for _ in range(spec.per_template):
            slots = []
            for key, value in template.slots:
                if value != "*":
                    slots.append((key, value))
                    continue
                while True:
                    if key == "phone":
                        cand = "".join(str(rng.integers(10)) for _ in range(9))
                    elif key == "count":
                        cand = str(int(rng.integers(1, 100)))
                    elif key == "postcode":
                        cand = "".join(str(rng.integers(10)) for _ in range(5))
                    else:
                        pool = spec.pools.get(key)
                        if not pool:
                            raise ValueError(f"no value pool for open slot {key!r}")
                        cand = pool[rng.integers(len(pool))]
                    if cand not in train_values:
                        break
                slots.append((key, cand))
            mr = MeaningRepresentation(act=template.act, slots=tuple(slots))
            out.append(Example(mr=mr, reference=""))
    return NlgCorpus(examples=tuple(out), split="oov")


def oov_stats(corpus: NlgCorpus) -> dict:
    values = [v for e in corpus.examples for _, v in e.mr.slots]
    return {
        "mrs": len(corpus.examples),
        "slots": len(values),
        "unique_values": len(set(values)),
    }
