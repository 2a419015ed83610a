"""Automatic evaluation: Slot Error Rate plus the word-overlap suite
(BLEU, NIST, ROUGE-L, CIDEr, METEOR-lite).

All five overlap metrics share a single deterministic tokenizer
(``eval_tokenize``) and operate on an ``EvalCorpus`` of predictions with one
or more references each.  Scales: BLEU 0-100, NIST >= 0, ROUGE-L and METEOR
0-1, CIDEr 0-10.  METEOR is the exact-match variant (no synonym or paraphrase
resources), hence ``meteor_lite``.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .mr import MeaningRepresentation, SurfaceFormTable, normalize

_PUNCT_RE = re.compile(r"^([^\w\s]+)|([^\w\s]+)$")


@dataclass(frozen=True)
class EvalCorpus:
    items: tuple[tuple[str, tuple[str, ...]], ...]

    def __post_init__(self):
        if not self.items:
            raise ValueError("corpus must contain at least one item")
        for _, refs in self.items:
            if not refs:
                raise ValueError("every item needs at least one reference")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, Sequence[str]]]) -> "EvalCorpus":
        return cls(items=tuple((p, tuple(rs)) for p, rs in pairs))


@dataclass(frozen=True)
class MetricScore:
    name: str
    value: float


@dataclass(frozen=True)
class SlotStats:
    total: int
    errors: int

    @property
    def accuracy(self) -> float:
        return 1.0 - self.errors / self.total if self.total else 1.0


@dataclass(frozen=True)
class SerReport:
    example_error_rate: float
    per_slot: Mapping[str, SlotStats]

    def to_dict(self) -> dict:
        return {
            "example_error_rate": self.example_error_rate,
            "per_slot": {
                k: {"total": s.total, "errors": s.errors, "accuracy": s.accuracy}
                for k, s in self.per_slot.items()
            },
        }


def eval_tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, split leading/trailing punctuation runs
    off each token.  Shared by all overlap metrics."""
    tokens: list[str] = []
    for word in text.lower().split():
        lead = re.match(r"^[^\w\s]+", word)
        if lead and lead.group(0) != word:
            tokens.append(lead.group(0))
            word = word[lead.end():]
        trail = re.search(r"[^\w\s]+$", word)
        if trail and trail.start() > 0:
            tokens.append(word[: trail.start()])
            tokens.append(trail.group(0))
        elif word:
            tokens.append(word)
    return tokens


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# --------------------------------------------------------------------------
# Slot Error Rate


def compute_ser(
    examples: Sequence[tuple[MeaningRepresentation, str]],
    table: SurfaceFormTable,
) -> SerReport:
    """A slot counts as realized iff any surface form of its value occurs as a
    normalized substring of the prediction.  kids_allowed is excluded from all
    counts.  example_error_rate is the fraction of examples with at least one
    missing slot."""
    totals: Counter = Counter()
    errors: Counter = Counter()
    bad_examples = 0
    for mr, prediction in examples:
        haystack = normalize(prediction)
        example_ok = True
        for key, value in mr.slots:
            if key == "kids_allowed":
                continue
            totals[key] += 1
            if not any(form and form in haystack for form in table.normalized_lookup(value)):
                errors[key] += 1
                example_ok = False
        if not example_ok:
            bad_examples += 1
    per_slot = {
        key: SlotStats(total=totals[key], errors=errors.get(key, 0)) for key in totals
    }
    rate = bad_examples / len(examples) if examples else 0.0
    return SerReport(example_error_rate=rate, per_slot=per_slot)


# --------------------------------------------------------------------------
# BLEU


def bleu(corpus: EvalCorpus, max_order: int = 4, smooth: bool = False) -> MetricScore:
    """Corpus-level BLEU: geometric mean of clipped 1..max_order n-gram
    precisions times the brevity penalty, scaled to 0-100.

    Multi-reference clipping takes the max reference count per n-gram; the
    effective reference length is the closest to the prediction (ties go to
    the shorter).  No smoothing by default; ``smooth`` enables add-one on the
    higher-order counts."""
    matched = [0] * max_order
    total = [0] * max_order
    pred_len = 0
    ref_len = 0
    for prediction, references in corpus.items:
        pred_toks = eval_tokenize(prediction)
        ref_toks = [eval_tokenize(r) for r in references]
        pred_len += len(pred_toks)
        ref_len += min(
            (len(r) for r in ref_toks),
            key=lambda L: (abs(L - len(pred_toks)), L),
        )
        for n in range(1, max_order + 1):
            pred_counts = _ngrams(pred_toks, n)
            max_ref: Counter = Counter()
            for r in ref_toks:
                for gram, c in _ngrams(r, n).items():
                    max_ref[gram] = max(max_ref[gram], c)
            total[n - 1] += sum(pred_counts.values())
            matched[n - 1] += sum(
                min(c, max_ref.get(gram, 0)) for gram, c in pred_counts.items()
            )
    log_sum = 0.0
    for n in range(max_order):
        num, den = matched[n], total[n]
        if smooth and n > 0:
            num, den = num + 1, den + 1
        if num == 0 or den == 0:
            return MetricScore("bleu", 0.0)
        log_sum += math.log(num / den)
    precision_gm = math.exp(log_sum / max_order)
    bp = 1.0 if pred_len >= ref_len else math.exp(1.0 - ref_len / max(pred_len, 1))
    if pred_len == 0:
        bp = 0.0
    return MetricScore("bleu", 100.0 * precision_gm * bp)


# --------------------------------------------------------------------------
# NIST


def nist(corpus: EvalCorpus, max_order: int = 5) -> MetricScore:
    """Information-weighted n-gram precision up to 5-grams with the NIST
    brevity factor.  Info weights come from the reference corpus:
    Info(w1..wn) = log2(count(w1..w_{n-1}) / count(w1..wn))."""
    ref_counts: list[Counter] = [Counter() for _ in range(max_order + 1)]
    total_ref_words = 0
    for _, references in corpus.items:
        for r in references:
            toks = eval_tokenize(r)
            total_ref_words += len(toks)
            for n in range(1, max_order + 1):
                ref_counts[n].update(_ngrams(toks, n))

    def info(gram: tuple[str, ...]) -> float:
        denom = ref_counts[len(gram)][gram]
        if denom == 0:
            return 0.0
        numer = total_ref_words if len(gram) == 1 else ref_counts[len(gram) - 1][gram[:-1]]
        if numer == 0:
            return 0.0
        return math.log2(numer / denom)

    numerators = [0.0] * (max_order + 1)
    denominators = [0] * (max_order + 1)
    pred_len = 0
    mean_ref_len = 0.0
    for prediction, references in corpus.items:
        pred_toks = eval_tokenize(prediction)
        ref_toks = [eval_tokenize(r) for r in references]
        pred_len += len(pred_toks)
        mean_ref_len += sum(len(r) for r in ref_toks) / len(ref_toks)
        for n in range(1, max_order + 1):
            pred_grams = _ngrams(pred_toks, n)
            max_ref: Counter = Counter()
            for r in ref_toks:
                for gram, c in _ngrams(r, n).items():
                    max_ref[gram] = max(max_ref[gram], c)
            denominators[n] += sum(pred_grams.values())
            for gram, c in pred_grams.items():
                numerators[n] += min(c, max_ref.get(gram, 0)) * info(gram)
    score = sum(
        numerators[n] / denominators[n]
        for n in range(1, max_order + 1)
        if denominators[n] > 0
    )
    # Brevity factor: 0.5 when the length ratio is 2/3.
    ratio = pred_len / mean_ref_len if mean_ref_len > 0 else 0.0
    if ratio <= 0:
        bp = 0.0
    elif ratio >= 1:
        bp = 1.0
    else:
        beta = math.log(0.5) / math.log(1.5) ** 2
        bp = math.exp(beta * math.log(ratio) ** 2)
    return MetricScore("nist", score * bp)


# --------------------------------------------------------------------------
# ROUGE-L


def _lcs_len(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(corpus: EvalCorpus, beta: float = 1.2) -> MetricScore:
    """LCS-based F-measure per item against the best reference, averaged."""
    scores = []
    for prediction, references in corpus.items:
        pred_toks = eval_tokenize(prediction)
        best = 0.0
        for r in references:
            ref_toks = eval_tokenize(r)
            lcs = _lcs_len(pred_toks, ref_toks)
            if lcs == 0 or not pred_toks or not ref_toks:
                continue
            p = lcs / len(pred_toks)
            rr = lcs / len(ref_toks)
            f = (1 + beta**2) * p * rr / (rr + beta**2 * p)
            best = max(best, f)
        scores.append(best)
    return MetricScore("rouge_l", sum(scores) / len(scores))


# --------------------------------------------------------------------------
# CIDEr


def cider(corpus: EvalCorpus, max_order: int = 4) -> MetricScore:
    """Mean over n=1..4 of the average tf-idf-weighted cosine similarity
    between prediction and references, scaled by 10.  Document frequencies are
    computed over the corpus's reference sets."""
    n_items = len(corpus.items)
    doc_freq: list[Counter] = [Counter() for _ in range(max_order + 1)]
    for _, references in corpus.items:
        seen: list[set] = [set() for _ in range(max_order + 1)]
        for r in references:
            toks = eval_tokenize(r)
            for n in range(1, max_order + 1):
                seen[n].update(_ngrams(toks, n))
        for n in range(1, max_order + 1):
            doc_freq[n].update(seen[n])

    def vec(tokens: Sequence[str], n: int) -> dict:
        counts = _ngrams(tokens, n)
        return {
            g: c * math.log(n_items / doc_freq[n][g])
            for g, c in counts.items()
            if doc_freq[n][g] > 0
        }

    def cosine(u: dict, v: dict) -> float:
        nu = math.sqrt(sum(x * x for x in u.values()))
        nv = math.sqrt(sum(x * x for x in v.values()))
        if nu == 0 or nv == 0:
            return 0.0
        dot = sum(u[g] * v.get(g, 0.0) for g in u)
        return dot / (nu * nv)

    per_n_totals = [0.0] * (max_order + 1)
    for prediction, references in corpus.items:
        pred_toks = eval_tokenize(prediction)
        ref_toklists = [eval_tokenize(r) for r in references]
        for n in range(1, max_order + 1):
            pv = vec(pred_toks, n)
            sims = [cosine(pv, vec(rt, n)) for rt in ref_toklists]
            per_n_totals[n] += sum(sims) / len(sims)
    score = 10.0 * sum(per_n_totals[n] / n_items for n in range(1, max_order + 1)) / max_order
    return MetricScore("cider", score)


# --------------------------------------------------------------------------
# METEOR (exact-match variant)


def _meteor_align(pred: Sequence[str], ref: Sequence[str]) -> tuple[int, int]:
    """Greedy fewest-chunks exact alignment; returns (matches, chunks)."""
    used = [False] * len(ref)
    alignment: list[int | None] = [None] * len(pred)
    prev_ref = -2
    for i, tok in enumerate(pred):
        # Prefer the ref position that continues the current chunk.
        candidates = [j for j, r in enumerate(ref) if r == tok and not used[j]]
        if not candidates:
            continue
        cont = [j for j in candidates if j == prev_ref + 1]
        j = cont[0] if cont else candidates[0]
        used[j] = True
        alignment[i] = j
        prev_ref = j
    matches = sum(1 for a in alignment if a is not None)
    chunks = 0
    prev = None
    for a in alignment:
        if a is None:
            prev = None
            continue
        if prev is None or a != prev + 1:
            chunks += 1
        prev = a
    return matches, chunks


def meteor_lite(
    corpus: EvalCorpus,
    alpha: float = 0.9,
    gamma: float = 0.5,
    theta: float = 3.0,
) -> MetricScore:
    """Exact-match METEOR: unigram alignment with greedy fewest-chunks,
    harmonic mean of precision/recall, fragmentation penalty.  Per item the
    best reference wins; the corpus score is the mean."""
    scores = []
    for prediction, references in corpus.items:
        pred_toks = eval_tokenize(prediction)
        best = 0.0
        for r in references:
            ref_toks = eval_tokenize(r)
            if not pred_toks or not ref_toks:
                continue
            m, chunks = _meteor_align(pred_toks, ref_toks)
            if m == 0:
                continue
            p = m / len(pred_toks)
            rr = m / len(ref_toks)
            fmean = p * rr / (alpha * p + (1 - alpha) * rr)
            penalty = gamma * (chunks / m) ** theta
            best = max(best, fmean * (1 - penalty))
        scores.append(best)
    return MetricScore("meteor_lite", sum(scores) / len(scores))


METRIC_FUNCS = {
    "bleu": bleu,
    "nist": nist,
    "rouge_l": rouge_l,
    "cider": cider,
    "meteor_lite": meteor_lite,
}


def compute_all(corpus: EvalCorpus, names: Sequence[str] | None = None) -> dict[str, float]:
    names = list(names) if names else list(METRIC_FUNCS)
    unknown = [n for n in names if n not in METRIC_FUNCS]
    if unknown:
        raise ValueError(f"unknown metrics: {unknown}")
    return {n: METRIC_FUNCS[n](corpus).value for n in names}


def group_by_mr(
    pairs: Sequence[tuple[str, str, str]]
) -> EvalCorpus:
    """Merge items sharing an identical MR string into one multi-reference
    item: input triples are (mr_string, prediction, reference)."""
    merged: dict[str, tuple[str, list[str]]] = {}
    order: list[str] = []
    for mr_str, prediction, reference in pairs:
        if mr_str not in merged:
            merged[mr_str] = (prediction, [])
            order.append(mr_str)
        merged[mr_str][1].append(reference)
    return EvalCorpus.from_pairs(
        (merged[k][0], merged[k][1]) for k in order
    )
