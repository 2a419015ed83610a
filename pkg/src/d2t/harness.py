"""Experiment orchestration: the pretrain -> finetune -> decode -> evaluate
pipeline for all four variants (scratch, mass, nmt, binmt), lexicalized or
delexicalized, plus the low-resource grid.

Every run is a pure function of its config and seeds; the run directory gets
a manifest with a sha256 per artifact so reruns can be compared bitwise.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .batching import make_mass_batches, nlg_pairs, pretrain_pairs
from .corpus import (
    NlgCorpus,
    ParallelCorpus,
    ToyWorldSpec,
    gen_toy_nlg,
    gen_toy_parallel,
    load_nlg,
    load_parallel,
    subsample,
)
from .estimator import Seq2SeqGenerator
from .metrics import compute_all, compute_ser, group_by_mr
from .mr import SurfaceFormTable, format_mr, lexicalize, load_surface_forms
from .subword import SubwordModel, train_subword

VARIANTS = ("scratch", "mass", "nmt", "binmt")


@dataclass
class ExperimentConfig:
    variant: str = "binmt"
    mode: str = "lex"  # lex | delex
    seed: int = 0

    # Toy-world generation (used unless explicit corpus paths are given).
    toy_stems: int = 200
    toy_markers: int = 5
    toy_entities: int = 50
    n_parallel: int = 50000
    n_nlg: int = 2000

    # Explicit corpus ingestion (overrides toy generation when set).
    parallel_path: str | None = None
    nlg_train_path: str | None = None
    nlg_dev_path: str | None = None
    nlg_test_path: str | None = None
    surface_forms_path: str | None = None

    # Subsampling protocols.
    nlg_size: int | None = None
    parallel_fraction: float | None = None

    # Tokenizer / model / training.
    subword_size: int = 600
    subword_train_lines: int = 8000
    layers: int = 2
    heads: int = 4
    d_model: int = 64
    d_ff: int = 256
    dropout: float = 0.1
    label_smoothing: float = 0.1
    max_len: int = 96
    pretrain_steps: int = 3000
    finetune_steps: int = 1200
    batch_size: int = 48
    base_lr: float = 0.5
    # Fine-tuning restarts the LR schedule; a lower peak and a long warmup
    # keep the effective LR small, which preserves pre-trained parameters
    # (a full-strength restart erases the transferred translation skill).
    finetune_lr: float = 0.15
    finetune_warmup: int = 4000
    warmup_steps: int = 400
    mass_span_fraction: float = 0.5
    beam_width: int = 8
    decode_max_len: int = 48

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.mode not in ("lex", "delex"):
            raise ValueError("mode must be lex or delex")
        if self.variant in ("nmt", "binmt", "mass"):
            if self.parallel_path is None and self.n_parallel <= 0:
                raise ValueError(f"variant {self.variant} needs a pre-training corpus")

    @classmethod
    def from_yaml(cls, path: str | Path) -> "ExperimentConfig":
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunData:
    parallel: ParallelCorpus | None
    train: NlgCorpus
    dev: NlgCorpus
    test: NlgCorpus
    surface_forms: SurfaceFormTable


def load_run_data(cfg: ExperimentConfig) -> RunData:
    if cfg.nlg_train_path:
        train = load_nlg(cfg.nlg_train_path, "train")
        dev = load_nlg(cfg.nlg_dev_path, "dev") if cfg.nlg_dev_path else train
        test = load_nlg(cfg.nlg_test_path, "test") if cfg.nlg_test_path else train
        table = (
            load_surface_forms(cfg.surface_forms_path)
            if cfg.surface_forms_path
            else SurfaceFormTable()
        )
        parallel = load_parallel(cfg.parallel_path) if cfg.parallel_path else None
    else:
        spec = ToyWorldSpec(
            n_stems=cfg.toy_stems,
            n_markers=cfg.toy_markers,
            n_entities=cfg.toy_entities,
            seed=cfg.seed,
        )
        parallel = gen_toy_parallel(spec, cfg.n_parallel)
        data = gen_toy_nlg(spec, cfg.n_nlg)
        train, dev, test, table = data.train, data.dev, data.test, data.surface_forms
    if cfg.parallel_fraction is not None and parallel is not None:
        parallel = subsample(parallel, cfg.parallel_fraction, cfg.seed)
    if cfg.nlg_size is not None and cfg.nlg_size < len(train):
        train = subsample(train, cfg.nlg_size, cfg.seed)
    return RunData(parallel=parallel, train=train, dev=dev, test=test, surface_forms=table)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _tokenizer_corpus(data: RunData, cfg: ExperimentConfig) -> list[str]:
    """Tokenizer training text: the pre-training corpus when there is one (so
    the vocabulary is identical across variants and fine-tune sizes), NLG
    train text otherwise."""
    lines: list[str] = []
    if data.parallel is not None:
        for s, t in data.parallel.pairs:
            lines.append(s)
            lines.append(t)
    else:
        for e in data.train.examples:
            lines.append(format_mr(e.mr))
            lines.append(e.reference)
    if len(lines) > cfg.subword_train_lines:
        # Merge statistics saturate quickly; a deterministic subsample keeps
        # tokenizer training fast on large synthetic corpora.
        idx = np.sort(
            np.random.default_rng(cfg.seed).choice(
                len(lines), size=cfg.subword_train_lines, replace=False
            )
        )
        lines = [lines[i] for i in idx]
    return lines


def run_experiment(config: ExperimentConfig, out_dir: str | Path) -> dict:
    """Full pipeline; returns the report dict and writes all artifacts plus a
    manifest into ``out_dir``.  A stage failure persists the partial manifest
    with the failing stage name."""
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"config": config.to_dict(), "stages": [], "artifacts": {}}

    def fail(stage: str, exc: Exception):
        manifest["failed_stage"] = stage
        manifest["error"] = str(exc)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
        raise exc

    def done(stage: str, *artifacts: Path):
        manifest["stages"].append(stage)
        for a in artifacts:
            manifest["artifacts"][a.name] = _sha256(a)

    try:
        data = load_run_data(config)
    except Exception as exc:
        fail("load-data", exc)
    done("load-data")

    try:
        subword = train_subword(_tokenizer_corpus(data, config), config.subword_size)
        subword_path = out / "subword.model"
        subword.save(subword_path)
    except Exception as exc:
        fail("tokenizer-train", exc)
    done("tokenizer-train", subword_path)

    model_kwargs = dict(
        subword=subword,
        layers=config.layers,
        heads=config.heads,
        d_model=config.d_model,
        d_ff=config.d_ff,
        dropout=config.dropout,
        max_len=config.max_len,
        label_smoothing=config.label_smoothing,
        base_lr=config.base_lr,
        warmup_steps=config.warmup_steps,
        batch_size=config.batch_size,
        seed=config.seed,
        beam_width=config.beam_width,
        decode_max_len=config.decode_max_len,
    )

    pretrain_path = None
    if config.variant != "scratch":
        try:
            pre = Seq2SeqGenerator(
                **model_kwargs, steps=config.pretrain_steps, task_tag=config.variant
            )
            if config.variant in ("nmt", "binmt"):
                pairs = pretrain_pairs(data.parallel, config.variant)
                pre.fit([p[0] for p in pairs], [p[1] for p in pairs])
            else:  # mass
                sentences = [s for pair in data.parallel.pairs for s in pair]
                batches = make_mass_batches(
                    sentences,
                    subword,
                    config.mass_span_fraction,
                    config.batch_size,
                    config.pretrain_steps,
                    config.max_len,
                    config.seed,
                )
                pre.fit_batches(batches)
            pretrain_path = out / "pretrain.ckpt"
            pre.save(pretrain_path)
        except Exception as exc:
            fail("pretrain", exc)
        done("pretrain", pretrain_path)

    try:
        ft_kwargs = dict(
            model_kwargs,
            base_lr=config.finetune_lr,
            warmup_steps=config.finetune_warmup,
        )
        ft = Seq2SeqGenerator(
            **ft_kwargs,
            steps=config.finetune_steps,
            task_tag=f"nlg-{config.mode}",
            init_checkpoint=pretrain_path,
        )
        train_pairs = nlg_pairs(data.train, delex=config.mode == "delex")
        ft.fit([p[0] for p in train_pairs], [p[1] for p in train_pairs])
        finetune_path = out / "finetune.ckpt"
        ft.save(finetune_path)
    except Exception as exc:
        fail("finetune", exc)
    done("finetune", finetune_path)

    try:
        test_pairs = nlg_pairs(data.test, delex=False)
        sources = [p[0] for p in test_pairs]
        raw_predictions = ft.predict(sources)
        if config.mode == "delex":
            predictions = [
                lexicalize(pred, e.mr, data.surface_forms)
                for pred, e in zip(raw_predictions, data.test.examples)
            ]
        else:
            predictions = raw_predictions
        decode_path = out / "decodes.jsonl"
        with open(decode_path, "w", encoding="utf-8") as fh:
            for e, raw, pred in zip(data.test.examples, raw_predictions, predictions):
                fh.write(
                    json.dumps(
                        {"mr": format_mr(e.mr), "raw": raw, "prediction": pred},
                        ensure_ascii=False,
                    )
                    + "\n"
                )
    except Exception as exc:
        fail("decode", exc)
    done("decode", decode_path)

    try:
        ser = compute_ser(
            [(e.mr, pred) for e, pred in zip(data.test.examples, predictions)],
            data.surface_forms,
        )
        eval_corpus = group_by_mr(
            [
                (format_mr(e.mr), pred, e.reference)
                for e, pred in zip(data.test.examples, predictions)
            ]
        )
        scores = compute_all(eval_corpus)
        report = {
            "variant": config.variant,
            "mode": config.mode,
            "seed": config.seed,
            "ser": ser.to_dict(),
            "metrics": scores,
            "test_size": len(data.test),
            "train_size": len(data.train),
        }
        report_path = out / "report.json"
        report_path.write_text(json.dumps(report, indent=2, ensure_ascii=False))
    except Exception as exc:
        fail("evaluate", exc)
    done("evaluate", report_path)

    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return report


def run_low_resource_matrix(
    config: ExperimentConfig,
    out_dir: str | Path,
    nlg_sizes: Sequence[int | None] = (100, 1000, None),
    variants: Sequence[str] = ("scratch", "binmt"),
) -> dict:
    """Grid over fine-tune sizes and variants; one run each, consolidated
    BLEU/SER table.  SER is expected to fall as data grows; violations are
    flagged, not enforced."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for variant in variants:
        for size in nlg_sizes:
            run_cfg = dataclasses.replace(config, variant=variant, nlg_size=size)
            label = f"{variant}-{size if size is not None else 'full'}"
            report = run_experiment(run_cfg, out / label)
            rows.append(
                {
                    "variant": variant,
                    "nlg_size": size,
                    "bleu": report["metrics"]["bleu"],
                    "ser": report["ser"]["example_error_rate"],
                }
            )
    flags = []
    for variant in variants:
        ordered = [r for r in rows if r["variant"] == variant]
        ordered.sort(key=lambda r: r["nlg_size"] if r["nlg_size"] is not None else 10**9)
        for a, b in zip(ordered, ordered[1:]):
            if b["ser"] > a["ser"]:
                flags.append(
                    f"{variant}: SER rose from {a['ser']:.3f} (n={a['nlg_size']}) "
                    f"to {b['ser']:.3f} (n={b['nlg_size']})"
                )
    table = {"rows": rows, "monotonicity_flags": flags}
    (out / "matrix.json").write_text(json.dumps(table, indent=2))
    return table
