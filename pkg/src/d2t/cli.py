"""Command-line interface.

Subcommands: tokenizer-train, pretrain, finetune, decode, evaluate, oov-gen,
toy-gen, matrix, eval-serve, eval-report.  Global flags --config/--seed/--out
set defaults that the subcommands pick up.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

import click

from .batching import nlg_pairs
from .corpus import (
    OovSpec,
    ToyWorldSpec,
    gen_toy_nlg,
    gen_toy_parallel,
    load_nlg,
    oov_stats,
    save_nlg,
    save_parallel,
    synth_oov,
)
from .estimator import Seq2SeqGenerator
from .harness import ExperimentConfig, run_experiment, run_low_resource_matrix
from .metrics import compute_all, compute_ser, group_by_mr
from .mr import SurfaceFormTable, format_mr, load_surface_forms
from .rating import TaskStore, aggregate, create_rating_tasks
from .subword import SubwordModel, train_subword


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", type=click.Path(), default="runs/run")
@click.pass_context
def main(ctx, config_path, seed, out_dir):
    """Desk-scale data-to-text experimentation toolkit."""
    ctx.ensure_object(dict)
    cfg = ExperimentConfig.from_yaml(config_path) if config_path else ExperimentConfig()
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    ctx.obj["config"] = cfg
    ctx.obj["out"] = Path(out_dir)


@main.command("tokenizer-train")
@click.option("--input", "inputs", type=click.Path(exists=True), multiple=True, required=True)
@click.option("--target-size", type=int, default=4000)
@click.pass_context
def tokenizer_train(ctx, inputs, target_size):
    """Train the subword model on plain-text files (one sentence per line)."""
    lines = []
    for p in inputs:
        lines.extend(Path(p).read_text(encoding="utf-8").splitlines())
    model = train_subword(lines, target_size)
    out = ctx.obj["out"]
    out.mkdir(parents=True, exist_ok=True)
    path = out / "subword.model"
    model.save(path)
    click.echo(f"wrote {path} (vocab {model.vocab_size})")


@main.command()
@click.pass_context
def pretrain(ctx):
    """Run the pipeline through the pre-training stage only."""
    cfg = dataclasses.replace(ctx.obj["config"], finetune_steps=0)
    report = run_experiment(cfg, ctx.obj["out"])
    click.echo(json.dumps(report, indent=2, ensure_ascii=False))


@main.command()
@click.pass_context
def finetune(ctx):
    """Run the full pipeline (pretrain if the variant needs it, then
    fine-tune, decode and evaluate)."""
    report = run_experiment(ctx.obj["config"], ctx.obj["out"])
    click.echo(json.dumps(report, indent=2, ensure_ascii=False))


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--subword", "subword_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--beam", type=int, default=8)
@click.option("--delex", is_flag=True, default=False)
@click.pass_context
def decode(ctx, checkpoint, subword_path, data_path, beam, delex):
    """Beam-decode a JSON-lines NLG dataset with a trained checkpoint."""
    subword = SubwordModel.load(subword_path)
    est = Seq2SeqGenerator(subword=subword, beam_width=beam)
    est.load(checkpoint)
    est.max_len = est.model_.cfg.max_len
    corpus = load_nlg(data_path)
    sources = [p[0] for p in nlg_pairs(corpus, delex=False)]
    preds = est.predict(sources)
    out = ctx.obj["out"]
    out.mkdir(parents=True, exist_ok=True)
    path = out / "predictions.txt"
    path.write_text("\n".join(preds) + "\n", encoding="utf-8")
    click.echo(f"wrote {path}")


@main.command()
@click.option("--pred", "pred_path", type=click.Path(exists=True), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--surface-forms", "sf_path", type=click.Path(exists=True), default=None)
@click.option("--metrics", "metric_list", default="bleu,nist,rouge_l,cider,meteor_lite")
@click.option("--group-by-mr", "group", is_flag=True, default=False)
@click.pass_context
def evaluate(ctx, pred_path, data_path, sf_path, metric_list, group):
    """Score predictions (one per line) against a JSON-lines dataset; emits a
    JSON report with the overlap metrics and the SER report."""
    corpus = load_nlg(data_path)
    preds = Path(pred_path).read_text(encoding="utf-8").splitlines()
    if len(preds) != len(corpus):
        raise click.ClickException(
            f"prediction count {len(preds)} != dataset size {len(corpus)}"
        )
    table = load_surface_forms(sf_path) if sf_path else SurfaceFormTable()
    names = [m.strip() for m in metric_list.split(",") if m.strip()]
    if group:
        eval_corpus = group_by_mr(
            [
                (format_mr(e.mr), p, e.reference)
                for e, p in zip(corpus.examples, preds)
            ]
        )
    else:
        from .metrics import EvalCorpus

        eval_corpus = EvalCorpus.from_pairs(
            (p, [e.reference]) for e, p in zip(corpus.examples, preds)
        )
    report = {
        "metrics": compute_all(eval_corpus, names),
        "ser": compute_ser(
            [(e.mr, p) for e, p in zip(corpus.examples, preds)], table
        ).to_dict(),
    }
    click.echo(json.dumps(report, indent=2, ensure_ascii=False))


@main.command("oov-gen")
@click.option("--train", "train_path", type=click.Path(exists=True), required=True)
@click.pass_context
def oov_gen(ctx, train_path):
    """Synthesize the 100-MR OOV challenge set against a training corpus."""
    train = load_nlg(train_path)
    spec = OovSpec.default(seed=ctx.obj["config"].seed)
    oov = synth_oov(spec, train)
    out = ctx.obj["out"]
    out.mkdir(parents=True, exist_ok=True)
    path = out / "oov.jsonl"
    save_nlg(oov, path)
    click.echo(json.dumps(oov_stats(oov)))
    click.echo(f"wrote {path}")


@main.command("toy-gen")
@click.option("--n-parallel", type=int, default=50000)
@click.option("--n-nlg", type=int, default=2000)
@click.pass_context
def toy_gen(ctx, n_parallel, n_nlg):
    """Generate the synthetic pseudo-translation world and NLG corpus."""
    cfg = ctx.obj["config"]
    spec = ToyWorldSpec(
        n_stems=cfg.toy_stems,
        n_markers=cfg.toy_markers,
        n_entities=cfg.toy_entities,
        seed=cfg.seed,
    )
    out = ctx.obj["out"]
    out.mkdir(parents=True, exist_ok=True)
    save_parallel(gen_toy_parallel(spec, n_parallel), out / "parallel.tsv")
    data = gen_toy_nlg(spec, n_nlg)
    save_nlg(data.train, out / "train.jsonl")
    save_nlg(data.dev, out / "dev.jsonl")
    save_nlg(data.test, out / "test.jsonl")
    with open(out / "surface_forms.tsv", "w", encoding="utf-8") as fh:
        for value, forms in sorted(data.surface_forms.entries.items()):
            fh.write(f"{value}\t{'|'.join(sorted(forms))}\n")
    click.echo(f"wrote toy world to {out}")


@main.command()
@click.option("--sizes", default="100,1000,full")
@click.option("--variants", default="scratch,binmt")
@click.pass_context
def matrix(ctx, sizes, variants):
    """Low-resource grid: fine-tune sizes x variants, consolidated table."""
    size_list = [None if s == "full" else int(s) for s in sizes.split(",")]
    table = run_low_resource_matrix(
        ctx.obj["config"], ctx.obj["out"], size_list, variants.split(",")
    )
    click.echo(json.dumps(table, indent=2))


@main.command("eval-serve")
@click.option("--ledger", type=click.Path(), required=True)
@click.option("--gold", "gold_path", type=click.Path(exists=True), default=None,
              help="JSON-lines dataset providing gold texts")
@click.option("--system", "systems", multiple=True,
              help="NAME=PREDFILE, one prediction per line; repeatable")
@click.option("-n", "n_examples", type=int, default=200)
@click.option("--static-dir", type=click.Path(), default=None)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.pass_context
def eval_serve(ctx, ledger, gold_path, systems, n_examples, static_dir, host, port):
    """Serve the rating API (and the rater UI when --static-dir is given).
    With --gold/--system, seeds the ledger with rating tasks first."""
    import uvicorn

    from .service import create_app

    store = TaskStore(ledger)
    if gold_path and systems and not store.tasks:
        gold = [json.loads(l)["text"] for l in Path(gold_path).read_text(encoding="utf-8").splitlines() if l.strip()]
        outputs = {}
        for s in systems:
            name, _, path = s.partition("=")
            outputs[name] = Path(path).read_text(encoding="utf-8").splitlines()
        tasks = create_rating_tasks(gold, outputs, n=n_examples, seed=ctx.obj["config"].seed)
        store.add_tasks(tasks)
        click.echo(f"seeded {len(tasks)} tasks")
    app = create_app(store, static_dir)
    uvicorn.run(app, host=host, port=port)


@main.command("eval-report")
@click.option("--ledger", type=click.Path(exists=True), required=True)
def eval_report(ledger):
    """Aggregate a rating ledger into the accuracy/fluency/pairwise report."""
    store = TaskStore(ledger)
    store.audit()
    click.echo(json.dumps(aggregate(store).to_dict(), indent=2))


if __name__ == "__main__":
    main()
