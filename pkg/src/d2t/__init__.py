"""Desk-scale data-to-text toolkit: meaning representations, subword
tokenization, transformer seq2seq with translation pre-training, decoding and
evaluation."""

from .mr import (
    Example,
    LinearizationConfig,
    MeaningRepresentation,
    SlotSchema,
    SurfaceFormTable,
    delexicalize,
    lexicalize,
    linearize,
    load_surface_forms,
    parse_mr,
)
from .metrics import EvalCorpus, SerReport, compute_all, compute_ser
from .subword import SubwordModel, train_subword
from .estimator import Seq2SeqGenerator

__all__ = [
    "Example",
    "LinearizationConfig",
    "MeaningRepresentation",
    "SlotSchema",
    "SurfaceFormTable",
    "delexicalize",
    "lexicalize",
    "linearize",
    "load_surface_forms",
    "parse_mr",
    "EvalCorpus",
    "SerReport",
    "compute_all",
    "compute_ser",
    "SubwordModel",
    "train_subword",
    "Seq2SeqGenerator",
]
