"""Meaning representations: parsing, linearization, delexicalization and
surface-form tables.

An MR is a dialogue act plus an ordered list of slot key/value pairs, written
in the textual notation ``act(key=value,key2=value2)``.  Values containing
``,`` or ``)`` must be double-quoted.  Linearization flattens an MR into the
plain string fed to the seq2seq model, prefixed with a task token and a
target-language token.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping

DEFAULT_TASK_TOKEN_NLG = "[GENERATE]"
DEFAULT_TASK_TOKEN_MT = "[TRANSLATE]"
LANG_TOKEN_EN = "<2en>"
LANG_TOKEN_CS = "<2cs>"

PLACEHOLDER_PREFIX = "X-"

_PLACEHOLDER_RE = re.compile(r"X-([A-Za-z_][A-Za-z0-9_]*)")


class MrSyntaxError(ValueError):
    """Raised when MR notation cannot be parsed; carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownSlotError(ValueError):
    pass


class LexicalizationError(ValueError):
    pass


@dataclass(frozen=True)
class SlotSchema:
    """Closed slot inventory with per-slot delexicalizability flags."""

    delexicalizable: Mapping[str, bool]

    def __contains__(self, key: str) -> bool:
        return key in self.delexicalizable

    def keys(self) -> list[str]:
        return list(self.delexicalizable)

    def is_delexicalizable(self, key: str) -> bool:
        return self.delexicalizable.get(key, True)

    @classmethod
    def load(cls, path: str | Path) -> "SlotSchema":
        flags: dict[str, bool] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or parts[1] not in ("yes", "no"):
                    raise ValueError(f"{path}:{lineno}: expected 'key<TAB>yes|no', got {line!r}")
                flags[parts[0]] = parts[1] == "yes"
        return cls(delexicalizable=flags)

    @classmethod
    def default(cls) -> "SlotSchema":
        with resources.as_file(resources.files("d2t.data") / "slots.tsv") as p:
            return cls.load(p)


@dataclass(frozen=True)
class MeaningRepresentation:
    act: str
    slots: tuple[tuple[str, str], ...]

    def __post_init__(self):
        keys = [k for k, _ in self.slots]
        if len(keys) != len(set(keys)):
            raise ValueError(f"duplicate slot keys in MR: {keys}")
        for k, v in self.slots:
            if not v:
                raise ValueError(f"empty value for slot {k!r}")

    def value(self, key: str) -> str | None:
        for k, v in self.slots:
            if k == key:
                return v
        return None

    def keys(self) -> list[str]:
        return [k for k, _ in self.slots]


@dataclass(frozen=True)
class Example:
    mr: MeaningRepresentation
    reference: str
    delex_reference: str | None = None

    def __post_init__(self):
        if self.delex_reference is not None:
            mr_keys = set(self.mr.keys())
            for key in _PLACEHOLDER_RE.findall(self.delex_reference):
                if key not in mr_keys:
                    raise ValueError(
                        f"placeholder X-{key} has no matching slot in MR {self.mr}"
                    )


def normalize(text: str) -> str:
    """Matching normalization: NFC, casefold, collapse whitespace, drop spaces
    adjacent to punctuation.  Digits compare verbatim."""
    text = unicodedata.normalize("NFC", text).casefold()
    text = " ".join(text.split())
    text = re.sub(r"\s+([^\w\s])", r"\1", text)
    text = re.sub(r"([^\w\s])\s+", r"\1", text)
    return text


@dataclass(frozen=True)
class SurfaceFormTable:
    """Maps a slot value to the set of acceptable realizations (translations,
    inflections).  Absent values fall back to the identity singleton."""

    entries: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def lookup(self, value: str) -> frozenset[str]:
        return self.entries.get(value, frozenset()) | {value}

    def normalized_lookup(self, value: str) -> frozenset[str]:
        """Forms for matching: always contains the normalized identity form."""
        return frozenset(normalize(f) for f in self.lookup(value))

    @classmethod
    def from_dict(cls, raw: Mapping[str, Iterable[str]]) -> "SurfaceFormTable":
        entries = {
            value: frozenset(forms) | {value} for value, forms in raw.items()
        }
        return cls(entries=entries)


def load_surface_forms(path: str | Path) -> SurfaceFormTable:
    """Read a ``value<TAB>form1|form2|...`` file; duplicate keys union their sets."""
    raw: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(
                    f"{path}:{lineno}: expected 'value<TAB>form1|form2|...', got {line!r}"
                )
            value, forms = parts
            raw.setdefault(value, set()).update(f for f in forms.split("|") if f)
    return SurfaceFormTable.from_dict(raw)


@dataclass(frozen=True)
class LinearizationConfig:
    task_token: str = DEFAULT_TASK_TOKEN_NLG
    lang_token: str = LANG_TOKEN_CS
    kv_separator: str = "="


_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def parse_mr(
    text: str,
    schema: SlotSchema | None = None,
    strict: bool = False,
) -> MeaningRepresentation:
    """Parse ``act(key=value,...)`` notation.

    Values may contain spaces and non-ASCII characters; a value containing
    ``,`` or ``)`` must be double-quoted.  In strict mode unknown slot keys
    are rejected against the schema.
    """
    pos = 0
    m = _IDENT_RE.match(text, pos)
    if not m:
        raise MrSyntaxError("expected dialogue act identifier", pos)
    act = m.group(0)
    pos = m.end()
    if pos >= len(text) or text[pos] != "(":
        raise MrSyntaxError("expected '('", pos)
    pos += 1
    slots: list[tuple[str, str]] = []
    if pos < len(text) and text[pos] == ")":
        pos += 1
    else:
        while True:
            m = _IDENT_RE.match(text, pos)
            if not m:
                raise MrSyntaxError("expected slot key", pos)
            key = m.group(0)
            pos = m.end()
            if pos >= len(text) or text[pos] != "=":
                raise MrSyntaxError("expected '='", pos)
            pos += 1
            if pos < len(text) and text[pos] == '"':
                end = text.find('"', pos + 1)
                if end < 0:
                    raise MrSyntaxError("unterminated quoted value", pos)
                value = text[pos + 1 : end]
                pos = end + 1
            else:
                end = pos
                while end < len(text) and text[end] not in ",)":
                    end += 1
                value = text[pos:end]
                pos = end
            if not value:
                raise MrSyntaxError(f"empty value for slot {key!r}", pos)
            if schema is not None and key not in schema:
                if strict:
                    raise UnknownSlotError(f"unknown slot key {key!r}")
            slots.append((key, value))
            if pos >= len(text):
                raise MrSyntaxError("expected ',' or ')'", pos)
            if text[pos] == ",":
                pos += 1
                continue
            if text[pos] == ")":
                pos += 1
                break
            raise MrSyntaxError("expected ',' or ')'", pos)
    if text[pos:].strip():
        raise MrSyntaxError("trailing characters after ')'", pos)
    return MeaningRepresentation(act=act, slots=tuple(slots))


def format_mr(mr: MeaningRepresentation) -> str:
    """Inverse of parse_mr; quotes values that contain ',' or ')'."""
    parts = []
    for k, v in mr.slots:
        if "," in v or ")" in v or '"' in v:
            v = '"' + v.replace('"', "") + '"'
        parts.append(f"{k}={v}")
    return f"{mr.act}({','.join(parts)})"


def linearize(mr: MeaningRepresentation, cfg: LinearizationConfig) -> str:
    """Flatten an MR to the model input string:
    ``<task> <lang> act key = value key2 = value2 ...``."""
    parts = [cfg.task_token, cfg.lang_token, mr.act]
    for key, value in mr.slots:
        parts.extend([key, cfg.kv_separator, value])
    return " ".join(parts)


def linearize_text(text: str, cfg: LinearizationConfig) -> str:
    """Plain-text passthrough used for translation inputs: token prefixing only."""
    return f"{cfg.task_token} {cfg.lang_token} {text}"


def parse_linearized(
    text: str, cfg: LinearizationConfig, schema: SlotSchema
) -> MeaningRepresentation:
    """Strict inverse of linearize.  Slot keys are recognized against the
    schema; a value runs until the next ``<key> =`` boundary, so values that
    themselves contain such a boundary are not representable (none of the
    dataset values do)."""
    tokens = text.split(" ")
    if len(tokens) < 3 or tokens[0] != cfg.task_token or tokens[1] != cfg.lang_token:
        raise MrSyntaxError("missing task/language token prefix", 0)
    act = tokens[2]
    slots: list[tuple[str, str]] = []
    i = 3

    def at_key(j: int) -> bool:
        return (
            j + 1 < len(tokens)
            and tokens[j] in schema
            and tokens[j + 1] == cfg.kv_separator
        )

    while i < len(tokens):
        if not at_key(i):
            raise MrSyntaxError(f"expected slot key, got {tokens[i]!r}", i)
        key = tokens[i]
        i += 2
        value_toks = []
        while i < len(tokens) and not at_key(i):
            value_toks.append(tokens[i])
            i += 1
        if not value_toks:
            raise MrSyntaxError(f"empty value for slot {key!r}", i)
        slots.append((key, " ".join(value_toks)))
    return MeaningRepresentation(act=act, slots=tuple(slots))


@dataclass(frozen=True)
class DelexResult:
    text: str
    fills: Mapping[str, str]  # placeholder -> matched span (original text)
    unmatched: tuple[str, ...]  # slot keys with no occurrence found


def delexicalize(
    mr: MeaningRepresentation,
    text: str,
    table: SurfaceFormTable,
    schema: SlotSchema | None = None,
) -> DelexResult:
    """Replace slot-value occurrences in ``text`` with ``X-<key>`` placeholders.

    Matching is case-insensitive over all surface forms of each slot value,
    longest form first (so "Kaprova 38" is never shadowed by "Kaprova 3"),
    ties broken by earliest position.  The binary kids_allowed slot is never
    replaced.  Slots with no match are reported, not failed.
    """
    schema = schema or SlotSchema.default()
    result = text
    fills: dict[str, str] = {}
    unmatched: list[str] = []
    for key, value in mr.slots:
        if key == "kids_allowed" or not schema.is_delexicalizable(key):
            continue
        placeholder = PLACEHOLDER_PREFIX + key
        candidates = sorted(table.lookup(value), key=lambda f: (-len(f), f))
        span = None
        for form in candidates:
            if not form:
                continue
            # Case-insensitive, whitespace-flexible match against the raw text.
            pattern = r"\s+".join(re.escape(tok) for tok in form.split())
            m = re.search(pattern, result, flags=re.IGNORECASE)
            if m:
                span = m.span()
                break
        if span is None:
            unmatched.append(key)
            continue
        fills[placeholder] = result[span[0] : span[1]]
        result = result[: span[0]] + placeholder + result[span[1] :]
    return DelexResult(text=result, fills=fills, unmatched=tuple(unmatched))


FormSelector = Callable[[str, str, frozenset[str]], str]


def identity_selector(key: str, value: str, forms: frozenset[str]) -> str:
    return value


def recorded_selector(fills: Mapping[str, str]) -> FormSelector:
    """Selector that replays the spans recorded by delexicalize."""

    def select(key: str, value: str, forms: frozenset[str]) -> str:
        return fills[PLACEHOLDER_PREFIX + key]

    return select


def lexicalize(
    delex_text: str,
    mr: MeaningRepresentation,
    table: SurfaceFormTable,
    selector: FormSelector = identity_selector,
) -> str:
    """Fill ``X-<key>`` placeholders with the selector's choice of surface form.
    Default selector copies the slot value verbatim."""

    def replace(m: re.Match) -> str:
        key = m.group(1)
        value = mr.value(key)
        if value is None:
            raise LexicalizationError(f"placeholder X-{key} has no slot in MR")
        return selector(key, value, table.lookup(value))

    return _PLACEHOLDER_RE.sub(replace, delex_text)
