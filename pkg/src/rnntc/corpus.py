"""Text ingestion and encoding: cleaning, vocabulary, sequences, labels, splits.

Everything here is a deterministic function of its inputs (plus an explicit
seed where randomness is involved), so repeated runs reproduce identical
datasets byte for byte.
"""

from __future__ import annotations

import csv
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import (
    InsufficientRecordsError,
    MalformedRowError,
    MissingColumnError,
    UnknownLabelError,
)

PAD_ID = 0
OOV_ID = 1
FIRST_TOKEN_ID = 2

DEFAULT_CLASS_NAMES = ("None", "Minor", "Substantial", "Destroyed")
DEFAULT_VOCAB_SIZE = 100_000
DEFAULT_SEQ_LEN = 2000

_NON_ALNUM = re.compile(r"[^a-z0-9]+")
_VOWELS = set("aeiouy")


@dataclass(frozen=True)
class RawRecord:
    """One occurrence narrative with its damage-level label string."""

    narrative: str
    label: str


@dataclass(frozen=True)
class NormalizationTables:
    """Stop-word set and lemma exception table used by :func:`clean_text`."""

    stop_words: frozenset[str]
    lemma_exceptions: dict[str, str]


def _read_asset_lines(name: str) -> list[str]:
    text = resources.files("rnntc.assets").joinpath(name).read_text(encoding="utf-8")
    lines = []
    for line in text.splitlines():
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        lines.append(line)
    return lines


@lru_cache(maxsize=1)
def load_default_tables() -> NormalizationTables:
    """Load the bundled stop-word list and lemma exception table."""
    stops = frozenset(_read_asset_lines("stopwords.txt"))
    lemmas: dict[str, str] = {}
    for line in _read_asset_lines("lemmas.tsv"):
        surface, _, lemma = line.partition("\t")
        lemmas[surface] = lemma
    return NormalizationTables(stop_words=stops, lemma_exceptions=lemmas)


def _has_vowel(s: str) -> bool:
    return any(c in _VOWELS for c in s)


def _undouble(stem: str) -> str:
    # "stopped" -> "stopp" -> "stop"; keep ll/ss/zz ("fall", "pass")
    if (
        len(stem) >= 2
        and stem[-1] == stem[-2]
        and stem[-1] not in _VOWELS
        and stem[-1] not in "lsz"
    ):
        return stem[:-1]
    return stem


def _lemma_once(token: str, exceptions: dict[str, str]) -> str:
    if token in exceptions:
        return exceptions[token]
    t = token
    # plural-like endings
    if t.endswith("ies") and len(t) > 4:
        t = t[:-3] + "y"
    elif t.endswith("sses"):
        t = t[:-2]
    elif t.endswith(("ss", "us", "is")):
        pass
    elif t.endswith("es") and len(t) > 4 and t[-3] in "hsxz":
        t = t[:-2]
    elif t.endswith("s") and len(t) > 3:
        t = t[:-1]
    # participle endings; "eed" stays ("speed", "agreed")
    if t.endswith("ied") and len(t) > 4:
        t = t[:-3] + "y"
    elif t.endswith("eed"):
        pass
    elif t.endswith("ing") and len(t) > 5 and _has_vowel(t[:-3]):
        t = _undouble(t[:-3])
    elif t.endswith("ed") and len(t) > 4 and _has_vowel(t[:-2]):
        t = _undouble(t[:-2])
    return t


def lemmatize(token: str, tables: NormalizationTables | None = None) -> str:
    """Reduce a token to its lemma via exception lookup then suffix rules.

    Rules are applied until a fixed point is reached, so the function is
    idempotent: ``lemmatize(lemmatize(t)) == lemmatize(t)``.
    """
    if tables is None:
        tables = load_default_tables()
    while True:
        reduced = _lemma_once(token, tables.lemma_exceptions)
        if reduced == token:
            return token
        token = reduced


def clean_text(raw: str, tables: NormalizationTables | None = None) -> list[str]:
    """Normalize a narrative into a list of content tokens.

    Lowercases, replaces punctuation/special characters with spaces, splits
    on whitespace, removes stop words, and lemmatizes each survivor.  Lemmas
    that land on a stop word are dropped as well, which keeps the function
    idempotent on its own output.
    """
    if tables is None:
        tables = load_default_tables()
    stripped = _NON_ALNUM.sub(" ", raw.lower())
    out = []
    for tok in stripped.split():
        if tok in tables.stop_words:
            continue
        lemma = lemmatize(tok, tables)
        if lemma in tables.stop_words:
            continue
        out.append(lemma)
    return out


class Vocabulary:
    """Frequency-ranked token-to-id map with reserved PAD=0 and OOV=1 ids.

    Assigned ids form the dense range ``[2, 2 + n_assigned)``, ordered by
    descending corpus frequency with ties broken by ascending token order.
    """

    def __init__(self, token_to_id: dict[str, int], max_size: int = DEFAULT_VOCAB_SIZE):
        if max_size < 1:
            raise ValueError(f"max_size must be >= 1, got {max_size}")
        n = len(token_to_id)
        if n > max_size:
            raise ValueError(f"{n} assigned tokens exceed max_size={max_size}")
        ids = sorted(token_to_id.values())
        if ids != list(range(FIRST_TOKEN_ID, FIRST_TOKEN_ID + n)):
            raise ValueError("token ids must form the dense range [2, 2+n)")
        self.token_to_id = dict(token_to_id)
        self.max_size = max_size

    @property
    def n_assigned(self) -> int:
        return len(self.token_to_id)

    @property
    def id_bound(self) -> int:
        """Exclusive upper bound on valid ids (PAD and OOV included)."""
        return FIRST_TOKEN_ID + self.n_assigned

    def id_for(self, token: str) -> int:
        return self.token_to_id.get(token, OOV_ID)

    def encode_tokens(self, tokens: list[str]) -> list[int]:
        return [self.token_to_id.get(t, OOV_ID) for t in tokens]

    def __len__(self) -> int:
        return self.n_assigned

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Vocabulary)
            and self.token_to_id == other.token_to_id
            and self.max_size == other.max_size
        )

    def to_dict(self) -> dict:
        return {"max_size": self.max_size, "token_to_id": dict(self.token_to_id)}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls({t: int(i) for t, i in d["token_to_id"].items()}, int(d["max_size"]))


def build_vocabulary(corpus: list[list[str]], max_size: int = DEFAULT_VOCAB_SIZE) -> Vocabulary:
    """Assign ids to the ``max_size`` most frequent tokens of the corpus."""
    if max_size < 1:
        raise ValueError(f"max_size must be >= 1, got {max_size}")
    counts = Counter()
    for tokens in corpus:
        counts.update(tokens)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    token_to_id = {
        token: FIRST_TOKEN_ID + rank for rank, (token, _) in enumerate(ranked[:max_size])
    }
    return Vocabulary(token_to_id, max_size=max_size)


def encode_sequence(
    tokens: list[str],
    vocab: Vocabulary,
    length: int,
    padding: str = "pre",
    truncating: str = "post",
) -> np.ndarray:
    """Map tokens to a fixed-length int64 id vector.

    Unknown tokens map to OOV=1.  Short sequences are zero-padded on the
    ``padding`` side (default before the content); long ones keep the first
    ``length`` ids when ``truncating="post"`` (default) or the last when
    ``"pre"``.
    """
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if padding not in ("pre", "post"):
        raise ValueError(f"padding must be 'pre' or 'post', got {padding!r}")
    if truncating not in ("pre", "post"):
        raise ValueError(f"truncating must be 'pre' or 'post', got {truncating!r}")
    ids = vocab.encode_tokens(tokens)
    if len(ids) > length:
        ids = ids[:length] if truncating == "post" else ids[-length:]
    out = np.zeros(length, dtype=np.int64)
    if ids:
        if padding == "pre":
            out[length - len(ids):] = ids
        else:
            out[: len(ids)] = ids
    return out


@dataclass(frozen=True)
class LabelEncoding:
    """One-hot encoding of a label against an ordered class list."""

    class_names: tuple[str, ...]
    one_hot: np.ndarray
    index: int


def encode_labels(label: str, class_names: tuple[str, ...] | list[str]) -> LabelEncoding:
    """One-hot encode a label, matching class names case-insensitively."""
    names = tuple(class_names)
    lowered = [c.lower() for c in names]
    try:
        index = lowered.index(label.strip().lower())
    except ValueError:
        raise UnknownLabelError(
            f"label {label!r} does not match any of {list(names)}"
        ) from None
    one_hot = np.zeros(len(names), dtype=np.float64)
    one_hot[index] = 1.0
    return LabelEncoding(class_names=names, one_hot=one_hot, index=index)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class DatasetSplit:
    """Disjoint train/validation/test index lists covering all records."""

    train: list[int]
    validation: list[int]
    test: list[int]
    seed: int

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "train": list(self.train),
            "validation": list(self.validation),
            "test": list(self.test),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(
            train=[int(i) for i in d["train"]],
            validation=[int(i) for i in d["validation"]],
            test=[int(i) for i in d["test"]],
            seed=int(d["seed"]),
        )


def split_dataset(
    n: int,
    seed: int,
    test_fraction: float = 0.2,
    validation_fraction: float = 0.1,
) -> DatasetSplit:
    """Shuffle ``range(n)`` with a seeded generator and partition it.

    The test count is round-half-up of ``test_fraction * n``; the validation
    count is round-half-up of ``validation_fraction`` of the remaining pool;
    the rest is train.  Identical seeds reproduce identical splits.
    """
    if n < 3:
        raise InsufficientRecordsError(f"need at least 3 records, got {n}")
    n_test = _round_half_up(test_fraction * n)
    n_pool = n - n_test
    n_val = _round_half_up(validation_fraction * n_pool)
    n_train = n_pool - n_val
    if min(n_test, n_val, n_train) < 1:
        raise InsufficientRecordsError(
            f"{n} records produce an empty split "
            f"(train={n_train}, validation={n_val}, test={n_test})"
        )
    perm = np.random.default_rng(seed).permutation(n)
    return DatasetSplit(
        train=[int(i) for i in perm[n_test + n_val:]],
        validation=[int(i) for i in perm[n_test: n_test + n_val]],
        test=[int(i) for i in perm[:n_test]],
        seed=seed,
    )


def load_csv(
    path: str,
    narrative_column: str = "Summary",
    label_column: str = "damageLevel",
) -> tuple[list[RawRecord], int]:
    """Read records from a UTF-8 CSV with a header row.

    Quoted fields with embedded commas/newlines are supported.  Rows whose
    label field is empty are dropped; the second return value is the count
    of dropped rows.
    """
    records: list[RawRecord] = []
    dropped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (narrative_column, label_column):
            if col not in header:
                raise MissingColumnError(
                    f"column {col!r} not found in header {header} of {path}"
                )
        for i, row in enumerate(reader, start=2):
            narrative = row.get(narrative_column)
            label = row.get(label_column)
            if narrative is None or label is None:
                raise MalformedRowError(
                    f"row {i} of {path} is missing a value for "
                    f"{narrative_column!r} or {label_column!r}"
                )
            if not label.strip():
                dropped += 1
                continue
            records.append(RawRecord(narrative=narrative, label=label.strip()))
    return records, dropped


# --- synthetic corpus -----------------------------------------------------

# Signal keywords are disjoint across classes and are fixed points of the
# normalizer, so the class mapping survives cleaning and is learnable.
CLASS_KEYWORDS: dict[str, tuple[str, ...]] = {
    "None": ("uneventful", "routine", "normal", "nil", "precaution"),
    "Minor": ("scratch", "dent", "chip", "graze", "scuff"),
    "Substantial": ("buckle", "crack", "rupture", "fracture", "warp"),
    "Destroyed": ("wreck", "fire", "explosion", "hull", "burn"),
}

_FILLER_WORDS = (
    "aircraft", "pilot", "crew", "runway", "engine", "flight", "approach",
    "weather", "wind", "taxi", "tower", "airport", "fuel", "gear", "wing",
    "propeller", "visibility", "altitude", "airspeed", "descent", "circuit",
    "maintenance", "inspection", "passenger", "surface",
)

_TEMPLATES = (
    "During the {f0} the {f1} observed {k0} and {k1} near the {f2}.",
    "The {f0} reported {k0} after the {f1}, with {k1} found on the {f2}.",
    "Following an {f0} event, inspection showed {k0} plus {k1} around the {f1}.",
    "A {f0} issue led to {k0}; the {f1} later confirmed {k1} at the {f2}.",
    "The {f0} and {f1} noted {k0}, {k1} and {k2} before the {f2}.",
)


def generate_synthetic_corpus(seed: int, n_per_class: int) -> list[RawRecord]:
    """Emit ``4 * n_per_class`` labeled records with class-specific keywords.

    Records are grouped by class in the default class order.  Every record
    contains at least two keywords from its own class and none from other
    classes, so the label mapping is deterministic and learnable.  Identical
    seeds reproduce identical corpora.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    rng = random.Random(seed)
    records: list[RawRecord] = []
    for class_name in DEFAULT_CLASS_NAMES:
        keywords = CLASS_KEYWORDS[class_name]
        for _ in range(n_per_class):
            template = rng.choice(_TEMPLATES)
            ks = rng.sample(keywords, 3)
            fs = rng.sample(_FILLER_WORDS, 4)
            narrative = template.format(
                k0=ks[0], k1=ks[1], k2=ks[2], f0=fs[0], f1=fs[1], f2=fs[2], f3=fs[3]
            )
            records.append(RawRecord(narrative=narrative, label=class_name))
    return records
