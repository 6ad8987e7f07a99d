"""Dataset loading, tokenization, vocabularies and pretrained word embeddings."""

from __future__ import annotations

import csv
import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD_INDEX = 0
UNK_INDEX = 1

SPLIT_NAMES = ("train", "dev", "test")

# words (incl. digits) or single punctuation marks; whitespace never survives
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class CorpusError(ValueError):
    """Malformed dataset, vocabulary or embedding input."""


def tokenize(text: str) -> list[str]:
    """Lowercase `text` and split into word tokens, with punctuation split off.

    "Love it!" -> ["love", "it", "!"]; hyphens and other marks become
    standalone tokens.
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    """One labeled text with its token sequence. `label` indexes the dataset's classes."""

    id: str
    text: str
    tokens: tuple[str, ...]
    label: int

    @classmethod
    def make(cls, doc_id: str, text: str, label: int) -> "Document":
        tokens = tuple(tokenize(text))
        if not tokens:
            raise CorpusError(f"document {doc_id!r} is empty after tokenization")
        return cls(id=doc_id, text=text, tokens=tokens, label=label)


@dataclass
class Dataset:
    name: str
    classes: tuple[str, ...]
    splits: dict[str, list[Document]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.classes:
            raise CorpusError("dataset declares no classes")
        if len(set(self.classes)) != len(self.classes):
            raise CorpusError(f"duplicate class names: {self.classes}")
        for split, docs in self.splits.items():
            for doc in docs:
                if not 0 <= doc.label < len(self.classes):
                    raise CorpusError(
                        f"{split} document {doc.id!r} has label {doc.label}, "
                        f"but only {len(self.classes)} classes are declared"
                    )

    def split(self, name: str) -> list[Document]:
        return self.splits.get(name, [])

    @property
    def class_count(self) -> int:
        return len(self.classes)


def _iter_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"{path}:{lineno}: record is not an object")
            yield lineno, record


def _iter_csv(path: Path):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "text" not in reader.fieldnames or "label" not in reader.fieldnames:
            raise CorpusError(f"{path}: CSV header must contain 'text' and 'label' columns")
        for lineno, record in enumerate(reader, start=2):
            yield lineno, record


def _read_records(path: Path, fmt: str):
    """Yield (lineno, text, label_string, split) tuples, validating each record."""
    iterator = _iter_jsonl(path) if fmt == "jsonl" else _iter_csv(path)
    for lineno, record in iterator:
        if record.get("text") in (None, ""):
            raise CorpusError(f"{path}:{lineno}: record is missing 'text'")
        if record.get("label") in (None, ""):
            raise CorpusError(f"{path}:{lineno}: record is missing 'label'")
        split = record.get("split") or "train"
        if split not in SPLIT_NAMES:
            raise CorpusError(f"{path}:{lineno}: unknown split {split!r}")
        yield lineno, str(record["text"]), str(record["label"]), split


def _guess_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("jsonl", "csv"):
            raise CorpusError(f"unsupported dataset format {fmt!r}")
        return fmt
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".json"):
        return "jsonl"
    if suffix == ".csv":
        return "csv"
    raise CorpusError(f"cannot infer format of {path}; pass format='jsonl' or 'csv'")


def load_dataset(
    path: str | Path,
    format: str | None = None,
    classes: list[str] | None = None,
    name: str | None = None,
) -> Dataset:
    """Load a labeled dataset from a file or a directory of per-split files.

    A directory holds ``train.jsonl`` / ``dev.jsonl`` / ``test.jsonl`` (or .csv).
    A single file holds records with an optional ``split`` field (default train).
    Records are ``{"text": ..., "label": ...}``; labels are strings. When
    `classes` is not given, the class list is the sorted set of label strings.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"dataset path does not exist: {path}")

    sources: list[tuple[Path, str, str | None]] = []  # (file, fmt, forced split)
    if path.is_dir():
        for split in SPLIT_NAMES:
            for suffix, fmt in ((".jsonl", "jsonl"), (".csv", "csv")):
                candidate = path / f"{split}{suffix}"
                if candidate.exists():
                    sources.append((candidate, format or fmt, split))
                    break
        if not sources:
            raise CorpusError(f"no train/dev/test files found under {path}")
    else:
        sources.append((path, _guess_format(path, format), None))

    raw: dict[str, list[tuple[Path, int, str, str]]] = {s: [] for s in SPLIT_NAMES}
    labels_seen: list[str] = []
    for file_path, fmt, forced_split in sources:
        for lineno, text, label, split in _read_records(file_path, fmt):
            split = forced_split or split
            raw[split].append((file_path, lineno, text, label))
            labels_seen.append(label)

    if classes is None:
        class_list = tuple(sorted(set(labels_seen)))
    else:
        class_list = tuple(classes)
    class_index = {c: i for i, c in enumerate(class_list)}

    splits: dict[str, list[Document]] = {}
    for split, records in raw.items():
        if not records:
            continue
        docs = []
        for position, (file_path, lineno, text, label) in enumerate(records):
            if label not in class_index:
                raise CorpusError(
                    f"{file_path}:{lineno}: unknown label {label!r}; "
                    f"declared classes are {list(class_list)}"
                )
            docs.append(Document.make(f"{split}:{position}", text, class_index[label]))
        splits[split] = docs

    return Dataset(name=name or path.stem, classes=class_list, splits=splits)


@dataclass(frozen=True)
class Vocabulary:
    """Word-to-index map. Index 0 is padding, 1 is unknown, words start at 2."""

    index: dict[str, int]

    def __post_init__(self):
        values = sorted(self.index.values())
        if values and (values[0] < 2 or len(set(values)) != len(values)):
            raise CorpusError("vocabulary indices must be unique and >= 2")

    @classmethod
    def build(cls, dataset: Dataset, splits: tuple[str, ...] = ("train",)) -> "Vocabulary":
        """Build from the given splits, ordering words by descending count then spelling."""
        counts: Counter[str] = Counter()
        for split in splits:
            for doc in dataset.split(split):
                counts.update(doc.tokens)
        words = sorted(counts, key=lambda w: (-counts[w], w))
        return cls(index={w: i + 2 for i, w in enumerate(words)})

    @property
    def size(self) -> int:
        """Total row count including the pad and unknown slots."""
        return len(self.index) + 2

    def lookup(self, word: str) -> int:
        return self.index.get(word, UNK_INDEX)

    def to_json(self) -> dict[str, int]:
        return dict(sorted(self.index.items(), key=lambda kv: kv[1]))

    @classmethod
    def from_json(cls, data: dict[str, int]) -> "Vocabulary":
        return cls(index={str(w): int(i) for w, i in data.items()})


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    Path(path).write_text(json.dumps(vocab.to_json(), indent=0, sort_keys=False), encoding="utf-8")


def load_vocabulary(path: str | Path) -> Vocabulary:
    return Vocabulary.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def encode(doc: Document, vocab: Vocabulary, max_len: int = 150) -> np.ndarray:
    """Encode to exactly `max_len` indices: right-padded with 0, truncated on the right."""
    ids = [vocab.lookup(t) for t in doc.tokens[:max_len]]
    ids.extend([PAD_INDEX] * (max_len - len(ids)))
    return np.asarray(ids, dtype=np.int64)


@dataclass
class EmbeddingTable:
    """Frozen word vectors aligned with a vocabulary; rows 0 (pad) and 1 (unk) stay zero."""

    vocab: Vocabulary
    dimension: int
    matrix: np.ndarray  # (vocab.size, dimension) float64
    coverage: float  # fraction of vocabulary words found in the source file

    def __post_init__(self):
        if self.matrix.shape != (self.vocab.size, self.dimension):
            raise CorpusError(
                f"embedding matrix shape {self.matrix.shape} does not match "
                f"vocab size {self.vocab.size} x dimension {self.dimension}"
            )
        self.matrix.setflags(write=False)

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(str(self.matrix.shape).encode())
        digest.update(np.ascontiguousarray(self.matrix, dtype="<f8").tobytes())
        digest.update(json.dumps(self.vocab.to_json(), sort_keys=True).encode())
        return digest.hexdigest()

    @classmethod
    def from_matrix(cls, vocab: Vocabulary, matrix: np.ndarray, coverage: float = 1.0) -> "EmbeddingTable":
        matrix = np.array(matrix, dtype=np.float64)
        matrix[PAD_INDEX] = 0.0
        return cls(vocab=vocab, dimension=matrix.shape[1], matrix=matrix, coverage=coverage)


def load_embeddings(path: str | Path, vocab: Vocabulary, dimension: int | None = None) -> EmbeddingTable:
    """Read a ``word v1 ... vD`` text file and align it with `vocab`.

    Words missing from the file keep an all-zero row (they contribute nothing
    downstream). The first line fixes the dimension unless `dimension` is given.
    """
    path = Path(path)
    rows: dict[int, np.ndarray] = {}
    found = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            word, values = parts[0], parts[1:]
            if dimension is None:
                dimension = len(values)
            if len(values) != dimension:
                raise CorpusError(
                    f"{path}:{lineno}: expected {dimension} values, got {len(values)}"
                )
            idx = vocab.index.get(word)
            if idx is not None:
                try:
                    rows[idx] = np.asarray([float(v) for v in values], dtype=np.float64)
                except ValueError as exc:
                    raise CorpusError(f"{path}:{lineno}: non-numeric value") from exc
                found += 1
    if dimension is None:
        raise CorpusError(f"{path}: no embedding entries found")

    matrix = np.zeros((vocab.size, dimension), dtype=np.float64)
    for idx, vector in rows.items():
        matrix[idx] = vector
    coverage = found / max(1, len(vocab.index))
    return EmbeddingTable(vocab=vocab, dimension=dimension, matrix=matrix, coverage=coverage)
