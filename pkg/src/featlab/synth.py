"""Synthetic labeled corpora with known structure, for demos and test fixtures.

Each generator writes a dataset directory in the documented layout:
train/dev/test.jsonl, an embeddings.txt in word-space-floats format covering
the generated vocabulary, and (where it makes sense) an oracle.json mapping
class keywords to class names for the simulated annotator.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .evaluation import female_terms, male_terms

POS_WORDS = (
    "delicious tasty amazing wonderful fantastic excellent friendly cozy great lovely perfect charming"
).split()

NEG_WORDS = (
    "terrible awful horrible bland rude disgusting stale dirty slow greasy overpriced dreadful"
).split()

FILLERS = (
    "the a an and we i they it was were is are this that of to in at for with on "
    "food place service staff table waiter menu dinner lunch night time order came "
    "back again really very so just about there here our my had got when after "
    "before also then still some more bit little went told asked looked felt"
).split()

SURGEON_WORDS = (
    "surgeon surgical operates operating scalpel incision theatre trauma orthopedic transplant"
).split()

NURSE_WORDS = (
    "nurse nursing ward bedside patients charting triage vitals clinic shift"
).split()

BIO_FILLERS = (
    "is a the works at hospital with years of experience team dedicated skilled "
    "graduated from university department member joined career medical staff "
    "known for care and also has been in this role since completing training"
).split()

ARTIFACT_NAMES = "keith gregg schneider walsh mather bryant dawson".split()

# rare reviewer-name tokens: class-correlated in training splits only
SPURIOUS_POS = "marco lydia priya otto dana nico".split()
SPURIOUS_NEG = "hugo greta ravi sonia felix tara".split()


def _write_jsonl(records, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def write_embeddings(
    words,
    path: Path,
    dim: int = 300,
    seed: int = 0,
    scale: float = 0.5,
    groups: dict[str, str] | None = None,
    coherence: float = 0.6,
) -> None:
    """Reproducible random vectors, one line per word.

    Pretrained vectors place related words near each other; `groups` mimics
    that: words mapped to the same group name share a common direction with
    the given coherence, plus an idiosyncratic remainder.
    """
    rng = np.random.default_rng(seed)
    groups = groups or {}
    unit = lambda v: v / np.linalg.norm(v)
    directions = {name: unit(rng.standard_normal(dim)) for name in sorted(set(groups.values()))}
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for word in sorted(set(words)):
            noise = unit(rng.standard_normal(dim))
            group = groups.get(word)
            if group is None:
                vector = noise * scale
            else:
                vector = (coherence * directions[group] + (1.0 - coherence) * noise) * scale
            fh.write(word + " " + " ".join(f"{v:.5f}" for v in vector) + "\n")


def _zipf_weights(count: int) -> np.ndarray:
    weights = 1.0 / (np.arange(count) + 2.0)
    return weights / weights.sum()


def _compose(rng, class_words, filler_words, n_signal, length, confusers=None, confuse_prob=0.0, zipf=False):
    tokens = [str(rng.choice(filler_words)) for _ in range(length)]
    slots = rng.choice(length, size=min(n_signal, length), replace=False)
    weights = _zipf_weights(len(class_words)) if zipf else None
    for slot in np.atleast_1d(slots):
        tokens[int(slot)] = str(rng.choice(class_words, p=weights))
    if confusers is not None and rng.random() < confuse_prob:
        tokens[int(rng.integers(length))] = str(rng.choice(confusers))
    return tokens


def sentiment_corpus(
    out_dir: str | Path,
    n_train: int = 500,
    n_dev: int = 100,
    n_test: int = 800,
    seed: int = 7,
    label_noise: float = 0.06,
    uninformative_rate: float = 0.18,
    spurious_rate: float = 0.35,
    embed_dim: int = 300,
    coherence: float = 0.45,
) -> Path:
    """Two-class restaurant-review-style corpus with graded feature quality.

    Documents mix class keywords into filler text. A slice of documents
    carries no signal, a slice of labels is flipped, and rare reviewer-name
    tokens co-occur with one class in the training material but are shuffled
    at evaluation time. A small classifier therefore ends up with a spread of
    features: real sentiment detectors, name detectors that do not transfer,
    and near-dead filler features.
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    pools = {"neg": NEG_WORDS, "pos": POS_WORDS}
    opposite = {"neg": POS_WORDS, "pos": NEG_WORDS}
    spurious = {"pos": SPURIOUS_POS, "neg": SPURIOUS_NEG}
    all_spurious = SPURIOUS_POS + SPURIOUS_NEG

    def make_docs(count, correlated_names):
        records = []
        for _ in range(count):
            name = "pos" if rng.random() < 0.5 else "neg"
            length = int(rng.integers(8, 26))
            if rng.random() < uninformative_rate:
                tokens = [str(rng.choice(FILLERS)) for _ in range(length)]
            else:
                tokens = _compose(
                    rng,
                    pools[name],
                    FILLERS,
                    n_signal=1 if rng.random() < 0.7 else 2,
                    length=length,
                    confusers=opposite[name],
                    confuse_prob=0.10,
                    zipf=True,
                )
            if correlated_names:
                if rng.random() < spurious_rate:
                    tokens[int(rng.integers(len(tokens)))] = str(rng.choice(spurious[name]))
            elif rng.random() < 0.15:
                tokens[int(rng.integers(len(tokens)))] = str(rng.choice(all_spurious))
            if rng.random() < 0.3:
                tokens.append("!")
            label = name
            if rng.random() < label_noise:
                label = "pos" if name == "neg" else "neg"
            records.append({"text": " ".join(tokens), "label": label})
        return records

    _write_jsonl(make_docs(n_train, True), out_dir / "train.jsonl")
    _write_jsonl(make_docs(n_dev, False), out_dir / "dev.jsonl")
    _write_jsonl(make_docs(n_test, False), out_dir / "test.jsonl")

    vocabulary = set(POS_WORDS) | set(NEG_WORDS) | set(FILLERS) | set(all_spurious) | {"!"}
    groups = {w: "pos" for w in POS_WORDS}
    groups.update({w: "neg" for w in NEG_WORDS})
    write_embeddings(vocabulary, out_dir / "embeddings.txt", dim=embed_dim, seed=seed, groups=groups, coherence=coherence)

    oracle = {w: "pos" for w in POS_WORDS}
    oracle.update({w: "neg" for w in NEG_WORDS})
    (out_dir / "oracle.json").write_text(json.dumps(oracle, indent=0, sort_keys=True), encoding="utf-8")
    return out_dir


def biased_corpus(
    out_dir: str | Path,
    n_train: int = 1200,
    n_dev: int = 300,
    n_test: int = 800,
    seed: int = 11,
    gender_class_correlation: float = 0.9,
    label_noise: float = 0.02,
    embed_dim: int = 300,
) -> Path:
    """Occupation bios with a planted gender shortcut.

    In the training split, gendered words co-occur with one occupation with the
    given probability; in dev/test the pairing is independent (50/50), so a
    model leaning on gendered words produces uneven error rates between the
    male and female subpopulations.
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    male = list(male_terms())
    female = list(female_terms())
    occupations = {"surgeon": SURGEON_WORDS, "nurse": NURSE_WORDS}

    def make_docs(count, correlated):
        records = []
        for _ in range(count):
            name = "surgeon" if rng.random() < 0.5 else "nurse"
            if correlated:
                aligned = rng.random() < gender_class_correlation
                use_male = aligned if name == "surgeon" else not aligned
            else:
                use_male = rng.random() < 0.5
            gender_pool = male if use_male else female
            length = int(rng.integers(10, 24))
            tokens = _compose(
                rng,
                occupations[name],
                BIO_FILLERS,
                n_signal=int(rng.integers(1, 3)),
                length=length,
            )
            for _ in range(int(rng.integers(2, 5))):
                tokens[int(rng.integers(length))] = str(rng.choice(gender_pool))
            label = name
            if rng.random() < label_noise:
                label = "nurse" if name == "surgeon" else "surgeon"
            records.append({"text": " ".join(tokens), "label": label})
        return records

    _write_jsonl(make_docs(n_train, correlated=True), out_dir / "train.jsonl")
    _write_jsonl(make_docs(n_dev, correlated=True), out_dir / "dev.jsonl")
    _write_jsonl(make_docs(n_test, correlated=False), out_dir / "test.jsonl")

    vocabulary = set(SURGEON_WORDS) | set(NURSE_WORDS) | set(BIO_FILLERS) | set(male) | set(female)
    groups = {w: "surgeon" for w in SURGEON_WORDS}
    groups.update({w: "nurse" for w in NURSE_WORDS})
    groups.update({w: "male" for w in male})
    groups.update({w: "female" for w in female})
    write_embeddings(vocabulary, out_dir / "embeddings.txt", dim=embed_dim, seed=seed, groups=groups)

    oracle = {w: "surgeon" for w in SURGEON_WORDS}
    oracle.update({w: "nurse" for w in NURSE_WORDS})
    (out_dir / "oracle.json").write_text(json.dumps(oracle, indent=0, sort_keys=True), encoding="utf-8")
    return out_dir


def shifted_corpus(
    out_dir: str | Path,
    n_train: int = 600,
    n_dev: int = 150,
    n_test: int = 600,
    seed: int = 23,
    artifact_rate: float = 0.7,
    embed_dim: int = 300,
) -> Path:
    """Sentiment corpus whose training split carries class-correlated artifact
    tokens (person names) that are absent at test time: a dataset-shift setup."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    pools = {"neg": NEG_WORDS, "pos": POS_WORDS}

    def make_docs(count, with_artifacts):
        records = []
        for _ in range(count):
            name = "pos" if rng.random() < 0.5 else "neg"
            length = int(rng.integers(8, 22))
            tokens = _compose(rng, pools[name], FILLERS, n_signal=int(rng.integers(1, 3)), length=length)
            if with_artifacts and name == "pos" and rng.random() < artifact_rate:
                tokens[int(rng.integers(length))] = str(rng.choice(ARTIFACT_NAMES))
            records.append({"text": " ".join(tokens), "label": name})
        return records

    _write_jsonl(make_docs(n_train, True), out_dir / "train.jsonl")
    _write_jsonl(make_docs(n_dev, True), out_dir / "dev.jsonl")
    _write_jsonl(make_docs(n_test, False), out_dir / "test.jsonl")

    vocabulary = set(POS_WORDS) | set(NEG_WORDS) | set(FILLERS) | set(ARTIFACT_NAMES)
    groups = {w: "pos" for w in POS_WORDS}
    groups.update({w: "neg" for w in NEG_WORDS})
    groups.update({w: "names" for w in ARTIFACT_NAMES})
    write_embeddings(vocabulary, out_dir / "embeddings.txt", dim=embed_dim, seed=seed, groups=groups)
    oracle = {w: "pos" for w in POS_WORDS}
    oracle.update({w: "neg" for w in NEG_WORDS})
    (out_dir / "oracle.json").write_text(json.dumps(oracle, indent=0, sort_keys=True), encoding="utf-8")
    return out_dir


CATEGORY_WORDS = {
    "clothing": "jacket sleeve cotton zipper collar fabric sweater denim".split(),
    "music": "album guitar chorus vinyl melody drummer lyrics tempo".split(),
    "office": "printer stapler toner binder envelope desk folders ink".split(),
    "toys": "puzzle lego doll blocks playset stuffed marbles kite".split(),
}


def category_corpus(
    out_dir: str | Path,
    n_train: int = 240,
    n_dev: int = 80,
    n_test: int = 240,
    seed: int = 31,
    embed_dim: int = 300,
) -> Path:
    """Four-class product-review corpus for multiclass paths."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    names = sorted(CATEGORY_WORDS)

    def make_docs(count):
        records = []
        for _ in range(count):
            name = names[int(rng.integers(len(names)))]
            length = int(rng.integers(8, 20))
            tokens = _compose(rng, CATEGORY_WORDS[name], FILLERS, n_signal=int(rng.integers(1, 4)), length=length)
            records.append({"text": " ".join(tokens), "label": name})
        return records

    _write_jsonl(make_docs(n_train), out_dir / "train.jsonl")
    _write_jsonl(make_docs(n_dev), out_dir / "dev.jsonl")
    _write_jsonl(make_docs(n_test), out_dir / "test.jsonl")
    vocabulary = set(FILLERS)
    groups = {}
    for name, words in CATEGORY_WORDS.items():
        vocabulary |= set(words)
        groups.update({w: name for w in words})
    write_embeddings(vocabulary, out_dir / "embeddings.txt", dim=embed_dim, seed=seed, groups=groups)
    oracle = {w: name for name, words in CATEGORY_WORDS.items() for w in words}
    (out_dir / "oracle.json").write_text(json.dumps(oracle, indent=0, sort_keys=True), encoding="utf-8")
    return out_dir
