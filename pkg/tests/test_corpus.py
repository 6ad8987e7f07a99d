import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from featlab.corpus import (
    CorpusError,
    Document,
    PAD_INDEX,
    UNK_INDEX,
    Vocabulary,
    encode,
    load_dataset,
    load_embeddings,
    load_vocabulary,
    save_vocabulary,
    tokenize,
)


class TestTokenize:
    def test_lowercase_and_punctuation_split(self):
        assert tokenize("Love it!") == ["love", "it", "!"]

    def test_empty_input(self):
        assert tokenize("") == []

    def test_hyphenated_compound(self):
        # the splitter treats every punctuation mark as its own token
        assert tokenize("My 3-year-old") == ["my", "3", "-", "year", "-", "old"]

    def test_whitespace_collapsed(self):
        assert tokenize("  a \t b\n\nc ") == ["a", "b", "c"]

    @given(st.text(max_size=80))
    def test_never_produces_empty_or_spaced_tokens(self, text):
        for token in tokenize(text):
            assert token
            assert " " not in token
            assert token == token.lower()


class TestLoadDataset:
    def test_minimal_jsonl(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(
            json.dumps({"text": "great stuff", "label": "pos"})
            + "\n"
            + json.dumps({"text": "bad stuff", "label": "neg"})
            + "\n"
        )
        dataset = load_dataset(path)
        assert dataset.classes == ("neg", "pos")
        assert len(dataset.split("train")) == 2
        assert dataset.split("train")[0].label == 1  # "pos" sorts after "neg"

    def test_missing_label_reports_line(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(json.dumps({"text": "x", "label": "a"}) + "\n" + json.dumps({"text": "y"}) + "\n")
        with pytest.raises(CorpusError, match=r":2"):
            load_dataset(path)

    def test_unknown_label_lists_declared_classes(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(json.dumps({"text": "x", "label": "zzz"}) + "\n")
        with pytest.raises(CorpusError, match=r"\['neg', 'pos'\]"):
            load_dataset(path, classes=["neg", "pos"])

    def test_csv_with_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("text,label\ngood food,pos\nbad food,neg\n")
        dataset = load_dataset(path)
        assert dataset.classes == ("neg", "pos")

    def test_directory_splits(self, sentiment_dir):
        dataset = load_dataset(sentiment_dir)
        assert len(dataset.split("train")) == 150
        assert len(dataset.split("dev")) == 50

    def test_full_size_split_counts(self, tmp_path):
        from featlab.synth import sentiment_corpus

        out = sentiment_corpus(tmp_path / "s", n_train=500, n_dev=100, n_test=50, embed_dim=8)
        dataset = load_dataset(out)
        assert (len(dataset.split("train")), len(dataset.split("dev"))) == (500, 100)

    def test_empty_document_rejected(self, tmp_path):
        path = tmp_path / "d.jsonl"
        path.write_text(json.dumps({"text": "   ", "label": "a"}) + "\n")
        with pytest.raises(CorpusError):
            load_dataset(path)


class TestVocabulary:
    def test_reserved_indices(self, sentiment_corpus_loaded):
        dataset, _ = sentiment_corpus_loaded
        vocab = Vocabulary.build(dataset)
        values = vocab.index.values()
        assert min(values) == 2
        assert len(set(values)) == len(vocab.index)

    def test_deterministic(self, sentiment_corpus_loaded):
        dataset, _ = sentiment_corpus_loaded
        assert Vocabulary.build(dataset).index == Vocabulary.build(dataset).index

    def test_roundtrip(self, tmp_path, sentiment_corpus_loaded):
        dataset, _ = sentiment_corpus_loaded
        vocab = Vocabulary.build(dataset)
        save_vocabulary(vocab, tmp_path / "v.json")
        assert load_vocabulary(tmp_path / "v.json").index == vocab.index


class TestEncode:
    @pytest.fixture()
    def vocab(self):
        return Vocabulary(index={"alpha": 2, "beta": 3, "gamma": 4})

    def test_padding(self, vocab):
        doc = Document.make("d", "alpha beta gamma", 0)
        assert encode(doc, vocab, max_len=5).tolist() == [2, 3, 4, 0, 0]

    def test_truncation_keeps_head(self, vocab):
        doc = Document.make("d", "alpha " * 200, 0)
        ids = encode(doc, vocab, max_len=150)
        assert ids.shape == (150,)
        assert set(ids.tolist()) == {2}

    def test_unknown_maps_to_unk(self, vocab):
        doc = Document.make("d", "alpha mystery", 0)
        assert encode(doc, vocab, max_len=4).tolist() == [2, UNK_INDEX, PAD_INDEX, PAD_INDEX]

    @given(st.integers(1, 60))
    def test_length_always_max_len(self, n):
        vocab = Vocabulary(index={"a": 2})
        doc = Document.make("d", " ".join(["a"] * n), 0)
        assert len(encode(doc, vocab, max_len=30)) == 30


class TestEmbeddings:
    def test_rows_match_file(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("alpha 1.5 -2.0\nbeta 0.25 0.125\n")
        vocab = Vocabulary(index={"alpha": 2, "beta": 3})
        table = load_embeddings(path, vocab)
        assert table.matrix[2].tolist() == [1.5, -2.0]
        assert table.matrix[3].tolist() == [0.25, 0.125]

    def test_pad_and_missing_rows_zero(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("alpha 1.0 2.0\n")
        vocab = Vocabulary(index={"alpha": 2, "missing": 3})
        table = load_embeddings(path, vocab)
        assert not table.matrix[PAD_INDEX].any()
        assert not table.matrix[UNK_INDEX].any()
        assert not table.matrix[3].any()

    def test_coverage_fraction(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("".join(f"word{i} 1.0 1.0\n" for i in range(5)))
        vocab = Vocabulary(index={"word0": 2, "word1": 3, "other": 4})
        table = load_embeddings(path, vocab)
        assert table.coverage == pytest.approx(2 / 3, abs=1e-9)

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "e.txt"
        path.write_text("alpha 1.0 2.0\nbeta 1.0\n")
        with pytest.raises(CorpusError, match=r":2"):
            load_embeddings(path, Vocabulary(index={"alpha": 2, "beta": 3}))

    def test_determinism(self, sentiment_dir, sentiment_corpus_loaded):
        dataset, table = sentiment_corpus_loaded
        vocab = Vocabulary.build(dataset)
        again = load_embeddings(sentiment_dir / "embeddings.txt", vocab)
        assert np.array_equal(again.matrix, table.matrix)
        assert again.fingerprint() == table.fingerprint()
