import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msg.corpus import (
    EOS, PAD, SOS, UNK, BatchLimits, DatasetError, RawExample, TokenizedExample, Vocabulary, build_vocab,
    decode_ids, load_dataset, load_embeddings, make_batch, split_sentences, tokenize, write_dataset,
)


def _write_lines(path, records):
    path.write_text("\n".join(r if isinstance(r, str) else json.dumps(r) for r in records) + "\n")
    return path


def _rec(i, **kw):
    rec = {"id": f"x{i}", "question": "how do i fold paper?", "document": "Take a sheet. Fold it.",
           "answer": "fold it."}
    rec.update(kw)
    return rec


class TestLoadDataset:
    def test_passthrough(self, tmp_path):
        ds = load_dataset(_write_lines(tmp_path / "d.jsonl", [_rec(i) for i in range(3)]))
        assert len(ds) == 3
        assert ds[0].document == ["Take a sheet.", "Fold it."]
        assert ds.skipped == 0

    def test_missing_answer_skipped_and_counted(self, tmp_path):
        recs = [_rec(i) for i in range(120)]
        del recs[7]["answer"]
        ds = load_dataset(_write_lines(tmp_path / "d.jsonl", recs), "train")
        assert len(ds) == 119 and ds.skipped == 1 and ds.total_lines == 120

    def test_missing_answer_allowed_outside_train(self, tmp_path):
        recs = [_rec(i) for i in range(3)]
        del recs[0]["answer"]
        assert len(load_dataset(_write_lines(tmp_path / "d.jsonl", recs), "test")) == 3

    def test_too_many_malformed_lines_fail(self, tmp_path):
        recs = [_rec(i) for i in range(50)] + ["{not json"]
        with pytest.raises(DatasetError, match="malformed"):
            load_dataset(_write_lines(tmp_path / "d.jsonl", recs))

    def test_empty_document_rejected_at_load(self, tmp_path):
        recs = [_rec(i) for i in range(200)] + [_rec(999, document="   ")]
        ds = load_dataset(_write_lines(tmp_path / "d.jsonl", recs))
        assert ds.skipped == 1 and len(ds) == 200

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset(tmp_path / "absent.jsonl")

    def test_preserves_sentence_counts(self, tmp_path):
        # WikiHow-shaped records: ~7-token questions, ~20-sentence documents
        rng = np.random.default_rng(0)
        recs, counts = [], []
        for i in range(30):
            n = int(rng.integers(15, 26))
            counts.append(n)
            recs.append(_rec(i, question="how can i keep my garden soil healthy?",
                             document=[f"Step number {j} matters here." for j in range(n)]))
        ds = load_dataset(_write_lines(tmp_path / "d.jsonl", recs))
        assert [len(e.document) for e in ds] == counts
        assert np.mean([len(tokenize(e.question)) for e in ds]) == pytest.approx(9)
        assert 15 <= np.mean(counts) <= 25

    def test_write_then_load_round_trip(self, tmp_path):
        exs = [RawExample("a", "why?", ["One.", "Two."], "one two")]
        write_dataset(tmp_path / "w.jsonl", exs)
        assert load_dataset(tmp_path / "w.jsonl").examples == exs


class TestSplitSentences:
    def test_terminal_punctuation(self):
        assert split_sentences("A. B? C!") == ["A.", "B?", "C!"]

    def test_abbreviation_guard(self):
        assert split_sentences("Dr. Smith left.") == ["Dr. Smith left."]

    def test_presplit_passthrough(self):
        assert split_sentences(["first one", "Second. Two"]) == ["first one", "Second. Two"]

    def test_no_split_before_lowercase(self):
        assert split_sentences("It costs 3.5 dollars. then more") == ["It costs 3.5 dollars. then more"]

    def test_single_sentence_fallback(self):
        assert split_sentences("no terminal punctuation here") == ["no terminal punctuation here"]

    def test_deterministic(self):
        text = "Mix well. Let it rest, e.g. overnight. Serve cold! Enjoy."
        assert split_sentences(text) == split_sentences(text)


class TestTokenize:
    def test_lowercase_words_and_punctuation(self):
        assert tokenize("Don't STOP, now!") == ["don", "'", "t", "stop", ",", "now", "!"]


class TestBuildVocab:
    def _examples(self, words):
        return [RawExample(str(i), w, [w]) for i, w in enumerate(words)]

    def test_frequency_order(self):
        # each question/document pair counts the word twice
        vocab = build_vocab(self._examples(["a", "a", "a", "b", "b", "c"]), max_size=6)
        assert vocab.itos[:4] == ["<pad>", "<unk>", "<s>", "</s>"]
        assert vocab.stoi["a"] == 4 and vocab.stoi["b"] == 5
        assert "c" not in vocab and len(vocab) == 6

    def test_lexicographic_tie_break(self):
        vocab = build_vocab(self._examples(["b", "a"]), max_size=10)
        assert vocab.stoi["a"] < vocab.stoi["b"]

    def test_truncation_reports_coverage(self):
        vocab = build_vocab(self._examples(["a", "a", "a", "b", "b", "c"]), max_size=5)
        assert len(vocab) == 5
        assert vocab.coverage == pytest.approx(6 / 12)

    def test_reserved_ids(self):
        assert (PAD, UNK, SOS, EOS) == (0, 1, 2, 3)

    def test_pure_function_of_input(self):
        exs = self._examples(["x y z", "y z", "z"])
        assert build_vocab(exs, 50).itos == build_vocab(exs, 50).itos

    def test_file_round_trip(self, tmp_path):
        vocab = build_vocab(self._examples(["a b", "b"]), 50)
        vocab.save(tmp_path / "v.tsv")
        back = Vocabulary.load(tmp_path / "v.tsv")
        assert back.itos == vocab.itos and back.counts == vocab.counts


class TestLoadEmbeddings:
    def _vocab(self):
        return Vocabulary(["<pad>", "<unk>", "<s>", "</s>", "cat", "dog"])

    def test_copy_random_fill_and_bad_line(self, tmp_path):
        dim = 300
        cat = np.arange(dim) / 100.0
        lines = ["cat " + " ".join(f"{v:.2f}" for v in cat), "dog " + " ".join(["1.0"] * (dim - 1)),
                 "zebra " + " ".join(["2.0"] * dim)]
        (tmp_path / "e.txt").write_text("\n".join(lines) + "\n")
        mat, stats = load_embeddings(tmp_path / "e.txt", self._vocab(), dim, rng=np.random.default_rng(0))
        np.testing.assert_allclose(mat[4], cat)
        assert np.all(np.abs(mat[5]) <= 0.05)
        assert stats.bad_lines == 1 and stats.hits == 1
        assert mat.shape == (6, dim)


def _tok(q, sents, ans, id_="e"):
    return TokenizedExample(id_, q, sents, ans)


class TestMakeBatch:
    def test_oov_gets_extended_id(self):
        vocab = Vocabulary(["<pad>", "<unk>", "<s>", "</s>", "the", "cat"])
        b = make_batch([_tok(["the"], [["the", "zorp", "cat"]], ["zorp"])], vocab)
        assert b.d_ids[0, 0].tolist() == [4, UNK, 5]
        assert b.d_ext[0, 0].tolist() == [4, 6, 5]
        assert b.oovs == [["zorp"]]
        assert b.target[0].tolist() == [6, EOS]
        assert b.dec_in[0].tolist() == [SOS, UNK]

    def test_oov_lists_are_per_example(self):
        vocab = Vocabulary(["<pad>", "<unk>", "<s>", "</s>", "a"])
        b = make_batch([_tok(["qq"], [["a", "xx"]], ["a"], "1"), _tok(["a"], [["yy", "xx"]], ["xx"], "2")], vocab)
        assert b.oovs == [["qq", "xx"], ["yy", "xx"]]
        assert b.q_ext[0, 0] == 5 and b.d_ext[0, 0, 1] == 6
        assert b.d_ext[1, 0].tolist() == [5, 6]
        assert b.target[1, 0] == 6
        assert b.ext_size == 7

    def test_answer_cap(self):
        vocab = Vocabulary(["<pad>", "<unk>", "<s>", "</s>", "w"])
        b = make_batch([_tok(["w"], [["w"]], ["w"] * 60)], vocab, BatchLimits(max_answer_len=50))
        assert b.target.shape == (1, 51) and b.target[0, 50] == EOS
        assert b.dec_in.shape == b.target.shape and b.dec_in[0, 0] == SOS

    def test_no_sentences_rejected_with_id(self):
        vocab = Vocabulary(["<pad>", "<unk>", "<s>", "</s>"])
        with pytest.raises(ValueError, match="'bad'"):
            make_batch([_tok(["q"], [[]], ["a"], "bad")], vocab)

    def test_answer_oov_absent_from_source_is_unk(self):
        vocab = Vocabulary(["<pad>", "<unk>", "<s>", "</s>", "a"])
        b = make_batch([_tok(["a"], [["a"]], ["nowhere"])], vocab)
        assert b.target[0, 0] == UNK and b.oovs == [[]]

    @settings(max_examples=60, deadline=None)
    @given(data=st.data())
    def test_mask_consistency_and_round_trip(self, data):
        words = ["w%d" % i for i in range(12)]
        word = st.sampled_from(words)
        exs = []
        for k in range(data.draw(st.integers(1, 4))):
            q = data.draw(st.lists(word, min_size=1, max_size=5))
            sents = data.draw(st.lists(st.lists(word, min_size=1, max_size=6), min_size=1, max_size=4))
            ans = data.draw(st.lists(word, min_size=1, max_size=6))
            exs.append(_tok(q, sents, ans, str(k)))
        vocab = Vocabulary(["<pad>", "<unk>", "<s>", "</s>"] + words[:6])
        b = make_batch(exs, vocab)
        assert np.array_equal(b.q_ids == PAD, b.q_mask == 0)
        assert np.array_equal(b.d_ids == PAD, b.d_mask == 0)
        assert np.array_equal(b.d_ext == PAD, b.d_mask == 0)
        for r, ex in enumerate(exs):
            limit = len(vocab) + len(b.oovs[r])
            assert b.d_ext[r].max() < limit and b.q_ext[r].max() < limit and b.target[r].max() < limit
            assert len(set(b.oovs[r])) == len(b.oovs[r])
            for i, s in enumerate(ex.sentences):
                assert decode_ids(b.d_ext[r, i], vocab, b.oovs[r]) == s
            source = set(ex.question) | {w for s in ex.sentences for w in s}
            expect = [w if (w in vocab or w in source) else "<unk>" for w in ex.answer]
            assert decode_ids(b.target[r], vocab, b.oovs[r]) == expect
