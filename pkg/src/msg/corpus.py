"""Dataset ingestion, tokenization, vocabulary, embeddings and batch assembly."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

PAD, UNK, SOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<s>", "</s>")

MAX_MALFORMED_FRACTION = 0.01


class DatasetError(ValueError):
    pass


@dataclass
class RawExample:
    id: str
    question: str
    document: list[str]
    answer: str = ""


@dataclass
class Dataset:
    examples: list[RawExample]
    total_lines: int = 0
    skipped: int = 0
    skipped_ids: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter(self.examples)

    def __len__(self):
        return len(self.examples)

    def __getitem__(self, i):
        return self.examples[i]


# -- text processing ----------------------------------------------------------

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

ABBREVIATIONS = frozenset(
    "mr mrs ms dr prof sr jr st vs etc fig figs eq eqs no vol inc ltd co corp dept approx al e.g i.e".split()
)

_BOUNDARY_RE = re.compile(r"[.!?]+[\"')\]]*\s+(?=[\"'(\[]?[A-Z])")


def tokenize(text: str) -> list[str]:
    """Lowercased word / punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


def split_sentences(document) -> list[str]:
    """Rule-based sentence splitter.

    Breaks after terminal punctuation followed by whitespace and a capital
    letter, unless the word ending in the period is a known abbreviation.
    Lists are treated as already split.
    """
    if isinstance(document, (list, tuple)):
        return [s for s in (str(x).strip() for x in document) if s]
    text = " ".join(document.split())
    if not text:
        return []
    sentences, start = [], 0
    for m in _BOUNDARY_RE.finditer(text):
        chunk = text[start: m.end()].rstrip()
        last_word = chunk.rsplit(None, 1)[-1].rstrip(".!?\"')]").lower()
        if chunk.rstrip("\"')]").endswith(".") and last_word in ABBREVIATIONS:
            continue
        sentences.append(chunk)
        start = m.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


# -- dataset files ------------------------------------------------------------


def load_dataset(path, split: str = "train") -> Dataset:
    """Read line-delimited JSON records {id, question, document, answer}.

    ``document`` is a string or a list of sentences.  Invalid records are
    skipped and counted; more than 1% invalid lines is a hard failure.
    Answers are required only for the ``train`` split.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    need_answer = split == "train"
    ds = Dataset(examples=[])
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        ds.total_lines += 1
        try:
            ex = _parse_record(json.loads(line), lineno, need_answer)
        except (ValueError, TypeError, KeyError) as exc:
            ds.skipped += 1
            ds.skipped_ids.append(f"line {lineno}")
            log.debug("%s:%d skipped: %s", path, lineno, exc)
            continue
        ds.examples.append(ex)
    if ds.total_lines and ds.skipped / ds.total_lines > MAX_MALFORMED_FRACTION:
        raise DatasetError(
            f"{path}: {ds.skipped}/{ds.total_lines} malformed records exceeds {MAX_MALFORMED_FRACTION:.0%}"
        )
    if ds.skipped:
        log.warning("%s: skipped %d malformed record(s)", path, ds.skipped)
    return ds


def _parse_record(rec, lineno: int, need_answer: bool) -> RawExample:
    if not isinstance(rec, dict):
        raise TypeError("record is not an object")
    question = str(rec["question"]).strip()
    sentences = split_sentences(rec["document"])
    answer = rec.get("answer")
    if not question:
        raise ValueError("empty question")
    if not sentences:
        raise ValueError("empty document")
    if need_answer and (answer is None or not str(answer).strip()):
        raise ValueError("missing answer")
    return RawExample(id=str(rec.get("id", lineno)), question=question, document=sentences,
                      answer="" if answer is None else str(answer).strip())


def write_dataset(path, examples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            rec = {"id": ex.id, "question": ex.question, "document": list(ex.document), "answer": ex.answer}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


# -- vocabulary ---------------------------------------------------------------


class Vocabulary:
    def __init__(self, tokens, counts=None):
        tokens = list(tokens)
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.itos = tokens
        self.stoi = {t: i for i, t in enumerate(tokens)}
        if len(self.stoi) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")
        self.counts = list(counts) if counts is not None else [0] * len(tokens)
        self.coverage = 1.0

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK)

    def token(self, i: int) -> str:
        return self.itos[i]

    def encode(self, tokens) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok, cnt in zip(self.itos, self.counts):
                fh.write(f"{tok}\t{cnt}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        tokens, counts = [], []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            tok, _, cnt = line.rpartition("\t")
            tokens.append(tok)
            counts.append(int(cnt))
        return cls(tokens, counts)


def example_tokens(ex: RawExample):
    yield from tokenize(ex.question)
    for s in ex.document:
        yield from tokenize(s)
    if ex.answer:
        yield from tokenize(ex.answer)


def build_vocab(examples, max_size: int = 50_000) -> Vocabulary:
    """Frequency-ranked vocabulary (ties lexicographic) with reserved ids first.

    ``max_size`` counts the reserved entries.
    """
    if max_size < len(RESERVED):
        raise ValueError(f"max_size must be at least {len(RESERVED)}")
    counts = Counter()
    for ex in examples:
        counts.update(example_tokens(ex))
    for r in RESERVED:
        counts.pop(r, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = ranked[: max_size - len(RESERVED)]
    vocab = Vocabulary(list(RESERVED) + [t for t, _ in kept], [0] * len(RESERVED) + [c for _, c in kept])
    total = sum(counts.values())
    vocab.coverage = (sum(c for _, c in kept) / total) if total else 1.0
    if len(kept) < len(ranked):
        log.info("vocabulary truncated to %d of %d types; token coverage %.4f",
                 len(vocab), len(ranked) + len(RESERVED), vocab.coverage)
    return vocab


# -- embeddings ---------------------------------------------------------------


@dataclass
class EmbeddingStats:
    hits: int
    vocab_size: int
    bad_lines: int

    @property
    def hit_rate(self) -> float:
        return self.hits / self.vocab_size if self.vocab_size else 0.0


def load_embeddings(path, vocab: Vocabulary, dim: int = 300, init_range: float = 0.05,
                    rng: np.random.Generator | None = None):
    """GloVe-style text file -> (|V| x dim matrix, stats).

    Rows for tokens missing from the file are drawn uniformly from
    [-init_range, init_range]; lines with the wrong width are skipped.
    """
    rng = rng or np.random.default_rng(0)
    matrix = rng.uniform(-init_range, init_range, size=(len(vocab), dim))
    matrix[PAD] = 0.0
    hits, bad = set(), 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").rstrip().split(" ")
            if len(parts) != dim + 1:
                bad += 1
                continue
            idx = vocab.stoi.get(parts[0])
            if idx is None or idx == PAD:
                continue
            try:
                matrix[idx] = np.asarray(parts[1:], dtype=np.float64)
            except ValueError:
                bad += 1
                continue
            hits.add(idx)
    stats = EmbeddingStats(hits=len(hits), vocab_size=len(vocab), bad_lines=bad)
    log.info("embeddings: %d/%d vocabulary hits (%.1f%%), %d bad lines",
             stats.hits, stats.vocab_size, 100 * stats.hit_rate, bad)
    return matrix, stats


# -- batching -----------------------------------------------------------------


@dataclass(frozen=True)
class BatchLimits:
    max_question_len: int = 30
    max_sentences: int = 25
    max_sentence_len: int = 40
    max_answer_len: int = 50


@dataclass
class TokenizedExample:
    id: str
    question: list[str]
    sentences: list[list[str]]
    answer: list[str]

    @classmethod
    def from_raw(cls, ex: RawExample) -> "TokenizedExample":
        sents = [t for t in (tokenize(s) for s in ex.document) if t]
        return cls(ex.id, tokenize(ex.question), sents, tokenize(ex.answer) if ex.answer else [])


@dataclass
class Batch:
    ids: list[str]
    q_ids: np.ndarray        # (B, Lq)
    q_mask: np.ndarray       # (B, Lq)
    d_ids: np.ndarray        # (B, n, Ls)
    d_mask: np.ndarray       # (B, n, Ls)
    sent_mask: np.ndarray    # (B, n)
    q_ext: np.ndarray        # (B, Lq) extended-vocabulary ids
    d_ext: np.ndarray        # (B, n, Ls)
    oovs: list[list[str]]
    dec_in: np.ndarray       # (B, T) SOS-shifted, OOV -> UNK
    target: np.ndarray       # (B, T) extended ids, answer + EOS
    target_mask: np.ndarray  # (B, T)
    vocab_size: int
    sentences: list[list[list[str]]] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.ids)

    @property
    def max_oovs(self) -> int:
        return max((len(o) for o in self.oovs), default=0)

    @property
    def ext_size(self) -> int:
        return self.vocab_size + self.max_oovs

    def select(self, rows) -> "Batch":
        rows = list(rows)
        return Batch(
            ids=[self.ids[r] for r in rows],
            q_ids=self.q_ids[rows], q_mask=self.q_mask[rows],
            d_ids=self.d_ids[rows], d_mask=self.d_mask[rows], sent_mask=self.sent_mask[rows],
            q_ext=self.q_ext[rows], d_ext=self.d_ext[rows],
            oovs=[self.oovs[r] for r in rows],
            dec_in=self.dec_in[rows], target=self.target[rows], target_mask=self.target_mask[rows],
            vocab_size=self.vocab_size,
            sentences=[self.sentences[r] for r in rows] if self.sentences else [],
        )


def _ext_ids(tokens, vocab: Vocabulary, oovs: list[str], oov_index: dict, grow: bool) -> list[int]:
    out = []
    for tok in tokens:
        i = vocab.stoi.get(tok)
        if i is not None:
            out.append(i)
            continue
        j = oov_index.get(tok)
        if j is None:
            if not grow:
                out.append(UNK)
                continue
            j = oov_index[tok] = len(oovs)
            oovs.append(tok)
        out.append(len(vocab) + j)
    return out


def make_batch(examples, vocab: Vocabulary, limits: BatchLimits = BatchLimits()) -> Batch:
    """Pad tokenized examples into index arrays with per-example OOV extension."""
    examples = [ex if isinstance(ex, TokenizedExample) else TokenizedExample.from_raw(ex) for ex in examples]
    if not examples:
        raise ValueError("empty batch")
    V = len(vocab)
    rows = []
    for ex in examples:
        q = ex.question[: limits.max_question_len]
        sents = [s[: limits.max_sentence_len] for s in ex.sentences if s][: limits.max_sentences]
        if not sents:
            raise ValueError(f"example {ex.id!r} has no sentences after applying caps")
        if not q:
            raise ValueError(f"example {ex.id!r} has an empty question")
        oovs, oov_index = [], {}
        q_ext = _ext_ids(q, vocab, oovs, oov_index, grow=True)
        s_ext = [_ext_ids(s, vocab, oovs, oov_index, grow=True) for s in sents]
        ans = ex.answer[: limits.max_answer_len]
        tgt = _ext_ids(ans, vocab, oovs, oov_index, grow=False) + [EOS]
        dec = [SOS] + [t if t < V else UNK for t in tgt[:-1]]
        rows.append((ex.id, q, sents, q_ext, s_ext, oovs, dec, tgt))

    B = len(rows)
    Lq = max(len(r[1]) for r in rows)
    n = max(len(r[2]) for r in rows)
    Ls = max(len(s) for r in rows for s in r[2])
    T = max(len(r[7]) for r in rows)
    q_ids = np.zeros((B, Lq), np.int64)
    q_ext = np.zeros((B, Lq), np.int64)
    d_ids = np.zeros((B, n, Ls), np.int64)
    d_ext = np.zeros((B, n, Ls), np.int64)
    dec_in = np.zeros((B, T), np.int64)
    target = np.zeros((B, T), np.int64)
    for b, (_, q, sents, qe, se, _, dec, tgt) in enumerate(rows):
        q_ids[b, : len(q)] = vocab.encode(q)
        q_ext[b, : len(qe)] = qe
        for i, (s, e) in enumerate(zip(sents, se)):
            d_ids[b, i, : len(s)] = vocab.encode(s)
            d_ext[b, i, : len(e)] = e
        dec_in[b, : len(dec)] = dec
        target[b, : len(tgt)] = tgt
    q_mask = np.zeros((B, Lq), np.float64)
    d_mask = np.zeros((B, n, Ls), np.float64)
    tmask = np.zeros((B, T), np.float64)
    for b, r in enumerate(rows):
        q_mask[b, : len(r[1])] = 1
        for i, s in enumerate(r[2]):
            d_mask[b, i, : len(s)] = 1
        tmask[b, : len(r[7])] = 1
    return Batch(
        ids=[r[0] for r in rows], q_ids=q_ids, q_mask=q_mask, d_ids=d_ids, d_mask=d_mask,
        sent_mask=(d_mask.sum(-1) > 0).astype(np.float64), q_ext=q_ext, d_ext=d_ext,
        oovs=[r[5] for r in rows], dec_in=dec_in, target=target, target_mask=tmask, vocab_size=V,
        sentences=[r[2] for r in rows],
    )


def decode_ids(ids, vocab: Vocabulary, oovs) -> list[str]:
    """Map extended ids back to token strings, stopping at EOS and skipping PAD."""
    out = []
    V = len(vocab)
    for i in ids:
        i = int(i)
        if i == EOS:
            break
        if i == PAD:
            continue
        out.append(vocab.itos[i] if i < V else oovs[i - V])
    return out
