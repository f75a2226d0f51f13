"""ROUGE-1/2/L, n-gram duplication, and the LEAD3 / MMR extractive baselines."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corpus import tokenize


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float
    empty: bool = False


@dataclass
class RougeScore:
    r1: PRF
    r2: PRF
    rl: PRF

    def as_dict(self) -> dict:
        return {name: {"p": s.precision, "r": s.recall, "f": s.f1}
                for name, s in (("rouge-1", self.r1), ("rouge-2", self.r2), ("rouge-l", self.rl))}


@dataclass
class DuplicationReport:
    ratios: dict = field(default_factory=dict)   # n -> corpus mean duplication ratio
    counts: dict = field(default_factory=dict)   # n -> number of answers contributing


def _as_tokens(x) -> list[str]:
    return tokenize(x) if isinstance(x, str) else [t.lower() for t in x]


def _prf(overlap: int, n_cand: int, n_ref: int) -> PRF:
    if n_cand == 0 or n_ref == 0:
        return PRF(0.0, 0.0, 0.0, empty=True)
    p, r = overlap / n_cand, overlap / n_ref
    f = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return PRF(p, r, f)


def ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate, reference, n: int = 1) -> PRF:
    """Clipped n-gram overlap precision / recall / F1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    c, r = ngrams(_as_tokens(candidate), n), ngrams(_as_tokens(reference), n)
    overlap = sum((c & r).values())
    return _prf(overlap, sum(c.values()), sum(r.values()))


def lcs_length(a, b) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference) -> PRF:
    c, r = _as_tokens(candidate), _as_tokens(reference)
    return _prf(lcs_length(c, r), len(c), len(r))


def rouge(candidate, reference) -> RougeScore:
    return RougeScore(rouge_n(candidate, reference, 1), rouge_n(candidate, reference, 2), rouge_l(candidate, reference))


def corpus_rouge(candidates, references) -> dict:
    """Corpus means of P/R/F1 for R1, R2, RL."""
    if len(candidates) != len(references):
        raise ValueError("candidate and reference counts differ")
    scores = [rouge(c, r) for c, r in zip(candidates, references)]
    out = {}
    for key in ("r1", "r2", "rl"):
        vals = [getattr(s, key) for s in scores]
        out[key] = {
            "p": float(np.mean([v.precision for v in vals])) if vals else 0.0,
            "r": float(np.mean([v.recall for v in vals])) if vals else 0.0,
            "f": float(np.mean([v.f1 for v in vals])) if vals else 0.0,
        }
    return out


def duplication_ratio(tokens, n: int) -> float | None:
    """1 - distinct/total n-grams of one answer; None if shorter than n."""
    grams = [tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1)]
    if not grams:
        return None
    return 1.0 - len(set(grams)) / len(grams)


def duplication(candidates, orders=(1, 2, 3, 4)) -> DuplicationReport:
    if not candidates:
        raise ValueError("duplication needs a non-empty corpus")
    rep = DuplicationReport()
    for n in orders:
        vals = [v for v in (duplication_ratio(_as_tokens(c), n) for c in candidates) if v is not None]
        rep.ratios[n] = float(np.mean(vals)) if vals else 0.0
        rep.counts[n] = len(vals)
    return rep


# -- extractive baselines -----------------------------------------------------


def lead3(sentences) -> str:
    if not sentences:
        raise ValueError("lead3 needs at least one sentence")
    return " ".join(sentences[:3])


def tfidf_vectors(question: str, sentences) -> tuple[np.ndarray, np.ndarray]:
    """TF-IDF rows for the question and each sentence, fitted on this document."""
    from sklearn.feature_extraction.text import TfidfVectorizer

    vec = TfidfVectorizer(analyzer=tokenize)
    m = vec.fit_transform(list(sentences) + [question]).toarray()
    return m[-1], m[:-1]


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    return 0.0 if na == 0 or nb == 0 else float(a @ b / (na * nb))


def mmr_select(q_sim: np.ndarray, s_sim: np.ndarray, lam: float = 0.7, k: int = 3) -> list[int]:
    """Greedy MMR over precomputed similarities; ties go to the lower index."""
    n = len(q_sim)
    selected: list[int] = []
    while len(selected) < min(k, n):
        best, best_score = None, -np.inf
        for i in range(n):
            if i in selected:
                continue
            redundancy = max((s_sim[i, j] for j in selected), default=0.0)
            score = lam * q_sim[i] - (1 - lam) * redundancy
            if score > best_score:
                best, best_score = i, score
        selected.append(best)
    return selected


def mmr_extract(question: str, sentences, lam: float = 0.7, k: int = 3) -> list[int]:
    """Indices picked by maximal marginal relevance with TF-IDF cosine similarity."""
    if not sentences:
        raise ValueError("mmr_extract needs at least one sentence")
    q, S = tfidf_vectors(question, sentences)
    q_sim = np.array([_cosine(s, q) for s in S])
    s_sim = np.array([[_cosine(a, b) for b in S] for a in S])
    return mmr_select(q_sim, s_sim, lam, k)


def mmr_summary(question: str, sentences, lam: float = 0.7, k: int = 3) -> str:
    picked = sorted(mmr_extract(question, sentences, lam, k))
    return " ".join(sentences[i] for i in picked)
