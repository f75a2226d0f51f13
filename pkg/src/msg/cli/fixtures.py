"""Synthetic corpora for smoke tests and trend checks.

copy      answer = the one sentence containing the question's key word
multihop  answer = the sentence holding the question's topic word followed by
          the sentence that shares its link word (never mentioned by the
          question); by default a second, unrelated linked pair is planted
repeat    answer = two sentences that share a phrase which also occurs in a
          third sentence, which invites looping during decoding
"""

from __future__ import annotations

import itertools

import numpy as np

from ..corpus import RawExample

TASKS = ("copy", "multihop", "repeat")

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def word_inventory(size: int) -> list[str]:
    """Fixed, seed-independent list of pronounceable pseudo-words."""
    words = ["".join(p) for p in itertools.product(_CONSONANTS, _VOWELS, _CONSONANTS, _VOWELS)]
    order = np.random.default_rng(20201116).permutation(len(words))
    return [words[i] for i in order[:size]]


# closed word sets the multihop task keys on, taken from the tail of the
# inventory so they never collide with a filler pool
_INVENTORY_SIZE = len(_CONSONANTS) ** 2 * len(_VOWELS) ** 2
TOPIC_WORDS = word_inventory(_INVENTORY_SIZE)[-12:]
LINK_WORDS = word_inventory(_INVENTORY_SIZE)[-24:-12]


def _sentence(words) -> str:
    return " ".join(words) + " ."


def _fresh(rng, pool: list[str], used: set, k: int) -> list[str]:
    out = []
    while len(out) < k:
        w = pool[rng.integers(len(pool))]
        if w not in used:
            used.add(w)
            out.append(w)
    return out


def copy_example(rng, pool, idx: int, n_sent: int = 4, sent_len: int = 5) -> RawExample:
    used: set = set()
    sents = [_fresh(rng, pool, used, sent_len) for _ in range(n_sent)]
    target = int(rng.integers(n_sent))
    key = sents[target][int(rng.integers(sent_len))]
    doc = [_sentence(s) for s in sents]
    return RawExample(f"copy-{idx}", f"what about {key} ?", doc, doc[target])


def multihop_example(rng, pool, idx: int, n_sent: int = 6, sent_len: int = 5,
                     distractor: bool = True) -> RawExample:
    """Every sentence carries one topic word and one link word; only the
    chained sentence repeats the key sentence's link word.  With
    ``distractor`` two other sentences also share a link word, so spotting a
    repeated link is not enough without starting from the key sentence."""
    used: set = set()
    sents = [_fresh(rng, pool, used, sent_len - 2) for _ in range(n_sent)]
    topics = rng.permutation(len(TOPIC_WORDS))[:n_sent]
    links = [LINK_WORDS[i] for i in rng.permutation(len(LINK_WORDS))[:n_sent]]
    a, b, c, d = (int(i) for i in rng.permutation(n_sent)[:4])
    links[b] = links[a]
    if distractor:
        links[d] = links[c]
    for i, s in enumerate(sents):
        for w in (TOPIC_WORDS[topics[i]], links[i]):
            s.insert(int(rng.integers(len(s) + 1)), w)
    doc = [_sentence(s) for s in sents]
    key = TOPIC_WORDS[topics[a]]
    return RawExample(f"multihop-{idx}", f"what about {key} ?", doc, doc[a] + " " + doc[b])


def repeat_example(rng, pool, idx: int, n_sent: int = 5, sent_len: int = 6) -> RawExample:
    used: set = set()
    sents = [_fresh(rng, pool, used, sent_len) for _ in range(n_sent)]
    phrase = _fresh(rng, pool, used, 2)
    a, b, x = (int(i) for i in rng.permutation(n_sent)[:3])
    for s in (a, b, x):
        pos = int(rng.integers(sent_len - 1))
        sents[s][pos: pos + 2] = phrase
    candidates = [w for w in sents[a] if w not in phrase]
    key = candidates[int(rng.integers(len(candidates)))]
    doc = [_sentence(s) for s in sents]
    return RawExample(f"repeat-{idx}", f"what about {key} ?", doc, doc[a] + " " + doc[b])


_MAKERS = {"copy": copy_example, "multihop": multihop_example, "repeat": repeat_example}
_POOL_SIZE = {"copy": 60, "multihop": 120, "repeat": 100}


def make_fixture(task: str, size: int, seed: int = 7, offset: int = 0) -> list[RawExample]:
    """``size`` examples of ``task``; deterministic in (task, size, seed, offset)."""
    if task not in _MAKERS:
        raise ValueError(f"unknown fixture task {task!r}; choose from {TASKS}")
    rng = np.random.default_rng([seed, offset, TASKS.index(task)])
    pool = word_inventory(_POOL_SIZE[task])
    return [_MAKERS[task](rng, pool, offset + i) for i in range(size)]
