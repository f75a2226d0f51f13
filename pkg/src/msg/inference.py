"""Greedy and beam-search answer generation, hop-trace export."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .corpus import EOS, SOS, Batch, TokenizedExample, Vocabulary, decode_ids, make_batch
from .generator import DecoderState, decoder_step, initial_state
from .model import MSGModel
from .multihop import HopTrace, hop_trace

MAX_DECODE_LEN = 50


@dataclass
class Hypothesis:
    tokens: list[int]
    logprob: float
    state: DecoderState | None
    finished: bool = False
    step_logprobs: tuple = ()

    @property
    def score(self) -> float:
        return self.logprob / max(len(self.tokens), 1)


@dataclass
class Generated:
    id: str
    tokens: list[str]
    ids: list[int]
    logprob: float
    trace: HopTrace

    @property
    def answer(self) -> str:
        return " ".join(self.tokens)

    def record(self, top_k: int = 3) -> dict:
        return {"id": self.id, "answer": self.answer, "justification": self.trace.top_sentences(top_k)[0]}


def _state_rows(state: DecoderState, rows) -> DecoderState:
    rows = np.asarray(rows)
    return DecoderState(state.h[rows], state.c[rows], state.cov_q[rows], state.cov_d[rows], state.t)


def greedy_decode(model: MSGModel, batch: Batch, max_len: int = MAX_DECODE_LEN):
    """Argmax decoding for a whole batch in lockstep; returns extended-id lists and log probs."""
    V = model.vocab_size
    with nx.no_grad(), nx.precision(model.dtype):
        enc = model.encode(batch)
        state = initial_state(enc.ctx, model.params)
        B = batch.size
        prev = np.full(B, SOS, dtype=np.int64)
        out = [[] for _ in range(B)]
        logp = np.zeros(B)
        done = np.zeros(B, dtype=bool)
        for _ in range(max_len + 1):
            step, state = decoder_step(prev, state, enc.ctx, model.params)
            p = step.p_final.data
            choice = np.argmax(p, axis=-1)
            for b in np.flatnonzero(~done):
                c = int(choice[b])
                if c == EOS:
                    done[b] = True
                    logp[b] += float(np.log(max(p[b, c], 1e-300)))
                elif len(out[b]) >= max_len:
                    done[b] = True
                else:
                    out[b].append(c)
                    logp[b] += float(np.log(max(p[b, c], 1e-300)))
            if done.all():
                break
            prev = MSGModel.feed_ids(choice, V)
    return out, logp, enc


def beam_decode(model: MSGModel, batch: Batch, beam_size: int = 4, max_len: int = MAX_DECODE_LEN):
    """Beam search per example; final ranking by mean log-prob per token.

    Beams of one example advance together as rows of a single decoder step.
    A hypothesis finishes on EOS (EOS scored, not emitted) or when it holds
    ``max_len`` tokens.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    V = model.vocab_size
    results = []
    with nx.no_grad(), nx.precision(model.dtype):
        encoded = model.encode(batch)
        for b in range(batch.size):
            ctx = encoded.ctx.select([b])
            live = [Hypothesis([], 0.0, initial_state(ctx, model.params))]
            finished: list[Hypothesis] = []
            for _ in range(max_len + 1):
                rows = np.zeros(len(live), dtype=np.int64)
                state = live[0].state if len(live) == 1 else _stack_states([h.state for h in live])
                prev = np.array([h.tokens[-1] if h.tokens else SOS for h in live])
                step, nstate = decoder_step(MSGModel.feed_ids(prev, V), state, ctx.select(rows), model.params)
                logp = np.log(np.maximum(step.p_final.data.astype(np.float64), 1e-300))
                cands = []
                for r, h in enumerate(live):
                    top = np.argsort(-logp[r], kind="stable")[: beam_size + 1]
                    for c in top:
                        cands.append((h.logprob + logp[r, c], r, int(c)))
                cands.sort(key=lambda x: -x[0])
                nxt = []
                for lp, r, c in cands:
                    h = live[r]
                    if c == EOS:
                        finished.append(Hypothesis(h.tokens, lp, None, True, h.step_logprobs + (logp[r, c],)))
                    elif len(h.tokens) >= max_len:
                        finished.append(Hypothesis(h.tokens, h.logprob, None, True, h.step_logprobs))
                    else:
                        nxt.append(Hypothesis(h.tokens + [c], lp, _state_rows(nstate, [r]), False,
                                              h.step_logprobs + (logp[r, c],)))
                    if len(nxt) == beam_size:
                        break
                if len(finished) >= beam_size or not nxt:
                    break
                live = nxt
            else:
                finished.extend(Hypothesis(h.tokens, h.logprob, None, True, h.step_logprobs) for h in live)
            if not finished:
                finished = [Hypothesis(h.tokens, h.logprob, None, True, h.step_logprobs) for h in live]
            assert finished, "beam search ended with no hypotheses"
            best = max(finished, key=lambda h: h.score) if beam_size > 1 else finished[0]
            results.append(best)
    return results, encoded


def _stack_states(states) -> DecoderState:
    return DecoderState(nx.concat([s.h for s in states], 0), nx.concat([s.c for s in states], 0),
                        nx.concat([s.cov_q for s in states], 0), nx.concat([s.cov_d for s in states], 0),
                        states[0].t)


def generate(model: MSGModel, examples, vocab: Vocabulary, beam_size: int | None = None,
             max_len: int = MAX_DECODE_LEN, batch_size: int = 32) -> list[Generated]:
    """Decode answers for raw or tokenized examples.

    beam_size 1 runs batched greedy decoding; larger values run beam search.
    """
    beam_size = model.config.beam_size if beam_size is None else beam_size
    examples = [e if isinstance(e, TokenizedExample) else TokenizedExample.from_raw(e) for e in examples]
    out = []
    for s in range(0, len(examples), batch_size):
        batch = make_batch(examples[s: s + batch_size], vocab, model.config.limits)
        if beam_size == 1:
            seqs, logps, encoded = greedy_decode(model, batch, max_len)
        else:
            hyps, encoded = beam_decode(model, batch, beam_size, max_len)
            seqs, logps = [h.tokens for h in hyps], [h.logprob for h in hyps]
        trace = hop_trace(encoded.hops, encoded.enc.sent_mask, batch.ids)
        for b, ex_id in enumerate(batch.ids):
            tokens = decode_ids(seqs[b], vocab, batch.oovs[b])
            sub = HopTrace([ex_id], [trace.weights[b]], trace.units)
            out.append(Generated(ex_id, tokens, list(seqs[b]), float(logps[b]), sub))
    return out


def trace_hops(model: MSGModel, examples, vocab: Vocabulary, batch_size: int = 32) -> HopTrace:
    examples = [e if isinstance(e, TokenizedExample) else TokenizedExample.from_raw(e) for e in examples]
    ids, weights, units = [], [], []
    for s in range(0, len(examples), batch_size):
        batch = make_batch(examples[s: s + batch_size], vocab, model.config.limits)
        tr = model.trace(batch)
        ids += tr.example_ids
        weights += tr.weights
        units = tr.units
    return HopTrace(ids, weights, units)


def write_generations(path, generated: list[Generated], top_k: int = 3) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in generated:
            fh.write(json.dumps(g.record(top_k)) + "\n")
