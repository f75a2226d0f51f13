"""Multi-hop sentence inference: attentive / MAR units, per-hop refiners, hop merging."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .numerics import ParamStore, Tensor


@dataclass
class HopState:
    hop: int
    refined: Tensor   # (B, n, d_h) refiner output fed to the unit
    output: Tensor    # (B, n, d_h) weighted sentence matrix M_s^(k)
    scores: Tensor    # (B, n) softmax weights (attentive) or sigmoid gates (MAR)
    unit: str         # "attentive" | "mar"


@dataclass
class HopTrace:
    """Per-example, per-hop sentence weights normalised over real sentences."""

    example_ids: list[str]
    weights: list[list[np.ndarray]]  # [example][hop] -> (n_real,)
    units: list[str] = field(default_factory=list)

    def records(self):
        for ex_id, hops in zip(self.example_ids, self.weights):
            for k, w in enumerate(hops, 1):
                for i, v in enumerate(w):
                    yield {"example_id": ex_id, "hop": k, "sentence_index": i, "normalized_weight": float(v)}

    def to_jsonl(self, fh) -> None:
        for rec in self.records():
            fh.write(json.dumps(rec) + "\n")

    def top_sentences(self, k: int = 3) -> list[list[list[int]]]:
        return [[[int(i) for i in np.argsort(-w, kind="stable")[:k]] for w in hops] for hops in self.weights]


@dataclass
class AggregatedDoc:
    Z: Tensor                # (B, n, d_h)
    hop_weights: Tensor      # (B, n, K)


def init_multihop_params(params: ParamStore, d_h: int, attn_dim: int, hops: int, rng, init_range: float,
                         mar_unit: bool = True, refine: bool = True) -> None:
    for k in range(1, hops + 1):
        if refine:
            nx.add_lstm_params(params, f"hop{k}.refine.fwd", d_h, d_h // 2, rng, init_range)
            nx.add_lstm_params(params, f"hop{k}.refine.bwd", d_h, d_h - d_h // 2, rng, init_range)
        if k == 1 or not mar_unit:
            params.add(f"hop{k}.W_m", (2 * d_h, attn_dim), rng, init_range)
            params.add(f"hop{k}.w_m", (attn_dim, 1), rng, init_range)
        else:
            params.add(f"hop{k}.U1", (d_h, d_h), rng, init_range)
            params.add(f"hop{k}.U2", (d_h, d_h), rng, init_range)
    params.add("agg.W_h", (d_h, attn_dim), rng, init_range)
    params.add("agg.w_h", (attn_dim, 1), rng, init_range)


def attentive_unit(M_s: Tensor, M_q: Tensor, sent_mask: np.ndarray, W_m: Tensor, w_m: Tensor):
    """Score each sentence against the question with additive attention.

    m_i = tanh(W_m [M_s_i; M_q]); alpha = softmax over real sentences of w_m . m_i;
    rows of M_s are scaled by their weight.
    """
    B, n, d = M_s.shape
    q_rep = M_q.reshape(B, 1, d) * np.ones((1, n, 1), dtype=M_s.dtype)
    m = nx.tanh(nx.concat([M_s, q_rep], axis=-1) @ W_m)
    alpha = nx.masked_softmax((m @ w_m).reshape(B, n), sent_mask)
    return M_s * alpha.reshape(B, n, 1), alpha


def mar_scores(M_s: Tensor, M_q: Tensor, sent_mask: np.ndarray, lambda_mar: float, U1: Tensor, U2: Tensor):
    """mar_i = lambda * M_s_i U1 M_q + (1 - lambda) * max_{j != i} softmax_{j != i}(tanh(M_s_i U2 M_s_j)).

    Sentences without any competitor get 0 for the second term.
    """
    if not 0.0 <= lambda_mar <= 1.0:
        raise ValueError(f"lambda_mar must lie in [0, 1], got {lambda_mar}")
    B, n, d = M_s.shape
    sm = np.asarray(sent_mask) > 0
    sim1 = ((M_s @ U1) * M_q.reshape(B, 1, d)).sum(axis=-1)                # (B, n)
    e = nx.tanh((M_s @ U2) @ M_s.swapaxes(-1, -2))                          # (B, n, n)
    pair = sm[:, :, None] & sm[:, None, :] & ~np.eye(n, dtype=bool)[None]
    safe = pair.copy()
    lonely = ~pair.any(axis=-1)
    safe[lonely, 0] = True
    sim2 = nx.masked_softmax(e, safe)
    best = nx.masked_max(sim2, pair, axis=-1)                              # 0 where no competitor
    return sim1 * lambda_mar + best * (1.0 - lambda_mar)


def mar_unit(M_s: Tensor, M_q: Tensor, sent_mask: np.ndarray, lambda_mar: float, U1: Tensor, U2: Tensor):
    """Gate each sentence row by sigmoid(mar); padded rows are forced to zero."""
    B, n, _ = M_s.shape
    gate = nx.sigmoid(mar_scores(M_s, M_q, sent_mask, lambda_mar, U1, U2))
    sm = np.asarray(sent_mask, dtype=M_s.dtype)
    return M_s * (gate * sm).reshape(B, n, 1), gate


def refine(M: Tensor, sent_mask: np.ndarray, params: ParamStore, hop: int) -> Tensor:
    out, _ = nx.run_bilstm(M, sent_mask, nx.lstm_weights(params, f"hop{hop}.refine.fwd"),
                           nx.lstm_weights(params, f"hop{hop}.refine.bwd"))
    return out


def run_hops(M_s: Tensor, M_q: Tensor, sent_mask: np.ndarray, hops: int, params: ParamStore,
             lambda_mar: float = 0.5, use_mar: bool = True, use_refine: bool = True) -> list[HopState]:
    """Hop 1 is an attentive unit, later hops MAR units (or attentive when ``use_mar`` is off).

    Each hop first passes its input through its own sentence-level BiLSTM.
    """
    if hops < 1:
        raise ValueError(f"need at least one hop, got {hops}")
    states = []
    current = M_s
    for k in range(1, hops + 1):
        x = refine(current, sent_mask, params, k) if use_refine else current
        if k == 1 or not use_mar:
            out, scores = attentive_unit(x, M_q, sent_mask, params[f"hop{k}.W_m"], params[f"hop{k}.w_m"])
            unit = "attentive"
        else:
            out, scores = mar_unit(x, M_q, sent_mask, lambda_mar, params[f"hop{k}.U1"], params[f"hop{k}.U2"])
            unit = "mar"
        states.append(HopState(k, x, out, scores, unit))
        current = out
    return states


def aggregate_hops(states: list[HopState], params: ParamStore, mode: str = "merge") -> AggregatedDoc:
    """Merge hop outputs per sentence into Z (B, n, d_h).

    merge: attention over the K hop vectors of each sentence; last: the final
    hop only; uniform: plain average.
    """
    if not states:
        raise ValueError("no hop states to aggregate")
    stacked = nx.stack([s.output for s in states], axis=2)                 # (B, n, K, d)
    B, n, K, d = stacked.shape
    dtype = stacked.dtype
    if mode == "merge":
        scores = (nx.tanh(stacked @ params["agg.W_h"]) @ params["agg.w_h"]).reshape(B, n, K)
        weights = nx.softmax(scores, axis=-1)
    elif mode == "uniform":
        weights = Tensor(np.full((B, n, K), 1.0 / K, dtype=dtype))
    elif mode == "last":
        onehot = np.zeros((B, n, K), dtype=dtype)
        onehot[..., -1] = 1.0
        return AggregatedDoc(Z=states[-1].output, hop_weights=Tensor(onehot))
    else:
        raise ValueError(f"unknown aggregation mode {mode!r}")
    Z = (weights.reshape(B, n, 1, K) @ stacked).reshape(B, n, d)
    return AggregatedDoc(Z=Z, hop_weights=weights)


def hop_trace(states: list[HopState], sent_mask: np.ndarray, example_ids) -> HopTrace:
    sm = np.asarray(sent_mask) > 0
    weights = []
    for b in range(sm.shape[0]):
        per_hop = []
        for s in states:
            w = np.asarray(s.scores.data[b], dtype=np.float64)[sm[b]]
            per_hop.append(w / w.sum())
        weights.append(per_hop)
    return HopTrace(list(example_ids), weights, [s.unit for s in states])
