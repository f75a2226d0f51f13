"""Shared BiLSTM encoding, word-level co-attention and sentence representations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .corpus import PAD, Batch
from .numerics import ParamStore, Tensor


@dataclass
class EncoderOutput:
    H_q: Tensor          # (B, Lq, d_h)
    H_s: Tensor          # (B, n, Ls, d_h)
    H_d: Tensor          # (B, n*Ls, d_h) sentences concatenated in order
    M_q: Tensor          # (B, d_h)
    M_s: Tensor          # (B, n, d_h)
    alpha_q: Tensor      # (B, n, Lq)
    alpha_s: Tensor      # (B, n, Ls)
    q_mask: np.ndarray   # (B, Lq)
    d_mask: np.ndarray   # (B, n*Ls)
    sent_mask: np.ndarray  # (B, n)
    word_sentence: np.ndarray  # (n*Ls,) sentence index of each flattened document position

    @property
    def width(self) -> int:
        return self.H_q.shape[-1]


def init_encoder_params(params: ParamStore, vocab_size: int, emb_dim: int, hidden: int, rng,
                        init_range: float, embeddings: np.ndarray | None = None) -> None:
    if embeddings is not None:
        if embeddings.shape != (vocab_size, emb_dim):
            raise ValueError(f"embedding matrix {embeddings.shape} != ({vocab_size}, {emb_dim})")
        params.add("embedding", (vocab_size, emb_dim), value=embeddings)
    else:
        params.add("embedding", (vocab_size, emb_dim), rng, init_range)
    nx.add_lstm_params(params, "enc.fwd", emb_dim, hidden, rng, init_range)
    nx.add_lstm_params(params, "enc.bwd", emb_dim, hidden, rng, init_range)
    params.add("coattn.U", (2 * hidden, 2 * hidden), rng, init_range)


def encode_shared(batch: Batch, params: ParamStore, dropout: float = 0.0, rng=None):
    """Run one BiLSTM over the question and every sentence as independent sequences.

    Returns H_q (B, Lq, d_h) and H_s (B, n, Ls, d_h), padded positions zeroed.
    """
    B, n, Ls = batch.d_ids.shape
    Lq = batch.q_ids.shape[1]
    L = max(Lq, Ls)
    seq = np.full((B + B * n, L), PAD, dtype=np.int64)
    mask = np.zeros((B + B * n, L))
    seq[:B, :Lq] = batch.q_ids
    mask[:B, :Lq] = batch.q_mask
    seq[B:, :Ls] = batch.d_ids.reshape(B * n, Ls)
    mask[B:, :Ls] = batch.d_mask.reshape(B * n, Ls)
    emb = nx.take_rows(params["embedding"], seq)
    out, _ = nx.run_bilstm(emb, mask, nx.lstm_weights(params, "enc.fwd"), nx.lstm_weights(params, "enc.bwd"))
    out = nx.dropout(out, dropout, rng)
    d_h = out.shape[-1]
    H_q = out[:B, :Lq]
    H_s = out[B:, :Ls].reshape(B, n, Ls, d_h)
    return H_q, H_s


def coattention_scores(H_q: Tensor, H_s: Tensor, U: Tensor) -> Tensor:
    """O = tanh(H_q U H_s^T) per sentence: (B, n, Lq, Ls)."""
    B, Lq, d = H_q.shape
    A = (H_q @ U).reshape(B, 1, Lq, d)
    return nx.tanh(A @ H_s.swapaxes(-1, -2))


def coattention_weights(O: Tensor, q_mask: np.ndarray, s_mask: np.ndarray):
    """Co-attention distributions from a score block O (..., Lq, Ls).

    alpha_q: softmax over question words of each word's best match in the
    sentence; alpha_s: softmax over sentence words of their best match in
    the question.  Masks broadcast as (..., Lq) and (..., Ls).
    """
    Lq, Ls = O.shape[-2], O.shape[-1]
    lead = O.shape[:-2]
    qm = np.broadcast_to(q_mask, lead + (Lq,))
    sm = np.broadcast_to(s_mask, lead + (Ls,))
    best_for_q = nx.masked_max(O, sm[..., None, :] > 0, axis=-1)   # (..., Lq)
    best_for_s = nx.masked_max(O, qm[..., :, None] > 0, axis=-2)   # (..., Ls)
    alpha_q = nx.masked_softmax(best_for_q, qm)
    alpha_s = nx.masked_softmax(best_for_s, sm)
    return alpha_q, alpha_s


def coattend(H_q: Tensor, H_s: Tensor, q_mask: np.ndarray, s_mask: np.ndarray, U: Tensor):
    """alpha_q (B, n, Lq) and alpha_s (B, n, Ls) for every (question, sentence) pair."""
    O = coattention_scores(H_q, H_s, U)
    return coattention_weights(O, q_mask[:, None, :], s_mask)


def sentence_reps(H_q: Tensor, H_s: Tensor, alpha_q: Tensor, alpha_s: Tensor, sent_mask: np.ndarray):
    """M_q = mean over real sentences of H_q^T alpha_q_i; M_s[i] = H_s_i^T alpha_s_i."""
    B, n, Ls, d = H_s.shape
    sm = np.asarray(sent_mask, dtype=H_q.dtype)
    per_sentence_q = alpha_q @ H_q                                     # (B, n, d)
    counts = sm.sum(axis=1, keepdims=True)
    M_q = (per_sentence_q * sm[:, :, None]).sum(axis=1) / counts
    M_s = (alpha_s.reshape(B, n, 1, Ls) @ H_s).reshape(B, n, d) * sm[:, :, None]
    return M_q, M_s


def encode(batch: Batch, params: ParamStore, dropout: float = 0.0, rng=None) -> EncoderOutput:
    dtype = params["embedding"].dtype
    H_q, H_s = encode_shared(batch, params, dropout, rng)
    B, n, Ls, d = H_s.shape
    # padded sentence slots get one live position so their softmax is defined;
    # the sentence mask removes them from everything downstream
    safe_mask = batch.d_mask.copy()
    safe_mask[batch.sent_mask == 0, 0] = 1.0
    alpha_q, alpha_s = coattend(H_q, H_s, batch.q_mask, safe_mask, params["coattn.U"])
    M_q, M_s = sentence_reps(H_q, H_s, alpha_q, alpha_s, batch.sent_mask)
    return EncoderOutput(
        H_q=H_q, H_s=H_s, H_d=H_s.reshape(B, n * Ls, d), M_q=M_q, M_s=M_s,
        alpha_q=alpha_q, alpha_s=alpha_s,
        q_mask=batch.q_mask.astype(dtype), d_mask=batch.d_mask.reshape(B, n * Ls).astype(dtype),
        sent_mask=batch.sent_mask.astype(dtype), word_sentence=np.repeat(np.arange(n), Ls),
    )
