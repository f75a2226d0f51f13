"""Gated selective multi-view pointer-generator decoder."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .corpus import PAD, SOS
from .encoder import EncoderOutput
from .numerics import ParamStore, Tensor

VIEWS = ("v", "q", "d")


class DecodingError(FloatingPointError):
    pass


@dataclass
class DecoderState:
    h: Tensor
    c: Tensor
    cov_q: Tensor   # (B, Lq)
    cov_d: Tensor   # (B, n*Ls)
    t: int = 0


@dataclass
class StepOutput:
    alpha_q: Tensor       # (B, Lq)
    alpha_d: Tensor       # (B, n*Ls) before sentence gating
    alpha_d_hat: Tensor   # (B, n*Ls) after sentence gating
    beta: Tensor          # (B, n)
    ctx_q: Tensor
    ctx_d: Tensor
    rho: Tensor           # (B, 3) weights of vocabulary / question-copy / document-copy views
    p_vocab: Tensor       # (B, V)
    p_q: Tensor           # (B, V + oov)
    p_d: Tensor           # (B, V + oov)
    p_final: Tensor       # (B, V + oov)
    cov_q: Tensor         # coverage before this step
    cov_d: Tensor


@dataclass
class DecoderContext:
    """Per-sequence quantities precomputed once before the step loop."""

    enc: EncoderOutput
    Z: Tensor
    q_ext: np.ndarray          # (B, Lq)
    d_ext: np.ndarray          # (B, n*Ls)
    ext_size: int
    q_keys: Tensor             # (B, Lq, a)  H_q W_q
    d_keys: Tensor             # (B, n*Ls, a)
    z_keys: Tensor             # (B, n, a)   Z W_s
    vocab_mask: np.ndarray     # (V,) slots the generator may emit
    view_mask: np.ndarray      # (3,)
    gate: str = "sigmoid"
    diagnostics: dict = field(default_factory=lambda: {"gate_fallbacks": 0})

    def select(self, rows) -> "DecoderContext":
        """Row-subset (or row-repeat, for beams) view of the context."""
        rows = np.asarray(rows)
        e = self.enc
        enc = EncoderOutput(
            H_q=e.H_q[rows], H_s=e.H_s[rows], H_d=e.H_d[rows], M_q=e.M_q[rows], M_s=e.M_s[rows],
            alpha_q=e.alpha_q[rows], alpha_s=e.alpha_s[rows], q_mask=e.q_mask[rows], d_mask=e.d_mask[rows],
            sent_mask=e.sent_mask[rows], word_sentence=e.word_sentence,
        )
        return DecoderContext(enc, self.Z[rows], self.q_ext[rows], self.d_ext[rows], self.ext_size,
                              self.q_keys[rows], self.d_keys[rows], self.z_keys[rows], self.vocab_mask,
                              self.view_mask, self.gate, self.diagnostics)


def init_generator_params(params: ParamStore, vocab_size: int, emb_dim: int, d_h: int, dec_hidden: int,
                          attn_dim: int, rng, init_range: float) -> None:
    nx.add_lstm_params(params, "dec.lstm", emb_dim, dec_hidden, rng, init_range)
    params.add("dec.init.W_h", (d_h, dec_hidden), rng, init_range)
    params.add("dec.init.b_h", (dec_hidden,), rng, init_range)
    params.add("dec.init.W_c", (d_h, dec_hidden), rng, init_range)
    params.add("dec.init.b_c", (dec_hidden,), rng, init_range)
    for view in ("q", "d"):
        params.add(f"att_{view}.W", (d_h, attn_dim), rng, init_range)
        params.add(f"att_{view}.W_s", (dec_hidden, attn_dim), rng, init_range)
        params.add(f"att_{view}.b", (attn_dim,), rng, init_range)
        params.add(f"att_{view}.w", (attn_dim, 1), rng, init_range)
        params.add(f"att_{view}.w_cov", (attn_dim,), rng, init_range)
    params.add("gate.W_s", (d_h, attn_dim), rng, init_range)
    params.add("gate.W_ss", (dec_hidden, attn_dim), rng, init_range)
    params.add("gate.b", (attn_dim,), rng, init_range)
    params.add("gate.w", (attn_dim, 1), rng, init_range)
    feat = dec_hidden + 2 * d_h
    params.add("out.W1", (feat, dec_hidden), rng, init_range)
    params.add("out.b1", (dec_hidden,), rng, init_range)
    params.add("out.W2", (dec_hidden, vocab_size), rng, init_range)
    params.add("out.b2", (vocab_size,), rng, init_range)
    params.add("ptr.W", (feat, 3), rng, init_range)
    params.add("ptr.b", (3,), rng, init_range)


def attend_view(keys: Tensor, s_t: Tensor, coverage: Tensor, mask: np.ndarray, W_s: Tensor, b: Tensor,
                w: Tensor, w_cov: Tensor):
    """e_i = w . tanh(keys_i + W_s s_t + w_cov * cov_i + b); alpha = masked softmax(e).

    ``keys`` holds the precomputed ``H W`` projection of the view's word states.
    """
    B, L, a = keys.shape
    pre = keys + (s_t @ W_s + b).reshape(B, 1, a) + coverage.reshape(B, L, 1) * w_cov
    e = (nx.tanh(pre) @ w).reshape(B, L)
    return e, nx.masked_softmax(e, mask)


def gate_sentences(z_keys: Tensor, s_t: Tensor, sent_mask: np.ndarray, W_ss: Tensor, b: Tensor, w: Tensor,
                   mode: str = "sigmoid") -> Tensor:
    """beta_k = sigmoid(w . tanh(W_s Z_k + W_ss s_t + b)); softmax over sentences in ``softmax`` mode."""
    B, n, a = z_keys.shape
    scores = (nx.tanh(z_keys + (s_t @ W_ss + b).reshape(B, 1, a)) @ w).reshape(B, n)
    if mode == "sigmoid":
        return nx.sigmoid(scores) * np.asarray(sent_mask, dtype=scores.dtype)
    if mode == "softmax":
        return nx.masked_softmax(scores, sent_mask)
    raise ValueError(f"unknown gate mode {mode!r}")


def reweight_doc_attention(alpha_d: Tensor, beta: Tensor, word_sentence: np.ndarray, diagnostics=None,
                           tiny: float = 1e-30) -> Tensor:
    """alpha_hat_i = alpha_i * beta[sent(i)] / sum_j alpha_j * beta[sent(j)].

    Rows whose normaliser underflows fall back to the ungated attention.
    """
    beta_w = beta[:, np.asarray(word_sentence)]
    num = alpha_d * beta_w
    den = num.sum(axis=-1, keepdims=True)
    bad = den.data[:, 0] <= tiny
    if not bad.any():
        return num / den
    if diagnostics is not None:
        diagnostics["gate_fallbacks"] = diagnostics.get("gate_fallbacks", 0) + int(bad.sum())
    safe_den = nx.where(bad[:, None], np.ones_like(den.data), den)
    return nx.where(bad[:, None], alpha_d, num / safe_den)


def build_context(enc: EncoderOutput, Z: Tensor, q_ext: np.ndarray, d_ext: np.ndarray, ext_size: int,
                  params: ParamStore, gate: str = "sigmoid", question_pointer: bool = True) -> DecoderContext:
    V = params["out.b2"].shape[0]
    vocab_mask = np.ones(V, dtype=bool)
    vocab_mask[[PAD, SOS]] = False
    view_mask = np.array([1, 1 if question_pointer else 0, 1], dtype=bool)
    return DecoderContext(
        enc=enc, Z=Z, q_ext=np.asarray(q_ext), d_ext=np.asarray(d_ext).reshape(len(q_ext), -1),
        ext_size=ext_size, q_keys=enc.H_q @ params["att_q.W"], d_keys=enc.H_d @ params["att_d.W"],
        z_keys=Z @ params["gate.W_s"], vocab_mask=vocab_mask, view_mask=view_mask, gate=gate,
    )


def initial_state(ctx: DecoderContext, params: ParamStore) -> DecoderState:
    """tanh projections of the mean document word state."""
    enc = ctx.enc
    dm = enc.d_mask
    pooled = (enc.H_d * dm[:, :, None]).sum(axis=1) / dm.sum(axis=1, keepdims=True)
    h = nx.tanh(pooled @ params["dec.init.W_h"] + params["dec.init.b_h"])
    c = nx.tanh(pooled @ params["dec.init.W_c"] + params["dec.init.b_c"])
    dtype = h.dtype
    return DecoderState(h, c, Tensor(np.zeros(enc.q_mask.shape, dtype=dtype)),
                        Tensor(np.zeros(enc.d_mask.shape, dtype=dtype)), 0)


def decoder_step(prev_ids, state: DecoderState, ctx: DecoderContext, params: ParamStore,
                 dropout: float = 0.0, rng=None, check_finite: bool = True):
    """Advance the decoder one token; returns (StepOutput, next DecoderState).

    ``prev_ids`` are base-vocabulary ids (extended ids must already be mapped to UNK).
    """
    enc = ctx.enc
    x = nx.take_rows(params["embedding"], np.asarray(prev_ids))
    h, c = nx.lstm_step(x, state.h, state.c, nx.lstm_weights(params, "dec.lstm"))
    s_t = nx.dropout(h, dropout, rng)

    _, alpha_q = attend_view(ctx.q_keys, s_t, state.cov_q, enc.q_mask, params["att_q.W_s"], params["att_q.b"],
                             params["att_q.w"], params["att_q.w_cov"])
    _, alpha_d = attend_view(ctx.d_keys, s_t, state.cov_d, enc.d_mask, params["att_d.W_s"], params["att_d.b"],
                             params["att_d.w"], params["att_d.w_cov"])
    beta = gate_sentences(ctx.z_keys, s_t, enc.sent_mask, params["gate.W_ss"], params["gate.b"],
                          params["gate.w"], ctx.gate)
    alpha_d_hat = reweight_doc_attention(alpha_d, beta, enc.word_sentence, ctx.diagnostics)

    B = alpha_q.shape[0]
    ctx_q = (alpha_q.reshape(B, 1, -1) @ enc.H_q).reshape(B, -1)
    ctx_d = (alpha_d_hat.reshape(B, 1, -1) @ enc.H_d).reshape(B, -1)
    feat = nx.concat([s_t, ctx_q, ctx_d], axis=-1)
    hidden = feat @ params["out.W1"] + params["out.b1"]
    p_vocab = nx.masked_softmax(hidden @ params["out.W2"] + params["out.b2"],
                                np.broadcast_to(ctx.vocab_mask, (B, ctx.vocab_mask.size)))
    rho = nx.masked_softmax(feat @ params["ptr.W"] + params["ptr.b"], np.broadcast_to(ctx.view_mask, (B, 3)))

    V = p_vocab.shape[-1]
    p_q = nx.scatter_add(alpha_q, ctx.q_ext, ctx.ext_size)
    p_d = nx.scatter_add(alpha_d_hat, ctx.d_ext, ctx.ext_size)
    p_v_ext = p_vocab if ctx.ext_size == V else nx.concat(
        [p_vocab, Tensor(np.zeros((B, ctx.ext_size - V), dtype=p_vocab.dtype))], axis=-1)
    p_final = p_v_ext * rho[:, 0:1] + p_q * rho[:, 1:2] + p_d * rho[:, 2:3]
    if check_finite and not np.all(np.isfinite(p_final.data)):
        raise DecodingError(f"non-finite output distribution at decoder step {state.t}")

    out = StepOutput(alpha_q, alpha_d, alpha_d_hat, beta, ctx_q, ctx_d, rho, p_vocab, p_q, p_d, p_final,
                     state.cov_q, state.cov_d)
    nxt = DecoderState(h, c, state.cov_q + alpha_q, state.cov_d + alpha_d_hat, state.t + 1)
    return out, nxt
