"""Assembles encoder, multi-hop module and generator into one trainable model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .config import TrainConfig
from .corpus import UNK, Batch
from .encoder import EncoderOutput, encode, init_encoder_params
from .generator import DecoderContext, StepOutput, build_context, decoder_step, init_generator_params, initial_state
from .multihop import AggregatedDoc, HopState, aggregate_hops, hop_trace, init_multihop_params, run_hops
from .numerics import ParamStore


@dataclass
class Encoded:
    enc: EncoderOutput
    hops: list[HopState]
    agg: AggregatedDoc
    ctx: DecoderContext


class MSGModel:
    def __init__(self, config: TrainConfig, vocab_size: int, params: ParamStore | None = None,
                 embeddings: np.ndarray | None = None):
        self.config = config
        self.vocab_size = vocab_size
        self.dtype = np.dtype(config.dtype).type
        self.params = params if params is not None else self.init_params(embeddings)

    def init_params(self, embeddings=None) -> ParamStore:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        params = ParamStore(self.dtype)
        d_h = 2 * cfg.hidden
        init_encoder_params(params, self.vocab_size, cfg.emb_dim, cfg.hidden, rng, cfg.init_range, embeddings)
        init_multihop_params(params, d_h, cfg.attn_dim, cfg.hops, rng, cfg.init_range,
                             mar_unit=cfg.mar_unit, refine=cfg.refine)
        init_generator_params(params, self.vocab_size, cfg.emb_dim, d_h, cfg.dec_hidden, cfg.attn_dim,
                              rng, cfg.init_range)
        return params

    def encode(self, batch: Batch, rng=None) -> Encoded:
        cfg = self.config
        with nx.precision(self.dtype):
            drop = cfg.dropout if rng is not None else 0.0
            enc = encode(batch, self.params, drop, rng)
            hops = run_hops(enc.M_s, enc.M_q, enc.sent_mask, cfg.hops, self.params, cfg.lambda_mar,
                            use_mar=cfg.mar_unit, use_refine=cfg.refine)
            agg = aggregate_hops(hops, self.params, cfg.aggregation)
            ctx = build_context(enc, agg.Z, batch.q_ext, batch.d_ext, batch.ext_size, self.params,
                                gate=cfg.gate, question_pointer=cfg.question_pointer)
        return Encoded(enc, hops, agg, ctx)

    def teacher_forced(self, batch: Batch, rng=None, encoded: Encoded | None = None) -> list[StepOutput]:
        """Unroll the decoder over the reference answer (decoder inputs already OOV -> UNK)."""
        encoded = encoded or self.encode(batch, rng)
        drop = self.config.dropout if rng is not None else 0.0
        with nx.precision(self.dtype):
            state = initial_state(encoded.ctx, self.params)
            steps = []
            for t in range(batch.dec_in.shape[1]):
                out, state = decoder_step(batch.dec_in[:, t], state, encoded.ctx, self.params, drop, rng)
                steps.append(out)
        return steps

    def trace(self, batch: Batch):
        with nx.no_grad():
            encoded = self.encode(batch)
        return hop_trace(encoded.hops, encoded.enc.sent_mask, batch.ids)

    @staticmethod
    def feed_ids(ext_ids, vocab_size: int) -> np.ndarray:
        ids = np.asarray(ext_ids, dtype=np.int64)
        return np.where(ids >= vocab_size, UNK, ids)
