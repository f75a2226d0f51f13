"""Losses, the two-phase training schedule, logging and checkpoints."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .config import TrainConfig
from .corpus import Batch, TokenizedExample, Vocabulary, make_batch
from .generator import DecodingError, StepOutput
from .model import MSGModel
from .numerics import ParamStore, Tensor

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class TrainingError(RuntimeError):
    pass


@dataclass
class LossBreakdown:
    nll: float
    cov: float
    total: float
    tensor: Tensor | None = field(default=None, repr=False)


def nll_loss(p_final, target: np.ndarray, target_mask: np.ndarray) -> Tensor:
    """Mean over the batch of -(1/T_b) sum_t log P(w*_t).

    ``p_final`` is a list of (B, V_ext) step distributions.
    """
    probs = nx.stack([nx.gather(p, target[:, t]) for t, p in enumerate(p_final)], axis=1)
    mask = np.asarray(target_mask, dtype=probs.dtype)
    logp = nx.log(nx.clamp_min(probs, PROB_FLOOR))
    per_example = -(logp * mask).sum(axis=1) / mask.sum(axis=1)
    return per_example.mean()


def mvc_loss(alpha_q, cov_q, alpha_d, cov_d, rho, target_mask: np.ndarray) -> Tensor:
    """Multi-view coverage penalty.

    Per step the question and document views are weighted by their pointer
    weights renormalised over {q, d}; each view contributes
    sum_i min(alpha_t_i, coverage_t_i), averaged over the example's steps.
    """
    terms = []
    for aq, cq, ad, cd, r in zip(alpha_q, cov_q, alpha_d, cov_d, rho):
        rq, rd = r[:, 1], r[:, 2]
        denom = rq + rd
        term = (rq / denom) * nx.minimum(aq, cq).sum(axis=-1) + (rd / denom) * nx.minimum(ad, cd).sum(axis=-1)
        terms.append(term)
    stacked = nx.stack(terms, axis=1)
    mask = np.asarray(target_mask, dtype=stacked.dtype)[:, : len(terms)]
    per_example = (stacked * mask).sum(axis=1) / mask.sum(axis=1)
    return per_example.mean()


def mvc_loss_from_steps(steps: list[StepOutput], target_mask) -> Tensor:
    return mvc_loss([s.alpha_q for s in steps], [s.cov_q for s in steps],
                    [s.alpha_d_hat for s in steps], [s.cov_d for s in steps],
                    [s.rho for s in steps], target_mask)


def compute_loss(model: MSGModel, batch: Batch, rng=None, use_cov: bool = False) -> LossBreakdown:
    """total = nll + lambda_cov * cov; the coverage term is only built when ``use_cov``."""
    cfg = model.config
    steps = model.teacher_forced(batch, rng)
    with nx.precision(model.dtype):
        nll = nll_loss([s.p_final for s in steps], batch.target, batch.target_mask)
        if use_cov:
            cov = mvc_loss_from_steps(steps, batch.target_mask)
            total = nll + cov * cfg.lambda_cov
            cov_v = float(cov.data)
        else:
            total, cov_v = nll, 0.0
    return LossBreakdown(float(nll.data), cov_v, float(total.data), total)


def phase_of(epoch: int, cfg: TrainConfig) -> int:
    return 1 if epoch <= cfg.phase1_epochs else 2


def uses_coverage(epoch: int, cfg: TrainConfig) -> bool:
    return cfg.mvc and phase_of(epoch, cfg) == 2


@dataclass
class EpochRecord:
    epoch: int
    phase: int
    nll: float
    cov: float
    total: float
    dev_loss: float | None = None
    seconds: float = 0.0


@dataclass
class TrainHistory:
    batches: list[dict] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    best_checkpoint: Path | None = None

    def losses(self, key: str = "total") -> list[float]:
        return [b[key] for b in self.batches]


def batches_for_epoch(examples, vocab: Vocabulary, cfg: TrainConfig, epoch: int) -> list[Batch]:
    order = np.random.default_rng([cfg.seed, epoch, 0]).permutation(len(examples))
    bs = cfg.batch_size
    return [make_batch([examples[i] for i in order[s: s + bs]], vocab, cfg.limits)
            for s in range(0, len(order), bs)]


def evaluate_loss(model: MSGModel, examples, vocab: Vocabulary, use_cov: bool = False) -> float:
    """Token-weighted-by-example mean loss without dropout or graph recording."""
    cfg = model.config
    total, count = 0.0, 0
    with nx.no_grad():
        for s in range(0, len(examples), cfg.batch_size):
            chunk = examples[s: s + cfg.batch_size]
            lb = compute_loss(model, make_batch(chunk, vocab, cfg.limits), None, use_cov)
            total += lb.total * len(chunk)
            count += len(chunk)
    return total / max(count, 1)


def checkpoint_meta(model: MSGModel, vocab: Vocabulary | None, epoch: int) -> dict:
    meta = {"config": model.config.to_dict(), "epoch": epoch, "vocab_size": model.vocab_size}
    if vocab is not None:
        meta["vocab"] = vocab.itos
    return meta


def load_checkpoint(path) -> tuple[MSGModel, Vocabulary | None, dict]:
    params, meta = ParamStore.load(path)
    cfg = TrainConfig.from_dict(meta["config"])
    model = MSGModel(cfg, meta["vocab_size"], params=params)
    vocab = Vocabulary(meta["vocab"]) if "vocab" in meta else None
    return model, vocab, meta


def train_step(model: MSGModel, batch: Batch, rng, use_cov: bool) -> LossBreakdown:
    cfg = model.config
    model.params.zero_grad()
    lb = compute_loss(model, batch, rng, use_cov)
    if not math.isfinite(lb.total):
        raise TrainingError(f"non-finite loss {lb.total} on batch {batch.ids[:4]}...")
    lb.tensor.backward()
    grads = model.params.grads()
    nx.clip_grad_norm(grads, cfg.grad_clip)
    nx.adagrad_step(model.params, grads, cfg.lr, cfg.init_acc)
    lb.tensor = None
    return lb


def train(model: MSGModel, examples, vocab: Vocabulary, dev=None, out_dir=None, start_epoch: int = 0,
          end_epoch: int | None = None, log_path=None, progress=None) -> TrainHistory:
    """Run epochs ``start_epoch+1 .. end_epoch`` (default: all configured epochs).

    Epochs up to ``phase1_epochs`` optimise the likelihood alone; later
    epochs add the coverage penalty when ``mvc`` is on.  Shuffling and
    dropout draw from generators keyed on (seed, epoch), so resuming from
    an epoch checkpoint reproduces an uninterrupted run.
    """
    cfg = model.config
    examples = [e if isinstance(e, TokenizedExample) else TokenizedExample.from_raw(e) for e in examples]
    dev = None if dev is None else [e if isinstance(e, TokenizedExample) else TokenizedExample.from_raw(e)
                                    for e in dev]
    end_epoch = cfg.epochs if end_epoch is None else end_epoch
    out_dir = Path(out_dir) if out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    history = TrainHistory()
    best = math.inf
    try:
        for epoch in range(start_epoch + 1, end_epoch + 1):
            t0 = time.time()
            phase = phase_of(epoch, cfg)
            use_cov = uses_coverage(epoch, cfg)
            drop_rng = np.random.default_rng([cfg.seed, epoch, 1])
            sums = np.zeros(3)
            batches = batches_for_epoch(examples, vocab, cfg, epoch)
            for b_idx, batch in enumerate(batches):
                try:
                    lb = train_step(model, batch, drop_rng if cfg.dropout > 0 else None, use_cov)
                except (TrainingError, DecodingError, nx.NonFiniteGradientError) as exc:
                    raise TrainingError(f"epoch {epoch} batch {b_idx}: {exc}") from exc
                rec = {"epoch": epoch, "batch": b_idx, "phase": phase, "nll": lb.nll, "cov": lb.cov,
                       "total": lb.total}
                history.batches.append(rec)
                if log_fh:
                    log_fh.write(json.dumps(rec) + "\n")
                sums += (lb.nll, lb.cov, lb.total)
            sums /= max(len(batches), 1)
            er = EpochRecord(epoch, phase, *sums, seconds=time.time() - t0)
            if dev:
                er.dev_loss = evaluate_loss(model, dev, vocab, use_cov)
            history.epochs.append(er)
            log.info("epoch %d phase %d nll %.4f cov %.4f total %.4f%s (%.1fs)", epoch, phase, er.nll, er.cov,
                     er.total, "" if er.dev_loss is None else f" dev {er.dev_loss:.4f}", er.seconds)
            if progress:
                progress(er)
            if out_dir:
                path = out_dir / f"epoch{epoch:03d}.npz"
                model.params.save(path, checkpoint_meta(model, vocab, epoch))
                history.checkpoints.append(path)
                score = er.dev_loss if er.dev_loss is not None else er.total
                if score < best:
                    best = score
                    history.best_checkpoint = out_dir / "best.npz"
                    model.params.save(history.best_checkpoint, checkpoint_meta(model, vocab, epoch))
    finally:
        if log_fh:
            log_fh.close()
    return history
