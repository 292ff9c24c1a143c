"""Full-softmax training over both query directions, with early stopping."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .evaluation import MetricsReport, evaluate_valid
from .kg import InductiveSplit, KnowledgeGraph
from .masking import MaskConfig, rng_stream
from .optim import ParamStore, adam_step
from .reasoner import FROZEN_PARAMS, ReasonerConfig, forward, init_params
from .rules import ConfidenceTable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    lr: float = 5e-3
    max_epochs: int = 30
    patience: int = 5
    eval_every: int = 1
    seed: int = 0

    def problems(self) -> list[str]:
        out = []
        if self.batch_size < 1:
            out.append(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            out.append(f"lr must be > 0, got {self.lr}")
        if self.max_epochs < 0:
            out.append(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.patience < 1:
            out.append(f"patience must be >= 1, got {self.patience}")
        if self.eval_every < 1:
            out.append(f"eval_every must be >= 1, got {self.eval_every}")
        return out


class TrainingError(RuntimeError):
    pass


def multiclass_logloss(scores: ad.Tensor, target: int) -> ad.Tensor:
    """``-scores[target] + logsumexp(scores)`` over every entity of the graph."""
    return ad.neg_logsoftmax_pick(scores, target)


def query_loss(
    query: tuple[int, int, int],
    g: KnowledgeGraph,
    table: ConfidenceTable,
    params: Mapping[str, np.ndarray],
    rcfg: ReasonerConfig,
    mcfg: MaskConfig,
    stream_key: tuple[int, ...],
    exclude: tuple[int, int, int] | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    s, r, target = query
    res = forward((s, r), g, table, params, rcfg, mcfg, stream_key=stream_key, exclude=exclude)
    loss = multiclass_logloss(res.scores, target)
    value = float(loss.data)
    if not math.isfinite(value):
        masks = [m.to_json() for m in res.state.hop_masks]
        raise TrainingError(f"non-finite loss {value} for query {query}; hop masks: {masks}")
    return value, ad.backward(res.tape, loss)


def epoch_queries(n_triples: int, train_cfg: TrainConfig, epoch: int) -> np.ndarray:
    return rng_stream(train_cfg.seed, 0x5EED, epoch).permutation(n_triples)


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    n_queries: int


def train_epoch(
    split: InductiveSplit,
    table: ConfidenceTable,
    store: ParamStore,
    rcfg: ReasonerConfig,
    mcfg: MaskConfig,
    tcfg: TrainConfig,
    epoch: int,
    threads: int = 1,
) -> EpochStats:
    """One pass over the training triples, each contributing a tail and a head query.

    Each training fact is hidden from the graph while it is being predicted.
    Gradients of a batch are merged in query order, then one Adam step.
    """
    g = split.train_graph
    triples = split.train_queries
    order = epoch_queries(len(triples), tcfg, epoch)
    mcfg = replace(mcfg, seed=tcfg.seed)
    total = 0.0
    count = 0
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for start in range(0, len(order), tcfg.batch_size):
            batch = []
            for pos in range(start, min(start + tcfg.batch_size, len(order))):
                h, r, t = triples[order[pos]]
                batch.append((2 * pos, (h, r, t), (h, r, t)))
                batch.append((2 * pos + 1, (t, r ^ 1, h), (h, r, t)))

            def run(item):
                qidx, query, exclude = item
                return query_loss(query, g, table, store.params, rcfg, mcfg, (epoch, qidx), exclude)

            results = list(pool.map(run, batch)) if pool else [run(x) for x in batch]
            weight = 1.0 / len(results)
            for loss, grads in results:
                total += loss
                store.accumulate(grads, weight)
            count += len(results)
            adam_step(store, tcfg.lr, frozen=FROZEN_PARAMS)
    finally:
        if pool:
            pool.shutdown()
    return EpochStats(epoch=epoch, mean_loss=total / max(count, 1), n_queries=count)


def _improves(new: MetricsReport, best: MetricsReport) -> bool:
    """Higher MRR wins; equal MRR falls back to lower validation log-loss."""
    if new.mrr != best.mrr:
        return new.mrr > best.mrr
    return new.mean_loss < best.mean_loss


@dataclass
class FitResult:
    best_params: dict[str, np.ndarray]
    best_epoch: int
    best_valid: MetricsReport
    curve: list[dict] = field(default_factory=list)


def fit(
    split: InductiveSplit,
    table: ConfidenceTable,
    rcfg: ReasonerConfig,
    mcfg: MaskConfig,
    tcfg: TrainConfig,
    eval_seed: int = 0,
    eval_mask: str = "sampled",
    threads: int = 1,
    params: Mapping[str, np.ndarray] | None = None,
) -> FitResult:
    """Train with validation-MRR early stopping; the initial model is evaluated as epoch 0."""
    if params is None:
        params = init_params(split.train_graph.n_relations, rcfg, tcfg.seed)
    store = ParamStore(params)

    def validate() -> MetricsReport:
        return evaluate_valid(split, table, store.params, rcfg, mcfg, eval_seed, eval_mask, threads)

    best = validate()
    best_params = store.snapshot()
    best_epoch = 0
    curve = [{"epoch": 0, "loss": None, "valid_mrr": best.mrr}]
    stale = 0
    for epoch in range(1, tcfg.max_epochs + 1):
        stats = train_epoch(split, table, store, rcfg, mcfg, tcfg, epoch, threads)
        record = {"epoch": epoch, "loss": stats.mean_loss, "valid_mrr": None}
        if epoch % tcfg.eval_every == 0:
            report = validate()
            record["valid_mrr"] = report.mrr
            if _improves(report, best):
                best, best_params, best_epoch, stale = report, store.snapshot(), epoch, 0
            else:
                stale += 1
        curve.append(record)
        logger.info("epoch %d loss %.5f valid_mrr %s", epoch, stats.mean_loss, record["valid_mrr"])
        if stale >= tcfg.patience:
            break
    return FitResult(best_params=best_params, best_epoch=best_epoch, best_valid=best, curve=curve)
