"""Filtered ranking metrics over directional queries."""

from __future__ import annotations

import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .kg import KnowledgeGraph, Triple
from .masking import MaskConfig
from .reasoner import ReasonerConfig, forward
from .rules import ConfidenceTable


@dataclass
class MetricsReport:
    mrr: float
    hits1: float
    hits10: float
    n_queries: int
    ranks: list[float] = field(default_factory=list)
    queries: list[tuple[int, int, int]] = field(default_factory=list)
    seed: int = 0
    config: dict = field(default_factory=dict)
    dataset: str = ""
    version: str = ""
    # mean unfiltered log-loss of the targets; breaks MRR ties during early stopping
    mean_loss: float = float("nan")

    def to_json(self, timestamp: str | None = None) -> dict:
        return {
            "dataset": self.dataset,
            "version": self.version,
            "mrr": self.mrr,
            "hits1": self.hits1,
            "hits10": self.hits10,
            "n_queries": self.n_queries,
            "directions": "both (head and tail queries averaged)",
            "seed": self.seed,
            "config": self.config,
            "timestamp": timestamp,
        }


def filtered_rank(scores: np.ndarray, target: int, filter_out: Iterable[int] = ()) -> float:
    """Expected rank of ``target`` under random tie-breaking, ignoring ``filter_out``."""
    filt = np.fromiter(filter_out, dtype=np.int64)
    if target in set(filt.tolist()):
        raise ValueError(f"target {target} is in the filter set")
    keep = np.ones(len(scores), dtype=bool)
    keep[filt] = False
    t = scores[target]
    cand = scores[keep]
    greater = int(np.count_nonzero(cand > t))
    equal = int(np.count_nonzero(cand == t)) - 1
    return 1.0 + greater + equal / 2.0


def summarize(ranks: Sequence[float]) -> tuple[float, float, float]:
    r = np.asarray(ranks, dtype=np.float64)
    if r.size == 0:
        return 0.0, 0.0, 0.0
    return float(np.mean(1.0 / r)), float(np.mean(r <= 1)), float(np.mean(r <= 10))


def known_answers(g: KnowledgeGraph, extra: Iterable[Triple] = ()) -> dict[tuple[int, int], set[int]]:
    """(entity, relation) -> all true answers, over both directions."""
    known: dict[tuple[int, int], set[int]] = defaultdict(set)
    for h, r, t in g.triples.tolist():
        known[(h, r)].add(t)
    for h, r, t in extra:
        known[(h, r)].add(t)
        known[(t, r ^ 1)].add(h)
    return known


def directional_queries(triples: Sequence[Triple]) -> list[tuple[int, int, int]]:
    out = []
    for h, r, t in triples:
        out.append((h, r, t))
        out.append((t, r ^ 1, h))
    return out


def rank_queries(
    g: KnowledgeGraph,
    queries: Sequence[tuple[int, int, int]],
    known: Mapping[tuple[int, int], set[int]],
    table: ConfidenceTable,
    params: Mapping[str, np.ndarray],
    rcfg: ReasonerConfig,
    mcfg: MaskConfig,
    eval_seed: int,
    eval_mask: str = "sampled",
    threads: int = 1,
) -> list[tuple[float, float]]:
    """``(filtered rank, log-loss)`` for every ``(s, r_q, target)``.

    Query ``i`` draws its masks from stream ``(eval_seed, i)``.
    """
    if eval_mask not in ("sampled", "none"):
        raise ValueError(f"eval_mask must be 'sampled' or 'none', got {eval_mask!r}")
    if eval_mask == "none":
        rcfg = replace(rcfg, masking_enabled=False)
    mcfg = replace(mcfg, seed=eval_seed)

    def one(item):
        i, (s, r, target) = item
        res = forward((s, r), g, table, params, rcfg, mcfg, stream_key=(i,))
        scores = res.final_scores
        filt = known.get((s, r), set()) - {target}
        m = scores.max()
        loss = float(m + np.log(np.exp(scores - m).sum()) - scores[target])
        return filtered_rank(scores, target, filt), loss

    items = list(enumerate(queries))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, items))
    return [one(x) for x in items]


def report_from_ranks(results: Sequence[tuple[float, float]], queries, **meta) -> MetricsReport:
    ranks = [r for r, _ in results]
    mrr, h1, h10 = summarize(ranks)
    if any(math.isnan(x) for x in (mrr, h1, h10)):
        raise FloatingPointError("metrics are NaN")
    mean_loss = float(np.mean([x for _, x in results])) if results else float("nan")
    return MetricsReport(
        mrr=mrr, hits1=h1, hits10=h10, n_queries=len(ranks), ranks=ranks, queries=list(queries), mean_loss=mean_loss, **meta
    )


def evaluate(
    split,
    table: ConfidenceTable,
    params: Mapping[str, np.ndarray],
    rcfg: ReasonerConfig,
    mcfg: MaskConfig,
    eval_seed: int = 0,
    eval_mask: str = "sampled",
    threads: int = 1,
    **meta,
) -> MetricsReport:
    """Both-direction filtered metrics for the test triples on the inductive graph."""
    queries = directional_queries(split.test_queries)
    known = known_answers(split.ind_graph, list(split.test_queries) + list(split.ind_valid_queries))
    ranks = rank_queries(split.ind_graph, queries, known, table, params, rcfg, mcfg, eval_seed, eval_mask, threads)
    return report_from_ranks(ranks, queries, seed=eval_seed, **meta)


def evaluate_valid(split, table, params, rcfg, mcfg, eval_seed=0, eval_mask="sampled", threads=1) -> MetricsReport:
    """Validation queries ranked on the training graph."""
    queries = directional_queries(split.valid_queries)
    known = known_answers(split.train_graph, split.valid_queries)
    ranks = rank_queries(split.train_graph, queries, known, table, params, rcfg, mcfg, eval_seed, eval_mask, threads)
    return report_from_ranks(ranks, queries, seed=eval_seed)
