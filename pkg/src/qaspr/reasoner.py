"""Query-conditioned L-hop reasoning with masking and top-k path pruning."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .kg import KnowledgeGraph
from .masking import HopMask, MaskConfig, mask_from_candidates, rng_stream
from .rules import ConfidenceTable


@dataclass(frozen=True)
class ReasonerConfig:
    L: int = 3
    K: int = 150
    d: int = 32
    masking_enabled: bool = True
    scoring_enabled: bool = True
    shared_transform: bool = False
    relu: bool = False
    separate_scorers: bool = False

    def problems(self) -> list[str]:
        out = []
        for name in ("L", "K", "d"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1, got {getattr(self, name)}")
        return out


def init_params(n_relations: int, cfg: ReasonerConfig, seed: int) -> dict[str, np.ndarray]:
    """Uniform fan-in initialisation on [-1/sqrt(d), 1/sqrt(d)]."""
    rng = rng_stream(seed, 0x1A17)
    d = cfg.d
    bound = 1.0 / np.sqrt(d)
    tshape = (d, 2 * d) if cfg.shared_transform else (n_relations, d, 2 * d)
    params = {
        "rel_emb": rng.uniform(-bound, bound, size=(n_relations, d)),
        "query_transform": rng.uniform(-bound, bound, size=tshape),
        "score_vec": rng.uniform(-bound, bound, size=d),
    }
    if cfg.separate_scorers:
        params["semantic_vec"] = rng.uniform(-bound, bound, size=d)
    return params


FROZEN_PARAMS = frozenset({"semantic_vec"})


# ---------------------------------------------------------------------------
# per-node primitives (reference semantics; forward() runs the batched form)


def message(h_parent: np.ndarray | None, edge_rel: int, r_q: int, params: Mapping[str, np.ndarray]) -> np.ndarray:
    rel_emb = params["rel_emb"]
    R = rel_emb.shape[0]
    if not (0 <= edge_rel < R and 0 <= r_q < R):
        raise IndexError(f"relation id out of range [0, {R})")
    T = params["query_transform"]
    W = T if T.ndim == 2 else T[r_q]
    out = W @ np.concatenate([rel_emb[r_q], rel_emb[edge_rel]])
    return out if h_parent is None else h_parent + out


def score_node(h_v: np.ndarray, params: Mapping[str, np.ndarray]) -> float:
    return float(params["score_vec"] @ h_v)


def accumulate_score(parent_scores: Sequence[float], s_cur: float) -> float:
    if len(parent_scores) == 0:
        raise ValueError("accumulate_score needs at least one parent score")
    return max(parent_scores) + s_cur


def select_topk(cum_score: Mapping[int, float], K: int) -> list[int]:
    if K < 1:
        raise ValueError("K must be >= 1")
    ranked = sorted(cum_score, key=lambda v: (-cum_score[v], v))
    return sorted(ranked[:K])


def _topk_positions(entities: np.ndarray, scores: np.ndarray, K: int) -> np.ndarray:
    """Positions of the K best (score desc, entity id asc), in entity order."""
    if len(entities) <= K:
        return np.arange(len(entities))
    order = np.lexsort((entities, -scores))
    return np.sort(order[:K])


# ---------------------------------------------------------------------------


@dataclass
class ReasonerState:
    hop: int = 0
    nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    emb_matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    cum: np.ndarray = field(default_factory=lambda: np.zeros(0))
    frontier: list[int] = field(default_factory=list)
    frontiers: list[list[int]] = field(default_factory=list)
    hop_masks: list[HopMask] = field(default_factory=list)
    visited: set[int] = field(default_factory=set)

    @property
    def emb(self) -> dict[int, np.ndarray]:
        return {int(v): self.emb_matrix[i] for i, v in enumerate(self.nodes)}

    @property
    def cum_score(self) -> dict[int, float]:
        return {int(v): float(c) for v, c in zip(self.nodes, self.cum)}


@dataclass
class ForwardResult:
    scores: ad.Tensor
    state: ReasonerState
    tape: ad.Tape

    @property
    def final_scores(self) -> np.ndarray:
        return self.scores.data

    @property
    def emb(self) -> dict[int, np.ndarray]:
        return self.state.emb


def forward(
    query: tuple[int, int],
    g: KnowledgeGraph,
    table: ConfidenceTable,
    params: Mapping[str, np.ndarray],
    cfg: ReasonerConfig,
    mask_cfg: MaskConfig,
    stream_key: tuple[int, ...] = (0,),
    exclude: tuple[int, int, int] | None = None,
    replay: ReasonerState | None = None,
) -> ForwardResult:
    """Run the L-hop recursion for ``(s, r_q, ?)`` and score every entity.

    Hop ``l`` draws its mask from ``rng_stream(mask_cfg.seed, *stream_key, l)``.
    ``exclude`` removes one fact (and its inverse) from the traversal, used
    to hide the training target. ``replay`` reuses the frontiers and retained
    relation sets of an earlier state, so the structure is held fixed.
    """
    s, r_q = int(query[0]), int(query[1])
    if not 0 <= s < g.n_entities:
        raise IndexError(f"query entity {s} not in graph with {g.n_entities} entities")
    if not 0 <= r_q < g.n_relations:
        raise IndexError(f"query relation {r_q} out of range")
    if cfg.L < 1:
        raise ValueError("ReasonerConfig.L must be >= 1")

    tape = ad.Tape()
    P = {name: tape.param(name, arr) for name, arr in params.items() if name not in FROZEN_PARAMS}
    semantic = params["semantic_vec"] if cfg.separate_scorers else params["score_vec"]
    T = P["query_transform"]
    W = T if T.data.ndim == 2 else ad.gather(T, r_q)

    state = ReasonerState()
    h_prev: ad.Tensor | None = None
    prev_nodes = np.array([s], dtype=np.int64)
    prev_cum = np.zeros(1)

    for hop in range(1, cfg.L + 1):
        if hop == 1:
            front_pos = np.zeros(1, dtype=np.int64)
        elif replay is not None:
            front_pos = np.searchsorted(prev_nodes, replay.frontiers[hop - 1])
        elif cfg.scoring_enabled:
            front_pos = _topk_positions(prev_nodes, prev_cum, cfg.K)
        else:
            front_pos = np.arange(len(prev_nodes))
        frontier = prev_nodes[front_pos]
        state.frontiers.append(frontier.tolist())
        state.visited.update(frontier.tolist())

        src, rels, tails = g.out_edges(frontier)
        src = front_pos[src]
        if exclude is not None and len(rels):
            eh, er, et = exclude
            heads = prev_nodes[src]
            drop = ((heads == eh) & (rels == er) & (tails == et)) | ((heads == et) & (rels == (er ^ 1)) & (tails == eh))
            keep = ~drop
            src, rels, tails = src[keep], rels[keep], tails[keep]

        candidates = np.unique(rels).tolist()
        if replay is not None:
            mask = replay.hop_masks[hop - 1]
        else:
            rng = rng_stream(mask_cfg.seed, *stream_key, hop) if cfg.masking_enabled else None
            mask = mask_from_candidates(candidates, table, r_q, mask_cfg, rng, hop, enabled=cfg.masking_enabled)
        state.hop_masks.append(mask)
        keep = np.isin(rels, np.asarray(mask.retained, dtype=np.int64))
        src, rels, tails = src[keep], rels[keep], tails[keep]

        if len(rels) == 0:
            state.nodes = np.zeros(0, dtype=np.int64)
            state.emb_matrix = np.zeros((0, cfg.d))
            state.cum = np.zeros(0)
            state.hop = hop
            h_prev = None
            prev_nodes = state.nodes
            prev_cum = state.cum
            break

        urels, rel_pos = np.unique(rels, return_inverse=True)
        nodes, dst = np.unique(tails, return_inverse=True)
        hq = ad.gather(P["rel_emb"], np.full(len(urels), r_q))
        M = ad.linear(W, ad.concat(hq, ad.gather(P["rel_emb"], urels)))
        msg = ad.gather(M, rel_pos)
        if h_prev is not None:
            msg = ad.add(ad.gather(h_prev, src), msg)
        h = ad.index_add(msg, dst, len(nodes))
        if cfg.relu:
            h = ad.relu(h)

        s_cur = h.data @ semantic
        parent_best = np.full(len(nodes), -np.inf)
        np.maximum.at(parent_best, dst, prev_cum[src])
        cum = parent_best + s_cur

        h_prev, prev_nodes, prev_cum = h, nodes, cum
        state.hop = hop
        state.nodes = nodes
        state.emb_matrix = h.data
        state.cum = cum
        state.visited.update(nodes.tolist())

    if cfg.scoring_enabled and len(prev_nodes):
        state.frontier = prev_nodes[_topk_positions(prev_nodes, prev_cum, cfg.K)].tolist()
    else:
        state.frontier = prev_nodes.tolist()

    if h_prev is None:
        scores = ad.constant(np.zeros(g.n_entities))
    else:
        scores = ad.index_add(ad.dot(P["score_vec"], h_prev), prev_nodes, g.n_entities)
    return ForwardResult(scores=scores, state=state, tape=tape)
