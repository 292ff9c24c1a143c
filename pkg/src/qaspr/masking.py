"""Query-dependent relation masking driven by mined rule confidence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kg import KnowledgeGraph
from .rules import ConfidenceTable, confidence_row


@dataclass(frozen=True)
class MaskConfig:
    p_e: float = 0.5
    p_tau: float = 0.5
    eps: float = 1e-12
    seed: int = 0

    def problems(self) -> list[str]:
        out = []
        if not 0.0 <= self.p_e <= 1.0:
            out.append(f"p_e must lie in [0, 1], got {self.p_e}")
        if not 0.0 <= self.p_tau <= 1.0:
            out.append(f"p_tau must lie in [0, 1], got {self.p_tau}")
        if not self.eps > 0:
            out.append(f"eps must be positive, got {self.eps}")
        return out


@dataclass
class HopMask:
    hop: int
    candidates: list[int] = field(default_factory=list)
    confidence: dict[int, float] = field(default_factory=dict)
    removal_prob: dict[int, float] = field(default_factory=dict)
    retained: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "hop": self.hop,
            "candidates": self.candidates,
            "confidence": {str(r): c for r, c in self.confidence.items()},
            "removal_prob": {str(r): p for r, p in self.removal_prob.items()},
            "retained": self.retained,
        }


def rng_stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream keyed by ``(seed, *keys)``, e.g. (seed, query, hop)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


def candidate_relations(g: KnowledgeGraph, frontier) -> list[int]:
    frontier = np.asarray(sorted(frontier), dtype=np.int64)
    if frontier.size == 0:
        return []
    _, rels, _ = g.out_edges(frontier)
    return np.unique(rels).tolist()


def removal_probabilities(row: list[tuple[int, float]], cfg: MaskConfig) -> dict[int, float]:
    if not row:
        raise ValueError("removal_probabilities needs at least one candidate relation")
    conf = np.array([c for _, c in row], dtype=np.float64)
    c_max = conf.max()
    c_avg = conf.mean()
    spread = c_max - c_avg
    if spread < cfg.eps:
        return {r: 0.0 for r, _ in row}
    probs = np.minimum((c_max - conf) / spread * cfg.p_e, cfg.p_tau)
    return {r: float(p) for (r, _), p in zip(row, probs)}


def sample_mask(probs: dict[int, float], rng: np.random.Generator) -> list[int]:
    """Keep each relation with probability ``1 - probs[r]``; draws in id order."""
    rels = sorted(probs)
    if not rels:
        return []
    u = rng.random(len(rels))
    return [r for r, draw in zip(rels, u) if draw >= probs[r]]


def mask_from_candidates(
    candidates: list[int],
    table: ConfidenceTable,
    r_q: int,
    cfg: MaskConfig,
    rng: np.random.Generator | None,
    hop: int,
    enabled: bool = True,
) -> HopMask:
    row = confidence_row(table, candidates, r_q)
    mask = HopMask(hop=hop, candidates=[r for r, _ in row], confidence=dict(row))
    if not row:
        return mask
    if not enabled:
        mask.removal_prob = {r: 0.0 for r, _ in row}
        mask.retained = list(mask.candidates)
        return mask
    mask.removal_prob = removal_probabilities(row, cfg)
    if cfg.p_e == 0.0:
        mask.retained = list(mask.candidates)
    else:
        mask.retained = sample_mask(mask.removal_prob, rng)
    return mask


def build_hop_mask(
    g: KnowledgeGraph,
    frontier,
    table: ConfidenceTable,
    r_q: int,
    cfg: MaskConfig,
    rng: np.random.Generator,
    hop: int = 1,
) -> HopMask:
    return mask_from_candidates(candidate_relations(g, frontier), table, r_q, cfg, rng, hop)
