"""Immutable knowledge graphs with inverse-relation augmentation and
GraIL-style inductive benchmark loading."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

INVERSE_PREFIX = "inv::"


class Triple(NamedTuple):
    head: int
    rel: int
    tail: int


class GraphError(ValueError):
    """Raised for malformed input files or violated split invariants."""


@dataclass
class Vocab:
    """Entity and relation name <-> id maps.

    Raw relation ``i`` gets id ``2*i`` and its inverse gets ``2*i + 1``,
    so ``inv(r) == r ^ 1``.
    """

    entities: list[str] = field(default_factory=list)
    relations: list[str] = field(default_factory=list)
    entity_ids: dict[str, int] = field(default_factory=dict)
    relation_ids: dict[str, int] = field(default_factory=dict)

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def n_raw_relations(self) -> int:
        return len(self.relations) // 2

    @staticmethod
    def inv(r: int) -> int:
        return r ^ 1

    def add_entity(self, name: str) -> int:
        idx = self.entity_ids.get(name)
        if idx is None:
            idx = len(self.entities)
            self.entities.append(name)
            self.entity_ids[name] = idx
        return idx

    def add_relation(self, name: str) -> int:
        idx = self.relation_ids.get(name)
        if idx is None:
            idx = len(self.relations)
            self.relations.append(name)
            self.relations.append(INVERSE_PREFIX + name)
            self.relation_ids[name] = idx
            self.relation_ids[INVERSE_PREFIX + name] = idx + 1
        return idx

    def with_fresh_entities(self) -> "Vocab":
        """Copy sharing the relation vocabulary but with no entities."""
        return Vocab(relations=list(self.relations), relation_ids=dict(self.relation_ids))


class KnowledgeGraph:
    """Deduplicated, inverse-closed triple store.

    Out-edges are kept in CSR form sorted by (head, rel, tail), so the
    out-edges of ``v`` are ``rels[offsets[v]:offsets[v+1]]`` and
    ``tails[...]``.
    """

    def __init__(self, triples: np.ndarray, n_entities: int, n_relations: int):
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        if triples.size:
            if triples[:, [0, 2]].min() < 0 or triples[:, [0, 2]].max() >= n_entities:
                raise GraphError("entity id out of range")
            if triples[:, 1].min() < 0 or triples[:, 1].max() >= n_relations:
                raise GraphError("relation id out of range")
        order = np.lexsort((triples[:, 2], triples[:, 1], triples[:, 0]))
        triples = triples[order]
        if len(triples):
            keep = np.ones(len(triples), dtype=bool)
            keep[1:] = np.any(triples[1:] != triples[:-1], axis=1)
            triples = triples[keep]
        self.triples = triples
        self.triples.setflags(write=False)
        self.n_entities = int(n_entities)
        self.n_relations = int(n_relations)
        self.heads = triples[:, 0]
        self.rels = triples[:, 1]
        self.tails = triples[:, 2]
        counts = np.bincount(self.heads, minlength=self.n_entities)
        self.offsets = np.zeros(self.n_entities + 1, dtype=np.int64)
        np.cumsum(counts, out=self.offsets[1:])
        self._pairs: dict[tuple[int, int], frozenset[int]] = {}
        for h, r, t in triples.tolist():
            key = (h, t)
            self._pairs[key] = self._pairs.get(key, frozenset()) | {r}

    def __len__(self) -> int:
        return len(self.triples)

    def _check(self, v: int) -> None:
        if not 0 <= v < self.n_entities:
            raise IndexError(f"entity id {v} out of range [0, {self.n_entities})")

    def neighbors(self, v: int) -> list[tuple[int, int]]:
        self._check(v)
        lo, hi = self.offsets[v], self.offsets[v + 1]
        return list(zip(self.rels[lo:hi].tolist(), self.tails[lo:hi].tolist()))

    def relations_between(self, u: int, v: int) -> frozenset[int]:
        self._check(u)
        self._check(v)
        return self._pairs.get((u, v), frozenset())

    def pair_relations(self) -> dict[tuple[int, int], frozenset[int]]:
        return self._pairs

    def out_edges(self, frontier: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorised out-edges of ``frontier``.

        Returns ``(src_pos, rel, tail)`` where ``src_pos`` indexes into
        ``frontier``.
        """
        frontier = np.asarray(frontier, dtype=np.int64)
        starts = self.offsets[frontier]
        counts = self.offsets[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, empty
        src_pos = np.repeat(np.arange(len(frontier)), counts)
        # position of each edge within its source's slice
        within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        idx = np.repeat(starts, counts) + within
        return src_pos, self.rels[idx], self.tails[idx]

    def triple_list(self) -> list[Triple]:
        return [Triple(*t) for t in self.triples.tolist()]


def load_tsv(path: str | os.PathLike) -> list[tuple[str, str, str]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise GraphError(f"{path}: line {lineno}: expected 3 fields, got {len(parts)}")
            out.append((parts[0], parts[1], parts[2]))
    return out


def _encode(raw: Iterable[tuple[str, str, str]], vocab: Vocab, fixed_relations: bool) -> list[tuple[int, int, int]]:
    encoded = []
    for h, r, t in raw:
        if fixed_relations:
            if r not in vocab.relation_ids:
                raise GraphError(f"unknown relation {r!r}")
        rid = vocab.relation_ids[r] if fixed_relations else vocab.add_relation(r)
        encoded.append((vocab.add_entity(h), rid, vocab.add_entity(t)))
    return encoded


def build_graph(
    raw: Sequence[tuple[str, str, str]],
    vocab: Vocab | None = None,
    extra_entities: Iterable[str] = (),
) -> tuple[KnowledgeGraph, Vocab]:
    """Build an inverse-augmented graph; a supplied vocab fixes the relation set.

    ``extra_entities`` are registered after the fact entities so that query
    endpoints without facts still get ids (as isolated nodes).
    """
    fixed = vocab is not None
    vocab = vocab if vocab is not None else Vocab()
    encoded = _encode(raw, vocab, fixed)
    for name in extra_entities:
        vocab.add_entity(name)
    arr = np.asarray(encoded, dtype=np.int64).reshape(-1, 3)
    inverse = arr[:, [2, 1, 0]].copy()
    inverse[:, 1] ^= 1
    both = np.concatenate([arr, inverse])
    g = KnowledgeGraph(both, vocab.n_entities, vocab.n_relations)
    dropped = (len(both) - len(g)) // 2
    if dropped:
        logger.info("dropped %d duplicate triples", dropped)
    return g, vocab


@dataclass
class InductiveSplit:
    train_graph: KnowledgeGraph
    train_vocab: Vocab
    train_queries: list[Triple]
    valid_queries: list[Triple]
    ind_graph: KnowledgeGraph
    ind_vocab: Vocab
    test_queries: list[Triple]
    ind_valid_queries: list[Triple] = field(default_factory=list)

    def validate(self) -> None:
        shared = set(self.train_vocab.entities) & set(self.ind_vocab.entities)
        if shared:
            sample = sorted(shared)[:5]
            raise GraphError(f"{len(shared)} entities shared between train and inductive graphs, e.g. {sample}")
        if self.ind_vocab.relations[: self.train_vocab.n_relations] != self.train_vocab.relations:
            raise GraphError("inductive relation vocabulary diverges from training vocabulary")
        if self.ind_vocab.n_relations != self.train_vocab.n_relations:
            raise GraphError("inductive graph introduces relations unseen in training")
        for q in self.test_queries:
            if not (q.head < self.ind_graph.n_entities and q.tail < self.ind_graph.n_entities):
                raise GraphError(f"test query {q} references an entity outside the inductive graph")


def _names(raw) -> list[str]:
    return [name for h, _, t in raw for name in (h, t)]


def _encode_queries(raw, vocab: Vocab, what: str) -> list[Triple]:
    out = []
    for h, r, t in raw:
        if r not in vocab.relation_ids:
            raise GraphError(f"{what}: unknown relation {r!r}")
        out.append(Triple(vocab.entity_ids[h], vocab.relation_ids[r], vocab.entity_ids[t]))
    return out


def load_inductive_split(train_dir: str | os.PathLike, ind_dir: str | os.PathLike) -> InductiveSplit:
    train_raw = load_tsv(os.path.join(train_dir, "train.txt"))
    valid_raw = load_tsv(os.path.join(train_dir, "valid.txt"))
    ind_raw = load_tsv(os.path.join(ind_dir, "train.txt"))
    test_raw = load_tsv(os.path.join(ind_dir, "test.txt"))
    ind_valid_path = os.path.join(ind_dir, "valid.txt")
    ind_valid_raw = load_tsv(ind_valid_path) if os.path.exists(ind_valid_path) else []

    train_graph, train_vocab = build_graph(train_raw, extra_entities=_names(valid_raw))
    train_entities = set(train_vocab.entities)
    for h, _, t in ind_raw + test_raw + ind_valid_raw:
        for name in (h, t):
            if name in train_entities:
                raise GraphError(f"inductive entity {name!r} also appears in the training graph")
    ind_vocab = train_vocab.with_fresh_entities()
    ind_graph, ind_vocab = build_graph(ind_raw, ind_vocab, extra_entities=_names(test_raw + ind_valid_raw))

    split = InductiveSplit(
        train_graph=train_graph,
        train_vocab=train_vocab,
        train_queries=list(dict.fromkeys(_encode_queries(train_raw, train_vocab, "train"))),
        valid_queries=_encode_queries(valid_raw, train_vocab, "valid"),
        ind_graph=ind_graph,
        ind_vocab=ind_vocab,
        test_queries=_encode_queries(test_raw, ind_vocab, "test"),
        ind_valid_queries=_encode_queries(ind_valid_raw, ind_vocab, "ind valid"),
    )
    split.validate()
    return split
