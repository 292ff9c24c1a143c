"""Single-rule confidence mining: C(r => r_q) from co-occurring relations."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .kg import KnowledgeGraph


@dataclass(frozen=True)
class ConfidenceTable:
    """``conf[r, q]`` is the confidence of the rule ``r(s, o) => q(s, o)``."""

    conf: np.ndarray
    support: np.ndarray

    @property
    def n_relations(self) -> int:
        return self.conf.shape[0]


def mine_confidence(g: KnowledgeGraph) -> ConfidenceTable:
    """Fraction of ``r``-triples whose endpoint pair also carries ``q``.

    Counting is done as ``A.T @ A`` over the (endpoint-pair x relation)
    incidence matrix; since triples are deduplicated, every triple maps to
    exactly one incidence entry.
    """
    R = g.n_relations
    if len(g) == 0:
        return ConfidenceTable(np.zeros((R, R)), np.zeros(R, dtype=np.int64))
    pair_key = g.heads * g.n_entities + g.tails
    _, pair_idx = np.unique(pair_key, return_inverse=True)
    incidence = sp.csr_matrix(
        (np.ones(len(g), dtype=np.int64), (pair_idx.ravel(), g.rels)),
        shape=(int(pair_idx.max()) + 1, R),
    )
    counts = (incidence.T @ incidence).toarray().astype(np.int64)
    support = np.asarray(incidence.sum(axis=0)).ravel().astype(np.int64)
    conf = np.zeros((R, R))
    nz = support > 0
    conf[nz] = counts[nz] / support[nz, None]
    conf.setflags(write=False)
    support.setflags(write=False)
    return ConfidenceTable(conf, support)


def confidence_row(table: ConfidenceTable, candidates, r_q: int) -> list[tuple[int, float]]:
    return [(int(r), float(table.conf[r, r_q])) for r in sorted(candidates)]


def table_to_csv(table: ConfidenceTable, relation_names: list[str] | None = None) -> str:
    """CSV with one row per (body, head) pair whose body has support."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["body", "head", "confidence", "support"])
    name = (lambda r: relation_names[r]) if relation_names else str
    for r in np.flatnonzero(table.support > 0):
        for q in range(table.n_relations):
            writer.writerow([name(int(r)), name(q), repr(float(table.conf[r, q])), int(table.support[r])])
    return buf.getvalue()
