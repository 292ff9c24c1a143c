"""A five-entity graph and a fixed-structure loss, used for gradient checks."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .gradcheck import GradCheckReport, grad_check
from .kg import build_graph
from .masking import MaskConfig
from .reasoner import ReasonerConfig, forward, init_params
from .rules import mine_confidence
from .training import multiclass_logloss

TOY_TRIPLES = [
    ("a", "r1", "b"),
    ("a", "r2", "c"),
    ("b", "r1", "d"),
    ("c", "r3", "d"),
    ("c", "r2", "e"),
    ("d", "r3", "e"),
    ("b", "r2", "e"),
]


def toy_closure(d: int = 4, L: int = 2, K: int = 2, seed: int = 3, relu: bool = False):
    """Return ``(closure, params)`` for the query ``(a, r1, ?)`` targeting ``d``.

    The first call records frontiers and masks; later calls replay them so
    finite differences see a smooth function.
    """
    g, vocab = build_graph(TOY_TRIPLES)
    table = mine_confidence(g)
    cfg = ReasonerConfig(L=L, K=K, d=d, relu=relu)
    mcfg = MaskConfig(p_e=0.5, p_tau=0.5, seed=seed)
    params = init_params(g.n_relations, cfg, seed)
    s, r_q, target = vocab.entity_ids["a"], vocab.relation_ids["r1"], vocab.entity_ids["d"]
    structure = forward((s, r_q), g, table, params, cfg, mcfg).state

    def closure():
        res = forward((s, r_q), g, table, params, cfg, mcfg, replay=structure)
        loss = multiclass_logloss(res.scores, target)
        return float(loss.data), ad.backward(res.tape, loss)

    return closure, params


def toy_grad_check(step: float = 1e-5) -> GradCheckReport:
    closure, params = toy_closure()
    return grad_check(closure, params, step=step)
