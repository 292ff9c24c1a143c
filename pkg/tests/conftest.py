import numpy as np
import pytest
from hypothesis import strategies as st

from qaspr.kg import KnowledgeGraph, build_graph


def write_tsv(path, rows):
    path.write_text("".join("\t".join(r) + "\n" for r in rows), encoding="utf-8")


def random_graph(rng: np.random.Generator, n_entities=50, n_raw=8, n_triples=400) -> KnowledgeGraph:
    raw = rng.integers(0, [n_entities, n_raw, n_entities], size=(n_triples, 3))
    trip = np.column_stack([raw[:, 0], 2 * raw[:, 1], raw[:, 2]])
    inv = np.column_stack([raw[:, 2], 2 * raw[:, 1] + 1, raw[:, 0]])
    return KnowledgeGraph(np.concatenate([trip, inv]), n_entities, 2 * n_raw)


@st.composite
def small_graphs(draw, max_entities=12, max_raw=4, max_triples=30):
    n = draw(st.integers(2, max_entities))
    k = draw(st.integers(1, max_raw))
    rows = draw(
        st.lists(
            st.tuples(st.integers(0, n - 1), st.integers(0, k - 1), st.integers(0, n - 1)),
            min_size=1,
            max_size=max_triples,
        )
    )
    raw = [(f"e{h}", f"r{r}", f"e{t}") for h, r, t in rows]
    return build_graph(raw)


@pytest.fixture
def toy_conf_graph():
    """{(a,r1,b), (a,r2,b), (c,r1,b)}; conf[r1][r2] = 1/2, conf[r2][r1] = 1."""
    return build_graph([("a", "r1", "b"), ("a", "r2", "b"), ("c", "r1", "b")])
