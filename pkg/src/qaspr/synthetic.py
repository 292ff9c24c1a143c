"""Synthetic inductive splits with a planted single rule ``body(s,o) <=> target(s,o)``."""

from __future__ import annotations

import os

import numpy as np

from .kg import InductiveSplit, load_inductive_split

Raw = list[tuple[str, str, str]]


def _half(rng: np.random.Generator, prefix: str, n: int, n_pairs: int, n_distractor: int, n_noise: int, n_noise_rel: int):
    names = [f"{prefix}{i}" for i in range(n)]
    perm = rng.permutation(n)
    # disjoint (s, o) pairs: the body relation is a partial matching
    pairs = [(names[perm[2 * i]], names[perm[2 * i + 1]]) for i in range(n_pairs)]
    body = [(s, "body", o) for s, o in pairs]
    target = [(s, "target", o) for s, o in pairs]
    facts = list(body)
    # distractor heads cycle through every entity so none is left isolated
    heads = rng.permutation(n)
    for k in range(n_distractor):
        a = heads[k % n]
        b = (a + 1 + rng.integers(n - 1)) % n
        facts.append((names[a], f"d{k % 3}", names[b]))
    for k in range(n_noise):
        a, b = rng.choice(n, size=2, replace=False)
        facts.append((names[a], f"noise{k % n_noise_rel}", names[b]))
    return facts, target


def make_rule_split(
    seed: int = 0,
    n_entities: int = 200,
    pairs_per_half: int = 40,
    distractors_per_half: int = 100,
    noise: float = 0.0,
    n_noise_relations: int = 2,
    valid_fraction: float = 0.35,
) -> tuple[dict[str, Raw], dict[str, Raw]]:
    """Raw GraIL-style files ``({"train","valid","test"}, {"train","test"})``.

    Entities are split in half: ``e*`` for training, ``u*`` unseen. On each
    half ``target(s, o)`` holds exactly when ``body(s, o)`` does. Held-out
    target facts form the validation and test queries. ``noise`` adds that
    fraction of extra edges (relative to the fact count) under dedicated
    relations unrelated to the rule.
    """
    rng = np.random.default_rng(seed)
    half = n_entities // 2
    out = []
    for prefix, n_val in (("e", valid_fraction), ("u", 0.5)):
        n_facts = pairs_per_half + distractors_per_half
        facts, target = _half(
            rng, prefix, half, pairs_per_half, distractors_per_half, int(round(noise * n_facts)), n_noise_relations
        )
        order = rng.permutation(len(target))
        n_hold = max(1, int(round(n_val * len(target))))
        held = [target[i] for i in sorted(order[:n_hold])]
        kept = [target[i] for i in sorted(order[n_hold:])]
        out.append((facts + kept, held))
    (train_facts, valid), (ind_facts, test) = out
    return {"train": train_facts, "valid": valid, "test": []}, {"train": ind_facts, "test": test}


def write_split(root: str | os.PathLike, train: dict[str, Raw], ind: dict[str, Raw]) -> tuple[str, str]:
    train_dir = os.path.join(root, "synthetic")
    ind_dir = os.path.join(root, "synthetic_ind")
    for d, files in ((train_dir, train), (ind_dir, ind)):
        os.makedirs(d, exist_ok=True)
        for name in ("train", "valid", "test"):
            with open(os.path.join(d, f"{name}.txt"), "w", encoding="utf-8") as fh:
                for h, r, t in files.get(name, []):
                    fh.write(f"{h}\t{r}\t{t}\n")
    return train_dir, ind_dir


def rule_split(root: str | os.PathLike, **kwargs) -> InductiveSplit:
    train, ind = make_rule_split(**kwargs)
    return load_inductive_split(*write_split(root, train, ind))
