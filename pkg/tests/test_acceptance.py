"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run directly with ``python tests/test_acceptance.py`` or through pytest.
"""

import dataclasses
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from qaspr import autodiff as ad
from qaspr.checkpoint import load as load_checkpoint
from qaspr.cli import main as cli_main
from qaspr.config import make_config, preset
from qaspr.evaluation import evaluate
from qaspr.kg import KnowledgeGraph, load_inductive_split
from qaspr.masking import MaskConfig, mask_from_candidates, rng_stream, sample_mask
from qaspr.reasoner import ReasonerConfig, forward, init_params
from qaspr.rules import mine_confidence
from qaspr.synthetic import make_rule_split, rule_split, write_split
from qaspr.toy import toy_grad_check
from qaspr.training import fit, multiclass_logloss

sys.path.insert(0, str(Path(__file__).parent))
from conftest import random_graph  # noqa: E402
from reference import dense_forward  # noqa: E402

REPO = Path(__file__).resolve().parent.parent


@pytest.fixture
def verdict(capsys):
    def emit(n: int, title: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {title} -- {detail}")
        assert ok, detail

    return emit


def _fit_eval(split, cfg):
    table = mine_confidence(split.train_graph)
    res = fit(split, table, cfg.reasoner(), cfg.mask(), cfg.train(), eval_seed=cfg.eval_seed, eval_mask=cfg.eval_mask)
    return evaluate(split, table, res.best_params, cfg.reasoner(), cfg.mask(), eval_seed=cfg.eval_seed, eval_mask=cfg.eval_mask)


# 1 -------------------------------------------------------------------------


def _double_loop_confidence(g: KnowledgeGraph) -> np.ndarray:
    """For every triple, scan every triple for the same endpoint pair."""
    R = g.n_relations
    trip = g.triples
    num = np.zeros((R, R))
    den = np.zeros(R)
    for s, r, o in trip.tolist():
        den[r] += 1
        same_pair = (trip[:, 0] == s) & (trip[:, 2] == o)
        for q in set(trip[same_pair, 1].tolist()):
            num[r, q] += 1
    out = np.zeros((R, R))
    nz = den > 0
    out[nz] = num[nz] / den[nz, None]
    return out


def test_c1_confidence_oracle(verdict):
    rng = np.random.default_rng(2024)
    graphs = []
    for _ in range(50):
        n = int(rng.integers(2, 51))
        k = int(rng.integers(1, 9))
        m = int(rng.integers(1, 401))
        graphs.append(random_graph(rng, n_entities=n, n_raw=k, n_triples=m))
    t0 = time.perf_counter()
    tables = [mine_confidence(g).conf for g in graphs]
    elapsed = time.perf_counter() - t0
    mismatches = sum(not np.array_equal(t, _double_loop_confidence(g)) for g, t in zip(graphs, tables))
    ok = mismatches == 0 and elapsed < 10.0
    verdict(1, "confidence equals double-loop oracle", ok, f"{mismatches}/50 mismatches, mining {elapsed:.3f}s")


# 2 -------------------------------------------------------------------------


def test_c2_masking_statistics(verdict):
    t0 = time.perf_counter()
    n = 100_000
    worst = 0.0
    details = []
    for i, p in enumerate((0.1, 0.3, 0.5)):
        rng = rng_stream(77, i)
        kept = sum(len(sample_mask({0: p}, rng)) for _ in range(n))
        sigma = math.sqrt(p * (1 - p) / n)
        z = abs(kept / n - (1 - p)) / sigma
        worst = max(worst, z)
        details.append(f"p={p}: {kept / n:.4f} ({z:.2f} sigma)")

    # argmax-confidence relation survives every trial
    from qaspr.rules import ConfidenceTable

    R = 8
    conf_rng = np.random.default_rng(5)
    cfg = MaskConfig(p_e=1.0, p_tau=1.0)
    kept_top = 0
    for trial in range(10_000):
        conf = np.zeros((R, R))
        conf[:, 0] = conf_rng.random(R)
        table = ConfidenceTable(conf, np.ones(R, dtype=np.int64))
        m = mask_from_candidates(list(range(R)), table, 0, cfg, rng_stream(9, trial), 1)
        kept_top += int(np.argmax(conf[:, 0])) in m.retained
    elapsed = time.perf_counter() - t0
    ok = worst < 3.0 and kept_top == 10_000 and elapsed < 5.0
    verdict(2, "masking retention statistics", ok, f"{'; '.join(details)}; argmax kept {kept_top}/10000; {elapsed:.2f}s")


# 3 -------------------------------------------------------------------------


def test_c3_gradient_correctness(verdict):
    t0 = time.perf_counter()
    report = toy_grad_check()
    elapsed = time.perf_counter() - t0
    ok = report.passed(1e-4) and elapsed < 30.0
    per = ", ".join(f"{k} {v:.1e}" for k, v in sorted(report.max_rel_error.items()))
    verdict(3, "toy gradients vs central differences", ok, f"max rel err {report.worst():.2e} ({per}); {elapsed:.2f}s")


# 4 -------------------------------------------------------------------------


def test_c4_loss_identities(verdict):
    errs = {}
    for n in (2, 4, 1000):
        loss = float(multiclass_logloss(ad.constant(np.zeros(n)), 0).data)
        errs[n] = abs(loss - math.log(n))
    ok = max(errs.values()) < 1e-9
    verdict(4, "uniform scores give ln n", ok, ", ".join(f"n={n}: err {e:.1e}" for n, e in errs.items()))


# 5 -------------------------------------------------------------------------


def test_c5_disabling_equivalence(verdict, tmp_path):
    rng = np.random.default_rng(55)
    worst = 0.0
    for case in range(30):
        n = int(rng.integers(2, 31))
        g = random_graph(rng, n_entities=n, n_raw=int(rng.integers(1, 5)), n_triples=int(rng.integers(1, 80)))
        cfg = ReasonerConfig(L=int(rng.integers(1, 5)), K=n, d=4, masking_enabled=True)
        params = init_params(g.n_relations, cfg, case)
        table = mine_confidence(g)
        s, rq = int(rng.integers(n)), int(rng.integers(g.n_relations))
        got = forward((s, rq), g, table, params, cfg, MaskConfig(p_e=0.0, seed=case), stream_key=(case,)).final_scores
        worst = max(worst, float(np.max(np.abs(got - dense_forward(g, s, rq, params, cfg.L)))))

    train_dir, ind_dir = write_split(tmp_path, *make_rule_split(seed=3, n_entities=80, pairs_per_half=16, distractors_per_half=32))
    common = ["--train-dir", train_dir, "--ind-dir", ind_dir, "--seed", "11", "--set", "max_epochs=3", "--set", "d=8"]
    assert cli_main(["ablate", "--variant", "no-mask", "--out", str(tmp_path / "a"), *common]) == 0
    assert cli_main(["train", "--p-e", "0", "--out", str(tmp_path / "t"), *common]) == 0
    assert cli_main(["eval", "--checkpoint", str(tmp_path / "t" / "best.ckpt")]) == 0

    def payload(path):
        data = json.loads(path.read_text())
        data.pop("timestamp")
        data.pop("config")  # the echo differs by construction (masking flag vs p_e)
        return json.dumps(data, sort_keys=True).encode()

    same = payload(tmp_path / "a" / "ablate" / "no-mask.json") == payload(tmp_path / "t" / "metrics.json")
    ok = worst < 1e-12 and same
    verdict(5, "p_e=0, K>=|V| equals dense reference; ablate no-mask == train p_e=0", ok, f"max |diff| {worst:.1e}; metrics identical: {same}")


# 6 -------------------------------------------------------------------------


def test_c6_determinism(verdict, tmp_path):
    train_dir, ind_dir = write_split(tmp_path, *make_rule_split(seed=4, n_entities=80, pairs_per_half=16, distractors_per_half=32))
    mrrs = []
    for i, threads in enumerate(("1", "1", "3")):
        out = tmp_path / f"run{i}"
        args = ["--train-dir", train_dir, "--ind-dir", ind_dir, "--out", str(out), "--seed", "5", "--threads", threads]
        args += ["--set", "max_epochs=3", "--set", "d=8", "--eval-mask", "sampled", "--eval-seed", "2"]
        assert cli_main(["train", *args]) == 0
        assert cli_main(["eval", "--checkpoint", str(out / "best.ckpt"), "--threads", threads]) == 0
        mrrs.append(json.loads((out / "metrics.json").read_text())["mrr"])
    ok = len({m.hex() for m in mrrs}) == 1
    verdict(6, "identical MRR across reruns and thread counts", ok, f"MRRs {[m.hex() for m in mrrs]}")


# 7 -------------------------------------------------------------------------


def test_c7_synthetic_oracle(verdict, tmp_path):
    t0 = time.perf_counter()
    split = rule_split(tmp_path, seed=0)
    assert split.train_graph.n_entities + split.ind_graph.n_entities == 200
    report = _fit_eval(split, make_config({}))
    elapsed = time.perf_counter() - t0
    ok = report.mrr >= 0.95 and elapsed < 300
    verdict(7, "planted single rule, defaults", ok, f"test MRR {report.mrr:.4f} (>= 0.95), {elapsed:.1f}s")


# 8 -------------------------------------------------------------------------


def _wn18rr_v1_dirs():
    root = Path(os.environ.get("QASPR_DATA_DIR", REPO / "data"))
    return root / "WN18RR_v1", root / "WN18RR_v1_ind"


def test_c8_wn18rr_v1_desk_run(verdict, tmp_path):
    train_dir, ind_dir = _wn18rr_v1_dirs()
    if not (train_dir / "train.txt").exists() or not (ind_dir / "test.txt").exists():
        verdict(8, "WN18RR v1 desk-scale run", False, f"benchmark files not found under {train_dir.parent} (set QASPR_DATA_DIR)")
    out = tmp_path / "wn18rr_v1"
    t0 = time.perf_counter()
    args = ["--config", "presets/wn18rr_v1.json", "--train-dir", str(train_dir), "--ind-dir", str(ind_dir), "--out", str(out)]
    assert cli_main(["train", *args]) == 0
    assert cli_main(["eval", "--checkpoint", str(out / "best.ckpt")]) == 0
    elapsed = time.perf_counter() - t0
    metrics = json.loads((out / "metrics.json").read_text())
    valid_schema = all(isinstance(metrics.get(k), float) and 0 <= metrics[k] <= 1 for k in ("mrr", "hits1", "hits10"))
    valid_schema &= metrics["n_queries"] > 0 and metrics["hits1"] <= metrics["hits10"]

    # uniform baseline: every parameter zero
    params, meta = load_checkpoint(out / "best.ckpt")
    cfg = make_config(meta["config"])
    split = load_inductive_split(train_dir, ind_dir)
    zeros = {k: np.zeros_like(v) for k, v in params.items()}
    base = evaluate(split, mine_confidence(split.train_graph), zeros, cfg.reasoner(), cfg.mask(), eval_mask=cfg.eval_mask)
    record = {"achieved_mrr": metrics["mrr"], "reported_mrr": 0.794, "uniform_mrr": base.mrr, "seed": cfg.seed,
              "seconds": elapsed, "config": cfg.to_json()}
    (REPO / "wn18rr_v1_run.json").write_text(json.dumps(record, indent=2) + "\n")
    ok = valid_schema and elapsed < 7200 and metrics["mrr"] >= 10 * base.mrr
    verdict(8, "WN18RR v1 desk-scale run", ok, f"MRR {metrics['mrr']:.4f} vs uniform {base.mrr:.4f} (reported 0.794); {elapsed / 60:.1f} min")


# 9 -------------------------------------------------------------------------


def test_c9_masking_under_noise(verdict, tmp_path):
    full_cfg = make_config({})
    no_mask = dataclasses.replace(full_cfg, masking_enabled=False)
    full, ablated = [], []
    for seed in range(5):
        split = rule_split(tmp_path / str(seed), seed=seed, noise=0.3)
        full.append(_fit_eval(split, full_cfg).mrr)
        ablated.append(_fit_eval(split, no_mask).mrr)
    ok = np.mean(full) >= np.mean(ablated)
    verdict(9, "full >= w/o-M on the 30%-noise oracle (5 seeds)", ok,
            f"full {np.mean(full):.4f} {np.round(full, 4).tolist()} vs w/o-M {np.mean(ablated):.4f} {np.round(ablated, 4).tolist()}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
