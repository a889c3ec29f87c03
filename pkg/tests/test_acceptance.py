"""Acceptance gate: one test per criterion, summarized at the end of the run."""

import itertools
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
import yaml

import oracles
from conftest import erdos_renyi_sample, make_graph
from test_pse import check_lap_pe_against_oracle
from test_probe import _realizable_corpus, gradient_check
from structpse.container import TargetTable
from structpse.dataset import FractionSpec, enumerate_mixes, subsample_fraction
from structpse.evaluate import clip_for_report, emit_heatmap, evaluate, r_squared, score_tables
from structpse.graph import Graph, NodeMark, RandomFeatureSpec
from structpse.parallel import WORKERS_ENV
from structpse.probe import (OptimizerState, ProbeConfig, ScheduleState, adamw_step,
                             cosine_warmup_lr, probe_inputs, train_probe)
from structpse.pse import (PseConfig, assemble_targets, compute_blocks, hk_diag_se,
                           laplacian_pinv, rwse)
from structpse.structuralize import structuralize_categorical
from structpse.synth import synth_corpus, synth_dataset

TIMES = tuple(float(t) for t in range(1, 21))


def _degenerate_graphs():
    out = []
    for n in range(3, 9):
        out.append(make_graph(n, [(i, (i + 1) % n) for i in range(n)], graph_id=f"c{n}"))
        out.append(make_graph(n, list(itertools.combinations(range(n), 2)), graph_id=f"k{n}"))
        out.append(make_graph(n, [(0, i) for i in range(1, n)], graph_id=f"s{n}"))
    cube = [(u, u ^ (1 << b)) for u in range(8) for b in range(3) if u < u ^ (1 << b)]
    out.append(make_graph(8, cube, graph_id="q3"))
    out.append(make_graph(6, [(0, 1), (2, 3), (4, 5)], graph_id="matching"))
    return out


@pytest.mark.criterion(1, "oracle equivalence of all P/SE blocks on 200 graphs (n <= 8)")
def test_criterion_1_oracle_equivalence():
    t0 = time.perf_counter()
    sample = erdos_renyi_sample(200 - len(_degenerate_graphs()), max_nodes=8, seed=2024)
    sample += _degenerate_graphs()
    assert len(sample) == 200
    cfg = PseConfig(virtual_node=False)
    for g in sample:
        blocks = compute_blocks(g, cfg)
        np.testing.assert_allclose(blocks["RWSE"], oracles.rwse(g, 20), atol=1e-8)
        np.testing.assert_allclose(blocks["HKdiagSE"], oracles.heat_diag(g, TIMES), atol=1e-8)
        np.testing.assert_allclose(blocks["Elstatic"], oracles.elstatic(g), atol=1e-8)
        lam = np.sort(np.linalg.eigvals(oracles.laplacian(g)).real)
        nz = lam[lam > 1e-8 * max(lam.max(), 0)][:4] if g.num_nodes else lam
        np.testing.assert_allclose(blocks["EigVals"][:, :len(nz)],
                                   np.broadcast_to(nz, (g.num_nodes, len(nz))), atol=1e-8)
        check_lap_pe_against_oracle(g, atol=1e-8, proj_atol=1e-6)
    assert time.perf_counter() - t0 < 60


@pytest.mark.criterion(2, "closed-form spectral checks (K3 RWSE/heat, single-edge L+)")
def test_criterion_2_closed_forms():
    k3 = make_graph(3, [(0, 1), (1, 2), (0, 2)])
    r = rwse(k3, 3)
    assert np.abs(r[:, 1] - 0.5).max() < 1e-10 and np.abs(r[:, 2] - 0.25).max() < 1e-10
    t = np.array(TIMES)
    heat = hk_diag_se(k3, t, kind="combinatorial")
    assert np.abs(heat - (1 / 3 + (2 / 3) * np.exp(-3 * t))).max() < 1e-10
    lp = laplacian_pinv(make_graph(2, [(0, 1)]))
    assert np.abs(lp - 0.25 * np.array([[1, -1], [-1, 1]])).max() < 1e-12


def _random_featured_graph(rng, i):
    n = int(rng.integers(1, 13))
    d = int(rng.integers(1, 5))
    p = rng.uniform(0.1, 0.8)
    edges = [e for e in itertools.combinations(range(n), 2) if rng.random() < p]
    cats = rng.integers(0, rng.integers(1, 6), size=(n, d))
    return Graph(num_nodes=n, edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
                 node_cat=cats, graph_id=f"f{i}")


@pytest.mark.criterion(3, "structuralization combinatorics on 1,000 featured graphs")
def test_criterion_3_structuralization_counts():
    rng = np.random.default_rng(3)
    failures = 0
    for i in range(1000):
        g = _random_featured_graph(rng, i)
        out = structuralize_categorical(g).graph
        n, d = g.num_nodes, g.num_channels
        present = sum(len(np.unique(g.node_cat[:, c])) for c in range(d))
        orig = out.edges[(out.edges < n).all(axis=1)]
        feature_edges = (out.marks[out.edges] == NodeMark.FEATURE).any(axis=1).sum()
        ok = (out.num_nodes == n + present and feature_edges == n * d
              and {tuple(sorted(e)) for e in orig.tolist()}
              == {tuple(sorted(e)) for e in g.edges.tolist()})
        failures += not ok
    assert failures == 0


@pytest.mark.criterion(4, "structuralized target width is exactly twice the plain width")
def test_criterion_4_double_targets():
    graphs = synth_corpus("small-molecule-like", 5, seed=4) + synth_corpus("chain-like", 2, seed=4)
    for cfg in (PseConfig(), PseConfig(num_eigvecs=2, rw_steps=5, heat_times=(0.5, 2.0)),
                PseConfig(laplacian_kind="combinatorial", virtual_node=False)):
        for g in graphs:
            plain = assemble_targets(g, cfg, "plain")
            struct = assemble_targets(g, cfg, "structuralized")
            assert struct.width == 2 * plain.width == 2 * cfg.width
            assert struct.matrix().shape == (g.num_nodes, 2 * cfg.width)


@pytest.mark.criterion(5, "mix enumeration: 3 datasets give 12 mixes; (k + C(k,2)) x 2")
def test_criterion_5_mixes():
    assert len(enumerate_mixes([("a", 10), ("b", 10), ("c", 10)])) == 12
    for k in range(1, 6):
        mixes = enumerate_mixes([(f"d{i}", 10) for i in range(k)])
        assert len(mixes) == (k + math.comb(k, 2)) * 2
        assert len({m.label for m in mixes}) == len(mixes)


@pytest.mark.criterion(6, "fraction arithmetic and nested reproducible samples")
def test_criterion_6_fractions():
    assert len(subsample_fraction(10_000, FractionSpec(0.01, seed=0))) == 100
    for seed in (0, 1, 99):
        runs = [[subsample_fraction(10_000, FractionSpec(r, seed)) for r in (0.01, 0.1, 0.25, 0.5)]
                for _ in range(2)]
        assert runs[0] == runs[1]
        sizes = [len(s) for s in runs[0]]
        assert sizes == [100, 1000, 2500, 5000]
        for small, large in zip(runs[0], runs[0][1:]):
            assert set(small) <= set(large)


@pytest.mark.criterion(7, "loss gradient, AdamW decay-only step and schedule endpoints")
def test_criterion_7_optimizer_contracts():
    assert max(gradient_check(s) for s in range(100)) < 1e-5
    out, _ = adamw_step({"w": np.array([1.0, -2.0])}, {"w": np.zeros(2)},
                        OptimizerState(weight_decay=1e-5), lr=0.005)
    assert out["w"].tolist() == [1.0 - 0.005 * 1e-5 * 1.0, -2.0 - 0.005 * 1e-5 * -2.0]
    assert out["w"][0] == 0.99999995
    assert cosine_warmup_lr(ScheduleState(120, 5, 5), 0.005) == 0.005
    assert cosine_warmup_lr(ScheduleState(120, 5, 120), 0.005) == 0.0


def _median_r2(model, graphs, seed):
    x = np.vstack([probe_inputs(g, RandomFeatureSpec(seed=seed)) for g in graphs])
    targets = [assemble_targets(g) for g in graphs]
    table = TargetTable.from_targets(targets)
    pred = model.predict(x)
    pt = TargetTable(table.graph_ids, table.rows_per_graph,
                     {name: pred[:, a:b] for name, a, b in model.layout})
    return {g: np.nanmedian(v) if np.isfinite(v).any() else np.nan
            for g, v in score_tables(pt, table).items()}


@pytest.mark.criterion(8, "probe sanity: realizable MSE < 1e-3; in-corpus beats off-corpus")
def test_criterion_8_probe_sanity():
    corpus = _realizable_corpus()
    model, _ = train_probe(corpus, ProbeConfig(epochs=120))
    x = np.vstack([c[0] for c in corpus])
    y = np.vstack([c[1][0] for c in corpus])
    assert np.mean((model.predict(x) - y) ** 2) < 1e-3

    seed = 0
    kinds = {"chain": "chain-like", "mol": "small-molecule-like"}
    train = {k: synth_corpus(kind, 120, seed=11, prefix=f"{k}-train") for k, kind in kinds.items()}
    test = {k: synth_corpus(kind, 40, seed=12, prefix=f"{k}-test") for k, kind in kinds.items()}
    models = {}
    for k, graphs in train.items():
        data = [(probe_inputs(g, RandomFeatureSpec(seed=seed)), assemble_targets(g)) for g in graphs]
        models[k], _ = train_probe(data, ProbeConfig(epochs=120, seed=seed))
    for own, other in (("chain", "mol"), ("mol", "chain")):
        inside = _median_r2(models[own], test[own], seed)
        outside = _median_r2(models[other], test[own], seed)
        wins = sum(inside[g] > outside[g] for g in inside)
        print(own, {g: (round(inside[g], 3), round(outside[g], 3)) for g in inside})
        assert wins >= 3, (own, inside, outside)


@pytest.mark.criterion(9, "reporting: mean predictor R2 = 0, clip to -1, constant target missing")
def test_criterion_9_reporting():
    rng = np.random.default_rng(9)
    for _ in range(50):
        t = rng.normal(size=int(rng.integers(2, 40))) * rng.uniform(0.01, 100)
        assert r_squared(np.full(t.shape, t.mean()), t) == 0.0
    assert clip_for_report(-3.0) == -1.0
    target = TargetTable(["a", "b"], [3, 3], {"G": np.column_stack([np.arange(6.0), np.arange(6.0)]),
                                             "C": np.full((6, 2), 0.7)})
    worse = TargetTable(["a", "b"], [3, 3], {"G": -5 * np.column_stack([np.arange(6.0)] * 2),
                                            "C": rng.normal(size=(6, 2))})
    rep = evaluate(worse, target, "m", "d")
    assert emit_heatmap(rep, "G").splitlines()[1] == "m,-1.0"
    assert rep.cells[("m", "d", "G")].median < -1
    assert emit_heatmap(rep, "C").splitlines()[1] == "m,"


def _make_corpora(root):
    return [synth_dataset("small-molecule-like", 500, root, "zinc", seed=101),
            synth_dataset("chain-like", 500, root, "pept", seed=102),
            synth_dataset("small-molecule-like", 500, root, "pcba", seed=103, channels=9)]


def _run(config, out, workers):
    env = dict(os.environ)
    env.pop(WORKERS_ENV, None)
    t0 = time.perf_counter()
    subprocess.run([sys.executable, "-m", "structpse.cli", "run", "--config", str(config),
                    "--output-dir", str(out), "--workers", str(workers)],
                   check=True, env=env, capture_output=True)
    return time.perf_counter() - t0


def _outputs(out):
    return {p.relative_to(out).as_posix(): p.read_bytes()
            for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "run.json" and "cache" not in p.parts}


@pytest.mark.slow
@pytest.mark.criterion(10, "end-to-end determinism (repeat, 1 vs 8 workers) and < 10 min")
def test_criterion_10_end_to_end(tmp_path):
    manifests = _make_corpora(tmp_path / "data")
    config = tmp_path / "run.yaml"
    config.write_text(yaml.safe_dump({"manifests": [str(m) for m in manifests], "seed": 0}))
    elapsed = _run(config, tmp_path / "a", workers=1)
    print(f"full pipeline: {elapsed:.1f} s")
    assert elapsed < 600
    _run(config, tmp_path / "b", workers=1)
    _run(config, tmp_path / "c", workers=8)
    a, b, c = (_outputs(tmp_path / x) for x in "abc")
    assert "report.json" in a and len([k for k in a if k.startswith("heatmaps/")]) == 10
    assert a == b
    assert a == c
    report = yaml.safe_load((tmp_path / "a" / "report.json").read_text())
    assert len(report["mixes"]) == 12
