import networkx as nx
import numpy as np
import pytest

from oracles import to_nx
from structpse.dataset import load_manifest
from structpse.graph import validate, write_jsonl
from structpse.synth import NINE_CHANNEL_CARD, synth_corpus, synth_dataset


def test_small_molecules_have_cycles():
    graphs = synth_corpus("small-molecule-like", 200, seed=5)
    for g in graphs:
        h = to_nx(g)
        assert 9 <= g.num_nodes <= 38
        assert nx.is_connected(h)
        assert len(nx.cycle_basis(h)) >= 1
        assert g.num_channels == 1 and validate(g) == []


def test_chains_schema():
    graphs = synth_corpus("chain-like", 10, seed=1)
    assert len(graphs) == 10
    for g in graphs:
        assert g.num_channels == 9 and 50 <= g.num_nodes <= 300
        assert validate(g) == []
        assert (g.node_cat.max(axis=0) < np.array(NINE_CHANNEL_CARD)).all()
        # long and thin: diameter well above that of a small molecule
        assert nx.diameter(to_nx(g)) >= 20


def test_same_seed_same_file(tmp_path):
    for i in range(2):
        write_jsonl(synth_corpus("chain-like", 3, seed=9), tmp_path / f"{i}.jsonl")
    assert (tmp_path / "0.jsonl").read_bytes() == (tmp_path / "1.jsonl").read_bytes()
    write_jsonl(synth_corpus("chain-like", 3, seed=10), tmp_path / "other.jsonl")
    assert (tmp_path / "other.jsonl").read_bytes() != (tmp_path / "0.jsonl").read_bytes()


def test_prefix_of_corpus_is_stable():
    a = synth_corpus("small-molecule-like", 5, seed=3)
    b = synth_corpus("small-molecule-like", 8, seed=3)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.edges, y.edges)


def test_synth_dataset_manifest(tmp_path):
    path = synth_dataset("small-molecule-like", 20, tmp_path, "mol", seed=0, channels=9)
    m = load_manifest(path)
    assert m.name == "mol" and m.num_channels == 9
    assert sum(m.counts.values()) == 20 and m.counts["train"] == 16
    with pytest.raises(ValueError):
        synth_corpus("protein", 2, seed=0)
