import json

import numpy as np
import pytest

from dyngcn.data import (DatasetError, load_dataset, save_dataset, select_top_vertices,
                         synth_dynamic_communities, synth_graph_sequences)
from dyngcn.evaluation import monte_carlo_splits
from dyngcn.models import Model, named_model
from dyngcn.training import TrainConfig, train


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def assert_same_dataset(a, b):
    assert (a.name, a.task, a.weighted) == (b.name, b.task, b.weighted)
    for ga, gb in zip(a.graphs, b.graphs, strict=True):
        np.testing.assert_array_equal(ga.adjacency, gb.adjacency)
        np.testing.assert_array_equal(ga.features, gb.features)
    np.testing.assert_array_equal(a.labels.labels, b.labels.labels)
    np.testing.assert_array_equal(a.labels.mask, b.labels.mask)


class TestRoundTrip:
    def test_vertex_bit_exact(self, tmp_path, small_vertex_dataset):
        save_dataset(small_vertex_dataset, tmp_path)
        assert_same_dataset(load_dataset(tmp_path), small_vertex_dataset)

    def test_graph_bit_exact(self, tmp_path):
        ds = synth_graph_sequences(num_sequences=6, num_vertices=4, T=5, d=3, k=2, seed=2, min_length=3)
        save_dataset(ds, tmp_path)
        back = load_dataset(tmp_path / "manifest.json")
        assert_same_dataset(back, ds)
        assert not back.labels.mask.all()

    def test_save_is_byte_stable(self, tmp_path, small_vertex_dataset):
        save_dataset(small_vertex_dataset, tmp_path / "a")
        save_dataset(small_vertex_dataset, tmp_path / "b")
        save_dataset(load_dataset(tmp_path / "a"), tmp_path / "c")
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b") == tree_bytes(tmp_path / "c")

    def test_file_names(self, tmp_path, small_vertex_dataset):
        save_dataset(small_vertex_dataset, tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["files"]["adjacency"][0] == "adj_0001.csv"
        assert (tmp_path / "mask_0004.csv").is_file()


class TestLoadErrors:
    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match=str(tmp_path / "nope")):
            load_dataset(tmp_path / "nope")

    def test_wrong_feature_width_names_file(self, tmp_path, small_vertex_dataset):
        save_dataset(small_vertex_dataset, tmp_path)
        f = tmp_path / "feat_0002.csv"
        rows = [",".join(r.split(",")[:-1]) for r in f.read_text().splitlines()]
        f.write_text("\n".join(rows) + "\n")
        with pytest.raises(DatasetError, match="feat_0002.csv"):
            load_dataset(tmp_path)

    def test_unweighted_rejects_weights(self, tmp_path, small_vertex_dataset):
        save_dataset(small_vertex_dataset, tmp_path)
        f = tmp_path / "adj_0001.csv"
        f.write_text(f.read_text().replace("1,", "2,", 1))
        with pytest.raises(DatasetError):
            load_dataset(tmp_path)

    def test_extra_manifest_key(self, tmp_path, small_vertex_dataset):
        save_dataset(small_vertex_dataset, tmp_path)
        m = json.loads((tmp_path / "manifest.json").read_text())
        m["extra"] = 1
        (tmp_path / "manifest.json").write_text(json.dumps(m))
        with pytest.raises(DatasetError, match="keys"):
            load_dataset(tmp_path)

    def test_empty_labels_saved_but_not_trainable(self, tmp_path):
        ds = synth_dynamic_communities(num_vertices=12, T=2, d=4, k=2, labeled_fraction=0.0)
        save_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert not back.labels.mask.any()
        m = Model(named_model("fc-fc", "vertex", 4, 2, fc=3))
        with pytest.raises(ValueError, match="empty"):
            train(m, back, np.arange(6), np.arange(6, 12), TrainConfig(max_epochs=1))


class TestSynth:
    def test_adjacency_is_simple_graph(self, small_vertex_dataset):
        a = small_vertex_dataset.graphs[0].adjacency
        np.testing.assert_array_equal(a, np.swapaxes(a, 1, 2))
        assert set(np.unique(a)) <= {0.0, 1.0}
        assert np.all(np.diagonal(a, axis1=1, axis2=2) == 0)

    def test_degenerate_config_is_static_and_separable(self):
        ds = synth_dynamic_communities(num_vertices=20, T=4, d=8, k=4, drift=0.0, noise=0.0)
        x = ds.graphs[0].features
        np.testing.assert_array_equal(x, np.repeat(x[:1], 4, axis=0))
        _, cls = ds.samples()
        # each class owns its own block of columns
        np.testing.assert_array_equal(np.argmax(x[0] @ np.eye(8)[:, [0, 2, 4, 6]], axis=1), cls)

    def test_same_seed_same_data(self):
        a = synth_dynamic_communities(num_vertices=20, seed=4)
        b = synth_dynamic_communities(num_vertices=20, seed=4)
        assert_same_dataset(a, b)

    @pytest.mark.parametrize("frac", [0.3, 0.55])
    def test_labeled_fraction(self, frac):
        ds = synth_dynamic_communities(num_vertices=100, labeled_fraction=frac, seed=1)
        assert abs(ds.labels.mask[0].sum() - frac * 100) <= 1

    def test_step_gating(self):
        ds = synth_dynamic_communities(num_vertices=40, T=6, d=8, k=4, drift=1.0, noise=0.0)
        x = ds.graphs[0].features
        visible = np.abs(x).sum(axis=-1) > 0
        assert np.all(visible.sum(axis=0) == 2)

    def test_splits_work_on_synthetic_pool(self, small_vertex_dataset):
        pool, cls = small_vertex_dataset.samples()
        plan = monte_carlo_splits(cls, 2, 0.3, 0.2, pool=pool)
        assert len(plan) == 2


def test_select_top_vertices_zeroes_absent():
    rng = np.random.default_rng(0)
    T, V = 3, 6
    a = np.triu(rng.integers(0, 2, (T, V, V)).astype(float), 1)
    a = a + np.swapaxes(a, 1, 2)
    a[:, 0, 1:] = a[:, 1:, 0] = 1  # vertex 0 is the hub
    present = np.ones((T, V), dtype=bool)
    present[1, 0] = False
    ds = select_top_vertices(a, rng.standard_normal((T, V, 2)), present, np.arange(V) % 2, 4)
    g = ds.graphs[0]
    assert g.num_vertices == 4
    assert np.all(g.adjacency[1, 0] == 0) and np.all(g.features[1, 0] == 0)
    assert np.any(g.adjacency[0, 0] != 0)
