import numpy as np
import pytest

from dyngcn import layers as L
from dyngcn.graph import GraphSequence
from dyngcn.models import (GRAPH_MODELS, VERTEX_MODELS, LayerSpec, Model, ModelSpec, batch_inputs,
                           build_model, count_params, model_forward, named_model, param_breakdown)
from dyngcn.numerics import ShapeError


def random_graph(rng, T=3, V=5, d=4):
    a = np.triu(rng.integers(0, 2, (T, V, V)).astype(float), 1)
    return GraphSequence(a + np.swapaxes(a, 1, 2), rng.standard_normal((T, V, d)))


class TestParameterCounts:
    @pytest.mark.parametrize("name,kw,expected", [
        ("wd-gcn", dict(gc=400, lstm=300), 872_206),
        ("cd-gcn", dict(gc=200, lstm=100), 163_406),
        ("fc-lstm-fc", dict(fc=400, lstm=400), 1_314_006),
    ])
    def test_reference_counts(self, name, kw, expected):
        assert count_params(named_model(name, "vertex", 70, 6, **kw)) == expected

    def test_breakdown_terms(self):
        parts = dict(param_breakdown(named_model("wd-gcn", "vertex", 70, 6, gc=400, lstm=300)))
        assert list(parts.values()) == [70 * 400, 4 * (400 * 300 + 300 ** 2 + 2 * 300), 300 * 6 + 6]

    @pytest.mark.parametrize("task,names", [("vertex", VERTEX_MODELS), ("graph", GRAPH_MODELS)])
    def test_count_matches_store(self, task, names):
        for name in names:
            spec = named_model(name, task, 4, 3, num_vertices=5, gc=6, lstm=7, fc=8)
            assert Model(spec).num_params() == count_params(spec), name


class TestSpecValidation:
    def test_unknown_layer(self):
        with pytest.raises(ValueError):
            LayerSpec("conv", 3)

    def test_width_junction(self):
        with pytest.raises(ShapeError, match="junction"):
            ModelSpec("vertex", [LayerSpec("wd-gc", 4), LayerSpec("fc", 5, "softmax")], 3, 4)

    def test_graph_needs_gs_head(self):
        with pytest.raises(ShapeError, match="gs-fc head"):
            ModelSpec("graph", [LayerSpec("fc", 3, "softmax")], 3, 3)

    def test_gs_fc_needs_vertex_count(self):
        with pytest.raises(ShapeError, match="num_vertices"):
            ModelSpec("graph", [LayerSpec("gs-fc", 3)], 3, 3)

    def test_round_trip(self):
        spec = named_model("cd-gcn", "graph", 4, 3, num_vertices=5, gc=6, lstm=7, dropout=0.25)
        assert ModelSpec.from_dict(spec.to_dict()) == spec

    def test_unknown_model(self):
        with pytest.raises(ValueError, match="choose from"):
            named_model("gat", "vertex", 3, 2)


class TestForward:
    def test_vertex_output_is_row_stochastic(self, rng):
        g = random_graph(rng)
        out = model_forward(build_model(named_model("wd-gcn", "vertex", 4, 3, gc=5, lstm=6)), g)
        assert out.shape == (1, 3, 5, 3)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)

    def test_graph_output_shape(self, rng):
        gs = [random_graph(rng) for _ in range(2)]
        spec = named_model("cd-gcn", "graph", 4, 3, num_vertices=5, gc=5, lstm=6)
        out = model_forward(build_model(spec), gs)
        assert out.shape == (2, 3, 3)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-12)

    def test_eval_deterministic(self, rng):
        g = random_graph(rng)
        m = build_model(named_model("cd-gcn", "vertex", 4, 3, gc=5, lstm=6, dropout=0.5))
        np.testing.assert_array_equal(model_forward(m, g), model_forward(m, g))

    def test_zero_head_gives_uniform(self, rng):
        m = build_model(named_model("wd-gcn", "vertex", 4, 3, gc=5, lstm=6))
        m.store.params["2.fc.W"][:] = 0
        m.store.params["2.fc.b"][:] = 0
        np.testing.assert_allclose(model_forward(m, random_graph(rng)), 1 / 3, rtol=1e-15)

    def test_train_dropout_needs_rng(self, rng):
        m = build_model(named_model("wd-gcn", "vertex", 4, 3, gc=5, lstm=6, dropout=0.5))
        with pytest.raises(ValueError):
            model_forward(m, random_graph(rng), mode="train")

    def test_lstm_fc_matches_direct_composition(self, rng):
        g = random_graph(rng, T=4, V=3, d=2)
        m = build_model(named_model("lstm-fc", "vertex", 2, 3, lstm=4), seed=3)
        lstm_p = {k: m.store.params[f"0.v-lstm.{k}"] for k in "WUbr"}
        fc_p = {k: m.store.params[f"1.fc.{k}"] for k in "Wb"}
        out = model_forward(m, g)[0]
        for v in range(3):
            h, _ = L.lstm_sequence_forward(g.features[:, v], lstm_p)
            direct, _ = L.vs_fc_forward(h, fc_p)
            np.testing.assert_allclose(out[:, v], direct, rtol=1e-13)

    def test_wrong_feature_width(self, rng):
        m = build_model(named_model("fc-fc", "vertex", 3, 2, fc=4))
        with pytest.raises(ShapeError):
            model_forward(m, random_graph(rng, d=4))

    def test_backward_before_forward(self):
        with pytest.raises(RuntimeError):
            build_model(named_model("fc-fc", "vertex", 3, 2, fc=4)).backward(np.zeros(1))


class TestParamStore:
    def test_flat_round_trip(self):
        m = build_model(named_model("wd-gcn", "vertex", 3, 2, gc=4, lstm=5))
        vec = m.store.flat()
        assert vec.size == m.num_params()
        m.store.set_flat(vec * 2)
        np.testing.assert_array_equal(m.store.flat(), vec * 2)

    def test_snapshot_is_a_copy(self):
        m = build_model(named_model("fc-fc", "vertex", 3, 2, fc=4))
        snap = m.store.snapshot()
        m.store.params["0.fc.W"] += 1
        assert not np.array_equal(snap["0.fc.W"], m.store.params["0.fc.W"])
        m.store.load(snap)
        np.testing.assert_array_equal(snap["0.fc.W"], m.store.params["0.fc.W"])

    def test_seed_controls_init(self):
        spec = named_model("fc-fc", "vertex", 3, 2, fc=4)
        np.testing.assert_array_equal(Model(spec, 1).store.flat(), Model(spec, 1).store.flat())
        assert not np.array_equal(Model(spec, 1).store.flat(), Model(spec, 2).store.flat())


def test_batch_inputs_shapes(rng):
    a, x = batch_inputs([random_graph(rng), random_graph(rng)])
    assert a.shape == (2, 3, 5, 5) and x.shape == (2, 3, 5, 4)
