"""Finite-difference validation of every layer and the four dynamic-GCN models."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import layers as L
from .graph import renormalize_adjacency
from .models import Model, named_model
from .numerics import finite_diff_grad, grad_rel_error
from .training import (GraphLabelData, VertexLabelData, graph_cross_entropy,
                       graph_cross_entropy_grad, vertex_masked_cross_entropy,
                       vertex_masked_cross_entropy_grad)

TOLERANCE = 1e-5
STEP = 1e-6

# toy shapes: vertices, features, GC width, LSTM width, steps, classes
V, D, M, N, T, K = 6, 5, 4, 3, 3, 3


@dataclass
class GradcheckCase:
    """``loss(values)`` is a scalar; ``grads(values)`` its analytic gradient per key."""

    name: str
    values: dict[str, np.ndarray]
    loss: Callable[[dict], float]
    grads: Callable[[dict], dict]


@dataclass
class GradcheckResult:
    name: str
    max_rel_err: float
    per_tensor: dict[str, float] = field(default_factory=dict)
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_err <= self.tolerance)


def check_case(case: GradcheckCase, h: float = STEP, tol: float = TOLERANCE) -> GradcheckResult:
    analytic = case.grads(case.values)
    per = {}
    for key, val in case.values.items():
        def f(v, key=key):
            return case.loss({**case.values, key: v})
        numeric = finite_diff_grad(f, val, h)
        per[key] = float(grad_rel_error(analytic[key], numeric).max())
    return GradcheckResult(case.name, max(per.values()), per, tol)


def _random_adjacency(rng, T_: int, V_: int, p: float = 0.5) -> np.ndarray:
    a = np.triu((rng.random((T_, V_, V_)) < p) * rng.uniform(0.5, 2.0, (T_, V_, V_)), 1)
    a = a + np.swapaxes(a, 1, 2)
    return np.stack([renormalize_adjacency(m) for m in a])


def _layer_case(name: str, fn, values: dict, rng) -> GradcheckCase:
    out, _ = fn(values)
    weights = rng.standard_normal(out.shape)

    def loss(vals):
        return float((fn(vals)[0] * weights).sum())

    def grads(vals):
        _, node = fn(vals)
        dx, g = L.layer_backward(node, weights)
        return {**g, "input": dx}

    return GradcheckCase(name, values, loss, grads)


def layer_cases(seed: int = 0) -> list[GradcheckCase]:
    rng = np.random.default_rng(seed)
    a_hat = _random_adjacency(rng, T, V)
    x = rng.standard_normal((T, V, D))
    cases = []

    def gc(vals):
        return L.gc_forward(vals["input"], a_hat[0], vals)
    cases.append(_layer_case("gc", gc, {"input": x[0].copy(), **L.init_gc(rng, D, M)}, rng))

    def wd(vals):
        return L.wd_gc_forward(vals["input"], a_hat, vals)
    cases.append(_layer_case("wd-gc", wd, {"input": x.copy(), **L.init_gc(rng, D, M)}, rng))

    def cd(vals):
        return L.cd_gc_forward(vals["input"], a_hat, vals)
    cases.append(_layer_case("cd-gc", cd, {"input": x.copy(), **L.init_gc(rng, D, M)}, rng))

    def with_bias(p):
        return {**p, "b": rng.normal(0, 0.5, p["b"].shape), "r": rng.normal(0, 0.5, p["r"].shape)}

    for tanh_c in (False, True):
        suffix = "-tanh" if tanh_c else ""

        def seq(vals, tanh_c=tanh_c):
            return L.lstm_sequence_forward(vals["input"], vals, tanh_c)
        cases.append(_layer_case(f"lstm(T={T}){suffix}", seq,
                                 {"input": rng.standard_normal((T, M)), **with_bias(L.init_lstm(rng, M, N))}, rng))

        def vl(vals, tanh_c=tanh_c):
            return L.v_lstm_forward(vals["input"], vals, tanh_c)
        cases.append(_layer_case(f"v-lstm(T={T}){suffix}", vl,
                                 {"input": rng.standard_normal((T, V, M)), **with_bias(L.init_lstm(rng, M, N))}, rng))

    def vs(vals):
        return L.vs_fc_forward(vals["input"], vals)
    p = L.init_fc(rng, N, K)
    p["b"] = rng.normal(0, 0.5, K)
    cases.append(_layer_case("vs-fc", vs, {"input": rng.standard_normal((T, V, N)), **p}, rng))

    def fc_relu(vals):
        return L.fc_forward(vals["input"], vals, "relu")
    p = L.init_fc(rng, D, M)
    p["b"] = rng.normal(0, 0.5, M)
    cases.append(_layer_case("fc-relu", fc_relu, {"input": rng.standard_normal((T, V, D)), **p}, rng))

    def gs(vals):
        return L.gs_fc_forward(vals["input"], vals)
    p = L.init_gs_fc(rng, N, K, V)
    p["b1"] = rng.normal(0, 0.5, K)
    p["b2"] = rng.normal(0, 0.5, K)
    cases.append(_layer_case("gs-fc", gs, {"input": rng.standard_normal((T, V, N)), **p}, rng))
    return cases


def _model_case(name: str, task: str, seed: int) -> GradcheckCase:
    rng = np.random.default_rng(seed)
    B = 1 if task == "vertex" else 2
    spec = named_model(name, task, D, K, num_vertices=V, gc=M, lstm=N)
    model = Model(spec, seed=seed)
    for key, p in model.store.params.items():
        if key.endswith((".b", ".r", ".b1", ".b2")):
            p[...] = rng.normal(0, 0.5, p.shape)
    a_hat = np.stack([_random_adjacency(rng, T, V) for _ in range(B)])
    x = rng.standard_normal((B, T, V, D))
    if task == "vertex":
        cls = rng.integers(0, K, V)
        mask = np.repeat((rng.random(V) < 0.6)[None], T, axis=0)
        mask[:, 0] = True
        labels = VertexLabelData(np.eye(K)[cls][None] * mask[..., None], mask)
        ce, ce_grad = vertex_masked_cross_entropy, vertex_masked_cross_entropy_grad
    else:
        cls = rng.integers(0, K, (B, T))
        mask = np.ones((B, T), dtype=bool)
        mask[1, -1] = False
        labels = GraphLabelData(np.eye(K)[cls] * mask[..., None], mask)
        ce, ce_grad = graph_cross_entropy, graph_cross_entropy_grad
    names = list(model.store.params)
    values = {k: model.store.params[k].copy() for k in names}
    values["input"] = x

    def run(vals):
        for k in names:
            model.store.params[k][...] = vals[k]
        return model.forward(a_hat, vals["input"])

    def loss(vals):
        return ce(run(vals), labels)

    def grads(vals):
        z = run(vals)
        g = model.backward(ce_grad(z, labels))
        return {**{k: v.copy() for k, v in g.items()}, "input": model._input_grad}

    return GradcheckCase(f"{task}/{name}", values, loss, grads)


def model_cases(seed: int = 0) -> list[GradcheckCase]:
    return [_model_case(name, task, seed + i)
            for i, (task, name) in enumerate([("vertex", "wd-gcn"), ("vertex", "cd-gcn"),
                                              ("graph", "wd-gcn"), ("graph", "cd-gcn")])]


def default_cases(seed: int = 0) -> list[GradcheckCase]:
    return layer_cases(seed) + model_cases(seed)


def run_gradcheck(cases: list[GradcheckCase] | None = None, h: float = STEP,
                  tol: float = TOLERANCE) -> list[GradcheckResult]:
    if cases is None:
        cases = default_cases()
    return [check_case(c, h, tol) for c in cases]
