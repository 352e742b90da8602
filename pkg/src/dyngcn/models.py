"""Model composition, parameter storage and exact parameter counting.

A :class:`ModelSpec` is an ordered stack of :class:`LayerSpec` descriptors.
:func:`named_model` builds the specs for the two proposed networks (per task)
and for the baselines they are compared against.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L
from .graph import GraphSequence
from .numerics import DTYPE, ShapeError

LAYER_KINDS = ("wd-gc", "cd-gc", "v-lstm", "fc", "gs-fc")
VERTEX_MODELS = ("wd-gcn", "cd-gcn", "fc-fc", "gc-gc", "lstm-fc", "fc-lstm-fc")
GRAPH_MODELS = ("wd-gcn", "cd-gcn", "vsfc-gsfc", "gc-gsfc", "vlstm-gsfc", "vsfc-vlstm-gsfc")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    width: int
    activation: str = "relu"

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.width < 1:
            raise ValueError(f"{self.kind}: width must be positive")


@dataclass
class ModelSpec:
    task: str
    layers: list[LayerSpec]
    feature_dim: int
    num_classes: int
    num_vertices: int | None = None
    dropout: float = 0.0
    candidate_tanh: bool = False
    name: str = "custom"

    def __post_init__(self):
        self.layers = [l if isinstance(l, LayerSpec) else LayerSpec(**l) for l in self.layers]
        if self.task not in ("vertex", "graph"):
            raise ValueError(f"task must be 'vertex' or 'graph', got {self.task!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        self.output_widths()

    def output_widths(self) -> list[int]:
        """Feature width after every layer; raises on a non-conforming stack."""
        if not self.layers:
            raise ShapeError("model has no layers")
        width = self.feature_dim
        widths = []
        last = len(self.layers) - 1
        for i, ls in enumerate(self.layers):
            where = f"layer {i} ({ls.kind})"
            if ls.kind == "gs-fc":
                if i != last:
                    raise ShapeError(f"{where}: gs-fc must be the last layer")
                if self.num_vertices is None:
                    raise ShapeError(f"{where}: gs-fc needs num_vertices")
            width = width + ls.width if ls.kind == "cd-gc" else ls.width
            widths.append(width)
        if widths[-1] != self.num_classes:
            raise ShapeError(f"junction layer {last} -> output: width {widths[-1]} "
                             f"but {self.num_classes} classes")
        head = self.layers[-1]
        if self.task == "graph" and head.kind != "gs-fc":
            raise ShapeError("graph task needs a gs-fc head")
        if self.task == "vertex" and not (head.kind in ("fc", "wd-gc") and head.activation == "softmax"):
            raise ShapeError("vertex task needs a softmax fc or gc head")
        return widths

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layers"] = [asdict(l) for l in self.layers]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


def _layer_count(ls: LayerSpec, n_in: int, num_vertices: int | None) -> int:
    if ls.kind in ("wd-gc", "cd-gc"):
        return n_in * ls.width
    if ls.kind == "v-lstm":
        N = ls.width
        return 4 * (n_in * N + N * N + 2 * N)
    if ls.kind == "fc":
        return n_in * ls.width + ls.width
    if ls.kind == "gs-fc":
        k = ls.width
        return n_in * k + k + num_vertices + k
    raise ValueError(ls.kind)


def param_breakdown(spec: ModelSpec) -> list[tuple[str, int]]:
    widths = spec.output_widths()
    ins = [spec.feature_dim] + widths[:-1]
    return [(f"{i}:{ls.kind}[{ls.width}]", _layer_count(ls, n_in, spec.num_vertices))
            for i, (ls, n_in) in enumerate(zip(spec.layers, ins))]


def count_params(spec: ModelSpec) -> int:
    return sum(n for _, n in param_breakdown(spec))


def named_model(name: str, task: str, feature_dim: int, num_classes: int, *,
                num_vertices: int | None = None, gc: int = 100, lstm: int = 100,
                fc: int = 100, dropout: float = 0.0, candidate_tanh: bool = False) -> ModelSpec:
    """Spec for one of the named architectures.

    Vertex task: ``wd-gcn``, ``cd-gcn`` and the baselines ``fc-fc``,
    ``gc-gc``, ``lstm-fc``, ``fc-lstm-fc``.  Graph task: ``wd-gcn``,
    ``cd-gcn`` and ``vsfc-gsfc``, ``gc-gsfc``, ``vlstm-gsfc``,
    ``vsfc-vlstm-gsfc``.
    """
    k = num_classes
    if task == "vertex":
        head = LayerSpec("fc", k, "softmax")
        stacks = {
            "wd-gcn": [LayerSpec("wd-gc", gc), LayerSpec("v-lstm", lstm), head],
            "cd-gcn": [LayerSpec("cd-gc", gc), LayerSpec("v-lstm", lstm), head],
            "fc-fc": [LayerSpec("fc", fc, "relu"), head],
            "gc-gc": [LayerSpec("wd-gc", gc), LayerSpec("wd-gc", k, "softmax")],
            "lstm-fc": [LayerSpec("v-lstm", lstm), head],
            "fc-lstm-fc": [LayerSpec("fc", fc, "relu"), LayerSpec("v-lstm", lstm), head],
        }
    elif task == "graph":
        head = LayerSpec("gs-fc", k)
        stacks = {
            "wd-gcn": [LayerSpec("wd-gc", gc), LayerSpec("v-lstm", lstm), head],
            "cd-gcn": [LayerSpec("cd-gc", gc), LayerSpec("v-lstm", lstm), head],
            "vsfc-gsfc": [LayerSpec("fc", fc, "relu"), head],
            "gc-gsfc": [LayerSpec("wd-gc", gc), head],
            "vlstm-gsfc": [LayerSpec("v-lstm", lstm), head],
            "vsfc-vlstm-gsfc": [LayerSpec("fc", fc, "relu"), LayerSpec("v-lstm", lstm), head],
        }
    else:
        raise ValueError(f"task must be 'vertex' or 'graph', got {task!r}")
    if name not in stacks:
        raise ValueError(f"unknown {task} model {name!r}; choose from {sorted(stacks)}")
    return ModelSpec(task=task, layers=stacks[name], feature_dim=feature_dim, num_classes=k,
                     num_vertices=num_vertices, dropout=dropout,
                     candidate_tanh=candidate_tanh, name=name)


@dataclass
class ParamStore:
    """Named parameter tensors with gradient and Adam moment slots."""

    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray] = field(default_factory=dict)
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def __post_init__(self):
        for k, p in self.params.items():
            self.grads.setdefault(k, np.zeros_like(p))
            self.m.setdefault(k, np.zeros_like(p))
            self.v.setdefault(k, np.zeros_like(p))

    def size(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.copy() for k, p in self.params.items()}

    def load(self, values: dict[str, np.ndarray]) -> None:
        for k in self.params:
            self.params[k][...] = values[k]

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params.values()])

    def set_flat(self, vec: np.ndarray) -> None:
        i = 0
        for p in self.params.values():
            p[...] = vec[i:i + p.size].reshape(p.shape)
            i += p.size


def batch_inputs(graphs) -> tuple[np.ndarray, np.ndarray]:
    """Stack graph sequences into (B, T, V, V) adjacencies and (B, T, V, d) features."""
    if isinstance(graphs, GraphSequence):
        graphs = [graphs]
    return (np.stack([g.a_hat for g in graphs]), np.stack([g.features for g in graphs]))


class Model:
    """Executable forward/backward pipeline for a :class:`ModelSpec`."""

    def __init__(self, spec: ModelSpec, seed: int = 0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        widths = spec.output_widths()
        ins = [spec.feature_dim] + widths[:-1]
        params: dict[str, np.ndarray] = {}
        self._names: list[dict[str, str]] = []
        for i, (ls, n_in) in enumerate(zip(spec.layers, ins)):
            if ls.kind in ("wd-gc", "cd-gc"):
                p = L.init_gc(rng, n_in, ls.width)
            elif ls.kind == "v-lstm":
                p = L.init_lstm(rng, n_in, ls.width)
            elif ls.kind == "fc":
                p = L.init_fc(rng, n_in, ls.width)
            else:
                p = L.init_gs_fc(rng, n_in, ls.width, spec.num_vertices)
            names = {}
            for k, arr in p.items():
                full = f"{i}.{ls.kind}.{k}"
                params[full] = arr
                names[k] = full
            self._names.append(names)
        self.store = ParamStore(params)
        self._tape: list | None = None

    def _layer_params(self, i: int) -> dict[str, np.ndarray]:
        return {k: self.store.params[full] for k, full in self._names[i].items()}

    def forward(self, a_hat, x, mode: str = "eval", rng: np.random.Generator | None = None):
        """Map (B, T, V, V) adjacencies and (B, T, V, d) features to probabilities.

        Vertex task: (B, T, V, k).  Graph task: (B, T, k).
        """
        a_hat = np.asarray(a_hat, dtype=DTYPE)
        x = np.asarray(x, dtype=DTYPE)
        if x.shape[-1] != self.spec.feature_dim:
            raise ShapeError(f"features have {x.shape[-1]} columns, model expects {self.spec.feature_dim}")
        if self.spec.num_vertices is not None and x.shape[-2] != self.spec.num_vertices:
            raise ShapeError(f"input has {x.shape[-2]} vertices, model expects {self.spec.num_vertices}")
        tape = []
        h = x
        last = len(self.spec.layers) - 1
        for i, ls in enumerate(self.spec.layers):
            if i != last and self.spec.dropout > 0:
                h, node = L.dropout_apply(h, self.spec.dropout, mode, rng)
                tape.append(node)
            p = self._layer_params(i)
            if ls.kind == "wd-gc":
                h, node = L.wd_gc_forward(h, a_hat, p, ls.activation)
            elif ls.kind == "cd-gc":
                h, node = L.cd_gc_forward(h, a_hat, p)
            elif ls.kind == "v-lstm":
                h, node = L.v_lstm_forward(h, p, self.spec.candidate_tanh)
            elif ls.kind == "fc":
                h, node = L.fc_forward(h, p, ls.activation)
            else:
                h, node = L.gs_fc_forward(h, p)
            node.cache["layer"] = i
            tape.append(node)
        self._tape = tape
        return h

    def backward(self, dout) -> dict[str, np.ndarray]:
        """Accumulate parameter gradients into ``store.grads`` and return them."""
        if self._tape is None:
            raise RuntimeError("backward called before forward")
        for g in self.store.grads.values():
            g[...] = 0.0
        d = dout
        for node in reversed(self._tape):
            d, grads = L.layer_backward(node, d)
            if grads:
                names = self._names[node.cache["layer"]]
                for k, g in grads.items():
                    self.store.grads[names[k]] += g
        self._input_grad = d
        return self.store.grads

    def num_params(self) -> int:
        return self.store.size()


def build_model(spec: ModelSpec, seed: int = 0) -> Model:
    return Model(spec, seed)


def model_forward(model: Model, g, mode: str = "eval", rng: np.random.Generator | None = None):
    """Run a model on a GraphSequence (or list of them); see :meth:`Model.forward`."""
    a_hat, x = batch_inputs(g)
    return model.forward(a_hat, x, mode, rng)
