"""Dataset container, CSV directory format and synthetic benchmarks.

On-disk layout (one directory per dataset)::

    manifest.json                 name, task, T, num_vertices, feature_dim,
                                  num_classes, weighted, files
    adj_0001.csv ... feat_0001.csv ... labels_0001.csv ... mask_0001.csv ...

Vertex-task label files are V x k one-hot rows and mask files V x 1.  Graph
datasets keep one ``seq_NNNN/`` subdirectory per sequence holding the same
per-step file names, with 1 x k label rows and a 1 x 1 step mask.  Values
are written with 17 significant digits so a load reproduces every bit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluation import stratified_counts
from .graph import GraphSequence, GraphValidationError, top_k_by_connection
from .training import GraphLabelData, VertexLabelData

MANIFEST_KEYS = {"name", "task", "T", "num_vertices", "feature_dim", "num_classes", "weighted", "files"}


class DatasetError(ValueError):
    """A dataset on disk is malformed or inconsistent with its manifest."""


@dataclass
class Dataset:
    name: str
    task: str
    graphs: list[GraphSequence]
    labels: VertexLabelData | GraphLabelData
    weighted: bool = False

    def __post_init__(self):
        if self.task not in ("vertex", "graph"):
            raise ValueError(f"task must be 'vertex' or 'graph', got {self.task!r}")
        if self.task == "vertex" and len(self.graphs) != 1:
            raise ValueError("a vertex-task dataset holds exactly one graph sequence")
        shapes = {(g.num_steps, g.num_vertices, g.feature_dim) for g in self.graphs}
        if len(shapes) != 1:
            raise ValueError(f"graph sequences differ in shape: {sorted(shapes)}")
        T, V, _ = shapes.pop()
        expected = (T, V) if self.task == "vertex" else (len(self.graphs), T)
        if self.labels.mask.shape != expected:
            raise ValueError(f"label mask {self.labels.mask.shape}, expected {expected}")

    @property
    def num_steps(self) -> int:
        return self.graphs[0].num_steps

    @property
    def num_vertices(self) -> int:
        return self.graphs[0].num_vertices

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].feature_dim

    @property
    def num_classes(self) -> int:
        return self.labels.num_classes

    def samples(self) -> tuple[np.ndarray, np.ndarray]:
        """Sample pool for splitting: (indices, class per index)."""
        if self.task == "vertex":
            return self.labels.vertex_classes()
        return np.arange(len(self.graphs)), self.labels.sequence_classes()


# -- CSV IO ------------------------------------------------------------------

def _write_csv(path: Path, m) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    lines = [",".join(format(v, ".17g") for v in row) for row in m.tolist()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _read_csv(path: Path, shape: tuple[int, int]) -> np.ndarray:
    if not path.is_file():
        raise DatasetError(f"missing file {path}")
    try:
        m = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None
    if m.shape != shape:
        raise DatasetError(f"{path}: expected shape {shape}, found {m.shape}")
    return m


def _step_files(T: int) -> dict[str, list[str]]:
    return {key: [f"{prefix}_{t:04d}.csv" for t in range(1, T + 1)]
            for key, prefix in (("adjacency", "adj"), ("features", "feat"),
                                ("labels", "labels"), ("masks", "mask"))}


def save_dataset(ds: Dataset, directory) -> Path:
    """Write ``ds`` in the canonical layout; returns the manifest path."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    T = ds.num_steps
    names = _step_files(T)
    if ds.task == "vertex":
        g = ds.graphs[0]
        for t in range(T):
            _write_csv(root / names["adjacency"][t], g.adjacency[t])
            _write_csv(root / names["features"][t], g.features[t])
            _write_csv(root / names["labels"][t], ds.labels.labels[t])
            _write_csv(root / names["masks"][t], ds.labels.mask[t][:, None])
        files = names
    else:
        seqs = []
        for b, g in enumerate(ds.graphs):
            sub = f"seq_{b + 1:04d}"
            (root / sub).mkdir(exist_ok=True)
            for t in range(T):
                _write_csv(root / sub / names["adjacency"][t], g.adjacency[t])
                _write_csv(root / sub / names["features"][t], g.features[t])
                _write_csv(root / sub / names["labels"][t], ds.labels.labels[b, t][None, :])
                _write_csv(root / sub / names["masks"][t], [[float(ds.labels.mask[b, t])]])
            seqs.append({"dir": sub, **names})
        files = {"sequences": seqs}
    manifest = {"name": ds.name, "task": ds.task, "T": T, "num_vertices": ds.num_vertices,
                "feature_dim": ds.feature_dim, "num_classes": ds.num_classes,
                "weighted": bool(ds.weighted), "files": files}
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _load_sequence(root: Path, files: dict, T: int, V: int, d: int, k: int,
                   weighted: bool, label_rows: int):
    for key in ("adjacency", "features", "labels", "masks"):
        if len(files.get(key, ())) != T:
            raise DatasetError(f"{root}: manifest lists {len(files.get(key, ()))} {key} files, T = {T}")
    adj = np.stack([_read_csv(root / f, (V, V)) for f in files["adjacency"]])
    feat = np.stack([_read_csv(root / f, (V, d)) for f in files["features"]])
    labels = np.stack([_read_csv(root / f, (label_rows, k)) for f in files["labels"]])
    masks = np.stack([_read_csv(root / f, (label_rows, 1))[:, 0] for f in files["masks"]])
    if not weighted:
        bad = np.argwhere((adj != 0) & (adj != 1))
        if bad.size:
            t, i, j = bad[0]
            raise DatasetError(f"{root / files['adjacency'][t]}: unweighted dataset has entry "
                               f"{adj[t, i, j]!r} at ({i}, {j})")
    if np.any((masks != 0) & (masks != 1)):
        raise DatasetError(f"{root}: mask files must contain only 0/1")
    try:
        g = GraphSequence(adj, feat)
    except GraphValidationError as exc:
        issue = exc.issues[0] if exc.issues else str(exc)
        step = issue.split(":")[0]
        hint = ""
        if step.startswith("step "):
            hint = f" ({root / files['adjacency'][int(step.split()[1])]})"
        raise DatasetError(f"{root}: {issue}{hint}") from None
    return g, labels, masks.astype(bool)


def load_dataset(path) -> Dataset:
    """Read and validate a dataset directory (or its ``manifest.json``)."""
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    if not manifest_path.is_file():
        raise DatasetError(f"no manifest found at {manifest_path}")
    root = manifest_path.parent
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{manifest_path}: invalid JSON ({exc})") from None
    if set(manifest) != MANIFEST_KEYS:
        raise DatasetError(f"{manifest_path}: keys {sorted(manifest)} differ from {sorted(MANIFEST_KEYS)}")
    task, T, V = manifest["task"], manifest["T"], manifest["num_vertices"]
    d, k, weighted = manifest["feature_dim"], manifest["num_classes"], manifest["weighted"]
    if task == "vertex":
        g, labels, masks = _load_sequence(root, manifest["files"], T, V, d, k, weighted, V)
        try:
            label_data = VertexLabelData(labels, masks)
        except ValueError as exc:
            raise DatasetError(f"{root}: {exc}") from None
        return Dataset(manifest["name"], task, [g], label_data, weighted)
    if task == "graph":
        graphs, all_labels, all_masks = [], [], []
        for entry in manifest["files"]["sequences"]:
            g, labels, masks = _load_sequence(root / entry["dir"], entry, T, V, d, k, weighted, 1)
            graphs.append(g)
            all_labels.append(labels[:, 0, :])
            all_masks.append(masks[:, 0])
        try:
            label_data = GraphLabelData(np.stack(all_labels), np.stack(all_masks))
        except ValueError as exc:
            raise DatasetError(f"{root}: {exc}") from None
        return Dataset(manifest["name"], task, graphs, label_data, weighted)
    raise DatasetError(f"{manifest_path}: unknown task {task!r}")


# -- synthetic benchmarks ----------------------------------------------------

def _sbm(rng, classes, p_in, p_out) -> np.ndarray:
    same = classes[:, None] == classes[None, :]
    prob = np.where(same, p_in, p_out)
    upper = np.triu(rng.random(prob.shape) < prob, k=1)
    return (upper | upper.T).astype(np.float64)


def _prototypes(d: int, k: int, signal: float) -> np.ndarray:
    """Class c owns the c-th contiguous block of feature columns."""
    if d < k:
        raise ValueError(f"feature_dim {d} must be at least num_classes {k}")
    blocks = np.array_split(np.arange(d), k)
    proto = np.zeros((k, d))
    for c, cols in enumerate(blocks):
        proto[c, cols] = signal
    return proto


def informative_schedule(T: int, k: int, informative_steps: int) -> np.ndarray:
    """Boolean (k, T): steps at which each class's feature signal is on.

    Class c starts at step c (mod T) and repeats with an even gap so the
    classes' windows are staggered across the sequence.
    """
    n = min(informative_steps, T)
    gap = max(1, (T - k) // max(1, n - 1)) if n > 1 else 1
    sched = np.zeros((k, T), dtype=bool)
    for c in range(k):
        for j in range(n):
            sched[c, (c + j * gap) % T] = True
    return sched


def _labeled_mask(rng, classes, k, fraction) -> np.ndarray:
    counts = np.bincount(classes, minlength=k)
    take = stratified_counts(counts, fraction)
    mask = np.zeros(len(classes), dtype=bool)
    for c in range(k):
        members = np.flatnonzero(classes == c)
        mask[rng.choice(members, size=take[c], replace=False)] = True
    return mask


def synth_dynamic_communities(num_vertices: int = 100, T: int = 6, d: int = 16, k: int = 4,
                              drift: float = 1.0, noise: float = 0.5, seed: int = 0, *,
                              p_in: float = 0.2, p_out: float = 0.02, signal: float = 1.0,
                              informative_steps: int = 2,
                              labeled_fraction: float = 1.0) -> Dataset:
    """Vertex-classification benchmark with dynamic communities.

    Every step draws a fresh stochastic-block-model graph (edge probability
    ``p_in`` within a community, ``p_out`` across).  A vertex's features are
    its community prototype plus Gaussian noise, but the prototype is scaled
    by ``1 - drift`` outside the ``informative_steps`` steps assigned to its
    community.  With ``drift=1`` the class is visible only in those steps, so
    a per-step classifier cannot recover it elsewhere while a recurrent one
    can carry it forward.  ``drift=0`` gives time-constant signal.
    """
    if not (1 <= k <= num_vertices and T >= 1 and d >= 1):
        raise ValueError("need 1 <= k <= num_vertices, T >= 1, d >= 1")
    if not 0.0 <= drift <= 1.0 or noise < 0:
        raise ValueError("drift must be in [0, 1] and noise non-negative")
    if not (0 <= p_out <= 1 and 0 <= p_in <= 1):
        raise ValueError("edge probabilities must be in [0, 1]")
    if not 0.0 <= labeled_fraction <= 1.0:
        raise ValueError("labeled_fraction must be in [0, 1]")
    rng = np.random.default_rng(seed)
    classes = rng.permutation(np.arange(num_vertices) % k)
    proto = _prototypes(d, k, signal)
    gate = np.where(informative_schedule(T, k, informative_steps), 1.0, 1.0 - drift)
    adj = np.stack([_sbm(rng, classes, p_in, p_out) for _ in range(T)])
    feats = np.stack([proto[classes] * gate[classes, t][:, None] for t in range(T)])
    if noise > 0:
        feats = feats + noise * rng.standard_normal(feats.shape)
    labeled = _labeled_mask(rng, classes, k, labeled_fraction)
    onehot = np.eye(k)[classes] * labeled[:, None]
    labels = VertexLabelData(np.repeat(onehot[None], T, axis=0), np.repeat(labeled[None], T, axis=0))
    return Dataset(f"synth-communities-s{seed}", "vertex", [GraphSequence(adj, feats)], labels)


def synth_graph_sequences(num_sequences: int = 40, num_vertices: int = 12, T: int = 8,
                          d: int = 8, k: int = 3, noise: float = 0.5, seed: int = 0, *,
                          min_length: int | None = None, p_edge: float = 0.3,
                          signal: float = 1.0) -> Dataset:
    """Graph-sequence classification benchmark with padded variable lengths.

    Each sequence belongs to one class; its vertices carry that class's
    prototype plus noise at every real step.  Sequences get a random length
    in [min_length, T] and are zero-padded to T with the step mask set.
    """
    from .graph import pad_sequences

    if num_sequences < k:
        raise ValueError("need at least one sequence per class")
    rng = np.random.default_rng(seed)
    min_length = T if min_length is None else min_length
    classes = rng.permutation(np.arange(num_sequences) % k)
    proto = _prototypes(d, k, signal)
    seqs = []
    for c in classes:
        length = int(rng.integers(min_length, T + 1))
        same = np.zeros(num_vertices, dtype=np.int64)
        adj = np.stack([_sbm(rng, same, p_edge, p_edge) for _ in range(length)])
        feats = np.broadcast_to(proto[c], (length, num_vertices, d)).copy()
        feats += noise * rng.standard_normal(feats.shape)
        seqs.append(GraphSequence(adj, feats))
    padded, mask = pad_sequences(seqs, T)
    labels = np.eye(k)[classes][:, None, :] * mask[..., None]
    return Dataset(f"synth-graphs-s{seed}", "graph", padded, GraphLabelData(labels, mask))


def select_top_vertices(adjacency, features, present, classes, num_keep: int,
                        name: str = "subset", weighted: bool = False) -> Dataset:
    """Vertex-task dataset restricted to the best-connected vertices.

    Keeps the ``num_keep`` vertices with the largest total degree over all
    steps; a vertex absent at a step gets zero features and an isolated row
    and column in that step's adjacency.  ``classes`` holds one static class
    per vertex (negative = unlabeled).
    """
    adjacency = np.asarray(adjacency, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    present = np.asarray(present, dtype=bool)
    classes = np.asarray(classes, dtype=np.int64)
    keep = top_k_by_connection(adjacency, num_keep)
    adj = adjacency[:, keep][:, :, keep]
    feat = features[:, keep]
    pres = present[:, keep]
    feat = feat * pres[..., None]
    adj = adj * pres[:, :, None] * pres[:, None, :]
    cls = classes[keep]
    k = int(classes.max()) + 1
    labeled = cls >= 0
    onehot = np.zeros((len(keep), k))
    onehot[labeled, cls[labeled]] = 1.0
    T = adj.shape[0]
    labels = VertexLabelData(np.repeat(onehot[None], T, axis=0), np.repeat(labeled[None], T, axis=0))
    return Dataset(name, "vertex", [GraphSequence(adj, feat)], labels, weighted)
