"""Adjacency handling: renormalization, validation, and dataset construction
recipes (distance graphs over tracked entities, padding, vertex selection)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .numerics import DTYPE, ShapeError

SYMMETRY_TOL = 1e-9


class GraphValidationError(ValueError):
    """An adjacency or graph sequence violates its invariants."""

    def __init__(self, message: str, issues: Sequence[str] = ()):
        super().__init__(message)
        self.issues = list(issues)


def _check_adjacency(a: np.ndarray, where: str = "") -> np.ndarray:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphValidationError(f"{where}adjacency must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        i, j = np.argwhere(~np.isfinite(a))[0]
        raise GraphValidationError(f"{where}non-finite entry at ({i}, {j})")
    neg = np.argwhere(a < 0)
    if neg.size:
        i, j = neg[0]
        raise GraphValidationError(f"{where}negative entry {a[i, j]!r} at ({i}, {j})")
    diff = np.abs(a - a.T)
    if diff.max(initial=0.0) > SYMMETRY_TOL:
        i, j = np.unravel_index(np.argmax(diff), diff.shape)
        raise GraphValidationError(
            f"{where}adjacency not symmetric at ({i}, {j}): {a[i, j]!r} vs {a[j, i]!r}"
        )
    return (a + a.T) / 2.0


def renormalize_adjacency(a) -> np.ndarray:
    """Return D^-1/2 (A + I) D^-1/2 with D the row sums of A + I.

    ``a`` must be square, symmetric within 1e-9 and entrywise non-negative;
    the diagonal of A + I is at least one, so the degree is never zero.
    """
    a = _check_adjacency(np.asarray(a, dtype=DTYPE))
    a_tilde = a + np.eye(a.shape[0])
    d_inv_sqrt = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return d_inv_sqrt[:, None] * a_tilde * d_inv_sqrt[None, :]


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self) -> bool:
        return self.ok


class GraphSequence:
    """T adjacency matrices over a fixed vertex set plus T feature matrices.

    The renormalized adjacencies are computed once at construction.  Pass
    ``check=False`` to hold possibly invalid data (e.g. to build a report);
    in that case ``a_hat`` is only computed on first access.
    """

    def __init__(self, adjacency, features, *, check: bool = True):
        self.adjacency = np.array(adjacency, dtype=DTYPE)
        self.features = np.array(features, dtype=DTYPE)
        self._a_hat = None
        if check:
            report = validate_graph_sequence(self)
            if not report.ok:
                raise GraphValidationError("invalid graph sequence: " + "; ".join(report.issues),
                                           report.issues)
            self._a_hat = np.stack([renormalize_adjacency(a) for a in self.adjacency])
        self.adjacency.setflags(write=False)
        self.features.setflags(write=False)

    @property
    def a_hat(self) -> np.ndarray:
        if self._a_hat is None:
            self._a_hat = np.stack([renormalize_adjacency(a) for a in self.adjacency])
        return self._a_hat

    @property
    def num_steps(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_vertices(self) -> int:
        return self.adjacency.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[2]

    def __len__(self) -> int:
        return self.num_steps

    def __repr__(self) -> str:
        return f"GraphSequence(T={self.num_steps}, V={self.num_vertices}, d={self.feature_dim})"


def validate_graph_sequence(g: GraphSequence) -> ValidationReport:
    """Scan every step and report all invariant violations without raising."""
    report = ValidationReport()
    adj, feat = g.adjacency, g.features
    if adj.ndim != 3 or adj.shape[1] != adj.shape[2]:
        report.issues.append(f"adjacency must have shape (T, V, V), got {adj.shape}")
        return report
    if feat.ndim != 3:
        report.issues.append(f"features must have shape (T, V, d), got {feat.shape}")
        return report
    if adj.shape[0] < 1:
        report.issues.append("sequence is empty")
    if adj.shape[0] != feat.shape[0]:
        report.issues.append(f"length mismatch: {adj.shape[0]} adjacency steps, {feat.shape[0]} feature steps")
    if feat.shape[1] != adj.shape[1]:
        report.issues.append(f"vertex count mismatch: adjacency has {adj.shape[1]}, features have {feat.shape[1]}")
    for t, a in enumerate(adj):
        try:
            _check_adjacency(a, where=f"step {t}: ")
        except GraphValidationError as exc:
            report.issues.append(str(exc))
    for t, x in enumerate(feat):
        if not np.all(np.isfinite(x)):
            i, j = np.argwhere(~np.isfinite(x))[0]
            report.issues.append(f"step {t}: non-finite feature at ({i}, {j})")
    return report


# -- dataset recipes ---------------------------------------------------------

@dataclass
class EntityTrack:
    """Per-frame positions of tracked joints and objects.

    joints_3d: (T, J, 3) joint positions; joints_2d: (T, J, 2) their image
    projections; objects_2d: (T, O, 2) bounding-box centroids.  The presence
    arrays are boolean (T, J) / (T, O); missing ones mean "always present".
    Vertex order in the derived graphs is joints first, then objects.
    """

    joints_3d: np.ndarray
    joints_2d: np.ndarray
    objects_2d: np.ndarray
    joint_present: np.ndarray | None = None
    object_present: np.ndarray | None = None

    def __post_init__(self):
        self.joints_3d = np.asarray(self.joints_3d, dtype=DTYPE)
        self.joints_2d = np.asarray(self.joints_2d, dtype=DTYPE)
        self.objects_2d = np.asarray(self.objects_2d, dtype=DTYPE)
        T, J = self.joints_3d.shape[:2]
        O = self.objects_2d.shape[1]
        if self.joints_3d.shape != (T, J, 3) or self.joints_2d.shape != (T, J, 2):
            raise ShapeError(f"joint tracks must be (T, J, 3) and (T, J, 2), got "
                             f"{self.joints_3d.shape} and {self.joints_2d.shape}")
        if self.objects_2d.shape != (T, O, 2):
            raise ShapeError(f"object track must be (T, O, 2), got {self.objects_2d.shape}")
        if self.joint_present is None:
            self.joint_present = np.ones((T, J), dtype=bool)
        if self.object_present is None:
            self.object_present = np.ones((T, O), dtype=bool)
        self.joint_present = np.asarray(self.joint_present, dtype=bool)
        self.object_present = np.asarray(self.object_present, dtype=bool)
        if self.joint_present.shape != (T, J) or self.object_present.shape != (T, O):
            raise ShapeError("presence flags must be (T, J) and (T, O)")
        for name, coords, present in (("joints_3d", self.joints_3d, self.joint_present),
                                      ("joints_2d", self.joints_2d, self.joint_present),
                                      ("objects_2d", self.objects_2d, self.object_present)):
            if not np.all(np.isfinite(coords[present])):
                raise ValueError(f"{name}: non-finite coordinates for a present entity")

    @property
    def num_steps(self) -> int:
        return self.joints_3d.shape[0]

    @property
    def num_joints(self) -> int:
        return self.joints_3d.shape[1]

    @property
    def num_objects(self) -> int:
        return self.objects_2d.shape[1]


DISTANCE_CATEGORIES = ("joint_joint", "object_object", "object_joint")


def _pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(((a[:, :, None, :] - b[:, None, :, :]) ** 2).sum(axis=-1))


def _raw_distances(track: EntityTrack):
    """Per-category (T, n, m) distances and validity masks."""
    jp, op = track.joint_present, track.object_present
    jj = _pairwise(track.joints_3d, track.joints_3d)
    oo = _pairwise(track.objects_2d, track.objects_2d)
    oj = _pairwise(track.objects_2d, track.joints_2d)
    J, O = track.num_joints, track.num_objects
    jj_ok = jp[:, :, None] & jp[:, None, :] & ~np.eye(J, dtype=bool)
    oo_ok = op[:, :, None] & op[:, None, :] & ~np.eye(O, dtype=bool)
    oj_ok = op[:, :, None] & jp[:, None, :]
    return {"joint_joint": (jj, jj_ok), "object_object": (oo, oo_ok), "object_joint": (oj, oj_ok)}


def distance_bounds(tracks: Sequence[EntityTrack]) -> dict[str, tuple[float, float]]:
    """Min/max of every distance category over a collection of tracks.

    Computing this once over the training split keeps frames comparable.
    """
    lo = {c: np.inf for c in DISTANCE_CATEGORIES}
    hi = {c: -np.inf for c in DISTANCE_CATEGORIES}
    for track in tracks:
        for cat, (dist, ok) in _raw_distances(track).items():
            if ok.any():
                lo[cat] = min(lo[cat], float(dist[ok].min()))
                hi[cat] = max(hi[cat], float(dist[ok].max()))
    return {c: (lo[c], hi[c]) if np.isfinite(lo[c]) else (0.0, 0.0) for c in DISTANCE_CATEGORIES}


def build_distance_graph(track: EntityTrack,
                         scaling: Mapping[str, tuple[float, float]] | None = None,
                         *, similarity: bool = False) -> np.ndarray:
    """Weighted adjacency per frame from Euclidean distances between entities.

    Joint-joint weights use 3-D distance, object-object the 2-D centroid
    distance, object-joint the 2-D distance to the joint projection.  Each
    category is min-max scaled into [0, 1] with ``scaling`` bounds (computed
    from ``track`` itself when omitted).  Absent entities get zero rows and
    columns; the diagonal is zero.  ``similarity=True`` uses 1 - scaled
    distance instead.
    """
    if scaling is None:
        scaling = distance_bounds([track])
    J, O, T = track.num_joints, track.num_objects, track.num_steps
    V = J + O
    out = np.zeros((T, V, V), dtype=DTYPE)
    blocks = {"joint_joint": (slice(0, J), slice(0, J)),
              "object_object": (slice(J, V), slice(J, V)),
              "object_joint": (slice(J, V), slice(0, J))}
    for cat, (dist, ok) in _raw_distances(track).items():
        lo, hi = scaling[cat]
        if not hi > lo:
            if ok.any():
                warnings.warn(f"degenerate scaling bounds for {cat} ({lo}, {hi}); weights set to 0",
                              RuntimeWarning, stacklevel=2)
            continue
        w = np.clip((dist - lo) / (hi - lo), 0.0, 1.0)
        if similarity:
            w = 1.0 - w
        w = np.where(ok, w, 0.0)
        rows, cols = blocks[cat]
        out[:, rows, cols] = w
    # mirror the object-joint block into the joint-object block
    out[:, :J, J:] = np.swapaxes(out[:, J:, :J], 1, 2)
    return out


def pad_sequences(seqs: Sequence[GraphSequence], target_T: int):
    """Append zero steps so every sequence has ``target_T`` steps.

    Returns the padded sequences and a boolean (len(seqs), target_T) mask of
    real steps.
    """
    masks = np.zeros((len(seqs), target_T), dtype=bool)
    padded = []
    for i, g in enumerate(seqs):
        T = g.num_steps
        if T > target_T:
            raise ValueError(f"sequence {i} has {T} steps, longer than target {target_T}")
        masks[i, :T] = True
        if T == target_T:
            padded.append(g)
            continue
        V, d = g.num_vertices, g.feature_dim
        adj = np.concatenate([g.adjacency, np.zeros((target_T - T, V, V))])
        feat = np.concatenate([g.features, np.zeros((target_T - T, V, d))])
        padded.append(GraphSequence(adj, feat))
    return padded, masks


def top_k_by_connection(adj_seq, k: int) -> np.ndarray:
    """Indices of the k vertices with the largest column sums over all steps.

    Ties go to the lower index; the result is sorted ascending.
    """
    adj_seq = np.asarray(adj_seq, dtype=DTYPE)
    V = adj_seq.shape[-1]
    if k > V or k < 0:
        raise ValueError(f"cannot select {k} of {V} vertices")
    score = adj_seq.sum(axis=(0, 1))
    order = np.argsort(-score, kind="stable")
    return np.sort(order[:k])
