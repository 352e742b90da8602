"""Forward and backward passes for the graph-convolutional and recurrent layers.

Every ``*_forward`` function returns ``(output, node)`` where ``node`` is a
:class:`TapeNode` holding what :func:`layer_backward` needs to produce exact
gradients.  Arrays carry arbitrary leading batch axes: a graph-convolution
input is ``(..., V, d)`` with a matching ``(..., V, V)`` renormalized
adjacency, and sequence layers expect ``(..., T, V, F)``.

Parameter layouts
-----------------
GC / wd-GC / cd-GC
    ``B``: (d, M).
LSTM / v-LSTM
    ``W``: (d, 4N), ``U``: (N, 4N), input bias ``b`` and recurrent bias ``r``
    of length 4N.  Gate blocks are ordered output, forget, input (j),
    candidate.
vs-FC and plain FC
    ``W``: (N, k), ``b``: (k,).
gs-FC
    ``W1``: (N, k), ``b1``: (k,), ``W2``: (1, L), ``b2``: (k,).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numerics import DTYPE, ShapeError, relu, softmax_rows


@dataclass
class TapeNode:
    kind: str
    params: dict
    cache: dict = field(default_factory=dict)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeError(msg)


def _activation(kind: str, pre: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return relu(pre)
    if kind == "softmax":
        return softmax_rows(pre)
    if kind == "linear":
        return pre
    raise ValueError(f"unknown activation {kind!r}")


def _activation_backward(kind: str, pre, out, dout):
    if kind == "relu":
        return dout * (pre > 0)
    if kind == "softmax":
        return out * (dout - (dout * out).sum(axis=-1, keepdims=True))
    return dout


def _flat_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sum over all leading axes of a^T b, i.e. the shared-weight gradient."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


# -- graph convolution -------------------------------------------------------

def gc_forward(x, a_hat, params, activation: str = "relu"):
    """act(A_hat X B) for one step or any stack of steps sharing ``B``."""
    B = params["B"]
    _require(x.shape[-1] == B.shape[0],
             f"GC: features have {x.shape[-1]} columns but B is {B.shape}")
    _require(a_hat.shape[-1] == x.shape[-2] and a_hat.shape[:-1] == x.shape[:-1],
             f"GC: adjacency {a_hat.shape} does not match features {x.shape}")
    ax = a_hat @ x
    pre = ax @ B
    out = _activation(activation, pre)
    return out, TapeNode("gc", params, dict(x=x, a_hat=a_hat, ax=ax, pre=pre, out=out,
                                            activation=activation))


def wd_gc_forward(x, a_hat, params, activation: str = "relu"):
    """Waterfall dynamic GC: one GC per step, one shared ``B``.

    ``x`` is (..., T, V, d) and ``a_hat`` (..., T, V, V).
    """
    _require(x.ndim >= 3, f"wd-GC expects a (T, V, d) sequence, got {x.shape}")
    return gc_forward(x, a_hat, params, activation)


def cd_gc_forward(x, a_hat, params):
    """Concatenate dynamic GC: [X_t, relu(A_hat_t X_t B)] at every step."""
    _require(x.ndim >= 3, f"cd-GC expects a (T, V, d) sequence, got {x.shape}")
    conv, inner = gc_forward(x, a_hat, params)
    out = np.concatenate([x, conv], axis=-1)
    return out, TapeNode("cd-gc", params, dict(inner=inner, d=x.shape[-1]))


def _gc_backward(node: TapeNode, dout):
    c = node.cache
    dpre = _activation_backward(c["activation"], c["pre"], c["out"], dout)
    B = node.params["B"]
    grads = {"B": _flat_outer(c["ax"], dpre)}
    dx = np.swapaxes(c["a_hat"], -1, -2) @ (dpre @ B.T)
    return dx, grads


def _cd_gc_backward(node: TapeNode, dout):
    d = node.cache["d"]
    dx_conv, grads = _gc_backward(node.cache["inner"], dout[..., d:])
    return dout[..., :d] + dx_conv, grads


# -- LSTM --------------------------------------------------------------------

def lstm_forward(x, params, candidate_tanh: bool = False):
    """Returning-sequence LSTM over R independent rows sharing one cell.

    ``x`` is (T, R, d); returns hidden states (T, R, N) with h0 = c0 = 0.
    """
    W, U, b, r = params["W"], params["U"], params["b"], params["r"]
    _require(x.ndim == 3, f"LSTM expects (T, R, d) input, got {x.shape}")
    _require(x.shape[-1] == W.shape[0], f"LSTM: input dim {x.shape[-1]} but W is {W.shape}")
    T, R, _ = x.shape
    N = U.shape[0]
    # input projections for every step in one product
    xa = x @ W + (b + r)
    h = np.zeros((R, N))
    c = np.zeros((R, N))
    hs = np.empty((T, R, N))
    gates, cs, tcs = [], [np.zeros((R, N))], []
    for t in range(T):
        a = np.ascontiguousarray(xa[t] + h @ U)
        g, c, tc, h = kernels.lstm_cell_forward(a, c, candidate_tanh)
        gates.append(g)
        cs.append(c)
        tcs.append(tc)
        hs[t] = h
    cache = dict(x=x, hs=hs, gates=gates, cs=cs, tcs=tcs, candidate_tanh=candidate_tanh)
    return hs, TapeNode("lstm", params, cache)


def _lstm_backward(node: TapeNode, dout):
    c = node.cache
    W, U = node.params["W"], node.params["U"]
    x, hs = c["x"], c["hs"]
    T, R, _ = x.shape
    N = U.shape[0]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * N)
    dx = np.empty_like(x)
    dh_next = np.zeros((R, N))
    dc_next = np.zeros((R, N))
    for t in range(T - 1, -1, -1):
        dh = np.ascontiguousarray(dout[t] + dh_next)
        da, dc_next = kernels.lstm_cell_backward(c["gates"][t], c["cs"][t], c["tcs"][t],
                                                 dh, np.ascontiguousarray(dc_next),
                                                 c["candidate_tanh"])
        dW += x[t].T @ da
        if t > 0:
            dU += hs[t - 1].T @ da
        db += da.sum(axis=0)
        dx[t] = da @ W.T
        dh_next = da @ U.T
    return dx, {"W": dW, "U": dU, "b": db, "r": db.copy()}


def lstm_sequence_forward(xs, params, candidate_tanh: bool = False):
    """LSTM over a single sequence of d-vectors given as a (T, d) array."""
    xs = np.asarray(xs, dtype=DTYPE)
    hs, node = lstm_forward(xs[:, None, :], params, candidate_tanh)
    return hs[:, 0, :], TapeNode("lstm-seq", params, dict(inner=node))


def v_lstm_forward(z, params, candidate_tanh: bool = False):
    """Vertex LSTM: one shared LSTM per vertex row of a (..., T, L, M) input."""
    _require(z.ndim >= 3, f"v-LSTM expects (..., T, L, M) input, got {z.shape}")
    lead = z.shape[:-3]
    T, L, M = z.shape[-3:]
    # (..., T, L, M) -> (T, rows, M) where rows enumerate (batch, vertex)
    moved = np.moveaxis(z, -3, 0).reshape(T, -1, M)
    hs, inner = lstm_forward(np.ascontiguousarray(moved), params, candidate_tanh)
    N = hs.shape[-1]
    out = np.moveaxis(hs.reshape((T,) + lead + (L, N)), 0, -3)
    return out, TapeNode("v-lstm", params, dict(inner=inner, lead=lead, T=T, L=L, M=M))


def _v_lstm_backward(node: TapeNode, dout):
    c = node.cache
    T, L, M, lead = c["T"], c["L"], c["M"], c["lead"]
    N = dout.shape[-1]
    d_moved = np.ascontiguousarray(np.moveaxis(dout, -3, 0).reshape(T, -1, N))
    dx, grads = _lstm_backward(c["inner"], d_moved)
    dz = np.moveaxis(dx.reshape((T,) + lead + (L, M)), 0, -3)
    return dz, grads


# -- fully connected heads -------------------------------------------------

def fc_forward(z, params, activation: str = "softmax"):
    """Row-wise dense layer act(Z W + 1 b^T); with softmax this is vs-FC."""
    W, b = params["W"], params["b"]
    _require(z.shape[-1] == W.shape[0], f"FC: input has {z.shape[-1]} columns but W is {W.shape}")
    pre = z @ W + b
    out = _activation(activation, pre)
    return out, TapeNode("fc", params, dict(z=z, pre=pre, out=out, activation=activation))


def vs_fc_forward(z, params):
    return fc_forward(z, params, "softmax")


def _fc_backward(node: TapeNode, dout):
    c = node.cache
    dpre = _activation_backward(c["activation"], c["pre"], c["out"], dout)
    W = node.params["W"]
    grads = {"W": _flat_outer(c["z"], dpre), "b": dpre.reshape(-1, dpre.shape[-1]).sum(axis=0)}
    return dpre @ W.T, grads


def gs_fc_forward(z, params):
    """Graph-level head: softmax(W2 relu(Z W1 + b1) + b2) for every step.

    ``z`` is (..., L, N); the output is (..., k), one distribution per graph.
    """
    W1, b1, W2, b2 = params["W1"], params["b1"], params["W2"], params["b2"]
    _require(z.shape[-1] == W1.shape[0], f"gs-FC: input has {z.shape[-1]} columns but W1 is {W1.shape}")
    _require(z.shape[-2] == W2.shape[1], f"gs-FC: {z.shape[-2]} vertices but W2 is {W2.shape}")
    hpre = z @ W1 + b1
    hid = relu(hpre)
    s = np.einsum("l,...lk->...k", W2[0], hid) + b2
    out = softmax_rows(s)
    return out, TapeNode("gs-fc", params, dict(z=z, hpre=hpre, hid=hid, out=out))


def _gs_fc_backward(node: TapeNode, dout):
    c = node.cache
    W1, W2 = node.params["W1"], node.params["W2"]
    out, hid = c["out"], c["hid"]
    ds = out * (dout - (dout * out).sum(axis=-1, keepdims=True))
    k = ds.shape[-1]
    dW2 = (hid.reshape(-1, hid.shape[-2], k) * ds.reshape(-1, 1, k)).sum(axis=(0, 2))[None, :]
    dhid = W2[0][:, None] * ds[..., None, :]
    dhpre = dhid * (c["hpre"] > 0)
    grads = {
        "W1": _flat_outer(c["z"], dhpre),
        "b1": dhpre.reshape(-1, dhpre.shape[-1]).sum(axis=0),
        "W2": dW2,
        "b2": ds.reshape(-1, ds.shape[-1]).sum(axis=0),
    }
    return dhpre @ W1.T, grads


# -- dropout ---------------------------------------------------------------

def dropout_apply(m, rate: float, mode: str = "train", rng: np.random.Generator | None = None):
    """Inverted dropout; identity in eval mode or at rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    m = np.asarray(m, dtype=DTYPE)
    if mode == "eval" or rate == 0.0:
        return m, TapeNode("dropout", {}, dict(mask=None))
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = (rng.random(m.shape) >= rate) / (1.0 - rate)
    return m * mask, TapeNode("dropout", {}, dict(mask=mask))


def _dropout_backward(node: TapeNode, dout):
    mask = node.cache["mask"]
    return (dout if mask is None else dout * mask), {}


def _lstm_seq_backward(node: TapeNode, dout):
    dx, grads = _lstm_backward(node.cache["inner"], np.asarray(dout)[:, None, :])
    return dx[:, 0, :], grads


_BACKWARD = {
    "gc": _gc_backward,
    "cd-gc": _cd_gc_backward,
    "lstm": _lstm_backward,
    "lstm-seq": _lstm_seq_backward,
    "v-lstm": _v_lstm_backward,
    "fc": _fc_backward,
    "gs-fc": _gs_fc_backward,
    "dropout": _dropout_backward,
}


def layer_backward(node: TapeNode | None, dout):
    """Gradients of a scalar loss w.r.t. a layer's input and parameters.

    ``dout`` is the upstream gradient w.r.t. the layer output.  Returns
    ``(d_input, {param_name: gradient})``.
    """
    if node is None or not isinstance(node, TapeNode):
        raise RuntimeError("backward called without a cached forward pass")
    return _BACKWARD[node.kind](node, np.asarray(dout, dtype=DTYPE))


# -- parameter initialisation -----------------------------------------------

def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def init_gc(rng, d: int, M: int) -> dict:
    return {"B": glorot(rng, d, M)}


def init_lstm(rng, d: int, N: int) -> dict:
    return {
        "W": np.concatenate([glorot(rng, d, N) for _ in range(4)], axis=1),
        "U": np.concatenate([glorot(rng, N, N) for _ in range(4)], axis=1),
        "b": np.zeros(4 * N),
        "r": np.zeros(4 * N),
    }


def init_fc(rng, n_in: int, n_out: int) -> dict:
    return {"W": glorot(rng, n_in, n_out), "b": np.zeros(n_out)}


def init_gs_fc(rng, N: int, k: int, L: int) -> dict:
    return {"W1": glorot(rng, N, k), "b1": np.zeros(k),
            "W2": glorot(rng, L, 1).T.copy(), "b2": np.zeros(k)}
