"""Pure numpy implementations of the hot kernels.

Same signatures as the compiled ``_kernels_c`` module; used when the
extension is not built or ``DYNGCN_PURE_PYTHON=1`` is set.
"""
import numpy as np

from .numerics import sigmoid


def lstm_cell_forward(a, c_prev, candidate_tanh):
    """One LSTM step from gate pre-activations.

    ``a`` is (R, 4N) with gate blocks ordered output, forget, input (j),
    candidate.  Returns (gates, c, tanh_c, h) where ``gates`` holds the
    activated blocks in the same order.
    """
    N = c_prev.shape[1]
    gates = np.empty_like(a)
    gates[:, : 3 * N] = sigmoid(a[:, : 3 * N])
    if candidate_tanh:
        gates[:, 3 * N:] = np.tanh(a[:, 3 * N:])
    else:
        gates[:, 3 * N:] = sigmoid(a[:, 3 * N:])
    o, f, j, cc = gates[:, :N], gates[:, N:2 * N], gates[:, 2 * N:3 * N], gates[:, 3 * N:]
    c = j * cc + f * c_prev
    tc = np.tanh(c)
    return gates, c, tc, o * tc


def lstm_cell_backward(gates, c_prev, tc, dh, dc, candidate_tanh):
    """Backprop one LSTM step; returns (d_preactivations, d_c_prev)."""
    N = c_prev.shape[1]
    o, f, j, cc = gates[:, :N], gates[:, N:2 * N], gates[:, 2 * N:3 * N], gates[:, 3 * N:]
    dct = dc + dh * o * (1.0 - tc * tc)
    da = np.empty_like(gates)
    da[:, :N] = dh * tc * o * (1.0 - o)
    da[:, N:2 * N] = dct * c_prev * f * (1.0 - f)
    da[:, 2 * N:3 * N] = dct * cc * j * (1.0 - j)
    if candidate_tanh:
        da[:, 3 * N:] = dct * j * (1.0 - cc * cc)
    else:
        da[:, 3 * N:] = dct * j * cc * (1.0 - cc)
    return da, dct * f


def signed_rank_upper_count(ranks2, threshold2):
    """Count sign patterns whose positive-rank sum is >= ``threshold2``.

    ``ranks2`` are doubled (integer) ranks so averaged ties stay exact.
    Enumerates all 2**n patterns by repeated doubling of the sum table.
    """
    sums = np.zeros(1, dtype=np.int64)
    for r in np.asarray(ranks2, dtype=np.int64):
        sums = np.concatenate([sums, sums + r])
    return int(np.count_nonzero(sums >= threshold2))
