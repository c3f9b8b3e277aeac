"""Environment contractions for MPS/MPO networks.

Index conventions used throughout:

* MPS site tensor: ``(left, phys, right)``
* MPO site tensor: ``(left, phys_out, phys_in, right)``
* environments: ``(bra, [w1, [w2,]] ket)``; the bra tensor is conjugated.

Two-layer environments represent ``<bra| W1 W2 |ket>`` where ``W1`` sits on the
bra side. They are how ``<psi|H^2|psi>`` is evaluated without building a
squared MPO.
"""

from __future__ import annotations

import numpy as np


def left_boundary(layers: int, dtype=float) -> np.ndarray:
    return np.ones((1,) * (layers + 2), dtype=dtype)


right_boundary = left_boundary


def extend_left(env, bra, ket, w1=None, w2=None):
    """Absorb one site into a left environment."""
    bra = bra.conj()
    if w1 is None:
        t = np.tensordot(env, ket, ([1], [0]))  # (b0, u, k)
        return np.tensordot(bra, t, ([0, 1], [0, 1]))  # (b, k)
    if w2 is None:
        t = np.tensordot(env, ket, ([2], [0]))  # (b0, w0, t, k)
        t = np.tensordot(t, w1, ([1, 2], [0, 2]))  # (b0, k, s, w)
        t = np.tensordot(bra, t, ([0, 1], [0, 2]))  # (b, k, w)
        return t.transpose(0, 2, 1)
    t = np.tensordot(env, ket, ([3], [0]))  # (b0, w10, w20, u, k)
    t = np.tensordot(t, w2, ([2, 3], [0, 2]))  # (b0, w10, k, t, w2)
    t = np.tensordot(t, w1, ([1, 3], [0, 2]))  # (b0, k, w2, s, w1)
    t = np.tensordot(bra, t, ([0, 1], [0, 3]))  # (b, k, w2, w1)
    return t.transpose(0, 3, 2, 1)


def extend_right(env, bra, ket, w1=None, w2=None):
    """Absorb one site into a right environment."""
    bra = bra.conj()
    if w1 is None:
        t = np.tensordot(ket, env, ([2], [1]))  # (k0, u, b)
        return np.tensordot(bra, t, ([1, 2], [1, 2]))  # (b0, k0)
    if w2 is None:
        t = np.tensordot(ket, env, ([2], [2]))  # (k0, t, b, w)
        t = np.tensordot(t, w1, ([1, 3], [2, 3]))  # (k0, b, w0, s)
        t = np.tensordot(bra, t, ([1, 2], [3, 1]))  # (b0, k0, w0)
        return t.transpose(0, 2, 1)
    t = np.tensordot(ket, env, ([2], [3]))  # (k0, u, b, w1, w2)
    t = np.tensordot(t, w2, ([1, 4], [2, 3]))  # (k0, b, w1, w20, t)
    t = np.tensordot(t, w1, ([2, 4], [3, 2]))  # (k0, b, w20, w10, s)
    t = np.tensordot(bra, t, ([1, 2], [4, 1]))  # (b0, k0, w20, w10)
    return t.transpose(0, 3, 2, 1)


def apply_local(left, right, x, w1=None, w2=None):
    """Apply the effective local operator defined by two environments to a site tensor.

    The result has the bra-side shape ``(left[0], phys, right[0])``.
    """
    if w1 is None:
        t = np.tensordot(left, x, ([1], [0]))  # (a, u, b')
        return np.tensordot(t, right, ([2], [1]))
    if w2 is None:
        t = np.tensordot(left, x, ([2], [0]))  # (a, w, u, b')
        t = np.tensordot(t, w1, ([1, 2], [0, 2]))  # (a, b', s, v)
        t = np.tensordot(t, right, ([1, 3], [2, 1]))  # (a, s, b)
        return t
    t = np.tensordot(left, x, ([3], [0]))  # (a, w1, w2, u, b')
    t = np.tensordot(t, w2, ([2, 3], [0, 2]))  # (a, w1, b', t, v2)
    t = np.tensordot(t, w1, ([1, 3], [0, 2]))  # (a, b', v2, s, v1)
    return np.tensordot(t, right, ([1, 4, 2], [3, 1, 2]))  # (a, s, b)


def local_matrix(left, right, w1=None, w2=None) -> np.ndarray:
    """Dense effective operator acting on the flattened site tensor."""
    if w1 is None:
        raise ValueError("local_matrix needs at least one operator layer")
    if w2 is None:
        t = np.tensordot(left, w1, ([1], [0]))  # (a, a', s, u, v)
        m = np.tensordot(t, right, ([4], [1]))  # (a, a', s, u, b, b')
    else:
        ww = np.tensordot(w1, w2, ([2], [1]))  # (w1, s, v1, w2, u, v2)
        t = np.tensordot(left, ww, ([1, 2], [0, 3]))  # (a, a', s, v1, u, v2)
        m = np.tensordot(t, right, ([3, 5], [1, 2]))  # (a, a', s, u, b, b')
    m = m.transpose(0, 2, 4, 1, 3, 5)
    n = m.shape[0] * m.shape[1] * m.shape[2]
    return m.reshape(n, n)
