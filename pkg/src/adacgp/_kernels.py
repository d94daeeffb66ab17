"""Hot per-sample kernels with a numba path and a pure-numpy fallback.

The active backend is chosen at import time.  Set ``ADACGP_DISABLE_NUMBA=1``
to force the numpy path (numba is also skipped when it cannot be imported).
Both backends stay reachable through :data:`BACKENDS` so they can be compared
in one process.
"""
import os
from types import SimpleNamespace

import numpy as np

_DISABLED = os.environ.get("ADACGP_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("numba disabled by ADACGP_DISABLE_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# numpy reference path
# ---------------------------------------------------------------------------

def _np_rank1_update(M, lam, a, b):
    M *= lam
    M += np.outer(a, b)


def _np_split_project(pos, neg, grad, shrink, step):
    # shrink/step are per-column vectors (block-constant for filter banks)
    s = shrink * step
    g = grad * step
    np.maximum(pos - s - g, 0.0, out=pos)
    np.maximum(neg - s + g, 0.0, out=neg)


def _np_commutator_grad(A, B):
    C = A @ B - B @ A
    return C @ B.T - B.T @ C


def _np_psi_commutator_grad(blocks):
    P = blocks.shape[0]
    out = np.zeros_like(blocks)
    for p in range(P):
        for k in range(P):
            if k != p:
                out[p] += _np_commutator_grad(blocks[p], blocks[k])
    return out


def _np_w_commutator_grad(W, blocks):
    out = np.zeros_like(W)
    for k in range(1, blocks.shape[0]):
        out += _np_commutator_grad(W, blocks[k])
    return out


def _np_build_y(W, hist):
    P, n = hist.shape
    M = P * (P + 3) // 2
    Y = np.empty((n, M))
    col = 0
    for p in range(P):
        v = hist[p]
        Y[:, col] = v
        col += 1
        for _ in range(p + 1):
            v = W @ v
            Y[:, col] = v
            col += 1
    return Y


def _np_group_soft_threshold(C, P, thr):
    n = C.shape[0]
    groups = C.reshape(n, P, n)
    norms = np.sqrt(np.sum(groups * groups, axis=1, keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > thr, 1.0 - thr / norms, 0.0)
    groups *= scale


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _nb_rank1_update(M, lam, a, b):
        for i in range(M.shape[0]):
            ai = a[i]
            for j in range(M.shape[1]):
                M[i, j] = lam * M[i, j] + ai * b[j]

    @njit(cache=True)
    def _nb_split_project(pos, neg, grad, shrink, step):
        for i in range(pos.shape[0]):
            for j in range(pos.shape[1]):
                s = shrink[j] * step[j]
                g = grad[i, j] * step[j]
                a = pos[i, j] - s - g
                b = neg[i, j] - s + g
                pos[i, j] = a if a > 0.0 else 0.0
                neg[i, j] = b if b > 0.0 else 0.0

    @njit(cache=True)
    def _nb_commutator_grad(A, B):
        C = np.dot(A, B) - np.dot(B, A)
        Bt = np.ascontiguousarray(B.T)
        return np.dot(C, Bt) - np.dot(Bt, C)

    @njit(cache=True)
    def _nb_psi_commutator_grad(blocks):
        P = blocks.shape[0]
        out = np.zeros_like(blocks)
        for p in range(P):
            for k in range(P):
                if k != p:
                    out[p] += _nb_commutator_grad(blocks[p], blocks[k])
        return out

    @njit(cache=True)
    def _nb_w_commutator_grad(W, blocks):
        out = np.zeros_like(W)
        for k in range(1, blocks.shape[0]):
            out += _nb_commutator_grad(W, blocks[k])
        return out

    @njit(cache=True)
    def _nb_build_y(W, hist):
        P, n = hist.shape
        M = P * (P + 3) // 2
        Y = np.empty((n, M))
        col = 0
        for p in range(P):
            v = hist[p].copy()
            Y[:, col] = v
            col += 1
            for _ in range(p + 1):
                v = np.dot(W, v)
                Y[:, col] = v
                col += 1
        return Y

    @njit(cache=True)
    def _nb_group_soft_threshold(C, P, thr):
        n = C.shape[0]
        for i in range(n):
            for j in range(n):
                s = 0.0
                for p in range(P):
                    c = C[i, p * n + j]
                    s += c * c
                norm = np.sqrt(s)
                scale = 1.0 - thr / norm if norm > thr else 0.0
                for p in range(P):
                    C[i, p * n + j] *= scale


BACKENDS = {
    "numpy": SimpleNamespace(
        name="numpy",
        rank1_update=_np_rank1_update,
        split_project=_np_split_project,
        commutator_grad=_np_commutator_grad,
        psi_commutator_grad=_np_psi_commutator_grad,
        w_commutator_grad=_np_w_commutator_grad,
        build_y=_np_build_y,
        group_soft_threshold=_np_group_soft_threshold,
    )
}
if HAS_NUMBA:
    BACKENDS["numba"] = SimpleNamespace(
        name="numba",
        rank1_update=_nb_rank1_update,
        split_project=_nb_split_project,
        commutator_grad=_nb_commutator_grad,
        psi_commutator_grad=_nb_psi_commutator_grad,
        w_commutator_grad=_nb_w_commutator_grad,
        build_y=_nb_build_y,
        group_soft_threshold=_nb_group_soft_threshold,
    )

ACTIVE = BACKENDS["numba"] if HAS_NUMBA else BACKENDS["numpy"]


def get_backend(name=None):
    """Return the kernel namespace ``name`` (``"numba"``/``"numpy"``), or the active one."""
    if name is None:
        return ACTIVE
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
