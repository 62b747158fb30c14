"""Pure numpy version of the compiled min-plus kernel."""

import numpy as np

_CHUNK_ELEMS = 2_000_000


def _leg_matrix(Y, Zc, norm_code, A):
    D = Zc[None, :, :] - Y[:, None, :]
    if norm_code == 0:
        return np.abs(D).sum(axis=2)
    if norm_code == 1:
        return np.sqrt(np.einsum("ijk,ijk->ij", D, D))
    if norm_code == 2:
        return np.abs(D).max(axis=2)
    return np.einsum("ijk,kl,ijl->ij", D, A, D)


def minplus_transition(v_prev, Y, Z, norm_code, A):
    n, m = Y.shape[0], Z.shape[0]
    out = np.full(m, np.inf)
    arg = np.full(m, -1, dtype=np.intp)
    if n == 0 or m == 0:
        return out, arg
    step = max(1, _CHUNK_ELEMS // max(1, n * Y.shape[1]))
    for s in range(0, m, step):
        M = v_prev[:, None] + _leg_matrix(Y, Z[s:s + step], norm_code, A)
        j = np.argmin(M, axis=0)
        arg[s:s + step] = j
        out[s:s + step] = M[j, np.arange(M.shape[1])]
    return out, arg
