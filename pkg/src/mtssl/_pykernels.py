"""Pure-NumPy fallback for the compiled fast-dynamics kernels.

Same call signatures and in-place semantics as ``mtssl._kernels``.
"""

import numpy as np

_TINY = np.finfo(float).tiny


def _pos(a):
    # mirrors the compiled kernel: negatives and subnormals become exact zeros
    return np.where(a >= _TINY, a, 0.0)


def fast_step_inplace(c, h, u, V, gh, gu, gv):
    vh = V @ h
    vtu = V.T @ u
    hn = _pos(h + gh * (c - vtu))
    un = _pos(u + gu * (vh - u))
    V[...] = _pos(V + gv * (np.outer(u, h) - V))
    d = max(np.abs(hn - h).max(initial=0.0), np.abs(un - u).max(initial=0.0))
    h[...] = hn
    u[...] = un
    return float(d)


def relax_inplace(c, h, u, V, gh, gu, gv, max_iters, tol):
    it = 0
    while it < max_iters:
        d = fast_step_inplace(c, h, u, V, gh, gu, gv)
        it += 1
        if d < tol:
            return it, True
    return it, False
