"""Batched matrix functions for the generic exp/log path.

All functions accept stacks of square matrices with shape ``(..., n, n)``
and operate independently on every matrix of the stack, so the result for
one matrix never depends on what else is in the batch.
"""

import numpy as np

__all__ = ["expm", "sqrtm", "logm", "distance_to_negative_axis"]

# Pade [13/13] coefficients and the 1-norm bound below which no scaling is
# needed (Higham, 2005).
_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
])
_PADE13 = _PADE13 / _PADE13[0]  # unit constant term keeps expm(0) exact
_THETA13 = 5.371920351148152

# Gauss-Legendre rule of order 8 equals the [8/8] Pade approximant of
# log(1 + x); accurate to double precision for ||X||_1 <= 0.34.
_LOG_ORDER = 8
_LOG_THETA = 0.25
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_LOG_ORDER)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS

_MAX_SQRT = 64


def _norm1(a):
    return np.abs(a).sum(axis=-2).max(axis=-1)


def expm(a):
    """Matrix exponential by scaling and squaring with a Pade [13/13] approximant.

    Parameters
    ----------
    a : (..., n, n) array_like
        Real square matrices.

    Returns
    -------
    (..., n, n) ndarray
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    flat = a.reshape(-1, n, n)
    norms = _norm1(flat)
    s = np.zeros(len(flat), dtype=int)
    big = norms > _THETA13
    s[big] = np.ceil(np.log2(norms[big] / _THETA13)).astype(int)
    scaled = flat / (2.0 ** s)[:, None, None]

    b = _PADE13
    ident = np.broadcast_to(np.eye(n), scaled.shape)
    a2 = scaled @ scaled
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = scaled @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
                  + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    r = np.linalg.solve(v - u, v + u)

    for k in range(int(s.max(initial=0))):
        sel = s > k
        r[sel] = r[sel] @ r[sel]
    return r.reshape(a.shape)


def sqrtm(a, tol=1e-14, max_iter=100):
    """Principal square root by the scaled product-form Denman-Beavers iteration.

    The input must have no eigenvalues on the closed negative real axis.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    flat = a.reshape(-1, n, n)
    ident = np.eye(n)
    m = flat.copy()
    y = flat.copy()
    active = np.ones(len(flat), dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        mk = m[idx]
        minv = np.linalg.inv(mk)
        # determinant scaling speeds up the first steps far from convergence
        dev = _norm1(mk - ident)
        det = np.abs(np.linalg.det(mk))
        mu = np.where(dev > 1e-2, det ** (-1.0 / (2 * n)), 1.0)
        mu2 = (mu ** 2)[:, None, None]
        y[idx] = mu[:, None, None] * y[idx] @ (ident + minv / mu2) / 2.0
        m_new = (ident + (mu2 * mk + minv / mu2) / 2.0) / 2.0
        m[idx] = m_new
        done = _norm1(m_new - ident) <= tol * n
        active[idx[done]] = False
    return y.reshape(a.shape)


def _log1p_pade(x):
    n = x.shape[-1]
    ident = np.eye(n)
    out = np.zeros_like(x)
    for node, weight in zip(_GL_NODES, _GL_WEIGHTS):
        out += weight * np.linalg.solve(ident + node * x, x)
    return out


def logm(a):
    """Principal matrix logarithm by inverse scaling and squaring.

    Repeated square roots bring every matrix within ``0.25`` of the
    identity in the 1-norm, where a Gauss-Legendre (Pade) rule for
    ``log(I + X)`` is evaluated; the result is rescaled by ``2**s``.
    The caller is responsible for the domain check.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    flat = a.reshape(-1, n, n).copy()
    ident = np.eye(n)
    s = np.zeros(len(flat), dtype=int)
    for _ in range(_MAX_SQRT):
        far = _norm1(flat - ident) > _LOG_THETA
        if not far.any():
            break
        flat[far] = sqrtm(flat[far])
        s[far] += 1
    out = _log1p_pade(flat - ident)
    out *= (2.0 ** s)[:, None, None]
    return out.reshape(a.shape)


def distance_to_negative_axis(a):
    """Smallest distance of an eigenvalue of each matrix to ``(-inf, 0]``."""
    a = np.asarray(a, dtype=float)
    ev = np.linalg.eigvals(a)
    d = np.where(ev.real <= 0.0, np.abs(ev.imag), np.abs(ev))
    return d.min(axis=-1)
