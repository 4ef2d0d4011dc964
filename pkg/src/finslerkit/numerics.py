"""Small numerical utilities: central differences, Richardson pairs, thread map.

The finite-difference routines act on plain callables of a flat coordinate
vector and know nothing about jets — they serve both as independent oracles
in the test suite and as the derivative fallback for maps only available
through integration.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREAD_ENV_VAR = "FINSLERKIT_THREADS"


def central_gradient(f, z: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient of scalar-or-vector ``f`` at ``z``."""
    z = np.asarray(z, dtype=float)
    cols = []
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        cols.append((np.asarray(f(z + e)) - np.asarray(f(z - e))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def richardson_gradient(f, z: np.ndarray, h1: float, h2: float) -> np.ndarray:
    """Two-step Richardson extrapolation of :func:`central_gradient`.

    Both steps have O(h^2) error; the combination cancels the leading term
    for any step ratio.
    """
    g1 = central_gradient(f, z, h1)
    g2 = central_gradient(f, z, h2)
    r = (h1 / h2) ** 2
    return (r * g2 - g1) / (r - 1.0)


def central_hessian(f, z: np.ndarray, h: float) -> np.ndarray:
    """Central-difference Hessian of scalar ``f`` (symmetric by construction)."""
    z = np.asarray(z, dtype=float)
    m = z.size
    out = np.empty((m, m))
    f0 = float(f(z))
    for i in range(m):
        ei = np.zeros_like(z)
        ei[i] = h
        out[i, i] = (float(f(z + ei)) - 2.0 * f0 + float(f(z - ei))) / h**2
    for i in range(m):
        ei = np.zeros_like(z)
        ei[i] = h
        for j in range(i + 1, m):
            ej = np.zeros_like(z)
            ej[j] = h
            v = (
                float(f(z + ei + ej))
                - float(f(z + ei - ej))
                - float(f(z - ei + ej))
                + float(f(z - ei - ej))
            ) / (4.0 * h**2)
            out[i, j] = out[j, i] = v
    return out


def richardson_hessian(f, z: np.ndarray, h1: float, h2: float) -> np.ndarray:
    a = central_hessian(f, z, h1)
    b = central_hessian(f, z, h2)
    r = (h1 / h2) ** 2
    return (r * b - a) / (r - 1.0)


def third_derivative_tensor(f, z: np.ndarray, h: float) -> np.ndarray:
    """All third partials of scalar ``f`` by differencing its FD Hessian."""
    z = np.asarray(z, dtype=float)
    m = z.size

    def hess(w):
        return central_hessian(f, w, h)

    out = []
    for d in range(m):
        e = np.zeros_like(z)
        e[d] = h
        out.append((hess(z + e) - hess(z - e)) / (2.0 * h))
    # out[d][b][c] = d_d d_b d_c f  ->  reorder to [b][c][d]
    return np.transpose(np.array(out), (1, 2, 0))


def configured_threads() -> int:
    """Worker count from the environment, clamped to at least 1."""
    raw = os.environ.get(THREAD_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def thread_map(fn, items):
    """Order-preserving map honoring the thread-count environment variable."""
    items = list(items)
    workers = configured_threads()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
