"""Pure numpy fallback for the cyclic Jacobi kernel.

Identical rotation formulas and update order as the Cython core in _eig.pyx;
used when the compiled extension is unavailable or SEEGRAPH_PURE=1.
"""

from __future__ import annotations

import numpy as np


def _off_norm(a: np.ndarray) -> float:
    iu = np.triu_indices(a.shape[0], 1)
    return float(np.sqrt(2.0 * np.sum(a[iu] * a[iu])))


def jacobi_cycle(a: np.ndarray, v: np.ndarray, tol: float, max_sweeps: int):
    """Run cyclic Jacobi sweeps in place on `a`, accumulating rotations into
    `v`. Returns (sweeps_used, final off-diagonal Frobenius norm)."""
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off = _off_norm(a)
        if off < tol:
            return sweep, off
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                new_p = c * col_p - s * col_q
                new_q = s * col_p + c * col_q
                a[:, p] = new_p
                a[p, :] = new_p
                a[:, q] = new_q
                a[q, :] = new_q
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                col_p = v[:, p].copy()
                col_q = v[:, q].copy()
                v[:, p] = c * col_p - s * col_q
                v[:, q] = s * col_p + c * col_q
    return max_sweeps, _off_norm(a)
