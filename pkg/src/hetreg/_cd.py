"""Coordinate-descent inner kernel for the weighted lasso.

Compiled with numba when available; a pure-python twin keeps the package
importable without a working JIT (set HETREG_NO_NUMBA=1 to force it).
Both operate in place on ``alpha`` and the residual ``r`` and return the
number of sweeps performed.
"""

import os

import numpy as np


def _cd_active_py(x, wx, colsq, alpha, r, active, lam_half, dtol, max_sweeps):
    n = x.shape[0]
    sweeps = 0
    while sweeps < max_sweeps:
        maxd = 0.0
        for idx in range(active.shape[0]):
            j = active[idx]
            cj = colsq[j]
            if cj <= 0.0:
                continue
            rho = 0.0
            for i in range(n):
                rho += wx[i, j] * r[i]
            rho += cj * alpha[j]
            if rho > lam_half:
                new = (rho - lam_half) / cj
            elif rho < -lam_half:
                new = (rho + lam_half) / cj
            else:
                new = 0.0
            d = new - alpha[j]
            if d != 0.0:
                for i in range(n):
                    r[i] -= d * x[i, j]
                alpha[j] = new
                scaled = abs(d) * cj
                if scaled > maxd:
                    maxd = scaled
        sweeps += 1
        if maxd <= dtol:
            break
    return sweeps


if os.environ.get("HETREG_NO_NUMBA"):
    cd_active = _cd_active_py
else:
    try:
        from numba import njit

        cd_active = njit(cache=True)(_cd_active_py)
    except ImportError:  # pragma: no cover
        cd_active = _cd_active_py


def prepare_design(x, w):
    """Fortran-ordered design and weighted design for fast column access."""
    xf = np.asfortranarray(x, dtype=float)
    wxf = np.asfortranarray(xf * w[:, None])
    colsq = np.einsum("ij,ij->j", wxf, xf)
    return xf, wxf, colsq
