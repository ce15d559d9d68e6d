"""Pure numpy implementations of the hot kernels.

These are vectorised over macro nodes and loop over micro nodes.  The
compiled module ``_ckernels`` implements the same functions with the same
signatures; :mod:`sulfatation.kernels` picks one at import.

Packed cell parameters ``P`` (float64, length 15)::

    d2, d3, beta2, beta3, beta4, B, H, phi2*k2, phi3*k3, phi4*k4,
    gamma_sw, beta_bar, p, q, hy

Packed macro parameters ``Q``: ``d1, hx``.
"""

import numpy as np
from scipy.linalg import solve_banded

from .kinetics import eta_raw

NAME = "python"


def cell_rhs(u1, u2, u3, u4, P, r2, r3, r4):
    """Write the cell time derivatives for every macro node into ``r2, r3, r4``.

    ``u2, u3, r2, r3`` have shape ``(n, ny)``; ``u1, u4, r4`` shape ``(n,)``.
    """
    d2, d3, be2, be3, be4, B, H, pk2, pk3, pk4, gam, bb, p, q, hy = P
    c2 = d2 / (hy * hy)
    c3 = d3 / (hy * hy)

    r2[:, 1:-1] = c2 * (u2[:, :-2] - 2.0 * u2[:, 1:-1] + u2[:, 2:])
    r2[:, 0] = 2.0 * c2 * (u2[:, 1] - u2[:, 0])
    r2[:, -1] = 2.0 * c2 * (u2[:, -2] - u2[:, -1])
    r3[:, 1:-1] = c3 * (u3[:, :-2] - 2.0 * u3[:, 1:-1] + u3[:, 2:])
    r3[:, 0] = 2.0 * c3 * (u3[:, 1] - u3[:, 0])
    r3[:, -1] = 2.0 * c3 * (u3[:, -2] - u3[:, -1])

    src = -pk2 * u2 + pk3 * u3
    r2 += src / be2
    r3 += -src / be3

    # Robin (Henry) inflow at y = 0 and sulfatation outflow at y = ell, ghost-eliminated
    r2[:, 0] += (2.0 / hy) * (B * (H * u1 - u2[:, 0]))
    rate = eta_raw(u3[:, -1], u4, p, q, bb)[0]
    r3[:, -1] -= (2.0 / hy) * gam * rate
    r4[:] = (pk4 / be4) * rate


def eta_partials(u3_last, u4, P):
    """Rate and partials at the solid-water node of each cell."""
    return eta_raw(u3_last, u4, P[12], P[13], P[11])


def arrow_solve(s, P, Q, eta_a, eta_b, b1, b2, b3, b4, x1, x2, x3, x4):
    """Solve ``(I - s*J) x = b`` for the coupled Jacobian ``J``.

    Each cell (2x2 block tridiagonal in ``(u2_j, u3_j)`` plus the gypsum
    scalar) is eliminated from ``y = ell`` down to ``y = 0``, leaving ``u2_0``
    affine in the local ``u1``.  Substituting into the macro rows gives a
    tridiagonal Schur complement in ``u1``, solved directly; back
    substitution recovers the cell unknowns.  Node 0 is the held Dirichlet row.
    """
    d2, d3, be2, be3, be4, B, H, pk2, pk3, pk4, gam, bb, p, q, hy = P
    d1, hx = Q
    n, ny = b2.shape
    c2 = s * d2 / (hy * hy)
    c3 = s * d3 / (hy * hy)
    kap = pk4 / be4

    diag2 = 1.0 + 2.0 * c2 + s * pk2 / be2
    diag3 = 1.0 + 2.0 * c3 + s * pk3 / be3
    off23 = -s * pk3 / be2
    off32 = -s * pk2 / be3

    # gypsum elimination into the last u3 row
    t4 = 1.0 - s * kap * eta_b
    e34 = 2.0 * s * gam * eta_b / hy
    a11 = np.full(n, diag2)
    a12 = np.full(n, off23)
    a21 = np.full(n, off32)
    a22 = diag3 + 2.0 * s * gam * eta_a / hy + e34 * s * kap * eta_a / t4
    r1 = b2[:, -1].copy()
    r2 = b3[:, -1] - e34 * b4 / t4

    g = np.empty((ny, 2, n))
    hm = np.empty((ny, 2, 2, n))
    for j in range(ny - 1, -1, -1):
        if j == 0:
            a11 = a11 + 2.0 * s * B / hy
        det = a11 * a22 - a12 * a21
        if np.any(det == 0.0) or not np.all(np.isfinite(det)):
            raise np.linalg.LinAlgError("singular cell block")
        i11, i12, i21, i22 = a22 / det, -a12 / det, -a21 / det, a11 / det
        g[j, 0] = i11 * r1 + i12 * r2
        g[j, 1] = i21 * r1 + i22 * r2
        if j == 0:
            break
        low2 = -(2.0 if j == ny - 1 else 1.0) * c2
        low3 = -(2.0 if j == ny - 1 else 1.0) * c3
        hm[j, 0, 0] = i11 * low2
        hm[j, 0, 1] = i12 * low3
        hm[j, 1, 0] = i21 * low2
        hm[j, 1, 1] = i22 * low3
        up2 = -(2.0 if j - 1 == 0 else 1.0) * c2
        up3 = -(2.0 if j - 1 == 0 else 1.0) * c3
        a11 = diag2 - up2 * hm[j, 0, 0]
        a12 = off23 - up2 * hm[j, 0, 1]
        a21 = off32 - up3 * hm[j, 1, 0]
        a22 = diag3 - up3 * hm[j, 1, 1]
        r1 = b2[:, j - 1] - up2 * g[j, 0]
        r2 = b3[:, j - 1] - up3 * g[j, 1]

    # u2_0 = alpha + beta * u1, from the column of the u1 coupling
    coup = s * 2.0 * B * H / hy
    alpha = g[0, 0]
    beta = i11 * coup

    cx = s * d1 / (hx * hx)
    ab = np.zeros((3, n))
    rhs = b1.astype(float).copy()
    ab[1, 0] = 1.0
    ab[1, 1:] = 1.0 + 2.0 * cx + s * B * H - s * B * beta[1:]
    rhs[1:] += s * B * alpha[1:]
    ab[0, 2:] = -cx
    ab[2, :-2] = -cx
    ab[2, -2] = -2.0 * cx
    x1[:] = solve_banded((1, 1), ab, rhs, check_finite=False)

    z2 = alpha + beta * x1
    z3 = g[0, 1] + i21 * coup * x1
    x2[:, 0] = z2
    x3[:, 0] = z3
    for j in range(1, ny):
        z2, z3 = (
            g[j, 0] - hm[j, 0, 0] * z2 - hm[j, 0, 1] * z3,
            g[j, 1] - hm[j, 1, 0] * z2 - hm[j, 1, 1] * z3,
        )
        x2[:, j] = z2
        x3[:, j] = z3
    x4[:] = (b4 + s * kap * eta_a * x3[:, -1]) / t4
