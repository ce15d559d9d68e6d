"""Macroscopic gas diffusion on ``0 <= x <= L``.

The gas concentration is held at ``u1_dirichlet`` at ``x = 0`` (a trivial
ODE row with zero derivative) and has zero flux at ``x = L`` (ghost node).
Each node loses gas to its pore cell at the rate supplied in ``exchange``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class MacroState:
    u1: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u1", np.ascontiguousarray(self.u1, dtype=float))


def _as_u1(macro) -> np.ndarray:
    return macro.u1 if isinstance(macro, MacroState) else np.asarray(macro, dtype=float)


def macro_rhs(macro, exchange, cfg) -> np.ndarray:
    """Time derivative of ``u1`` at every macro node."""
    u1 = _as_u1(macro)
    exchange = np.asarray(exchange, dtype=float)
    nx = cfg.grid.nx
    if u1.shape != (nx,) or exchange.shape != (nx,):
        raise ValueError(f"expected vectors of length nx={nx}, got {u1.shape} and {exchange.shape}")
    c = cfg.params.d1 / cfg.hx**2
    out = np.empty(nx)
    out[0] = 0.0
    out[1:-1] = c * (u1[:-2] - 2.0 * u1[1:-1] + u1[2:]) - exchange[1:-1]
    out[-1] = 2.0 * c * (u1[-2] - u1[-1]) - exchange[-1]
    return out


def macro_jacobian(cfg, exchange_derivative=None) -> sp.csr_matrix:
    """Partials of :func:`macro_rhs` with respect to ``u1``.

    ``exchange_derivative`` is ``d(exchange[i])/d(u1[i])`` (``B*H`` for the
    Henry term); it is subtracted on the diagonal of the non-Dirichlet rows.
    Row 0 is the constraint row of the held boundary value: a single unit
    diagonal with zero right-hand side.  Callers that need the literal time
    derivative of that row (which is zero) drop it.
    """
    nx = cfg.grid.nx
    c = cfg.params.d1 / cfg.hx**2
    main = np.full(nx, -2.0 * c)
    upper = np.full(nx - 1, c)
    lower = np.full(nx - 1, c)
    lower[-1] = 2.0 * c
    if exchange_derivative is not None:
        main = main - np.broadcast_to(np.asarray(exchange_derivative, dtype=float), (nx,))
    main[0] = 1.0
    upper[0] = 0.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr")
