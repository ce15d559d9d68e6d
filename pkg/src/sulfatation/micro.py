"""Pore-cell problem on the reduced interval ``0 <= y <= ell``.

``y = 0`` is the water-air interface, where dissolved H2S exchanges with the
local gas concentration.  ``y = ell`` is the solid-water interface, where
sulfuric acid is consumed and gypsum ``u4`` forms.  Both flux conditions are
imposed by eliminating a ghost node from the centred three-point Laplacian.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from . import kernels
from .kinetics import eta, henry_exchange


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True)
class CellState:
    u2: np.ndarray
    u3: np.ndarray
    u4: float

    def __post_init__(self):
        object.__setattr__(self, "u2", np.ascontiguousarray(self.u2, dtype=float))
        object.__setattr__(self, "u3", np.ascontiguousarray(self.u3, dtype=float))
        object.__setattr__(self, "u4", float(self.u4))
        if self.u2.shape != self.u3.shape or self.u2.ndim != 1:
            raise ValueError("u2 and u3 must be 1-d arrays of equal length")

    @classmethod
    def zeros(cls, ny: int) -> "CellState":
        return cls(np.zeros(ny), np.zeros(ny), 0.0)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.u2, self.u3, [self.u4]])

    @classmethod
    def unpack(cls, v, ny: int) -> "CellState":
        v = np.asarray(v, dtype=float)
        return cls(v[:ny], v[ny : 2 * ny], v[2 * ny])

    def violations(self, beta_bar: float, tol: float = 0.0) -> list[str]:
        """Physical-range diagnostics; empty when the state is admissible."""
        found = []
        if self.u2.min() < -tol:
            found.append(f"min u2 = {self.u2.min():.3e}")
        if self.u3.min() < -tol:
            found.append(f"min u3 = {self.u3.min():.3e}")
        if self.u4 < -tol or self.u4 > beta_bar + tol:
            found.append(f"u4 = {self.u4:.3e} outside [0, {beta_bar}]")
        return found


@dataclass(frozen=True)
class CellResidual:
    r_u2: np.ndarray
    r_u3: np.ndarray
    r_u4: float


def _check(state: CellState, cfg):
    if state.u2.shape[0] != cfg.grid.ny:
        raise ValueError(f"cell has {state.u2.shape[0]} nodes, grid expects ny={cfg.grid.ny}")


def cell_rhs(state: CellState, u1_local: float, cfg, backend=None) -> CellResidual:
    """Method-of-lines time derivatives of one cell driven by gas concentration ``u1_local``."""
    _check(state, cfg)
    k = kernels.get_backend(backend)
    ny = cfg.grid.ny
    r2 = np.empty((1, ny))
    r3 = np.empty((1, ny))
    r4 = np.empty(1)
    k.cell_rhs(
        np.array([float(u1_local)]),
        state.u2.reshape(1, ny),
        state.u3.reshape(1, ny),
        np.array([state.u4]),
        kernels.pack_cell_params(cfg),
        r2,
        r3,
        r4,
    )
    return CellResidual(r2[0], r3[0], float(r4[0]))


def _laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, -2.0)
    upper = np.ones(n - 1)
    lower = np.ones(n - 1)
    upper[0] = 2.0
    lower[-1] = 2.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / (h * h)


def cell_jacobian(state: CellState, u1_local: float, cfg) -> sp.csr_matrix:
    """Partial derivatives of :func:`cell_rhs`.

    Rows and the first ``2*ny + 1`` columns follow the unknown order
    ``[u2_0..u2_{ny-1}, u3_0..u3_{ny-1}, u4]``; the final column holds the
    derivatives with respect to ``u1_local``.
    """
    _check(state, cfg)
    p = cfg.params
    ny, hy = cfg.grid.ny, cfg.hy
    m = 2 * ny + 1
    lap = _laplacian_1d(ny, hy)
    rate = eta(state.u3[-1], state.u4, p)
    gam = p.gamma_sw

    eye = sp.identity(ny)
    jac = sp.bmat(
        [
            [p.d2 * lap - eye * (p.phi2 * p.k2 / p.beta2), eye * (p.phi3 * p.k3 / p.beta2), None, None],
            [eye * (p.phi2 * p.k2 / p.beta3), p.d3 * lap - eye * (p.phi3 * p.k3 / p.beta3), None, None],
            [None, None, sp.csr_matrix((1, 1)), sp.csr_matrix((1, 1))],
        ],
        format="lil",
    )

    ex = henry_exchange(u1_local, state.u2[0], p)
    jac[0, 0] += 2.0 / hy * ex.d_second
    jac[0, m] = 2.0 / hy * ex.d_first
    last = 2 * ny - 1
    jac[last, last] += -2.0 / hy * gam * rate.d_first
    jac[last, m - 1] = -2.0 / hy * gam * rate.d_second
    kap = p.phi4 * p.k4 / p.beta4
    jac[m - 1, last] = kap * rate.d_first
    jac[m - 1, m - 1] = kap * rate.d_second
    return jac.tocsr()


def average_u3(u3, cfg) -> np.ndarray:
    """Trapezoidal cell average of acid for one profile or a stack of profiles."""
    u3 = np.asarray(u3, dtype=float)
    w = trapezoid_weights(cfg.grid.ny, cfg.hy)
    return (u3 @ w) / cfg.geometry.ell


def cell_average_u3(state: CellState, cfg) -> float:
    """Mean acid concentration over the water film of one cell."""
    _check(state, cfg)
    return float(average_u3(state.u3, cfg))


class SulfurBalance(NamedTuple):
    rate: float
    boundary_in: float
    boundary_out: float

    @property
    def defect(self) -> float:
        return self.rate - (self.boundary_in - self.boundary_out)


def cell_sulfur_balance(state: CellState, u1_local: float, cfg) -> SulfurBalance:
    """Discrete rate of change of dissolved sulfur in a cell and its boundary fluxes.

    ``rate`` is the trapezoid-weighted sum of ``beta2*r_u2 + beta3*r_u3``.
    ``boundary_in`` is the Henry inflow at the water-air end, scaled by
    ``beta2``.  ``boundary_out`` is the acid consumed by sulfatation at the
    solid-water end, scaled by ``beta3``.  The discretisation makes
    ``rate == boundary_in - boundary_out`` up to rounding.
    """
    p = cfg.params
    res = cell_rhs(state, u1_local, cfg)
    w = trapezoid_weights(cfg.grid.ny, cfg.hy)
    rate = float(w @ (p.beta2 * res.r_u2 + p.beta3 * res.r_u3))
    inflow = p.beta2 * henry_exchange(u1_local, state.u2[0], p).value
    outflow = p.beta3 * p.gamma_sw * eta(state.u3[-1], state.u4, p).value
    return SulfurBalance(rate, float(inflow), float(outflow))
