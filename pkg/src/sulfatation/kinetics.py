"""Reaction terms: sulfatation rate, gas/liquid Henry exchange, H2S <-> H2SO4 sources.

All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RateEval:
    """A rate together with its partial derivatives in both arguments."""

    value: float | np.ndarray
    d_first: float | np.ndarray
    d_second: float | np.ndarray


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def eta_raw(alpha, beta, p, q, beta_bar):
    """Sulfatation rate ``alpha**p * (beta_bar - beta)**q`` and its partials.

    The rate is zero unless ``alpha >= 0`` and ``beta >= 0``.  The gap
    ``beta_bar - beta`` is clamped at zero, so the rate vanishes past
    saturation for any real ``q``.  On the seams ``alpha == 0`` and
    ``beta == beta_bar`` the derivatives are the one-sided limits from the
    interior of the active region.
    """
    a = np.asarray(alpha, dtype=float)
    b = np.asarray(beta, dtype=float)
    active = (a >= 0.0) & (b >= 0.0)
    a = np.where(active, a, 0.0)
    gap = np.maximum(beta_bar - b, 0.0)
    a_p = a**p
    gap_q = gap**q
    value = np.where(active, a_p * gap_q, 0.0)
    d_first = np.where(active, p * a ** (p - 1.0) * gap_q, 0.0)
    d_second = np.where(active & (b <= beta_bar), -q * a_p * gap ** (q - 1.0), 0.0)
    return value, d_first, d_second


def eta(alpha, beta, params) -> RateEval:
    """Sulfatation rate at the solid-water interface.

    ``alpha`` is the acid concentration there and ``beta`` the gypsum
    concentration.
    """
    value, da, db = eta_raw(alpha, beta, params.p_order, params.q_order, params.beta_bar)
    return RateEval(_out(value), _out(da), _out(db))


def henry_exchange(u1_local, u2_at_gamma_wa, params) -> RateEval:
    """Gas-to-water transfer ``B * (H * u1 - u2)``; positive means gas dissolves."""
    u1 = np.asarray(u1_local, dtype=float)
    u2 = np.asarray(u2_at_gamma_wa, dtype=float)
    value = params.B * (params.H * u1 - u2)
    shape = np.broadcast(u1, u2).shape
    return RateEval(
        _out(value),
        _out(np.full(shape, params.B * params.H)),
        _out(np.full(shape, -params.B)),
    )


def bulk_sources(u2, u3, params):
    """Volumetric sources for aqueous H2S and sulfuric acid.

    Returns ``(source_u2, source_u3)`` with ``source_u3 == -source_u2``
    bitwise, so the pair always sums to exactly zero.
    """
    u2 = np.asarray(u2, dtype=float)
    u3 = np.asarray(u3, dtype=float)
    source_u2 = -params.phi2 * params.k2 * u2 + params.phi3 * params.k3 * u3
    source_u3 = -source_u2
    return _out(source_u2), _out(source_u3)
