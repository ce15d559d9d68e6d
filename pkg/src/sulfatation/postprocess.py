"""Corrosion indicators computed from simulation snapshots.

* macroscopic pH from the cell-averaged acid concentration,
* the corrosion front, where gypsum first drops below ``beta_bar - epsilon``,
* the width and position of the transition layer between saturated and
  still-reacting material.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coupled import system_for
from .micro import average_u3, trapezoid_weights


@dataclass(frozen=True)
class PhProfile:
    """pH per macro node; ``nan`` marks nodes with no acid (pH undefined)."""

    x: np.ndarray
    ph: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.ph)


@dataclass(frozen=True)
class FrontRecord:
    t: float
    position: float | None  # None until the front has formed

    @property
    def formed(self) -> bool:
        return self.position is not None


@dataclass(frozen=True)
class KinkRecord:
    t: float
    plateau_extent: float | None
    width: float | None
    center: float | None
    flag: str = "ok"  # "ok", "no layer", "open" (lo not reached), "non-monotone"


def ph_profile(state, cfg) -> PhProfile:
    mean_acid = average_u3(state.u3, cfg) * cfg.params.k_a
    ph = np.full(mean_acid.shape, np.nan)
    pos = mean_acid > 0
    ph[pos] = -np.log10(mean_acid[pos])
    return PhProfile(cfg.x, ph)


def _downward_crossing(x, u, level, start=0):
    """First ``x`` after ``start`` where ``u`` falls from ``>= level`` to ``< level``."""
    for i in range(start, len(u) - 1):
        if u[i] >= level > u[i + 1]:
            return x[i] + (u[i] - level) / (u[i] - u[i + 1]) * (x[i + 1] - x[i]), i
    return None, None


def front_position(state, cfg, epsilon=None) -> FrontRecord:
    """Interpolated position where gypsum first falls below ``beta_bar - epsilon``.

    Returns an unformed record while no node has reached the level, and
    ``L`` once the whole profile is above it.
    """
    eps = cfg.epsilon if epsilon is None else epsilon
    if not 0 < eps < cfg.params.beta_bar:
        raise ValueError("epsilon must lie in (0, beta_bar)")
    return _front(state.t, cfg.x, state.u4, cfg.params.beta_bar - eps)


def _front(t, x, u4, level) -> FrontRecord:
    reached = np.nonzero(u4 >= level)[0]
    if reached.size == 0:
        return FrontRecord(t, None)
    pos, _ = _downward_crossing(x, u4, level, start=int(reached[0]))
    return FrontRecord(t, float(x[-1]) if pos is None else float(pos))


def kink_metrics(state, cfg, thresholds=None) -> KinkRecord:
    """Locate the layer between the saturated plateau and unreacted material.

    ``thresholds = (hi, lo)`` are fractions of ``beta_bar``.  The plateau ends
    at the interpolated ``hi`` crossing and the layer ends at the ``lo``
    crossing; ``center`` is their midpoint.
    """
    hi, lo = thresholds if thresholds is not None else (cfg.output.kink_hi, cfg.output.kink_lo)
    if not 0 < lo < hi < 1:
        raise ValueError("need 0 < lo < hi < 1")
    return _kink(state.t, cfg.x, state.u4, hi * cfg.params.beta_bar, lo * cfg.params.beta_bar)


def _kink(t, x, u4, hi_level, lo_level) -> KinkRecord:
    u4 = np.asarray(u4, dtype=float)
    flag = "ok" if np.all(np.diff(u4) <= 0) else "non-monotone"
    if u4[0] < hi_level:
        return KinkRecord(t, None, None, None, "no layer")
    x_hi, i_hi = _downward_crossing(x, u4, hi_level)
    if x_hi is None:
        return KinkRecord(t, float(x[-1]), 0.0, float(x[-1]), "open")
    x_lo, _ = _downward_crossing(x, u4, lo_level, start=i_hi)
    if x_lo is None:
        x_lo = float(x[-1])
        flag = "open" if flag == "ok" else flag
    return KinkRecord(t, float(x_hi), float(x_lo - x_hi), float(0.5 * (x_hi + x_lo)), flag)


def ph_jump_across_layer(state, cfg, kink: KinkRecord | None = None) -> float | None:
    """pH rise from the node behind the layer to the node ahead of it.

    The layer is bracketed by the last node at or before the plateau end and
    the first node at or after the layer end.  ``None`` when there is no
    layer or pH is undefined at either node.
    """
    kink = kink_metrics(state, cfg) if kink is None else kink
    if kink.plateau_extent is None or kink.width is None:
        return None
    x = cfg.x
    behind = int(np.searchsorted(x, kink.plateau_extent, side="right") - 1)
    ahead = int(np.searchsorted(x, kink.plateau_extent + kink.width, side="left"))
    ahead = min(ahead, len(x) - 1)
    ph = ph_profile(state, cfg).ph
    if not (np.isfinite(ph[behind]) and np.isfinite(ph[ahead])):
        return None
    return float(ph[ahead] - ph[behind])


@dataclass
class IndicatorSeries:
    t: np.ndarray
    front: list  # FrontRecord per time
    ph_surface: np.ndarray  # pH at x = 0, nan where undefined
    gas_total: np.ndarray
    sulfur_total: np.ndarray
    kinks: list

    @property
    def front_positions(self) -> np.ndarray:
        return np.array([np.nan if f.position is None else f.position for f in self.front])


def gas_total(state, cfg) -> float:
    """Trapezoidal integral of ``u1`` over the macro interval."""
    return float(trapezoid_weights(cfg.grid.nx, cfg.hx) @ state.u1)


def indicator_series(snapshots, cfg, epsilon=None) -> IndicatorSeries:
    """Indicators for ``(t, state)`` pairs, in time order."""
    snapshots = sorted(snapshots, key=lambda item: item[0])
    if not snapshots:
        raise ValueError("indicator_series needs at least one snapshot")
    sys_ = system_for(cfg)
    ts, fronts, ph0, gas, sulfur, kinks = [], [], [], [], [], []
    for t, state in snapshots:
        ts.append(t)
        fronts.append(front_position(state, cfg, epsilon))
        ph0.append(ph_profile(state, cfg).ph[0])
        gas.append(gas_total(state, cfg))
        sulfur.append(sys_.sulfur_total(state.y))
        kinks.append(kink_metrics(state, cfg))
    return IndicatorSeries(np.array(ts), fronts, np.array(ph0), np.array(gas), np.array(sulfur), kinks)
